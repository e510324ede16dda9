"""Command-line experiment runner.

Subcommands::

    generate    write a synthetic dataset to disk
    train       run one training configuration on a dataset directory
    sweep       run every (variant x seed) of a JSON sweep spec, write summary.csv
    export-map  turn a run's sampling map into per-video epoch x position CSVs

Relative ``--out`` paths are placed under ``$STOCHSOFTMAX_OUTPUT_ROOT`` when
that variable is set.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from . import simkit
from .sampler import read_tracks, softmax_weights
from .trainer import TrainRunConfig, run

OUTPUT_ROOT_ENV = "STOCHSOFTMAX_OUTPUT_ROOT"

log = logging.getLogger("stochsoftmax")

_BARE_WORD = re.compile(r"^[A-Za-z_][A-Za-z0-9_\-]*$")


class ConfigError(ValueError):
    pass


def resolve_out(path: str) -> str:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


# -- flat key = value config files ----------------------------------------

def parse_value(key: str, text: str):
    text = text.strip()
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        if _BARE_WORD.match(text) and text not in ("true", "false", "null"):
            return text  # unquoted strings such as mode = uniform
        raise ConfigError(f"{key}: cannot parse value {text!r}") from None
    if isinstance(value, (list, dict)):
        raise ConfigError(f"{key}: only scalar values are allowed")
    return value


def read_flat_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            key, text = (s.strip() for s in line.split("=", 1))
            if key in values:
                raise ConfigError(f"{key}: duplicate key")
            values[key] = parse_value(key, text)
    return values


def write_flat_config(values: dict, path):
    with open(path, "w") as fh:
        for k in sorted(values):
            fh.write(f"{k} = {json.dumps(values[k])}\n")


def _typed(cls, values: dict, what: str):
    known = {f.name for f in fields(cls)}
    for key in values:
        if key not in known:
            raise ConfigError(f"{key}: unknown {what} key")
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def train_config_from_dict(values: dict) -> TrainRunConfig:
    cfg = _typed(TrainRunConfig, values, "config")
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def dataset_params_from_dict(values: dict) -> simkit.DatasetParams:
    p = _typed(simkit.DatasetParams, values, "dataset")
    try:
        p.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return p


# -- sweeps ---------------------------------------------------------------

@dataclass
class ExperimentSpec:
    name: str
    dataset: dict
    variants: list  # list of (name, config dict)
    seeds: list
    out_dir: Optional[str] = None

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds: need at least one seed")
        names = [n for n, _ in self.variants]
        if not names:
            raise ConfigError("variants: need at least one variant")
        dup = sorted({n for n in names if names.count(n) > 1})
        if dup:
            raise ConfigError(f"variants: duplicate names {dup}")
        for n, cfg in self.variants:
            try:
                train_config_from_dict(cfg)
            except ConfigError as exc:
                raise ConfigError(f"variant {n}: {exc}") from None
        dataset_params_from_dict(self.dataset)

    @classmethod
    def from_dict(cls, spec: dict) -> "ExperimentSpec":
        allowed = {"name", "dataset", "variants", "grid", "seeds", "out"}
        for key in spec:
            if key not in allowed:
                raise ConfigError(f"{key}: unknown sweep key")
        base = spec.get("variants") or [{"name": "base"}]
        grid = spec.get("grid") or {}
        variants = []
        for v in base:
            v = dict(v)
            vname = str(v.pop("name", f"v{len(variants)}"))
            if not grid:
                variants.append((vname, v))
                continue
            keys = sorted(grid)
            for combo in itertools.product(*(grid[k] for k in keys)):
                cfg = {**v, **dict(zip(keys, combo))}
                tag = "_".join(f"{k}={_fmt(x)}" for k, x in zip(keys, combo))
                variants.append((f"{vname}__{tag}", cfg))
        return cls(
            name=str(spec.get("name", "sweep")),
            dataset=dict(spec.get("dataset", {})),
            variants=variants,
            seeds=[int(s) for s in spec.get("seeds", [0])],
            out_dir=spec.get("out"),
        )


def _fmt(x) -> str:
    return f"{x:g}" if isinstance(x, float) else str(x)


def _run_one(args):
    cfg_dict, dataset_dict, seed, run_dir = args
    ds = simkit.generate_dataset(simkit.DatasetParams(**{**dataset_dict, "seed": seed}))
    cfg = TrainRunConfig(**{**cfg_dict, "seed": seed})
    try:
        rec = run(cfg, ds, out_dir=run_dir)
    except Exception as exc:
        raise RuntimeError(f"run failed in {run_dir}: {exc}") from exc
    return {k: v for k, v in rec.test.items()} | {"epochs_to_converge": rec.epochs_to_converge}


SUMMARY_COLUMNS = (
    "variant", "mode", "gamma_sample", "gamma_pool", "n_seeds",
    "accuracy_mean", "accuracy_std", "epochs_mean", "epochs_std",
    "accuracy_gp0_mean", "accuracy_gp0_std", "accuracy_gpmax_mean", "accuracy_gpmax_std",
    "table_row",
)


def summarize(spec: ExperimentSpec, results: dict) -> list[dict]:
    """One row per variant: mean and std (population) over seeds."""
    rows = []
    for vname, cfg in spec.variants:
        per_seed = results[vname]
        full = TrainRunConfig(**cfg)

        def stat(key):
            a = np.array([r[key] for r in per_seed], dtype=np.float64)
            return float(a.mean()), float(a.std())

        acc, acc_sd = stat("accuracy")
        ep, ep_sd = stat("epochs_to_converge")
        g0, g0_sd = stat("accuracy_gp0")
        gm, gm_sd = stat("accuracy_gpmax")
        rows.append({
            "variant": vname, "mode": full.mode, "gamma_sample": float(full.gamma_sample),
            "gamma_pool": float(full.gamma_pool), "n_seeds": len(per_seed),
            "accuracy_mean": acc, "accuracy_std": acc_sd, "epochs_mean": ep, "epochs_std": ep_sd,
            "accuracy_gp0_mean": g0, "accuracy_gp0_std": g0_sd,
            "accuracy_gpmax_mean": gm, "accuracy_gpmax_std": gm_sd,
            "table_row": f"{100 * acc:.2f} ± {100 * acc_sd:.2f} | {ep:.1f} epochs",
        })
    return rows


def run_sweep(spec: ExperimentSpec, out_dir: str, jobs: int = 1) -> list[dict]:
    os.makedirs(out_dir, exist_ok=True)
    tasks, keys = [], []
    for vname, cfg in spec.variants:
        for seed in spec.seeds:
            run_dir = os.path.join(out_dir, vname, f"seed_{seed}")
            tasks.append((cfg, spec.dataset, seed, run_dir))
            keys.append(vname)
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            outputs = list(pool.map(_run_one, tasks))
    else:
        outputs = [_run_one(t) for t in tasks]
    results = {v: [] for v, _ in spec.variants}
    for vname, out in zip(keys, outputs):
        results[vname].append(out)
    rows = summarize(spec, results)
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return rows


# -- sampling maps --------------------------------------------------------

def sampling_matrix(run_dir: str, video_id: str) -> tuple[np.ndarray, np.ndarray]:
    """(epochs x positions one-hot matrix, final sampling distribution)."""
    tracks = {t.video_id: t for t, _ in read_tracks(os.path.join(run_dir, "tracks_final.csv"))}
    if video_id not in tracks:
        raise KeyError(f"unknown video id {video_id!r}")
    with open(os.path.join(run_dir, "run.json")) as fh:
        info = json.load(fh)
    n_epochs, n_pos = info["epochs_run"], tracks[video_id].n_clips
    mat = np.zeros((n_epochs, n_pos), dtype=np.int64)
    with open(os.path.join(run_dir, "sampling_map.csv"), newline="") as fh:
        for row in csv.DictReader(fh):
            if row["video_id"] == video_id:
                mat[int(row["epoch"]), int(row["position"])] += 1
    final = softmax_weights(tracks[video_id].scores, float(info["track_gamma"]))
    return mat, final


def export_maps(run_dir: str, video_ids, out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for vid in video_ids:
        mat, final = sampling_matrix(run_dir, vid)
        path = os.path.join(out_dir, f"{vid}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch"] + [f"t{i}" for i in range(mat.shape[1])])
            for e, row in enumerate(mat):
                w.writerow([e] + row.tolist())
            w.writerow(["final"] + [repr(float(p)) for p in final])
        paths.append(path)
    return paths


# -- commands -------------------------------------------------------------

def cmd_generate(args) -> int:
    values = read_flat_config(args.config) if args.config else {}
    if args.seed is not None:
        values["seed"] = args.seed
    params = dataset_params_from_dict(values)
    out = resolve_out(args.out)
    ds = simkit.generate_dataset(params)
    simkit.export_dataset(ds, out)
    videos = ds.all_videos()
    print(f"wrote {len(videos)} videos to {out}: train {len(ds.train)} / val {len(ds.val)} / test {len(ds.test)}")
    counts = np.bincount([v.label for v in videos], minlength=params.n_classes)
    print("per class: " + " ".join(str(c) for c in counts))
    print(f"occluded {sum(bool(v.profile.occlusions) for v in videos)}, "
          f"non-reactors {sum(v.non_reactor for v in videos)}")
    return 0


def cmd_train(args) -> int:
    values = read_flat_config(args.config) if args.config else {}
    if args.seed is not None:
        values["seed"] = args.seed
    cfg = train_config_from_dict(values)
    if not os.path.isfile(os.path.join(args.dataset, "metadata.json")):
        raise ConfigError(f"dataset: no metadata.json in {args.dataset}")
    ds = simkit.load_dataset(args.dataset)
    out = resolve_out(args.out)
    rec = run(cfg, ds, out_dir=out)
    print(f"{cfg.mode} gamma_s={cfg.gamma_sample:g} gamma_p={cfg.gamma_pool:g}: "
          f"test accuracy {rec.test_accuracy:.4f}, converged at epoch {rec.epochs_to_converge}; run in {out}")
    return 0


def cmd_sweep(args) -> int:
    with open(args.config) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"sweep spec is not valid JSON: {exc}") from None
    if args.seed is not None:
        raw["seeds"] = [args.seed]
    spec = ExperimentSpec.from_dict(raw)
    out = resolve_out(args.out or spec.out_dir or spec.name)
    rows = run_sweep(spec, out, jobs=args.jobs)
    for r in rows:
        print(f"{r['variant']:<40} {r['table_row']}")
    print(f"summary: {os.path.join(out, 'summary.csv')}")
    return 0


def cmd_export_map(args) -> int:
    out = resolve_out(args.out or os.path.join(args.run_dir, "maps"))
    video_ids = args.video
    if not video_ids:
        video_ids = [t.video_id for t, _ in read_tracks(os.path.join(args.run_dir, "tracks_final.csv"))]
    for path in export_maps(args.run_dir, video_ids, out):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochsoftmax", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="flat key = value file of dataset parameters")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one configuration")
    p.add_argument("--config", help="flat key = value file of training options")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="run a JSON sweep spec")
    p.add_argument("--config", required=True, help="JSON sweep spec")
    p.add_argument("--out")
    p.add_argument("--seed", type=int, help="run only this seed")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-map", help="per-video sampling maps of a run")
    p.add_argument("run_dir")
    p.add_argument("--video", action="append", help="video id (repeatable, default all)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_map)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, KeyError, ValueError, OSError, RuntimeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
