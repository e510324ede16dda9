import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochsoftmax import simkit
from stochsoftmax.sampler import sample_from_external
from stochsoftmax.simkit import (
    AugmentationModel,
    DatasetParams,
    RelevanceProfile,
    SyntheticVideo,
    clip_feature_matrix,
    clip_features,
    clip_noise,
    clip_relevance,
    export_dataset,
    generate_dataset,
    load_dataset,
    make_profile,
    mean_relevance,
    n_clips,
    occluded_clip_mask,
    prototypes,
)


def video(r, label=1, sigma=0.0, **kw):
    r = np.asarray(r, dtype=float)
    return SyntheticVideo("x", label, r.size, RelevanceProfile(r), noise_sigma=sigma, **kw)


class TestProfile:
    @settings(max_examples=300, deadline=None)
    @given(st.integers(1, 200), st.integers(0, 2**32), st.booleans(), st.sampled_from([1.0, 0.3]))
    def test_invariants(self, length, seed, occluded, amplitude):
        p = make_profile(length, np.random.default_rng(seed), amplitude, occluded)
        assert p.values.shape == (length,)
        assert np.all(p.values >= 0) and np.all(p.values <= 1)
        # at least one apex frame survives placement and occlusion
        assert np.sum(p.values == amplitude) >= 1

    def test_trapezoid_shape(self):
        p = make_profile(400, np.random.default_rng(0))
        r = p.values
        apex = np.nonzero(r == 1.0)[0]
        assert apex.size == p.plateau_len
        assert np.all(np.diff(r[:apex[0] + 1]) >= 0)
        assert np.all(np.diff(r[apex[-1]:]) <= 0)

    def test_ranges(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            p = make_profile(128, rng)
            assert 10 <= p.onset_len <= 30 and 10 <= p.offset_len <= 30
            assert 8 <= p.plateau_len <= 40

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            RelevanceProfile([0.0, 1.5])


class TestFeatures:
    def test_neutral_video(self):
        v = video(np.zeros(20), sigma=0.0)
        np.testing.assert_array_equal(clip_features(v, 2, 16), prototypes(4, 16, 3.0)[-1])

    def test_neutral_plus_noise(self):
        v = video(np.zeros(20), sigma=0.7)
        np.testing.assert_allclose(clip_features(v, 3, 16), prototypes(4, 16, 3.0)[-1] + clip_noise(v, 16)[3],
                                   atol=1e-15)

    def test_full_relevance_noise_free(self):
        v = video(np.ones(30), label=2)
        np.testing.assert_array_equal(clip_features(v, 5, 16), prototypes(4, 16, 3.0)[2])

    def test_whole_video_clip(self):
        r = np.linspace(0, 1, 16)
        v = video(r)
        assert n_clips(v, 16) == 1
        assert mean_relevance(v, 0, 16) == pytest.approx(r.mean(), abs=1e-15)

    def test_position_out_of_range(self):
        with pytest.raises(ValueError):
            clip_features(video(np.zeros(20)), 5, 16)

    def test_deterministic(self):
        v = video(np.zeros(40), sigma=1.0, seed=3)
        np.testing.assert_array_equal(clip_feature_matrix(v, 16), clip_feature_matrix(v, 16))

    def test_noise_depends_on_video_id(self):
        a = video(np.zeros(40), sigma=1.0)
        b = SyntheticVideo("y", 1, 40, RelevanceProfile(np.zeros(40)), noise_sigma=1.0)
        assert not np.allclose(clip_noise(a, 16), clip_noise(b, 16))

    @pytest.mark.parametrize("shared", [0.0, 0.5, 1.0])
    def test_noise_marginal_std(self, shared):
        vals = np.concatenate([
            clip_noise(SyntheticVideo(f"v{i}", 0, 40, RelevanceProfile(np.zeros(40)), noise_sigma=0.8,
                                      shared_noise=shared), 16)[0]
            for i in range(3000)
        ])
        assert vals.std() == pytest.approx(0.8, rel=0.03)

    def test_matrix_matches_single(self):
        v = video(np.r_[np.zeros(10), np.ones(10), np.zeros(10)], sigma=0.5)
        mat = clip_feature_matrix(v, 8)
        for t in (0, 7, 22):
            np.testing.assert_array_equal(clip_features(v, t, 8), mat[t])


class TestMeanRelevance:
    def test_plateau_inside_clip(self):
        assert mean_relevance(video(np.r_[np.zeros(5), np.ones(20), np.zeros(5)]), 7, 16) == 1.0

    def test_neutral_clip(self):
        assert mean_relevance(video(np.r_[np.zeros(20), np.ones(5)]), 2, 16) == 0.0

    def test_half_and_half(self):
        assert mean_relevance(video(np.r_[np.ones(8), np.zeros(8)]), 0, 16) == 0.5

    def test_edge_replication(self):
        v = video(np.r_[np.zeros(4), np.ones(6)])  # L=10 < F=16: pad with last frame (1.0)
        assert n_clips(v, 16) == 1
        assert mean_relevance(v, 0, 16) == pytest.approx(12 / 16)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(16, 128), st.integers(0, 2**32))
    def test_padding_does_not_change_in_range_clips(self, length, seed):
        r = make_profile(length, np.random.default_rng(seed)).values
        v = video(r)
        direct = np.array([r[t:t + 16].mean() for t in range(length - 15)])
        np.testing.assert_allclose(clip_relevance(v, 16), direct, atol=1e-12)

    def test_valid_external_profile(self):
        v = video(make_profile(60, np.random.default_rng(4)).values)
        t = sample_from_external(clip_relevance(v, 16), 1.0, np.random.default_rng(0))
        assert 0 <= t < n_clips(v, 16)


class TestAugmentation:
    def test_identity_at_zero(self):
        x = np.arange(4.0)
        np.testing.assert_array_equal(AugmentationModel(0.0).apply(x, np.random.default_rng(0)), x)

    def test_returns_copy(self):
        x = np.arange(4.0)
        AugmentationModel(0.0).apply(x, np.random.default_rng(0))[0] = 9
        assert x[0] == 0

    def test_negative(self):
        with pytest.raises(ValueError):
            AugmentationModel(-0.1)


class TestDataset:
    small = dict(n_videos=60, max_len=60)

    def test_default_split_sizes(self):
        p = DatasetParams()
        ds = generate_dataset(p)
        assert (len(ds.train), len(ds.val), len(ds.test)) == (400, 200, 200)

    def test_deterministic(self, tmp_path):
        export_dataset(generate_dataset(seed=9, **self.small), tmp_path / "a")
        export_dataset(generate_dataset(seed=9, **self.small), tmp_path / "b")
        for f in sorted((tmp_path / "a").rglob("*")):
            if f.is_file():
                assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()

    def test_seed_changes_data(self):
        a = generate_dataset(seed=1, **self.small)
        b = generate_dataset(seed=2, **self.small)
        assert [v.length for v in a.train] != [v.length for v in b.train]

    def test_no_occlusion(self):
        ds = generate_dataset(occlusion_rate=0.0, **self.small)
        assert all(not v.profile.occlusions for v in ds.all_videos())

    def test_occlusion_and_non_reactor_counts(self):
        ds = generate_dataset(n_videos=100, occlusion_rate=0.2, non_reactor_rate=0.1)
        assert sum(bool(v.profile.occlusions) for v in ds.all_videos()) == 20
        non = [v for v in ds.all_videos() if v.non_reactor]
        assert len(non) == 10
        assert all(v.profile.values.max() == pytest.approx(0.3) for v in non)

    def test_occlusions_forced_to_zero(self):
        ds = generate_dataset(n_videos=100, occlusion_rate=1.0)
        for v in ds.all_videos():
            for lo, hi in v.profile.occlusions:
                assert np.all(v.profile.values[lo:hi] == 0)

    def test_stratified_two_classes(self):
        ds = generate_dataset(n_videos=100, n_classes=2)
        labels = np.array([v.label for v in ds.all_videos()])
        assert np.bincount(labels).tolist() == [50, 50]
        for split in (ds.train, ds.val, ds.test):
            counts = np.bincount([v.label for v in split])
            assert counts[0] == counts[1]

    def test_lengths_in_range(self):
        ds = generate_dataset(**self.small)
        assert all(24 <= v.length <= 60 for v in ds.all_videos())

    @pytest.mark.parametrize("kw", [dict(n_videos=0), dict(n_videos=11), dict(min_len=0),
                                    dict(feature_dim=4), dict(occlusion_rate=1.5), dict(n_classes=1)])
    def test_infeasible(self, kw):
        with pytest.raises(ValueError):
            generate_dataset(**kw)

    def test_round_trip(self, tmp_path):
        ds = generate_dataset(seed=5, **self.small)
        export_dataset(ds, tmp_path)
        back = load_dataset(tmp_path)
        assert back.params == ds.params
        for a, b in zip(ds.all_videos(), back.all_videos()):
            assert (a.video_id, a.label, a.length) == (b.video_id, b.label, b.length)
            np.testing.assert_array_equal(clip_feature_matrix(a, 16), clip_feature_matrix(b, 16))

    def test_split_of(self):
        ds = generate_dataset(**self.small)
        assert ds.split_of(ds.val[0].video_id) == "val"
        with pytest.raises(KeyError):
            ds.split_of("nope")

    def test_noise_free_apex_linearly_separable(self):
        ds = generate_dataset(n_videos=80, noise_sigma=0.0)
        w = prototypes(4, 16)[:4] - prototypes(4, 16, 3.0)[-1]  # class minus neutral direction
        correct = []
        for v in ds.all_videos():
            if v.non_reactor:
                continue
            mat = clip_feature_matrix(v, 16)
            apex = mat[int(np.argmax(clip_relevance(v, 16)))]
            correct.append(np.argmax(w @ apex) == v.label)
        assert all(correct)

    def test_occluded_mask(self):
        r = np.r_[np.zeros(10), np.ones(30), np.zeros(10)]
        r[20:30] = 0
        v = SyntheticVideo("o", 0, 50, RelevanceProfile(r, occlusions=[[20, 30]]))
        mask = occluded_clip_mask(v, 16)
        centres = np.arange(n_clips(v, 16)) + 8
        np.testing.assert_array_equal(mask, (centres >= 20) & (centres < 30))

    def test_module_constants_unchanged(self):
        assert simkit.RAMP_RANGE == (10, 30) and simkit.PLATEAU_RANGE == (8, 40)
        assert simkit.NON_REACTOR_AMPLITUDE == 0.3
