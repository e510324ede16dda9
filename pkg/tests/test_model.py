import numpy as np
import pytest

from stochsoftmax.model import (
    LinearClassifier,
    MLPClassifier,
    build_model,
    load_checkpoint,
    save_checkpoint,
)
from stochsoftmax.simkit import prototypes


def random_linear(rng, c=4, d=6):
    m = LinearClassifier(c, d)
    m.params["W"] = rng.standard_normal((c, d))
    m.params["b"] = rng.standard_normal(c)
    return m


def finite_difference(model, x, y, h=1e-5):
    out = {}
    for name, p in model.params.items():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up, _ = model.loss_and_grad(x, y)
            p[idx] = old - h
            down, _ = model.loss_and_grad(x, y)
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        out[name] = g
    return out


def rel_error(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


class TestForward:
    def test_zero_model(self):
        np.testing.assert_array_equal(LinearClassifier(3, 5).forward(np.ones(5)), np.zeros(3))

    def test_prototype_alignment(self):
        m = LinearClassifier(4, 8)
        protos = prototypes(4, 8)
        m.params["W"] = protos[:4].copy()
        for y in range(4):
            assert np.argmax(m.forward(protos[y])) == y

    def test_matches_matmul(self):
        rng = np.random.default_rng(0)
        m = random_linear(rng)
        x = rng.standard_normal((7, 6))
        expected = np.einsum("cd,nd->nc", m.params["W"], x) + m.params["b"]
        np.testing.assert_allclose(m.forward(x), expected, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            LinearClassifier(3, 5).forward(np.ones(4))


class TestLoss:
    def test_uniform_logits(self):
        loss, _ = LinearClassifier(5, 3).loss_and_grad(np.ones((4, 3)), [0, 1, 2, 3])
        assert loss == pytest.approx(np.log(5), abs=1e-15)

    def test_two_class_hand_gradient(self):
        m = LinearClassifier(2, 3)
        x = np.array([1.0, -2.0, 0.5])
        _, g = m.loss_and_grad(x[None, :], [1])
        dz = np.array([0.5, -0.5])
        np.testing.assert_allclose(g["b"], dz, atol=1e-15)
        np.testing.assert_allclose(g["W"], np.outer(dz, x), atol=1e-15)

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            LinearClassifier(3, 2).loss_and_grad(np.zeros((1, 2)), [3])

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            LinearClassifier(3, 2).loss_and_grad(np.zeros((0, 2)), [])

    @pytest.mark.parametrize("kind", ["linear", "mlp"])
    def test_finite_differences(self, kind):
        rng = np.random.default_rng(1)
        worst = 0.0
        for _ in range(100):
            m = build_model(kind, 3, 5, rng=rng, hidden=4)
            for name in m.params:
                m.params[name] = rng.standard_normal(m.params[name].shape)
            n = int(rng.integers(1, 6))
            x = rng.standard_normal((n, 5))
            y = rng.integers(0, 3, n)
            _, g = m.loss_and_grad(x, y)
            num = finite_difference(m, x, y)
            worst = max(worst, max(rel_error(g[k], num[k]) for k in g))
        assert worst < 1e-5

    def test_loss_decreases_on_separable_data(self):
        rng = np.random.default_rng(2)
        protos = prototypes(3, 6, scale=2.0)
        y = rng.integers(0, 3, 300)
        x = protos[y] + 0.1 * rng.standard_normal((300, 6))
        m = LinearClassifier(3, 6)
        first, _ = m.loss_and_grad(x, y)
        for i in range(0, 300, 32):
            _, g = m.loss_and_grad(x[i:i + 32], y[i:i + 32])
            m.sgd_step(g, lr=0.1)
        after, _ = m.loss_and_grad(x, y)
        assert after < first


class TestSGD:
    def test_zero_gradient(self):
        m = random_linear(np.random.default_rng(3))
        before = m.copy_params()
        m.sgd_step({k: np.zeros_like(v) for k, v in m.params.items()}, lr=0.5)
        for k in before:
            np.testing.assert_array_equal(m.params[k], before[k])

    def test_no_momentum_is_gradient_descent(self):
        m = random_linear(np.random.default_rng(4))
        before = m.copy_params()
        g = {k: np.ones_like(v) for k, v in m.params.items()}
        m.sgd_step(g, lr=0.1, momentum=0.0)
        m.sgd_step(g, lr=0.1, momentum=0.0)
        for k in before:
            np.testing.assert_allclose(m.params[k], before[k] - 0.2, atol=1e-15)

    def test_two_momentum_steps(self):
        m = LinearClassifier(2, 2)
        g = {"W": np.full((2, 2), 3.0), "b": np.full(2, 3.0)}
        m.sgd_step(g, lr=0.01, momentum=0.9)
        m.sgd_step(g, lr=0.01, momentum=0.9)
        np.testing.assert_allclose(m.params["W"], -0.01 * 3.0 * (1 + 1.9), atol=1e-15)

    def test_weight_decay_only_on_weights(self):
        m = LinearClassifier(2, 2)
        m.params["W"][:] = 1.0
        m.params["b"][:] = 1.0
        zero = {k: np.zeros_like(v) for k, v in m.params.items()}
        m.sgd_step(zero, lr=0.1, momentum=0.0, weight_decay=0.5)
        np.testing.assert_allclose(m.params["W"], 0.95)
        np.testing.assert_array_equal(m.params["b"], 1.0)


class TestTargetScore:
    def test_zero_model(self):
        assert LinearClassifier(3, 4).target_score(np.ones(4), 1) == 0.0

    def test_matches_forward(self):
        rng = np.random.default_rng(5)
        m = random_linear(rng)
        x = rng.standard_normal(6)
        for y in range(4):
            assert m.target_score(x, y) == m.forward(x)[y]

    def test_bias_shift(self):
        rng = np.random.default_rng(6)
        m = random_linear(rng)
        x = rng.standard_normal(6)
        before = m.target_score(x, 2)
        m.params["b"][2] += 1.5
        assert m.target_score(x, 2) == before + 1.5

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            LinearClassifier(3, 4).target_score(np.ones(4), 3)


class TestCheckpoint:
    @pytest.mark.parametrize("kind", ["linear", "mlp"])
    def test_round_trip(self, tmp_path, kind):
        rng = np.random.default_rng(7)
        m = build_model(kind, 4, 6, rng=rng, hidden=5)
        for name in m.params:
            m.params[name] = rng.standard_normal(m.params[name].shape)
        save_checkpoint(m, tmp_path / "model.txt")
        back = load_checkpoint(tmp_path / "model.txt")
        assert type(back) is type(m)
        x = rng.standard_normal((3, 6))
        np.testing.assert_array_equal(back.forward(x), m.forward(x))

    def test_header(self, tmp_path):
        save_checkpoint(LinearClassifier(2, 3), tmp_path / "m.txt")
        assert (tmp_path / "m.txt").read_text().splitlines()[0] == "# linear 2 3"

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            build_model("cnn", 2, 3)

    def test_mlp_seeded_init(self):
        a = MLPClassifier(3, 5, rng=np.random.default_rng(0))
        b = MLPClassifier(3, 5, rng=np.random.default_rng(0))
        np.testing.assert_array_equal(a.params["W1"], b.params["W1"])
