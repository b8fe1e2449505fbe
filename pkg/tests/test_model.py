import numpy as np
import pytest

from fairlab.errors import SpecError
from fairlab.model import (
    RandomFeatureModel,
    forward,
    head_gradient,
    init_model,
    load_checkpoint,
    predict,
    save_checkpoint,
)


class TestInit:
    def test_deterministic(self):
        a = init_model(10, 5, seed=3)
        b = init_model(10, 5, seed=3)
        assert (a.projection == b.projection).all()

    def test_zero_head_predicts_half(self):
        model = init_model(8, 3, seed=0)
        x = np.random.default_rng(1).normal(size=(6, 3))
        assert (forward(model, x).probabilities == 0.5).all()

    def test_projection_entry_variance(self):
        # law of large numbers over m*d >= 5e6 entries: mean of U_ij^2 ~ 1/d
        model = init_model(10_000, 512, seed=11)
        mean_sq = float((model.projection**2).mean())
        assert 0.97 / 512 <= mean_sq <= 1.03 / 512

    def test_rejects_zero_dims(self):
        with pytest.raises(SpecError):
            init_model(0, 4, seed=0)
        with pytest.raises(SpecError):
            init_model(4, 0, seed=0)

    def test_projection_is_read_only(self):
        model = init_model(4, 4, seed=0)
        with pytest.raises(ValueError):
            model.projection[0, 0] = 1.0


class TestForward:
    def test_scalar_hand_case(self):
        # d=1, m=1, U=[[2]], w=[1], bias=0, x=3 -> sigmoid(6)
        model = RandomFeatureModel(np.array([[2.0]]), np.array([1.0]), 0.0)
        p = forward(model, np.array([[3.0]])).probabilities
        assert p[0] == pytest.approx(0.9975273768433653, abs=1e-9)

    def test_saturated_bias_stays_inside_unit_interval(self):
        model = RandomFeatureModel(np.zeros((4, 2)), np.zeros(4), 100.0)
        p = forward(model, np.zeros((3, 2))).probabilities
        assert (p > 1 - 1e-9).all()
        assert (p < 1.0).all()

    def test_dimension_mismatch(self):
        model = init_model(4, 3, seed=0)
        with pytest.raises(SpecError):
            forward(model, np.zeros((2, 5)))

    def test_batch_order_equivariance(self):
        model = init_model(16, 4, seed=2)
        model.head_weights[:] = np.random.default_rng(3).normal(size=16)
        x = np.random.default_rng(4).normal(size=(10, 4))
        perm = np.random.default_rng(5).permutation(10)
        p = forward(model, x).probabilities
        assert (forward(model, x[perm]).probabilities == p[perm]).all()

    def test_hidden_retained(self):
        model = init_model(6, 3, seed=1)
        x = np.random.default_rng(0).normal(size=(5, 3))
        out = forward(model, x)
        assert out.hidden.shape == (5, 6)
        assert (out.hidden >= 0).all()


class TestPredict:
    def test_tau_zero_all_positive(self):
        model = init_model(4, 2, seed=0)
        assert (predict(model, np.zeros((5, 2)), 0.0) == 1).all()

    def test_tau_one_all_negative(self):
        model = RandomFeatureModel(np.zeros((4, 2)), np.zeros(4), 100.0)
        assert (predict(model, np.zeros((5, 2)), 1.0) == 0).all()

    def test_tie_classifies_as_one(self):
        # zero head gives p = 0.5 exactly; tau = 0.5 must predict 1
        model = init_model(4, 2, seed=0)
        assert (predict(model, np.zeros((3, 2)), 0.5) == 1).all()

    def test_threshold_validated(self):
        model = init_model(4, 2, seed=0)
        with pytest.raises(SpecError):
            predict(model, np.zeros((1, 2)), 1.5)


class TestHeadGradient:
    def test_zero_upstream(self):
        model = init_model(5, 3, seed=1)
        gw, gb = head_gradient(model, np.ones((4, 3)), np.zeros(4))
        assert (gw == 0).all() and gb == 0.0

    def test_sparse_hidden_support(self):
        # hidden = e_k (single active unit) supports grad_w only on k
        proj = np.zeros((4, 4))
        proj[2, 0] = 1.0  # only unit 2 sees coordinate 0
        model = RandomFeatureModel(proj, np.zeros(4), 0.0)
        gw, _ = head_gradient(model, np.array([[1.0, 0, 0, 0]]), np.array([1.0]))
        assert gw[2] != 0.0
        assert (np.delete(gw, 2) == 0).all()

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        for probe in range(100):
            m, d, n = rng.integers(2, 7), rng.integers(2, 5), rng.integers(1, 6)
            model = init_model(int(m), int(d), seed=probe)
            model.head_weights[:] = rng.normal(size=m)
            model = RandomFeatureModel(model.projection, model.head_weights, float(rng.normal()))
            x = rng.normal(size=(n, d))
            c = rng.normal(size=n)  # fixed linear functional of the outputs

            def loss(w, b):
                z = np.maximum(x @ model.projection.T, 0) @ w + b
                return float(c @ (1 / (1 + np.exp(-z))))

            gw, gb = head_gradient(model, x, c)
            h = 1e-6
            fd = np.empty(m + 1)
            for k in range(m):
                e = np.zeros(m)
                e[k] = h
                fd[k] = (loss(model.head_weights + e, model.head_bias)
                         - loss(model.head_weights - e, model.head_bias)) / (2 * h)
            fd[m] = (loss(model.head_weights, model.head_bias + h)
                     - loss(model.head_weights, model.head_bias - h)) / (2 * h)
            got = np.concatenate([gw, [gb]])
            denom = max(np.linalg.norm(fd), 1e-8)
            assert np.linalg.norm(got - fd) / denom < 1e-5

    def test_upstream_length_checked(self):
        model = init_model(3, 2, seed=0)
        with pytest.raises(SpecError):
            head_gradient(model, np.zeros((2, 2)), np.zeros(3))


class TestCheckpoint:
    def test_seed_round_trip_is_bitwise(self, tmp_path):
        model = init_model(12, 5, seed=99)
        model.head_weights[:] = np.random.default_rng(1).normal(size=12)
        model = RandomFeatureModel(model.projection, model.head_weights, -0.75, seed=99)
        path = tmp_path / "ckpt.json"
        save_checkpoint(model, path)
        back = load_checkpoint(path)
        assert (back.projection == model.projection).all()
        assert (back.head_weights == model.head_weights).all()
        assert back.head_bias == model.head_bias

    def test_explicit_projection_round_trip(self, tmp_path):
        proj = np.random.default_rng(2).normal(size=(4, 3))
        model = RandomFeatureModel(proj, np.array([1.0, -2.0, 0.5, 0.25]), 0.125, seed=None)
        path = tmp_path / "ckpt.json"
        save_checkpoint(model, path)
        back = load_checkpoint(path)
        assert (back.projection == proj).all()
        assert (back.head_weights == model.head_weights).all()
