import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairlab.datagen import GroupedDataset
from fairlab.errors import MissingSubgroupError, SpecError
from fairlab.losses import (
    KernelSpec,
    bce_loss,
    flood_transform,
    mindiff_loss,
    mmd_squared,
    total_loss_and_gradient,
    weight_decay_penalty,
)
from fairlab.model import RandomFeatureModel, init_model
from fairlab.trainer import TrainConfig


def kernel_scalar(x, y, spec):
    if spec.family == "gaussian":
        return math.exp(-((x - y) ** 2) / (2 * spec.bandwidth**2))
    return math.exp(-abs(x - y) / spec.bandwidth)


def mmd_double_sum(s, t, spec):
    """Independent O(n^2) oracle: literal double sums, scalar kernel calls."""
    ss = sum(kernel_scalar(a, b, spec) for a in s for b in s) / len(s) ** 2
    tt = sum(kernel_scalar(a, b, spec) for a in t for b in t) / len(t) ** 2
    st_ = sum(kernel_scalar(a, b, spec) for a in s for b in t) / (len(s) * len(t))
    return ss + tt - 2 * st_


class TestBce:
    def test_half_probabilities(self):
        assert bce_loss(np.array([0.5, 0.5]), np.array([1, 0])) == pytest.approx(
            math.log(2), abs=1e-12
        )

    def test_perfect_fit_clamped(self):
        p = np.array([1 - 1e-12, 1e-12])
        assert bce_loss(p, np.array([1, 0])) <= 1e-11

    def test_calculator_case(self):
        # -(ln .9 + ln .8 + ln .7)/3, frozen from direct evaluation
        p = np.array([0.9, 0.2, 0.7])
        y = np.array([1, 0, 1])
        assert bce_loss(p, y) == pytest.approx(0.22839300363692283, abs=1e-12)

    def test_empty_batch_rejected(self):
        with pytest.raises(SpecError):
            bce_loss(np.array([]), np.array([]))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(0.01, 0.99), st.integers(0, 1)), min_size=1, max_size=20),
           st.randoms(use_true_random=False))
    def test_joint_permutation_invariance(self, pairs, rnd):
        p = np.array([a for a, _ in pairs])
        y = np.array([b for _, b in pairs])
        perm = list(range(len(pairs)))
        rnd.shuffle(perm)
        assert bce_loss(p, y) == pytest.approx(bce_loss(p[perm], y[perm]), rel=1e-12)


class TestMmd:
    def test_identical_samples_zero(self):
        v = np.array([0.1, 0.4, 0.9])
        assert mmd_squared(v, v.copy()) == 0.0

    def test_two_point_gaussian(self):
        # 2 - 2 exp(-1/2), frozen from the direct kernel-sum formula
        got = mmd_squared(np.array([0.0]), np.array([1.0]), KernelSpec("gaussian", 1.0))
        assert got == pytest.approx(0.7869386805747332, abs=1e-12)

    def test_matches_double_sum_oracle(self):
        rng = np.random.default_rng(0)
        spec_g = KernelSpec("gaussian", 0.5)
        spec_l = KernelSpec("laplace", 0.7)
        for trial in range(200):
            s = rng.random(rng.integers(1, 7))
            t = rng.random(rng.integers(1, 7))
            for spec in (spec_g, spec_l):
                assert mmd_squared(s, t, spec) == pytest.approx(
                    mmd_double_sum(s, t, spec), abs=1e-12
                )

    def test_symmetry_and_permutation_invariance(self):
        rng = np.random.default_rng(5)
        s, t = rng.random(6), rng.random(4)
        spec = KernelSpec("gaussian", 0.5)
        assert mmd_squared(s, t, spec) == pytest.approx(mmd_squared(t, s, spec), abs=1e-15)
        assert mmd_squared(s, t, spec) == pytest.approx(
            mmd_squared(s[::-1], t[[2, 0, 3, 1]], spec), abs=1e-15
        )

    def test_empty_rejected(self):
        with pytest.raises(SpecError):
            mmd_squared(np.array([]), np.array([1.0]))

    def test_bad_kernel_rejected(self):
        with pytest.raises(SpecError):
            mmd_squared(np.array([1.0]), np.array([1.0]), KernelSpec("cubic", 1.0))
        with pytest.raises(SpecError):
            mmd_squared(np.array([1.0]), np.array([1.0]), KernelSpec("gaussian", 0.0))


class TestMindiff:
    def test_constant_outputs_zero(self):
        outputs = np.full(8, 0.5)
        labels = np.array([1, 1, 1, 1, 0, 0, 1, 1])
        attrs = np.array([0, 0, 1, 1, 0, 1, 0, 1])
        assert mindiff_loss(outputs, labels, attrs) == 0.0

    def test_single_member_subgroups(self):
        # {0.9} vs {0.1} with sigma 0.5: 2 - 2 exp(-0.64/0.5), frozen from
        # the kernel-sum oracle (1.4439253990936118)
        outputs = np.array([0.9, 0.1])
        labels = np.array([1, 1])
        attrs = np.array([0, 1])
        got = mindiff_loss(outputs, labels, attrs, KernelSpec("gaussian", 0.5))
        assert got == pytest.approx(1.4439253990936118, abs=1e-12)

    def test_missing_subgroup(self):
        outputs = np.array([0.9, 0.1])
        labels = np.array([1, 0])
        attrs = np.array([0, 1])  # no (y=1, a=1)
        with pytest.raises(MissingSubgroupError):
            mindiff_loss(outputs, labels, attrs)


class TestFlood:
    def test_above_level_identity(self):
        assert flood_transform(0.2, 0.1) == 0.2

    def test_below_level_reflects(self):
        assert flood_transform(0.05, 0.1) == pytest.approx(0.15, abs=1e-15)

    def test_fixed_point(self):
        assert flood_transform(0.1, 0.1) == 0.1

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0, 10), st.floats(0, 5))
    def test_always_at_least_level(self, primary, level):
        out = flood_transform(primary, level)
        assert out >= level
        if primary >= level:
            assert out == primary


class TestWeightDecay:
    def test_zero_strength(self):
        assert weight_decay_penalty(init_model(4, 2, seed=0), 0.0) == 0.0

    def test_norm_arithmetic(self):
        model = RandomFeatureModel(np.zeros((2, 2)), np.array([3.0, 4.0]), 0.0)
        assert weight_decay_penalty(model, 1.0) == 12.5

    def test_bias_included(self):
        model = RandomFeatureModel(np.zeros((1, 1)), np.array([0.0]), 2.0)
        assert weight_decay_penalty(model, 0.5) == 0.5 * 0.5 * 4.0


def _probe_config(lambda_, flood, wd):
    return TrainConfig(
        total_steps=1,
        lambda_=lambda_,
        flood_level=flood,
        weight_decay=wd,
        kernel=KernelSpec("gaussian", 0.5),
    )


def _probe_batches(rng, d):
    n = 12
    labels = rng.integers(0, 2, size=n)
    attrs = rng.integers(0, 2, size=n)
    labels[:4] = [1, 1, 0, 0]
    attrs[:4] = [0, 1, 0, 1]
    primary = GroupedDataset(rng.normal(size=(n, d)), labels, attrs)
    k = 6
    m_labels = np.ones(2 * k, dtype=int)
    m_attrs = np.array([0] * k + [1] * k)
    mindiff = GroupedDataset(rng.normal(size=(2 * k, d)), m_labels, m_attrs)
    return primary, mindiff


def _total_only(model, primary, mindiff, config):
    return total_loss_and_gradient(model, primary, mindiff, config)[0].total


class TestTotalLoss:
    def test_degenerate_config_reduces_to_bce_gradient(self, random_grouped):
        data = random_grouped(n=16, d=4, seed=2)
        model = init_model(6, 4, seed=0)
        model.head_weights[:] = np.random.default_rng(1).normal(size=6) * 0.3
        config = _probe_config(0.0, None, 0.0)
        breakdown, gw, gb = total_loss_and_gradient(model, data, None, config)
        # independent BCE gradient: chain rule by hand
        hidden = np.maximum(data.features @ model.projection.T, 0)
        z = hidden @ model.head_weights + model.head_bias
        p = 1 / (1 + np.exp(-z))
        dz = (p - data.labels) / data.n
        assert np.allclose(gw, hidden.T @ dz, atol=1e-12)
        assert gb == pytest.approx(dz.sum(), abs=1e-12)
        assert breakdown.total == pytest.approx(breakdown.primary, abs=1e-15)

    def test_flood_sign_flip(self, random_grouped):
        data = random_grouped(n=16, d=4, seed=3)
        model = init_model(6, 4, seed=1)
        low = _probe_config(0.0, None, 0.0)
        b_low, gw_low, gb_low = total_loss_and_gradient(model, data, None, low)
        flooded = _probe_config(0.0, b_low.primary * 2, 0.0)  # level above current loss
        b_fl, gw_fl, gb_fl = total_loss_and_gradient(model, data, None, flooded)
        assert np.allclose(gw_fl, -gw_low, atol=1e-15)
        assert gb_fl == pytest.approx(-gb_low, abs=1e-15)
        # below the level the transform reflects: total = 2b - L_P
        assert b_fl.total == pytest.approx(2 * b_fl.flood_level - b_low.primary, abs=1e-12)

    @pytest.mark.parametrize("lambda_", [0.0, 0.5, 1.5])
    @pytest.mark.parametrize("flood", [None, 0.05, 2.0])
    @pytest.mark.parametrize("wd", [0.0, 0.1])
    def test_gradient_matches_finite_differences(self, lambda_, flood, wd):
        rng = np.random.default_rng(hash((lambda_, flood, wd)) % 2**32)
        d, m = 4, 5
        model = init_model(m, d, seed=17)
        model.head_weights[:] = rng.normal(size=m) * 0.5
        primary, mindiff = _probe_batches(rng, d)
        config = _probe_config(lambda_, flood, wd)
        breakdown, gw, gb = total_loss_and_gradient(model, primary, mindiff, config)
        if flood is not None:
            assert abs(breakdown.primary - flood) > 1e-4  # stay off the kink
        h = 1e-6
        fd = np.empty(m + 1)
        w0, b0 = model.head_weights.copy(), model.head_bias
        for k in range(m):
            e = np.zeros(m)
            e[k] = h
            up = RandomFeatureModel(model.projection, w0 + e, b0)
            dn = RandomFeatureModel(model.projection, w0 - e, b0)
            fd[k] = (_total_only(up, primary, mindiff, config)
                     - _total_only(dn, primary, mindiff, config)) / (2 * h)
        up = RandomFeatureModel(model.projection, w0, b0 + h)
        dn = RandomFeatureModel(model.projection, w0, b0 - h)
        fd[m] = (_total_only(up, primary, mindiff, config)
                 - _total_only(dn, primary, mindiff, config)) / (2 * h)
        got = np.concatenate([gw, [gb]])
        assert np.linalg.norm(got - fd) / max(np.linalg.norm(fd), 1e-10) < 1e-5

    def test_breakdown_recomputes(self, random_grouped):
        data = random_grouped(n=20, d=3, seed=4)
        model = init_model(4, 3, seed=2)
        model.head_weights[:] = 0.3
        primary, mindiff = _probe_batches(np.random.default_rng(9), 3)
        config = _probe_config(1.5, 0.1, 0.01)
        breakdown, _, _ = total_loss_and_gradient(model, primary, mindiff, config)
        assert breakdown.total == pytest.approx(breakdown.recomputed_total(), abs=1e-12)

    def test_missing_subgroup_with_lambda(self):
        model = init_model(4, 3, seed=0)
        rng = np.random.default_rng(0)
        primary, _ = _probe_batches(rng, 3)
        bad = GroupedDataset(rng.normal(size=(4, 3)), np.ones(4, dtype=int), np.zeros(4, dtype=int))
        with pytest.raises(MissingSubgroupError):
            total_loss_and_gradient(model, primary, bad, _probe_config(1.0, None, 0.0))
        with pytest.raises(MissingSubgroupError):
            total_loss_and_gradient(model, primary, None, _probe_config(1.0, None, 0.0))
