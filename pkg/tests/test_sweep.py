import numpy as np
import pytest
from dataclasses import replace

from fairlab.datagen import SplitSpec, SpuriousSpec
from fairlab.errors import SpecError
from fairlab.sweep import (
    PRESET_NAMES,
    Regularizer,
    SweepConfig,
    aggregate,
    config_from_json,
    config_to_json,
    derive_run_seeds,
    preset,
    run_sweep,
    write_results_csv,
)
from fairlab.trainer import TrainConfig

TINY_FIXTURE = SpuriousSpec(
    n_total=240,
    d_core=3,
    d_spur=3,
    d_noise=2,
    core_mean=0.8,
    spur_mean=0.8,
    noise_sigma=1.0,
    majority_fraction=0.85,
    positive_fraction=0.3,
    seed=5,
)

TINY_TRAIN = TrainConfig(
    total_steps=150,
    batch_size=32,
    mindiff_batch_size=4,
    lr_decay_every=50,
    eval_every=50,
)


def tiny_config(**kw):
    base = dict(
        widths=(8,),
        lambdas=(0.0,),
        regularizers=(Regularizer("none"),),
        seeds=(0,),
        train=TINY_TRAIN,
        thr_values=(0.1,),
        data=TINY_FIXTURE,
        split_spec=SplitSpec(0.5, 0.25, 0.25, seed=2),
    )
    base.update(kw)
    return SweepConfig(**base)


class TestAggregate:
    def test_constant_values(self):
        assert aggregate([5.0, 5.0, 5.0]) == (5.0, 0.0)

    def test_single_value_degenerate(self):
        assert aggregate([3.25]) == (3.25, 0.0)

    def test_two_values_match_t_table(self):
        # t_{0.975, 1} = 12.706204736..., sample std of [4, 6] is sqrt(2)
        mean, half = aggregate([4.0, 6.0])
        assert mean == 5.0
        assert half == pytest.approx(12.706204736432095, rel=1e-9)

    def test_ten_unit_variance_values(self):
        # construct a 10-sample vector with sample std exactly 1
        v = np.arange(10, dtype=float)
        v = (v - v.mean()) / v.std(ddof=1)
        mean, half = aggregate(v + 7.0)
        assert mean == pytest.approx(7.0)
        # t_{0.975, 9} / sqrt(10) = 2.2621571628.../sqrt(10)
        assert half == pytest.approx(2.2621571628540993 / np.sqrt(10), rel=1e-9)

    def test_translation_equivariance(self):
        v = [1.0, 2.0, 4.0, 8.0]
        m1, h1 = aggregate(v)
        m2, h2 = aggregate([x + 3.5 for x in v])
        assert m2 == pytest.approx(m1 + 3.5, abs=1e-12)
        assert h2 == pytest.approx(h1, abs=1e-12)

    def test_permutation_invariance(self):
        v = [0.3, 0.9, 0.1, 0.5]
        assert aggregate(v) == aggregate(v[::-1])

    def test_empty_rejected(self):
        with pytest.raises(SpecError):
            aggregate([])


class TestSeedMixing:
    def test_deterministic(self):
        assert derive_run_seeds(3, 64, 1.5, "none") == derive_run_seeds(3, 64, 1.5, "none")

    def test_coordinates_matter(self):
        base = derive_run_seeds(3, 64, 1.5, "none")
        assert derive_run_seeds(4, 64, 1.5, "none") != base
        assert derive_run_seeds(3, 128, 1.5, "none") != base
        assert derive_run_seeds(3, 64, 0.5, "none") != base
        assert derive_run_seeds(3, 64, 1.5, "fl=0.1") != base


class TestRunSweep:
    def test_single_cell_single_seed(self):
        out = run_sweep(tiny_config(), workers=1)
        assert len(out) == 1
        cell = out[0]
        assert cell.n_runs == 1
        assert all(ci == 0.0 for _, ci in cell.metrics.values())
        assert "constrained_err@0.1" in cell.metrics

    def test_duplicate_seeds_zero_halfwidth(self):
        out = run_sweep(tiny_config(seeds=(3, 3)), workers=1)
        cell = out[0]
        assert cell.n_runs == 2
        assert all(ci == 0.0 for _, ci in cell.metrics.values())

    def test_rerun_reproduces_bitwise(self):
        cfg = tiny_config(widths=(8, 16), lambdas=(0.0, 1.0), seeds=(0, 1))
        a = run_sweep(cfg, workers=1)
        b = run_sweep(cfg, workers=1)
        assert a == b

    def test_parallel_matches_serial(self):
        cfg = tiny_config(widths=(8, 16), seeds=(0, 1))
        assert run_sweep(cfg, workers=2) == run_sweep(cfg, workers=1)

    def test_seed_permutation_leaves_aggregates(self):
        a = run_sweep(tiny_config(seeds=(0, 1, 2)), workers=1)
        b = run_sweep(tiny_config(seeds=(2, 0, 1)), workers=1)
        assert a[0].metrics == b[0].metrics

    def test_regularizer_grid(self):
        cfg = tiny_config(
            regularizers=(
                Regularizer("none"),
                Regularizer("flooding", 0.1),
                Regularizer("weight_decay", 0.01),
                Regularizer("early_stopping", "primary"),
                Regularizer("batch_size", 8),
            )
        )
        out = run_sweep(cfg, workers=1)
        assert [c.regularizer for c in out] == ["none", "fl=0.1", "wd=0.01", "es=primary", "bs=8"]

    def test_results_csv_schema(self, tmp_path):
        out = run_sweep(tiny_config(), workers=1)
        path = tmp_path / "results.csv"
        write_results_csv(out, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "width,lambda,regularizer,metric,mean,ci95,n_runs"
        assert len(lines) == 1 + len(out[0].metrics)

    def test_invalid_configs(self):
        with pytest.raises(SpecError):
            tiny_config(widths=()).validate()
        with pytest.raises(SpecError):
            tiny_config(widths=(16, 8)).validate()
        with pytest.raises(SpecError):
            tiny_config(data=None).validate()


class TestPresets:
    def test_lambda_grid(self):
        assert preset("mindiff_vs_width").lambdas == (0.0, 0.5, 1.0, 1.5)

    def test_batch_sizing_includes_baseline(self):
        cfg = preset("batch_sizing")
        sizes = {
            r.value for r in cfg.regularizers if r.kind == "batch_size"
        } | {cfg.train.batch_size if any(r.kind == "none" for r in cfg.regularizers) else None}
        assert {8, 32, 128} <= sizes

    def test_unknown_preset(self):
        with pytest.raises(SpecError):
            preset("does_not_exist")

    def test_all_presets_valid(self):
        for name in PRESET_NAMES:
            preset(name).validate()

    def test_regularizer_compare_grid(self):
        labels = {r.label for r in preset("regularizer_compare").regularizers}
        assert {"none", "wd=0.001", "wd=0.1", "wd=10", "es=primary", "es=total",
                "fl=0.05", "fl=0.1"} == labels

    def test_default_seed_count(self):
        assert len(preset("double_descent").seeds) == 10


class TestConfigJson:
    def test_round_trip(self):
        cfg = preset("regularizer_compare")
        doc = config_to_json(cfg)
        back = config_from_json(doc)
        assert back == cfg

    def test_round_trip_with_flood_and_es(self):
        from fairlab.trainer import EarlyStoppingSpec

        cfg = tiny_config(
            train=replace(
                TINY_TRAIN,
                flood_level=0.05,
                weight_decay=0.1,
                early_stopping=EarlyStoppingSpec("total_val_loss", 4),
            )
        )
        assert config_from_json(config_to_json(cfg)) == cfg

    def test_invalid_json_rejected(self):
        with pytest.raises(SpecError):
            config_from_json({"widths": [8]})
