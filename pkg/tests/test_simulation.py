import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from sertest.core import DatasetManifest, GroupPartition, Label, Sample, Task
from sertest.simulation import (
    GAUSSIAN,
    SPARSE,
    SUPPORTED_METRICS,
    InsufficientSamplesError,
    RandomModelConfig,
    ThresholdTable,
    balance_groups,
    n_min_bin,
    shipped_table,
    sample_random_predictions,
    simulate_grid,
    simulate_threshold,
)


@pytest.mark.parametrize("n,expected", [(1000, 67), (60, 4), (0, 0)])
def test_n_min_bin_reference_values(n, expected):
    assert n_min_bin(n) == expected


@given(st.integers(1, 100_000))
def test_n_min_bin_matches_oracle(n):
    assert n_min_bin(n) == int(oracles.normal_cdf(-1.5) * n + 0.5)


def test_gaussian_model_stays_in_unit_interval():
    x = sample_random_predictions(GAUSSIAN, 20_000, seed=3)
    assert x.min() >= 0.0 and x.max() <= 1.0
    assert x.mean() == pytest.approx(0.5, abs=0.01)
    assert x.std() == pytest.approx(1 / 6, abs=0.01)


def test_sparse_model_class_shares():
    x = sample_random_predictions(SPARSE, 40_000, seed=1)
    shares = np.bincount(x, minlength=4) / len(x)
    assert shares == pytest.approx([0.05, 0.05, 0.3, 0.6], abs=0.01)


@pytest.mark.parametrize("bad", [dict(kind="beta"), dict(std=0.0), dict(kind="categorical_uniform", probabilities=(0.5, 0.6))])
def test_invalid_model_config(bad):
    with pytest.raises(ValueError):
        RandomModelConfig(**bad)


@pytest.mark.parametrize("metric", SUPPORTED_METRICS)
def test_simulation_is_deterministic_and_nonnegative(metric):
    a = simulate_threshold(metric, 2, 60, repeats=5, seed=7)
    assert a == simulate_threshold(metric, 2, 60, repeats=5, seed=7)
    assert a >= 0.0


def test_threshold_shrinks_with_group_size():
    small = simulate_threshold("diff_mean", 3, 30, repeats=200, seed=0)
    large = simulate_threshold("diff_mean", 3, 600, repeats=200, seed=0)
    assert large < small


def test_threshold_trend_over_meta_runs():
    small = [simulate_threshold("diff_mean", 2, 250, repeats=50, seed=s) for s in range(20)]
    large = [simulate_threshold("diff_mean", 2, 4000, repeats=50, seed=s) for s in range(20)]
    assert np.mean(large) < np.mean(small)


def test_more_repeats_never_lower_threshold():
    # repeat i has its own stream, so a longer run contains the shorter one
    assert simulate_threshold("diff_ccc", 2, 50, repeats=40, seed=2) >= simulate_threshold("diff_ccc", 2, 50, repeats=20, seed=2)


def test_single_group_has_zero_deviation():
    assert simulate_threshold("diff_mean", 1, 50, repeats=10) == 0.0


def test_unsupported_metric_rejected():
    with pytest.raises(ValueError, match="unsupported metric"):
        simulate_threshold("diff_pcc", 2, 10)


def test_table_csv_roundtrip_and_lookup():
    table = simulate_grid(["diff_mean", "diff_uar"], groups=[2, 3], samples=[30, 60], repeats=3, seed=5)
    again = ThresholdTable.from_csv(table.to_csv())
    assert again.to_csv() == table.to_csv()
    assert again.digest() == table.digest()
    # uar is simulated for both ground-truth distributions
    assert table.get("diff_uar", 2, 30, "categorical_uniform", "categorical_sparse") is not None
    assert table.lookup("diff_mean", 2, 45, "gaussian_truncated") == table.get("diff_mean", 2, 30, "gaussian_truncated")
    assert table.lookup("diff_mean", 3, 100, "gaussian_truncated") == table.get("diff_mean", 3, 60, "gaussian_truncated")
    assert table.lookup("diff_mean", 4, 60, "gaussian_truncated") is None
    assert table.lookup("diff_mean", 2, 20, "gaussian_truncated") is None


def test_table_rejects_missing_columns():
    with pytest.raises(ValueError, match="lacks columns"):
        ThresholdTable.from_csv("metric,n_groups\n")


def _shifted_manifest(n_a=3000, n_b=1200, seed=0):
    rng = np.random.default_rng(seed)
    a = np.clip(rng.normal(0.45, 0.15, n_a), 0, 1)
    b = np.clip(rng.normal(0.55, 0.15, n_b), 0, 1)
    samples = [Sample(f"a{i}", gold={Task.VALENCE: Label(value=float(v))}) for i, v in enumerate(a)]
    samples += [Sample(f"b{i}", gold={Task.VALENCE: Label(value=float(v))}) for i, v in enumerate(b)]
    part = GroupPartition("g", {"a": tuple(f"a{i}" for i in range(n_a)), "b": tuple(f"b{i}" for i in range(n_b))})
    return DatasetManifest("shift", tuple(samples)), part


def _max_bin_gap(manifest, part, n_bins=10):
    gold = manifest.gold(Task.VALENCE)
    hists = [oracles.histogram([gold[s].value for s in ids], n_bins) for ids in part.groups.values()]
    return max(abs(x - y) for x, y in zip(*hists))


def test_balancing_equalizes_truth_distribution():
    manifest, part = _shifted_manifest()
    assert _max_bin_gap(manifest, part) > 0.1
    balanced = balance_groups(manifest, part, Task.VALENCE, target_n=1000, seed=1)
    assert balanced.sizes() == {"a": 1000, "b": 1000}
    assert _max_bin_gap(manifest, balanced) <= 0.05
    for g, ids in balanced.groups.items():
        assert len(set(ids)) == len(ids) and set(ids) <= set(part.groups[g])


def test_balancing_categories_matches_proportions():
    samples, groups = [], {"a": [], "b": []}
    for g, n, share in (("a", 200, 0.5), ("b", 1000, 0.1)):
        for i in range(n):
            samples.append(Sample(f"{g}{i}", gold={Task.CATEGORIES: Label(category="sadness" if i < n * share else "anger")}))
            groups[g].append(f"{g}{i}")
    manifest = DatasetManifest("c", tuple(samples))
    part = GroupPartition("g", {k: tuple(v) for k, v in groups.items()})
    balanced = balance_groups(manifest, part, Task.CATEGORIES, target_n=100, seed=0)
    gold = manifest.gold(Task.CATEGORIES)
    share = {g: sum(gold[s].category == "sadness" for s in ids) / len(ids) for g, ids in balanced.groups.items()}
    assert share["b"] == pytest.approx(share["a"], abs=0.02)
    assert share["a"] == pytest.approx(0.5, abs=0.1)


def test_balancing_is_deterministic_and_checks_size():
    manifest, part = _shifted_manifest(60, 50)
    assert balance_groups(manifest, part, Task.VALENCE, 40, seed=3) == balance_groups(manifest, part, Task.VALENCE, 40, seed=3)
    with pytest.raises(InsufficientSamplesError):
        balance_groups(manifest, part, Task.VALENCE, target_n=51)


def test_shipped_table_covers_every_metric_and_shrinks_with_size():
    table = shipped_table()
    keys = table.entries.keys()
    assert {k[0] for k in keys} == set(SUPPORTED_METRICS)
    for metric, g, _, model, truth in {k for k in keys if k[2] == 60}:
        small = table.get(metric, g, 60, model, truth)
        large = table.get(metric, g, 2000, model, truth)
        assert 0 < large < small, (metric, g, model, truth)
    assert table.lookup("diff_mean", 3, 600, "gaussian_truncated") < 0.025
