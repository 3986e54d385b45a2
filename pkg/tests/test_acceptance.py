"""Acceptance criteria, one test each; the terminal summary prints one line per criterion."""

import filecmp
import time

import numpy as np
import pytest

import oracles
import synth
from golden import GOLDEN, run_mini
from sertest.core import BinSpec, DatasetManifest, GroupPartition, Label, Sample, Task
from sertest.metrics import (
    binned_class_metrics,
    class_metrics,
    concordance_corr,
    group_disparity,
    jensen_shannon_distance,
    mean_absolute_error,
    pearson_corr,
    spearman_rho,
    unchanged_fraction,
)
from sertest.perturb import (
    AudioBuffer,
    PerturbationSpec,
    apply_perturbation,
    edit_signal,
    first_order_filter,
    mix_at_snr,
    rms,
    spectral_tilt,
)
from sertest.registry import load_registry, lookup
from sertest.simulation import balance_groups, n_min_bin, simulate_threshold
from sertest.suite import RobustnessPair, SuiteInputs, run_suite

SPECS = load_registry()
CLASSES = ["anger", "happiness", "neutral", "sadness"]


@pytest.mark.criterion(1, "n_min_bin(1000) = 67 and n_min_bin(60) = 4")
def test_criterion_1_n_min_bin():
    assert n_min_bin(1000) == 67
    assert n_min_bin(60) == 4


@pytest.mark.criterion(2, "diff_mean threshold, 3 groups x 600, 1000 repeats: < 0.025 in >= 19 of 20 runs, < 30 s")
def test_criterion_2_simulated_threshold():
    start = time.perf_counter()
    values = [simulate_threshold("diff_mean", 3, 600, repeats=1000, seed=1000 + run) for run in range(20)]
    elapsed = time.perf_counter() - start
    assert sum(v < 0.025 for v in values) >= 19
    assert elapsed < 30


@pytest.mark.criterion(3, "metrics match naive oracles within 1e-9 on 1000 random instances")
def test_criterion_3_oracle_equivalence():
    rng = np.random.default_rng(2024)
    tol = 1e-9
    for _ in range(1000):
        n = int(rng.integers(2, 65))
        k = int(rng.integers(2, 5))
        t = list(rng.uniform(0, 1, n))
        p = list(rng.uniform(0, 1, n))
        if rng.random() < 0.2:  # exercise ties and coarse values
            t = list(np.round(np.array(t), 1))
            p = list(np.round(np.array(p), 1))
        assert abs(concordance_corr(t, p) - oracles.ccc(t, p)) <= tol
        assert abs(mean_absolute_error(t, p) - oracles.mae(t, p)) <= tol
        if oracles.pop_var(t) > 0 and oracles.pop_var(p) > 0:
            assert abs(pearson_corr(t, p) - oracles.pcc(t, p)) <= tol
            assert abs(spearman_rho(t, p) - oracles.spearman(t, p)) <= tol
        assert abs(jensen_shannon_distance(t, p) - oracles.js_distance(t, p)) <= tol
        rec, prec = oracles.per_bin_recall_precision(t, p, k, n_min=0)
        res = binned_class_metrics(t, p, BinSpec(k), 0)
        assert res.recall_per_bin.keys() == rec.keys()
        assert all(abs(res.recall_per_bin[b] - v) <= tol for b, v in rec.items())
        for b, v in prec.items():
            got = res.precision_per_bin[b]
            assert (v is None and got is None) or abs(got - v) <= tol
        classes = CLASSES[:k]
        tc = [classes[i] for i in rng.integers(k, size=n)]
        pc = [classes[i] for i in rng.integers(k, size=n)]
        cm = class_metrics(tc, pc, classes)
        rec_c, prec_c = oracles.per_class_recall_precision(tc, pc, classes)
        assert cm.recall_per_class.keys() == rec_c.keys() and cm.precision_per_class.keys() == prec_c.keys()
        assert all(abs(cm.recall_per_class[c] - v) <= tol for c, v in rec_c.items())
        assert all(abs(cm.precision_per_class[c] - v) <= tol for c, v in prec_c.items())
        assert abs(cm.uar - oracles.uar(tc, pc, classes)) <= tol
        assert abs(cm.uap - oracles.uap(tc, pc, classes)) <= tol


@pytest.mark.criterion(4, "JS distance: identical -> 0, disjoint single bins -> 1 +- 1e-12")
def test_criterion_4_js_endpoints():
    rng = np.random.default_rng(0)
    x = list(rng.uniform(0, 1, 50))
    assert jensen_shannon_distance(x, x) == 0.0
    for lo, hi in [(0.05, 0.95), (0.31, 0.42), (0.0, 1.0)]:
        assert abs(jensen_shannon_distance([lo] * 7, [hi] * 11) - 1.0) <= 1e-12


def _speechlike(rng, n):
    env = np.abs(np.sin(np.linspace(0, rng.uniform(2, 8) * np.pi, n))) + 0.05
    return AudioBuffer(rng.uniform(0.01, 0.3) * env * rng.standard_normal(n), 16000)


def _tone_gain_db(process, freq, rate=16000):
    t = np.arange(2 * rate) / rate
    x = AudioBuffer(0.1 * np.sin(2 * np.pi * freq * t), rate)
    y = process(x).samples[rate:]
    return 20 * np.log10(rms(AudioBuffer(y, rate)) / rms(AudioBuffer(x.samples[rate:], rate)))


@pytest.mark.criterion(5, "DSP: SNR +-0.01 dB, filters -3 dB +-0.1 at cutoff, tilt keeps RMS, edits invert, seeded")
def test_criterion_5_dsp_invariants():
    rng = np.random.default_rng(5)
    for _ in range(100):
        sig = _speechlike(rng, int(rng.integers(400, 8000)))
        noise = AudioBuffer(rng.standard_normal(int(rng.integers(100, 9000))), 16000)
        target = float(rng.uniform(0, 45))
        out = mix_at_snr(sig, noise, target)
        assert abs(oracles.snr_db(list(sig.samples), list(out.samples - sig.samples)) - target) <= 0.01
    for kind in ("lowpass", "highpass"):
        for cutoff in (50, 100, 150, 6500, 7000, 7500):
            gain = _tone_gain_db(lambda x: first_order_filter(x, kind, cutoff), cutoff)
            assert abs(gain + 3.0103) <= 0.1
    for slope in (-3.0, 3.0):
        x = _speechlike(rng, 8000)
        y = spectral_tilt(x, slope)
        assert np.max(np.abs(y.samples)) < 1.0
        assert abs(rms(y) - rms(x)) <= 1e-12 * max(rms(x), 1.0)
    for _ in range(20):
        x = _speechlike(rng, int(rng.integers(10, 500)))
        n = int(rng.integers(1, 1001))
        assert np.array_equal(edit_signal(edit_signal(x, "append_zeros", n), "crop_end", n).samples, x.samples)
        assert np.array_equal(edit_signal(edit_signal(x, "prepend_zeros", n), "crop_start", n).samples, x.samples)
    pools = {"p": [_speechlike(rng, 3000) for _ in range(8)]}
    x = _speechlike(rng, 4000)
    for spec in [
        PerturbationSpec("white_noise", {"snr_db": [35, 40, 45]}, 9),
        PerturbationSpec("additive_tone", {"snr_db": [40, 45, 50]}, 9),
        PerturbationSpec("babble", {"pool": "p", "snr_db": 20}, 9),
        PerturbationSpec("noise_file", {"pool": "p", "placement": "random_offset", "snr_db": 10}, 9),
        PerturbationSpec("phone", {}, 9),
        PerturbationSpec("spectral_tilt", {"slope_db_per_octave": -3}, 9),
        PerturbationSpec("clip", {"fraction": [0.001, 0.003]}, 9),
    ]:
        assert apply_perturbation(x, spec, "k", pools) == apply_perturbation(x, spec, "k", pools)


@pytest.mark.criterion(6, "fairness: pool vs itself is 0; equal groups pass every fairness test on 3 datasets")
def test_criterion_6_fairness_sanity():
    rng = np.random.default_rng(6)
    for _ in range(50):
        xs = list(rng.uniform(0, 1, int(rng.integers(1, 80))))
        for mode in ("diff_mean", "rel_diff_per_bin"):
            assert all(v == 0 for v in group_disparity(xs, xs, mode, spec=BinSpec(4), n_min=0).values.values())
        cs = [CLASSES[i] for i in rng.integers(4, size=len(xs))]
        assert all(v == 0 for v in group_disparity(cs, cs, "rel_diff_per_class", classes=CLASSES).values.values())
    fairness = [s for s in SPECS if s.category == "fairness"]
    for seed in range(3):
        manifests, predictions = synth.fair_world(seed)
        results = run_suite(SuiteInputs(manifests, predictions, balance_n=0), fairness)
        assert len(results) == len(fairness)
        assert all(r.pass_fraction == 1.0 for r in results)


@pytest.mark.criterion(7, "robustness: 0 dB gain with the model double leaves predictions unchanged; all tests pass")
def test_criterion_7_robustness_identity(tmp_path):
    import sys

    from sertest.adapters import SubprocessAdapter, predict_perturbed
    from sertest.core import load_manifest
    from sertest.demo import make_mini_dataset

    manifest = load_manifest(make_mini_dataset(tmp_path / "mini", seed=1))
    command = f"{sys.executable} -m sertest.demo_model --task {{task}}"
    identity = PerturbationSpec("gain", {"gain_db": 0})
    predictions, perturbed = {}, {}
    specs = [s for s in SPECS if s.category == "robustness" and s.task in (Task.AROUSAL, Task.VALENCE)]
    for task in (Task.AROUSAL, Task.VALENCE):
        adapter = SubprocessAdapter(command, task, "demo")
        clean = adapter.predict({s.id: manifest.audio_file(s) for s in manifest.samples})
        after = predict_perturbed(adapter, manifest, identity, tmp_path / "work")
        assert unchanged_fraction(clean, after) == 1.0
        predictions[("iemocap", task)] = clean
        for spec in specs:
            if spec.task is task:
                for v in spec.perturbations:
                    perturbed[("iemocap", task, v)] = RobustnessPair(after)
    results = run_suite(SuiteInputs({"iemocap": manifest}, predictions, perturbed), specs)
    assert results
    for r in results:
        assert r.n_skipped == 0 and r.pass_fraction == 1.0
        expected = 1.0 if r.metric == "unchanged" else 0.0
        assert all(i.value == expected for i in r.instances)


@pytest.mark.criterion(8, "registry rows reproduce the published conditions exactly")
def test_criterion_8_registry_fidelity():
    assert lookup(SPECS, "Correctness Regression", "valence", "CCC").condition == "CCC > 0.5"
    assert lookup(SPECS, "Correctness Regression", "arousal", "MAE").condition == "MAE < 0.1"
    assert lookup(SPECS, "Fairness Sex", "categories", "Diff. UAR").condition == "|Diff. UAR| < 0.075"
    assert lookup(SPECS, "Robustness Spectral Tilt", "categories", "Change UAR").condition == "Change UAR > -0.02"
    unchanged = {
        "Robustness Background Noise": 0.9,
        "Robustness Low Quality Phone": 0.5,
        "Robustness Rec. Condition": 0.8,
        "Robustness Sim. Rec. Condition": 0.8,
        "Robustness Small Changes": 0.95,
        "Robustness Spectral Tilt": 0.8,
    }
    for test, thr in unchanged.items():
        for task in ("categories", "arousal", "dominance", "valence"):
            spec = lookup(SPECS, test, task, "Perc. Unchanged Predictions")
            assert spec.threshold == thr and spec.condition == f"Perc. Unchanged Predictions > {thr:g}"


@pytest.mark.criterion(9, "golden run on the mini dataset finishes in < 60 s and matches byte for byte")
def test_criterion_9_golden_run(tmp_path):
    start = time.perf_counter()
    code = run_mini(tmp_path / "work", tmp_path / "out")
    elapsed = time.perf_counter() - start
    assert code == 0
    assert elapsed < 60, f"run took {elapsed:.1f} s"
    for name in ("report.json", "report.md"):
        assert filecmp.cmp(tmp_path / "out" / name, GOLDEN / name, shallow=False), name


@pytest.mark.criterion(10, "balancing leaves <= 0.05 max per-bin (10 bins) truth-proportion gap")
def test_criterion_10_balancing():
    rng = np.random.default_rng(10)
    a = np.clip(rng.normal(0.45, 0.15, 3000), 0, 1)
    b = np.clip(rng.normal(0.55, 0.15, 1200), 0, 1)
    samples = [Sample(f"a{i}", gold={Task.AROUSAL: Label(value=float(v))}) for i, v in enumerate(a)]
    samples += [Sample(f"b{i}", gold={Task.AROUSAL: Label(value=float(v))}) for i, v in enumerate(b)]
    part = GroupPartition("g", {"a": tuple(f"a{i}" for i in range(3000)), "b": tuple(f"b{i}" for i in range(1200))})
    manifest = DatasetManifest("shift", tuple(samples))
    gold = manifest.gold(Task.AROUSAL)

    def gap(p):
        h = [oracles.histogram([gold[s].value for s in ids], 10) for ids in p.groups.values()]
        return max(abs(x - y) for x, y in zip(*h))

    assert gap(part) > 0.05
    balanced = balance_groups(manifest, part, Task.AROUSAL, target_n=1000, seed=0)
    assert balanced.sizes() == {"a": 1000, "b": 1000}
    assert gap(balanced) <= 0.05
