import sys
import textwrap

import pytest

from sertest.adapters import (
    AdapterError,
    PredictionCache,
    PredictionFileAdapter,
    ResourcePools,
    SubprocessAdapter,
    materialize,
    predict,
    predict_perturbed,
)
from sertest.core import Label, PredictionSet, Task, dump_predictions, load_manifest
from sertest.demo import make_mini_dataset
from sertest.perturb import PerturbationError, PerturbationSpec

PY = sys.executable


def script(tmp_path, body, name="model.py"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(body))
    return f"{PY} {path}"


ECHO = """
    import json, sys, zlib
    for line in sys.stdin:
        p = line.rstrip("\\n")
        if p:
            print(json.dumps({"id": p, "value": (zlib.crc32(p.encode()) % 1000) / 1000}))
"""


@pytest.fixture(scope="module")
def mini(tmp_path_factory):
    root = tmp_path_factory.mktemp("mini")
    return load_manifest(make_mini_dataset(root, seed=0))


def test_echo_double_answers_every_path(tmp_path):
    files = [tmp_path / f"{i}.wav" for i in range(5)]
    adapter = SubprocessAdapter(script(tmp_path, ECHO), Task.VALENCE, batch_size=2)
    preds = predict(adapter, {f"id{i}": f for i, f in enumerate(files)}, "valence")
    assert sorted(preds.predictions) == [f"id{i}" for i in range(5)]
    assert all(0 <= label.value <= 1 for label in preds.predictions.values())
    parallel = SubprocessAdapter(script(tmp_path, ECHO), Task.VALENCE, batch_size=1, workers=3)
    assert parallel.predict({f"id{i}": f for i, f in enumerate(files)}) == preds


def test_task_placeholder_is_substituted(tmp_path):
    body = """
        import json, sys
        task = sys.argv[1]
        for line in sys.stdin:
            print(json.dumps({"id": line.strip(), "class": "anger"} if task == "categories" else {"id": line.strip(), "value": 0.1}))
    """
    adapter = SubprocessAdapter(script(tmp_path, body) + " {task}", "categories")
    assert adapter.predict([tmp_path / "a.wav"]).predictions[str((tmp_path / "a.wav").resolve())] == Label(category="anger")


def test_wrong_task_rejected(tmp_path):
    with pytest.raises(AdapterError, match="answers valence"):
        predict(SubprocessAdapter(script(tmp_path, ECHO), "valence"), [], "arousal")


def test_nonzero_exit_includes_stderr(tmp_path):
    body = """
        import sys
        sys.stderr.write("model exploded\\n")
        sys.exit(1)
    """
    with pytest.raises(AdapterError, match="status 1.*model exploded"):
        SubprocessAdapter(script(tmp_path, body), "valence").predict([tmp_path / "a.wav"])


def test_missing_id_is_an_error(tmp_path):
    body = """
        import json, sys
        paths = [l.strip() for l in sys.stdin if l.strip()]
        for p in paths[1:]:
            print(json.dumps({"id": p, "value": 0.5}))
    """
    with pytest.raises(AdapterError, match="missing 1 of 2 ids"):
        SubprocessAdapter(script(tmp_path, body), "valence").predict([tmp_path / "a.wav", tmp_path / "b.wav"])


@pytest.mark.parametrize("line", ["not json", "[1, 2]", '{"id": "x"}', '{"id": "x", "value": 2.0}'])
def test_malformed_line_is_an_error(tmp_path, line):
    body = f"""
        import sys
        sys.stdin.read()
        print({line!r})
    """
    with pytest.raises(AdapterError, match="malformed model output line 1"):
        SubprocessAdapter(script(tmp_path, body), "valence").predict([tmp_path / "a.wav"])


def test_timeout(tmp_path):
    body = """
        import time
        time.sleep(10)
    """
    with pytest.raises(AdapterError, match="timed out"):
        SubprocessAdapter(script(tmp_path, body), "valence", timeout=0.5).predict([tmp_path / "a.wav"])


def test_prediction_file_adapter(tmp_path):
    preds = PredictionSet("m", Task.AROUSAL, {"a": Label(value=0.2), "b": Label(value=0.3)})
    dump_predictions(preds, tmp_path / "p.jsonl")
    adapter = PredictionFileAdapter.from_file(tmp_path / "p.jsonl", "arousal", "m")
    assert adapter.predict({"a": "x.wav"}).predictions == {"a": Label(value=0.2)}
    with pytest.raises(AdapterError, match="no entry"):
        adapter.predict({"c": "y.wav"})


def _counting_model(tmp_path):
    """Echo double that appends one line per invocation to a log file."""
    log = tmp_path / "calls.log"
    body = f"""
        import json, sys, zlib
        open({str(log)!r}, "a").write("call\\n")
        for line in sys.stdin:
            p = line.rstrip("\\n")
            if p:
                data = open(p, "rb").read()
                print(json.dumps({{"id": p, "value": (zlib.crc32(data) % 1000) / 1000}}))
    """
    return script(tmp_path, body, "counting.py"), log


def test_cache_hit_skips_model_and_rendering(tmp_path, mini):
    command, log = _counting_model(tmp_path)
    adapter = SubprocessAdapter(command, "valence", model_id="m")
    spec = PerturbationSpec("gain", {"gain_db": [-2, 2]}, seed=1)
    first = predict_perturbed(adapter, mini, spec, tmp_path / "work")
    cached = PredictionCache(tmp_path / "work" / "predictions").path("m", mini.name, spec.fingerprint(), Task.VALENCE)
    stamp = cached.stat().st_mtime_ns
    second = predict_perturbed(adapter, mini, spec, tmp_path / "work")
    assert second == first
    assert log.read_text().count("call") == 1
    assert cached.stat().st_mtime_ns == stamp


def test_no_cache_renders_and_predicts_again(tmp_path, mini):
    command, log = _counting_model(tmp_path)
    adapter = SubprocessAdapter(command, "valence", model_id="m")
    spec = PerturbationSpec("white_noise", {"snr_db": 30}, seed=1)
    first = predict_perturbed(adapter, mini, spec, tmp_path / "work")
    marker = next((tmp_path / "work" / "audio").rglob(".complete"))
    stamp = marker.stat().st_mtime_ns
    again = predict_perturbed(adapter, mini, spec, tmp_path / "work", use_cache=False)
    assert again == first
    assert log.read_text().count("call") == 2
    assert marker.stat().st_mtime_ns >= stamp


def test_materialize_is_deterministic(tmp_path, mini):
    spec = PerturbationSpec("white_noise", {"snr_db": [35, 40]}, seed=4)
    a = materialize(mini, spec, tmp_path / "a")
    b = materialize(mini, spec, tmp_path / "b")
    assert sorted(a) == sorted(mini.ids)
    assert all(a[sid].read_bytes() == b[sid].read_bytes() for sid in a)


def test_unperturbable_samples_are_left_out(tmp_path, mini):
    spec = PerturbationSpec("crop_end", {"n": 10**6})
    assert materialize(mini, spec, tmp_path) == {}
    adapter = SubprocessAdapter(script(tmp_path, ECHO), "valence")
    with pytest.raises(PerturbationError, match="could be perturbed"):
        predict_perturbed(adapter, mini, spec, tmp_path / "w")


def test_identity_gain_equals_clean_with_model_double(tmp_path, mini):
    command = f"{PY} -m sertest.demo_model --task {{task}}"
    for task in ("arousal", "valence"):
        adapter = SubprocessAdapter(command, task, model_id="demo")
        clean = adapter.predict({s.id: mini.audio_file(s) for s in mini.samples})
        perturbed = predict_perturbed(adapter, mini, PerturbationSpec("gain", {"gain_db": 0}), tmp_path / task)
        assert perturbed.predictions == clean.predictions


def test_resource_pools_load_lazily(tmp_path, mini):
    pools = ResourcePools({"speech": mini})
    assert list(pools) == ["speech"] and len(pools) == 1
    assert len(pools["speech"]) == len(mini)
    assert pools["speech"] is pools["speech"]
