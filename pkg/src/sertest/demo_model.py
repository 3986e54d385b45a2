"""Deterministic scripted model double speaking the subprocess protocol.

Reads WAV paths from standard input and writes one JSON record per path.
Arousal follows the RMS level and valence the share of energy above
3.5 kHz (see :mod:`sertest.demo`). It has a built-in bias: valence is
lowered for low-pitched voices, which gives the fairness tests something to
find. Categories are derived from the two estimates.

Usage: ``python3 -m sertest.demo_model --task arousal < paths.txt``
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np
from scipy.io import wavfile

LEVEL_RANGE_DB = (-36.0, -12.0)
# the double squeezes its arousal estimates towards the middle of the scale
AROUSAL_SCALE = (0.08, 0.84)
LOW_PITCH_HZ = 150.0
LOW_PITCH_VALENCE_BIAS = -0.08


def _load(path: str) -> tuple[np.ndarray, int]:
    rate, data = wavfile.read(path)
    x = np.asarray(data, dtype=float)
    if data.dtype == np.int16:
        x /= 32768.0
    if x.ndim > 1:
        x = x.mean(axis=1)
    return x, rate


def _pitch(x: np.ndarray, rate: int) -> float:
    seg = x[: min(len(x), 4096)]
    seg = seg - seg.mean()
    spec = np.fft.rfft(seg, 2 * len(seg))
    ac = np.fft.irfft(np.abs(spec) ** 2)[: len(seg)]
    lo, hi = int(rate / 400), int(rate / 60)
    if len(ac) <= hi or ac[0] <= 0:
        return 0.0
    lag = lo + int(np.argmax(ac[lo:hi]))
    return rate / lag


def features(x: np.ndarray, rate: int) -> dict[str, float]:
    power = float(np.mean(x**2)) if len(x) else 0.0
    level = 10 * np.log10(max(power, 1e-12))
    spectrum = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(len(x), 1 / rate)
    total = float(spectrum.sum()) or 1.0
    share = float(spectrum[freqs >= 3500].sum()) / total
    return {"level_db": level, "share": share, "f0": _pitch(x, rate)}


def estimate(x: np.ndarray, rate: int) -> dict[str, float | str]:
    f = features(x, rate)
    lo, hi = LEVEL_RANGE_DB
    raw = float(np.clip((f["level_db"] - lo) / (hi - lo), 0.0, 1.0))
    arousal = AROUSAL_SCALE[0] + AROUSAL_SCALE[1] * raw
    valence = (f["share"] - 0.05) / 0.5
    if 0 < f["f0"] < LOW_PITCH_HZ:
        valence += LOW_PITCH_VALENCE_BIAS
    valence = float(np.clip(valence, 0.0, 1.0))
    if arousal >= 0.6:
        category = "happiness" if valence >= 0.5 else "anger"
    elif arousal <= 0.35:
        category = "sadness"
    else:
        category = "neutral"
    return {"arousal": round(arousal, 6), "valence": round(valence, 6), "categories": category}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--task", required=True, choices=("arousal", "valence", "categories"))
    args = parser.parse_args(argv)
    for line in sys.stdin:
        path = line.rstrip("\n")
        if not path:
            continue
        x, rate = _load(path)
        out = estimate(x, rate)[args.task]
        key = "class" if args.task == "categories" else "value"
        sys.stdout.write(json.dumps({"id": path, key: out}) + "\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
