"""Synthetic mini dataset and resource pools for self-tests and demos.

Three speakers record 40 short utterances each. An utterance is a harmonic
tone at the speaker's pitch plus a 4-7 kHz noise band: the overall level
encodes arousal and the share of energy in the noise band encodes valence,
so :mod:`sertest.demo_model` can recover both from the audio.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import scipy.signal

from .perturb import AudioBuffer, write_wav

RATE_HZ = 16000
DURATION_S = 0.4
SPEAKERS = (
    # id, sex, language, mean F0 in Hz
    ("spk1", "female", "en", 210.0),
    ("spk2", "male", "de", 120.0),
    ("spk3", "female", "en", 170.0),
)
CLASS_CENTRES = {
    "anger": (0.8, 0.2),
    "happiness": (0.75, 0.8),
    "neutral": (0.45, 0.5),
    "sadness": (0.25, 0.25),
}
SAMPLES_PER_SPEAKER = 40
# level in dBFS (RMS) for arousal 0 and 1
LEVEL_RANGE_DB = (-36.0, -12.0)
NOISE_BAND_HZ = (4000.0, 7000.0)


def level_for_arousal(arousal: float) -> float:
    lo, hi = LEVEL_RANGE_DB
    return lo + (hi - lo) * arousal


def synth_utterance(f0: float, arousal: float, valence: float, rng: np.random.Generator) -> np.ndarray:
    """Harmonic tone plus band noise; level and band share set by the labels."""
    n = int(RATE_HZ * DURATION_S)
    t = np.arange(n) / RATE_HZ
    vibrato = 1 + 0.02 * np.sin(2 * np.pi * 5 * t + rng.uniform(0, 2 * np.pi))
    phase = 2 * np.pi * f0 * np.cumsum(vibrato) / RATE_HZ
    harmonics = [k for k in range(1, 40) if k * f0 < 3500]
    tone = sum(np.sin(k * phase + rng.uniform(0, 2 * np.pi)) / k for k in harmonics)
    tone /= np.sqrt(np.mean(tone**2))
    sos = scipy.signal.butter(4, NOISE_BAND_HZ, btype="bandpass", fs=RATE_HZ, output="sos")
    band = scipy.signal.sosfilt(sos, rng.standard_normal(n))
    band /= np.sqrt(np.mean(band**2))
    share = 0.05 + 0.5 * valence  # energy share of the noise band
    x = np.sqrt(1 - share) * tone + np.sqrt(share) * band
    envelope = np.minimum(1.0, np.minimum(t, t[-1] - t) / 0.02)
    x = x * envelope
    x *= 10 ** (level_for_arousal(arousal) / 20) / np.sqrt(np.mean(x**2))
    return x


def _clip01(x: float) -> float:
    return float(np.clip(x, 0.02, 0.98))


def make_mini_dataset(out_dir: str | Path, seed: int = 0) -> Path:
    """Write ``mini.jsonl`` and its audio into ``out_dir``; returns the manifest path."""
    out = Path(out_dir)
    (out / "audio").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    classes = sorted(CLASS_CENTRES)
    lines = [json.dumps({"manifest": {"name": "mini", "sample_rate_hz": RATE_HZ}})]
    for spk, sex, lang, f0 in SPEAKERS:
        for i in range(SAMPLES_PER_SPEAKER):
            category = classes[i % len(classes)]
            a0, v0 = CLASS_CENTRES[category]
            arousal = round(_clip01(a0 + rng.normal(0, 0.08)), 4)
            valence = round(_clip01(v0 + rng.normal(0, 0.08)), 4)
            f0_i = f0 * (1 + rng.normal(0, 0.03))
            sid = f"{spk}_{i:03d}"
            audio = synth_utterance(f0_i, arousal, valence, rng)
            write_wav(out / "audio" / f"{sid}.wav", AudioBuffer(audio, RATE_HZ), dtype="int16")
            record = {
                "id": sid,
                "audio_path": f"audio/{sid}.wav",
                "speaker": spk,
                "gold": {"arousal": arousal, "valence": valence, "categories": category},
                "attrs": {"sex": sex, "language": lang, "mean_f0_hz": round(f0_i, 2)},
            }
            lines.append(json.dumps(record, sort_keys=True))
    path = out / "mini.jsonl"
    path.write_text("\n".join(lines) + "\n")
    return path


def _write_pool(out: Path, name: str, signals: list[np.ndarray], rate: int = RATE_HZ) -> Path:
    folder = out / "resources" / name
    folder.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps({"manifest": {"name": name, "sample_rate_hz": rate}})]
    for i, x in enumerate(signals):
        rel = f"{name}/{name}_{i:02d}.wav"
        peak = float(np.max(np.abs(x))) or 1.0
        write_wav(out / "resources" / rel, AudioBuffer(0.5 * x / peak, rate), dtype="int16")
        lines.append(json.dumps({"audio_path": rel, "id": f"{name}_{i:02d}"}, sort_keys=True))
    path = out / "resources" / f"{name}.jsonl"
    path.write_text("\n".join(lines) + "\n")
    return path


def make_resource_pools(out_dir: str | Path, seed: int = 0) -> dict[str, Path]:
    """Small synthetic stand-ins for noise, speech, music and IR collections."""
    out = Path(out_dir)
    rng = np.random.default_rng([seed, 1])
    n = int(RATE_HZ * DURATION_S)
    pools: dict[str, list[np.ndarray]] = {}
    pools["musan-speech"] = [synth_utterance(rng.uniform(100, 250), rng.uniform(), rng.uniform(), rng) for _ in range(8)]
    brown = [np.cumsum(rng.standard_normal(2 * n)) for _ in range(3)]
    pools["musan-noise"] = [b - np.convolve(b, np.ones(400) / 400, mode="same") for b in brown]
    t = np.arange(2 * n) / RATE_HZ
    pools["musan-music"] = [sum(np.sin(2 * np.pi * f * t) for f in chord) for chord in ((220, 277, 330), (196, 247, 294))]

    def burst(length_s: float, centre_hz: float) -> np.ndarray:
        m = int(length_s * RATE_HZ)
        sos = scipy.signal.butter(2, [centre_hz / 2, centre_hz * 2], btype="bandpass", fs=RATE_HZ, output="sos")
        return scipy.signal.sosfilt(sos, rng.standard_normal(m)) * np.exp(-np.arange(m) / (0.05 * RATE_HZ))

    pools["cough"] = [burst(0.15, 800) for _ in range(3)]
    pools["sneeze"] = [burst(0.2, 2500) for _ in range(3)]

    def room_ir(rt60_s: float, direct: float = 1.0) -> np.ndarray:
        m = int(rt60_s * RATE_HZ)
        tail = rng.standard_normal(m) * np.exp(-6.9 * np.arange(m) / m)
        tail[0] = direct / 0.1
        return tail

    pools["mardy"] = [room_ir(0.3), room_ir(0.35)]
    pools["mardy-baseline"] = [room_ir(0.3, direct=3.0)]
    pools["air"] = [room_ir(0.5), room_ir(0.8)]
    pools["air-baseline"] = [room_ir(0.2)]
    return {name: _write_pool(out, name, sig) for name, sig in sorted(pools.items())}


def main(argv: list[str] | None = None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="Write the synthetic mini dataset and resource pools.")
    parser.add_argument("out_dir")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    print(make_mini_dataset(args.out_dir, args.seed))
    for path in make_resource_pools(args.out_dir, args.seed).values():
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
