"""Audio perturbations used by the robustness tests.

Every transformation takes an :class:`AudioBuffer` and returns a new one.
Randomized perturbations draw from a generator seeded by the caller, so a
fixed seed always reproduces the same output.
"""

from __future__ import annotations

import functools
import hashlib
import json
import math
import shlex
import subprocess
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import scipy.signal
from scipy.io import wavfile


class PerturbationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Mono samples (nominal full scale [-1, 1]) with a sample rate."""

    samples: np.ndarray
    rate_hz: int

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("AudioBuffer holds mono audio")
        if not np.all(np.isfinite(x)):
            raise ValueError("audio samples must be finite")
        if int(self.rate_hz) <= 0:
            raise ValueError("rate_hz must be > 0")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "rate_hz", int(self.rate_hz))

    def __len__(self) -> int:
        return len(self.samples)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AudioBuffer):
            return NotImplemented
        return self.rate_hz == other.rate_hz and np.array_equal(self.samples, other.samples)

    __hash__ = None

    def with_samples(self, samples) -> AudioBuffer:
        return AudioBuffer(samples, self.rate_hz)


def rms(x) -> float:
    x = x.samples if isinstance(x, AudioBuffer) else np.asarray(x, dtype=float)
    if len(x) == 0:
        return 0.0
    return float(np.sqrt(np.mean(np.square(x))))


def db_to_amplitude(db: float) -> float:
    return 10.0 ** (db / 20.0)


# --- I/O --------------------------------------------------------------------


def read_wav(path: str | Path) -> AudioBuffer:
    """Read a PCM (8/16/32-bit int) or float WAV file as mono float audio."""
    rate, data = wavfile.read(str(path))
    if data.dtype == np.int16:
        x = data / 32768.0
    elif data.dtype == np.int32:
        x = data / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    else:
        x = data.astype(np.float64)
    if x.ndim == 2:
        x = x.mean(axis=1)
    return AudioBuffer(x, rate)


def write_wav(path: str | Path, audio: AudioBuffer, dtype: str = "float32") -> None:
    """Write audio as a 32-bit float (default) or 16-bit PCM WAV file.

    Float output keeps values beyond full scale; 16-bit output clips.
    """
    if dtype == "float32":
        data = audio.samples.astype(np.float32)
    elif dtype == "int16":
        data = np.round(np.clip(audio.samples, -1.0, 32767 / 32768) * 32768).astype(np.int16)
    else:
        raise ValueError(f"unsupported wav dtype {dtype!r}")
    wavfile.write(str(path), audio.rate_hz, data)


# --- elementary transformations ---------------------------------------------


def resample_linear(signal: AudioBuffer, target_rate_hz: int) -> AudioBuffer:
    """Resample by linear interpolation; no anti-aliasing filter is applied."""
    if target_rate_hz <= 0:
        raise ValueError("target rate must be > 0")
    if target_rate_hz == signal.rate_hz:
        return AudioBuffer(signal.samples.copy(), signal.rate_hz)
    n_out = int(round(len(signal) * target_rate_hz / signal.rate_hz))
    positions = np.arange(n_out) * (signal.rate_hz / target_rate_hz)
    out = np.interp(positions, np.arange(len(signal)), signal.samples)
    return AudioBuffer(out, target_rate_hz)


def _fit_length(noise: np.ndarray, length: int) -> np.ndarray:
    """Loop or truncate ``noise`` to ``length`` samples."""
    if len(noise) == 0:
        raise PerturbationError("noise is empty")
    reps = int(math.ceil(length / len(noise)))
    return np.tile(noise, reps)[:length]


def mix_at_snr(
    signal: AudioBuffer,
    noise: AudioBuffer,
    snr_db: float,
    placement: str = "full",
    seed=None,
) -> AudioBuffer:
    """Add ``noise`` to ``signal`` at an RMS-based signal-to-noise ratio.

    With ``full`` placement the noise is looped or truncated to the signal
    length. With ``random_offset`` it is inserted once at a random start
    (truncated if longer than the signal). The SNR is always relative to
    the RMS of the whole signal and the RMS of the noise as inserted.
    """
    if len(noise) == 0:
        raise PerturbationError("noise is empty")
    if noise.rate_hz != signal.rate_hz:
        noise = resample_linear(noise, signal.rate_hz)
    s_rms = rms(signal)
    if s_rms == 0:
        raise PerturbationError("signal is silent, SNR undefined")
    n = len(signal)
    if placement == "full":
        event = _fit_length(noise.samples, n)
        start = 0
    elif placement == "random_offset":
        event = noise.samples[:n]
        rng = np.random.default_rng(seed)
        start = int(rng.integers(0, n - len(event) + 1))
    else:
        raise PerturbationError(f"unknown placement {placement!r}")
    n_rms = rms(event)
    if n_rms == 0:
        raise PerturbationError("noise is silent")
    gain = s_rms / (n_rms * db_to_amplitude(snr_db))
    out = signal.samples.copy()
    out[start:start + len(event)] += gain * event
    return AudioBuffer(out, signal.rate_hz)


def _shelf_coefficients(centre: float, step_db: float, rate_hz: int) -> tuple[np.ndarray, np.ndarray]:
    """First-order shelf of ``step_db`` centred (geometrically) on ``centre``.

    Bilinear transform of ``K (s + a) / (s + b)`` with pre-warped corners.
    Returns numerator and denominator ``(b0, b1), (1, a1)``.
    """
    half = math.sqrt(db_to_amplitude(abs(step_db)))
    lower, upper = centre / half, min(centre * half, 0.499 * rate_hz)
    w_lo = 2 * rate_hz * math.tan(math.pi * lower / rate_hz)
    w_hi = 2 * rate_hz * math.tan(math.pi * upper / rate_hz)
    zero, pole = (w_lo, w_hi) if step_db >= 0 else (w_hi, w_lo)
    c = 2.0 * rate_hz
    k = pole / zero
    num = k * np.array([c + zero, zero - c]) / (c + pole)
    den = np.array([1.0, (pole - c) / (c + pole)])
    return num, den


def _section_db(centre: float, step_db: float, rate_hz: int, z1: np.ndarray) -> np.ndarray:
    num, den = _shelf_coefficients(centre, step_db, rate_hz)
    h = (num[0] + num[1] * z1) / (den[0] + den[1] * z1)
    return 20 * np.log10(np.abs(h))


@functools.lru_cache(maxsize=64)
def _shelf_cascade_sos(slope_db_per_octave: float, rate_hz: int, f_lo: float, f_hi: float, step_oct: float = 0.5) -> np.ndarray:
    """Cascade of first-order shelves giving a constant slope in [f_lo, f_hi].

    Sections sit half an octave apart, each nominally contributing
    ``slope * step_oct`` dB. The per-section steps are then refined by a few
    damped Gauss-Newton iterations, which removes the error the bilinear transform
    builds up towards Nyquist.
    """
    if abs(slope_db_per_octave) > 6.0:
        raise PerturbationError("first-order shelves support at most 6 dB/octave")
    f_hi = min(f_hi, 0.45 * rate_hz)
    n_sections = max(int(round(math.log2(f_hi / f_lo) / step_oct)), 1)
    centres = f_lo * 2 ** ((np.arange(n_sections) + 0.5) * step_oct)
    grid = np.geomspace(f_lo * 2 ** step_oct, f_hi, 8 * n_sections)
    z1 = np.exp(-2j * np.pi * grid / rate_hz)
    target = slope_db_per_octave * np.log2(grid / grid[0])
    limit = 6.02 * step_oct
    steps = np.full(n_sections, slope_db_per_octave * step_oct)
    delta = 1e-4
    for _ in range(30):
        parts = np.array([_section_db(c, g, rate_hz, z1) for c, g in zip(centres, steps)])
        err = parts.sum(axis=0) - target
        err -= err.mean()
        jac = np.array([
            (_section_db(c, g + delta, rate_hz, z1) - part) / delta
            for c, g, part in zip(centres, steps, parts)
        ]).T
        jac -= jac.mean(axis=0)
        normal = jac.T @ jac
        damping = 1e-3 * np.trace(normal) / n_sections
        update = np.linalg.solve(normal + damping * np.eye(n_sections), -jac.T @ err)
        steps = np.clip(steps + update, -limit, limit)
        if np.max(np.abs(update)) < 1e-7:
            break
    sos = np.zeros((n_sections, 6))
    for i, (c, g) in enumerate(zip(centres, steps)):
        num, den = _shelf_coefficients(c, g, rate_hz)
        sos[i, :2] = num
        sos[i, 3:5] = den
    sos.setflags(write=False)
    return sos


def _gain_at(sos: np.ndarray, freq_hz: float, rate_hz: int) -> float:
    _, h = scipy.signal.sosfreqz(sos, worN=[freq_hz], fs=rate_hz)
    return float(np.abs(h[0]))


def synthesize_noise(kind: str, length: int, rate_hz: int, params: Mapping | None = None, seed=None) -> AudioBuffer:
    """White (unit variance Gaussian), pink (1/f) or tone (unit amplitude) signal."""
    params = params or {}
    if length < 0:
        raise ValueError("length must be >= 0")
    rng = np.random.default_rng(seed)
    if kind == "white":
        return AudioBuffer(rng.standard_normal(length), rate_hz)
    if kind == "pink":
        # run-in so the filter state has settled at the first output sample
        warmup = min(rate_hz, 16384)
        white = rng.standard_normal(length + warmup)
        sos = _shelf_cascade_sos(-10 * math.log10(2), rate_hz, 10.0, 0.45 * rate_hz).copy()
        pink = scipy.signal.sosfilt(sos, white)[warmup:]
        level = rms(pink)
        return AudioBuffer(pink / level if level > 0 else pink, rate_hz)
    if kind == "tone":
        freq = float(params["freq_hz"])
        t = np.arange(length) / rate_hz
        return AudioBuffer(np.sin(2 * np.pi * freq * t), rate_hz)
    raise PerturbationError(f"unknown noise kind {kind!r}")


def babble(speech_pool: Sequence[AudioBuffer], count_range=(4, 7), length: int = 0, seed=None) -> AudioBuffer:
    """Sum of 4-7 randomly chosen speech recordings, normalized to RMS 1.

    Each recording is brought to unit RMS before summing so that no single
    talker dominates.
    """
    lo, hi = count_range
    if len(speech_pool) < hi:
        raise PerturbationError(f"babble needs a pool of at least {hi} recordings, got {len(speech_pool)}")
    if length <= 0:
        raise PerturbationError("babble length must be > 0")
    rng = np.random.default_rng(seed)
    k = int(rng.integers(lo, hi + 1))
    chosen = rng.choice(len(speech_pool), size=k, replace=False)
    rate = speech_pool[int(chosen[0])].rate_hz
    mix = np.zeros(length)
    for idx in chosen:
        speech = speech_pool[int(idx)]
        if speech.rate_hz != rate:
            speech = resample_linear(speech, rate)
        part = _fit_length(speech.samples, length)
        level = rms(part)
        if level > 0:
            mix += part / level
    level = rms(mix)
    if level == 0:
        raise PerturbationError("babble pool is silent")
    return AudioBuffer(mix / level, rate)


EDIT_MODES = ("append_zeros", "prepend_zeros", "crop_start", "crop_end")


def edit_signal(signal: AudioBuffer, mode: str, n: int) -> AudioBuffer:
    x = signal.samples
    if n < 0:
        raise PerturbationError("n must be >= 0")
    if mode == "append_zeros":
        out = np.concatenate([x, np.zeros(n)])
    elif mode == "prepend_zeros":
        out = np.concatenate([np.zeros(n), x])
    elif mode in ("crop_start", "crop_end"):
        if n >= len(x):
            raise PerturbationError(f"cannot crop {n} samples from a signal of length {len(x)}")
        out = x[n:] if mode == "crop_start" else x[: len(x) - n]
    else:
        raise PerturbationError(f"unknown edit mode {mode!r}")
    return AudioBuffer(out, signal.rate_hz)


def clip_fraction(signal: AudioBuffer, p: float) -> AudioBuffer:
    """Hard-clip the loudest fraction ``p`` of samples.

    The clipping level is the ``1 - p`` quantile of the absolute sample
    values; samples strictly above it are set to plus/minus that level.
    """
    if not 0.0 <= p < 1.0:
        raise PerturbationError("clip fraction must be in [0, 1)")
    x = signal.samples
    if p == 0 or len(x) == 0:
        return AudioBuffer(x.copy(), signal.rate_hz)
    level = float(np.quantile(np.abs(x), 1.0 - p))
    return AudioBuffer(np.clip(x, -level, level), signal.rate_hz)


def apply_gain_db(signal: AudioBuffer, gain_db: float) -> AudioBuffer:
    """Scale by ``gain_db``; no clipping, so values may exceed full scale."""
    if gain_db == 0:
        return AudioBuffer(signal.samples.copy(), signal.rate_hz)
    return AudioBuffer(signal.samples * db_to_amplitude(gain_db), signal.rate_hz)


def first_order_filter(signal: AudioBuffer, kind: str, cutoff_hz: float) -> AudioBuffer:
    """First-order Butterworth low- or highpass (bilinear, pre-warped)."""
    if kind not in ("lowpass", "highpass"):
        raise PerturbationError(f"unknown filter kind {kind!r}")
    if not 0 < cutoff_hz < signal.rate_hz / 2:
        raise PerturbationError(f"cutoff {cutoff_hz} Hz outside (0, {signal.rate_hz / 2}) Hz")
    sos = scipy.signal.butter(1, cutoff_hz, btype=kind, fs=signal.rate_hz, output="sos")
    return AudioBuffer(scipy.signal.sosfilt(sos, signal.samples), signal.rate_hz)


TILT_PIVOT_HZ = 1000.0


def spectral_tilt(signal: AudioBuffer, slope_db_per_octave: float) -> AudioBuffer:
    """Emphasize (positive slope) or attenuate high frequencies linearly in dB per octave.

    The overall RMS level is restored afterwards unless that would push
    the peak above full scale, in which case the output is peak-normalized
    to 1 instead. Slopes up to about 4.5 dB/octave are accurate to within
    0.5 dB over 250 Hz to 4 kHz; steeper slopes fall progressively short.
    """
    if slope_db_per_octave == 0:
        return AudioBuffer(signal.samples.copy(), signal.rate_hz)
    sos = _shelf_cascade_sos(slope_db_per_octave, signal.rate_hz, 50.0, 16000.0)
    sos = sos.copy()
    sos[0, :3] /= _gain_at(sos, TILT_PIVOT_HZ, signal.rate_hz)
    y = scipy.signal.sosfilt(sos, signal.samples)
    level_in, level_out = rms(signal), rms(y)
    if level_out == 0:
        return AudioBuffer(y, signal.rate_hz)
    y = y * (level_in / level_out)
    peak = float(np.max(np.abs(y)))
    if peak > 1.0 and np.max(np.abs(signal.samples)) <= 1.0:
        y = y / peak
    return AudioBuffer(y, signal.rate_hz)


def convolve_ir(signal: AudioBuffer, impulse_response: AudioBuffer) -> AudioBuffer:
    """Convolve with an impulse response, keep the input length and RMS."""
    if impulse_response.rate_hz != signal.rate_hz:
        raise PerturbationError(
            f"impulse response rate {impulse_response.rate_hz} Hz differs from signal rate {signal.rate_hz} Hz"
        )
    if len(impulse_response) == 0:
        raise PerturbationError("impulse response is empty")
    y = scipy.signal.fftconvolve(signal.samples, impulse_response.samples)[: len(signal)]
    level_out = rms(y)
    if level_out > 0:
        y = y * (rms(signal) / level_out)
    return AudioBuffer(y, signal.rate_hz)


def compressor(
    signal: AudioBuffer,
    threshold_dbfs: float = -20.0,
    ratio: float = 4.0,
    attack_ms: float = 5.0,
    release_ms: float = 50.0,
) -> AudioBuffer:
    """Feed-forward compressor with an RMS level detector.

    The level is the mean square smoothed over ``release_ms``; above
    ``threshold_dbfs`` (RMS re. full scale) the static curve reduces level
    growth by ``ratio``. The gain reduction follows with ``attack_ms`` when
    increasing and ``release_ms`` when recovering.
    """
    x = signal.samples
    if len(x) == 0:
        return AudioBuffer(x.copy(), signal.rate_hz)
    fs = signal.rate_hz
    a_det = math.exp(-1.0 / (release_ms * 1e-3 * fs))
    power = scipy.signal.lfilter([1 - a_det], [1, -a_det], np.square(x))
    level_db = 10 * np.log10(np.maximum(power, 1e-20))
    over = np.maximum(level_db - threshold_dbfs, 0.0)
    target = -over * (1 - 1 / ratio)
    if not np.any(target < 0):
        return AudioBuffer(x.copy(), fs)
    a_att = math.exp(-1.0 / (attack_ms * 1e-3 * fs))
    a_rel = math.exp(-1.0 / (release_ms * 1e-3 * fs))
    gain_db = np.empty_like(target)
    g = 0.0
    for i, t in enumerate(target.tolist()):
        a = a_att if t < g else a_rel
        g = a * g + (1 - a) * t
        gain_db[i] = g
    return AudioBuffer(x * 10 ** (gain_db / 20), fs)


NARROWBAND_RATE_HZ = 8000
NARROWBAND_BAND_HZ = (300.0, 3400.0)


def narrowband_codec(signal: AudioBuffer) -> AudioBuffer:
    """Built-in stand-in for a narrowband speech codec.

    Band-limits to 300-3400 Hz, resamples to 8 kHz and back.
    """
    fs = signal.rate_hz
    lo, hi = NARROWBAND_BAND_HZ
    hi = min(hi, 0.45 * fs)
    sos = scipy.signal.butter(8, [lo, hi], btype="bandpass", fs=fs, output="sos")
    band = AudioBuffer(scipy.signal.sosfilt(sos, signal.samples), fs)
    narrow = resample_linear(band, NARROWBAND_RATE_HZ)
    back = resample_linear(narrow, fs)
    # interpolation images above 4 kHz are removed again
    y = scipy.signal.sosfilt(sos, back.samples)
    y = _fit_length(y, len(signal)) if len(y) != len(signal) else y
    return AudioBuffer(y, fs)


def external_codec(signal: AudioBuffer, command: str, timeout: float | None = 60.0) -> AudioBuffer:
    """Run an external codec command on a temporary WAV file.

    ``command`` is a template with ``{in}`` and ``{out}`` placeholders, e.g.
    ``"sox {in} -r 8000 -e amr-nb {out}"``. The result is resampled back to
    the input rate and cut or zero-padded to the input length.
    """
    with tempfile.TemporaryDirectory() as tmp:
        src = Path(tmp) / "in.wav"
        dst = Path(tmp) / "out.wav"
        write_wav(src, signal)
        argv = [arg.replace("{in}", str(src)).replace("{out}", str(dst)) for arg in shlex.split(command)]
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
        if proc.returncode != 0:
            raise PerturbationError(f"codec command exited with {proc.returncode}: {proc.stderr.strip()[:500]}")
        out = read_wav(dst)
    out = resample_linear(out, signal.rate_hz)
    y = out.samples[: len(signal)]
    if len(y) < len(signal):
        y = np.concatenate([y, np.zeros(len(signal) - len(y))])
    return AudioBuffer(y, signal.rate_hz)


def phone_degradation(
    signal: AudioBuffer,
    codec: str | None = None,
    noise_snr_db: float = 30.0,
    noise_highpass_hz: float = 3000.0,
    seed=None,
    compressor_params: Mapping[str, float] | None = None,
) -> AudioBuffer:
    """Compressor, narrowband codec, then high-passed pink noise.

    ``compressor_params`` overrides keyword arguments of :func:`compressor`.
    """
    compressed = compressor(signal, **dict(compressor_params or {}))
    coded = narrowband_codec(compressed) if codec is None else external_codec(compressed, codec)
    noise = synthesize_noise("pink", len(signal), signal.rate_hz, seed=seed)
    cutoff = min(noise_highpass_hz, 0.45 * signal.rate_hz)
    sos = scipy.signal.butter(4, cutoff, btype="highpass", fs=signal.rate_hz, output="sos")
    noise = noise.with_samples(scipy.signal.sosfilt(sos, noise.samples))
    if rms(coded) == 0:
        return coded
    return mix_at_snr(coded, noise, noise_snr_db)


# --- perturbation specs -----------------------------------------------------

KINDS = (
    "identity",
    "gain",
    "white_noise",
    "additive_tone",
    "babble",
    "noise_file",
    "append_zeros",
    "prepend_zeros",
    "crop_start",
    "crop_end",
    "clip",
    "lowpass",
    "highpass",
    "spectral_tilt",
    "phone",
    "impulse_response",
)

RESOURCE_KINDS = ("babble", "noise_file", "impulse_response")


@dataclass(frozen=True)
class PerturbationSpec:
    """A named perturbation recipe.

    List-valued parameters (e.g. ``{"gain_db": [-2, -1, 1, 2]}``) are
    choices; one value is drawn per file.
    """

    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PerturbationError(f"unknown perturbation {self.kind!r} (valid: {', '.join(KINDS)})")
        if self.kind in RESOURCE_KINDS and "pool" not in self.params:
            raise PerturbationError(f"{self.kind} needs a 'pool' parameter naming a resource")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "seed": self.seed}

    def fingerprint(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    @property
    def resource(self) -> str | None:
        return self.params.get("pool")


def _choose(value, rng: np.random.Generator):
    if isinstance(value, (list, tuple)):
        return value[int(rng.integers(len(value)))]
    return value


def sample_rng(seed: int, key: str) -> np.random.Generator:
    """Generator for one file, independent of processing order."""
    return np.random.default_rng([int(seed), zlib.crc32(key.encode())])


def apply_perturbation(
    signal: AudioBuffer,
    spec: PerturbationSpec,
    key: str = "",
    resources: Mapping[str, Sequence[AudioBuffer]] | None = None,
) -> AudioBuffer:
    """Apply ``spec`` to one file; ``key`` (the sample id) seeds its random choices."""
    rng = sample_rng(spec.seed, key)
    p = spec.params
    kind = spec.kind
    if kind == "identity":
        return AudioBuffer(signal.samples.copy(), signal.rate_hz)
    if kind == "gain":
        return apply_gain_db(signal, float(_choose(p.get("gain_db", 0.0), rng)))
    if kind == "white_noise":
        snr = float(_choose(p["snr_db"], rng))
        noise = synthesize_noise("white", len(signal), signal.rate_hz, seed=rng)
        return mix_at_snr(signal, noise, snr)
    if kind == "additive_tone":
        snr = float(_choose(p["snr_db"], rng))
        lo, hi = p.get("freq_range_hz", (5000.0, 7000.0))
        freq = float(rng.uniform(lo, hi))
        tone = synthesize_noise("tone", len(signal), signal.rate_hz, {"freq_hz": freq})
        return mix_at_snr(signal, tone, snr)
    if kind in EDIT_MODES:
        return edit_signal(signal, kind, int(_choose(p["n"], rng)))
    if kind == "clip":
        return clip_fraction(signal, float(_choose(p["fraction"], rng)))
    if kind in ("lowpass", "highpass"):
        return first_order_filter(signal, kind, float(_choose(p["cutoff_hz"], rng)))
    if kind == "spectral_tilt":
        return spectral_tilt(signal, float(_choose(p["slope_db_per_octave"], rng)))
    if kind == "phone":
        return phone_degradation(
            signal,
            codec=p.get("codec_command"),
            noise_snr_db=float(p.get("noise_snr_db", 30.0)),
            noise_highpass_hz=float(p.get("noise_highpass_hz", 3000.0)),
            seed=rng,
            compressor_params=p.get("compressor"),
        )
    pool = (resources or {}).get(p["pool"])
    if not pool:
        raise PerturbationError(f"resource pool {p['pool']!r} is not available")
    if kind == "babble":
        lo, hi = p.get("count_range", (4, 7))
        noise = babble(pool, (lo, hi), len(signal), seed=rng)
        return mix_at_snr(signal, noise, float(_choose(p.get("snr_db", 20.0), rng)))
    if kind == "noise_file":
        noise = pool[int(rng.integers(len(pool)))]
        placement = p.get("placement", "full")
        return mix_at_snr(signal, noise, float(_choose(p.get("snr_db", 20.0), rng)), placement, seed=rng)
    if kind == "impulse_response":
        ir = pool[int(rng.integers(len(pool)))]
        if ir.rate_hz != signal.rate_hz:
            ir = resample_linear(ir, signal.rate_hz)
        return convolve_ir(signal, ir)
    raise PerturbationError(f"unhandled perturbation {kind!r}")
