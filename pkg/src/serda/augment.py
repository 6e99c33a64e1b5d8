"""Seedable waveform perturbations and the fixed augmentation pipelines.

Seven transforms (gain, polarity inversion, circular shift, time inversion,
band-stop notch, peak normalization, colored noise) are composed into five
fixed pipelines.  Applying a pipeline yields the perturbed waveform plus the
pipeline index, which doubles as the class label for the auxiliary
augmentation-classification task.

All transforms preserve length and sample rate.  Stochastic parameters are
drawn from a generator keyed by (run seed, origin index, view slot), so the
result for a given sample never depends on batch composition or iteration
order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, DataError, DegenerateInputError
from .rng import derive_rng

NUM_PIPELINES = 5


@dataclass(frozen=True)
class Waveform:
    """Mono audio buffer: float64 samples at a fixed sample rate."""

    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size < 1:
            raise DataError(f"waveform must be 1-D and non-empty, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise DataError("waveform contains non-finite samples")

    def __len__(self) -> int:
        return self.samples.size

    def replace(self, samples: np.ndarray) -> "Waveform":
        return Waveform(samples, self.sample_rate)


@dataclass(frozen=True)
class AugmentedPair:
    """Two independently augmented views of the same origin sample."""

    view_a: Waveform
    view_b: Waveform
    pipeline_label_a: int
    pipeline_label_b: int
    origin_index: int


@dataclass(frozen=True)
class AugmentConfig:
    """Parameter ranges sampled by the stochastic transforms."""

    gain_db_range: tuple[float, float] = (-12.0, 12.0)
    shift_range: tuple[float, float] = (-0.5, 0.5)
    notch_center_hz_range: tuple[float, float] = (200.0, 4000.0)  # log-uniform
    notch_bandwidth_frac_range: tuple[float, float] = (0.10, 0.25)  # fraction of center
    snr_db_range: tuple[float, float] = (3.0, 30.0)
    noise_exponent_range: tuple[float, float] = (-2.0, 2.0)


# ---------------------------------------------------------------------------
# the seven transforms


def gain(w: Waveform, gain_db: float, db_range: tuple[float, float] = (-12.0, 12.0)) -> Waveform:
    """Scale samples by 10^(gain_db/20).  No clipping is applied."""
    if not (db_range[0] <= gain_db <= db_range[1]):
        raise ConfigError(f"gain_db {gain_db} outside configured range {db_range}")
    return w.replace(w.samples * 10.0 ** (gain_db / 20.0))


def polarity_inversion(w: Waveform) -> Waveform:
    return w.replace(-w.samples)


def shift(w: Waveform, fraction: float) -> Waveform:
    """Circular shift by round(fraction * length) samples."""
    if not (-0.5 <= fraction <= 0.5):
        raise ConfigError(f"shift fraction {fraction} outside [-0.5, 0.5]")
    return w.replace(np.roll(w.samples, round(fraction * len(w))))


def time_inversion(w: Waveform) -> Waveform:
    return w.replace(w.samples[::-1].copy())


def band_stop_filter(w: Waveform, center_hz: float, bandwidth_hz: float) -> Waveform:
    """Second-order IIR notch (audio-cookbook biquad, Q = center/bandwidth)."""
    nyquist = w.sample_rate / 2.0
    if not (0.0 < center_hz - bandwidth_hz / 2.0 and center_hz + bandwidth_hz / 2.0 < nyquist):
        raise ConfigError(
            f"stopband [{center_hz - bandwidth_hz / 2:.1f}, {center_hz + bandwidth_hz / 2:.1f}] Hz "
            f"outside (0, {nyquist:.1f}) Hz"
        )
    q = center_hz / bandwidth_hz
    w0 = 2.0 * math.pi * center_hz / w.sample_rate
    alpha = math.sin(w0) / (2.0 * q)
    cos_w0 = math.cos(w0)
    b = np.array([1.0, -2.0 * cos_w0, 1.0])
    a = np.array([1.0 + alpha, -2.0 * cos_w0, 1.0 - alpha])
    return w.replace(lfilter(b / a[0], a / a[0], w.samples))


def peak_normalization(w: Waveform) -> Waveform:
    """Divide by max(|samples|); an all-zero waveform is returned unchanged."""
    peak = np.max(np.abs(w.samples))
    if peak == 0.0:
        return w
    return w.replace(w.samples / peak)


def add_colored_noise(
    w: Waveform,
    snr_db: float,
    spectral_exponent: float,
    rng: np.random.Generator,
    snr_range: tuple[float, float] = (3.0, 30.0),
    exponent_range: tuple[float, float] = (-2.0, 2.0),
) -> Waveform:
    """Add noise with power spectrum ~ 1/f^exponent at an exact SNR in dB."""
    if not (snr_range[0] <= snr_db <= snr_range[1]):
        raise ConfigError(f"snr_db {snr_db} outside configured range {snr_range}")
    if not (exponent_range[0] <= spectral_exponent <= exponent_range[1]):
        raise ConfigError(
            f"spectral exponent {spectral_exponent} outside configured range {exponent_range}"
        )
    signal_power = float(np.mean(w.samples**2))
    if signal_power == 0.0:
        raise DegenerateInputError("add_colored_noise: zero-power input signal")
    n = len(w)
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / w.sample_rate)
    shaping = np.zeros_like(freqs)
    shaping[1:] = freqs[1:] ** (-spectral_exponent / 2.0)  # DC removed
    noise = np.fft.irfft(spectrum * shaping, n=n)
    noise_power = float(np.mean(noise**2))
    if noise_power == 0.0:
        raise DegenerateInputError("add_colored_noise: generated noise has zero power")
    target_power = signal_power / 10.0 ** (snr_db / 10.0)
    noise *= math.sqrt(target_power / noise_power)
    return w.replace(w.samples + noise)


# ---------------------------------------------------------------------------
# pipelines

# Fixed compositions; each has one dominant perturbation so the pipeline
# label stays learnable.  Stochastic parameters are drawn from `rng` in the
# order the transforms appear.


def _pipeline_gain_norm(w, rng, cfg):
    out = gain(w, rng.uniform(*cfg.gain_db_range), cfg.gain_db_range)
    return peak_normalization(out)


def _pipeline_polarity_shift(w, rng, cfg):
    out = polarity_inversion(w)
    return shift(out, rng.uniform(*cfg.shift_range))


def _pipeline_reverse_gain(w, rng, cfg):
    out = time_inversion(w)
    return gain(out, rng.uniform(*cfg.gain_db_range), cfg.gain_db_range)


def _pipeline_notch_norm(w, rng, cfg):
    lo, hi = cfg.notch_center_hz_range
    center = math.exp(rng.uniform(math.log(lo), math.log(hi)))
    bandwidth = center * rng.uniform(*cfg.notch_bandwidth_frac_range)
    return peak_normalization(band_stop_filter(w, center, bandwidth))


def _pipeline_noise_norm(w, rng, cfg):
    snr = rng.uniform(*cfg.snr_db_range)
    exponent = rng.uniform(*cfg.noise_exponent_range)
    out = add_colored_noise(w, snr, exponent, rng, cfg.snr_db_range, cfg.noise_exponent_range)
    return peak_normalization(out)


_PIPELINES = (
    _pipeline_gain_norm,
    _pipeline_polarity_shift,
    _pipeline_reverse_gain,
    _pipeline_notch_norm,
    _pipeline_noise_norm,
)

PIPELINE_NAMES = (
    "gain+peaknorm",
    "polarity+shift",
    "reverse+gain",
    "notch+peaknorm",
    "noise+peaknorm",
)


def apply_pipeline(
    w: Waveform,
    pipeline_id: int,
    rng: np.random.Generator,
    cfg: AugmentConfig | None = None,
) -> tuple[Waveform, int]:
    """Apply one fixed pipeline; returns (augmented waveform, pipeline label)."""
    if not (0 <= pipeline_id < NUM_PIPELINES):
        raise ConfigError(f"pipeline_id {pipeline_id} not in [0, {NUM_PIPELINES - 1}]")
    cfg = cfg or AugmentConfig()
    return _PIPELINES[pipeline_id](w, rng, cfg), pipeline_id


def view_rng(run_seed: int, origin_index: int, view_slot: int) -> np.random.Generator:
    """Generator for one augmented view, keyed so order never matters."""
    return derive_rng(run_seed, 0xA06, origin_index, view_slot)


def make_pair(
    w: Waveform,
    origin_index: int,
    run_seed: int,
    cfg: AugmentConfig | None = None,
) -> AugmentedPair:
    """Draw two pipelines uniformly and independently; apply each to ``w``."""
    views = []
    labels = []
    for slot in (0, 1):
        rng = view_rng(run_seed, origin_index, slot)
        pipeline_id = int(rng.integers(NUM_PIPELINES))
        view, label = apply_pipeline(w, pipeline_id, rng, cfg)
        views.append(view)
        labels.append(label)
    return AugmentedPair(views[0], views[1], labels[0], labels[1], origin_index)
