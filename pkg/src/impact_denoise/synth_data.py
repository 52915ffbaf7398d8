"""Seeded generator of paired reference/noisy impact traces.

Reference traces are sums of raised-cosine pulses coupled across axes through
random rotations. The noisy trace corrupts the reference with a slow gain
drift, onset-triggered damped-sinusoid ringing, white noise, an integer time
shift, and a slow baseline drift. Signal and noise draws come from separate
seeded streams, so noise ablations keep the references fixed.

The noise model is a synthetic assumption, not a measured sensor
characterization; outputs derived from it should say so.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core_types import (
    CANONICAL_SAMPLE_RATE_HZ,
    ImpactDataset,
    ImpactRecord,
    KinematicsTrace,
    partition,
)

NOISE_MODEL_NOTE = (
    "synthetic noise model (gain drift, onset ringing, white noise, time shift, "
    "baseline drift); an assumption, not a measured sensor characterization"
)

_LOCATIONS = ("facemask", "front", "oblique", "side", "back")


@dataclass(frozen=True)
class SynthConfig:
    """Generator parameters; all ranges are inclusive (low, high) draws."""

    n_impacts: int = 163
    trace_len: int = 200
    sample_rate_hz: float = CANONICAL_SAMPLE_RATE_HZ
    pulse_count_range: tuple = (1, 3)
    lin_amp_range_g: tuple = (10.0, 100.0)
    ang_amp_range_rads: tuple = (5.0, 40.0)
    pulse_duration_range_ms: tuple = (8.0, 40.0)
    gain_drift_amp: float = 0.15
    ringing_freq_range_hz: tuple = (150.0, 400.0)
    ringing_amp_frac: float = 0.3
    ringing_decay_range_ms: tuple = (5.0, 20.0)
    white_noise_sigma: float = 0.12
    time_shift_range: tuple = (0, 5)
    baseline_drift_amp: float = 0.08
    rng_seed: int = 7

    def __post_init__(self):
        if self.n_impacts < 3:
            raise ValueError("need at least 3 impacts to build a dataset")
        if self.trace_len < 100:
            raise ValueError(f"trace_len must be >= 100, got {self.trace_len}")
        ranges = (
            self.pulse_count_range,
            self.lin_amp_range_g,
            self.ang_amp_range_rads,
            self.pulse_duration_range_ms,
            self.ringing_freq_range_hz,
            self.ringing_decay_range_ms,
            self.time_shift_range,
        )
        for lo, hi in ranges:
            if lo < 0 or hi < lo:
                raise ValueError(f"bad range ({lo}, {hi})")
        for amp in (
            self.gain_drift_amp,
            self.ringing_amp_frac,
            self.white_noise_sigma,
            self.baseline_drift_amp,
        ):
            if amp < 0:
                raise ValueError("noise amplitudes must be non-negative")


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _raised_cosine(t: np.ndarray, start: float, duration: float) -> np.ndarray:
    phase = (t - start) / duration
    inside = (phase >= 0.0) & (phase <= 1.0)
    pulse = np.zeros_like(t)
    pulse[inside] = 0.5 * (1.0 - np.cos(2.0 * np.pi * phase[inside]))
    return pulse


def _reference_trace(cfg: SynthConfig, rng: np.random.Generator):
    """Reference samples plus the pulse inventory needed by the noise model."""
    n = cfg.trace_len
    t = np.arange(n) / cfg.sample_rate_hz
    total = n / cfg.sample_rate_hz
    samples = np.zeros((n, 6))
    pulses = []
    count = int(rng.integers(cfg.pulse_count_range[0], cfg.pulse_count_range[1] + 1))
    for _ in range(count):
        duration = rng.uniform(*cfg.pulse_duration_range_ms) / 1000.0
        margin = 0.005
        latest = max(total - duration - margin, margin)
        start = rng.uniform(margin, latest)
        lin_amp = rng.uniform(*cfg.lin_amp_range_g)
        ang_amp = rng.uniform(*cfg.ang_amp_range_rads)
        rot = _random_rotation(rng)
        lin_dir = rot @ np.array([1.0, 0.0, 0.0])
        ang_dir = rot @ np.array([0.0, 1.0, 0.0])
        shape = _raised_cosine(t, start, duration)
        samples[:, 0:3] += lin_amp * np.outer(shape, lin_dir)
        samples[:, 3:6] += ang_amp * np.outer(shape, ang_dir)
        pulses.append(
            {
                "start": start,
                "lin_amps": lin_amp * lin_dir,
                "ang_amps": ang_amp * ang_dir,
            }
        )
    return samples, pulses


def _noisy_trace(cfg: SynthConfig, reference: np.ndarray, pulses, rng: np.random.Generator):
    n = reference.shape[0]
    t = np.arange(n) / cfg.sample_rate_hz

    gain_amp = rng.uniform(0.0, cfg.gain_drift_amp)
    gain_freq = rng.uniform(2.0, 10.0)
    gain_phase = rng.uniform(0.0, 2.0 * np.pi)
    drift = gain_amp * np.sin(2.0 * np.pi * gain_freq * t + gain_phase)
    noisy = (1.0 + drift)[:, None] * reference

    ring_freq = rng.uniform(*cfg.ringing_freq_range_hz)
    ring_frac = rng.uniform(0.0, cfg.ringing_amp_frac)
    ring_decay = rng.uniform(*cfg.ringing_decay_range_ms) / 1000.0
    for pulse in pulses:
        rel = t - pulse["start"]
        active = rel >= 0.0
        envelope = np.zeros(n)
        envelope[active] = np.exp(-rel[active] / ring_decay) * np.sin(
            2.0 * np.pi * ring_freq * rel[active]
        )
        amps = np.concatenate([pulse["lin_amps"], pulse["ang_amps"]])
        noisy += ring_frac * np.outer(envelope, np.abs(amps))

    channel_std = np.std(reference, axis=0)
    noisy += rng.normal(size=(n, 6)) * (cfg.white_noise_sigma * channel_std)[None, :]

    base_amp = rng.uniform(0.0, cfg.baseline_drift_amp)
    base_freq = rng.uniform(1.0, 5.0)
    base_phase = rng.uniform(0.0, 2.0 * np.pi)
    baseline = base_amp * np.sin(2.0 * np.pi * base_freq * t + base_phase)
    noisy += np.outer(baseline, channel_std)

    shift = int(rng.integers(cfg.time_shift_range[0], cfg.time_shift_range[1] + 1))
    if shift > 0:
        shifted = np.zeros_like(noisy)
        shifted[shift:] = noisy[: n - shift]
        noisy = shifted
    return noisy, shift


def generate(cfg: SynthConfig) -> ImpactDataset:
    """Deterministically generate a paired dataset under the config seed."""
    master = np.random.SeedSequence(cfg.rng_seed)
    signal_ss, noise_ss = master.spawn(2)
    signal_streams = signal_ss.spawn(cfg.n_impacts)
    noise_streams = noise_ss.spawn(cfg.n_impacts)

    records = []
    for i in range(cfg.n_impacts):
        sig_rng = np.random.default_rng(signal_streams[i])
        noise_rng = np.random.default_rng(noise_streams[i])
        reference, pulses = _reference_trace(cfg, sig_rng)
        noisy, shift = _noisy_trace(cfg, reference, pulses, noise_rng)
        location = _LOCATIONS[int(sig_rng.integers(len(_LOCATIONS)))]
        speed = sig_rng.uniform(3.6, 9.3)
        record = ImpactRecord(
            impact_id=f"imp_{i:03d}",
            noisy=KinematicsTrace(noisy, cfg.sample_rate_hz),
            reference=KinematicsTrace(reference, cfg.sample_rate_hz),
            metadata={
                "location": location,
                "impact_speed_mps": f"{speed:.2f}",
                "injected_shift_samples": str(shift),
            },
        )
        records.append(record)
    return partition(records, cfg.rng_seed)
