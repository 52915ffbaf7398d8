"""Deterministic signal preprocessing.

Butterworth low-pass design, zero-phase filtering, cross-correlation
alignment, numerical differentiation/integration, and sliding-window
augmentation of paired traces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as _signal

from .core_types import (
    ComponentId,
    ImpactRecord,
    KinematicsTrace,
    TRAINABLE_COMPONENTS,
    magnitude_trace,
)

WINDOW_SAMPLES = 100
WINDOW_STRIDE = 5
PEAK_ANCHOR = 20


@dataclass(frozen=True)
class ButterworthFilter:
    """Digital low-pass Butterworth filter factored into second-order sections.

    ``sections`` is an (n_sections, 5) array of (b0, b1, b2, a1, a2) rows with
    a0 normalized to 1; ``gain`` is the overall cascade gain.
    """

    order: int
    cutoff_hz: float
    sample_rate_hz: float
    sections: np.ndarray
    gain: float

    def __post_init__(self):
        sections = np.asarray(self.sections, dtype=np.float64)
        if sections.ndim != 2 or sections.shape[1] != 5:
            raise ValueError(f"sections must have shape (n, 5), got {sections.shape}")
        for b0, b1, b2, a1, a2 in sections:
            poles = np.roots([1.0, a1, a2])
            if np.any(np.abs(poles) >= 1.0):
                raise ValueError("unstable section: pole on or outside the unit circle")
        dc = self.gain
        for b0, b1, b2, a1, a2 in sections:
            dc *= (b0 + b1 + b2) / (1.0 + a1 + a2)
        if abs(dc - 1.0) > 1e-9:
            raise ValueError(f"DC gain {dc!r} deviates from unity beyond 1e-9")
        sections = sections.copy()
        sections.setflags(write=False)
        object.__setattr__(self, "sections", sections)

    def sos(self) -> np.ndarray:
        """Sections in scipy (b0,b1,b2,a0,a1,a2) layout with gain folded in."""
        n = self.sections.shape[0]
        sos = np.zeros((n, 6))
        sos[:, 0:3] = self.sections[:, 0:3]
        sos[:, 3] = 1.0
        sos[:, 4:6] = self.sections[:, 3:5]
        sos[0, 0:3] *= self.gain
        return sos


def design_butterworth(order: int, cutoff_hz: float, sample_rate_hz: float) -> ButterworthFilter:
    """Low-pass Butterworth design via the pre-warped bilinear transform.

    Rejects cutoffs at or above Nyquist and orders outside [1, 12].
    """
    if not (1 <= order <= 12):
        raise ValueError(f"order must be in [1, 12], got {order}")
    if not (sample_rate_hz > 0):
        raise ValueError(f"sample rate must be positive, got {sample_rate_hz}")
    if not (0 < cutoff_hz < sample_rate_hz / 2):
        raise ValueError(
            f"cutoff {cutoff_hz} Hz must lie strictly between 0 and Nyquist "
            f"({sample_rate_hz / 2} Hz)"
        )
    z, p, k = _signal.butter(order, cutoff_hz, btype="low", fs=sample_rate_hz, output="zpk")
    sos = _signal.zpk2sos(z, p, 1.0)
    sections = np.column_stack([sos[:, 0:3], sos[:, 4:6]])
    return ButterworthFilter(
        order=order,
        cutoff_hz=float(cutoff_hz),
        sample_rate_hz=float(sample_rate_hz),
        sections=sections,
        gain=float(k),
    )


def frequency_response(filt: ButterworthFilter, freq_hz) -> np.ndarray:
    """Complex response H(e^{j 2 pi f / fs}) at the given frequencies."""
    w = 2.0 * np.pi * np.atleast_1d(np.asarray(freq_hz, dtype=np.float64)) / filt.sample_rate_hz
    z1 = np.exp(-1j * w)
    z2 = z1 * z1
    h = np.full(w.shape, filt.gain, dtype=np.complex128)
    for b0, b1, b2, a1, a2 in filt.sections:
        h *= (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2)
    return h


def _padlen(filt: ButterworthFilter) -> int:
    return 3 * (2 * filt.order + 1)


def filtfilt(filt: ButterworthFilter, series) -> np.ndarray:
    """Zero-phase filtering: forward pass then reversed backward pass.

    Edges are handled by odd-reflection padding of length 3 * (2*order + 1);
    the padding is removed so output length equals input length.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    pad = _padlen(filt)
    if len(x) <= pad:
        raise ValueError(
            f"series length {len(x)} too short for zero-phase filtering; "
            f"need more than {pad} samples"
        )
    return _signal.sosfiltfilt(filt.sos(), x, padtype="odd", padlen=pad)


def filtfilt_trace(filt: ButterworthFilter, trace: KinematicsTrace) -> KinematicsTrace:
    """Apply zero-phase filtering channel by channel."""
    out = np.column_stack([filtfilt(filt, trace.samples[:, c]) for c in range(6)])
    return KinematicsTrace(out, trace.sample_rate_hz, trace.t0_s)


@dataclass(frozen=True)
class AlignmentResult:
    noisy: KinematicsTrace
    reference: KinematicsTrace
    shift: int
    degenerate: bool


def align_by_xcorr(
    noisy: KinematicsTrace, reference: KinematicsTrace, max_shift_samples: int
) -> AlignmentResult:
    """Shift the noisy trace onto the reference time base.

    The integer shift in [-max, +max] maximizing the normalized
    cross-correlation of the linear-acceleration magnitudes is applied to the
    noisy trace (out-of-range samples zero-filled) and both traces are
    truncated to the common support. An all-zero magnitude on either side is
    degenerate: shift 0, flagged.
    """
    if noisy.sample_rate_hz != reference.sample_rate_hz:
        raise ValueError("traces must share a sample rate")
    length = min(len(noisy), len(reference))
    if not (0 <= max_shift_samples < length / 2):
        raise ValueError(
            f"max_shift_samples {max_shift_samples} must be below half the "
            f"trace length ({length})"
        )
    mag_n = magnitude_trace(noisy, "lin_acc")[:length]
    mag_r = magnitude_trace(reference, "lin_acc")[:length]
    rate = reference.sample_rate_hz

    def _trunc(trace, start, stop, samples=None):
        data = trace.samples[:length] if samples is None else samples
        return KinematicsTrace(
            data[start:stop], rate, reference.t0_s + start / rate
        )

    if np.max(mag_n) == 0.0 or np.max(mag_r) == 0.0:
        return AlignmentResult(
            noisy=_trunc(noisy, 0, length),
            reference=_trunc(reference, 0, length),
            shift=0,
            degenerate=True,
        )

    best = None
    for s in range(-max_shift_samples, max_shift_samples + 1):
        j0 = max(0, -s)
        j1 = min(length - 1, length - 1 - s)
        if j1 < j0:
            continue
        a = mag_n[j0 : j1 + 1]
        b = mag_r[j0 + s : j1 + 1 + s]
        denom = np.sqrt(np.dot(a, a) * np.dot(b, b))
        score = float(np.dot(a, b) / denom) if denom > 0 else -np.inf
        key = (-score, abs(s), s)
        if best is None or key < best[0]:
            best = (key, s)
    shift = best[1]

    aligned = np.zeros((length, 6))
    if shift >= 0:
        aligned[shift:length] = noisy.samples[: length - shift]
        start, stop = shift, length
    else:
        aligned[: length + shift] = noisy.samples[-shift:length]
        start, stop = 0, length + shift
    return AlignmentResult(
        noisy=_trunc(noisy, start, stop, samples=aligned),
        reference=_trunc(reference, start, stop),
        shift=shift,
        degenerate=False,
    )


def differentiate(series, sample_rate_hz: float) -> np.ndarray:
    """Time derivative: central differences in the interior, one-sided at the ends."""
    x = np.asarray(series, dtype=np.float64)
    if len(x) < 3:
        raise ValueError(f"need at least 3 samples to differentiate, got {len(x)}")
    return np.gradient(x, 1.0 / sample_rate_hz)


def cumulative_integral(series, sample_rate_hz: float) -> np.ndarray:
    """Trapezoidal cumulative integral starting at zero."""
    x = np.asarray(series, dtype=np.float64)
    if len(x) < 2:
        raise ValueError(f"need at least 2 samples to integrate, got {len(x)}")
    steps = (x[1:] + x[:-1]) / (2.0 * sample_rate_hz)
    return np.concatenate([[0.0], np.cumsum(steps)])


@dataclass(frozen=True)
class WindowedExample:
    """A 100-sample noisy/reference window pair for one trainable component."""

    component: ComponentId
    input: np.ndarray
    target: np.ndarray
    source_id: str
    offset_samples: int

    def __post_init__(self):
        inp = np.asarray(self.input, dtype=np.float64)
        tgt = np.asarray(self.target, dtype=np.float64)
        if inp.shape != (WINDOW_SAMPLES,) or tgt.shape != (WINDOW_SAMPLES,):
            raise ValueError(
                f"input and target must both have length {WINDOW_SAMPLES}, "
                f"got {inp.shape} and {tgt.shape}"
            )
        if self.offset_samples < 0:
            raise ValueError("offset_samples must be non-negative")
        object.__setattr__(self, "input", inp)
        object.__setattr__(self, "target", tgt)


def window_count(length: int, window: int = WINDOW_SAMPLES, stride: int = WINDOW_STRIDE) -> int:
    """Number of augmentation windows for a trace of the given length."""
    if length < window:
        raise ValueError(f"trace length {length} shorter than window {window}")
    return max(1, (length - window) // stride)


def augment(
    record: ImpactRecord, window: int = WINDOW_SAMPLES, stride: int = WINDOW_STRIDE
) -> list[WindowedExample]:
    """Sliding-window augmentation of an aligned noisy/reference pair.

    Yields one example per window per trainable component; targets hold the
    raw reference window (training strategies transform them later).
    """
    if record.reference is None:
        raise ValueError(f"{record.impact_id}: augmentation needs a reference trace")
    if len(record.noisy) != len(record.reference):
        raise ValueError(
            f"{record.impact_id}: noisy and reference must be aligned to equal length"
        )
    n = window_count(len(record.noisy), window, stride)
    examples = []
    for k in range(n):
        off = k * stride
        for comp in TRAINABLE_COMPONENTS:
            ch = comp.channel
            examples.append(
                WindowedExample(
                    component=comp,
                    input=record.noisy.samples[off : off + window, ch],
                    target=record.reference.samples[off : off + window, ch],
                    source_id=record.impact_id,
                    offset_samples=off,
                )
            )
    return examples


def peak_anchored_window(
    series, window: int = WINDOW_SAMPLES, anchor: int = PEAK_ANCHOR
) -> tuple[int, int]:
    """Start/stop of the window placing the series peak at the anchor sample.

    The window is clamped to the series support, so the peak may sit past the
    anchor when it occurs near the start of the trace.
    """
    x = np.asarray(series, dtype=np.float64)
    if len(x) < window:
        raise ValueError(f"series length {len(x)} shorter than window {window}")
    peak = int(np.argmax(np.abs(x)))
    start = min(max(peak - anchor, 0), len(x) - window)
    return start, start + window
