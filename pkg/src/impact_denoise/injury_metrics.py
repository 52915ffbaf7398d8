"""Closed-form brain injury criteria computed from kinematics traces.

Inputs follow the package unit conventions: linear acceleration in g,
angular velocity in rad/s, time in seconds. Angular acceleration is obtained
by differentiating the measured angular velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core_types import G_MS2, KinematicsTrace, magnitude_trace
from .sigproc import cumulative_integral, differentiate

HIC_WINDOW_S = 0.015

GAMBIT_LIN_CRITICAL_G = 250.0
GAMBIT_ANG_CRITICAL_RADS2 = 25000.0

SI_THRESHOLD_G = 4.0

BRIC_CRITICAL_RADS = (66.2, 59.1, 44.2)

CP_BETA = (-10.2, 0.0433, 0.000873, -0.00000092)


@dataclass(frozen=True)
class HeadInertia:
    """Head mass and principal moments of inertia used by the power criterion."""

    mass_kg: float = 4.50
    ixx: float = 0.016
    iyy: float = 0.024
    izz: float = 0.022

    def __post_init__(self):
        if min(self.mass_kg, self.ixx, self.iyy, self.izz) <= 0:
            raise ValueError("inertia values must be positive")

    @property
    def moments(self) -> tuple:
        return (self.ixx, self.iyy, self.izz)


@dataclass(frozen=True)
class InjuryMetrics:
    hic15: float
    hip_w: float
    gambit: float
    si: float
    bric: float
    cp: float

    def __post_init__(self):
        if min(self.hic15, self.gambit, self.si, self.bric) < 0:
            raise ValueError("hic15, gambit, si, and bric must be non-negative")
        if not (0.0 <= self.cp <= 1.0):
            raise ValueError(f"cp must lie in [0, 1], got {self.cp}")

    def to_dict(self) -> dict:
        return {
            "hic15": self.hic15,
            "hip_w": self.hip_w,
            "gambit": self.gambit,
            "si": self.si,
            "bric": self.bric,
            "cp": self.cp,
        }


def hic15(lin_acc_mag_g, fs: float) -> float:
    """Head injury criterion with the window capped at 15 ms.

    Maximizes (t2-t1) * (mean of |a| over [t1, t2])^2.5 over sample pairs no
    more than 15 ms apart, with trapezoidal integration; computed from prefix
    sums in O(n * w).
    """
    a = np.abs(np.asarray(lin_acc_mag_g, dtype=np.float64))
    if a.size == 0:
        raise ValueError("empty acceleration series")
    if a.size < 2:
        return 0.0
    w_max = int(math.floor(HIC_WINDOW_S * fs))
    if w_max < 1:
        return 0.0
    prefix = np.concatenate([[0.0], np.cumsum((a[1:] + a[:-1]) / (2.0 * fs))])
    best = 0.0
    for w in range(1, min(w_max, a.size - 1) + 1):
        integral = prefix[w:] - prefix[:-w]
        dt = w / fs
        best = max(best, float(np.max(dt * (integral / dt) ** 2.5)))
    return best


def hip(lin_acc_g, ang_vel_rads, inertia: HeadInertia, fs: float) -> float:
    """Head impact power in watts: peak translational plus rotational power.

    Velocity comes from the cumulative integral of linear acceleration; the
    rotational velocity term uses the measured angular velocity directly
    (equal to the integral of angular acceleration when the trace starts at
    rest).
    """
    a = [np.asarray(s, dtype=np.float64) * G_MS2 for s in lin_acc_g]
    omega = [np.asarray(s, dtype=np.float64) for s in ang_vel_rads]
    if len(a) != 3 or len(omega) != 3:
        raise ValueError("expected 3 linear and 3 angular series")
    n = a[0].size
    if n < 3 or any(s.size != n for s in a + omega):
        raise ValueError("series must share a length of at least 3")
    power = np.zeros(n)
    for i in range(3):
        v = cumulative_integral(a[i], fs)
        power += inertia.mass_kg * a[i] * v
        alpha = differentiate(omega[i], fs)
        power += inertia.moments[i] * alpha * omega[i]
    return float(np.max(power))


def gambit(lin_acc_mag_g, ang_acc_mag_rads2) -> float:
    """Combined linear/angular acceleration criterion, maximized over time."""
    a = np.abs(np.asarray(lin_acc_mag_g, dtype=np.float64))
    alpha = np.abs(np.asarray(ang_acc_mag_rads2, dtype=np.float64))
    if a.shape != alpha.shape:
        raise ValueError(f"length mismatch {a.shape} vs {alpha.shape}")
    g = np.sqrt((a / GAMBIT_LIN_CRITICAL_G) ** 2 + (alpha / GAMBIT_ANG_CRITICAL_RADS2) ** 2)
    return float(np.max(g))


def si(lin_acc_mag_g, fs: float) -> float:
    """Severity index: trapezoidal integral of |a|^2.5 over the supra-4g interval.

    The interval starts when the signal first exceeds 4 g and ends when it
    first returns to 4 g or below after the highest peak (or at the last
    sample). Zero when the signal never exceeds 4 g.
    """
    a = np.abs(np.asarray(lin_acc_mag_g, dtype=np.float64))
    if a.size == 0:
        raise ValueError("empty acceleration series")
    above = np.nonzero(a > SI_THRESHOLD_G)[0]
    if above.size == 0:
        return 0.0
    start = int(above[0])
    peak = int(np.argmax(a))
    after = np.nonzero(a[peak + 1 :] <= SI_THRESHOLD_G)[0]
    end = int(peak + 1 + after[0]) if after.size else a.size - 1
    if end <= start:
        return 0.0
    return float(np.trapz(a[start : end + 1] ** 2.5, dx=1.0 / fs))


def bric(ang_vel_rads) -> float:
    """Angular-velocity criterion from per-axis peaks against critical values."""
    omega = [np.asarray(s, dtype=np.float64) for s in ang_vel_rads]
    if len(omega) != 3:
        raise ValueError("expected 3 angular velocity series")
    n = omega[0].size
    if n < 1 or any(s.size != n for s in omega):
        raise ValueError("series must share a length of at least 1")
    total = 0.0
    for s, critical in zip(omega, BRIC_CRITICAL_RADS):
        total += (float(np.max(np.abs(s))) / critical) ** 2
    return math.sqrt(total)


def cp(lin_acc_mag_g, ang_acc_mag_rads2) -> float:
    """Combined probability of concussion: logistic risk from peak kinematics."""
    a = np.abs(np.asarray(lin_acc_mag_g, dtype=np.float64))
    alpha = np.abs(np.asarray(ang_acc_mag_rads2, dtype=np.float64))
    if a.shape != alpha.shape:
        raise ValueError(f"length mismatch {a.shape} vs {alpha.shape}")
    pa = float(np.max(a))
    palpha = float(np.max(alpha))
    b0, b1, b2, b3 = CP_BETA
    z = b0 + b1 * pa + b2 * palpha + b3 * pa * palpha
    return 1.0 / (1.0 + math.exp(-z))


def angular_acceleration(trace: KinematicsTrace) -> np.ndarray:
    """Per-axis angular acceleration (L, 3) from the measured angular velocity."""
    fs = trace.sample_rate_hz
    return np.column_stack(
        [differentiate(trace.samples[:, 3 + i], fs) for i in range(3)]
    )


def compute_all(trace: KinematicsTrace, inertia: HeadInertia = HeadInertia()) -> InjuryMetrics:
    """All six criteria for one trace; derived series are computed once."""
    fs = trace.sample_rate_hz
    lin_mag = magnitude_trace(trace, "lin_acc")
    alpha = angular_acceleration(trace)
    alpha_mag = np.linalg.norm(alpha, axis=1)
    lin = [trace.samples[:, i] for i in range(3)]
    ang = [trace.samples[:, 3 + i] for i in range(3)]
    return InjuryMetrics(
        hic15=hic15(lin_mag, fs),
        hip_w=hip(lin, ang, inertia, fs),
        gambit=gambit(lin_mag, alpha_mag),
        si=si(lin_mag, fs),
        bric=bric(ang),
        cp=cp(lin_mag, alpha_mag),
    )
