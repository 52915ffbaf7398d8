"""Kinematics data types, unit conventions, dataset splitting, and file formats.

Unit conventions are fixed at the boundary: linear acceleration is stored in g,
angular velocity in rad/s, and traces are uniformly sampled at 1 kHz.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

G_MS2 = 9.80665  # standard gravity, used for g -> m/s^2 conversions

CANONICAL_SAMPLE_RATE_HZ = 1000.0

TRACE_CSV_HEADER = (
    "time_s,lin_acc_x_g,lin_acc_y_g,lin_acc_z_g,"
    "ang_vel_x_rads,ang_vel_y_rads,ang_vel_z_rads"
)

MANIFEST_FORMAT_VERSION = 1


class ComponentId(Enum):
    """Addressable kinematics components.

    The first six are trainable channels of a trace; the two magnitude
    components are derived at evaluation time and never stored in raw traces.
    """

    LIN_ACC_X = "lin_acc_x"
    LIN_ACC_Y = "lin_acc_y"
    LIN_ACC_Z = "lin_acc_z"
    ANG_VEL_X = "ang_vel_x"
    ANG_VEL_Y = "ang_vel_y"
    ANG_VEL_Z = "ang_vel_z"
    LIN_ACC_MAG = "lin_acc_mag"
    ANG_VEL_MAG = "ang_vel_mag"

    @property
    def is_magnitude(self) -> bool:
        return self in (ComponentId.LIN_ACC_MAG, ComponentId.ANG_VEL_MAG)

    @property
    def channel(self) -> int:
        """Column index into trace samples; magnitudes have no column."""
        if self.is_magnitude:
            raise ValueError(f"{self.value} is a derived component with no channel")
        return _CHANNEL_ORDER.index(self)


_CHANNEL_ORDER = (
    ComponentId.LIN_ACC_X,
    ComponentId.LIN_ACC_Y,
    ComponentId.LIN_ACC_Z,
    ComponentId.ANG_VEL_X,
    ComponentId.ANG_VEL_Y,
    ComponentId.ANG_VEL_Z,
)

TRAINABLE_COMPONENTS = _CHANNEL_ORDER
EVAL_COMPONENTS = _CHANNEL_ORDER + (ComponentId.LIN_ACC_MAG, ComponentId.ANG_VEL_MAG)


class Split(Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


@dataclass(frozen=True)
class KinematicsTrace:
    """Uniformly sampled 6-channel time series.

    ``samples`` has shape (L, 6) with columns lin_acc x/y/z in g followed by
    ang_vel x/y/z in rad/s. Sample i is at time ``t0_s + i / sample_rate_hz``.
    Instances are immutable after construction.
    """

    samples: np.ndarray
    sample_rate_hz: float = CANONICAL_SAMPLE_RATE_HZ
    t0_s: float = 0.0

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 6:
            raise ValueError(f"samples must have shape (L, 6), got {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("trace must contain at least one sample")
        if not np.all(np.isfinite(arr)):
            raise ValueError("trace contains non-finite values")
        if not (self.sample_rate_hz > 0):
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.shape[0]

    def times(self) -> np.ndarray:
        return self.t0_s + np.arange(len(self)) / self.sample_rate_hz


def magnitude_trace(trace: KinematicsTrace, kind: str) -> np.ndarray:
    """Pointwise Euclidean norm of the linear-acceleration or angular-velocity channels.

    ``kind`` is "lin_acc" or "ang_vel".
    """
    if kind == "lin_acc":
        block = trace.samples[:, 0:3]
    elif kind == "ang_vel":
        block = trace.samples[:, 3:6]
    else:
        raise ValueError(f"kind must be 'lin_acc' or 'ang_vel', got {kind!r}")
    return np.linalg.norm(block, axis=1)


def component_series(trace: KinematicsTrace, component: ComponentId) -> np.ndarray:
    """Series for a component: a raw channel, or the derived magnitude."""
    if component is ComponentId.LIN_ACC_MAG:
        return magnitude_trace(trace, "lin_acc")
    if component is ComponentId.ANG_VEL_MAG:
        return magnitude_trace(trace, "ang_vel")
    return np.array(trace.samples[:, component.channel])


@dataclass(frozen=True)
class ImpactRecord:
    """One impact: a noisy measured trace with an optional reference trace."""

    impact_id: str
    noisy: KinematicsTrace
    reference: KinematicsTrace | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.impact_id:
            raise ValueError("impact_id must be non-empty")
        if self.reference is not None:
            if self.reference.sample_rate_hz != self.noisy.sample_rate_hz:
                raise ValueError(
                    f"{self.impact_id}: reference sample rate "
                    f"{self.reference.sample_rate_hz} != noisy {self.noisy.sample_rate_hz}"
                )
        for k, v in self.metadata.items():
            if not isinstance(k, str) or not isinstance(v, str):
                raise ValueError("metadata must map strings to strings")


@dataclass(frozen=True)
class ImpactDataset:
    """A set of impact records with a train/val/test assignment."""

    records: tuple
    split: dict
    rng_seed: int

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        ids = [r.impact_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate impact_id in dataset")
        if set(self.split.keys()) != set(ids):
            raise ValueError("split must assign every impact_id exactly once")

    def records_in(self, split: Split) -> list[ImpactRecord]:
        return [r for r in self.records if self.split[r.impact_id] is split]

    def counts(self) -> dict:
        return {s: len(self.records_in(s)) for s in Split}


def partition(records, seed: int, fractions=(0.70, 0.15, 0.15)) -> ImpactDataset:
    """Deterministically split records into train/val/test by count.

    Val and test sizes round up (ceil of fraction * n); train absorbs the
    remainder. The shuffle depends only on the sorted impact ids and the seed.
    """
    records = list(records)
    n = len(records)
    if n < 3:
        raise ValueError(f"need at least 3 records to partition, got {n}")
    if len(fractions) != 3 or not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ValueError(f"fractions must be three values summing to 1, got {fractions}")
    n_val = math.ceil(fractions[1] * n)
    n_test = math.ceil(fractions[2] * n)
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(f"degenerate split sizes {n_train}/{n_val}/{n_test} for n={n}")

    ids = sorted(r.impact_id for r in records)
    if len(set(ids)) != n:
        raise ValueError("impact ids must be unique")
    order = np.random.default_rng(seed).permutation(n)
    shuffled = [ids[i] for i in order]

    split = {}
    for i, impact_id in enumerate(shuffled):
        if i < n_train:
            split[impact_id] = Split.TRAIN
        elif i < n_train + n_val:
            split[impact_id] = Split.VAL
        else:
            split[impact_id] = Split.TEST
    return ImpactDataset(records=tuple(records), split=split, rng_seed=seed)


# ---------------------------------------------------------------------------
# File formats


def write_trace_csv(trace: KinematicsTrace, path) -> None:
    """Write a trace in the canonical CSV layout (exact header, 17 sig. digits)."""
    path = Path(path)
    times = trace.times()
    lines = [TRACE_CSV_HEADER]
    for i in range(len(trace)):
        row = [times[i]] + list(trace.samples[i])
        lines.append(",".join(f"{v:.17g}" for v in row))
    path.write_text("\n".join(lines) + "\n")


def read_trace_csv(path) -> KinematicsTrace:
    """Read a canonical trace CSV; rejects traces not sampled at 1 kHz."""
    path = Path(path)
    text = path.read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != TRACE_CSV_HEADER:
        raise ValueError(f"{path}: bad or missing trace CSV header")
    data = np.array(
        [[float(v) for v in ln.split(",")] for ln in lines[1:]], dtype=np.float64
    )
    if data.ndim != 2 or data.shape[1] != 7:
        raise ValueError(f"{path}: expected 7 columns per row")
    t = data[:, 0]
    if len(t) > 1:
        span = t[-1] - t[0]
        if span <= 0:
            raise ValueError(f"{path}: time column must be increasing")
        rate = (len(t) - 1) / span
        if abs(rate - CANONICAL_SAMPLE_RATE_HZ) > 1e-6 * CANONICAL_SAMPLE_RATE_HZ:
            raise ValueError(
                f"{path}: sample rate {rate:.6g} Hz is not the canonical 1 kHz; "
                "resample upstream"
            )
        dt = np.diff(t)
        if not np.allclose(dt, dt[0], rtol=1e-6, atol=1e-9):
            raise ValueError(f"{path}: sampling is not uniform")
    return KinematicsTrace(
        samples=data[:, 1:7], sample_rate_hz=CANONICAL_SAMPLE_RATE_HZ, t0_s=float(t[0])
    )


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def write_dataset(dataset: ImpactDataset, out_dir) -> Path:
    """Write trace CSVs plus the manifest JSON; returns the manifest path."""
    out_dir = Path(out_dir)
    traces_dir = out_dir / "traces"
    traces_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for record in sorted(dataset.records, key=lambda r: r.impact_id):
        noisy_rel = f"traces/{record.impact_id}_noisy.csv"
        write_trace_csv(record.noisy, out_dir / noisy_rel)
        if record.reference is not None:
            ref_rel = f"traces/{record.impact_id}_reference.csv"
            write_trace_csv(record.reference, out_dir / ref_rel)
        else:
            ref_rel = None
        entries.append(
            {
                "impact_id": record.impact_id,
                "noisy_path": noisy_rel,
                "reference_path": ref_rel,
                "split": dataset.split[record.impact_id].value,
                "metadata": dict(record.metadata),
            }
        )
    manifest = {
        "format_version": MANIFEST_FORMAT_VERSION,
        "records": entries,
        "seed": dataset.rng_seed,
    }
    manifest_path = out_dir / "manifest.json"
    write_json(manifest, manifest_path)
    return manifest_path


def read_dataset(manifest_path) -> ImpactDataset:
    """Load a dataset from its manifest; trace paths resolve relative to it."""
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format_version") != MANIFEST_FORMAT_VERSION:
        raise ValueError(f"{manifest_path}: unsupported manifest format_version")
    base = manifest_path.parent
    records = []
    split = {}
    for entry in manifest["records"]:
        noisy = read_trace_csv(base / entry["noisy_path"])
        ref_path = entry.get("reference_path")
        reference = read_trace_csv(base / ref_path) if ref_path else None
        record = ImpactRecord(
            impact_id=entry["impact_id"],
            noisy=noisy,
            reference=reference,
            metadata=dict(entry.get("metadata", {})),
        )
        records.append(record)
        split[record.impact_id] = Split(entry["split"])
    return ImpactDataset(records=tuple(records), split=split, rng_seed=manifest["seed"])
