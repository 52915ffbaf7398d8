"""Orchestration of the six per-component denoising models.

Covers preprocessing hookup (filtering, alignment, evaluation-window
truncation), the two training strategies, per-component normalization,
hyperparameter grid search, and whole-trace denoising.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from .core_types import (
    ComponentId,
    ImpactDataset,
    ImpactRecord,
    KinematicsTrace,
    Split,
    TRAINABLE_COMPONENTS,
    magnitude_trace,
)
from .neuralnet import (
    DenoiserNetwork,
    Strategy,
    TrainingConfig,
    model_from_dict,
    model_to_dict,
    train,
)
from .sigproc import (
    AlignmentResult,
    WINDOW_SAMPLES,
    WindowedExample,
    align_by_xcorr,
    augment,
    design_butterworth,
    filtfilt_trace,
    peak_anchored_window,
)

THREADS_ENV_VAR = "IMPACT_DENOISE_THREADS"

SUITE_FORMAT_VERSION = 1

DEFAULT_FILTER_ORDER = 5
DEFAULT_CUTOFF_HZ = 160.0
DEFAULT_MAX_SHIFT = 10


def make_targets(noisy_window, reference_window, strategy: Strategy) -> np.ndarray:
    """Training target for a window pair under the given strategy.

    Direct modeling targets the reference window; the residual strategy
    targets reference - noisy, so the denoised signal is noisy + prediction.
    """
    noisy = np.asarray(noisy_window, dtype=np.float64)
    reference = np.asarray(reference_window, dtype=np.float64)
    if noisy.shape != reference.shape:
        raise ValueError("window shapes must match")
    if strategy is Strategy.DIRECT:
        return reference.copy()
    return reference - noisy


def normalize(window, s: float) -> np.ndarray:
    """Divide by the component scale; no mean shift."""
    if not (s > 0):
        raise ValueError(f"scale must be positive, got {s}")
    return np.asarray(window, dtype=np.float64) / s


def denormalize(window, s: float) -> np.ndarray:
    if not (s > 0):
        raise ValueError(f"scale must be positive, got {s}")
    return np.asarray(window, dtype=np.float64) * s


@dataclass(frozen=True)
class ComponentModel:
    network: DenoiserNetwork
    strategy: Strategy
    scale: float

    def __post_init__(self):
        if not (self.scale > 0):
            raise ValueError(f"component scale must be positive, got {self.scale}")

    def denoise_window(self, window: np.ndarray) -> np.ndarray:
        x = normalize(window, self.scale)
        pred = self.network.forward(x[None, :])[0]
        if self.strategy is Strategy.DIRECT:
            return denormalize(pred, self.scale)
        return np.asarray(window, dtype=np.float64) + denormalize(pred, self.scale)


@dataclass(frozen=True)
class DenoiserSuite:
    """One trained model per trainable component."""

    models: dict

    def __post_init__(self):
        for comp, model in self.models.items():
            if not isinstance(comp, ComponentId) or comp.is_magnitude:
                raise ValueError(f"suite keys must be trainable components, got {comp}")

    def require_complete(self):
        missing = [c.value for c in TRAINABLE_COMPONENTS if c not in self.models]
        if missing:
            raise ValueError(f"suite is missing components: {', '.join(missing)}")


@dataclass(frozen=True)
class HyperGrid:
    """Candidate hyperparameters searched per component."""

    channel_plans: tuple = ((16, 32, 64), (20, 40, 80), (32, 64, 128))
    lr0s: tuple = (0.005, 0.01)
    epochs: tuple = (300, 400, 500, 600, 700)
    l2s: tuple = (0.001,)
    kernel_sizes: tuple = (10,)
    strategies: tuple = (Strategy.DIRECT, Strategy.NOISE_RESIDUAL)

    def __post_init__(self):
        object.__setattr__(
            self, "channel_plans", tuple(tuple(p) for p in self.channel_plans)
        )
        object.__setattr__(self, "lr0s", tuple(self.lr0s))
        object.__setattr__(self, "epochs", tuple(self.epochs))
        object.__setattr__(self, "l2s", tuple(self.l2s))
        object.__setattr__(self, "kernel_sizes", tuple(self.kernel_sizes))
        object.__setattr__(
            self,
            "strategies",
            tuple(Strategy(s) if isinstance(s, str) else s for s in self.strategies),
        )
        if not list(self.points(seed=0)):
            raise ValueError("hyperparameter grid is empty")

    def points(self, seed: int):
        """Training configs in a fixed deterministic order."""
        combos = product(
            self.channel_plans,
            self.lr0s,
            self.epochs,
            self.l2s,
            self.kernel_sizes,
            self.strategies,
        )
        return [
            TrainingConfig(
                strategy=strategy,
                lr0=lr0,
                epochs=n_epochs,
                l2=l2,
                kernel_size=k,
                channel_plan=plan,
                seed=seed,
            )
            for plan, lr0, n_epochs, l2, k, strategy in combos
        ]


def singleton_grid(
    channel_plan=(16, 32, 64),
    lr0: float = 0.005,
    epochs: int = 500,
    l2: float = 0.001,
    kernel_size: int = 10,
    strategy: Strategy = Strategy.DIRECT,
) -> HyperGrid:
    return HyperGrid(
        channel_plans=(tuple(channel_plan),),
        lr0s=(lr0,),
        epochs=(epochs,),
        l2s=(l2,),
        kernel_sizes=(kernel_size,),
        strategies=(strategy,),
    )


# ---------------------------------------------------------------------------
# Preprocessing pipeline


def evaluation_window(record: ImpactRecord) -> tuple[int, int]:
    """Offsets of the 100-sample window anchoring the magnitude peak at sample 20.

    The anchor uses the reference linear-acceleration magnitude when a
    reference is present, else the noisy one.
    """
    anchor_trace = record.reference if record.reference is not None else record.noisy
    return peak_anchored_window(magnitude_trace(anchor_trace, "lin_acc"))


def _truncate(trace: KinematicsTrace, start: int, stop: int) -> KinematicsTrace:
    return KinematicsTrace(
        trace.samples[start:stop],
        trace.sample_rate_hz,
        trace.t0_s + start / trace.sample_rate_hz,
    )


@dataclass(frozen=True)
class PreprocessReport:
    shifts: dict
    degenerate: tuple
    skipped: tuple


def preprocess_dataset(
    dataset: ImpactDataset,
    filter_order: int = DEFAULT_FILTER_ORDER,
    cutoff_hz: float = DEFAULT_CUTOFF_HZ,
    max_shift_samples: int = DEFAULT_MAX_SHIFT,
) -> tuple[ImpactDataset, PreprocessReport]:
    """Filter, align, and window a raw dataset for training and evaluation.

    Both traces of each pair are zero-phase low-pass filtered, the noisy trace
    is aligned to the reference by cross-correlation, and val/test records are
    truncated to the 100-sample evaluation window. Train records keep their
    full aligned length so sliding-window augmentation can cover them. Records
    too short for the window are skipped.
    """
    rate = dataset.records[0].noisy.sample_rate_hz if dataset.records else 1000.0
    filt = design_butterworth(filter_order, cutoff_hz, rate)
    records = []
    split = {}
    shifts = {}
    degenerate = []
    skipped = []
    for record in dataset.records:
        noisy = filtfilt_trace(filt, record.noisy)
        if record.reference is not None:
            reference = filtfilt_trace(filt, record.reference)
            aligned = align_by_xcorr(noisy, reference, max_shift_samples)
            shifts[record.impact_id] = aligned.shift
            if aligned.degenerate:
                degenerate.append(record.impact_id)
            noisy, reference = aligned.noisy, aligned.reference
        else:
            reference = None
            shifts[record.impact_id] = 0
        if len(noisy) < WINDOW_SAMPLES:
            skipped.append(record.impact_id)
            continue
        out = ImpactRecord(
            impact_id=record.impact_id,
            noisy=noisy,
            reference=reference,
            metadata=dict(record.metadata),
        )
        if dataset.split[record.impact_id] is not Split.TRAIN:
            start, stop = evaluation_window(out)
            out = ImpactRecord(
                impact_id=out.impact_id,
                noisy=_truncate(out.noisy, start, stop),
                reference=(
                    _truncate(out.reference, start, stop)
                    if out.reference is not None
                    else None
                ),
                metadata=dict(out.metadata),
            )
        records.append(out)
        split[out.impact_id] = dataset.split[out.impact_id]
    processed = ImpactDataset(records=tuple(records), split=split, rng_seed=dataset.rng_seed)
    report = PreprocessReport(
        shifts=shifts, degenerate=tuple(degenerate), skipped=tuple(skipped)
    )
    return processed, report


# ---------------------------------------------------------------------------
# Grid search


def _component_windows(dataset: ImpactDataset):
    """Training and validation window examples keyed by component."""
    train_ex = {comp: [] for comp in TRAINABLE_COMPONENTS}
    val_ex = {comp: [] for comp in TRAINABLE_COMPONENTS}
    for record in dataset.records_in(Split.TRAIN):
        for example in augment(record):
            train_ex[example.component].append(example)
    for record in dataset.records_in(Split.VAL):
        if record.reference is None:
            raise ValueError(f"{record.impact_id}: validation records need a reference")
        start, stop = evaluation_window(record)
        for comp in TRAINABLE_COMPONENTS:
            ch = comp.channel
            val_ex[comp].append(
                WindowedExample(
                    component=comp,
                    input=record.noisy.samples[start:stop, ch],
                    target=record.reference.samples[start:stop, ch],
                    source_id=record.impact_id,
                    offset_samples=start,
                )
            )
    return train_ex, val_ex


def _training_scale(examples) -> float:
    values = np.concatenate([e.input for e in examples])
    s = float(np.std(values))
    if not (s > 0):
        raise ValueError("training inputs have zero spread; cannot normalize")
    return s


def _worker_count() -> int:
    limit = os.environ.get(THREADS_ENV_VAR)
    available = min(len(TRAINABLE_COMPONENTS), os.cpu_count() or 1)
    if limit is None:
        return max(1, available)
    try:
        return max(1, min(int(limit), available))
    except ValueError:
        raise ValueError(f"{THREADS_ENV_VAR} must be an integer, got {limit!r}")


def _selection_key(entry: dict):
    return (
        entry["val_rmse"],
        tuple(entry["channel_plan"]),
        entry["lr0"],
        0 if entry["strategy"] == Strategy.DIRECT.value else 1,
        entry["epochs"],
    )


def _fit_component(comp_index, comp, train_examples, val_examples, grid, base_seed):
    if not train_examples or not val_examples:
        raise ValueError(f"{comp.value}: empty training or validation split")
    scale = _training_scale(train_examples)
    entries = []
    best = None
    for grid_index, cfg_proto in enumerate(grid.points(seed=0)):
        seed = int(
            np.random.SeedSequence([base_seed, comp_index, grid_index]).generate_state(1)[0]
        )
        cfg = TrainingConfig(
            strategy=cfg_proto.strategy,
            lr0=cfg_proto.lr0,
            epochs=cfg_proto.epochs,
            l2=cfg_proto.l2,
            kernel_size=cfg_proto.kernel_size,
            channel_plan=cfg_proto.channel_plan,
            batch_size=cfg_proto.batch_size,
            early_stop_patience=cfg_proto.early_stop_patience,
            seed=seed,
        )
        net, history = train(train_examples, val_examples, cfg, scale=scale)
        entry = {
            "channel_plan": list(cfg.channel_plan),
            "lr0": cfg.lr0,
            "epochs": cfg.epochs,
            "l2": cfg.l2,
            "kernel_size": cfg.kernel_size,
            "strategy": cfg.strategy.value,
            "val_rmse": min(history.val_rmse),
            "best_epoch": history.best_epoch,
            "epochs_run": history.epochs_run,
            "selected": False,
        }
        entries.append(entry)
        if best is None or _selection_key(entry) < _selection_key(best[0]):
            best = (entry, ComponentModel(network=net, strategy=cfg.strategy, scale=scale))
    best[0]["selected"] = True
    return best[1], entries


def fit_suite(dataset: ImpactDataset, grid: HyperGrid):
    """Grid-search and train one model per component.

    Every grid point is trained on the train split; the model with minimum
    pointwise validation RMSE wins, with ties broken by smaller channel plan,
    lower initial learning rate, then the direct strategy. Returns the suite
    and a per-component validation report. Components train concurrently up
    to the IMPACT_DENOISE_THREADS limit.
    """
    train_ex, val_ex = _component_windows(dataset)
    base_seed = dataset.rng_seed
    jobs = [
        (i, comp, train_ex[comp], val_ex[comp], grid, base_seed)
        for i, comp in enumerate(TRAINABLE_COMPONENTS)
    ]
    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda args: _fit_component(*args), jobs))
    else:
        results = [_fit_component(*args) for args in jobs]
    models = {}
    report = {}
    for comp, (model, entries) in zip(TRAINABLE_COMPONENTS, results):
        models[comp] = model
        report[comp.value] = entries
    suite = DenoiserSuite(models=models)
    suite.require_complete()
    return suite, report


# ---------------------------------------------------------------------------
# Whole-trace denoising


def frame_offsets(length: int, window: int = WINDOW_SAMPLES) -> list[int]:
    """Consecutive frame starts; a final partial frame is anchored at the end.

    Overlapping samples belong to the later frame.
    """
    if length < window:
        raise ValueError(f"trace length {length} shorter than frame {window}")
    offsets = list(range(0, length - window + 1, window))
    if offsets[-1] + window < length:
        offsets.append(length - window)
    return offsets


def denoise_trace(suite: DenoiserSuite, trace: KinematicsTrace) -> KinematicsTrace:
    """Denoise every component of a trace in 100-sample frames."""
    suite.require_complete()
    length = len(trace)
    offsets = frame_offsets(length)
    out = np.array(trace.samples)
    for comp in TRAINABLE_COMPONENTS:
        model = suite.models[comp]
        x = trace.samples[:, comp.channel]
        for off in offsets:
            out[off : off + WINDOW_SAMPLES, comp.channel] = model.denoise_window(
                x[off : off + WINDOW_SAMPLES]
            )
    return KinematicsTrace(out, trace.sample_rate_hz, trace.t0_s)


# ---------------------------------------------------------------------------
# Suite files


def suite_to_dict(suite: DenoiserSuite) -> dict:
    suite.require_complete()
    models = [
        model_to_dict(
            suite.models[comp].network,
            comp,
            suite.models[comp].strategy,
            suite.models[comp].scale,
        )
        for comp in TRAINABLE_COMPONENTS
    ]
    return {"format_version": SUITE_FORMAT_VERSION, "models": models}


def suite_from_dict(doc: dict) -> DenoiserSuite:
    if doc.get("format_version") != SUITE_FORMAT_VERSION:
        raise ValueError("unsupported suite format_version")
    models = {}
    for entry in doc["models"]:
        net, component, strategy, scale = model_from_dict(entry)
        models[component] = ComponentModel(network=net, strategy=strategy, scale=scale)
    suite = DenoiserSuite(models=models)
    suite.require_complete()
    return suite


def save_suite(suite: DenoiserSuite, path) -> None:
    Path(path).write_text(json.dumps(suite_to_dict(suite), indent=2) + "\n")


def load_suite(path) -> DenoiserSuite:
    return suite_from_dict(json.loads(Path(path).read_text()))
