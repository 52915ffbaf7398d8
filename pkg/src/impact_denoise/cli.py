"""Command-line pipeline: synth, preprocess, train, denoise, eval, bic, compare-filter.

All randomness flows from config seeds; outputs are byte-identical across
reruns with identical inputs, except timestamps, which live only in the
provenance files.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import denoiser as dn
from . import eval_stats as es
from .core_types import (
    EVAL_COMPONENTS,
    ComponentId,
    ImpactDataset,
    ImpactRecord,
    component_series,
    read_dataset,
    write_dataset,
    write_json,
)
from .injury_metrics import compute_all
from .neuralnet import Strategy, TrainingConfig
from .sigproc import design_butterworth, filtfilt_trace
from .synth_data import NOISE_MODEL_NOTE, SynthConfig, generate

RUN_CONFIG_VERSION = 1

_SYNTH_KEYS = {f.name for f in dataclasses.fields(SynthConfig)}
_TRAIN_CFG_KEYS = {f.name for f in dataclasses.fields(TrainingConfig)}
_GRID_KEYS = {"channel_plans", "lr0s", "epochs", "l2s", "kernel_sizes", "strategies"}
_CONFIG_SCHEMA = {
    "format_version": None,
    "synth": _SYNTH_KEYS,
    "preprocess": {"filter_order", "cutoff_hz", "max_shift_samples"},
    "train": {"grid", "config"},
    "eval": {"components"},
    "paths": {"out_dir"},
}


def load_run_config(path) -> dict:
    """Load and strictly validate a run configuration document."""
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    if doc.get("format_version") != RUN_CONFIG_VERSION:
        raise ValueError(f"{path}: config requires format_version {RUN_CONFIG_VERSION}")
    for section, value in doc.items():
        if section not in _CONFIG_SCHEMA:
            raise ValueError(f"{path}: unknown config section {section!r}")
        allowed = _CONFIG_SCHEMA[section]
        if allowed is None:
            continue
        if not isinstance(value, dict):
            raise ValueError(f"{path}: section {section!r} must be an object")
        for key in value:
            if key not in allowed:
                raise ValueError(f"{path}: unknown key {section}.{key}")
    train_section = doc.get("train", {})
    if "grid" in train_section and "config" in train_section:
        raise ValueError(f"{path}: train accepts either 'grid' or 'config', not both")
    for key in train_section.get("grid", {}):
        if key not in _GRID_KEYS:
            raise ValueError(f"{path}: unknown key train.grid.{key}")
    for key in train_section.get("config", {}):
        if key not in _TRAIN_CFG_KEYS:
            raise ValueError(f"{path}: unknown key train.config.{key}")
    return doc


def _config_sha256(resolved: dict) -> str:
    return hashlib.sha256(
        json.dumps(resolved, sort_keys=True).encode("utf-8")
    ).hexdigest()


def _require_dir(path, label: str) -> Path:
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"{label} directory {path} does not exist")
    return path


def _write_provenance(out_dir: Path, command: str, resolved_config: dict, seed=None, extra=None):
    doc = {
        "command": command,
        "config_sha256": _config_sha256(resolved_config),
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    if seed is not None:
        doc["seed"] = seed
    if extra:
        doc.update(extra)
    write_json(doc, out_dir / "provenance.json")


def _load_section(args, section: str) -> dict:
    if getattr(args, "config", None):
        return load_run_config(args.config).get(section, {})
    return {}


# ---------------------------------------------------------------------------
# Commands


def cmd_synth(args) -> int:
    section = dict(_load_section(args, "synth"))
    for key in list(section):
        if key.endswith("_range") or key.endswith("_range_g") or key in (
            "pulse_count_range",
            "lin_amp_range_g",
            "ang_amp_range_rads",
            "pulse_duration_range_ms",
            "ringing_freq_range_hz",
            "ringing_decay_range_ms",
            "time_shift_range",
        ):
            section[key] = tuple(section[key])
    cfg = SynthConfig(**section)
    out_dir = _require_dir(args.out, "output")
    dataset = generate(cfg)
    write_dataset(dataset, out_dir)
    _write_provenance(
        out_dir,
        "synth",
        dataclasses.asdict(cfg),
        seed=cfg.rng_seed,
        extra={"noise_model": NOISE_MODEL_NOTE},
    )
    print(f"wrote {len(dataset.records)} impacts to {out_dir}")
    return 0


def cmd_preprocess(args) -> int:
    section = _load_section(args, "preprocess")
    dataset = read_dataset(args.in_manifest)
    out_dir = _require_dir(args.out, "output")
    processed, report = dn.preprocess_dataset(
        dataset,
        filter_order=section.get("filter_order", dn.DEFAULT_FILTER_ORDER),
        cutoff_hz=section.get("cutoff_hz", dn.DEFAULT_CUTOFF_HZ),
        max_shift_samples=section.get("max_shift_samples", dn.DEFAULT_MAX_SHIFT),
    )
    for impact_id in report.skipped:
        print(f"warning: {impact_id} shorter than the evaluation window; skipped", file=sys.stderr)
    write_dataset(processed, out_dir)
    shifts = {
        "format_version": 1,
        "shifts": [
            {
                "impact_id": impact_id,
                "shift_samples": shift,
                "degenerate": impact_id in report.degenerate,
            }
            for impact_id, shift in sorted(report.shifts.items())
        ],
        "skipped": sorted(report.skipped),
    }
    write_json(shifts, out_dir / "shifts.json")
    _write_provenance(out_dir, "preprocess", dict(section))
    print(f"wrote {len(processed.records)} preprocessed impacts to {out_dir}")
    return 0


def _grid_from_config(section: dict) -> dn.HyperGrid:
    if "grid" in section:
        raw = dict(section["grid"])
        if "channel_plans" in raw:
            raw["channel_plans"] = tuple(tuple(p) for p in raw["channel_plans"])
        if "strategies" in raw:
            raw["strategies"] = tuple(Strategy(s) for s in raw["strategies"])
        for key in ("lr0s", "epochs", "l2s", "kernel_sizes"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return dn.HyperGrid(**raw)
    if "config" in section:
        raw = dict(section["config"])
        raw.pop("seed", None)
        cfg = TrainingConfig(**raw)
        return dn.singleton_grid(
            channel_plan=cfg.channel_plan,
            lr0=cfg.lr0,
            epochs=cfg.epochs,
            l2=cfg.l2,
            kernel_size=cfg.kernel_size,
            strategy=cfg.strategy,
        )
    return dn.singleton_grid()


def cmd_train(args) -> int:
    section = _load_section(args, "train")
    grid = _grid_from_config(section)
    dataset = read_dataset(args.in_manifest)
    out_path = Path(args.out)
    if not out_path.parent.is_dir():
        raise FileNotFoundError(f"output directory {out_path.parent} does not exist")
    suite, report = dn.fit_suite(dataset, grid)
    dn.save_suite(suite, out_path)
    write_json(
        {"format_version": 1, "components": report},
        out_path.parent / "validation_report.json",
    )
    print(f"wrote suite to {out_path}")
    return 0


def cmd_denoise(args) -> int:
    suite = dn.load_suite(args.suite)
    dataset = read_dataset(args.in_manifest)
    out_dir = _require_dir(args.out, "output")
    records = []
    for record in dataset.records:
        denoised = dn.denoise_trace(suite, record.noisy)
        records.append(
            ImpactRecord(
                impact_id=record.impact_id,
                noisy=denoised,
                reference=None,
                metadata=dict(record.metadata),
            )
        )
    out_dataset = ImpactDataset(
        records=tuple(records), split=dict(dataset.split), rng_seed=dataset.rng_seed
    )
    write_dataset(out_dataset, out_dir)
    _write_provenance(out_dir, "denoise", {"suite": str(args.suite)})
    print(f"wrote {len(records)} denoised impacts to {out_dir}")
    return 0


def _series_maps(pred_dataset, ref_dataset, components):
    """Per-component series lists for (pred, original, reference) by impact."""
    ref_by_id = {r.impact_id: r for r in ref_dataset.records}
    pred_map = {c.value: [] for c in components}
    orig_map = {c.value: [] for c in components}
    ref_map = {c.value: [] for c in components}
    n = 0
    for record in sorted(pred_dataset.records, key=lambda r: r.impact_id):
        ref_record = ref_by_id.get(record.impact_id)
        if ref_record is None or ref_record.reference is None:
            continue
        if len(ref_record.reference) != len(record.noisy):
            raise ValueError(
                f"{record.impact_id}: prediction length {len(record.noisy)} != "
                f"reference length {len(ref_record.reference)}"
            )
        n += 1
        for comp in components:
            pred_map[comp.value].append(component_series(record.noisy, comp))
            orig_map[comp.value].append(component_series(ref_record.noisy, comp))
            ref_map[comp.value].append(component_series(ref_record.reference, comp))
    if n == 0:
        raise ValueError("no impacts with reference traces shared by both manifests")
    return pred_map, orig_map, ref_map, n


def cmd_eval(args) -> int:
    section = _load_section(args, "eval")
    names = section.get("components")
    if names is None:
        components = EVAL_COMPONENTS
    else:
        components = tuple(ComponentId(name) for name in names)
    pred_dataset = read_dataset(args.pred)
    ref_dataset = read_dataset(args.ref)
    pred_map, orig_map, ref_map, n = _series_maps(pred_dataset, ref_dataset, components)
    report = es.build_error_report(orig_map, pred_map, ref_map)
    report["n_impacts"] = n
    out_path = Path(args.out)
    if not out_path.parent.is_dir():
        raise FileNotFoundError(f"output directory {out_path.parent} does not exist")
    if args.bland_altman:
        ba_dir = _require_dir(args.bland_altman, "bland-altman")
        for comp in components:
            for variant, series in (("original", orig_map), ("denoised", pred_map)):
                pooled_pred = np.concatenate(series[comp.value])
                pooled_ref = np.concatenate(ref_map[comp.value])
                result = es.bland_altman(pooled_pred, pooled_ref)
                lines = ["mean,diff"]
                lines += [
                    f"{m:.17g},{d:.17g}" for m, d in zip(result.means, result.diffs)
                ]
                path = ba_dir / f"{comp.value}_{variant}.csv"
                path.write_text("\n".join(lines) + "\n")
    write_json(report, out_path)
    print(f"wrote evaluation report for {n} impacts to {out_path}")
    return 0


def cmd_bic(args) -> int:
    dataset = read_dataset(args.in_manifest)
    out_path = Path(args.out)
    if not out_path.parent.is_dir():
        raise FileNotFoundError(f"output directory {out_path.parent} does not exist")
    rows = []
    for record in sorted(dataset.records, key=lambda r: r.impact_id):
        metrics = compute_all(record.noisy)
        rows.append({"impact_id": record.impact_id, **metrics.to_dict()})
    write_json(rows, out_path)
    print(f"wrote injury metrics for {len(rows)} impacts to {out_path}")
    return 0


def _parse_range(text: str, label: str) -> list[int]:
    parts = text.split(":")
    try:
        numbers = [int(p) for p in parts]
    except ValueError:
        raise ValueError(f"{label} must look like start:stop[:step], got {text!r}")
    if len(numbers) == 2:
        start, stop, step = numbers[0], numbers[1], 1
    elif len(numbers) == 3:
        start, stop, step = numbers
    else:
        raise ValueError(f"{label} must look like start:stop[:step], got {text!r}")
    if step < 1 or stop < start:
        raise ValueError(f"{label}: bad range {text!r}")
    return list(range(start, stop + 1, step))


def _variant_row(pred_map, ref_map, components) -> dict:
    stats = [
        es.summarize_component(pred_map[c.value], ref_map[c.value]) for c in components
    ]
    return {
        key: float(np.mean([s[key] for s in stats]))
        for key in ("mae", "rmse", "pae", "peak_rmse", "peak_r2")
    }


def cmd_compare_filter(args) -> int:
    dataset = read_dataset(args.in_manifest)
    suite = dn.load_suite(args.suite)
    orders = _parse_range(args.orders, "--orders")
    cutoffs = _parse_range(args.cutoffs, "--cutoffs")
    out_path = Path(args.out)
    if not out_path.parent.is_dir():
        raise FileNotFoundError(f"output directory {out_path.parent} does not exist")

    records = [r for r in dataset.records if r.reference is not None]
    if not records:
        raise ValueError("no impacts with reference traces in the input manifest")
    components = [c for c in EVAL_COMPONENTS if not c.is_magnitude]
    ref_map = {
        c.value: [component_series(r.reference, c) for r in records] for c in components
    }

    def pred_map_for(traces):
        return {
            c.value: [component_series(t, c) for t in traces] for c in components
        }

    rows = []
    original_row = _variant_row(pred_map_for([r.noisy for r in records]), ref_map, components)
    rows.append(("original", "", "", original_row))
    cnn_traces = [dn.denoise_trace(suite, r.noisy) for r in records]
    rows.append(("cnn", "", "", _variant_row(pred_map_for(cnn_traces), ref_map, components)))
    rate = records[0].noisy.sample_rate_hz
    for order in orders:
        for cutoff in cutoffs:
            filt = design_butterworth(order, float(cutoff), rate)
            filtered = [filtfilt_trace(filt, r.noisy) for r in records]
            row = _variant_row(pred_map_for(filtered), ref_map, components)
            rows.append(("butterworth", str(order), str(cutoff), row))

    lines = ["variant,order,cutoff_hz,mae,rmse,pae,peak_rmse,peak_r2"]
    for variant, order, cutoff, row in rows:
        lines.append(
            f"{variant},{order},{cutoff},"
            + ",".join(
                f"{row[k]:.12g}" for k in ("mae", "rmse", "pae", "peak_rmse", "peak_r2")
            )
        )
    out_path.write_text("\n".join(lines) + "\n")
    print(f"wrote {len(rows)} comparison rows to {out_path}")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="impact-denoise",
        description=(
            "Denoise 6-DOF head-impact kinematics with per-axis convolutional "
            "models and evaluate the effect on accuracy and injury criteria."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a paired synthetic dataset")
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--out", required=True, help="existing output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="filter, align, and window a dataset")
    p.add_argument("--in", dest="in_manifest", required=True, help="input manifest JSON")
    p.add_argument("--out", required=True, help="existing output directory")
    p.add_argument("--config", help="run config JSON")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="grid-search and train the six component models")
    p.add_argument("--in", dest="in_manifest", required=True, help="preprocessed manifest JSON")
    p.add_argument("--grid", dest="config", help="run config JSON holding train.grid")
    p.add_argument("--config", dest="config", help="run config JSON")
    p.add_argument("--out", required=True, help="suite JSON output path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("denoise", help="denoise whole traces with a trained suite")
    p.add_argument("--suite", required=True, help="suite JSON path")
    p.add_argument("--in", dest="in_manifest", required=True, help="input manifest JSON")
    p.add_argument("--out", required=True, help="existing output directory")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("eval", help="accuracy report against reference traces")
    p.add_argument("--pred", required=True, help="manifest of predicted/denoised traces")
    p.add_argument("--ref", required=True, help="manifest holding noisy and reference traces")
    p.add_argument("--out", required=True, help="report JSON output path")
    p.add_argument("--bland-altman", dest="bland_altman", help="existing directory for pair CSVs")
    p.add_argument("--config", help="run config JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bic", help="brain injury criteria per impact")
    p.add_argument("--in", dest="in_manifest", required=True, help="input manifest JSON")
    p.add_argument("--out", required=True, help="metrics JSON output path")
    p.set_defaults(func=cmd_bic)

    p = sub.add_parser(
        "compare-filter",
        help="grid of low-pass-only denoising versus the trained suite",
    )
    p.add_argument("--in", dest="in_manifest", required=True, help="preprocessed manifest JSON")
    p.add_argument("--suite", required=True, help="suite JSON path")
    p.add_argument("--orders", default="5:9", help="filter orders, start:stop")
    p.add_argument("--cutoffs", default="20:160:20", help="cutoffs in Hz, start:stop:step")
    p.add_argument("--out", required=True, help="CSV output path")
    p.set_defaults(func=cmd_compare_filter)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
