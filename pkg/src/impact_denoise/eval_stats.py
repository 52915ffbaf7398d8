"""Accuracy metrics, Bland-Altman agreement, and the Wilcoxon signed-rank test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def pointwise_errors(pred, ref) -> tuple[float, float]:
    """(MAE, RMSE) over every time point of a pair of equal-length series."""
    p = np.asarray(pred, dtype=np.float64)
    r = np.asarray(ref, dtype=np.float64)
    if p.shape != r.shape:
        raise ValueError(f"length mismatch {p.shape} vs {r.shape}")
    d = p - r
    return float(np.mean(np.abs(d))), float(np.sqrt(np.mean(d**2)))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks starting at 1, ties receiving the average of their positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - np.mean(x)
    yc = y - np.mean(y)
    denom = math.sqrt(float(np.dot(xc, xc)) * float(np.dot(yc, yc)))
    if denom == 0.0:
        return float("nan")
    return float(np.dot(xc, yc) / denom)


@dataclass(frozen=True)
class PeakMetrics:
    pae: np.ndarray
    peak_rmse: float
    peak_r2: float
    pearson: float
    spearman: float
    degenerate: bool


def peak_metrics(pred_traces, ref_traces) -> PeakMetrics:
    """Peak-level agreement over a set of impacts.

    The peak of each series is max |s(t)|. With zero variance in the
    reference peaks the coefficient of determination and the correlations are
    undefined; they come back NaN with the degenerate flag set.
    """
    if len(pred_traces) != len(ref_traces):
        raise ValueError("need one prediction per reference")
    if len(pred_traces) < 3:
        raise ValueError(f"need at least 3 impacts, got {len(pred_traces)}")
    peaks_p = np.array([float(np.max(np.abs(np.asarray(s)))) for s in pred_traces])
    peaks_r = np.array([float(np.max(np.abs(np.asarray(s)))) for s in ref_traces])
    pae = np.abs(peaks_p - peaks_r)
    peak_rmse = float(np.sqrt(np.mean((peaks_p - peaks_r) ** 2)))
    ss_ref = float(np.sum((peaks_r - np.mean(peaks_r)) ** 2))
    if ss_ref == 0.0:
        return PeakMetrics(pae, peak_rmse, float("nan"), float("nan"), float("nan"), True)
    r2 = 1.0 - float(np.sum((peaks_p - peaks_r) ** 2)) / ss_ref
    pearson = _pearson(peaks_p, peaks_r)
    spearman = _pearson(_average_ranks(peaks_p), _average_ranks(peaks_r))
    return PeakMetrics(pae, peak_rmse, r2, pearson, spearman, False)


def snr_db(ref, candidate) -> float:
    """Signal-to-noise ratio in dB with deviation from the reference as noise.

    Returns +inf when the candidate matches the reference exactly.
    """
    x = np.asarray(ref, dtype=np.float64)
    y = np.asarray(candidate, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch {x.shape} vs {y.shape}")
    signal = float(np.sum(x**2))
    if signal == 0.0:
        raise ValueError("reference is all-zero; SNR undefined")
    noise = float(np.sum((y - x) ** 2))
    if noise == 0.0:
        return float("inf")
    return 10.0 * math.log10(signal / noise)


@dataclass(frozen=True)
class BlandAltmanResult:
    means: np.ndarray
    diffs: np.ndarray
    mean_diff: float
    sd_diff: float
    lower: float
    upper: float


def bland_altman(pred, ref) -> BlandAltmanResult:
    """Pointwise (mean, diff) pairs with mean difference +/- 1.96 SD limits.

    diff = pred - ref; the SD uses the sample formula (n - 1).
    """
    p = np.asarray(pred, dtype=np.float64)
    r = np.asarray(ref, dtype=np.float64)
    if p.shape != r.shape:
        raise ValueError(f"length mismatch {p.shape} vs {r.shape}")
    diffs = p - r
    means = (p + r) / 2.0
    mean_diff = float(np.mean(diffs))
    sd = float(np.std(diffs, ddof=1)) if diffs.size > 1 else 0.0
    return BlandAltmanResult(
        means=means,
        diffs=diffs,
        mean_diff=mean_diff,
        sd_diff=sd,
        lower=mean_diff - 1.96 * sd,
        upper=mean_diff + 1.96 * sd,
    )


def summarize_component(pred_series, ref_series) -> dict:
    """Aggregate accuracy statistics for one component over a set of impacts.

    ``pred_series`` and ``ref_series`` are parallel lists of per-impact 1-D
    arrays. Pointwise MAE/RMSE are averaged over impacts; peak statistics need
    at least 3 impacts and non-degenerate reference peaks, otherwise they are
    NaN. The returned dict also carries the per-impact RMSE and PAE
    populations used by the significance test.
    """
    if len(pred_series) != len(ref_series) or not pred_series:
        raise ValueError("need matching, non-empty prediction/reference lists")
    maes = []
    rmses = []
    snrs = []
    for p, r in zip(pred_series, ref_series):
        mae, rmse = pointwise_errors(p, r)
        maes.append(mae)
        rmses.append(rmse)
        if float(np.sum(np.asarray(r, dtype=np.float64) ** 2)) > 0.0:
            snrs.append(snr_db(r, p))
    stats = {
        "n_impacts": len(pred_series),
        "mae": float(np.mean(maes)),
        "rmse": float(np.mean(rmses)),
        "snr_db": float(np.mean(snrs)) if snrs else float("nan"),
        "per_impact_rmse": [float(v) for v in rmses],
    }
    if len(pred_series) >= 3:
        peaks = peak_metrics(pred_series, ref_series)
        stats.update(
            {
                "pae": float(np.mean(peaks.pae)),
                "peak_rmse": peaks.peak_rmse,
                "peak_r2": peaks.peak_r2,
                "peak_pearson": peaks.pearson,
                "peak_spearman": peaks.spearman,
                "degenerate_peaks": peaks.degenerate,
                "per_impact_pae": [float(v) for v in peaks.pae],
            }
        )
    else:
        stats.update(
            {
                "pae": float("nan"),
                "peak_rmse": float("nan"),
                "peak_r2": float("nan"),
                "peak_pearson": float("nan"),
                "peak_spearman": float("nan"),
                "degenerate_peaks": True,
                "per_impact_pae": [
                    float(np.abs(np.max(np.abs(p)) - np.max(np.abs(r))))
                    for p, r in zip(pred_series, ref_series)
                ],
            }
        )
    return stats


def _wilcoxon_entry(original_errors, denoised_errors) -> dict:
    try:
        result = wilcoxon_signed_rank(original_errors, denoised_errors)
    except ValueError as exc:
        return {"rejected": str(exc)}
    return {
        "w_statistic": result.w_statistic,
        "n_effective": result.n_effective,
        "p_value": result.p_value,
        "method": result.method,
        "alternative": result.alternative,
    }


def build_error_report(original_map, denoised_map, reference_map) -> dict:
    """Evaluation report over components and model variants.

    Each argument maps a component name to a list of per-impact 1-D arrays.
    The report carries per-variant accuracy statistics, input/output SNR, a
    paired signed-rank comparison of the original-vs-reference and
    denoised-vs-reference error populations, and Bland-Altman limits.
    """
    components = {}
    for name in original_map:
        original = summarize_component(original_map[name], reference_map[name])
        denoised = summarize_component(denoised_map[name], reference_map[name])
        orig_rmse = original.pop("per_impact_rmse")
        den_rmse = denoised.pop("per_impact_rmse")
        orig_pae = original.pop("per_impact_pae")
        den_pae = denoised.pop("per_impact_pae")
        ba = {}
        for variant, series in (("original", original_map), ("denoised", denoised_map)):
            pooled_pred = np.concatenate([np.asarray(s) for s in series[name]])
            pooled_ref = np.concatenate([np.asarray(s) for s in reference_map[name]])
            limits = bland_altman(pooled_pred, pooled_ref)
            ba[variant] = {
                "mean_diff": limits.mean_diff,
                "sd_diff": limits.sd_diff,
                "lower": limits.lower,
                "upper": limits.upper,
            }
        components[name] = {
            "original": original,
            "denoised": denoised,
            "snr_in_db": original["snr_db"],
            "snr_out_db": denoised["snr_db"],
            "wilcoxon": {
                "rmse": _wilcoxon_entry(orig_rmse, den_rmse),
                "pae": _wilcoxon_entry(orig_pae, den_pae),
            },
            "bland_altman": ba,
        }
    return {"format_version": 1, "components": components}


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank test

EXACT_LIMIT = 20


@dataclass(frozen=True)
class WilcoxonResult:
    w_statistic: float
    n_effective: int
    p_value: float
    method: str
    alternative: str


def _signed_rank_distribution(double_ranks) -> np.ndarray:
    """Counts of each achievable doubled W+ over all 2^n sign assignments."""
    total = int(sum(double_ranks))
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in double_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: counts.size - r]
        counts += shifted
    return counts


def _phi(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def wilcoxon_signed_rank(a, b, alternative: str = "two_sided") -> WilcoxonResult:
    """Paired signed-rank test on a - b.

    Zero differences are dropped; absolute differences receive average ranks.
    The p-value is exact (distribution over all 2^n sign assignments) for
    n <= 20 and a tie-corrected normal approximation with 0.5 continuity
    correction beyond that. Fewer than 5 effective pairs are rejected.
    """
    if alternative not in ("two_sided", "less", "greater"):
        raise ValueError(f"unknown alternative {alternative!r}")
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("paired samples must be equal-length vectors")
    d = x - y
    d = d[d != 0.0]
    n = d.size
    if n < 5:
        raise ValueError(
            f"only {n} non-zero differences; need at least 5 for a signed-rank p-value"
        )
    ranks = _average_ranks(np.abs(d))
    w_plus = float(np.sum(ranks[d > 0]))
    w_minus = float(np.sum(ranks[d < 0]))
    w = min(w_plus, w_minus)
    total = n * (n + 1) / 2.0

    if n <= EXACT_LIMIT:
        double_ranks = [int(round(2.0 * r)) for r in ranks]
        counts = _signed_rank_distribution(double_ranks)
        denom = 2.0**n
        s2 = int(sum(double_ranks))

        def cdf_leq(value: float) -> float:
            idx = int(math.floor(2.0 * value + 1e-9))
            idx = min(max(idx, -1), s2)
            return float(np.sum(counts[: idx + 1])) / denom

        if alternative == "two_sided":
            lo = cdf_leq(w)
            hi = 1.0 - cdf_leq(total - w - 0.25)  # P(W+ >= total - w), half-rank safe
            p = min(1.0, lo + hi) if total - w > w else 1.0
        elif alternative == "less":
            p = cdf_leq(w_plus)
        else:
            p = 1.0 - cdf_leq(w_plus - 0.25)
        method = "exact"
    else:
        _, tie_counts = np.unique(np.abs(d), return_counts=True)
        mu = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0 - float(
            np.sum(tie_counts**3 - tie_counts)
        ) / 48.0
        sd = math.sqrt(var)
        if alternative == "two_sided":
            p = min(1.0, 2.0 * _phi((w - mu + 0.5) / sd))
        elif alternative == "less":
            p = _phi((w_plus - mu + 0.5) / sd)
        else:
            p = _phi((mu - w_plus + 0.5) / sd)
        method = "normal_approx"

    return WilcoxonResult(
        w_statistic=w,
        n_effective=n,
        p_value=float(p),
        method=method,
        alternative=alternative,
    )
