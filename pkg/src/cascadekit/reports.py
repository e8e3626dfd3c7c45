"""Plain-text report assembly: AUC, cost, calibration, and bootstrap tables.

Everything here is deterministic given the inputs; reports carry no
timestamps so a rerun under the same config is byte-identical.
"""

from __future__ import annotations

import numpy as np

from .calibration import auroc, bin_targets, brier, ece, fit_entropy_bins, reliability_table, smece
from .config import RunConfig, SEED_BOOTSTRAP, SEED_CALIBRATION
from .confidence import final_distributions, final_entropies
from .deferral import DeferralScores, backward_correctness_confidence
from .evaluation import (
    CostModel,
    DeferralCurve,
    auc,
    bootstrap_auc_ci,
    cost_reduction,
    deferral_curve,
    deferred_prompt_length,
    large_correct_vector,
    oracle_curve,
    rate_to_match,
    small_correct_vector,
)
from .forest import derive_seed
from .proxy import oracle_forward_confidences
from .records import Dataset


def _fmt(x: float | None, width: int = 10) -> str:
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return "-".rjust(width)
    return f"{x:.6f}".rjust(width)


def _rule(n: int = 72) -> str:
    return "-" * n


def auc_table(
    curves: dict[str, DeferralCurve], uppers: tuple[float, ...], oracle: DeferralCurve | None
) -> str:
    lines = ["Deferral AUC by method (un-normalized trapezoid over [0, upper])", _rule()]
    header = "method".ljust(14) + "".join(f"auc@{u:g}".rjust(12) for u in uppers)
    lines.append(header)
    for name, curve in curves.items():
        lines.append(name.ljust(14) + "".join(_fmt(auc(curve, u), 12) for u in uppers))
    if oracle is not None:
        lines.append("oracle".ljust(14) + "".join(_fmt(auc(oracle, u), 12) for u in uppers))
    return "\n".join(lines)


def rate_match_table(
    curves: dict[str, DeferralCurve],
    points: tuple[float, ...],
    cm: CostModel,
    method_a: str = "bidir",
    method_b: str = "maxprob",
) -> str | None:
    """Rate method_a needs to match method_b's accuracy, with cost reduction."""
    if method_a not in curves or method_b not in curves:
        return None
    lines = [
        f"Deferral rate of {method_a} matching {method_b} accuracy "
        f"(cost ratio {cm.cost_ratio:.4f})",
        _rule(),
        "r0".rjust(6) + "r_matched".rjust(12) + "cost_reduction".rjust(16),
    ]
    for r0 in points:
        r1 = rate_to_match(curves[method_a], curves[method_b], r0)
        if r1 is None:
            lines.append(f"{r0:6.2f}" + "never".rjust(12) + "-".rjust(16))
        else:
            red = cost_reduction(r0, r1, cm)
            lines.append(f"{r0:6.2f}" + f"{r1:.4f}".rjust(12) + f"{100 * red:.1f}%".rjust(16))
    return "\n".join(lines)


def _calibration_rows(confidences: dict[str, np.ndarray], correct: np.ndarray) -> str:
    lines = ["method".ljust(14) + "auroc".rjust(10) + "brier".rjust(10) + "ece".rjust(10) + "smece".rjust(10)]
    for name, conf in confidences.items():
        lines.append(
            name.ljust(14)
            + _fmt(auroc(conf, correct))
            + _fmt(brier(conf, correct))
            + _fmt(ece(conf, correct))
            + _fmt(smece(conf, correct))
        )
    return "\n".join(lines)


def _insample_entbin_confidence(
    h: np.ndarray, correct: np.ndarray, n_bins: int, mode: str
) -> np.ndarray:
    """Each sample's own bin accuracy on the full set: the in-sample EntBin
    calibrator, whose ECE is zero by construction."""
    binning = fit_entropy_bins(h, correct, n_bins, mode)
    return bin_targets(binning, h)


def small_model_confidences(cfg: RunConfig, ds: Dataset) -> dict[str, np.ndarray]:
    """Confidence-in-small-correctness per calibration method."""
    dist = final_distributions(ds)
    h = final_entropies(ds)
    correct = small_correct_vector(ds).astype(np.float64)
    backint_conf = backward_correctness_confidence(
        ds, cfg.k_folds, derive_seed(cfg.seed, SEED_CALIBRATION), cfg.forest
    )
    return {
        "maxprob": dist.max(axis=1),
        "entbin": _insample_entbin_confidence(h, correct, cfg.n_bins, cfg.entbin_mode),
        "backint": backint_conf,
    }


def large_model_confidences(
    cfg: RunConfig, ds: Dataset, forward_values: np.ndarray | None
) -> dict[str, np.ndarray]:
    """Confidence-in-large-correctness: realized max-prob, entropy binning on
    large outputs, and the forward proxy (when available)."""
    maxp = oracle_forward_confidences(ds)
    probs = np.stack([r.large_final_probs for r in ds.records])
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0, probs * np.log(probs), 0.0)
    h = -terms.sum(axis=1)
    correct = large_correct_vector(ds).astype(np.float64)
    out = {
        "maxprob": maxp,
        "entbin": _insample_entbin_confidence(h, correct, cfg.n_bins, cfg.entbin_mode),
    }
    if forward_values is not None:
        out["aux_forward"] = forward_values
    return out


def bootstrap_table(
    cfg: RunConfig,
    scores: dict[str, DeferralScores],
    ds: Dataset,
    baseline: str = "maxprob",
) -> str | None:
    if baseline not in scores:
        return None
    challengers = [m for m in ("bidir", "backint") if m in scores]
    if not challengers:
        return None
    lines = [
        f"Bootstrap AUC improvement over {baseline} "
        f"({cfg.bootstrap.n_resamples} resamples, {cfg.bootstrap.level:.0%} CI)",
        _rule(),
        "method".ljust(14) + "upper".rjust(7) + "mean".rjust(11) + "ci_lo".rjust(11)
        + "ci_hi".rjust(11) + "  significant",
    ]
    for m in challengers:
        for i, u in enumerate(cfg.auc_uppers):
            res = bootstrap_auc_ci(
                scores[m],
                scores[baseline],
                ds,
                upper=u,
                n_resamples=cfg.bootstrap.n_resamples,
                level=cfg.bootstrap.level,
                seed=derive_seed(cfg.seed, SEED_BOOTSTRAP + i),
            )
            lines.append(
                m.ljust(14)
                + f"{u:g}".rjust(7)
                + _fmt(res.mean, 11)
                + _fmt(res.lo, 11)
                + _fmt(res.hi, 11)
                + ("  yes" if res.significant else "  no")
            )
    return "\n".join(lines)


def prompt_length_table(
    scores: dict[str, DeferralScores], ds: Dataset, rate: float = 0.2
) -> str | None:
    if any(r.prompt_length is None for r in ds.records):
        return None
    lines = [
        f"Mean prompt length of deferred samples at rate {rate:g}",
        _rule(),
        "method".ljust(14) + "mean_tokens".rjust(12),
    ]
    for name, s in scores.items():
        v = deferred_prompt_length(s, ds, rate)
        lines.append(name.ljust(14) + f"{v:.2f}".rjust(12))
    return "\n".join(lines)


def build_report(
    cfg: RunConfig,
    ds: Dataset,
    scores: dict[str, DeferralScores],
    forward_values: np.ndarray | None,
) -> str:
    curves = {name: deferral_curve(s, ds) for name, s in scores.items()}
    oracle = oracle_curve(ds)
    small_acc = int(small_correct_vector(ds).sum()) / len(ds)
    large_acc = int(large_correct_vector(ds).sum()) / len(ds)
    sections = [
        "cascadekit report",
        "=" * 72,
        f"records: {cfg.records}",
        f"n={len(ds)} n_labels={ds.n_labels} layers={ds.n_layers} "
        f"small_acc={small_acc:.6f} large_acc={large_acc:.6f}",
        "",
        auc_table(curves, cfg.auc_uppers, oracle),
    ]
    rm = rate_match_table(curves, cfg.rate_match_points, CostModel(cfg.cost_ratio))
    if rm is not None:
        sections += ["", rm]
    bs = bootstrap_table(cfg, scores, ds)
    if bs is not None:
        sections += ["", bs]
    sections += [
        "",
        "Small-model calibration (out-of-fold where fitted)",
        _rule(),
        _calibration_rows(small_model_confidences(cfg, ds), small_correct_vector(ds).astype(float)),
        "",
        "Large-model calibration",
        _rule(),
        _calibration_rows(
            large_model_confidences(cfg, ds, forward_values),
            large_correct_vector(ds).astype(float),
        ),
    ]
    pl = prompt_length_table(scores, ds)
    if pl is not None:
        sections += ["", pl]
    return "\n".join(sections) + "\n"


def reliability_exports(cfg: RunConfig, ds: Dataset) -> dict[str, list]:
    """Reliability tables for the small-model calibration methods."""
    correct = small_correct_vector(ds).astype(float)
    return {
        name: reliability_table(conf, correct, cfg.n_bins)
        for name, conf in small_model_confidences(cfg, ds).items()
    }
