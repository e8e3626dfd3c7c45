"""Pipeline operations behind the service endpoints and CLI subcommands.

Each operation takes a RunConfig, reads/writes files under the configured
directories, and returns a JSON-serializable summary. Sub-seeds are derived
from the master seed with fixed labels, so any run is reproducible from its
config alone.
"""

from __future__ import annotations

import os

import numpy as np

from .calibration import save_reliability_table
from .config import (
    RunConfig,
    SEED_FOLDS,
    SEED_METHOD,
    SEED_PROXY,
    SEED_SCORER,
    SEED_SWEEP_POOL,
    SEED_BOOTSTRAP,
)
from .deferral import (
    DeferralScores,
    build_scorer,
    export_scores_tsv,
    load_scorer,
    load_scores,
    save_scorer,
    save_scores,
    train_deferral,
)
from .errors import DataError
from .evaluation import (
    auc,
    bootstrap_auc_ci,
    deferral_curve,
    large_accuracy,
    oracle_curve,
    save_curve,
    small_accuracy,
)
from .forest import ForestConfig, derive_seed
from .proxy import (
    forward_confidences,
    out_of_fold_forward_values,
    save_proxy,
    subsample_proxy_train,
    train_forward_proxy,
)
from .records import Dataset, assign_folds, load_dataset, save_dataset
from .reports import build_report, reliability_exports
from .synth import generate_world


def _ensure_dir(path: str) -> None:
    if path:
        os.makedirs(path, exist_ok=True)


def _scores_path(cfg: RunConfig, method: str) -> str:
    return os.path.join(cfg.artifacts_dir, f"scores_{method}.json")


def _proxy_path(cfg: RunConfig) -> str:
    return os.path.join(cfg.artifacts_dir, "proxy.json")


def _forward_values_path(cfg: RunConfig) -> str:
    return os.path.join(cfg.artifacts_dir, "forward_values.tsv")


def load_prepared_dataset(cfg: RunConfig) -> Dataset:
    """Load the record file and fill in missing folds (seeded)."""
    ds = load_dataset(cfg.records)
    return assign_folds(ds, cfg.k_folds, derive_seed(cfg.seed, SEED_FOLDS))


def _proxy_forest_config(cfg: RunConfig) -> ForestConfig:
    base = cfg.effective_proxy_forest()
    return ForestConfig(
        n_trees=base.n_trees,
        max_depth=base.max_depth,
        min_leaf=base.min_leaf,
        features_per_split=base.features_per_split,
        seed=derive_seed(cfg.seed, SEED_PROXY),
    )


def _bidir_forward_values(cfg: RunConfig, ds: Dataset, pool: np.ndarray | None = None) -> np.ndarray:
    """Forward confidences used as the bidir feature: cross-fitted per fold
    by default, or one in-sample proxy when proxy.cross_fit is false."""
    if cfg.proxy.cross_fit:
        return out_of_fold_forward_values(
            ds,
            mode=cfg.proxy.mode,
            k_folds=cfg.k_folds,
            config=_proxy_forest_config(cfg),
            n_bins=cfg.n_bins,
            pool=pool,
        )
    train_ds = ds
    if pool is not None:
        from .records import subset

        train_ds = subset(ds, np.flatnonzero(pool))
    proxy = train_forward_proxy(train_ds, cfg.proxy.mode, _proxy_forest_config(cfg), cfg.n_bins)
    return forward_confidences(proxy, ds)


def _subsample_pool(cfg: RunConfig, n: int, fraction: float, label: int) -> np.ndarray | None:
    if fraction >= 1.0:
        return None
    rng = np.random.default_rng(derive_seed(cfg.seed, SEED_SWEEP_POOL + label))
    m = int(np.ceil(fraction * n - 1e-9))
    pool = np.zeros(n, dtype=bool)
    pool[rng.choice(n, size=m, replace=False)] = True
    return pool


def op_gen(cfg: RunConfig) -> dict:
    """Generate a synthetic world and write it to cfg.records."""
    if cfg.world is None:
        raise DataError("config has no `world` section; `gen` needs one")
    ds = generate_world(cfg.world)
    parent = os.path.dirname(cfg.records)
    _ensure_dir(parent)
    save_dataset(ds, cfg.records)
    return {
        "records": cfg.records,
        "n": len(ds),
        "small_accuracy": small_accuracy(ds),
        "large_accuracy": large_accuracy(ds),
    }


def op_validate(cfg: RunConfig) -> dict:
    """Schema-check the record file; raises DataError on the first problem."""
    ds = load_dataset(cfg.records)
    n_large = sum(1 for r in ds.records if r.large_final_probs is not None)
    return {
        "ok": True,
        "records": cfg.records,
        "n": len(ds),
        "n_labels": ds.n_labels,
        "n_layers": ds.n_layers,
        "embedding_dim": ds.embedding_dim,
        "with_large_outputs": n_large,
    }


def op_train_proxy(cfg: RunConfig) -> dict:
    """Train the forward proxy (optionally on a subsample) and save it."""
    ds = load_prepared_dataset(cfg)
    train_ds = subsample_proxy_train(
        ds, cfg.proxy.subsample_fraction, derive_seed(cfg.seed, SEED_SWEEP_POOL)
    )
    proxy = train_forward_proxy(train_ds, cfg.proxy.mode, _proxy_forest_config(cfg), cfg.n_bins)
    _ensure_dir(cfg.artifacts_dir)
    save_proxy(proxy, _proxy_path(cfg))
    return {
        "artifact": _proxy_path(cfg),
        "n_train": len(train_ds),
        "target_mode": proxy.target_mode,
        "train_mse": proxy.train_mse,
    }


def op_train_deferral(cfg: RunConfig) -> dict:
    """Out-of-fold scores plus a deployment scorer for every method."""
    ds = load_prepared_dataset(cfg)
    _ensure_dir(cfg.artifacts_dir)
    forward_values = None
    if "bidir" in cfg.methods:
        pool = _subsample_pool(cfg, len(ds), cfg.proxy.subsample_fraction, 0)
        forward_values = _bidir_forward_values(cfg, ds, pool)
        np.savetxt(_forward_values_path(cfg), forward_values)
    summary: dict = {"methods": {}}
    for method in cfg.methods:
        scores = train_deferral(
            ds,
            method,
            forward_values=forward_values if method == "bidir" else None,
            k_folds=cfg.k_folds,
            seed=derive_seed(cfg.seed, SEED_METHOD[method]),
            forest=cfg.forest,
            n_bins=cfg.n_bins,
            entbin_mode=cfg.entbin_mode,
        )
        save_scores(scores, _scores_path(cfg, method))
        export_scores_tsv(scores, os.path.join(cfg.artifacts_dir, f"scores_{method}.tsv"))
        deploy_proxy = None
        if method == "bidir":
            deploy_proxy = train_forward_proxy(
                ds, cfg.proxy.mode, _proxy_forest_config(cfg), cfg.n_bins
            )
        scorer = build_scorer(
            ds,
            method,
            proxy=deploy_proxy,
            seed=derive_seed(cfg.seed, SEED_SCORER + SEED_METHOD[method]),
            forest=cfg.forest,
            n_bins=cfg.n_bins,
            entbin_mode=cfg.entbin_mode,
        )
        save_scorer(scorer, os.path.join(cfg.artifacts_dir, f"scorer_{method}.json"))
        summary["methods"][method] = {
            "scores": _scores_path(cfg, method),
            "scorer": os.path.join(cfg.artifacts_dir, f"scorer_{method}.json"),
            "degenerate_folds": list(scores.degenerate_folds),
        }
    return summary


def _load_all_scores(cfg: RunConfig) -> dict[str, DeferralScores]:
    out = {}
    for method in cfg.methods:
        path = _scores_path(cfg, method)
        if not os.path.exists(path):
            raise DataError(f"missing scores artifact {path}; run train-deferral first")
        out[method] = load_scores(path)
    return out


def op_curves(cfg: RunConfig) -> dict:
    """Write one (rate, accuracy) file per method plus the oracle curve."""
    ds = load_prepared_dataset(cfg)
    scores = _load_all_scores(cfg)
    _ensure_dir(cfg.reports_dir)
    files = []
    endpoints = {}
    for method, s in scores.items():
        curve = deferral_curve(s, ds)
        path = os.path.join(cfg.reports_dir, f"curve_{method}.tsv")
        save_curve(curve, path)
        files.append(path)
        endpoints[method] = {
            "accuracy_at_0": curve.accuracies[0],
            "accuracy_at_1": curve.accuracies[-1],
        }
    opath = os.path.join(cfg.reports_dir, "curve_oracle.tsv")
    save_curve(oracle_curve(ds), opath)
    files.append(opath)
    return {"files": files, "endpoints": endpoints}


def op_report(cfg: RunConfig) -> dict:
    """Full text report: AUC, rate-match/cost, bootstrap, calibration."""
    ds = load_prepared_dataset(cfg)
    scores = _load_all_scores(cfg)
    forward_values = None
    fv_path = _forward_values_path(cfg)
    if os.path.exists(fv_path):
        forward_values = np.loadtxt(fv_path)
    _ensure_dir(cfg.reports_dir)
    text = build_report(cfg, ds, scores, forward_values)
    report_path = os.path.join(cfg.reports_dir, "report.txt")
    with open(report_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    files = [report_path]
    for name, rows in reliability_exports(cfg, ds).items():
        path = os.path.join(cfg.reports_dir, f"reliability_{name}.tsv")
        save_reliability_table(rows, path)
        files.append(path)
    return {"files": files, "report": report_path}


def op_sweep(cfg: RunConfig) -> dict:
    """Proxy training-set-size ablation: bidir AUC per subsample fraction,
    bracketed by rand and the oracle-aux variant."""
    ds = load_prepared_dataset(cfg)
    rows = []

    def auc_row(label: str, scores: DeferralScores) -> dict:
        curve = deferral_curve(scores, ds)
        row = {"label": label}
        for u in cfg.auc_uppers:
            res = bootstrap_auc_ci(
                scores,
                None,
                ds,
                upper=u,
                n_resamples=cfg.bootstrap.n_resamples,
                level=cfg.bootstrap.level,
                seed=derive_seed(cfg.seed, SEED_BOOTSTRAP),
            )
            row[f"auc@{u:g}"] = auc(curve, u)
            row[f"ci@{u:g}"] = [res.lo, res.hi]
        return row

    rand_scores = train_deferral(
        ds, "rand", k_folds=cfg.k_folds, seed=derive_seed(cfg.seed, SEED_METHOD["rand"])
    )
    rows.append(auc_row("rand", rand_scores))
    for i, fraction in enumerate(cfg.sweep_fractions):
        pool = _subsample_pool(cfg, len(ds), fraction, i)
        fv = _bidir_forward_values(cfg, ds, pool)
        scores = train_deferral(
            ds,
            "bidir",
            forward_values=fv,
            k_folds=cfg.k_folds,
            seed=derive_seed(cfg.seed, SEED_METHOD["bidir"]),
            forest=cfg.forest,
            n_bins=cfg.n_bins,
        )
        rows.append(auc_row(f"bidir_aux{int(round(100 * fraction))}", scores))
    oracle_scores = train_deferral(
        ds,
        "bidir_oracle",
        k_folds=cfg.k_folds,
        seed=derive_seed(cfg.seed, SEED_METHOD["bidir_oracle"]),
        forest=cfg.forest,
        n_bins=cfg.n_bins,
    )
    rows.append(auc_row("bidir_oracle", oracle_scores))

    _ensure_dir(cfg.reports_dir)
    path = os.path.join(cfg.reports_dir, "sweep.txt")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("Proxy training-set-size sweep (bidir deferral)\n")
        fh.write("-" * 72 + "\n")
        header = "label".ljust(16) + "".join(
            f"auc@{u:g}".rjust(12) + f"ci@{u:g}".rjust(24) for u in cfg.auc_uppers
        )
        fh.write(header + "\n")
        for row in rows:
            line = row["label"].ljust(16)
            for u in cfg.auc_uppers:
                lo, hi = row[f"ci@{u:g}"]
                line += f"{row[f'auc@{u:g}']:.6f}".rjust(12)
                line += f"[{lo:.6f},{hi:.6f}]".rjust(24)
            fh.write(line + "\n")
    return {"rows": rows, "file": path}


def op_decide(cfg: RunConfig, record_obj: dict, method: str, threshold: float) -> dict:
    """Score one record with a saved deployment scorer and route it."""
    from .records import record_from_dict, validate_record

    if method not in cfg.methods:
        raise DataError(f"method {method!r} not in configured methods")
    path = os.path.join(cfg.artifacts_dir, f"scorer_{method}.json")
    if not os.path.exists(path):
        raise DataError(f"missing scorer artifact {path}; run train-deferral first")
    scorer = load_scorer(path)
    record = record_from_dict(record_obj)
    violations = validate_record(record)
    if violations:
        raise DataError(f"record {record.id!r}: " + "; ".join(violations))
    score = scorer.score(record)
    deferred = score > threshold
    prediction: int | None
    if deferred:
        stage = 2
        prediction = (
            int(np.argmax(record.large_final_probs))
            if record.large_final_probs is not None
            else None
        )
    else:
        stage = 1
        prediction = int(np.argmax(record.small_layer_logits[-1]))
    return {
        "id": record.id,
        "method": method,
        "score": score,
        "threshold": threshold,
        "deferred": deferred,
        "stage": stage,
        "prediction": prediction,
    }
