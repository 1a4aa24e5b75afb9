"""Accuracy metrics, regime-wise error statistics, and interpretability.

Metrics (R^2, MAPE, sMAPE, RMSE) are computed on the physical dose scale.
Permutation importance deliberately scores in log space (the training
objective's space) while the ablation study reports physical-space RMSE;
the two conventions differ on purpose and both are stated here and on the
functions. Negative permutation deltas are clipped to zero before row
normalization (normalizing signed rows is ill-defined).
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .datasets import FEATURE_NAMES, DoseTable, inverse_target, transform
from .trees import BoostedHyper, ForestHyper, fit_boosted, fit_forest

__all__ = [
    "MetricSet",
    "ImportanceResult",
    "AblationTable",
    "metrics",
    "regime_stats",
    "conditional_permutation_importance",
    "exhaustive_ablation",
    "metrics_table_csv",
    "regime_stats_csv",
    "importance_csv",
    "ablation_csv",
    "ablation_curve_csv",
]


@dataclass(frozen=True)
class MetricSet:
    """Goodness-of-fit plus relative-error metrics on the physical dose scale.

    r2 <= 1; mape unbounded above; smape bounded in [0, 200]; rmse in dose
    units (uSv/hr).
    """

    r2: float
    mape_percent: float
    smape_percent: float
    rmse_physical: float


def metrics(y_true, y_pred) -> MetricSet:
    """R^2 = 1 - SS_res/SS_tot, MAPE = (100/N) sum |y-yh|/|y|,
    sMAPE = (100/N) sum 2|y-yh| / (|y| + |yh|).

    Requires equal lengths >= 2 and positive y_true; zero-variance y_true is
    an error (R^2 undefined), never a silent NaN.
    """
    yt = np.asarray(y_true, dtype=float)
    yp = np.asarray(y_pred, dtype=float)
    if yt.shape != yp.shape or yt.ndim != 1 or yt.size < 2:
        raise ValueError("need equal-length 1-D inputs with at least 2 points")
    if np.any(yt <= 0):
        raise ValueError("y_true must be positive (physical doses)")
    ss_tot = float(np.sum((yt - yt.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("R^2 undefined: y_true has zero variance")
    ss_res = float(np.sum((yt - yp) ** 2))
    r2 = 1.0 - ss_res / ss_tot
    mape = float(100.0 * np.mean(np.abs(yt - yp) / np.abs(yt)))
    smape = float(100.0 * np.mean(2.0 * np.abs(yt - yp) / (np.abs(yt) + np.abs(yp))))
    rmse = float(np.sqrt(np.mean((yt - yp) ** 2)))
    return MetricSet(r2=r2, mape_percent=mape, smape_percent=smape, rmse_physical=rmse)


def regime_stats(y_true, y_pred, group_keys) -> dict:
    """Per-group relative-error summaries: median and the 10th/90th
    percentiles of 100 |y - yh| / y, percentiles by linear interpolation
    between closest ranks."""
    yt = np.asarray(y_true, dtype=float)
    yp = np.asarray(y_pred, dtype=float)
    keys = np.asarray(group_keys)
    if not (len(yt) == len(yp) == len(keys)):
        raise ValueError("inputs must have equal length")
    rel = 100.0 * np.abs(yt - yp) / yt
    out: dict = {}
    for g in sorted(set(keys.tolist())):
        sel = rel[keys == g]
        if sel.size == 0:
            raise ValueError(f"empty group {g!r}")
        p10, median, p90 = np.percentile(sel, [10.0, 50.0, 90.0])
        out[g] = {"median": float(median), "p10": float(p10), "p90": float(p90),
                  "count": int(sel.size)}
    return out


@dataclass(frozen=True)
class ImportanceResult:
    """Radionuclide-conditional permutation importance.

    raw[r, f] is the mean log-space MSE increase from permuting feature f
    within radionuclide r's test subset; normalized rows sum to one after
    clipping negative deltas to zero.
    """

    radionuclides: tuple[str, ...]
    feature_names: tuple[str, ...]
    raw: np.ndarray
    normalized: np.ndarray


def conditional_permutation_importance(
    model,
    test: DoseTable,
    repeats: int = 10,
    seed: int = 0,
) -> ImportanceResult:
    """Permutation importance conditioned on radionuclide subsets.

    For radionuclide r and feature f, permutes column f within the rows of
    r only and records the increase in log-space MSE over the unpermuted
    baseline, averaged over seeded repeats. Permuting a column that is
    constant within the subset (the radionuclide column itself) is an exact
    no-op, so its raw importance is exactly zero.
    """
    if repeats < 5:
        raise ValueError("repeats must be >= 5")
    X, y = transform(model.preprocessor, test)
    names = sorted(set(test.nuclides.tolist()))
    n_feat = X.shape[1]
    raw = np.zeros((len(names), n_feat))
    ss_root = np.random.SeedSequence(seed)
    children = ss_root.spawn(len(names) * n_feat)

    for ri, name in enumerate(names):
        sel = np.flatnonzero(test.nuclides == name)
        if sel.size < 20:
            raise ValueError(f"radionuclide subset {name!r} has fewer than 20 rows")
        Xr = X[sel]
        yr = y[sel]
        base_mse = float(np.mean((model.predict_log(Xr) - yr) ** 2))
        for f in range(n_feat):
            rng = np.random.default_rng(children[ri * n_feat + f])
            deltas = []
            for _ in range(repeats):
                perm = rng.permutation(sel.size)
                Xp = Xr.copy()
                Xp[:, f] = Xr[perm, f]
                mse = float(np.mean((model.predict_log(Xp) - yr) ** 2))
                deltas.append(mse - base_mse)
            raw[ri, f] = float(np.mean(deltas))

    clipped = np.clip(raw, 0.0, None)
    sums = clipped.sum(axis=1)
    if np.any(sums <= 0.0):
        bad = [names[i] for i in np.flatnonzero(sums <= 0.0)]
        raise ValueError(f"all-zero importance row(s) for {bad}; model ignores every feature there")
    normalized = clipped / sums[:, None]
    return ImportanceResult(
        radionuclides=tuple(names), feature_names=FEATURE_NAMES,
        raw=raw, normalized=normalized,
    )


@dataclass(frozen=True)
class AblationTable:
    """Physical-space RMSE for every non-empty feature subset, plus the
    order-invariant mean-RMSE curve by subset size."""

    feature_names: tuple[str, ...]
    subsets: tuple[tuple[int, ...], ...]
    rmse: tuple[float, ...]
    mean_rmse_by_size: dict

    def rmse_for(self, subset: tuple[int, ...]) -> float:
        return self.rmse[self.subsets.index(tuple(sorted(subset)))]

    def best_subset_of_size(self, size: int) -> tuple[int, ...]:
        pairs = [(s, r) for s, r in zip(self.subsets, self.rmse) if len(s) == size]
        return min(pairs, key=lambda p: p[1])[0]


def _ablation_worker(args):
    (family, subset, X_train, y_train, X_val, y_val, pre, hyper,
     X_test, dose_test) = args
    try:
        if family == "forest":
            model = fit_forest(X_train, y_train, pre, hyper, feature_columns=subset)
        else:
            model = fit_boosted(X_train, y_train, X_val, y_val, pre, hyper,
                                feature_columns=subset)
        preds = inverse_target(pre, model.predict_log(X_test))
        rmse = float(np.sqrt(np.mean((dose_test - preds) ** 2)))
        return subset, rmse
    except Exception as exc:
        raise RuntimeError(f"ablation retrain failed for subset {subset}: {exc}") from exc


def exhaustive_ablation(
    family: str,
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_val: np.ndarray,
    y_val: np.ndarray,
    preprocessor,
    X_test: np.ndarray,
    dose_test: np.ndarray,
    hyper=None,
    jobs: int = 1,
) -> AblationTable:
    """Retrain the model family from scratch on every non-empty feature
    subset (same hyperparameters and seed) and record physical-space RMSE
    on the unified test set; aggregates mean RMSE per subset size."""
    if family not in ("forest", "boosted"):
        raise ValueError("family must be 'forest' or 'boosted'")
    if hyper is None:
        hyper = ForestHyper() if family == "forest" else BoostedHyper()
    n_feat = X_train.shape[1]
    subsets = [
        tuple(c) for size in range(1, n_feat + 1)
        for c in combinations(range(n_feat), size)
    ]
    tasks = [
        (family, s, X_train, y_train, X_val, y_val, preprocessor, hyper, X_test, dose_test)
        for s in subsets
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_ablation_worker, tasks, chunksize=1))
    else:
        results = [_ablation_worker(t) for t in tasks]
    rmse_by_subset = dict(results)
    rmse = tuple(rmse_by_subset[s] for s in subsets)
    by_size: dict = {}
    for size in range(1, n_feat + 1):
        vals = [r for s, r in zip(subsets, rmse) if len(s) == size]
        by_size[size] = float(np.mean(vals))
    return AblationTable(
        feature_names=FEATURE_NAMES[:n_feat], subsets=tuple(subsets),
        rmse=rmse, mean_rmse_by_size=by_size,
    )


# --- plot-ready text reports ---

def metrics_table_csv(rows: list[tuple[str, str, MetricSet]]) -> str:
    """rows: (training_testing_label, model_name, metric set)."""
    out = ["training_testing,model,r2,mape_percent,smape_percent,rmse_uSv_per_hr"]
    for label, model_name, m in rows:
        out.append(
            f"{label},{model_name},{m.r2:.6f},{m.mape_percent:.4f},"
            f"{m.smape_percent:.4f},{m.rmse_physical:.6e}"
        )
    return "\n".join(out) + "\n"


def regime_stats_csv(stats: dict, group_label: str) -> str:
    out = [f"{group_label},count,median_rel_err_percent,p10_rel_err_percent,p90_rel_err_percent"]
    for g, s in stats.items():
        out.append(f"{g},{s['count']},{s['median']:.6f},{s['p10']:.6f},{s['p90']:.6f}")
    return "\n".join(out) + "\n"


def importance_csv(result: ImportanceResult, which: str = "normalized") -> str:
    mat = result.normalized if which == "normalized" else result.raw
    out = ["radionuclide," + ",".join(result.feature_names)]
    for name, row in zip(result.radionuclides, mat):
        out.append(name + "," + ",".join(f"{v:.8e}" for v in row))
    return "\n".join(out) + "\n"


def ablation_csv(table: AblationTable) -> str:
    out = ["subset,size,rmse_uSv_per_hr"]
    for s, r in zip(table.subsets, table.rmse):
        label = "+".join(table.feature_names[i] for i in s)
        out.append(f"{label},{len(s)},{r:.8e}")
    return "\n".join(out) + "\n"


def ablation_curve_csv(table: AblationTable) -> str:
    out = ["n_active_features,mean_rmse_uSv_per_hr"]
    for size in sorted(table.mean_rmse_by_size):
        out.append(f"{size},{table.mean_rmse_by_size[size]:.8e}")
    return "\n".join(out) + "\n"
