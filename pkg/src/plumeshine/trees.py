"""From-scratch regression trees, bagged forest, and gradient-boosted ensemble.

Split search is exact greedy: candidate thresholds are midpoints between
consecutive distinct feature values present in the node, the criterion is
maximum reduction in the sum of squared deviations, and ties are broken by
the lowest feature index then the lowest threshold. Growth is level-wise and
vectorized: rows stay in per-feature value order and each level groups them
into contiguous node segments with one stable sort, so candidate boundaries,
prefix sums, and segmented argmaxes are flat array passes regardless of node
count. Exact search stays tractable on multi-million-row tables without
histogram approximation.

Randomness comes from numpy's PCG64 via SeedSequence spawning: per-tree and
per-round streams derive from the master seed, so results are independent of
any parallel schedule and byte-reproducible. Changing the seed can only
change bootstrap/subsample/feature-subset draws, never the split-search rule.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .datasets import Preprocessor, transform_features

__all__ = [
    "TreeParams",
    "RegressionTree",
    "ForestHyper",
    "ForestModel",
    "BoostedHyper",
    "BoostedModel",
    "fit_tree",
    "fit_forest",
    "fit_boosted",
    "predict",
    "predict_dose",
    "save_model",
    "load_model",
    "ModelFormatError",
]


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 15
    max_features: float = 1.0
    min_samples_leaf: int = 1

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if not (0.0 < self.max_features <= 1.0):
            raise ValueError("max_features must lie in (0, 1]")


@dataclass
class RegressionTree:
    """Flattened binary regression tree.

    feature[i] >= 0 marks an internal node with its split feature and
    threshold; feature[i] == -1 marks a leaf whose prediction is value[i]
    (the mean of its training samples).
    """

    feature: np.ndarray  # int32, -1 for leaves
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    value: np.ndarray  # float64
    depth: int
    n_features: int

    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        idx = np.zeros(len(X), dtype=np.int64)
        for _ in range(self.depth + 1):
            feat = self.feature[idx]
            active = np.flatnonzero(feat >= 0)
            if active.size == 0:
                break
            node = idx[active]
            xa = X[active, self.feature[node]]
            go_left = xa <= self.threshold[node]
            idx[active] = np.where(go_left, self.left[node], self.right[node])
        return self.value[idx]

    def leaf_values(self) -> np.ndarray:
        return self.value[self.feature == -1]


def _prepare_codes(X: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Per-feature sorted unique values and the integer-code matrix."""
    X = np.asarray(X, dtype=float)
    uniqs: list[np.ndarray] = []
    codes = np.empty(X.shape, dtype=np.int32)
    for f in range(X.shape[1]):
        u, inv = np.unique(X[:, f], return_inverse=True)
        uniqs.append(u)
        codes[:, f] = inv.astype(np.int32)
    return uniqs, codes


def _grow_tree(
    codes: np.ndarray,
    y: np.ndarray,
    uniqs: list[np.ndarray],
    params: TreeParams,
    feature_rng: np.random.Generator | None,
) -> RegressionTree:
    """Level-wise exact-greedy growth over integer-coded features.

    Rows are kept in per-feature value order (precomputed once); at each
    level a stable sort by node rank groups them into contiguous segments,
    so candidate boundaries, prefix sums, and segmented argmaxes are all
    flat O(n) passes regardless of how many nodes the level holds.
    """
    n, n_features = codes.shape
    if n < 1:
        raise ValueError("empty training input")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")

    n_candidates = math.ceil(params.max_features * n_features)
    min_leaf = params.min_samples_leaf

    # rows in ascending feature-value order, one permutation per feature
    feat_order = [np.argsort(codes[:, f], kind="stable") for f in range(n_features)]

    feature_arr: list[int] = []
    threshold_arr: list[float] = []
    left_arr: list[int] = []
    right_arr: list[int] = []
    value_arr: list[float] = []

    def new_node() -> int:
        feature_arr.append(-1)
        threshold_arr.append(0.0)
        left_arr.append(-1)
        right_arr.append(-1)
        value_arr.append(0.0)
        return len(feature_arr) - 1

    root = new_node()
    # node rank per original row; -1 once the row has settled in a leaf
    node_rank = np.zeros(n, dtype=np.int64)
    level_nodes = [root]
    depth = 0
    max_tree_depth = 0

    while level_nodes and depth <= params.max_depth:
        k = len(level_nodes)
        active = node_rank >= 0
        cnt_tot = np.bincount(node_rank[active], minlength=k).astype(float)
        sum_tot = np.bincount(node_rank[active], weights=y[active], minlength=k)
        mean_tot = sum_tot / cnt_tot

        if depth == params.max_depth:
            for rank, nid in enumerate(level_nodes):
                value_arr[nid] = float(mean_tot[rank])
            break

        splittable = cnt_tot >= max(2, 2 * min_leaf)
        parent_score = sum_tot * sum_tot / cnt_tot

        best_gain = np.full(k, -np.inf)
        best_feat = np.full(k, -1, dtype=np.int64)
        best_code = np.zeros(k, dtype=np.int64)
        best_thr = np.zeros(k)

        if n_candidates < n_features and feature_rng is not None:
            allowed = np.zeros((k, n_features), dtype=bool)
            for rank in range(k):
                chosen = feature_rng.choice(n_features, size=n_candidates, replace=False)
                allowed[rank, chosen] = True
        else:
            allowed = None

        big = np.iinfo(np.int64).max
        for f in range(n_features):
            if len(uniqs[f]) < 2:
                continue
            ordered = feat_order[f][active[feat_order[f]]]
            nr = node_rank[ordered]
            p = np.argsort(nr, kind="stable")  # group by node, keep value order
            ordered = ordered[p]
            nr = nr[p]
            vals = codes[ordered, f]
            cs = np.concatenate(([0.0], np.cumsum(y[ordered])))
            seg_start = np.searchsorted(nr, np.arange(k), side="left")
            # candidate boundaries: same node, distinct adjacent values
            cand = np.flatnonzero((nr[:-1] == nr[1:]) & (vals[:-1] != vals[1:]))
            if cand.size == 0:
                continue
            node_c = nr[cand]
            n_l = (cand + 1 - seg_start[node_c]).astype(float)
            s_l = cs[cand + 1] - cs[seg_start[node_c]]
            n_r = cnt_tot[node_c] - n_l
            s_r = sum_tot[node_c] - s_l
            gain = s_l * s_l / n_l + s_r * s_r / n_r - parent_score[node_c]
            gain[(n_l < min_leaf) | (n_r < min_leaf)] = -np.inf
            # segmented argmax: max gain per node, then its first boundary
            bounds = np.searchsorted(node_c, np.arange(k), side="left")
            has_cand = np.diff(np.append(bounds, cand.size)) > 0
            gmax = np.full(k, -np.inf)
            gmax[has_cand] = np.maximum.reduceat(gain, bounds[has_cand])
            hit = gain == gmax[node_c]
            pick = np.full(k, -1, dtype=np.int64)
            pick_vals = np.where(hit, np.arange(cand.size), big)
            pick[has_cand] = np.minimum.reduceat(pick_vals, bounds[has_cand])
            ok = has_cand & (pick >= 0) & np.isfinite(gmax)
            if allowed is not None:
                ok &= allowed[:, f]
            ok &= splittable
            if not ok.any():
                continue
            sel = np.flatnonzero(ok)
            g_sel = gmax[sel]
            better = g_sel > best_gain[sel]
            upd = sel[better]
            ci = pick[upd]
            best_gain[upd] = gmax[upd]
            best_feat[upd] = f
            left_code = vals[cand[ci]]
            right_code = vals[cand[ci] + 1]
            best_code[upd] = left_code
            best_thr[upd] = 0.5 * (uniqs[f][left_code] + uniqs[f][right_code])

        do_split = splittable & (best_feat >= 0) & (best_gain > 0.0)

        for rank in np.flatnonzero(~do_split):
            value_arr[level_nodes[rank]] = float(mean_tot[rank])

        if not do_split.any():
            max_tree_depth = max(max_tree_depth, depth)
            break

        child_rank = np.full(k, -1, dtype=np.int64)
        next_level: list[int] = []
        for rank in np.flatnonzero(do_split):
            nid = level_nodes[rank]
            lchild = new_node()
            rchild = new_node()
            feature_arr[nid] = int(best_feat[rank])
            threshold_arr[nid] = float(best_thr[rank])
            left_arr[nid] = lchild
            right_arr[nid] = rchild
            child_rank[rank] = len(next_level)
            next_level.extend((lchild, rchild))

        # route rows: children of split nodes, -1 (settled) otherwise
        ranks = node_rank[active]
        in_split = do_split[ranks]
        rows_active = np.flatnonzero(active)
        settled = rows_active[~in_split]
        node_rank[settled] = -1
        moving = rows_active[in_split]
        mranks = ranks[in_split]
        f_per_row = best_feat[mranks]
        go_left = codes[moving, f_per_row] <= best_code[mranks]
        node_rank[moving] = child_rank[mranks] + np.where(go_left, 0, 1)
        level_nodes = next_level
        depth += 1
        max_tree_depth = max(max_tree_depth, depth)

    return RegressionTree(
        feature=np.array(feature_arr, dtype=np.int32),
        threshold=np.array(threshold_arr),
        left=np.array(left_arr, dtype=np.int32),
        right=np.array(right_arr, dtype=np.int32),
        value=np.array(value_arr),
        depth=max_tree_depth,
        n_features=n_features,
    )


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    params: TreeParams | None = None,
    rng: np.random.Generator | None = None,
) -> RegressionTree:
    """Grow a single regression tree by exact-greedy variance reduction."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(X) < 1 or len(X) != len(y):
        raise ValueError("X and y must be non-empty and the same length")
    params = params or TreeParams()
    uniqs, codes = _prepare_codes(X)
    return _grow_tree(codes, y, uniqs, params, rng)


@dataclass(frozen=True)
class ForestHyper:
    n_estimators: int = 60
    max_depth: int = 15
    max_features: float = 1.0
    bootstrap: bool = True
    seed: int = 3007


@dataclass
class ForestModel:
    trees: list[RegressionTree]
    hyper: ForestHyper
    preprocessor: Preprocessor
    feature_columns: tuple[int, ...] = (0, 1, 2, 3)

    @property
    def kind(self) -> str:
        return "forest"

    def predict_log(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)[:, self.feature_columns]
        acc = np.zeros(len(X))
        for t in self.trees:
            acc += t.predict(X)
        return acc / len(self.trees)


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    preprocessor: Preprocessor,
    hyper: ForestHyper | None = None,
    feature_columns: tuple[int, ...] = (0, 1, 2, 3),
) -> ForestModel:
    """Bagged forest: n_estimators trees on seeded bootstrap resamples,
    prediction is the arithmetic mean of tree predictions."""
    hyper = hyper or ForestHyper()
    X = np.asarray(X, dtype=float)[:, feature_columns]
    y = np.asarray(y, dtype=float)
    n = len(X)
    if n < 2:
        raise ValueError("need at least 2 training rows")
    params = TreeParams(max_depth=hyper.max_depth, max_features=hyper.max_features)
    uniqs, codes = _prepare_codes(X)
    streams = np.random.SeedSequence(hyper.seed).spawn(hyper.n_estimators)
    trees: list[RegressionTree] = []
    for ss in streams:
        rng = np.random.default_rng(ss)
        if hyper.bootstrap:
            rows = rng.integers(0, n, size=n)
        else:
            rows = np.arange(n)
        feat_rng = rng if hyper.max_features < 1.0 else None
        trees.append(_grow_tree(codes[rows], y[rows], uniqs, params, feat_rng))
    return ForestModel(trees=trees, hyper=hyper, preprocessor=preprocessor,
                       feature_columns=feature_columns)


@dataclass(frozen=True)
class BoostedHyper:
    learning_rate: float = 0.05
    max_depth: int = 30
    subsample: float = 0.5
    colsample_by_tree: float = 1.0
    rounds: int = 100
    early_stopping_rounds: int = 10
    seed: int = 3007


@dataclass
class BoostedModel:
    base_score: float
    trees: list[RegressionTree]
    hyper: BoostedHyper
    preprocessor: Preprocessor
    feature_columns: tuple[int, ...] = (0, 1, 2, 3)
    val_rmse_trace: list[float] = field(default_factory=list)

    @property
    def kind(self) -> str:
        return "boosted"

    @property
    def best_round(self) -> int:
        return len(self.trees) - 1

    def predict_log(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)[:, self.feature_columns]
        acc = np.full(len(X), self.base_score)
        for t in self.trees:
            acc += self.hyper.learning_rate * t.predict(X)
        return acc


def fit_boosted(
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_val: np.ndarray,
    y_val: np.ndarray,
    preprocessor: Preprocessor,
    hyper: BoostedHyper | None = None,
    feature_columns: tuple[int, ...] = (0, 1, 2, 3),
) -> BoostedModel:
    """Gradient-boosted trees on squared error: each round fits a tree to the
    current residuals over a seeded row subsample; validation RMSE is tracked
    per round and the best-round prefix is kept after early stopping."""
    hyper = hyper or BoostedHyper()
    X_train = np.asarray(X_train, dtype=float)[:, feature_columns]
    X_val = np.asarray(X_val, dtype=float)[:, feature_columns]
    y_train = np.asarray(y_train, dtype=float)
    y_val = np.asarray(y_val, dtype=float)
    if len(X_val) == 0:
        raise ValueError("validation set must be non-empty for early stopping")
    n = len(X_train)
    params = TreeParams(max_depth=hyper.max_depth, max_features=hyper.colsample_by_tree)
    uniqs, codes = _prepare_codes(X_train)
    streams = np.random.SeedSequence(hyper.seed).spawn(hyper.rounds)

    base = float(np.mean(y_train))
    f_train = np.full(n, base)
    f_val = np.full(len(X_val), base)
    trees: list[RegressionTree] = []
    trace: list[float] = []
    best_round = -1
    best_rmse = math.inf

    for k in range(hyper.rounds):
        rng = np.random.default_rng(streams[k])
        if hyper.subsample < 1.0:
            m = max(1, int(round(hyper.subsample * n)))
            rows = np.sort(rng.choice(n, size=m, replace=False))
        else:
            rows = np.arange(n)
        residual = y_train[rows] - f_train[rows]
        feat_rng = rng if hyper.colsample_by_tree < 1.0 else None
        tree = _grow_tree(codes[rows], residual, uniqs, params, feat_rng)
        trees.append(tree)
        f_train += hyper.learning_rate * tree.predict(X_train)
        f_val += hyper.learning_rate * tree.predict(X_val)
        rmse = float(np.sqrt(np.mean((y_val - f_val) ** 2)))
        trace.append(rmse)
        if rmse < best_rmse:
            best_rmse = rmse
            best_round = k
        elif k - best_round >= hyper.early_stopping_rounds:
            break

    kept = trees[: best_round + 1]
    return BoostedModel(
        base_score=base, trees=kept, hyper=hyper, preprocessor=preprocessor,
        feature_columns=feature_columns, val_rmse_trace=trace,
    )


def predict(model, X: np.ndarray) -> np.ndarray:
    """Log-space predictions for a transformed feature matrix."""
    return model.predict_log(X)


def predict_dose(model, nuclides, stabilities, heights, distances) -> np.ndarray:
    """Physical doses (uSv/hr) for raw scenario columns: applies the attached
    preprocessor, predicts in log space, then inverse-transforms."""
    from .datasets import inverse_target

    rows = [
        transform_features(model.preprocessor, n, s, float(h), float(d))[0]
        for n, s, h, d in zip(nuclides, stabilities, heights, distances)
    ]
    X = np.array(rows)
    return inverse_target(model.preprocessor, model.predict_log(X))


# --- serialization: versioned, checksummed text ---

FORMAT_VERSION = "plumeshine-model v1"


class ModelFormatError(ValueError):
    pass


def _floats_csv(arr) -> str:
    return ",".join(repr(float(v)) for v in arr)


def _ints_csv(arr) -> str:
    return ",".join(str(int(v)) for v in arr)


def _tree_lines(t: RegressionTree) -> list[str]:
    return [
        f"tree depth={t.depth} nodes={t.n_nodes()} features={t.n_features}",
        "feature " + _ints_csv(t.feature),
        "threshold " + _floats_csv(t.threshold),
        "left " + _ints_csv(t.left),
        "right " + _ints_csv(t.right),
        "value " + _floats_csv(t.value),
    ]


def _parse_tree(lines: list[str], pos: int) -> tuple[RegressionTree, int]:
    header = lines[pos]
    if not header.startswith("tree "):
        raise ModelFormatError(f"expected tree header, got {header!r}")
    fields = dict(part.split("=") for part in header[5:].split())
    depth = int(fields["depth"])
    n_features = int(fields["features"])

    def arr(line: str, name: str, dtype):
        prefix = name + " "
        if not line.startswith(prefix):
            raise ModelFormatError(f"expected {name} row, got {line!r}")
        return np.array([dtype(v) for v in line[len(prefix):].split(",")],
                        dtype=np.int32 if dtype is int else float)

    tree = RegressionTree(
        feature=arr(lines[pos + 1], "feature", int),
        threshold=arr(lines[pos + 2], "threshold", float),
        left=arr(lines[pos + 3], "left", int),
        right=arr(lines[pos + 4], "right", int),
        value=arr(lines[pos + 5], "value", float),
        depth=depth,
        n_features=n_features,
    )
    return tree, pos + 6


def save_model(model, path) -> None:
    """Lossless text serialization: version tag, sha256 checksum, hyper-
    parameters, preprocessor, and flattened tree arrays."""
    from pathlib import Path

    lines: list[str] = [f"kind: {model.kind}"]
    hyper = model.hyper
    for key, val in vars(hyper).items():
        lines.append(f"hyper.{key}: {val!r}")
    for key, val in model.preprocessor.to_kv().items():
        lines.append(f"preprocessor.{key}: {val}")
    lines.append("feature_columns: " + _ints_csv(model.feature_columns))
    if model.kind == "boosted":
        lines.append(f"base_score: {model.base_score!r}")
        lines.append("val_rmse_trace: " + (_floats_csv(model.val_rmse_trace) or "-"))
    lines.append(f"n_trees: {len(model.trees)}")
    for t in model.trees:
        lines.extend(_tree_lines(t))
    payload = "\n".join(lines) + "\n"
    digest = hashlib.sha256(payload.encode()).hexdigest()
    Path(path).write_text(f"{FORMAT_VERSION}\nsha256 {digest}\n{payload}", encoding="utf-8")


def load_model(path):
    """Load a saved model; raises ModelFormatError on version mismatch,
    truncation, or checksum failure."""
    from pathlib import Path

    text = Path(path).read_text(encoding="utf-8")
    lines_all = text.split("\n")
    if not lines_all or lines_all[0] != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format: {lines_all[0] if lines_all else ''!r}")
    if len(lines_all) < 3 or not lines_all[1].startswith("sha256 "):
        raise ModelFormatError("missing checksum line")
    digest = lines_all[1].split(" ", 1)[1]
    payload = "\n".join(lines_all[2:])
    if hashlib.sha256(payload.encode()).hexdigest() != digest:
        raise ModelFormatError("checksum mismatch: model file corrupted or truncated")

    lines = payload.rstrip("\n").split("\n")
    kv: dict[str, str] = {}
    pos = 0
    while pos < len(lines) and not lines[pos].startswith("n_trees:"):
        key, val = lines[pos].split(":", 1)
        kv[key.strip()] = val.strip()
        pos += 1
    if pos == len(lines):
        raise ModelFormatError("missing n_trees")
    n_trees = int(lines[pos].split(":")[1])
    pos += 1

    kind = kv["kind"]
    pre = Preprocessor.from_kv({
        k[len("preprocessor."):]: v for k, v in kv.items() if k.startswith("preprocessor.")
    })
    feature_columns = tuple(int(v) for v in kv["feature_columns"].split(","))
    hyper_kv = {k[len("hyper."):]: v for k, v in kv.items() if k.startswith("hyper.")}

    trees = []
    for _ in range(n_trees):
        tree, pos = _parse_tree(lines, pos)
        trees.append(tree)

    if kind == "forest":
        hyper = ForestHyper(
            n_estimators=int(hyper_kv["n_estimators"]), max_depth=int(hyper_kv["max_depth"]),
            max_features=float(hyper_kv["max_features"]),
            bootstrap=hyper_kv["bootstrap"] == "True", seed=int(hyper_kv["seed"]),
        )
        return ForestModel(trees=trees, hyper=hyper, preprocessor=pre,
                           feature_columns=feature_columns)
    if kind == "boosted":
        hyper = BoostedHyper(
            learning_rate=float(hyper_kv["learning_rate"]), max_depth=int(hyper_kv["max_depth"]),
            subsample=float(hyper_kv["subsample"]),
            colsample_by_tree=float(hyper_kv["colsample_by_tree"]),
            rounds=int(hyper_kv["rounds"]),
            early_stopping_rounds=int(hyper_kv["early_stopping_rounds"]),
            seed=int(hyper_kv["seed"]),
        )
        trace_text = kv.get("val_rmse_trace", "-")
        trace = [] if trace_text == "-" else [float(v) for v in trace_text.split(",")]
        return BoostedModel(
            base_score=float(kv["base_score"]), trees=trees, hyper=hyper,
            preprocessor=pre, feature_columns=feature_columns, val_rmse_trace=trace,
        )
    raise ModelFormatError(f"unknown model kind {kind!r}")
