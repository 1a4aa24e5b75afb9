"""Dose-table generation, shape-preserving densification, splits, preprocessing.

A DoseTable is a column-oriented collection of (scenario, dose) rows with a
provenance tag (``lowres`` for kernel-computed grids, ``highres_interp`` for
densified tables) and free-form metadata. Tables persist as CSV with the
schema

    radionuclide,stability,release_height_m,distance_m,dose_uSv_per_hr

(doses in scientific notation with 9 significant digits) plus a metadata
sidecar (same basename, ``.meta.json``) in ``key: value`` text form. Rows are
kept in canonical (nuclide, stability, height, distance) order before
persistence so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .configio import parse_kv_text, sidecar_path, write_kv_file
from .dispersion import ReleaseSpec, StabilityClass
from .interpolate import pchip_eval, pchip_fit
from .kernel import KernelConfig, Receptor, dose_rate
from .nuclides import NuclideDB, normalize_name

__all__ = [
    "Scenario",
    "GridSpec",
    "DoseTable",
    "SplitSpec",
    "Preprocessor",
    "default_distances",
    "generate_lowres",
    "densify",
    "split",
    "fit_preprocessor",
    "transform",
    "inverse_target",
    "skewness",
]

CSV_HEADER = "radionuclide,stability,release_height_m,distance_m,dose_uSv_per_hr"
KNOT_TOLERANCE_M = 1e-9

FEATURE_NAMES = ("radionuclide", "stability", "release_height", "distance")

STABILITY_ORDER = "ABCDEF"


@dataclass(frozen=True)
class Scenario:
    nuclide: str
    stability: StabilityClass
    height: float
    distance: float


@dataclass(frozen=True)
class GridSpec:
    """Cartesian evaluation grid for low-resolution table generation."""

    nuclides: tuple[str, ...]
    stabilities: tuple[StabilityClass, ...]
    heights: tuple[float, ...]
    distances: tuple[float, ...]

    def __post_init__(self):
        if not (self.nuclides and self.stabilities and self.heights and self.distances):
            raise ValueError("grid must be non-empty in every dimension")
        if any(h < 10.0 or h > 200.0 for h in self.heights):
            raise ValueError("heights must lie in [10, 200] m")
        if any(d < 25.0 or d > 2000.0 for d in self.distances):
            raise ValueError("distances must lie in [25, 2000] m")
        if list(self.distances) != sorted(set(self.distances)):
            raise ValueError("distances must be strictly ascending")

    def n_rows(self) -> int:
        return len(self.nuclides) * len(self.stabilities) * len(self.heights) * len(self.distances)


def default_distances(n: int = 45) -> tuple[float, ...]:
    """Log-spaced downwind distance ladder over the 25-2000 m table range."""
    return tuple(float(v) for v in np.geomspace(25.0, 2000.0, n))


@dataclass
class DoseTable:
    """Column-oriented dose rows; dose > 0 everywhere."""

    nuclides: np.ndarray  # str
    stabilities: np.ndarray  # str "A".."F"
    heights: np.ndarray  # float, m
    distances: np.ndarray  # float, m
    doses: np.ndarray  # float, uSv/hr
    provenance: str = "lowres"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nuclides = np.asarray(self.nuclides, dtype=object)
        self.stabilities = np.asarray(self.stabilities, dtype=object)
        self.heights = np.asarray(self.heights, dtype=float)
        self.distances = np.asarray(self.distances, dtype=float)
        self.doses = np.asarray(self.doses, dtype=float)
        n = len(self.nuclides)
        for arr in (self.stabilities, self.heights, self.distances, self.doses):
            if len(arr) != n:
                raise ValueError("column lengths differ")

    def __len__(self) -> int:
        return len(self.doses)

    def validate(self) -> None:
        if np.any(~np.isfinite(self.doses)) or np.any(self.doses <= 0):
            raise ValueError("doses must be positive and finite")

    def scenario_keys(self) -> set[tuple]:
        return {
            (n, s, h, d)
            for n, s, h, d in zip(self.nuclides, self.stabilities, self.heights, self.distances)
        }

    def sorted_canonical(self) -> "DoseTable":
        order = np.lexsort(
            (self.distances, self.heights,
             np.array([STABILITY_ORDER.index(s) for s in self.stabilities]),
             self.nuclides.astype(str))
        )
        return DoseTable(
            self.nuclides[order], self.stabilities[order], self.heights[order],
            self.distances[order], self.doses[order], self.provenance, dict(self.meta),
        )

    def take(self, idx: np.ndarray) -> "DoseTable":
        return DoseTable(
            self.nuclides[idx], self.stabilities[idx], self.heights[idx],
            self.distances[idx], self.doses[idx], self.provenance, dict(self.meta),
        )

    # --- persistence ---

    def to_csv_text(self) -> str:
        t = self.sorted_canonical()
        lines = [CSV_HEADER]
        for n, s, h, d, v in zip(t.nuclides, t.stabilities, t.heights, t.distances, t.doses):
            lines.append(f"{n},{s},{float(h)!r},{float(d)!r},{v:.8e}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.write_text(self.to_csv_text(), encoding="utf-8")
        meta = {"provenance": self.provenance, "rows": str(len(self))}
        meta.update({k: str(v) for k, v in self.meta.items()})
        meta.setdefault("skewness_raw_dose", f"{skewness(self.doses):.6f}")
        meta.setdefault("skewness_log10_dose", f"{skewness(np.log10(self.doses)):.6f}")
        write_kv_file(sidecar_path(path), meta)

    @classmethod
    def load(cls, path: str | Path) -> "DoseTable":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        lines = text.strip().splitlines()
        if not lines or lines[0] != CSV_HEADER:
            raise ValueError(f"{path}: unexpected CSV header")
        cols: list[list] = [[], [], [], [], []]
        for raw in lines[1:]:
            parts = raw.split(",")
            if len(parts) != 5:
                raise ValueError(f"{path}: malformed row {raw!r}")
            cols[0].append(parts[0])
            cols[1].append(parts[1])
            cols[2].append(float(parts[2]))
            cols[3].append(float(parts[3]))
            cols[4].append(float(parts[4]))
        meta: dict = {}
        provenance = "lowres"
        sc = sidecar_path(path)
        if sc.exists():
            meta = parse_kv_text(sc.read_text(encoding="utf-8"))
            provenance = meta.pop("provenance", provenance)
            meta.pop("rows", None)
        return cls(
            np.array(cols[0], dtype=object), np.array(cols[1], dtype=object),
            np.array(cols[2]), np.array(cols[3]), np.array(cols[4]),
            provenance, meta,
        )


def _group_worker(args):
    db, nuclide, stability, height, distances, cfg = args
    release = ReleaseSpec(Q=1.0, U=1.0, H=height, stability=StabilityClass(stability))
    rec_doses = []
    nuc = db.get(nuclide)
    for d in distances:
        rec_doses.append(dose_rate(db, nuc, release, Receptor(x1=d), cfg))
    return rec_doses


def generate_lowres(
    db: NuclideDB,
    grid: GridSpec,
    cfg: KernelConfig | None = None,
    jobs: int = 1,
) -> DoseTable:
    """Evaluate the dose kernel on the full grid (unit release, 1 m/s wind).

    One row per grid point; groups (nuclide, stability, height) are
    independent and can run in parallel without affecting the output, which
    is deterministic and canonically ordered.
    """
    cfg = cfg or KernelConfig()
    names = [normalize_name(n) for n in grid.nuclides]
    groups = [
        (db, n, s.value, float(h), [float(d) for d in grid.distances], cfg)
        for n in names
        for s in grid.stabilities
        for h in grid.heights
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_group_worker, groups, chunksize=1))
    else:
        results = [_group_worker(g) for g in groups]

    n_d = len(grid.distances)
    nuclides, stabilities, heights, distances, doses = [], [], [], [], []
    for (_, n, s, h, ds, _), group_doses in zip(groups, results):
        if any(not math.isfinite(v) or v <= 0 for v in group_doses):
            raise RuntimeError(f"kernel produced a non-positive dose in group ({n}, {s}, {h})")
        nuclides.extend([n] * n_d)
        stabilities.extend([s] * n_d)
        heights.extend([h] * n_d)
        distances.extend(ds)
        doses.extend(group_doses)

    table = DoseTable(
        np.array(nuclides, dtype=object), np.array(stabilities, dtype=object),
        np.array(heights), np.array(distances), np.array(doses),
        provenance="lowres",
        meta={
            "grid_nuclides": ";".join(names),
            "grid_stabilities": "".join(s.value for s in grid.stabilities),
            "grid_heights": ";".join(repr(float(h)) for h in grid.heights),
            "grid_distances_n": str(len(grid.distances)),
            "grid_distance_min_m": repr(float(grid.distances[0])),
            "grid_distance_max_m": repr(float(grid.distances[-1])),
            "kernel_config_hash": cfg.content_hash(),
        },
    ).sorted_canonical()
    table.validate()
    return table


def densify(
    lowres: DoseTable,
    points_per_group: int = 2000,
    drop_knots: bool = True,
) -> DoseTable:
    """Densify along downwind distance with monotone cubic interpolation.

    Per (nuclide, stability, height) group, a shape-preserving cubic is
    fitted to log10(dose) over distance (doses span several decades and the
    log fit preserves positivity by construction), then evaluated on a
    uniform grid of points_per_group distances spanning the group's observed
    [min, max]. With drop_knots, generated points within 1e-9 m of an
    original knot distance are removed, leaving a purely interpolated table.
    """
    if points_per_group < 2:
        raise ValueError("points_per_group must be >= 2")
    t = lowres.sorted_canonical()
    keys = [f"{n}\x00{s}\x00{h!r}" for n, s, h in zip(t.nuclides, t.stabilities, t.heights)]
    _, starts = np.unique(keys, return_index=True)
    starts = np.sort(starts)
    bounds = list(starts) + [len(t)]

    nuclides, stabilities, heights, distances, doses = [], [], [], [], []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        xs = t.distances[lo:hi]
        ys = t.doses[lo:hi]
        if xs.size < 2:
            raise ValueError(
                f"group ({t.nuclides[lo]}, {t.stabilities[lo]}, {t.heights[lo]}) "
                "has fewer than 2 distance knots"
            )
        curve = pchip_fit(xs, np.log10(ys))
        grid = np.linspace(xs[0], xs[-1], points_per_group)
        if drop_knots:
            near_knot = np.min(np.abs(grid[:, None] - xs[None, :]), axis=1) <= KNOT_TOLERANCE_M
            grid = grid[~near_knot]
        vals = 10.0 ** pchip_eval(curve, grid)
        k = grid.size
        nuclides.extend([t.nuclides[lo]] * k)
        stabilities.extend([t.stabilities[lo]] * k)
        heights.extend([t.heights[lo]] * k)
        distances.extend(grid.tolist())
        doses.extend(vals.tolist())

    out = DoseTable(
        np.array(nuclides, dtype=object), np.array(stabilities, dtype=object),
        np.array(heights), np.array(distances), np.array(doses),
        provenance="highres_interp",
        meta={
            "points_per_group": str(points_per_group),
            "drop_knots": str(drop_knots),
            "source_provenance": lowres.provenance,
            "source_kernel_config_hash": lowres.meta.get("kernel_config_hash", ""),
        },
    ).sorted_canonical()
    out.validate()
    return out


@dataclass(frozen=True)
class SplitSpec:
    """Seeded train/test row split; fraction chosen by table provenance."""

    seed: int
    lowres_test_fraction: float = 0.01
    highres_test_fraction: float = 0.00025

    def __post_init__(self):
        for f in (self.lowres_test_fraction, self.highres_test_fraction):
            if not (0.0 < f < 0.5):
                raise ValueError("test fractions must lie in (0, 0.5)")

    def fraction_for(self, provenance: str) -> float:
        return self.highres_test_fraction if provenance == "highres_interp" else self.lowres_test_fraction


def split(table: DoseTable, spec: SplitSpec) -> tuple[DoseTable, DoseTable]:
    """Uniform random row partition (train, test) by seeded shuffle.

    Exact partition: disjoint, exhaustive; deterministic given seed and
    input rows (the table is canonicalized before shuffling).
    """
    if len(table) == 0:
        raise ValueError("cannot split an empty table")
    t = table.sorted_canonical()
    frac = spec.fraction_for(t.provenance)
    n = len(t)
    n_test = int(round(frac * n))
    if n_test < 1 or n_test >= n:
        raise ValueError(f"test fraction {frac} yields an empty split side for {n} rows")
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    train = t.take(train_idx)
    test = t.take(test_idx)
    for part, tag in ((train, "train"), (test, "test")):
        part.meta["split_seed"] = str(spec.seed)
        part.meta["split_role"] = tag
        part.meta["split_fraction"] = repr(frac)
    return train, test


@dataclass(frozen=True)
class Preprocessor:
    """Feature scaling and categorical codes fitted on training rows only.

    Numeric features (height, distance) are min-max scaled to [0, 1] with
    training bounds; categoricals are integer codes (nuclides in sorted-name
    order, stability A-F); the regression target is log10(dose) and
    inverse_target maps predictions back to physical doses.
    """

    nuclide_codes: dict
    stability_codes: dict
    height_min: float
    height_max: float
    distance_min: float
    distance_max: float
    log_target: bool = True

    def to_kv(self) -> dict[str, str]:
        return {
            "nuclide_codes": ";".join(f"{k}={v}" for k, v in sorted(self.nuclide_codes.items())),
            "stability_codes": ";".join(f"{k}={v}" for k, v in sorted(self.stability_codes.items())),
            "height_min": repr(self.height_min),
            "height_max": repr(self.height_max),
            "distance_min": repr(self.distance_min),
            "distance_max": repr(self.distance_max),
            "log_target": str(self.log_target),
        }

    @classmethod
    def from_kv(cls, kv: dict[str, str]) -> "Preprocessor":
        def parse_codes(s: str) -> dict:
            out = {}
            for part in s.split(";"):
                k, v = part.split("=")
                out[k] = int(v)
            return out

        return cls(
            nuclide_codes=parse_codes(kv["nuclide_codes"]),
            stability_codes=parse_codes(kv["stability_codes"]),
            height_min=float(kv["height_min"]),
            height_max=float(kv["height_max"]),
            distance_min=float(kv["distance_min"]),
            distance_max=float(kv["distance_max"]),
            log_target=kv["log_target"] == "True",
        )


def fit_preprocessor(train: DoseTable) -> Preprocessor:
    names = sorted(set(train.nuclides))
    return Preprocessor(
        nuclide_codes={n: i for i, n in enumerate(names)},
        stability_codes={c: i for i, c in enumerate(STABILITY_ORDER)},
        height_min=float(np.min(train.heights)),
        height_max=float(np.max(train.heights)),
        distance_min=float(np.min(train.distances)),
        distance_max=float(np.max(train.distances)),
    )


def _scale(vals: np.ndarray, lo: float, hi: float) -> np.ndarray:
    span = hi - lo
    if span <= 0.0:
        return np.zeros_like(vals)
    return (vals - lo) / span


def transform(p: Preprocessor, table: DoseTable) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix (columns: radionuclide, stability, height, distance)
    and log10-dose target vector. Raises on unseen categories or bad doses."""
    try:
        nuc = np.array([p.nuclide_codes[n] for n in table.nuclides], dtype=float)
    except KeyError as exc:
        raise ValueError(f"unseen radionuclide at transform time: {exc.args[0]!r}") from None
    try:
        stab = np.array([p.stability_codes[s] for s in table.stabilities], dtype=float)
    except KeyError as exc:
        raise ValueError(f"unseen stability class at transform time: {exc.args[0]!r}") from None
    if np.any(~np.isfinite(table.doses)) or np.any(table.doses <= 0):
        raise ValueError("doses must be positive and finite")
    X = np.column_stack([
        nuc, stab,
        _scale(table.heights, p.height_min, p.height_max),
        _scale(table.distances, p.distance_min, p.distance_max),
    ])
    y = np.log10(table.doses) if p.log_target else table.doses.copy()
    return X, y


def transform_features(p: Preprocessor, nuclide: str, stability: str, height: float, distance: float) -> np.ndarray:
    """Single-scenario feature row (no dose required)."""
    name = normalize_name(nuclide)
    if name not in p.nuclide_codes:
        raise ValueError(f"unseen radionuclide at transform time: {name!r}")
    if stability not in p.stability_codes:
        raise ValueError(f"unseen stability class at transform time: {stability!r}")
    return np.array([[
        float(p.nuclide_codes[name]), float(p.stability_codes[stability]),
        float(_scale(np.array([height]), p.height_min, p.height_max)[0]),
        float(_scale(np.array([distance]), p.distance_min, p.distance_max)[0]),
    ]])


def inverse_target(p: Preprocessor, predictions: np.ndarray) -> np.ndarray:
    preds = np.asarray(predictions, dtype=float)
    return 10.0 ** preds if p.log_target else preds.copy()


def skewness(values: np.ndarray) -> float:
    """Moment skewness g1 = m3 / m2^(3/2) (population form)."""
    v = np.asarray(values, dtype=float)
    m = v.mean()
    m2 = np.mean((v - m) ** 2)
    m3 = np.mean((v - m) ** 3)
    if m2 == 0:
        return 0.0
    return float(m3 / m2 ** 1.5)


def concat_tables(tables: list) -> DoseTable:
    """Concatenate tables (e.g., to build a unified test set); provenance
    becomes 'mixed' unless all inputs share one tag."""
    if not tables:
        raise ValueError("no tables to concatenate")
    provs = {t.provenance for t in tables}
    return DoseTable(
        np.concatenate([t.nuclides for t in tables]),
        np.concatenate([t.stabilities for t in tables]),
        np.concatenate([t.heights for t in tables]),
        np.concatenate([t.distances for t in tables]),
        np.concatenate([t.doses for t in tables]),
        provs.pop() if len(provs) == 1 else "mixed",
    ).sorted_canonical()
