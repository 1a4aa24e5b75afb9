"""Command-line pipeline driver.

Subcommands mirror the pipeline stages: generate, densify, split, train,
evaluate, importance, ablate, profile, serve. Every stage reads a ``key:
value`` config file (same format as the metadata sidecars), writes outputs
plus sidecars under --out, and is fully reproducible from the config and
seed. Failures exit nonzero with a single ``ErrorClass: message`` line on
stderr. Config keys per stage are documented in the README.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .configio import read_kv_file
from .datasets import (
    DoseTable,
    GridSpec,
    SplitSpec,
    concat_tables,
    densify,
    fit_preprocessor,
    generate_lowres,
    split,
    transform,
    inverse_target,
)
from .dispersion import StabilityClass
from .evaluation import (
    ablation_csv,
    ablation_curve_csv,
    conditional_permutation_importance,
    exhaustive_ablation,
    importance_csv,
    metrics,
    metrics_table_csv,
    regime_stats,
    regime_stats_csv,
)
from .kernel import KernelConfig
from .nuclides import load_db, load_default_db
from .trees import (
    BoostedHyper,
    ForestHyper,
    fit_boosted,
    fit_forest,
    load_model,
    save_model,
)


def _parse_bool(text: str) -> bool:
    if text.lower() in ("true", "1", "yes"):
        return True
    if text.lower() in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_values(text: str) -> list[float]:
    """Explicit list '10;50;100' or geometric ladder 'geom:<lo>:<hi>:<n>'."""
    text = text.strip()
    if text.startswith("geom:"):
        _, lo, hi, n = text.split(":")
        return [float(v) for v in np.geomspace(float(lo), float(hi), int(n))]
    if text.startswith("lin:"):
        _, lo, hi, n = text.split(":")
        return [float(v) for v in np.linspace(float(lo), float(hi), int(n))]
    return [float(v) for v in text.split(";")]


def _parse_pairs(text: str) -> dict[str, str]:
    """'name=path;name=path' mappings."""
    out: dict[str, str] = {}
    for part in text.split(";"):
        if not part.strip():
            continue
        key, val = part.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def _kernel_config(cfg: dict[str, str]) -> KernelConfig:
    kwargs = {}
    for field in ("mfp_multiple", "sigma_multiple", "rel_tol", "near_field_epsilon", "alpha"):
        key = f"kernel.{field}"
        if key in cfg:
            kwargs[field] = float(cfg[key])
    return KernelConfig(**kwargs)


def _load_db(cfg: dict[str, str]):
    if "db" in cfg:
        with open(cfg["db"], encoding="utf-8") as fh:
            return load_db(fh)
    return load_default_db()


def _hyper_from_config(cls, cfg: dict[str, str], seed: int | None):
    kwargs = {}
    for f in dataclasses.fields(cls):
        key = f"hyper.{f.name}"
        if key in cfg:
            raw = cfg[key]
            if f.type in ("int", int):
                kwargs[f.name] = int(raw)
            elif f.type in ("float", float):
                kwargs[f.name] = float(raw)
            elif f.type in ("bool", bool):
                kwargs[f.name] = _parse_bool(raw)
            else:
                kwargs[f.name] = raw
    if seed is not None:
        kwargs["seed"] = seed
    return cls(**kwargs)


def _seed(args, cfg: dict[str, str], default: int = 3007) -> int:
    if args.seed is not None:
        return args.seed
    if "seed" in cfg:
        return int(cfg["seed"])
    return default


def _stage_view(cfg: dict[str, str], stage: str) -> dict[str, str]:
    """Project a config onto one stage so a single file can drive the whole
    pipeline: `<stage>.key` entries override plain `key` entries for that
    stage and other stages' prefixed entries are dropped."""
    out: dict[str, str] = {}
    for key, val in cfg.items():
        head, _, rest = key.partition(".")
        if head == stage and rest:
            continue  # applied in the override pass below
        if head in COMMANDS and rest:
            continue  # another stage's key
        out[key] = val
    prefix = stage + "."
    for key, val in cfg.items():
        if key.startswith(prefix):
            out[key[len(prefix):]] = val
    return out


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> None:
    cfg = _stage_view(read_kv_file(args.config), "generate")
    db = _load_db(cfg)
    grid = GridSpec(
        nuclides=tuple(cfg["nuclides"].split(";")),
        stabilities=tuple(StabilityClass(c) for c in cfg["stabilities"].strip()),
        heights=tuple(_parse_values(cfg["heights"])),
        distances=tuple(_parse_values(cfg["distances"])),
    )
    table = generate_lowres(db, grid, _kernel_config(cfg), jobs=args.jobs)
    out = _out_dir(args) / cfg.get("output", "lowres.csv")
    table.save(out)
    print(f"wrote {out} ({len(table)} rows)")


def cmd_densify(args) -> None:
    cfg = _stage_view(read_kv_file(args.config), "densify")
    table = DoseTable.load(cfg["input"])
    hr = densify(
        table,
        points_per_group=int(cfg.get("points_per_group", "2000")),
        drop_knots=_parse_bool(cfg.get("drop_knots", "true")),
    )
    out = _out_dir(args) / cfg.get("output", "highres.csv")
    hr.save(out)
    print(f"wrote {out} ({len(hr)} rows)")


def cmd_split(args) -> None:
    cfg = _stage_view(read_kv_file(args.config), "split")
    table = DoseTable.load(cfg["input"])
    spec = SplitSpec(
        seed=_seed(args, cfg),
        lowres_test_fraction=float(cfg.get("lowres_test_fraction", "0.01")),
        highres_test_fraction=float(cfg.get("highres_test_fraction", "0.00025")),
    )
    train, test = split(table, spec)
    stem = Path(cfg["input"]).stem
    out = _out_dir(args)
    train_path = out / f"{stem}_train.csv"
    test_path = out / f"{stem}_test.csv"
    train.save(train_path)
    test.save(test_path)
    print(f"wrote {train_path} ({len(train)} rows) and {test_path} ({len(test)} rows)")


def _carve_validation(X, y, fraction: float, seed: int):
    n = len(X)
    n_val = max(1, int(round(fraction * n)))
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    val_idx = np.sort(perm[:n_val])
    fit_idx = np.sort(perm[n_val:])
    return X[fit_idx], y[fit_idx], X[val_idx], y[val_idx]


def cmd_train(args) -> None:
    cfg = _stage_view(read_kv_file(args.config), "train")
    seed = _seed(args, cfg)
    table = DoseTable.load(cfg["train"])
    pre = fit_preprocessor(table)
    X, y = transform(pre, table)
    family = cfg["family"]
    if family == "forest":
        hyper = _hyper_from_config(ForestHyper, cfg, seed)
        model = fit_forest(X, y, pre, hyper)
    elif family == "boosted":
        hyper = _hyper_from_config(BoostedHyper, cfg, seed)
        frac = float(cfg.get("val_fraction", "0.05"))
        Xf, yf, Xv, yv = _carve_validation(X, y, frac, seed)
        model = fit_boosted(Xf, yf, Xv, yv, pre, hyper)
    else:
        raise ValueError(f"unknown model family {family!r}")
    out = _out_dir(args) / cfg.get("output", f"{family}.model.txt")
    save_model(model, out)
    print(f"wrote {out} ({len(model.trees)} trees)")


def cmd_evaluate(args) -> None:
    cfg = _stage_view(read_kv_file(args.config), "evaluate")
    models = {name: load_model(path) for name, path in _parse_pairs(cfg["models"]).items()}
    tests = {name: DoseTable.load(path) for name, path in _parse_pairs(cfg["tests"]).items()}
    out = _out_dir(args)
    rows = []
    for test_name, table in tests.items():
        for model_name, model in models.items():
            X, _ = transform(model.preprocessor, table)
            preds = inverse_target(model.preprocessor, model.predict_log(X))
            m = metrics(table.doses, preds)
            rows.append((f"{model_name}->{test_name}", model_name, m))
            for group_label, keys in (
                ("stability", table.stabilities), ("radionuclide", table.nuclides),
            ):
                stats = regime_stats(table.doses, preds, keys)
                path = out / f"whiskers_{group_label}_{model_name}_{test_name}.csv"
                path.write_text(regime_stats_csv(stats, group_label), encoding="utf-8")
    path = out / cfg.get("output", "metrics.csv")
    path.write_text(metrics_table_csv(rows), encoding="utf-8")
    print(f"wrote {path} ({len(rows)} rows)")


def cmd_importance(args) -> None:
    cfg = _stage_view(read_kv_file(args.config), "importance")
    model = load_model(cfg["model"])
    tables = [DoseTable.load(p) for p in cfg["tests"].split(";")]
    unified = concat_tables(tables)
    result = conditional_permutation_importance(
        model, unified, repeats=int(cfg.get("repeats", "10")), seed=_seed(args, cfg),
    )
    out = _out_dir(args)
    (out / "importance_raw.csv").write_text(importance_csv(result, "raw"), encoding="utf-8")
    (out / "importance_normalized.csv").write_text(importance_csv(result, "normalized"), encoding="utf-8")
    print(f"wrote {out}/importance_raw.csv and importance_normalized.csv "
          f"({len(result.radionuclides)} radionuclides)")


def cmd_ablate(args) -> None:
    cfg = _stage_view(read_kv_file(args.config), "ablate")
    seed = _seed(args, cfg)
    family = cfg["family"]
    table = DoseTable.load(cfg["train"])
    pre = fit_preprocessor(table)
    X, y = transform(pre, table)
    tests = [DoseTable.load(p) for p in cfg["tests"].split(";")]
    unified = concat_tables(tests)
    X_test, _ = transform(pre, unified)
    if family == "boosted":
        hyper = _hyper_from_config(BoostedHyper, cfg, seed)
        Xf, yf, Xv, yv = _carve_validation(X, y, float(cfg.get("val_fraction", "0.05")), seed)
    else:
        hyper = _hyper_from_config(ForestHyper, cfg, seed)
        Xf, yf, Xv, yv = X, y, X[:1], y[:1]
    result = exhaustive_ablation(
        family, Xf, yf, Xv, yv, pre, X_test, unified.doses, hyper=hyper, jobs=args.jobs,
    )
    out = _out_dir(args)
    (out / "ablation.csv").write_text(ablation_csv(result), encoding="utf-8")
    (out / "ablation_curve.csv").write_text(ablation_curve_csv(result), encoding="utf-8")
    print(f"wrote {out}/ablation.csv and ablation_curve.csv (15 subsets)")


def cmd_profile(args) -> None:
    from .kernel import dose_profile

    cfg = _stage_view(read_kv_file(args.config), "profile")
    db = _load_db(cfg)
    distances = _parse_values(cfg["distances"])
    prof = dose_profile(
        db, db.get(cfg["nuclide"]), StabilityClass(cfg["stability"].strip()),
        float(cfg["height"]), distances, _kernel_config(cfg),
    )
    out = _out_dir(args) / cfg.get("output", "profile.csv")
    lines = ["distance_m,dose_uSv_per_hr"]
    lines += [f"{d!r},{v:.8e}" for d, v in prof]
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {out} ({len(prof)} points)")


def cmd_serve(args) -> None:
    import uvicorn

    from .service import create_app

    cfg = _stage_view(read_kv_file(args.config), "serve")
    db = _load_db(cfg)
    models = {name: load_model(path) for name, path in _parse_pairs(cfg["models"]).items()}
    app = create_app(db, models, _kernel_config(cfg), ui_dir=cfg.get("ui"))
    uvicorn.run(app, host=cfg.get("host", "127.0.0.1"), port=int(cfg.get("port", "8000")))


COMMANDS = {
    "generate": cmd_generate,
    "densify": cmd_densify,
    "split": cmd_split,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "importance": cmd_importance,
    "ablate": cmd_ablate,
    "profile": cmd_profile,
    "serve": cmd_serve,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plumeshine",
        description="Plume-shine dose pipeline: reference physics, dataset "
                    "densification, tree surrogates, and the comparison service.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="key: value config file")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except Exception as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
