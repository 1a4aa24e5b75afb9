import numpy as np
import pytest

from plumeshine.cli import main
from plumeshine.configio import write_kv_file
from plumeshine.datasets import DoseTable


def run(argv):
    return main([str(a) for a in argv])


def write_synthetic_csv(path, n_nuc=2, n_d=24):
    rows = [[], [], [], [], []]
    for i in range(n_nuc):
        nm = ("Xe-135", "Cs-137", "Ar-41")[i]
        for s in "ABCDEF":
            for h in (10.0, 100.0, 200.0):
                for d in np.geomspace(25, 2000, n_d):
                    rows[0].append(nm)
                    rows[1].append(s)
                    rows[2].append(h)
                    rows[3].append(float(d))
                    rows[4].append(float(1e-9 * np.exp(-d / 300) * (0.4 + h / 150) * (1 + i)))
    t = DoseTable(
        np.array(rows[0], dtype=object), np.array(rows[1], dtype=object),
        np.array(rows[2]), np.array(rows[3]), np.array(rows[4]),
    )
    t.save(path)
    return t


def test_generate_counts_rows(tmp_path, capsys):
    cfg = tmp_path / "gen.cfg"
    write_kv_file(cfg, {
        "nuclides": "Xe-135;Cs-137",
        "stabilities": "DF",
        "heights": "100;200",
        "distances": "200;500;1200",
        "kernel.rel_tol": "1e-3",
    })
    assert run(["generate", "--config", cfg, "--out", tmp_path]) == 0
    table = DoseTable.load(tmp_path / "lowres.csv")
    assert len(table) == 24
    assert (tmp_path / "lowres.meta.json").exists()


def test_split_train_evaluate_chain(tmp_path):
    data = tmp_path / "doses.csv"
    write_synthetic_csv(data)

    split_cfg = tmp_path / "split.cfg"
    write_kv_file(split_cfg, {"input": str(data), "lowres_test_fraction": "0.1"})
    assert run(["split", "--config", split_cfg, "--seed", 3007, "--out", tmp_path]) == 0
    train_csv = tmp_path / "doses_train.csv"
    test_csv = tmp_path / "doses_test.csv"
    assert train_csv.exists() and test_csv.exists()

    train_cfg = tmp_path / "train.cfg"
    write_kv_file(train_cfg, {
        "family": "forest", "train": str(train_csv),
        "hyper.n_estimators": "3", "hyper.max_depth": "6",
    })
    assert run(["train", "--config", train_cfg, "--seed", 3007, "--out", tmp_path]) == 0
    model_path = tmp_path / "forest.model.txt"
    assert model_path.exists()

    eval_cfg = tmp_path / "eval.cfg"
    write_kv_file(eval_cfg, {
        "models": f"forest={model_path}",
        "tests": f"LR_test={test_csv}",
    })
    assert run(["evaluate", "--config", eval_cfg, "--out", tmp_path]) == 0
    metrics_text = (tmp_path / "metrics.csv").read_text()
    assert metrics_text.splitlines()[0].startswith("training_testing,model,r2")
    assert "forest->LR_test,forest," in metrics_text
    assert (tmp_path / "whiskers_stability_forest_LR_test.csv").exists()
    assert (tmp_path / "whiskers_radionuclide_forest_LR_test.csv").exists()


def test_densify_stage(tmp_path):
    data = tmp_path / "doses.csv"
    write_synthetic_csv(data, n_nuc=1, n_d=12)
    cfg = tmp_path / "dens.cfg"
    write_kv_file(cfg, {"input": str(data), "points_per_group": "40", "drop_knots": "true"})
    assert run(["densify", "--config", cfg, "--out", tmp_path]) == 0
    hr = DoseTable.load(tmp_path / "highres.csv")
    assert hr.provenance == "highres_interp"
    assert len(hr) == 18 * 38  # 38 surviving points per (1 nuclide x 6 classes x 3 heights)


def test_train_deterministic_across_runs(tmp_path):
    data = tmp_path / "doses.csv"
    write_synthetic_csv(data)
    cfg = tmp_path / "train.cfg"
    write_kv_file(cfg, {
        "family": "boosted", "train": str(data), "val_fraction": "0.1",
        "hyper.rounds": "4", "hyper.max_depth": "5",
    })
    out1 = tmp_path / "run1"
    out2 = tmp_path / "run2"
    assert run(["train", "--config", cfg, "--seed", 11, "--out", out1]) == 0
    assert run(["train", "--config", cfg, "--seed", 11, "--out", out2]) == 0
    assert (out1 / "boosted.model.txt").read_bytes() == (out2 / "boosted.model.txt").read_bytes()


def test_profile_stage(tmp_path):
    cfg = tmp_path / "prof.cfg"
    write_kv_file(cfg, {
        "nuclide": "Xe-135", "stability": "F", "height": "150",
        "distances": "200;500", "kernel.rel_tol": "1e-3",
    })
    assert run(["profile", "--config", cfg, "--out", tmp_path]) == 0
    lines = (tmp_path / "profile.csv").read_text().strip().splitlines()
    assert lines[0] == "distance_m,dose_uSv_per_hr"
    assert len(lines) == 3


def test_error_is_single_line_and_nonzero(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    write_kv_file(cfg, {"input": str(tmp_path / "missing.csv")})
    rc = run(["densify", "--config", cfg, "--out", tmp_path])
    assert rc == 2
    err = capsys.readouterr().err.strip()
    assert len(err.splitlines()) == 1
    assert err.split(":")[0].strip().endswith("Error") or "Error" in err.split(":")[0]


def test_single_config_file_drives_multiple_stages(tmp_path):
    # one file carries stage-prefixed keys; each stage reads its own view
    data = tmp_path / "doses.csv"
    write_synthetic_csv(data, n_nuc=1, n_d=12)
    cfg = tmp_path / "pipeline.cfg"
    write_kv_file(cfg, {
        "seed": "3007",
        "split.input": str(data),
        "split.lowres_test_fraction": "0.1",
        "densify.input": str(tmp_path / "doses_train.csv"),
        "densify.points_per_group": "30",
        "train.family": "forest",
        "train.train": str(tmp_path / "highres.csv"),
        "train.hyper.n_estimators": "2",
        "train.hyper.max_depth": "5",
    })
    assert run(["split", "--config", cfg, "--out", tmp_path]) == 0
    assert run(["densify", "--config", cfg, "--out", tmp_path]) == 0
    assert run(["train", "--config", cfg, "--out", tmp_path]) == 0
    assert (tmp_path / "forest.model.txt").exists()
