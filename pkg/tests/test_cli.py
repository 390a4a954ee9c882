"""End-to-end command-line pipeline: artifacts, determinism, and errors."""

import json

import numpy as np
import pytest

from hierfusion.cli import experiment_config_from_dict, infer_subclass_names, main
from hierfusion.features import load_feature_table
from hierfusion.model import load_checkpoint
from hierfusion.rng import STREAM_SYNTHETIC, derive_seed
from hierfusion.structure_builder import adjusted_rand_index
from hierfusion.taxonomy import load_structure

SYNTH = {
    "superclass_count": 2,
    "subclasses_per_superclass": 2,
    "samples_per_subclass": 30,
    "dim": 6,
    "superclass_separation": 12.0,
    "subclass_separation": 2.0,
    "noise_scale": 0.3,
}

MODEL = {
    "stage_dims": [8, 4],
    "learning_rate": 0.2,
    "epochs": 3,
    "batch_size": 16,
}


def write_config(path, raw):
    path.write_text(json.dumps(raw, indent=2) + "\n")
    return str(path)


def run(*argv):
    return main(list(argv))


def gen_dataset(tmp_path, seed=0):
    """Generate the small synthetic dataset; returns its directory."""
    out = tmp_path / f"data{seed}"
    config = write_config(tmp_path / f"gen{seed}.json",
                          {"seed": seed, "synthetic": SYNTH, "out": str(out)})
    assert run("gen-synthetic", "--config", config) == 0
    return out


def test_gen_synthetic_artifacts(tmp_path):
    data = gen_dataset(tmp_path)
    planted = load_structure(data / "structure_planted.json")
    assert planted.name == "planted"
    assert planted.superclasses == ("s0", "s1")
    table = load_feature_table(data / "features.csv", planted.subclass_names)
    assert table.count == 2 * 2 * 30
    assert table.dim == 6
    assert np.bincount(table.labels).tolist() == [30] * 4


def test_gen_synthetic_reruns_byte_identical(tmp_path):
    a = gen_dataset(tmp_path, seed=3)
    b_out = tmp_path / "again"
    config = write_config(tmp_path / "gen_again.json",
                          {"seed": 3, "synthetic": SYNTH, "out": str(b_out)})
    assert run("gen-synthetic", "--config", config) == 0
    assert (a / "features.csv").read_bytes() == \
        (b_out / "features.csv").read_bytes()
    assert (a / "structure_planted.json").read_bytes() == \
        (b_out / "structure_planted.json").read_bytes()


def test_build_structure_recovers_planted_grouping(tmp_path):
    data = gen_dataset(tmp_path)
    out = tmp_path / "built"
    config = write_config(tmp_path / "build.json", {
        "seed": 0,
        "features": str(data / "features.csv"),
        "names_from": str(data / "structure_planted.json"),
        "builder": {"k": 2},
        "out": str(out),
    })
    assert run("build-structure", "--config", config) == 0
    built = load_structure(out / "H_A_k2.json")
    planted = load_structure(data / "structure_planted.json")
    assert built.subclass_names == planted.subclass_names
    assert adjusted_rand_index(built.parent_index, planted.parent_index) == 1.0


def test_build_structure_k_out_of_range(tmp_path, capsys):
    data = gen_dataset(tmp_path)
    config = write_config(tmp_path / "build_bad.json", {
        "features": str(data / "features.csv"),
        "builder": {"k": 99},
        "out": str(tmp_path / "built"),
    })
    assert run("build-structure", "--config", config) == 1
    err = capsys.readouterr().err
    assert "error:" in err
    assert "[1, 4]" in err


def train_config(tmp_path, data, out, with_structure=True, **model_extra):
    raw = {
        "seed": 1,
        "features": str(data / "features.csv"),
        "names_from": str(data / "structure_planted.json"),
        "split": {"fraction": 0.8},
        "model": dict(MODEL, **model_extra),
        "out": str(out),
    }
    if with_structure:
        raw["structures"] = [str(data / "structure_planted.json")]
        raw["model"].setdefault("attach_stages", [0])
        raw["model"].setdefault("lambda_total", 0.2)
    return write_config(tmp_path / f"train_{out.name}.json", raw)


def test_train_writes_checkpoint_and_history(tmp_path):
    data = gen_dataset(tmp_path)
    out = tmp_path / "run"
    config = train_config(tmp_path, data, out)
    assert run("train", "--config", config) == 0
    model, model_config = load_checkpoint(out / "model.ckpt")
    assert model.structure_names == ("planted",)
    assert model.subclass_count == 4
    assert model_config.lambda_total == 0.2
    lines = (out / "history.csv").read_text().splitlines()
    assert lines[0] == (
        "epoch,total_loss,subclass_loss,super_loss_planted,train_accuracy"
    )
    assert len(lines) == 1 + MODEL["epochs"]


def test_train_headless_history_has_no_super_columns(tmp_path):
    data = gen_dataset(tmp_path)
    out = tmp_path / "plain"
    config = train_config(tmp_path, data, out, with_structure=False)
    assert run("train", "--config", config) == 0
    lines = (out / "history.csv").read_text().splitlines()
    assert lines[0] == "epoch,total_loss,subclass_loss,train_accuracy"


def test_train_reruns_byte_identical(tmp_path):
    data = gen_dataset(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    run("train", "--config", train_config(tmp_path, data, out_a))
    run("train", "--config", train_config(tmp_path, data, out_b))
    assert (out_a / "model.ckpt").read_bytes() == (out_b / "model.ckpt").read_bytes()
    assert (out_a / "history.csv").read_bytes() == (out_b / "history.csv").read_bytes()


def test_evaluate_report_and_predictions(tmp_path):
    data = gen_dataset(tmp_path)
    run_dir = tmp_path / "run"
    assert run("train", "--config", train_config(tmp_path, data, run_dir)) == 0
    eval_dir = tmp_path / "eval"
    config = write_config(tmp_path / "eval.json", {
        "seed": 1,
        "features": str(data / "features.csv"),
        "structures": [str(data / "structure_planted.json")],
        "checkpoint": str(run_dir / "model.ckpt"),
        "split": {"fraction": 0.8},
        "out": str(eval_dir),
    })
    assert run("evaluate", "--config", config) == 0
    report = json.loads((eval_dir / "report.json").read_text())
    assert list(report) == [
        "accuracy", "p_ha", "r_ha", "f_ha", "tie_a", "lca_a", "per_structure",
    ]
    assert len(report["per_structure"]) == 1
    assert report["per_structure"][0]["name"] == "planted"
    # the emitted numbers satisfy the fixed-depth relations
    assert abs(report["tie_a"] - 2.0 * report["lca_a"]) < 1e-12
    assert abs(report["f_ha"] - (1.0 - report["tie_a"] / 6.0)) < 1e-12
    pred_lines = (eval_dir / "predictions.csv").read_text().splitlines()
    assert pred_lines[0] == "predicted,truth"
    # the held-out side is 20% of 30 per class, 4 classes
    assert len(pred_lines) == 1 + 4 * 6


def test_evaluate_reruns_byte_identical(tmp_path):
    data = gen_dataset(tmp_path)
    run_dir = tmp_path / "run"
    run("train", "--config", train_config(tmp_path, data, run_dir))
    outs = []
    for name in ("e1", "e2"):
        eval_dir = tmp_path / name
        config = write_config(tmp_path / f"{name}.json", {
            "features": str(data / "features.csv"),
            "structures": [str(data / "structure_planted.json")],
            "checkpoint": str(run_dir / "model.ckpt"),
            "split": {"fraction": 0.8},
            "out": str(eval_dir),
        })
        assert run("evaluate", "--config", config) == 0
        outs.append(eval_dir)
    assert (outs[0] / "report.json").read_bytes() == \
        (outs[1] / "report.json").read_bytes()
    assert (outs[0] / "predictions.csv").read_bytes() == \
        (outs[1] / "predictions.csv").read_bytes()


def test_evaluate_requires_checkpoint_and_structures(tmp_path, capsys):
    data = gen_dataset(tmp_path)
    config = write_config(tmp_path / "eval_nockpt.json", {
        "features": str(data / "features.csv"),
        "structures": [str(data / "structure_planted.json")],
        "out": str(tmp_path / "eval"),
    })
    assert run("evaluate", "--config", config) == 1
    assert "checkpoint" in capsys.readouterr().err

    run_dir = tmp_path / "run"
    run("train", "--config", train_config(tmp_path, data, run_dir))
    config = write_config(tmp_path / "eval_nostruct.json", {
        "features": str(data / "features.csv"),
        "checkpoint": str(run_dir / "model.ckpt"),
        "out": str(tmp_path / "eval2"),
    })
    assert run("evaluate", "--config", config) == 1
    assert "structure" in capsys.readouterr().err


def sweep_base(tmp_path, data, out):
    return {
        "seed": 1,
        "features": str(data / "features.csv"),
        "names_from": str(data / "structure_planted.json"),
        "structures": [str(data / "structure_planted.json")],
        "split": {"fraction": 0.8},
        "model": dict(MODEL, attach_stages=[0], lambda_total=0.2, epochs=2),
        "out": str(out),
    }


def test_sweep_lambda_rows_and_means(tmp_path):
    data = gen_dataset(tmp_path)
    out = tmp_path / "sweep"
    config = write_config(tmp_path / "sweep.json", sweep_base(tmp_path, data, out))
    assert run("sweep", "--config", config, "--axis", "lambda",
               "--values", "0.3,0.0", "--seeds", "2,1") == 0
    lines = (out / "sweep_lambda.csv").read_text().splitlines()
    assert lines[0] == "lambda,seed,accuracy,p_ha,r_ha,f_ha,tie_a,lca_a"
    # 2 values x (2 seeds + mean), values and seeds sorted ascending
    assert len(lines) == 1 + 2 * 3
    firsts = [line.split(",")[:2] for line in lines[1:]]
    assert firsts == [["0", "1"], ["0", "2"], ["0", "mean"],
                      ["0.29999999999999999", "1"],
                      ["0.29999999999999999", "2"],
                      ["0.29999999999999999", "mean"]]
    # the mean row averages its two seed rows
    rows = [line.split(",") for line in lines[1:4]]
    acc = (float(rows[0][2]) + float(rows[1][2])) / 2.0
    assert abs(float(rows[2][2]) - acc) < 1e-15


def test_sweep_k_reports_best(tmp_path, capsys):
    data = gen_dataset(tmp_path)
    out = tmp_path / "sweepk"
    raw = sweep_base(tmp_path, data, out)
    del raw["structures"]  # the k sweep builds its own structure per run
    config = write_config(tmp_path / "sweepk.json", raw)
    assert run("sweep", "--config", config, "--axis", "k",
               "--values", "2,4") == 0
    err = capsys.readouterr().err
    assert "best k by mean accuracy:" in err
    lines = (out / "sweep_k.csv").read_text().splitlines()
    assert lines[0].startswith("k,seed,")
    assert len(lines) == 1 + 2 * 2  # one seed per value plus its mean row


def test_sweep_attach_stage_column_name(tmp_path):
    data = gen_dataset(tmp_path)
    out = tmp_path / "sweeps"
    config = write_config(tmp_path / "sweeps.json", sweep_base(tmp_path, data, out))
    assert run("sweep", "--config", config, "--axis", "attach_stage",
               "--values", "0,1") == 0
    lines = (out / "sweep_attach_stage.csv").read_text().splitlines()
    assert lines[0].startswith("stage,seed,")
    assert [line.split(",")[0] for line in lines[1:]] == ["0", "0", "1", "1"]


def test_sweep_without_axis_fails_cleanly(tmp_path, capsys):
    data = gen_dataset(tmp_path)
    config = write_config(tmp_path / "sweep_noaxis.json",
                          sweep_base(tmp_path, data, tmp_path / "sx"))
    assert run("sweep", "--config", config) == 1
    assert "axis" in capsys.readouterr().err


def test_flag_only_invocation_with_dotted_overrides(tmp_path):
    out = tmp_path / "flags"
    code = run(
        "gen-synthetic",
        "--seed", "5",
        "--out", str(out),
        "--synthetic.superclass_count", "2",
        "--synthetic.subclasses_per_superclass=2",
        "--synthetic.samples_per_subclass", "6",
        "--synthetic.dim", "3",
    )
    assert code == 0
    planted = load_structure(out / "structure_planted.json")
    assert planted.subclass_count == 4
    table = load_feature_table(out / "features.csv", planted.subclass_names)
    assert table.count == 24
    assert table.dim == 3


def test_override_beats_config_file(tmp_path):
    data = gen_dataset(tmp_path)
    out = tmp_path / "short"
    config = train_config(tmp_path, data, out)
    assert run("train", "--config", config, "--model.epochs", "1") == 0
    lines = (out / "history.csv").read_text().splitlines()
    assert len(lines) == 2


def test_config_error_paths(tmp_path, capsys):
    bad = write_config(tmp_path / "bad.json", {"bogus": 1})
    assert run("train", "--config", bad) == 1
    assert "unknown config fields" in capsys.readouterr().err

    both = write_config(tmp_path / "both.json", {
        "synthetic": SYNTH,
        "features": "x.csv",
        "out": str(tmp_path / "o"),
    })
    assert run("gen-synthetic", "--config", both) == 1
    assert "exactly one data source" in capsys.readouterr().err

    notjson = tmp_path / "notjson.json"
    notjson.write_text("{oops")
    assert run("train", "--config", str(notjson)) == 1
    assert "error:" in capsys.readouterr().err

    missing = write_config(tmp_path / "missing.json", {
        "features": str(tmp_path / "nowhere.csv"),
        "builder": {"k": 2},
        "out": str(tmp_path / "o2"),
    })
    assert run("build-structure", "--config", missing) == 1
    assert "error:" in capsys.readouterr().err


def test_unexpected_positional_argument(tmp_path, capsys):
    assert run("train", "oops") == 1
    assert "unexpected argument" in capsys.readouterr().err


def test_infer_subclass_names_first_appearance(tmp_path):
    path = tmp_path / "f.csv"
    path.write_text("label,f0\nz,1.0\ny,2.0\nz,3.0\nx,4.0\n")
    assert infer_subclass_names(path) == ("z", "y", "x")


def test_section_seed_derivation():
    resolved = experiment_config_from_dict(
        {"seed": 3, "synthetic": dict(SYNTH)}
    )
    assert resolved.synthetic.seed == derive_seed(3, STREAM_SYNTHETIC)
    pinned = experiment_config_from_dict(
        {"seed": 3, "synthetic": dict(SYNTH, seed=7)}
    )
    assert pinned.synthetic.seed == 7
    with pytest.raises(Exception):
        experiment_config_from_dict({"split": {"fraction": 2.0}})
