"""Drive the full command-line pipeline inside a temporary directory.

Same flow an experiment would script in a shell: generate data, induce a
structure, train, evaluate, then sweep the constraint weight. Every step
is a real subcommand invocation, so rerunning this file reproduces every
artifact byte for byte.
"""

import json
import tempfile
from pathlib import Path

from hierfusion.cli import main

with tempfile.TemporaryDirectory() as scratch:
    root = Path(scratch)
    data, built, fit, scored, swept = (
        root / name for name in ("data", "built", "fit", "scored", "swept")
    )

    def config(name, raw):
        path = root / f"{name}.json"
        path.write_text(json.dumps(raw, indent=2) + "\n")
        return str(path)

    def run(*argv):
        # flush so the command line lands before its stderr notes when piped
        print(f"$ hierfusion {' '.join(argv)}", flush=True)
        code = main(list(argv))
        assert code == 0, f"command failed with exit code {code}"

    run("gen-synthetic", "--config", config("gen", {
        "seed": 7,
        "synthetic": {
            "superclass_count": 2, "subclasses_per_superclass": 3,
            "samples_per_subclass": 40, "dim": 6,
            "superclass_separation": 9.0, "subclass_separation": 2.5,
            "noise_scale": 0.8,
        },
        "out": str(data),
    }))

    base = {
        "seed": 7,
        "features": str(data / "features.csv"),
        "names_from": str(data / "structure_planted.json"),
        "structures": [str(data / "structure_planted.json")],
        "split": {"fraction": 0.8},
        "model": {
            "stage_dims": [12, 6], "attach_stages": [0], "lambda_total": 0.2,
            "learning_rate": 0.3, "epochs": 25, "batch_size": 32,
        },
    }
    run("build-structure", "--config",
        config("build", dict(base, builder={"k": 2}, out=str(built))))
    run("train", "--config", config("train", dict(base, out=str(fit))))
    run("evaluate", "--config", config("eval", dict(
        base, checkpoint=str(fit / "model.ckpt"), out=str(scored))))
    run("sweep", "--config", config("sweep", dict(base, out=str(swept))),
        "--axis", "lambda", "--values", "0.0,0.2,0.4", "--seeds", "7,8")

    report = json.loads((scored / "report.json").read_text())
    print(f"\nheld-out report: accuracy {report['accuracy']:.4f}, "
          f"f_ha {report['f_ha']:.4f}, tie_a {report['tie_a']:.4f}")

    print("\nsweep table (mean rows summarize each value):")
    print((swept / "sweep_lambda.csv").read_text().rstrip())
