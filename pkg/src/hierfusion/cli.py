"""Command-line pipeline harness.

Subcommands: ``gen-synthetic`` (write a feature file plus the planted
structure), ``build-structure`` (induce a visual structure from features),
``train`` (fit the multi-task model, write checkpoint and history),
``evaluate`` (score a checkpoint, write the report), and ``sweep`` (train
and evaluate across one axis of values and several seeds).

One JSON config document drives everything; any field can be overridden
on the command line by a flag of the same dotted name, e.g.
``--model.lambda_total 0.3`` or ``--builder.k 5``. Section seeds left
null derive deterministically from the master seed, one fixed stream per
section, so a single ``--seed`` reseeds the whole pipeline coherently.

Every command is deterministic given its config: rerunning writes
byte-identical artifacts. Diagnostics go to stderr; files carry the data;
the exit code is 0 exactly when no error occurred.
"""

import argparse
import copy
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from .exceptions import (
    HierFusionError,
    InvalidConfig,
    MalformedRow,
    SubclassSpaceMismatch,
)
from .features import (
    SyntheticSpec,
    generate_synthetic,
    load_feature_table,
    save_feature_table,
    train_test_split,
)
from .metrics import PredictionBatch, evaluate, save_predictions
from .model import (
    FusionConfig,
    config_from_dict,
    load_checkpoint,
    predict,
    save_checkpoint,
    save_history,
    train,
)
from .rng import (
    STREAM_BUILDER,
    STREAM_MODEL,
    STREAM_SPLIT,
    STREAM_SYNTHETIC,
    derive_seed,
)
from .serialization import dump_json, format_float
from .structure_builder import build_visual_structure
from .taxonomy import StructureSet, load_structure, save_structure


@dataclass(frozen=True)
class SplitParams:
    fraction: float
    seed: int


@dataclass(frozen=True)
class BuilderParams:
    k: int | None
    delta: float
    seed: int


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully resolved experiment: all section seeds are concrete."""

    seed: int
    synthetic: SyntheticSpec | None
    features: str | None
    structures: tuple[str, ...]
    names_from: str | None
    checkpoint: str | None
    split: SplitParams | None
    builder: BuilderParams
    model: FusionConfig
    sweep: dict | None
    out: str | None


_TOP_LEVEL_KEYS = {
    "seed",
    "synthetic",
    "features",
    "structures",
    "names_from",
    "checkpoint",
    "split",
    "builder",
    "model",
    "sweep",
    "out",
}


def experiment_config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate the config document and resolve derived section seeds.

    A section seed that is absent or null derives from the master seed
    through that section's fixed stream; an explicit integer wins.
    """
    if not isinstance(raw, dict):
        raise InvalidConfig("the config must be a JSON object")
    unknown = set(raw) - _TOP_LEVEL_KEYS
    if unknown:
        raise InvalidConfig(f"unknown config fields: {sorted(unknown)}")
    master = int(raw.get("seed", 0))

    synthetic = None
    if raw.get("synthetic") is not None:
        section = raw["synthetic"]
        if not isinstance(section, dict):
            raise InvalidConfig("'synthetic' must be an object")
        section = dict(section)
        if section.get("seed") is None:
            section["seed"] = derive_seed(master, STREAM_SYNTHETIC)
        try:
            synthetic = SyntheticSpec(**section)
        except TypeError as exc:
            raise InvalidConfig(f"'synthetic': {exc}") from exc

    features = raw.get("features")
    if features is not None and not isinstance(features, str):
        raise InvalidConfig("'features' must be a file path")
    if synthetic is not None and features is not None:
        raise InvalidConfig("configure exactly one data source, not both")

    structures = raw.get("structures") or []
    if not isinstance(structures, (list, tuple)) or not all(
        isinstance(p, str) for p in structures
    ):
        raise InvalidConfig("'structures' must be a list of file paths")

    split = None
    if raw.get("split") is not None:
        section = raw["split"]
        if not isinstance(section, dict) or "fraction" not in section:
            raise InvalidConfig("'split' needs a 'fraction' field")
        extra = set(section) - {"fraction", "seed"}
        if extra:
            raise InvalidConfig(f"unknown split fields: {sorted(extra)}")
        fraction = float(section["fraction"])
        if not 0.0 < fraction < 1.0:
            raise InvalidConfig("split fraction must lie in (0, 1)")
        seed = section.get("seed")
        split = SplitParams(
            fraction=fraction,
            seed=derive_seed(master, STREAM_SPLIT) if seed is None else int(seed),
        )

    section = raw.get("builder") or {}
    if not isinstance(section, dict):
        raise InvalidConfig("'builder' must be an object")
    extra = set(section) - {"k", "delta", "seed"}
    if extra:
        raise InvalidConfig(f"unknown builder fields: {sorted(extra)}")
    delta = float(section.get("delta", 1.0))
    if delta <= 0.0:
        raise InvalidConfig("builder delta must be > 0")
    builder = BuilderParams(
        k=None if section.get("k") is None else int(section["k"]),
        delta=delta,
        seed=derive_seed(master, STREAM_BUILDER)
        if section.get("seed") is None
        else int(section["seed"]),
    )

    section = dict(raw.get("model") or {})
    if section.get("seed") is None:
        section["seed"] = derive_seed(master, STREAM_MODEL)
    model = config_from_dict(section)

    sweep = raw.get("sweep")
    if sweep is not None and not isinstance(sweep, dict):
        raise InvalidConfig("'sweep' must be an object")

    out = raw.get("out")
    if out is not None and not isinstance(out, str):
        raise InvalidConfig("'out' must be a directory path")

    names_from = raw.get("names_from")
    checkpoint = raw.get("checkpoint")
    return ExperimentConfig(
        seed=master,
        synthetic=synthetic,
        features=features,
        structures=tuple(structures),
        names_from=names_from,
        checkpoint=checkpoint,
        split=split,
        builder=builder,
        model=model,
        sweep=sweep,
        out=out,
    )


def infer_subclass_names(path) -> tuple[str, ...]:
    """Subclass name table of a feature file, in first-appearance order."""
    names = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("label,"):
            raise MalformedRow(f"{path}: missing 'label,f0,...' header")
        for line in fh:
            line = line.rstrip("\n")
            if line:
                names.setdefault(line.split(",", 1)[0], None)
    if not names:
        raise MalformedRow(f"{path}: no data rows")
    return tuple(names)


def _note(message: str) -> None:
    print(message, file=sys.stderr)


def _out_dir(config: ExperimentConfig) -> Path:
    if config.out is None:
        raise InvalidConfig("no output directory (set 'out' or pass --out)")
    path = Path(config.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_table(config: ExperimentConfig, names_hint=None):
    """Materialize the configured data source.

    Returns (table, subclass_names, planted structure or None). The name
    table comes from, in order: the hint (usually the training
    structures), the planted structure for synthetic data, `names_from`,
    or the feature file's own first-appearance order.
    """
    if config.synthetic is not None:
        table, planted = generate_synthetic(config.synthetic)
        names = planted.subclass_names
        if names_hint is not None and tuple(names_hint) != names:
            raise SubclassSpaceMismatch(
                "synthetic subclass names disagree with the requested table"
            )
        return table, names, planted
    if config.features is None:
        raise InvalidConfig("no data source (set 'synthetic' or 'features')")
    if names_hint is not None:
        names = tuple(names_hint)
    elif config.names_from is not None:
        names = load_structure(config.names_from).subclass_names
    else:
        names = infer_subclass_names(config.features)
    return load_feature_table(config.features, names), names, None


def _split_side(config: ExperimentConfig, table, side: str):
    if config.split is None:
        return table
    train_part, test_part = train_test_split(
        table, config.split.fraction, config.split.seed
    )
    return train_part if side == "train" else test_part


def _load_structures(config: ExperimentConfig) -> StructureSet:
    return StructureSet(tuple(load_structure(p) for p in config.structures))


# -- commands ----------------------------------------------------------------

def cmd_gen_synthetic(config: ExperimentConfig) -> None:
    """Write features.csv and structure_planted.json to the out directory."""
    if config.synthetic is None:
        raise InvalidConfig("gen-synthetic needs a 'synthetic' section")
    out = _out_dir(config)
    table, planted = generate_synthetic(config.synthetic)
    features_path = out / "features.csv"
    save_feature_table(table, planted.subclass_names, features_path)
    structure_path = out / "structure_planted.json"
    save_structure(planted, structure_path)
    _note(f"wrote {features_path}")
    _note(f"wrote {structure_path}")


def cmd_build_structure(config: ExperimentConfig) -> None:
    """Induce a visual structure from the data and write H_A_k{k}.json.

    When a split is configured, only the training side feeds the builder,
    so the induced structure never sees evaluation data.
    """
    if config.builder.k is None:
        raise InvalidConfig("build-structure needs 'builder.k'")
    out = _out_dir(config)
    table, names, _ = _load_table(config)
    table = _split_side(config, table, "train")
    structure = build_visual_structure(
        table,
        config.builder.k,
        config.builder.delta,
        config.builder.seed,
        subclass_names=names,
        class_count=len(names),
    )
    path = out / f"{structure.name}.json"
    save_structure(structure, path)
    _note(f"wrote {path}")


def cmd_train(config: ExperimentConfig) -> None:
    """Train on the configured data and write model.ckpt and history.csv."""
    out = _out_dir(config)
    structures = _load_structures(config)
    names_hint = structures.subclass_names if len(structures) else None
    table, names, _ = _load_table(config, names_hint)
    table = _split_side(config, table, "train")
    model, history = train(config.model, table, structures, subclass_names=names)
    checkpoint_path = out / "model.ckpt"
    save_checkpoint(model, config.model, checkpoint_path)
    history_path = out / "history.csv"
    save_history(history, history_path)
    _note(f"wrote {checkpoint_path}")
    _note(f"wrote {history_path}")


def cmd_evaluate(config: ExperimentConfig) -> None:
    """Score a checkpoint and write report.json and predictions.csv.

    When a split is configured, the held-out side is scored, mirroring
    cmd_train's use of the training side.
    """
    if config.checkpoint is None:
        raise InvalidConfig("evaluate needs a 'checkpoint' path")
    out = _out_dir(config)
    model, _ = load_checkpoint(config.checkpoint)
    structures = _load_structures(config)
    if len(structures) == 0:
        raise InvalidConfig("evaluate needs at least one structure file")
    if structures.subclass_names != model.subclass_names:
        raise SubclassSpaceMismatch(
            "structure files and checkpoint disagree on the subclass space"
        )
    table, _, _ = _load_table(config, model.subclass_names)
    table = _split_side(config, table, "test")
    batch = PredictionBatch(
        predicted=predict(model, table.features), truth=table.labels
    )
    report = evaluate(structures, batch)
    report_path = out / "report.json"
    with open(report_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_json(report.to_dict()))
    predictions_path = out / "predictions.csv"
    save_predictions(batch, model.subclass_names, predictions_path)
    _note(f"wrote {report_path}")
    _note(f"wrote {predictions_path}")


_AXIS_COLUMNS = {"lambda": "lambda", "attach_stage": "stage", "k": "k"}
_METRIC_COLUMNS = ("accuracy", "p_ha", "r_ha", "f_ha", "tie_a", "lca_a")


def cmd_sweep(config: ExperimentConfig, raw: dict, axis, values, seeds) -> None:
    """Train and evaluate per (value, seed); write sweep_{axis}.csv.

    Each run re-resolves the whole config under its own master seed, so
    null section seeds vary across runs while pinned ones stay put. Rows
    appear sorted by (value, seed) and are flushed as they finish; each
    value closes with a seed="mean" row averaging its runs.
    """
    section = config.sweep or {}
    axis = axis if axis is not None else section.get("axis")
    values = values if values is not None else section.get("values")
    seeds = seeds if seeds is not None else section.get("seeds")
    if axis not in _AXIS_COLUMNS:
        raise InvalidConfig(
            f"sweep axis must be one of {sorted(_AXIS_COLUMNS)}, got {axis!r}"
        )
    if not values:
        raise InvalidConfig("sweep needs a non-empty list of values")
    seeds = list(seeds) if seeds else [config.seed]
    values = sorted(values)
    seeds = sorted(int(s) for s in seeds)

    out = _out_dir(config)
    path = out / f"sweep_{axis}.csv"
    header = [_AXIS_COLUMNS[axis], "seed"] + list(_METRIC_COLUMNS)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        fh.flush()
        mean_by_value = []
        for value in values:
            reports = []
            for seed in seeds:
                report = _sweep_run(raw, axis, value, seed)
                reports.append(report)
                fh.write(_sweep_row(value, str(seed), report.to_dict()) + "\n")
                fh.flush()
            mean = {
                column: sum(r.to_dict()[column] for r in reports) / len(reports)
                for column in _METRIC_COLUMNS
            }
            mean_by_value.append((value, mean))
            fh.write(_sweep_row(value, "mean", mean) + "\n")
            fh.flush()
    _note(f"wrote {path}")
    if axis == "k":
        best = max(mean_by_value, key=lambda pair: pair[1]["accuracy"])
        _note(f"best k by mean accuracy: {best[0]}")


def _sweep_value_str(value) -> str:
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def _sweep_row(value, seed: str, metrics: dict) -> str:
    cells = [_sweep_value_str(value), seed]
    cells += [format_float(metrics[column]) for column in _METRIC_COLUMNS]
    return ",".join(cells)


def _sweep_run(raw: dict, axis, value, seed: int):
    """One sweep run: reconfigure, train, evaluate the held-out side."""
    run_raw = copy.deepcopy(raw)
    run_raw["seed"] = int(seed)
    run_raw.pop("sweep", None)
    if axis == "lambda":
        run_raw.setdefault("model", {})["lambda_total"] = float(value)
        run_raw["model"]["lambda_split"] = None
    elif axis == "attach_stage":
        heads = len(run_raw.get("structures") or [])
        if heads == 0:
            raise InvalidConfig("attach_stage sweep needs structure files")
        run_raw.setdefault("model", {})["attach_stages"] = [int(value)] * heads
    else:
        run_raw.setdefault("builder", {})["k"] = int(value)
    cfg = experiment_config_from_dict(run_raw)

    structures = _load_structures(cfg)
    names_hint = structures.subclass_names if len(structures) else None
    table, names, _ = _load_table(cfg, names_hint)
    train_side = _split_side(cfg, table, "train")
    test_side = _split_side(cfg, table, "test")
    if axis == "k":
        built = build_visual_structure(
            train_side,
            cfg.builder.k,
            cfg.builder.delta,
            cfg.builder.seed,
            subclass_names=names,
            class_count=len(names),
        )
        structures = StructureSet((built,))
    model, _ = train(cfg.model, train_side, structures, subclass_names=names)
    batch = PredictionBatch(
        predicted=predict(model, test_side.features), truth=test_side.labels
    )
    return evaluate(structures, batch)


# -- argument handling --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hierfusion",
        description="Hierarchical classification pipeline: synthesize data, "
        "build label structures, train, evaluate, sweep.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    commands = {
        "gen-synthetic": "write a synthetic feature file and its planted structure",
        "build-structure": "induce a visual label structure from features",
        "train": "train the multi-task model, write checkpoint and history",
        "evaluate": "score a checkpoint, write the evaluation report",
        "sweep": "train and evaluate across one axis of values and seeds",
    }
    for name, help_text in commands.items():
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", metavar="PATH", help="JSON experiment config")
        sub.add_argument(
            "--seed", type=int, metavar="N", help="override the master seed"
        )
        sub.add_argument(
            "--out", metavar="DIR", help="override the output directory"
        )
        if name == "sweep":
            sub.add_argument(
                "--axis",
                choices=sorted(_AXIS_COLUMNS),
                help="which config field the sweep varies",
            )
            sub.add_argument(
                "--values", metavar="LIST", help="comma-separated axis values"
            )
            sub.add_argument(
                "--seeds", metavar="LIST", help="comma-separated run seeds"
            )
    return parser


def _parse_overrides(tokens: list) -> list:
    """``--dotted.name value`` (or ``--name=value``) pairs into (key, value)."""
    overrides = []
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if not token.startswith("--"):
            raise InvalidConfig(f"unexpected argument {token!r}")
        key = token[2:]
        if "=" in key:
            key, text = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise InvalidConfig(f"flag --{key} needs a value")
            text = tokens[i + 1]
            i += 2
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        overrides.append((key, value))
    return overrides


def _apply_overrides(raw: dict, overrides: list) -> None:
    for key, value in overrides:
        parts = key.split(".")
        node = raw
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise InvalidConfig(f"--{key} does not address an object field")
        node[parts[-1]] = value


def _parse_value_list(text):
    if text is None:
        return None
    values = []
    for cell in text.split(","):
        cell = cell.strip()
        if not cell:
            continue
        try:
            values.append(json.loads(cell))
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"cannot parse list item {cell!r}") from exc
    if not values:
        raise InvalidConfig("empty value list")
    return values


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        overrides = _parse_overrides(extra)
        if args.config is not None:
            with open(args.config, "r", encoding="utf-8") as fh:
                try:
                    raw = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise InvalidConfig(f"{args.config}: {exc}") from exc
        else:
            raw = {}
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.out is not None:
            raw["out"] = args.out
        _apply_overrides(raw, overrides)
        config = experiment_config_from_dict(raw)
        if args.command == "sweep":
            cmd_sweep(
                config,
                raw,
                axis=args.axis,
                values=_parse_value_list(args.values),
                seeds=_parse_value_list(args.seeds),
            )
        elif args.command == "gen-synthetic":
            cmd_gen_synthetic(config)
        elif args.command == "build-structure":
            cmd_build_structure(config)
        elif args.command == "train":
            cmd_train(config)
        else:
            cmd_evaluate(config)
    except (HierFusionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
