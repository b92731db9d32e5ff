"""Command-line entry point.

Exit status: 0 on success, 1 on invalid arguments or unreadable inputs,
2 on failures during computation. Every run writes a manifest next to its
outputs holding the resolved configuration and tool version.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

from . import __version__
from .data import TASKS, IntegrityError, ParseError, SynthConfig, atomic_write_text, load_csv, synth_generate, write_csv
from .evaluation import (
    DEMOGRAPHICS,
    SingleClassError,
    fairness_report,
    latent_sweep,
    probe_report,
    reports_to_json,
)
from .poison import PoisonSweepConfig, run_poison_sweep
from .svg import line_chart
from .tensor import NumericError
from .trainer import (
    CheckpointError,
    TrainConfig,
    TrainingError,
    TransformMode,
    checkpoint_to_text,
    load_checkpoint,
    train,
    transform_dataset,
)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

# field name -> flag, where the flag is not simply the kebab-cased field
SYNTH_FLAGS = {"dimension": "--dim"}
TRAIN_FLAGS = {"adv_steps_per_vae_step": "--adv-steps"}


class UsageError(Exception):
    pass


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    def _get_help_string(self, action):
        if action.required:
            return action.help
        return super()._get_help_string(action)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _flag(field_name: str, renames: dict[str, str]) -> str:
    return renames.get(field_name, "--" + field_name.replace("_", "-"))


def _scalar_fields(cls):
    return [f for f in dataclasses.fields(cls) if f.type in ("int", "float", int, float)]


def _add_config_flags(p: argparse.ArgumentParser, cls, renames: dict[str, str], skip=()) -> None:
    for f in _scalar_fields(cls):
        if f.name in skip:
            continue
        kind = int if f.type in ("int", int) else float
        p.add_argument(_flag(f.name, renames), dest=f.name, type=kind, default=f.default,
                       metavar=kind.__name__.upper(), help=f.name.replace("_", " "))


def _config_from_args(cls, args, renames: dict[str, str], **extra):
    values = {f.name: getattr(args, f.name) for f in _scalar_fields(cls) if hasattr(args, f.name)}
    cfg = cls(**{**values, **extra})
    try:
        cfg.validate()
    except ValueError as exc:
        msg = str(exc)
        name = msg.split(" ", 1)[0]
        if name in {f.name for f in dataclasses.fields(cls)}:
            msg = f"{_flag(name, renames)}: {msg}"
        raise UsageError(msg) from None
    return cfg


def _csv_list(kind):
    def parse(text: str):
        try:
            return tuple(kind(t) for t in text.split(",") if t.strip() != "")
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid list {text!r}") from None
    return parse


def _sha256(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(path: Path, args: argparse.Namespace, config: dict, inputs: list[str],
                    outputs: list[str]) -> None:
    doc = {
        "tool": "embdebias",
        "version": __version__,
        "subcommand": args.command,
        "arguments": {k: v for k, v in sorted(vars(args).items()) if k not in ("command", "func")},
        "config": config,
        "seed": config.get("seed"),
        "inputs": {p: _sha256(p) for p in inputs},
        "outputs": sorted(outputs),
    }
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True, default=list) + "\n")


def _manifest_for(out: str) -> Path:
    return Path(str(out) + ".manifest.json")


def _ensure_dir(d: str) -> Path:
    path = Path(d)
    path.mkdir(parents=True, exist_ok=True)
    return path


# --------------------------------------------------------------------------
# subcommands

def cmd_synth(args) -> None:
    cfg = _config_from_args(SynthConfig, args, SYNTH_FLAGS)
    write_csv(synth_generate(cfg), args.out)
    d = dataclasses.asdict(cfg)
    _write_manifest(_manifest_for(args.out), args, d, [], [args.out])


def cmd_train(args) -> None:
    cfg = _config_from_args(TrainConfig, args, TRAIN_FLAGS)
    ds = load_csv(args.data)
    ckpt = train(ds, cfg, progress=args.verbose)
    atomic_write_text(args.out_checkpoint, checkpoint_to_text(ckpt))
    _write_manifest(_manifest_for(args.out_checkpoint), args, cfg.to_dict(), [args.data], [args.out_checkpoint])


def cmd_transform(args) -> None:
    ckpt = load_checkpoint(args.checkpoint)
    ds = load_csv(args.data)
    mode = TransformMode(output_space=args.space, deterministic=not args.stochastic)
    try:
        out = transform_dataset(ckpt, ds, mode)
    except ValueError as exc:
        raise UsageError(f"--data: {exc}") from None
    write_csv(out, args.out)
    cfg = {"output_space": mode.output_space, "deterministic": mode.deterministic, "seed": ckpt.config.seed}
    _write_manifest(_manifest_for(args.out), args, cfg, [args.checkpoint, args.data], [args.out])


def _check_names(flag: str, names, allowed) -> None:
    for n in names:
        if n not in allowed:
            raise UsageError(f"{flag}: unknown name {n!r} (choose from {', '.join(allowed)})")


def cmd_probe(args) -> None:
    _check_names("--attributes", args.attributes, DEMOGRAPHICS)
    _check_names("--tasks", args.tasks, TASKS)
    ds = load_csv(args.data)
    cfg = {"attributes": list(args.attributes), "tasks": list(args.tasks), "seed": None}
    rep = probe_report(ds, Path(args.data).stem, attributes=args.attributes, tasks=args.tasks, config=cfg)
    atomic_write_text(args.out_report, json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n")
    _write_manifest(_manifest_for(args.out_report), args, cfg, [args.data], [args.out_report])


def cmd_fairness(args) -> None:
    original, debiased = load_csv(args.original), load_csv(args.debiased)
    try:
        before, after = fairness_report(original, debiased)
    except ValueError as exc:
        raise UsageError(f"--debiased: {exc}") from None
    atomic_write_text(args.out_report, reports_to_json(before, after))
    _write_manifest(_manifest_for(args.out_report), args, {"seed": None},
                    [args.original, args.debiased], [args.out_report])


def cmd_poison(args) -> None:
    cfg = PoisonSweepConfig(fractions=args.fractions, seed=args.seed)
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(f"--fractions: {exc}") from None
    original, debiased = load_csv(args.original), load_csv(args.debiased)
    try:
        curve = run_poison_sweep(original, debiased, cfg)
    except ValueError as exc:
        if "align" in str(exc) or "disagree" in str(exc):
            raise UsageError(f"--debiased: {exc}") from None
        raise
    out = _ensure_dir(args.out_dir)
    written = []
    atomic_write_text(out / "poison_curve.csv", curve.to_csv())
    written.append(str(out / "poison_curve.csv"))
    for task in cfg.tasks:
        for group in cfg.target_groups:
            svg = line_chart(
                {kind: curve.series(kind, task, group) for kind in ("original", "debiased")},
                title=f"{task}: flipping {group} labels", x_label="flip fraction", y_label="EOD",
            )
            name = out / f"poison_{task}_{group}.svg"
            atomic_write_text(name, svg)
            written.append(str(name))
    _write_manifest(out / "manifest.json", args, curve.config, [args.original, args.debiased], written)


def cmd_sweep(args) -> None:
    cfg = _config_from_args(TrainConfig, args, TRAIN_FLAGS, latent_dim=max(args.dims or (1,)))
    if not args.dims:
        raise UsageError("--dims: at least one latent dimension is required")
    ds = load_csv(args.data)
    for d in args.dims:
        if not 1 <= d <= ds.dimension:
            raise UsageError(f"--dims: latent dimension {d} outside [1, {ds.dimension}]")
    result = latent_sweep(ds, args.dims, cfg)
    out = _ensure_dir(args.out_dir)
    atomic_write_text(out / "sweep.csv", result.to_csv())
    atomic_write_text(out / "sweep.json", json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    rows = result.rows
    svg = line_chart(
        {"sex AUC": [(r["latent_dim"], r["sex_auc"]) for r in rows],
         "task 1 AUC": [(r["latent_dim"], r["task1_auc"]) for r in rows],
         "task 2 AUC": [(r["latent_dim"], r["task2_auc"]) for r in rows]},
        title="Debiased probes vs latent width", x_label="latent dimension", y_label="AUC",
    )
    atomic_write_text(out / "sweep.svg", svg)
    written = [str(out / n) for n in ("sweep.csv", "sweep.json", "sweep.svg")]
    _write_manifest(out / "manifest.json", args, {**cfg.to_dict(), "dims": list(args.dims)}, [args.data], written)


# --------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    parser = _Parser(prog="embdebias", description="Debias embedding datasets and measure leakage and fairness.",
                     formatter_class=fmt)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic embedding dataset", formatter_class=fmt)
    p.add_argument("--out", required=True, help="output CSV path")
    _add_config_flags(p, SynthConfig, SYNTH_FLAGS)
    p.set_defaults(func=cmd_synth)

    def train_flags(p):
        _add_config_flags(p, TrainConfig, TRAIN_FLAGS)

    p = sub.add_parser("train", help="train the adversarial debiasing VAE", formatter_class=fmt)
    p.add_argument("--data", required=True, help="input dataset CSV")
    p.add_argument("--out-checkpoint", required=True, help="checkpoint output path")
    p.add_argument("--verbose", action="store_true", help="log per-epoch losses")
    train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("transform", help="map a dataset through a trained checkpoint", formatter_class=fmt)
    p.add_argument("--checkpoint", required=True, help="checkpoint path")
    p.add_argument("--data", required=True, help="input dataset CSV")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--space", choices=("reconstruction", "latent"), default="reconstruction",
                   help="output representation")
    p.add_argument("--stochastic", action="store_true", help="sample z instead of using the mean")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("probe", help="run demographic and task probes on one dataset", formatter_class=fmt)
    p.add_argument("--data", required=True, help="input dataset CSV")
    p.add_argument("--out-report", required=True, help="report output path")
    p.add_argument("--attributes", type=_csv_list(str), default=",".join(DEMOGRAPHICS), metavar="LIST",
                   help="comma-separated demographic probes")
    p.add_argument("--tasks", type=_csv_list(str), default=",".join(TASKS), metavar="LIST",
                   help="comma-separated task probes")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("fairness", help="before/after probe and EOD report", formatter_class=fmt)
    p.add_argument("--original", required=True, help="original dataset CSV")
    p.add_argument("--debiased", required=True, help="debiased dataset CSV")
    p.add_argument("--out-report", required=True, help="report output path")
    p.set_defaults(func=cmd_fairness)

    defaults = PoisonSweepConfig()
    p = sub.add_parser("poison", help="label-flipping robustness sweep", formatter_class=fmt)
    p.add_argument("--original", required=True, help="original dataset CSV")
    p.add_argument("--debiased", required=True, help="debiased dataset CSV")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--fractions", type=_csv_list(float), default=",".join(map(str, defaults.fractions)), metavar="LIST",
                   help="comma-separated flip fractions")
    p.add_argument("--seed", type=int, default=defaults.seed, help="flip-set seed")
    p.set_defaults(func=cmd_poison)

    p = sub.add_parser("sweep", help="latent-dimension trade-off sweep", formatter_class=fmt)
    p.add_argument("--data", required=True, help="input dataset CSV")
    p.add_argument("--dims", type=_csv_list(int), required=True, metavar="LIST",
                   help="comma-separated latent widths")
    p.add_argument("--out-dir", required=True, help="output directory")
    _add_config_flags(p, TrainConfig, TRAIN_FLAGS, skip=("latent_dim",))
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, IntegrityError, CheckpointError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, NumericError, SingleClassError, FloatingPointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
