"""Command-line entry points: one subcommand per experiment stage.

Training subcommands share the same trio of flags: ``--config`` points at a
flat ``key = value`` file (same format a run echoes back as config.txt),
``--set key=value`` applies typed overrides on top (repeatable), and
``--out`` names the artifact directory.  Exit status is 0 on success and
nonzero with a stage-tagged message otherwise.

Example::

    facetzsl synth-data --task imgc --out data/
    facetzsl train-gcn --config data/config_gcn.cfg --set gcn.tau=0.9 --out runs/a
    facetzsl evaluate --run-dir runs/a
"""

from __future__ import annotations

import argparse
import sys

from . import experiment
from .ontology import ParseError, ValidationError
from .tensorio import load_table


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="flat 'key = value' config file")
    sub.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config entry (repeatable)",
    )
    sub.add_argument("--out", required=True, help="artifact output directory")


def _build_config(args: argparse.Namespace) -> experiment.ExperimentConfig:
    flat: dict[str, str] = {}
    if args.config:
        flat.update(experiment.parse_config_file(args.config))
    for item in args.overrides:
        if "=" not in item:
            raise ValidationError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        flat[key.strip()] = value.strip()
    return experiment.flat_to_config(flat)


def _parse_grid(items: list[str]) -> dict[str, list[str]]:
    """``KEY=V1;V2;...`` pairs -> sweep grid.

    Values are ';'-separated because legitimate values contain commas
    (tuples, and the zipped multi-key form ``encoder.variant,encoder.layers=
    rd,0;agg,1``).
    """
    grid: dict[str, list[str]] = {}
    for item in items:
        if "=" not in item:
            raise ValidationError(f"--grid expects KEY=V1;V2;..., got {item!r}")
        key, _, values = item.partition("=")
        key = key.strip()
        if key in grid:
            raise ValidationError(f"duplicate grid key {key!r}")
        grid[key] = [v.strip() for v in values.split(";") if v.strip()]
        if not grid[key]:
            raise ValidationError(f"grid key {key!r} has no values")
    return grid


def _print_metrics(metrics: dict) -> None:
    for key in sorted(metrics):
        print(f"{key} = {metrics[key]}")


def _cmd_stage(args: argparse.Namespace, through: str, learner: str | None) -> int:
    config = _build_config(args)
    if learner is not None:
        config = experiment.apply_overrides(config, {"learner": learner})
    report = experiment.run(config, args.out, through=through)
    for name, path in sorted(report.artifacts.items()):
        print(f"{name}: {path}")
    if report.metrics:
        _print_metrics(report.metrics)
    return 0


def _cmd_synth_data(args: argparse.Namespace) -> int:
    if args.task == "imgc":
        paths = experiment.write_synthetic_imgc(args.out, seed=args.seed)
        make_config = experiment.synthetic_imgc_config
    else:
        paths = experiment.write_synthetic_kgc(args.out, seed=args.seed)
        make_config = experiment.synthetic_kgc_config
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    # ready-to-run configs for both learners, tuned to this benchmark
    for learner in ("gan", "gcn"):
        cfg = make_config(paths, learner=learner, seed=args.seed)
        cfg_path = f"{args.out}/config_{learner}.cfg"
        with open(cfg_path, "w", encoding="utf-8") as fh:
            fh.write(experiment.format_config(cfg))
        print(f"config_{learner}: {cfg_path}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    if args.run_dir:
        metrics = experiment.evaluate_run(args.run_dir, args.out)
        _print_metrics(metrics)
        return 0
    if not args.out:
        raise ValidationError("evaluate needs --run-dir or --config/--out")
    return _cmd_stage(args, through="evaluate", learner=None)


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _build_config(args)
    grid = _parse_grid(args.grid)
    rows = experiment.sweep(config, grid, args.out)
    failed = sum("error" in row for row in rows)
    print(f"{len(rows)} cells, {failed} failed -> {args.out}/sweep.csv")
    return 1 if failed else 0


def _cmd_export_case_study(args: argparse.Namespace) -> int:
    table = load_table(args.embeddings)
    labels = (
        experiment.read_labels_csv(args.labels) if args.labels else None
    )
    written = experiment.export_case_study(
        table, args.out, labels=labels, n_neighbors=args.neighbors
    )
    for name, path in sorted(written.items()):
        print(f"{name}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facetzsl",
        description="Disentangled ontology embeddings for zero-shot learning",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("ingest", help="parse + validate inputs, echo config")
    _add_config_flags(p)
    p.set_defaults(func=lambda a: _cmd_stage(a, "ingest", None))

    p = subs.add_parser("synth-data", help="write a synthetic benchmark")
    p.add_argument("--task", choices=("imgc", "kgc"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth_data)

    p = subs.add_parser("train-encoder", help="train disentangled embeddings")
    _add_config_flags(p)
    p.set_defaults(func=lambda a: _cmd_stage(a, "encoder", None))

    p = subs.add_parser("train-gan", help="train the feature-generation learner")
    _add_config_flags(p)
    p.set_defaults(func=lambda a: _cmd_stage(a, "learner", "gan"))

    p = subs.add_parser("train-gcn", help="train the classifier-propagation learner")
    _add_config_flags(p)
    p.set_defaults(func=lambda a: _cmd_stage(a, "learner", "gcn"))

    p = subs.add_parser("evaluate", help="compute metrics for a finished run")
    p.add_argument("--run-dir", help="directory produced by a train-* command")
    p.add_argument("--config", help="flat config file (full pipeline run)")
    p.add_argument(
        "--set", dest="overrides", action="append", default=[],
        metavar="KEY=VALUE",
    )
    p.add_argument("--out", help="output directory (defaults to --run-dir)")
    p.set_defaults(func=_cmd_evaluate)

    p = subs.add_parser("sweep", help="grid of runs -> sweep.csv")
    _add_config_flags(p)
    p.add_argument(
        "--grid",
        action="append",
        required=True,
        metavar="KEY=V1;V2",
        help="grid dimension; zip several keys with commas: "
        "encoder.variant,encoder.layers=rd,0;agg,1",
    )
    p.set_defaults(func=_cmd_sweep)

    p = subs.add_parser(
        "export-case-study", help="2-D projections + neighbors per component"
    )
    p.add_argument("--embeddings", required=True, help="embeddings.bin path")
    p.add_argument("--out", required=True)
    p.add_argument("--labels", help="labels.csv with per-class factor labels")
    p.add_argument("--neighbors", type=int, default=2)
    p.set_defaults(func=_cmd_export_case_study)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except experiment.StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValidationError, ParseError) as exc:
        print(f"error: [config] {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: [io] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
