"""Command-line front end.

Subcommands: run, sweep, ingest, plot, list-algorithms. Experiment settings
come from a flat TOML config file; any key can be overridden on the command
line with --set key=value (dotted keys reach per-algorithm tables). Exit
codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .harness import (
    ExperimentConfig,
    emit_csv,
    emit_plot_data,
    emit_sweep_csv,
    parse_csv,
    run_experiment,
    run_misspecification_sweep,
)
from .policies import POLICY_NAMES

# accepted spellings for config fields
_FIELD_ALIASES = {"lambda": "lam"}

_CONFIG_FIELDS = {f.name for f in ExperimentConfig.__dataclass_fields__.values()}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _coerce_value(raw: str):
    """Parse a --set value with TOML scalar rules, else keep the bare string."""
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        if "," in raw:
            return [part.strip() for part in raw.split(",") if part.strip()]
        return raw


def _apply_set(mapping: dict, spec: str) -> None:
    if "=" not in spec:
        raise UsageError(f"--set expects key=value, got {spec!r}")
    key, raw = spec.split("=", 1)
    value = _coerce_value(raw.strip())
    parts = key.strip().split(".")
    node = mapping
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise UsageError(f"cannot set {key!r}: {part!r} is not a table")
    node[parts[-1]] = value


def load_config(path: str | None, sets: list[str]) -> ExperimentConfig:
    mapping: dict = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise UsageError(f"config file not found: {path}")
        try:
            with open(p, "rb") as fh:
                mapping = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"invalid config {path}: {exc}") from None
    for spec in sets or []:
        _apply_set(mapping, spec)
    return config_from_mapping(mapping)


def config_from_mapping(mapping: dict) -> ExperimentConfig:
    fields: dict = {}
    alg_params: dict = {}
    for key, value in mapping.items():
        key = _FIELD_ALIASES.get(key, key)
        if isinstance(value, dict):
            if key in POLICY_NAMES or key == "oracle":
                alg_params[key] = value
            else:
                raise UsageError(f"unknown algorithm table {key!r} in config")
        elif key in _CONFIG_FIELDS:
            fields[key] = value
        else:
            raise UsageError(f"unknown config key {key!r}")
    if "algorithms" in fields and isinstance(fields["algorithms"], str):
        fields["algorithms"] = [fields["algorithms"]]
    if alg_params:
        fields["alg_params"] = alg_params
    try:
        return ExperimentConfig(**fields)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _write_run_outputs(table, config: ExperimentConfig, render_figure: bool) -> Path:
    out_csv = Path(config.out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    emit_csv(table, out_csv)
    with open(out_csv.with_suffix(out_csv.suffix + ".meta.json"), "w") as fh:
        json.dump(table.metadata, fh, indent=2)
    emit_plot_data(table, out_csv.with_suffix(".dat"))
    if render_figure:
        from .plotting import render_regret_curves

        render_regret_curves(table, out_csv.with_suffix(".svg"))
    return out_csv


def _cmd_run(args) -> int:
    config = load_config(args.config, args.set)
    table = run_experiment(config)
    out_csv = _write_run_outputs(table, config, config.emit_figure)
    for alg in table.algorithms:
        print(f"{alg}: final mean regret {table.final_regret(alg):.3f} "
              f"(n={table.series[alg]['n_reps']})")
    print(f"wrote {out_csv}")
    return 0


def _cmd_sweep(args) -> int:
    config = load_config(args.config, args.set)
    c_values = [int(c) for c in args.c_values.split(",")] if args.c_values else None
    sweep = run_misspecification_sweep(config, c_values=c_values, T=args.sweep_T)
    out_csv = Path(config.out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    emit_sweep_csv(sweep, out_csv)
    with open(out_csv.with_suffix(out_csv.suffix + ".meta.json"), "w") as fh:
        json.dump(sweep.metadata, fh, indent=2)
    if config.emit_figure:
        from .plotting import render_sweep

        render_sweep(sweep, out_csv.with_suffix(".svg"))
    for c in sweep.c_values:
        row = ", ".join(
            f"{alg}={sweep.final_regret(alg, c):.2f}"
            for alg in sweep.tables[c].algorithms
        )
        print(f"c={c}: {row}")
    print(f"wrote {out_csv}")
    return 0


def _cmd_ingest(args) -> int:
    from .letor import normalize_and_filter, parse_svmlight, query_to_instance

    queries = parse_svmlight(args.input)
    if not queries:
        raise UsageError(f"no queries found in {args.input}")
    if args.limit:
        queries = queries[: args.limit]
    normalized, stats = normalize_and_filter(queries)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    docs = []
    for q in normalized:
        inst = query_to_instance(q, args.K, gamma=args.gamma)
        if inst is not None:
            docs.append(inst.to_dict())
    with open(out_dir / "instances.json", "w") as fh:
        json.dump(docs, fh)
    stats.save(out_dir / "stats.json")
    print(
        f"ingested {len(queries)} queries -> {len(docs)} instances "
        f"({stats.kept_features.size} features kept)"
    )
    print(f"wrote {out_dir / 'instances.json'} and {out_dir / 'stats.json'}")
    return 0


def _cmd_plot(args) -> int:
    from .plotting import render_regret_curves

    table = parse_csv(args.input)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    render_regret_curves(table, out, title=args.title)
    print(f"wrote {out}")
    return 0


def _cmd_list_algorithms(_args) -> int:
    for name in POLICY_NAMES:
        print(name)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="cascade-bandits", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    run = sub.add_parser("run", help="run an experiment grid", parents=[])
    run.add_argument("--config", help="flat TOML config file")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config key (repeatable)")
    run.set_defaults(func=_cmd_run)

    sweep = sub.add_parser("sweep", help="prior-misspecification sweep")
    sweep.add_argument("--config", help="flat TOML config file")
    sweep.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    sweep.add_argument("--c-values", default=None, help="comma-separated shift levels")
    sweep.add_argument("--sweep-T", type=int, default=1000, dest="sweep_T",
                       help="horizon for the sweep runs")
    sweep.set_defaults(func=_cmd_sweep)

    ingest = sub.add_parser("ingest", help="convert an SVMLight ranking file")
    ingest.add_argument("--input", required=True, help="SVMLight file (.gz ok)")
    ingest.add_argument("--output", required=True, help="output directory")
    ingest.add_argument("--gamma", type=float, default=0.8,
                        help="attraction probability of a relevance-4 document")
    ingest.add_argument("--limit", type=int, default=None, help="keep first N queries")
    ingest.add_argument("--K", type=int, default=10, help="list length for instances")
    ingest.set_defaults(func=_cmd_ingest)

    plot = sub.add_parser("plot", help="render a results CSV to a figure")
    plot.add_argument("--input", required=True, help="results CSV")
    plot.add_argument("--output", required=True, help="figure path (.svg/.png/.pdf)")
    plot.add_argument("--title", default=None)
    plot.set_defaults(func=_cmd_plot)

    la = sub.add_parser("list-algorithms", help="print the algorithm registry")
    la.set_defaults(func=_cmd_list_algorithms)
    return parser


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            parser.print_usage(sys.stderr)
            print("error: a subcommand is required", file=sys.stderr)
            return 1
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())
