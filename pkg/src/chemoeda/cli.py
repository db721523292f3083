"""Command-line interface: ``chemoeda <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 3 parse error, 4 instance invariant
violation, 5 configuration or experiment failure.

Output files go to ``--out`` (default: ``$CHEMOEDA_OUT`` or the current
directory).  Every file starts with a metadata header holding the tool
version, the instance hash and the command that produced it, so equal
commands give byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shlex
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .benchmarks import OneMax
from .harness import (
    ExperimentError,
    ExperimentSpec,
    bisection_population,
    compare,
    feasibility_predicate,
    read_results,
    run_experiment,
    write_results,
)
from .instance_io import ParseError, apply_overrides, instance_hash, load_instance
from .linkage import detect_interactions, fitness_oracle, write_report
from .model import (
    ChemoProblem,
    DimensionError,
    InstanceError,
    ProblemInstance,
    tumour_trajectory,
)
from .optimizers import ConfigError, make_optimizer

log = logging.getLogger("chemoeda")

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_INVARIANT, EXIT_EXPERIMENT = 0, 2, 3, 4, 5
OUT_ENV = "CHEMOEDA_OUT"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _command_echo(args) -> str:
    """The invocation without --out/--jobs, which never change results."""
    argv = list(args._argv)
    skip = {"--out", "--jobs"}
    kept, i = [], 0
    while i < len(argv):
        a = argv[i]
        name = a.split("=", 1)[0]
        if name in skip:
            i += 1 if "=" in a else 2
            continue
        kept.append(a)
        i += 1
    return shlex.join(["chemoeda", *kept])


def _header(args, inst: ProblemInstance | None = None, **extra) -> list[str]:
    lines = [f"# tool = chemoeda {__version__}", f"# command = {_command_echo(args)}"]
    if inst is not None:
        lines.append(f"# instance_hash = {instance_hash(inst)}")
    lines.extend(f"# {k} = {v}" for k, v in extra.items())
    return lines


def _load(path, overrides) -> ProblemInstance:
    inst = load_instance(path)
    if overrides:
        for item in overrides:
            log.info("override from flag: %s", item)
        inst = apply_overrides(inst, overrides)
    return inst


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _param_overrides(items) -> dict:
    params = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects key=value, got {item!r}")
        params[key.strip()] = _parse_value(value.strip())
    return params


def _bits(x) -> str:
    return "".join(str(int(b)) for b in x)


# ------------------------------------------------------------ subcommands


def cmd_validate(args) -> int:
    inst = _load(args.instance, args.set)
    problems = inst.check()
    if problems:
        raise InstanceError(problems)
    untreated = tumour_trajectory(np.zeros((inst.s, inst.d)), inst)
    crosses = bool(np.any(untreated > inst.n_max))
    first = int(np.argmax(untreated > inst.n_max)) + 1 if crosses else None
    print(f"instance: {args.instance}  hash {instance_hash(inst)}")
    print(f"valid: yes  ({inst.s} doses x {inst.d} drugs x {inst.bits_per_dose} bits = {inst.n_bits} bits)")
    print("untreated tumour size at dose times:")
    for t, n in zip(inst.dose_times, untreated):
        flag = "  > n_max" if n > inst.n_max else ""
        print(f"  t = {t:g}: {n:.6e}{flag}")
    if crosses:
        print(f"untreated tumour crosses n_max at dose time {first} (feasibility pressure present)")
    else:
        print("warning: untreated tumour never crosses n_max; the tumour constraint is inactive")
    return EXIT_OK


def _run_config(args) -> dict:
    config = _param_overrides(args.param)
    if args.pop is not None:
        config["population_size"] = args.pop
    if args.select is not None:
        config["selection"] = args.select
    config["max_evaluations"] = args.budget
    config["stop"] = args.stop
    if args.target is not None:
        config["target_fitness"] = args.target
    return config


def cmd_run(args) -> int:
    inst = _load(args.instance, args.set)
    config = _run_config(args)
    opt = make_optimizer(args.kind, config, args.seed).fit(ChemoProblem(inst))
    rec = opt.record_
    out = _out_dir(args)
    stem = out / f"run-{args.kind}-seed{args.seed}"

    trace_lines = _header(args, inst)
    trace_lines.append("generation,evaluations,best_fitness,population_mean")
    trace_lines += [f"{g},{e},{b!r},{m!r}" for g, e, b, m in rec.trace]
    trace_path = stem.with_suffix(".trace.csv")
    trace_path.write_text("\n".join(trace_lines) + "\n", encoding="utf-8")

    report = rec.best_report
    doc = {
        "tool": f"chemoeda {__version__}",
        "command": _command_echo(args),
        "instance_hash": instance_hash(inst),
        "kind": rec.kind,
        "seed": rec.seed,
        "config": rec.config,
        "first_feasible": rec.first_feasible,
        "total_evaluations": rec.total_evaluations,
        "best_fitness": rec.best_fitness,
        "best_x": _bits(rec.best_x) if rec.best_x is not None else None,
        "best_report": None if report is None else {
            "efficacy": report.efficacy,
            "distances": list(report.distances),
            "penalty": report.penalty,
            "fitness": report.fitness,
            "feasible": report.feasible,
            "eradicated": report.eradicated,
        },
        "trace_file": trace_path.name,
    }
    record_path = stem.with_suffix(".json")
    record_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    ff = rec.first_feasible if rec.first_feasible is not None else "none"
    print(f"{args.kind} seed {args.seed}: evaluations {rec.total_evaluations}, "
          f"first feasible {ff}, best fitness {rec.best_fitness:.6g}")
    print(f"wrote {record_path} and {trace_path}")
    return EXIT_OK


def _load_spec(args) -> tuple[ExperimentSpec, Path]:
    path = Path(args.spec)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc.msg})", exc.lineno) from None
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: spec must be a JSON object")
    allowed = set(ExperimentSpec.__dataclass_fields__)
    unknown = set(raw) - allowed
    if unknown:
        raise ParseError(f"{path}: unknown spec keys {sorted(unknown)}")
    for flag, key in (("runs", "runs"), ("cap", "cap"), ("seed", "base_seed"),
                      ("instance", "instance"), ("label", "label")):
        value = getattr(args, flag)
        if value is not None:
            log.info("override from flag: %s = %s (spec file had %s)", key, value, raw.get(key))
            raw[key] = value
    inst_ref = raw.get("instance", "default")
    if inst_ref != "default" and not Path(inst_ref).is_absolute() and args.instance is None:
        raw["instance"] = str(path.parent / inst_ref)
    return ExperimentSpec(**raw), path


def cmd_experiment(args) -> int:
    spec, _ = _load_spec(args)
    inst = _load(spec.instance, args.set)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        summary = run_experiment(spec, ChemoProblem(inst), n_jobs=args.jobs)
    for w in caught:
        log.warning("%s", w.message)
    summary.instance_hash = instance_hash(inst)
    if args.set:
        summary.spec = dict(summary.spec, instance_overrides=list(args.set))
    out = _out_dir(args) / f"{spec.name}.csv"
    write_results(summary, out)
    print(f"{spec.name} ({spec.protocol}): n = {summary.n}, censored = {summary.n_censored}, "
          f"mean = {summary.mean:.6g}, std = {summary.std:.6g}")
    print(f"wrote {out}")
    return EXIT_OK


def _read_summaries(paths):
    return [read_results(p) for p in paths]


def cmd_compare(args) -> int:
    if len(args.files) < 2:
        raise UsageError("compare needs at least two results files")
    summaries = _read_summaries(args.files)
    rows = compare(summaries)
    lines = ["a,b,diff,se,t,p,df"]
    for a, b, r in rows:
        lines.append(f"{a},{b},{r.diff:.6f},{r.se:.6f},{r.t:.6f},{r.p:.6g},{r.df:.4f}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out or os.environ.get(OUT_ENV):
        path = _out_dir(args) / "compare.csv"
        path.write_text("\n".join(_header(args)) + "\n" + text, encoding="utf-8")
    return EXIT_OK


def cmd_plotdata(args) -> int:
    if not args.files:
        raise UsageError("plotdata needs at least one results file")
    summaries = _read_summaries(args.files)
    lines = ["label,mean,std"]
    lines += [f"{s.label},{s.mean!r},{s.std!r}" for s in summaries]
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out or os.environ.get(OUT_ENV):
        path = _out_dir(args) / "plotdata.csv"
        path.write_text("\n".join(_header(args)) + "\n" + text, encoding="utf-8")
    return EXIT_OK


def cmd_linkage(args) -> int:
    if args.onemax:
        n_bits, f, inst = args.onemax, OneMax(args.onemax), None
    else:
        inst = _load(args.instance, args.set)
        n_bits, f = inst.n_bits, fitness_oracle(ChemoProblem(inst))
    report = detect_interactions(f, n_bits, backgrounds=args.backgrounds, tol=args.tol, seed=args.seed)
    path = _out_dir(args) / f"linkage-seed{args.seed}.txt"
    extra = {
        "tool": f"chemoeda {__version__}",
        "command": _command_echo(args),
        "instance_hash": instance_hash(inst) if inst is not None else "onemax",
        "evaluations": report.n_evaluations,
    }
    write_report(report, path, extra)
    print(f"pairs {report.n_pairs} of {report.possible_pairs} (density {report.density:.4f})")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_bisect(args) -> int:
    inst = _load(args.instance, args.set)
    config = _param_overrides(args.param)
    if args.select is not None:
        config["selection"] = args.select
    success = feasibility_predicate(args.kind, ChemoProblem(inst), config, budget=args.budget)
    size = bisection_population(success, args.lo, args.hi, target_rate=args.rate,
                                trials=args.trials, seed=args.seed)
    lines = _header(args, inst) + ["kind,population_size,trials,target_rate,budget",
                                   f"{args.kind},{size},{args.trials},{args.rate!r},{args.budget}"]
    path = _out_dir(args) / f"bisect-{args.kind}-seed{args.seed}.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"{args.kind}: population {size} reaches feasibility in at least "
          f"{args.rate:.0%} of {args.trials} runs")
    print(f"wrote {path}")
    return EXIT_OK


# ----------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or .)")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers for experiments")
    common.add_argument("-q", "--quiet", action="store_true", help="only log warnings")

    inst_flags = argparse.ArgumentParser(add_help=False)
    inst_flags.add_argument("--set", action="append", metavar="KEY=VALUE",
                            help="override an instance value (repeatable)")

    p = _Parser(prog="chemoeda", description="Chemotherapy scheduling with evolutionary optimisers.")
    p.add_argument("--version", action="version", version=f"chemoeda {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("validate", parents=[common, inst_flags], help="check an instance file")
    v.add_argument("instance", nargs="?", default="default")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", parents=[common, inst_flags], help="run one optimiser")
    r.add_argument("kind", choices=["ga", "umda", "pbil", "hboa"])
    r.add_argument("--instance", default="default")
    r.add_argument("--pop", type=int)
    r.add_argument("--select", help="tournament:K, truncation:N or truncation:FRACTION")
    r.add_argument("--budget", type=int, default=200_000, help="evaluation budget")
    r.add_argument("--stop", choices=["feasible", "budget", "target"], default="budget")
    r.add_argument("--target", type=float, help="target fitness for --stop target")
    r.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="other optimiser parameter, value parsed as JSON (repeatable)")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("experiment", parents=[common, inst_flags], help="run an experiment spec (JSON)")
    e.add_argument("spec")
    e.add_argument("--runs", type=int)
    e.add_argument("--cap", type=int)
    e.add_argument("--instance")
    e.add_argument("--label")
    e.set_defaults(func=cmd_experiment)

    c = sub.add_parser("compare", parents=[common], help="pairwise Welch t-tests")
    c.add_argument("files", nargs="*")
    c.set_defaults(func=cmd_compare)

    k = sub.add_parser("linkage", parents=[common, inst_flags], help="pairwise interaction census")
    k.add_argument("--instance", default="default")
    k.add_argument("--backgrounds", type=int, default=1)
    k.add_argument("--tol", type=float, default=1e-9)
    k.add_argument("--onemax", type=int, default=0, help=argparse.SUPPRESS)
    k.set_defaults(func=cmd_linkage)

    b = sub.add_parser("bisect", parents=[common, inst_flags],
                       help="smallest population that reliably reaches feasibility")
    b.add_argument("kind", choices=["ga", "umda", "pbil", "hboa"])
    b.add_argument("--instance", default="default")
    b.add_argument("--select")
    b.add_argument("--param", action="append", metavar="KEY=VALUE")
    b.add_argument("--lo", type=int, default=16)
    b.add_argument("--hi", type=int, default=32)
    b.add_argument("--trials", type=int, default=10)
    b.add_argument("--rate", type=float, default=0.9, help="required success fraction")
    b.add_argument("--budget", type=int, default=50_000, help="evaluations per trial run")
    b.set_defaults(func=cmd_bisect)

    g = sub.add_parser("plotdata", parents=[common], help="label,mean,std rows for bar charts")
    g.add_argument("files", nargs="*")
    g.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"chemoeda: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    args._argv = argv
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s", stream=sys.stderr, force=True)
    if args.seed is None and args.command != "experiment":
        args.seed = 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"chemoeda: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"chemoeda: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (InstanceError, DimensionError) as exc:
        problems = getattr(exc, "problems", None) or [str(exc)]
        print("chemoeda: invalid instance:", file=sys.stderr)
        for item in problems:
            print(f"  - {item}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, ExperimentError, ValueError) as exc:
        print(f"chemoeda: failed: {exc}", file=sys.stderr)
        return EXIT_EXPERIMENT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
