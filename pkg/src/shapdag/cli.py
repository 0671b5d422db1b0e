"""Command-line entry point.

Exit codes: 0 on success, 2 for bad input (unreadable or malformed files,
invalid options, mismatched graphs) and 3 when a numerical stage fails.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .assemble import PipelineConfig, PipelineError, discover
from .dag import read_dag
from .data import DataError, load_csv, save_csv
from .metrics import SCHEMA_VERSION, MetricsReport, full_report
from .orient import HsicConfig
from .skeleton import SelectionConfig
from .synth import MechanismFamily, SemGenerationError, generate_sem, sample_dag

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

# option defaults; a JSON config overrides these and explicit flags override both
DEFAULTS = {
    "seed": 0,
    "jobs": os.cpu_count() or 1,
    "regressors": "both",
    "mode": "union",
    "T": 50,
    "q": 0.01,
    "tau": 0.2,
    "hpo_budget": 25,
    "alpha": 0.05,
    "permutations": 200,
    "gamma": False,
    "min_pts": 1,
    "greedy": False,
    "percentile": 80.0,
    "auto_greedy": False,
    "n_samples": 200,
    "background_size": 100,
    "hidden": "64,64",
    "family": "linear",
    "p": 10,
    "m": 500,
    "n_datasets": 10,
    "replicates": 50,
    "n": 5000,
    "background": "100",
    "seeds": 10,
}


class InputError(Exception):
    pass


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.ndarray, set, frozenset, tuple)):
        return list(o)
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {path}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise InputError(f"output directory {path} is not writable")
    return out


def resolve(args: argparse.Namespace) -> dict:
    """Merge built-in defaults, the JSON config file and explicit flags, in that order."""
    opts = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise InputError("config file must hold a JSON object")
        unknown = set(doc) - set(DEFAULTS)
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        opts.update(doc)
    for key, value in vars(args).items():
        if value is not None and key in DEFAULTS:
            opts[key] = value
    return opts


def pipeline_config(opts: dict) -> PipelineConfig:
    """Build and validate the discovery configuration; raises InputError on bad values."""
    reg = opts["regressors"]
    regressors = ("gbt", "mlp") if reg == "both" else (reg,)
    try:
        hidden = tuple(int(h) for h in str(opts["hidden"]).split(",") if h.strip())
        if not hidden or min(hidden) < 1:
            raise ValueError("hidden layer widths must be positive integers")
        return PipelineConfig(
            regressors=regressors,
            mode=opts["mode"],
            T=int(opts["T"]),
            q=float(opts["q"]),
            tau=float(opts["tau"]),
            hpo_budget=int(opts["hpo_budget"]),
            selection=SelectionConfig(min_pts=int(opts["min_pts"]), greedy=bool(opts["greedy"]),
                                      percentile=float(opts["percentile"]),
                                      auto_greedy=bool(opts["auto_greedy"])),
            hsic=HsicConfig(alpha=float(opts["alpha"]), n_permutations=int(opts["permutations"]),
                            gamma=bool(opts["gamma"])),
            mlp_hidden=hidden,
            n_samples=int(opts["n_samples"]),
            background_size=int(opts["background_size"]),
            jobs=int(opts["jobs"]),
        )
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid configuration: {exc}") from exc


# --- subcommands ----------------------------------------------------------------


def cmd_generate(args) -> int:
    opts = resolve(args)
    try:
        family = MechanismFamily.parse(opts["family"])
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    p, m, count = int(opts["p"]), int(opts["m"]), int(opts["n_datasets"])
    if p < 2 or m < 2 or count < 0:
        raise InputError("need p >= 2, m >= 2 and n_datasets >= 0")
    out = _out_dir(args.out)
    root = np.random.SeedSequence(int(opts["seed"]))
    entries = []
    for k, ss in enumerate(root.spawn(count)):
        seed = int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))
        rng = np.random.default_rng(seed)
        truth = sample_dag(p, rng=rng)
        d = generate_sem(truth, family, m, rng)
        stem = f"dataset_{k:03d}"
        save_csv(d, out / f"{stem}.csv")
        _write(out / f"{stem}_truth.edges", truth.to_edgelist())
        _write(out / f"{stem}_truth.dot", truth.to_dot(name="truth"))
        entries.append({"index": k, "seed": seed, "data": f"{stem}.csv",
                        "truth": f"{stem}_truth.edges", "truth_dot": f"{stem}_truth.dot",
                        "n_edges": len(truth.edges)})
    manifest = {"schema_version": SCHEMA_VERSION, "family": family.value, "p": p, "m": m,
                "seed": int(opts["seed"]), "datasets": entries}
    _write(out / "manifest.json", _dump(manifest))
    print(f"wrote {count} dataset(s) to {out}")
    return EXIT_OK


def cmd_discover(args) -> int:
    opts = resolve(args)
    cfg = pipeline_config(opts)
    d = load_csv(args.data)
    out = _out_dir(args.out)
    res = discover(d, cfg, np.random.default_rng(int(opts["seed"])))
    labels = {e: "+".join(sorted(res.combined.edges.get(e, ()))) for e in res.dag.edges}
    _write(out / "dag.dot", res.dag.to_dot(name="discovered", edge_labels=labels))
    _write(out / "dag.edges", res.dag.to_edgelist())
    _write(out / "dag.json", _dump(res.edge_json()))
    _write(out / "report.json", _dump({**res.report, "seed": int(opts["seed"]), "data": str(args.data)}))
    for kind, sk in res.skeletons.items():
        sk.graph.to_csv(out / f"frequencies_{kind}.csv")
    print(f"{len(res.dag.edges)} edge(s); outputs in {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        est = read_dag(args.estimate)
        truth = read_dag(args.truth)
    except OSError as exc:
        raise InputError(str(exc)) from exc
    report = full_report(est, truth)
    if args.csv:
        print(MetricsReport.csv_header())
        print(report.to_csv_row())
    else:
        print(report.to_json())
    return EXIT_OK


def _background(value) -> int | None:
    if value is None or str(value).lower() == "none":
        return None
    size = int(value)
    if size < 1:
        raise InputError("background must be a positive size or 'none'")
    return size


def cmd_validate_shap(args) -> int:
    from .experiments import rows_to_csv, validation_study

    opts = resolve(args)
    replicates, n = int(opts["replicates"]), int(opts["n"])
    if replicates < 1:
        raise InputError("replicates must be >= 1")
    if n < 100:
        raise InputError("n must be >= 100")
    out = _out_dir(args.out)
    rows = validation_study(replicates, n, int(opts["seed"]), background=_background(opts["background"]))
    text = rows_to_csv(rows)
    _write(out / "validation.csv", text)
    _write(out / "validation.json", _dump({"schema_version": SCHEMA_VERSION, "replicates": replicates,
                                           "n": n, "seed": int(opts["seed"]), "rows": rows}))
    sys.stdout.write(text)
    return EXIT_OK


def _aggregate(paths: list[str]) -> int:
    """Turn MetricsReport JSON documents (files or '-' for stdin, one per line) into CSV."""
    print("source," + MetricsReport.csv_header())
    for path in paths:
        try:
            text = sys.stdin.read() if path == "-" else Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise InputError(str(exc)) from exc
        for line in text.splitlines():
            if not line.strip():
                continue
            try:
                report = MetricsReport.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise InputError(f"{path}: not a metrics report: {exc}") from exc
            print(f"{path}," + report.to_csv_row())
    return EXIT_OK


def cmd_benchmark(args) -> int:
    from .experiments import benchmark, benchmark_csv, benchmark_summary

    if args.aggregate:
        return _aggregate(args.aggregate)
    opts = resolve(args)
    cfg = pipeline_config(opts)
    if int(opts["seeds"]) < 1:
        raise InputError("seeds must be >= 1")
    out = _out_dir(args.out)
    seeds = [int(opts["seed"]) + k for k in range(int(opts["seeds"]))]
    # datasets run in parallel, so each discovery stays single-process
    inner = PipelineConfig(**{**cfg.__dict__, "jobs": 1})
    cases = benchmark(seeds, opts["family"], int(opts["p"]), int(opts["m"]), inner, jobs=cfg.jobs)
    _write(out / "benchmark.csv", benchmark_csv(cases))
    summary = {"schema_version": SCHEMA_VERSION, "family": opts["family"], "p": int(opts["p"]),
               "m": int(opts["m"]), "seeds": seeds, "config": inner.to_dict(),
               "summary": benchmark_summary(cases)}
    _write(out / "summary.json", _dump(summary))
    for variant, s in summary["summary"].items():
        print(f"{variant:>12}: median F1 {s['median_f1']:.3f}  median SHD {s['median_shd']:.1f}")
    return EXIT_OK


# --- parser ----------------------------------------------------------------------


def _pipeline_flags(sp: argparse.ArgumentParser) -> None:
    g = sp.add_argument_group("discovery")
    g.add_argument("--regressors", choices=["gbt", "mlp", "both"])
    g.add_argument("--mode", choices=["union", "intersection"])
    g.add_argument("--T", type=int, dest="T", help="bootstrap rounds")
    g.add_argument("--q", type=float, help="target probability that a row is never sampled")
    g.add_argument("--tau", type=float, help="edge frequency threshold")
    g.add_argument("--hpo-budget", type=int, dest="hpo_budget")
    g.add_argument("--alpha", type=float, help="HSIC significance level")
    g.add_argument("--permutations", type=int)
    g.add_argument("--gamma", action="store_const", const=True, help="gamma approximation for HSIC")
    g.add_argument("--min-pts", type=int, dest="min_pts")
    g.add_argument("--greedy", action="store_const", const=True)
    g.add_argument("--auto-greedy", action="store_const", const=True, dest="auto_greedy")
    g.add_argument("--percentile", type=float)
    g.add_argument("--n-samples", type=int, dest="n_samples", help="expected-gradient samples per row")
    g.add_argument("--background-size", type=int, dest="background_size")
    g.add_argument("--hidden", help="comma-separated hidden layer widths")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, help="worker processes (default: CPU count)")
    common.add_argument("--config", help="JSON file of option defaults; flags take precedence")

    parser = argparse.ArgumentParser(prog="shapdag", description="Attribution-driven causal discovery.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="sample synthetic SEM datasets")
    g.add_argument("--family", choices=[f.value for f in MechanismFamily])
    g.add_argument("--p", type=int)
    g.add_argument("--m", type=int)
    g.add_argument("--n-datasets", type=int, dest="n_datasets")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("discover", parents=[common], help="learn a DAG from a CSV file")
    d.add_argument("data")
    d.add_argument("--out", required=True)
    _pipeline_flags(d)
    d.set_defaults(func=cmd_discover)

    e = sub.add_parser("evaluate", help="compare an estimated DAG with the true one")
    e.add_argument("estimate")
    e.add_argument("truth")
    e.add_argument("--csv", action="store_true", help="print a CSV header and row instead of JSON")
    e.set_defaults(func=cmd_evaluate)

    v = sub.add_parser("validate-shap", parents=[common], help="attribution study on three-variable SEMs")
    v.add_argument("--replicates", type=int)
    v.add_argument("--n", type=int)
    v.add_argument("--background", help="reference sample size, or 'none' for cover weighting")
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_validate_shap)

    b = sub.add_parser("benchmark", parents=[common], help="compare regressor combinations")
    b.add_argument("--aggregate", nargs="+", metavar="REPORT",
                   help="convert metrics JSON reports ('-' for stdin) to CSV instead of running")
    b.add_argument("--family", choices=[f.value for f in MechanismFamily])
    b.add_argument("--p", type=int)
    b.add_argument("--m", type=int)
    b.add_argument("--seeds", type=int, help="number of datasets, seeded seed, seed+1, ...")
    b.add_argument("--out", default="benchmark_out")
    _pipeline_flags(b)
    b.set_defaults(func=cmd_benchmark)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return args.func(args)
    except (PipelineError, SemGenerationError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

if __name__ == "__main__":
    sys.exit(main())
