"""Command-line surface: gradcheck, train, experiment, gen-grid, report.

Configuration precedence is flag > DERIVNET_SEED (for the master seed) >
config file > built-in default.  Every output file starts with a comment
header echoing the effective configuration.  Exit codes: 0 ok,
1 verification fail, 2 usage, 3 numeric failure, 4 partial sweep failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import geometry, harness, network
from .geometry import Domain, GridSpec
from .harness import RunConfig
from .network import DiagnosticError
from .optimizer import RpropConfig

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_PARTIAL = 4

# Config file schema: every RunConfig field reachable from the CLI, plus the
# defaults that mirror the training protocol.
CONFIG_KEYS = {
    "schema_version",
    "task",
    "net",
    "order",
    "lambda",
    "tau",
    "test_lambda",
    "seed",
    "max_epochs",
    "stop_window",
    "stop_threshold",
    "precision",
    "eta_plus",
    "eta_minus",
    "delta0",
    "clamp",
    "resurrect_value",
    "resurrect_period",
}

DEFAULTS = {
    "schema_version": 1,
    "order": 4,
    "tau": None,
    "test_lambda": None,
    "seed": 0,
    "max_epochs": 10000,
    "stop_window": 1000,
    "stop_threshold": 0.10,
    "precision": "single",
    "eta_plus": 1.2,
    "eta_minus": 0.5,
    "delta0": 2e-4,
    "clamp": 20.0,
    "resurrect_value": 1e-6,
    "resurrect_period": 1000,
}


class UsageError(ValueError):
    pass


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise UsageError(f"cannot read config {path}: {err}") from err
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    version = data.get("schema_version", 1)
    if version != 1:
        raise UsageError(f"unsupported config schema version {version}")
    return data


def _effective_config(args, config: dict) -> dict:
    """Merge defaults, config file, environment and flags (in that order)."""
    eff = dict(DEFAULTS)
    eff.update({k: v for k, v in config.items() if v is not None})
    env_seed = os.environ.get("DERIVNET_SEED")
    if env_seed is not None:
        try:
            eff["seed"] = int(env_seed)
        except ValueError as err:
            raise UsageError(f"DERIVNET_SEED must be an integer, got {env_seed!r}") from err
    for key, attr in [
        ("task", "task"),
        ("net", "net"),
        ("order", "order"),
        ("lambda", "lam"),
        ("tau", "tau"),
        ("test_lambda", "test_lambda"),
        ("seed", "seed"),
        ("max_epochs", "epochs"),
        ("precision", "precision"),
    ]:
        val = getattr(args, attr, None)
        if val is not None:
            eff[key] = val
    return eff


def _run_config(eff: dict) -> RunConfig:
    missing = [k for k in ("task", "net", "lambda") if eff.get(k) is None]
    if missing:
        raise UsageError(f"missing required configuration: {missing}")
    rprop = RpropConfig(
        eta_plus=eff["eta_plus"],
        eta_minus=eff["eta_minus"],
        delta0=eff["delta0"],
        clamp=eff["clamp"],
        resurrect_value=eff["resurrect_value"],
        resurrect_period=eff["resurrect_period"],
    )
    if int(eff["max_epochs"]) < int(eff["stop_window"]):
        eff["stop_window"] = 0  # smoke runs shorter than the window: cap only
    return RunConfig(
        task=eff["task"],
        sizes=tuple(eff["net"]),
        order=int(eff["order"]),
        lam=float(eff["lambda"]),
        tau=eff["tau"],
        test_lam=eff["test_lambda"],
        max_epochs=int(eff["max_epochs"]),
        stop_window=int(eff["stop_window"]),
        stop_threshold=float(eff["stop_threshold"]),
        precision=eff["precision"],
        master_seed=int(eff["seed"]),
        rprop=rprop,
    )


def _parse_net(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.replace("x", ",").split(",") if t)
    except ValueError as err:
        raise UsageError(f"cannot parse network sizes {text!r}") from err


def _config_echo(eff: dict) -> str:
    return "config " + json.dumps(eff, sort_keys=True, default=str)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_gradcheck(args) -> int:
    sizes = _parse_net(args.net) if args.net else (2, 8, 8, 1)
    task = args.task or ("poisson2d" if sizes[0] == 2 and args.poisson else "approx2d")
    report = harness.gradcheck(
        sizes,
        task,
        args.order if args.order is not None else 4,
        n_probe=args.probes,
        seed=args.seed if args.seed is not None else 0,
        corrupt=args.corrupt,
    )
    status = "PASS" if report["passed"] else "FAIL"
    print(
        f"{status} gradcheck task={task} net={sizes} order={args.order if args.order is not None else 4} "
        f"max_rel_error={report['max_rel_error']:.3e} threshold={report['threshold']:.1e} "
        f"worst_param={report['worst_param']}"
    )
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def cmd_train(args) -> int:
    config = _load_config(args.config) if args.config else {}
    eff = _effective_config(args, config)
    cfg = _run_config(eff)
    result = harness.train_run(cfg)
    if result.status != "ok":
        print(f"training failed: {result.message}", file=sys.stderr)
        return EXIT_NUMERIC

    os.makedirs(args.outdir, exist_ok=True)
    echo = _config_echo(eff)
    summary = {
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in eff.items()},
        "status": result.status,
        "epochs": result.epochs,
        "best_epoch": result.best_epoch,
        "M": result.n_points,
        "N": result.n_equivalent,
        "train_rms_e0": result.train_rms0,
        "test_rms_e0": result.test_rms0,
        "log10_ratio": result.log10_ratio,
        "max_dev": result.max_dev,
        "change_prob10": result.change_prob10,
        "seed": result.seed,
    }
    with open(os.path.join(args.outdir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    network.save_checkpoint(os.path.join(args.outdir, "weights.dnwt"), result.best_params)
    with open(os.path.join(args.outdir, "trace.csv"), "w") as fh:
        fh.write(f"# {echo}\n")
        fh.write("epoch,train_rms_e0,nonzero_steps\n")
        for e, (v, d) in enumerate(zip(result.trace_rms0, result.trace_delta), start=1):
            fh.write(f"{e},{v:.9g},{d}\n")
    print(
        f"ok epochs={result.epochs} best={result.best_epoch} "
        f"train_rms_e0={result.train_rms0:.6g} test_rms_e0={result.test_rms0:.6g} "
        f"log10_ratio={result.log10_ratio:.4f}"
    )
    return EXIT_OK


def cmd_experiment(args) -> int:
    eff = _effective_config(args, {})
    seed = int(eff["seed"])
    widths = (64, 512, 1024) if args.full else (64,)
    templates = []
    for width in widths:
        if args.task == "var-order":
            dim = 5
            templates += harness.var_order_templates(
                sizes=harness.default_sizes(dim, width),
                master_seed=seed,
                max_epochs=int(eff["max_epochs"]),
                max_grids=args.grids,
                test_lam=args.test_lambda,
            )
        else:
            dim = harness.task_by_name(args.task).dimension
            templates += harness.sweep_templates(
                args.task,
                sizes=harness.default_sizes(dim, width),
                master_seed=seed,
                max_grids=args.grids,
                max_epochs=int(eff["max_epochs"]),
                test_lam=args.test_lambda,
            )
    rows, aggregates = harness.experiment(templates, repeats=args.repeats, jobs=args.jobs)
    os.makedirs(args.outdir, exist_ok=True)
    echo = _config_echo(
        {"task": args.task, "seed": seed, "repeats": args.repeats, "full": args.full,
         "grids": args.grids, "max_epochs": eff["max_epochs"]}
    )
    harness.write_results_csv(os.path.join(args.outdir, "runs.csv"), rows, echo)
    harness.write_aggregates_csv(os.path.join(args.outdir, "aggregates.csv"), aggregates, echo)
    figures = {
        "approx2d": ["2d1", "2d2", "2d3"],
        "approx5d": ["5d1", "5d2", "5d3"],
        "poisson2d": ["deq1", "deq2", "deq4"],
        "var-order": ["varORD"],
    }[args.task]
    harness.write_plot_data(os.path.join(args.outdir, "plotdata"), rows, figures, echo)
    n_failed = sum(1 for r in rows if r.status != "ok")
    print(f"{len(rows)} runs, {n_failed} failed; results in {args.outdir}")
    return EXIT_PARTIAL if n_failed else EXIT_OK


def cmd_gen_grid(args) -> int:
    if args.lam is None or args.lam <= 0:
        raise UsageError("gen-grid needs a positive --lambda")
    domain = Domain(args.domain)
    seed = args.seed if args.seed is not None else 0
    env_seed = os.environ.get("DERIVNET_SEED")
    if args.seed is None and env_seed is not None:
        seed = int(env_seed)
    spec = GridSpec(lam=args.lam, tau=args.tau, seed=seed)
    grid = geometry.generate_grid(domain, spec, np.random.default_rng(seed))
    geometry.write_grid(args.out, grid)
    print(f"{grid.n_interior} interior + {grid.n_surface} surface points -> {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    import csv as _csv

    rows = []
    for path in args.csv:
        try:
            with open(path) as fh:
                reader = _csv.reader(r for r in fh if not r.startswith("#"))
                header = next(reader)
                if header != harness.RESULT_COLUMNS:
                    raise UsageError(f"{path} does not look like a runs.csv")
                for rec in reader:
                    d = dict(zip(header, rec))
                    rows.append(
                        harness.ExperimentRow(
                            task=d["task"], mode=d["mode"], s=int(d["s"]), net=d["net"],
                            lam=float(d["lambda"]), m_points=int(d["M"]), n_equivalent=int(d["N"]),
                            repeat=int(d["repeat"]), epochs=int(d["epochs"]),
                            best_epoch=int(d["best_epoch"]),
                            train_rms_e0=float(d["train_rms_e0"]) if d["train_rms_e0"] else math.nan,
                            test_rms_e0=float(d["test_rms_e0"]) if d["test_rms_e0"] else math.nan,
                            log10_ratio=float(d["log10_ratio"]) if d["log10_ratio"] else math.nan,
                            max_dev=float(d["max_dev"]) if d["max_dev"] else None,
                            delta_median=float(d["delta_median"]) if d["delta_median"] else math.nan,
                            wall_seconds=float(d["wall_seconds"]) if d["wall_seconds"] else 0.0,
                            seed=int(d["seed"]), status=d["status"],
                        )
                    )
        except OSError as err:
            raise UsageError(f"cannot read {path}: {err}") from err
    aggregates = harness.aggregate_rows(rows)
    harness.write_aggregates_csv(args.out, aggregates, f"aggregated from {len(args.csv)} file(s)")
    print(f"{len(rows)} rows -> {len(aggregates)} aggregate rows -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="derivnet",
        description="Train perceptrons on values and derivatives; measure overfitting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    p.add_argument("--net", help="layer sizes, e.g. 2,8,8,1")
    p.add_argument("--task", choices=harness.TASK_NAMES)
    p.add_argument("--order", type=int, choices=range(5))
    p.add_argument("--probes", type=int, default=50)
    p.add_argument("--seed", type=int)
    p.add_argument("--poisson", action="store_true", help="shorthand for --task poisson2d")
    p.add_argument("--corrupt", action="store_true", help="negative control: perturb one entry")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train", help="one training run")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--task", choices=harness.TASK_NAMES)
    p.add_argument("--net", type=_parse_net)
    p.add_argument("--order", type=int, choices=range(5))
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--test-lambda", dest="test_lambda", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int, help="override the 10000-epoch cap")
    p.add_argument("--precision", choices=("single", "double"))
    p.add_argument("--outdir", default="runout")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("experiment", help="grid-density sweep with repeats")
    p.add_argument("task", choices=list(harness.TASK_NAMES) + ["var-order"])
    p.add_argument("--full", action="store_true", help="all three architectures, not just the smallest")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--grids", type=int, help="subsample the grid series to this many spacings")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--test-lambda", dest="test_lambda", type=float)
    p.add_argument("--outdir", default="experiment-out")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("gen-grid", help="write one grid to a text file")
    p.add_argument("--domain", choices=geometry.DOMAIN_KINDS, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--tau", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="grid.txt")
    p.set_defaults(func=cmd_gen_grid)

    p = sub.add_parser("report", help="aggregate existing runs.csv files")
    p.add_argument("csv", nargs="+")
    p.add_argument("--out", default="aggregates.csv")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_USAGE if err.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, geometry.GridError) as err:
        print(f"usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except DiagnosticError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
