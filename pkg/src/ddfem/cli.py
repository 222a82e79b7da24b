"""Command line entry point: ``ddfem {generate-data, solve, study, eoc}``."""

from __future__ import annotations

import argparse
import csv
import sys

from . import harness
from .equilibrium import build_projector
from .harness import ExperimentSpec, compute_errors, eoc_table, parse_config, read_csv, write_csv
from .material import generate_samples, load_dataset, save_dataset
from .mesh import build_mesh
from .problems import source_for
from .qsap import (LocalSearchConfig, QsapInstance, coarse_exact_initialization, local_search,
                   ps_multistart_initialization, read_assignment)
from .solvers import SolverConfig, solve

REPORT_COLUMNS = ("iteration", "objective", "gamma", "wall_ms")


def _floats(text: str) -> list[float]:
    return [float(t) for t in str(text).split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in str(text).split(",") if t.strip()]


def _strs(text: str) -> list[str]:
    return [t.strip() for t in str(text).split(",") if t.strip()]


# config keys accepted per subcommand, with their converters
CONFIG_SCHEMA = {
    "generate-data": {"law": str, "m": int, "noise": float, "seed": int, "out": str,
                      "sampling": str},
    "solve": {"algorithm": str, "mesh_n": int, "data": str, "gamma0": float, "seed": int,
              "report": str, "law": str, "max_iter": int, "init": str, "init_file": str,
              "K": int, "eps1": float, "eps2": float, "eps3": float, "pod_cap": int,
              "starts": int},
    "study": {"law": str, "mesh_sizes": _ints, "data_sizes": _ints, "noise_levels": _floats,
              "algorithms": _strs, "seeds": _ints, "sampling": str, "gamma0": float,
              "output": str, "jobs": int},
    "eoc": {"input": str, "output": str},
}

DEFAULTS = {
    "generate-data": {"law": "arctan", "m": None, "noise": 0.0, "seed": 0, "out": None,
                      "sampling": "random"},
    "solve": {"algorithm": None, "mesh_n": None, "data": None, "gamma0": 1.4, "seed": 0,
              "report": None, "law": None, "max_iter": None, "init": "ps-multistart",
              "init_file": None, "K": 20, "eps1": 0.002, "eps2": 0.001, "eps3": 0.01,
              "pod_cap": 40, "starts": 10},
    "study": {"law": "arctan", "mesh_sizes": [50], "data_sizes": [5000], "noise_levels": [0.0],
              "algorithms": ["pg"], "seeds": [0], "sampling": "random", "gamma0": 1.4,
              "output": None, "jobs": 1},
    "eoc": {"input": None, "output": None},
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddfem", description="Data-driven FEM for scalar conductivity.")
    sub = p.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    g = sub.add_parser("generate-data", help="write a material data set file",
                       argument_default=S)
    g.add_argument("--law", choices=("fourier", "arctan"))
    g.add_argument("--m", type=int, help="number of points (a perfect square for grid sampling)")
    g.add_argument("--noise", type=float, help="uniform noise bound on all four components")
    g.add_argument("--seed", type=int)
    g.add_argument("--sampling", choices=("random", "grid"))
    g.add_argument("--out", help="output path")
    g.add_argument("--config")

    s = sub.add_parser("solve", help="solve the distance minimization problem", argument_default=S)
    s.add_argument("--algorithm", choices=("pg", "ps", "dr1", "dr2", "local-search"))
    s.add_argument("--mesh-n", dest="mesh_n", type=int)
    s.add_argument("--data", help="data set file")
    s.add_argument("--gamma0", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--report", help="iteration report CSV path")
    s.add_argument("--law", choices=("fourier", "arctan"),
                   help="selects the source term; defaults to the data set's law")
    s.add_argument("--max-iter", dest="max_iter", type=int)
    s.add_argument("--init", choices=("ps-multistart", "coarse-exact", "file"))
    s.add_argument("--init-file", dest="init_file")
    s.add_argument("--K", type=int)
    s.add_argument("--eps1", type=float)
    s.add_argument("--eps2", type=float)
    s.add_argument("--eps3", type=float)
    s.add_argument("--pod-cap", dest="pod_cap", type=int)
    s.add_argument("--starts", type=int)
    s.add_argument("--config")

    st = sub.add_parser("study", help="run an experiment grid and write CSV", argument_default=S)
    st.add_argument("--law", choices=("fourier", "arctan"))
    st.add_argument("--mesh-sizes", dest="mesh_sizes", type=_ints)
    st.add_argument("--data-sizes", dest="data_sizes", type=_ints)
    st.add_argument("--noise-levels", dest="noise_levels", type=_floats)
    st.add_argument("--algorithms", type=_strs)
    st.add_argument("--seeds", type=_ints)
    st.add_argument("--sampling", choices=("random", "grid"))
    st.add_argument("--gamma0", type=float)
    st.add_argument("--output")
    st.add_argument("--jobs", type=int)
    st.add_argument("--config")

    e = sub.add_parser("eoc", help="compute EOC columns from a study CSV", argument_default=S)
    e.add_argument("--input")
    e.add_argument("--output")
    e.add_argument("--config")
    return p


def resolve_options(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then config file, then explicit flags."""
    opts = dict(DEFAULTS[command])
    given = vars(args)
    if given.get("config"):
        schema = CONFIG_SCHEMA[command]
        for key, value in parse_config(given["config"]).items():
            if key not in schema:
                raise ValueError(f"{given['config']}: unknown key {key!r} for {command}")
            opts[key] = schema[key](value)
    for key, value in given.items():
        if key not in ("command", "config"):
            opts[key] = value
    return opts


def _require(opts: dict, *keys: str) -> None:
    missing = [k for k in keys if opts.get(k) is None]
    if missing:
        raise ValueError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def cmd_generate(opts: dict) -> int:
    _require(opts, "m", "out")
    if opts["sampling"] == "grid":
        ds = harness.make_dataset(opts["law"], opts["m"], opts["noise"], opts["seed"], "grid")
    else:
        ds = generate_samples(opts["m"], opts["noise"], opts["seed"], opts["law"])
    save_dataset(ds, opts["out"])
    print(f"wrote {ds.m} points to {opts['out']}")
    return 0


def _write_report(report, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for it, obj, gamma, ms in report.history_rows():
            w.writerow([it, f"{obj:.9e}", f"{gamma:.9e}", f"{ms:.9e}"])


def cmd_solve(opts: dict) -> int:
    _require(opts, "algorithm", "mesh_n", "data")
    dataset = load_dataset(opts["data"])
    law = opts["law"] or dataset.metadata.get("law")
    if law is None:
        raise ValueError("data set has no 'law' metadata; pass --law")
    mesh = build_mesh(opts["mesh_n"])
    projector = build_projector(mesh, source_for(str(law)))
    alg = opts["algorithm"]
    if alg == "local-search":
        instance = QsapInstance(projector, dataset)
        snapshots = []
        if opts["init"] == "ps-multistart":
            initial, snapshots, _ = ps_multistart_initialization(
                instance, opts["starts"], opts["seed"], opts["gamma0"])
        elif opts["init"] == "coarse-exact":
            initial = coarse_exact_initialization(instance, source_for(str(law)))
        else:
            _require(opts, "init_file")
            initial = read_assignment(opts["init_file"])
        cfg = LocalSearchConfig(K=opts["K"], eps1=opts["eps1"], eps2=opts["eps2"],
                                eps3=opts["eps3"], max_basis=opts["pod_cap"])
        report = local_search(instance, initial, cfg, initial_snapshots=snapshots)
    else:
        cfg = SolverConfig(alg.upper(), gamma0=opts["gamma0"], max_iter=opts["max_iter"],
                           seed=opts["seed"])
        report = solve(projector, dataset, cfg)
    err = compute_errors(mesh, report.state)
    print(f"algorithm={alg} objective={report.objective:.6e} err_l2={err.err_l2:.6e} "
          f"err_h1={err.err_h1:.6e} iterations={report.iterations} "
          f"termination={report.termination} wall_s={report.wall_time:.3f}")
    if opts["report"]:
        _write_report(report, opts["report"])
    return 0


def cmd_study(opts: dict) -> int:
    spec = ExperimentSpec(**opts)
    rows = harness.run_experiment(spec)
    if not spec.output:
        write_csv(rows, sys.stdout)
    return 0


def cmd_eoc(opts: dict) -> int:
    _require(opts, "input")
    table = eoc_table(read_csv(opts["input"]))
    if opts["output"]:
        with open(opts["output"], "w", newline="") as fh:
            write_csv(table, fh, harness.EOC_COLUMNS)
    else:
        write_csv(table, sys.stdout, harness.EOC_COLUMNS)
    return 0


COMMANDS = {"generate-data": cmd_generate, "solve": cmd_solve, "study": cmd_study, "eoc": cmd_eoc}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = resolve_options(args.command, args)
        return COMMANDS[args.command](opts)
    except (ValueError, OSError, IndexError, RuntimeError) as exc:
        print(f"ddfem {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
