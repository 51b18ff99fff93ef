"""Command-line runner: execute solver/baseline/oracle runs from a config
file, emit CSV time series and benchmark tables.

Exit codes: 0 success, 1 validation error, 2 numeric failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import sys
import time
import tracemalloc
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__, detsolver, oracle, stochastic
from .config import ConfigError, RunConfig, load_config
from .qcore import QFlowError

ORACLE_REFINEMENT = 50  # oracle runs at dt / 50 of the solver under test


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="qflow",
                     description="deterministic probability-flow solver for "
                                 "time-local master equations")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in (("run", "run each configured method, one CSV each"),
                       ("compare", "aligned method-vs-oracle comparison CSV"),
                       ("bench", "wall-clock benchmark of the methods")):
        p = sub.add_parser(name, help=desc)
        p.add_argument("--config", required=True, help="config file path")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the stochastic seed")
        p.add_argument("--dt", type=float, default=None,
                       help="override the solver time step")
        p.add_argument("--method", action="append", default=None,
                       help="method to run (repeatable); overrides config")
    return parser


# ---------------------------------------------------------------------------
# method execution

def _initial_blocks(rc: RunConfig) -> list[np.ndarray]:
    n_blocks = rc.model.n if rc.is_generalized else 1
    dim = rc.model.dim
    blocks = [np.zeros((dim, dim), dtype=complex) for _ in range(n_blocks)]
    for b, psi, p in rc.initial:
        blocks[b] += p * np.outer(psi, psi.conj())
    return blocks


def _stochastic_config(rc: RunConfig) -> stochastic.StochasticConfig:
    return stochastic.StochasticConfig(
        n_particles=rc.n_particles, seed=rc.seed, dt=rc.solver.dt,
        t_max=rc.solver.t_max, record_stride=rc.solver.record_stride)


def _run_method(rc: RunConfig, method: str):
    """Execute one method; returns a Trajectory or DensityTrajectory."""
    if method == "det-euler":
        return detsolver.run(rc.model, rc.initial,
                             replace(rc.solver, method="euler"))
    if method == "det-rk4":
        return detsolver.run(rc.model, rc.initial,
                             replace(rc.solver, method="rk4"))
    if method == "nmqj":
        return stochastic.nmqj_run(rc.model, rc.initial,
                                   _stochastic_config(rc))
    if method == "mc-unravel":
        return stochastic.mc_unravel_run(rc.model, rc.initial,
                                         _stochastic_config(rc))
    if method == "oracle":
        blocks = _initial_blocks(rc)
        initial = blocks[0] if not rc.is_generalized else blocks
        return oracle.dense_integrate(
            rc.model, initial, rc.solver.dt / ORACLE_REFINEMENT,
            rc.solver.t_max,
            record_stride=ORACLE_REFINEMENT * rc.solver.record_stride)
    raise ConfigError(f"unknown method {method!r}")


def _first_rate(rc: RunConfig):
    if rc.is_generalized:
        return None
    _, rate = rc.model.channels[0]
    return rate


def _result_table(rc: RunConfig, method: str, result):
    """(header, columns) for the per-method CSV."""
    rate = _first_rate(rc)
    if isinstance(result, oracle.DensityTrajectory):
        t = result.times
        if rc.is_generalized:
            traces = result.block_traces
            header = ([f"P{b + 1}" for b in range(traces.shape[1])]
                      + [f"trace_rho{b + 1}" for b in range(traces.shape[1])])
            cols = [traces[:, b] for b in range(traces.shape[1])] * 2
            return ["t"] + header, [t] + cols
        total = result.total
        return (["t", "rho_ee", "abs_rho_eg", "rate_gamma"],
                [t, total[:, 0, 0].real, np.abs(total[:, 0, 1]),
                 np.asarray(rate(t), dtype=float)])
    # ensemble / stochastic trajectory
    t = result.times
    if rc.is_generalized:
        n_blocks = result.n_blocks
        pb = np.stack([
            result.probabilities[:, result.state_blocks == b].sum(axis=1)
            for b in range(n_blocks)], axis=1)
        traces = result.block_traces
        header = (["t"] + [f"P{b + 1}" for b in range(n_blocks)]
                  + [f"trace_rho{b + 1}" for b in range(n_blocks)])
        cols = ([t] + [pb[:, b] for b in range(n_blocks)]
                + [traces[:, b] for b in range(n_blocks)])
        return header, cols
    dens = result.density
    header = (["t"]
              + [f"p_{s + 1}" for s in range(result.probabilities.shape[1])]
              + ["rho_ee", "abs_rho_eg", "rate_gamma"])
    cols = ([t]
            + [result.probabilities[:, s]
               for s in range(result.probabilities.shape[1])]
            + [dens[:, 0, 0].real, np.abs(dens[:, 0, 1]),
               np.asarray(rate(t), dtype=float)])
    return header, cols


def _headline(rc: RunConfig, result) -> np.ndarray:
    """The scalar curve compared across methods: excited population for
    standard models, first block weight for generalized ones."""
    if isinstance(result, oracle.DensityTrajectory):
        return (result.block_traces[:, 0] if rc.is_generalized
                else result.total[:, 0, 0].real)
    return (result.block_traces[:, 0] if rc.is_generalized
            else result.density[:, 0, 0].real)


def _write_csv(path: Path, header, cols, precision: int) -> None:
    cols = [np.asarray(c) for c in cols]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(cols[0].shape[0]):
            fh.write(",".join(f"{c[i]:.{precision}g}" for c in cols) + "\n")


def _write_sidecar(rc: RunConfig, path: Path, extra: dict) -> None:
    cp = rc.parser
    if cp.has_section("meta"):
        cp.remove_section("meta")
    cp.add_section("meta")
    cp["meta"]["rng"] = stochastic.RNG_NAME
    cp["meta"]["version"] = __version__
    for k, v in extra.items():
        cp["meta"][k] = str(v)
    with open(path, "w") as fh:
        cp.write(fh)


# ---------------------------------------------------------------------------
# subcommands

def _require_particles(rc: RunConfig, methods) -> None:
    if any(m in ("nmqj", "mc-unravel") for m in methods) \
            and rc.n_particles < 1:
        raise ConfigError("stochastic methods need stochastic.n >= 1")


def run_experiment(rc: RunConfig, outdir: Path) -> list[Path]:
    _require_particles(rc, rc.methods)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    n_eff = None
    for method in rc.methods:
        result = _run_method(rc, method)
        if isinstance(result, detsolver.Trajectory):
            n_eff = result.metadata.get("n_eff", n_eff)
        header, cols = _result_table(rc, method, result)
        path = outdir / f"{rc.out_prefix}_{method}.csv"
        _write_csv(path, header, cols, rc.precision)
        written.append(path)
    sidecar = outdir / f"{rc.out_prefix}_meta.config"
    _write_sidecar(rc, sidecar, {"n_eff": n_eff if n_eff is not None else ""})
    written.append(sidecar)
    return written


def compare(rc: RunConfig, outdir: Path) -> Path:
    methods = [m for m in rc.methods if m != "oracle"]
    if len(rc.methods) < 2:
        raise ConfigError("compare needs at least two methods in the config")
    _require_particles(rc, methods)
    outdir.mkdir(parents=True, exist_ok=True)
    oracle_curve = _headline(rc, _run_method(rc, "oracle"))
    header = ["t"]
    cols = [None]
    devs = []
    for method in methods:
        result = _run_method(rc, method)
        curve = _headline(rc, result)
        if cols[0] is None:
            cols[0] = result.times
        header.append(method)
        cols.append(curve)
        devs.append((f"dev_{method}", np.abs(curve - oracle_curve)))
    header.append("oracle")
    cols.append(oracle_curve)
    for name, dev in devs:
        header.append(name)
        cols.append(dev)
    path = outdir / f"{rc.out_prefix}_compare.csv"
    _write_csv(path, header, cols, rc.precision)
    return path


@dataclass
class BenchRow:
    method: str
    wall_time_s: float
    steps_per_second: float
    peak_mem_kb: float
    max_oracle_dev: float


def bench(rc: RunConfig, outdir: Path) -> tuple[list[BenchRow], Path, list[str]]:
    outdir.mkdir(parents=True, exist_ok=True)
    notes = []
    oracle_curve = _headline(rc, _run_method(rc, "oracle"))
    rows = []
    n_eff = None
    for method in rc.methods:
        if method in ("nmqj", "mc-unravel") and rc.n_particles < 1:
            notes.append(f"{method}: skipped (stochastic n = 0)")
            continue
        _run_method(rc, method)                       # warm-up, not timed
        t0 = time.perf_counter()
        result = _run_method(rc, method)
        wall = time.perf_counter() - t0
        tracemalloc.start()
        _run_method(rc, method)
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        if isinstance(result, detsolver.Trajectory):
            n_eff = result.metadata.get("n_eff", n_eff)
        dev = float(np.max(np.abs(_headline(rc, result) - oracle_curve)))
        rows.append(BenchRow(
            method=method, wall_time_s=wall,
            steps_per_second=rc.solver.n_steps / wall,
            peak_mem_kb=peak / 1024.0, max_oracle_dev=dev))
    if n_eff is not None:
        notes.append(f"n_eff = {n_eff}")
    path = outdir / f"{rc.out_prefix}_bench.csv"
    header = ["method", "wall_time_s", "steps_per_second", "peak_mem_kb",
              "max_oracle_dev"]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(f"{r.method},{r.wall_time_s:.6g},"
                     f"{r.steps_per_second:.6g},{r.peak_mem_kb:.6g},"
                     f"{r.max_oracle_dev:.6g}\n")
    return rows, path, notes


def _print_bench(rows: list[BenchRow], notes: list[str]) -> None:
    print(f"{'method':<12} {'wall [s]':>12} {'steps/s':>12} "
          f"{'peak mem [kB]':>14} {'max dev':>12}")
    for r in rows:
        print(f"{r.method:<12} {r.wall_time_s:>12.6f} "
              f"{r.steps_per_second:>12.1f} {r.peak_mem_kb:>14.1f} "
              f"{r.max_oracle_dev:>12.3e}")
    for note in notes:
        print(note)


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        rc = load_config(args.config, seed=args.seed, dt=args.dt,
                         methods=args.method)
        outdir = Path(args.out)
        if args.command == "run":
            for path in run_experiment(rc, outdir):
                print(path)
        elif args.command == "compare":
            print(compare(rc, outdir))
        else:
            rows, path, notes = bench(rc, outdir)
            _print_bench(rows, notes)
            print(path)
        return 0
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except QFlowError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
