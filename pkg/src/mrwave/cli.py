"""Command line driver: ``mrwave <tran|pss|envelope> <netlist> [options]``.

Exit codes: 0 success, 1 solver failure, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys

from .envelope import EnvelopeRecord, EnvelopeResult
from .estimators import EnvelopeSimulator, PeriodicSteadyState, TransientSimulator
from .exceptions import (
    CircuitError,
    ConvergenceError,
    DegenerateFrequencyError,
    ExportError,
    InitializationError,
    InvalidArgumentError,
    MrwaveError,
    NetlistParseError,
    OperatingPointError,
    SimulationAbort,
    SingularMatrixError,
)
from .export import export_grid, export_omega, export_periodic, export_surface, export_transient, resolve_nodes
from .netlist import read_netlist

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_SOLVER", "EXIT_USAGE"]

EXIT_OK, EXIT_SOLVER, EXIT_USAGE = 0, 1, 2

logger = logging.getLogger("mrwave")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: error: {message}")


def _node_list(text):
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise argparse.ArgumentTypeError("empty node list")
    return items


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mrwave", description="Multi-rate envelope, periodic steady state and transient circuit analysis.")
    p.add_argument("analysis", choices=("tran", "pss", "envelope"))
    p.add_argument("netlist")
    p.add_argument("--period", type=float, help="fast period P (default: carrier period of the fastest source)")
    p.add_argument("--tau-stop", type=float, help="end of the slow time span (envelope)")
    p.add_argument("--tstop", type=float, help="end time of a transient run (tran; falls back to --tau-stop)")
    p.add_argument("--bdf-order", type=int, choices=(1, 2), default=2)
    p.add_argument("--free-omega", action="store_true", help="track the local frequency as an unknown")
    p.add_argument("--weight", type=float, default=0.5, help="shift blend W in [0, 1]")
    p.add_argument("--wavelet-eps", type=float, default=3e-4, help="final wavelet refinement threshold")
    p.add_argument("--spline-order", type=int, choices=(3, 4), default=4)
    p.add_argument("--tol", type=float, help="step error tolerance (tran, envelope) or Newton tolerance (pss)")
    p.add_argument("--initial-step", type=float, help="first slow time step (envelope) or time step (tran)")
    p.add_argument("--max-step", type=float, help="largest slow time step (envelope)")
    p.add_argument("--nodes", type=_node_list, help="comma separated variables to export (default: all)")
    p.add_argument("--samples", type=int, default=64, help="samples per fast period in surface files")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--config", help="flat 'key = value' file; command line flags take precedence")
    return p


def _truthy(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise _UsageError(f"not a boolean: {text!r}")


def _read_config(parser, path) -> dict:
    """Parse a ``key = value`` file into parser defaults."""
    if not os.path.isfile(path):
        raise _UsageError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    with open(path, encoding="utf-8") as fh:
        try:
            cp.read_string("[run]\n" + fh.read(), source=path)
        except configparser.Error as exc:
            raise _UsageError(f"{path}: {exc}") from None
    actions = {a.dest: a for a in parser._actions}
    out = {}
    for key, raw in cp["run"].items():
        dest = key.strip().replace("-", "_")
        act = actions.get(dest)
        if act is None or dest in ("analysis", "netlist", "config", "help"):
            raise _UsageError(f"{path}: unknown key {key!r}")
        if isinstance(act, argparse._StoreTrueAction):
            val = _truthy(raw)
        else:
            try:
                val = act.type(raw) if act.type else raw
            except (ValueError, argparse.ArgumentTypeError):
                raise _UsageError(f"{path}: bad value for {key!r}: {raw!r}") from None
            if act.choices is not None and val not in act.choices:
                raise _UsageError(f"{path}: {key} must be one of {list(act.choices)}")
        out[dest] = val
    return out


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        parser.set_defaults(**_read_config(parser, args.config))
        args = parser.parse_args(argv)
    return args


def _run(args) -> int:
    if not os.path.isfile(args.netlist):
        raise _UsageError(f"netlist file not found: {args.netlist}")
    circuit = read_netlist(args.netlist)
    names = circuit.variable_names()
    resolve_nodes(names, args.nodes)
    if args.samples < 1:
        raise _UsageError("--samples must be positive")
    out = args.out
    os.makedirs(out, exist_ok=True)
    if args.analysis == "tran":
        t_stop = args.tstop if args.tstop is not None else args.tau_stop
        if t_stop is None:
            raise _UsageError("tran needs --tstop (or --tau-stop)")
        est = TransientSimulator(
            t_stop=t_stop, step=args.initial_step, order=args.bdf_order, rtol=args.tol if args.tol is not None else 1e-4
        ).fit(circuit)
        export_transient(os.path.join(out, "tran.csv"), est.result_.t, est.result_.x, names, args.nodes)
        logger.info("transient: %d points, %d linear solves", est.result_.t.size, est.result_.linear_solves)
    elif args.analysis == "pss":
        est = PeriodicSteadyState(
            period=args.period, spline_order=args.spline_order, wavelet_eps=args.wavelet_eps,
            newton_tol=args.tol if args.tol is not None else 1e-8,
        ).fit(circuit)
        export_periodic(os.path.join(out, "pss.csv"), est.curve_, names, args.samples, args.nodes)
        single = EnvelopeResult([EnvelopeRecord(0.0, est.omega_, 0.0, est.curve_)], est.period_, 1, variable_names=names)
        export_grid(os.path.join(out, "grid.csv"), single)
        logger.info("pss: %d knots", est.curve_.grid.n_intervals)
    else:
        if args.tau_stop is None:
            raise _UsageError("envelope needs --tau-stop")
        est = EnvelopeSimulator(
            tau_stop=args.tau_stop, period=args.period, bdf_order=args.bdf_order, free_omega=args.free_omega,
            weight=args.weight, wavelet_eps=args.wavelet_eps, spline_order=args.spline_order,
            rtol=args.tol if args.tol is not None else 1e-3, initial_step=args.initial_step, max_step=args.max_step,
        ).fit(circuit)
        res = est.result_
        export_surface(os.path.join(out, "envelope_surface.csv"), res, args.nodes, args.samples)
        export_grid(os.path.join(out, "grid.csv"), res)
        export_omega(os.path.join(out, "omega.csv"), res)
        logger.info("envelope: %d steps, %d blocks solved", res.n_steps, res.stats.blocks_solved)
    return EXIT_OK


_SOLVER = (
    ConvergenceError,
    SimulationAbort,
    InitializationError,
    OperatingPointError,
    SingularMatrixError,
    DegenerateFrequencyError,
    FloatingPointError,
)
_USAGE = (InvalidArgumentError, NetlistParseError, CircuitError, ExportError)


def _report_of(exc):
    seen = exc
    while seen is not None:
        rep = getattr(seen, "report", None)
        if rep is not None:
            return rep
        seen = seen.__cause__
    return None


def main(argv=None) -> int:
    """Entry point; returns the process exit code."""
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        return _run(args)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except _USAGE as exc:
        print(f"mrwave: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _SOLVER as exc:
        print(f"mrwave: solver failure: {exc}", file=sys.stderr)
        rep = _report_of(exc)
        if rep is not None:
            print(rep.summary(), file=sys.stderr)
        return EXIT_SOLVER
    except MrwaveError as exc:
        print(f"mrwave: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"mrwave: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
