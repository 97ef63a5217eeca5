"""``pnesdec`` command line: CSV output with a ``#`` header describing the run.

Exit codes: 0 success, 2 bad configuration, 3 numerical non-convergence,
4 precondition violation (e.g. a state that is not entangled at ``t = 0``).
Files are written to a temporary sibling and renamed, so a failed run
never leaves a partial file behind.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from . import fock_space as fs
from .criteria import NdptConfig, NonGaussianStateError, ndpt_test
from .septime import (
    DEFAULT_C1SQ_GRID,
    DEFAULT_EPS0,
    DEFAULT_NT_GRID,
    FIG1B_MEASURE,
    NotEntangledError,
    SeparationConfig,
    fig1a_sweep,
    fig1b_sweep,
    separation_time,
)
from .states import MEASURES, PnesCoefficients, entanglement, family_coeffs, mean_energy, random_pnes
from .thermal_channel import ChannelParams, ConvergenceError, evolve_exact, evolve_ode

log = logging.getLogger("pnesdec")

CUTOFF_HEADROOM = 5
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_PRECONDITION = 4

CONVENTIONS = {
    "composite_index": "i = n*d + m, n = mode-1 photons, m = mode-2 photons",
    "time": "separation times in units of 1/gamma, gamma = 2(A-B)",
    "channel": "A = gamma/2 (N_T+1), B = gamma/2 N_T",
    "vacuum_variance": "1/2 (quadratures x = (a+a^dag)/sqrt2)",
    "energy": "total photons sum 2n|psi_n|^2, vacuum energy excluded",
    "entanglement_units": "nats",
}
CLI_CRITERIA = {"simon": "simon", "ndpt": "ndpt", "ndpt-block": "phi1-block",
                "phi1-block": "phi1-block", "phi1-analytic": "phi1-analytic"}


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return "inf" if math.isinf(x) else repr(x)
    return str(x)


def _grid(text: str | None, default) -> tuple[float, ...]:
    """Comma list ``a,b,c`` or range ``start:stop:count`` (inclusive)."""
    if text is None:
        return tuple(default)
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            return tuple(float(x) for x in np.linspace(float(start), float(stop), int(count)))
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"cannot parse grid {text!r}") from None


# -- argument resolution ------------------------------------------------------


def _channel(args) -> ChannelParams:
    thermal = args.gamma is not None or args.ntherm is not None
    couplings = args.A is not None or args.B is not None
    if thermal == couplings:
        raise ConfigError("give exactly one of (--gamma/--ntherm) or (--A, --B)")
    if couplings:
        if args.A is None or args.B is None:
            raise ConfigError("--A and --B must be given together")
        return ChannelParams(args.A, args.B)
    if args.ntherm is None:
        raise ConfigError("--ntherm is required with --gamma")
    return ChannelParams.thermal(args.ntherm, 1.0 if args.gamma is None else args.gamma)


def _state(args) -> PnesCoefficients:
    family = args.state
    if family in ("twb", "pssv"):
        if args.r is None:
            raise ConfigError(f"--r is required for state {family}")
        return family_coeffs(family, args.r, tail_tol=args.tail_tol)
    if family == "phi1":
        if args.c1sq is None:
            raise ConfigError("--c1sq is required for state phi1")
        return family_coeffs("phi1", args.c1sq)
    if family == "random":
        if args.dim is None:
            raise ConfigError("--dim is required for state random")
        return random_pnes(args.dim, args.seed)
    raise ConfigError(f"unknown state {family!r}")


def _ndpt(args) -> NdptConfig:
    return NdptConfig(n_tr=args.n_tr, negativity_tol=args.negativity_tol,
                      block=args.block, convention=args.convention)


def _sep_cfg(args) -> SeparationConfig:
    if not args.t_max > 0 or not args.t_tol > 0:
        raise ConfigError("--t-max and --t-tol must be positive")
    return SeparationConfig(t_max=args.t_max, t_tol=args.t_tol, ndpt=_ndpt(args))


def _state_label(state: PnesCoefficients) -> str:
    if state.family in ("twb", "pssv"):
        return f"{state.family}(r={state.param!r})"
    if state.family == "phi1":
        return f"phi1(c1sq={state.param!r})"
    return f"{state.family}(seed={state.meta.get('seed')},d={state.d})"


def _params_label(params: ChannelParams) -> str:
    return f"A={params.A!r};B={params.B!r};gamma={params.gamma!r};N_T={params.n_thermal!r}"


# -- output --------------------------------------------------------------------


def _header(command: str, config: dict) -> list[str]:
    lines = [f"# pnesdec {__version__}", f"# command: {command}",
             "# config: " + json.dumps(config, sort_keys=True, default=_fmt)]
    lines += [f"# convention {k}: {v}" for k, v in CONVENTIONS.items()]
    return lines


def _render(header: list[str], columns: list[str], rows) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_atomic(path: str | None, text: str) -> None:
    """Write ``text`` to ``path`` (stdout for ``None`` or ``-``) via rename."""
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".pnesdec-", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- subcommands -----------------------------------------------------------------


def cmd_evolve(args) -> str:
    state = _state(args)
    params = _channel(args)
    if args.t < 0:
        raise ConfigError("--t must be >= 0")
    # amplification populates upward: leave headroom above the initial support
    dim = args.dim or state.d + CUTOFF_HEADROOM
    rho0 = fs.pure_pnes_density(state, max(state.d, dim))
    if args.method == "ode":
        result = evolve_ode(rho0, params, args.t, tol=args.ode_tol, dim=dim)
    else:
        result = evolve_exact(rho0, params, args.t, dim=dim)
    verdict = ndpt_test(result, _ndpt(args))
    config = {"state": _state_label(state), "channel": _params_label(params), "t": args.t,
              "gamma_t": result.time, "dim": dim, "method": args.method,
              "ode_tol": args.ode_tol, "ndpt": vars(_ndpt(args))}
    header = _header("evolve", config) + [
        f"# trace_leak: {result.trace_leak!r}",
        f"# ndpt_witness: {verdict.witness_value!r}",
    ]
    m = result.rho.elements
    rows = ((i, j, float(m[i, j].real), float(m[i, j].imag))
            for i in range(m.shape[0]) for j in range(m.shape[1]))
    return _render(header, ["row", "col", "re", "im"], rows)


def cmd_septime(args) -> str:
    state = _state(args)
    params = _channel(args)
    cfg = _sep_cfg(args)
    criterion = CLI_CRITERIA[args.criterion]
    result = separation_time(state, params, criterion, cfg)
    if not result.converged:
        raise ConvergenceError(f"bisection stopped at bracket {result.bracket}")
    config = {"state": _state_label(state), "channel": _params_label(params),
              "criterion": criterion, "t_max": cfg.t_max, "t_tol": cfg.t_tol,
              "ndpt": vars(cfg.ndpt)}
    row = (_state_label(state), _params_label(params), criterion, cfg.ndpt.n_tr,
           result.t_sep, result.iterations, result.converged)
    return _render(_header("septime", config),
                   ["state", "params", "criterion", "N_tr", "t_sep", "iterations", "converged"], [row])


def cmd_fig1a(args) -> str:
    cfg = _sep_cfg(args)
    eps0 = _grid(args.eps0, DEFAULT_EPS0)
    grid = _grid(args.nt_grid, DEFAULT_NT_GRID)
    matchings = tuple(args.matching or ("entanglement", "energy"))
    rows = fig1a_sweep(eps0, matchings, grid, cfg, args.measure)
    config = {"eps0": eps0, "N_T_grid": grid, "matchings": matchings, "measure": args.measure,
              "t_max": cfg.t_max, "t_tol": cfg.t_tol, "ndpt": vars(cfg.ndpt)}
    bad = sum(not r.converged for r in rows)
    if bad:
        log.warning("%d sweep points did not converge", bad)
    body = ((r.eps0, r.matching, r.n_thermal, r.r_twb, r.r_pssv, r.tsep_twb_simon,
             r.tsep_pssv_ndpt) for r in rows)
    return _render(_header("fig1a", config),
                   ["eps0", "matching", "N_T", "r_twb", "r_pssv", "tsep_twb_simon", "tsep_pssv_ndpt"],
                   body)


def cmd_fig1b(args) -> str:
    cfg = _sep_cfg(args)
    grid = _grid(args.c1sq_grid, DEFAULT_C1SQ_GRID)
    if any(not 0 < c <= 0.5 for c in grid):
        raise ConfigError("--c1sq-grid values must lie in (0, 0.5]")
    matchings = tuple(args.matching or ("energy", "entanglement"))
    rows = fig1b_sweep(grid, matchings, cfg, args.measure)
    bad = sum(not r.converged for r in rows)
    config = {"c1sq_grid": grid, "matchings": matchings, "measure": args.measure,
              "t_max": cfg.t_max, "t_tol": cfg.t_tol, "gamma": 1.0}
    header = _header("fig1b", config) + [f"# non_converged_rows: {bad}"]
    if bad:
        log.warning("%d threshold rows have no sign change", bad)
    body = ((r.c1sq, r.matching, "nan" if r.threshold is None else r.threshold, r.converged)
            for r in rows)
    return _render(header, ["c1sq", "matching", "ba_threshold", "converged"], body)


def cmd_measure(args) -> str:
    state = _state(args)
    config = {"state": _state_label(state)}
    row = [_state_label(state), state.d, mean_energy(state)] + [entanglement(state, m) for m in MEASURES]
    return _render(_header("measure", config), ["state", "levels", "energy", *MEASURES], [row])


COMMANDS = {"evolve": cmd_evolve, "septime": cmd_septime, "fig1a": cmd_fig1a,
            "fig1b": cmd_fig1b, "measure": cmd_measure}


# -- parser ------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_state(p, required=True):
    p.add_argument("--state", choices=("twb", "pssv", "phi1", "random"), required=required)
    p.add_argument("--r", type=float, help="squeezing (twb, pssv)")
    p.add_argument("--c1sq", type=float, help="|c1|^2 (phi1)")
    p.add_argument("--seed", type=int, default=0, help="seed (random)")
    p.add_argument("--tail-tol", type=float, default=1e-10, help="Schmidt tail dropped by truncation")


def _add_channel(p):
    g = p.add_argument_group("channel (give gamma/ntherm or A/B)")
    g.add_argument("--gamma", type=float)
    g.add_argument("--ntherm", type=float)
    g.add_argument("--A", type=float)
    g.add_argument("--B", type=float)


def _add_ndpt(p):
    p.add_argument("--n-tr", type=int, default=3)
    p.add_argument("--block", choices=("square", "total", "phi1"), default="square")
    p.add_argument("--convention", choices=("levels", "max_index"), default="levels")
    p.add_argument("--negativity-tol", type=float, default=1e-10)


def _add_sep(p):
    _add_ndpt(p)
    p.add_argument("--t-max", type=float, default=50.0, help="infinity cutoff, units of 1/gamma")
    p.add_argument("--t-tol", type=float, default=1e-9)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pnesdec", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pnesdec {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-o", "--output", default="-", help="output file (default stdout)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    add = lambda name, **kw: sub.add_parser(name, parents=[common], **kw)  # noqa: E731

    p = add("evolve", help="density matrix after the thermal channel")
    _add_state(p)
    _add_channel(p)
    _add_ndpt(p)
    p.add_argument("--t", type=float, required=True, help="time (units of 1/gamma when gamma=1)")
    p.add_argument("--dim", type=int, help="levels per mode in the output (default: support + 5)")
    p.add_argument("--method", choices=("exact", "ode"), default="exact")
    p.add_argument("--ode-tol", type=float, default=1e-9)

    p = add("septime", help="separation time of one state")
    _add_state(p)
    _add_channel(p)
    _add_sep(p)
    p.add_argument("--criterion", choices=tuple(CLI_CRITERIA), required=True)
    p.add_argument("--dim", type=int, help="levels (random state)")

    for name, help_text in (("fig1a", "matched twin beam vs PSSV sweep"),
                            ("fig1b", "B/A thresholds for c0|00> + c1|11>")):
        p = add(name, help=help_text)
        _add_sep(p)
        p.add_argument("--matching", action="append", choices=("entanglement", "energy"))
    sub.choices["fig1a"].add_argument("--eps0", help="comma list (default 0.1,1.0)")
    sub.choices["fig1a"].add_argument("--nt-grid", help="comma list or start:stop:count")
    sub.choices["fig1a"].add_argument("--measure", choices=MEASURES, default="log_negativity")
    sub.choices["fig1b"].add_argument("--c1sq-grid", help="comma list or start:stop:count")
    sub.choices["fig1b"].add_argument("--measure", choices=MEASURES, default=FIG1B_MEASURE)

    p = add("measure", help="energy and entanglement of a pure state")
    _add_state(p)
    # sum |psi_n| converges slowly; measure on the same long expansion used for matching
    p.set_defaults(tail_tol=1e-30)
    p.add_argument("--dim", type=int, help="levels (random state)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = COMMANDS[args.command](args)
        write_atomic(args.output, text)
    except (NotEntangledError, NonGaussianStateError) as exc:
        log.error("%s", exc)
        return EXIT_PRECONDITION
    except ConvergenceError as exc:
        log.error("%s", exc)
        return EXIT_CONVERGENCE
    except (ConfigError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
