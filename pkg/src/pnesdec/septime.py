"""Separation times and the two comparison sweeps built on them."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import fock_space as fs
from .criteria import (
    NdptConfig,
    NonGaussianStateError,
    ndpt_test,
    phi1_separation_time,
    simon_test,
)
from .states import MatchSpec, PnesCoefficients, entanglement, family_coeffs, match_parameter, mean_energy
from .thermal_channel import ChannelParams, ConvergenceError, evolve_exact

log = logging.getLogger(__name__)

CRITERIA = ("simon", "ndpt", "phi1-block", "phi1-analytic")
DEFAULT_NT_GRID = tuple(float(x) for x in np.linspace(0.1, 3.0, 30))
DEFAULT_EPS0 = (0.1, 1.0)
# Under log-negativity matching phi1 outlasts the twin beam at every B/A for
# small |c1|^2, so the threshold curve is only defined with entropy matching.
FIG1B_MEASURE = "entropy"
DEFAULT_C1SQ_GRID = tuple(round(0.05 + 0.025 * i, 10) for i in range(19))


class NotEntangledError(ValueError):
    """The state is not detected as entangled at ``t = 0``."""


@dataclass(frozen=True)
class SeparationConfig:
    """Root-finding settings.  Times are in units of ``1/gamma``."""

    t_max: float = 50.0
    t_tol: float = 1e-9
    rel_tol: float = 1e-11
    t_start: float = 0.25
    max_iter: int = 400
    ndpt: NdptConfig = field(default_factory=NdptConfig)


@dataclass(frozen=True)
class SeparationResult:
    """Separation time ``gamma t`` (``inf`` if not reached by ``t_max``)."""

    t_sep: float
    criterion: str
    bracket: tuple[float, float]
    iterations: int
    converged: bool

    @property
    def finite(self) -> bool:
        return math.isfinite(self.t_sep)


def entanglement_predicate(state: PnesCoefficients, params: ChannelParams, criterion: str,
                           cfg: SeparationConfig = SeparationConfig()):
    """Return ``f(gamma_t) -> CriterionVerdict`` for the chosen criterion."""
    gamma = params.gamma
    if criterion == "simon":
        if not state.gaussian:
            raise NonGaussianStateError(
                f"Simon test needs a Gaussian state, got family {state.family!r}")
        return lambda s: simon_test(state, params, s / gamma)
    if criterion in ("ndpt", "phi1-block"):
        ndpt = cfg.ndpt
        if criterion == "phi1-block":
            ndpt = NdptConfig(ndpt.n_tr, None, ndpt.negativity_tol, "phi1", ndpt.convention)
        rho0 = fs.pure_pnes_density(state, max(state.d, 2))
        dim = max(ndpt.levels, 2)
        return lambda s: ndpt_test(evolve_exact(rho0, params, s / gamma, dim=dim), ndpt)
    raise ValueError(f"unknown criterion {criterion!r}")


def _phi1_amplitudes(state: PnesCoefficients):
    psi = state.psi
    if np.any(psi[2:] != 0):
        raise ValueError("state has support beyond |11>, not of the c0|00> + c1|11> form")
    return complex(psi[0]), complex(psi[1]) if psi.size > 1 else 0j


def bisect_separation(entangled_at, cfg: SeparationConfig = SeparationConfig(),
                      criterion: str = "") -> SeparationResult:
    """Earliest ``gamma t`` at which ``entangled_at`` turns false.

    The bracket grows geometrically from ``cfg.t_start`` until the state is
    found separable or ``cfg.t_max`` is passed (``inf`` verdict), then is
    halved until its width is below ``min(t_tol, rel_tol * t_hi)``.  A single
    sign change inside the bracket is assumed.
    """
    if not entangled_at(0.0):
        raise NotEntangledError(f"state is not entangled at t=0 under {criterion or 'criterion'}")
    lo, hi = 0.0, min(cfg.t_start, cfg.t_max)
    iterations = 0
    while entangled_at(hi):
        iterations += 1
        if hi >= cfg.t_max:
            return SeparationResult(math.inf, criterion, (hi, math.inf), iterations, True)
        lo, hi = hi, min(2.0 * hi, cfg.t_max)
    while hi - lo > min(cfg.t_tol, cfg.rel_tol * hi):
        if iterations >= cfg.max_iter:
            return SeparationResult(0.5 * (lo + hi), criterion, (lo, hi), iterations, False)
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        iterations += 1
        if entangled_at(mid):
            lo = mid
        else:
            hi = mid
    return SeparationResult(0.5 * (lo + hi), criterion, (lo, hi), iterations, True)


def separation_time(state: PnesCoefficients, params: ChannelParams, criterion: str,
                    cfg: SeparationConfig = SeparationConfig()) -> SeparationResult:
    """Separation time of ``state`` under ``criterion``.

    ``phi1-analytic`` uses the closed-form root; every other criterion
    brackets and bisects the verdict of the corresponding test.
    """
    if criterion == "phi1-analytic":
        c0, c1 = _phi1_amplitudes(state)
        if c0 * c1 == 0:
            raise NotEntangledError("c0 c1 = 0: product state")
        t = phi1_separation_time(c0, c1, params)
        if t > cfg.t_max:
            t = math.inf
        return SeparationResult(t, criterion, (t, t), 0, True)
    pred = entanglement_predicate(state, params, criterion, cfg)
    return bisect_separation(lambda s: pred(s).entangled, cfg, criterion)


# -- parallel map -----------------------------------------------------------


def worker_count() -> int:
    raw = os.environ.get("PNESDEC_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"PNESDEC_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


def parallel_map(fn, items, workers: int | None = None) -> list:
    """Map ``fn`` over ``items`` in input order, using processes when ``workers > 1``."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


# -- entanglement-vs-energy matched comparison -----------------------------


@dataclass(frozen=True)
class SweepRow:
    eps0: float
    matching: str
    n_thermal: float
    ratio: float
    r_twb: float
    r_pssv: float
    energy_twb: float
    energy_pssv: float
    ent_twb: float
    ent_pssv: float
    tsep_twb_simon: float
    tsep_pssv_ndpt: float
    converged: bool

    def as_dict(self) -> dict:
        return asdict(self)


def matched_pair(eps0: float, matching: str, measure: str = "log_negativity") -> tuple[float, float]:
    """``(r_twb, r_pssv)``: the twin beam carries ``eps0``; the PSSV matches its
    entanglement or its energy."""
    r_twb = match_parameter("twb", MatchSpec("entanglement", eps0, measure))
    if matching == "entanglement":
        target = MatchSpec("entanglement", eps0, measure)
    elif matching == "energy":
        energy = mean_energy(family_coeffs("twb", r_twb, tail_tol=1e-30))
        target = MatchSpec("energy", energy, measure)
    else:
        raise ValueError(f"unknown matching {matching!r}")
    return r_twb, match_parameter("pssv", target)


def _sweep_point(job) -> SweepRow:
    eps0, matching, n_thermal, r_twb, r_pssv, measure, cfg = job
    params = ChannelParams.thermal(n_thermal)
    twb = family_coeffs("twb", r_twb)
    pssv = family_coeffs("pssv", r_pssv)
    t_twb = separation_time(twb, params, "simon", cfg)
    t_pssv = separation_time(pssv, params, "ndpt", cfg)
    return SweepRow(
        eps0=eps0, matching=matching, n_thermal=n_thermal, ratio=params.ratio,
        r_twb=r_twb, r_pssv=r_pssv,
        energy_twb=mean_energy(family_coeffs("twb", r_twb, tail_tol=1e-30)),
        energy_pssv=mean_energy(family_coeffs("pssv", r_pssv, tail_tol=1e-30)),
        ent_twb=entanglement(family_coeffs("twb", r_twb, tail_tol=1e-30), measure),
        ent_pssv=entanglement(family_coeffs("pssv", r_pssv, tail_tol=1e-30), measure),
        tsep_twb_simon=t_twb.t_sep, tsep_pssv_ndpt=t_pssv.t_sep,
        converged=t_twb.converged and t_pssv.converged,
    )


def fig1a_sweep(eps0_list=DEFAULT_EPS0, matchings=("entanglement", "energy"),
                n_thermal_grid=DEFAULT_NT_GRID, cfg: SeparationConfig = SeparationConfig(),
                measure: str = "log_negativity", workers: int | None = None) -> list[SweepRow]:
    """Twin beam (Simon) against matched PSSV (NDPT) over a thermal-occupation grid.

    Rows are ordered by ``eps0``, then matching, then ``N_T``.
    """
    jobs = []
    for eps0 in eps0_list:
        for matching in matchings:
            r_twb, r_pssv = matched_pair(eps0, matching, measure)
            for n_thermal in n_thermal_grid:
                jobs.append((float(eps0), matching, float(n_thermal), r_twb, r_pssv, measure, cfg))
    return parallel_map(_sweep_point, jobs, workers)


# -- B/A threshold ------------------------------------------------------------


@dataclass(frozen=True)
class ThresholdResult:
    c1sq: float
    matching: str
    threshold: float | None
    converged: bool
    r_twb: float
    verdict: str = ""


def phi1_matched_twb(c1sq: float, matching: str, measure: str = "log_negativity") -> float:
    """Squeezing of the twin beam with the same energy or entanglement as ``phi1``."""
    phi = family_coeffs("phi1", c1sq)
    if matching == "energy":
        spec = MatchSpec("energy", mean_energy(phi), measure)
    elif matching == "entanglement":
        spec = MatchSpec("entanglement", entanglement(phi, measure), measure)
    else:
        raise ValueError(f"unknown matching {matching!r}")
    return match_parameter("twb", spec)


def survival_gap(c1sq: float, r_twb: float, ratio: float, cfg: SeparationConfig = SeparationConfig(),
                 gamma: float = 1.0) -> float:
    """``t_sep(phi1) - t_sep(TWB)`` in units of ``1/gamma`` at ``B/A = ratio``."""
    params = ChannelParams.from_ratio(ratio, gamma)
    phi = family_coeffs("phi1", c1sq)
    t_phi = separation_time(phi, params, "phi1-analytic", cfg).t_sep
    t_twb = separation_time(family_coeffs("twb", r_twb), params, "simon", cfg).t_sep
    if math.isinf(t_phi) and math.isinf(t_twb):
        return 0.0
    return t_phi - t_twb


def ba_threshold(c1sq: float, matching: str, cfg: SeparationConfig = SeparationConfig(),
                 measure: str = FIG1B_MEASURE, xtol: float = 1e-7, edge: float = 1e-3,
                 gamma: float = 1.0) -> ThresholdResult:
    """``B/A`` above which ``phi1`` stays entangled longer than the matched twin beam.

    Bisection on the sign of :func:`survival_gap` over ``[edge, 1 - edge]``.
    Without a sign change the result carries ``threshold=None`` and a
    verdict naming which state wins throughout.
    """
    if not 0.0 < c1sq <= 0.5:
        raise ValueError(f"|c1|^2 must lie in (0, 1/2], got {c1sq}")
    r_twb = phi1_matched_twb(c1sq, matching, measure)
    gap = lambda x: survival_gap(c1sq, r_twb, x, cfg, gamma)  # noqa: E731
    lo, hi = edge, 1.0 - edge
    g_lo, g_hi = gap(lo), gap(hi)
    if g_lo > 0:
        return ThresholdResult(c1sq, matching, None, False, r_twb, "phi1 outlasts twb on whole range")
    if g_hi <= 0:
        return ThresholdResult(c1sq, matching, None, False, r_twb, "twb outlasts phi1 on whole range")
    for _ in range(200):
        if hi - lo <= xtol:
            break
        mid = 0.5 * (lo + hi)
        if gap(mid) > 0:
            hi = mid
        else:
            lo = mid
    else:
        raise ConvergenceError("threshold bisection did not converge")
    return ThresholdResult(c1sq, matching, 0.5 * (lo + hi), True, r_twb, "crossing")


def _threshold_job(job) -> ThresholdResult:
    c1sq, matching, cfg, measure = job
    return ba_threshold(c1sq, matching, cfg, measure)


def fig1b_sweep(c1sq_grid=DEFAULT_C1SQ_GRID, matchings=("energy", "entanglement"),
                cfg: SeparationConfig = SeparationConfig(), measure: str = FIG1B_MEASURE,
                workers: int | None = None) -> list[ThresholdResult]:
    jobs = [(float(c), m, cfg, measure) for c in c1sq_grid for m in matchings]
    return parallel_map(_threshold_job, jobs, workers)
