"""Entanglement tests at a single time point.

* NDPT: a negative eigenvalue of a principal block of the partially
  transposed density matrix certifies entanglement.
* Simon: the Gaussian PPT test on the covariance matrix; only applied to
  Gaussian inputs.
* The ``c0|00> + c1|11>`` family, where the ``{|01>, |10>}`` block of the
  partial transpose has closed-form entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import brentq

from . import fock_space as fs
from .gaussian import check_covariance, evolve_covariance_excess, pt_spectrum_from_excess, twb_covariance
from .states import PnesCoefficients
from .thermal_channel import ChannelParams, EvolutionResult, evolve_exact

BLOCKS = ("square", "total", "phi1")
CONVENTIONS = ("levels", "max_index")


class NonGaussianStateError(ValueError):
    """The Simon test was asked to judge a non-Gaussian state."""


@dataclass(frozen=True)
class NdptConfig:
    """Subspace choice for the partial-transpose test.

    ``n_tr`` counts Fock levels per mode (``convention="levels"``, kets with
    ``n, m < n_tr``) or is the largest kept occupation
    (``convention="max_index"``, ``n, m <= n_tr``).  ``block`` picks the
    principal block: ``square`` (per-mode truncation), ``total``
    (``n + m`` below the level count, symmetric under mode exchange) or
    ``phi1`` (just ``{|01>, |10>}``).
    """

    n_tr: int = 3
    d_evolve: int | None = None
    negativity_tol: float = 1e-10
    block: str = "square"
    convention: str = "levels"

    def __post_init__(self):
        if self.n_tr < 1:
            raise ValueError(f"n_tr must be positive, got {self.n_tr}")
        if not 1e-12 <= self.negativity_tol <= 1e-8:
            raise ValueError(f"negativity_tol must lie in [1e-12, 1e-8], got {self.negativity_tol}")
        if self.block not in BLOCKS:
            raise ValueError(f"unknown block {self.block!r}")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown convention {self.convention!r}")
        if self.d_evolve is not None and self.levels > self.d_evolve:
            raise ValueError(f"n_tr={self.n_tr} needs {self.levels} levels > d_evolve={self.d_evolve}")

    @property
    def levels(self) -> int:
        """Fock levels per mode the block touches."""
        if self.block == "phi1":
            return 2
        return self.n_tr if self.convention == "levels" else self.n_tr + 1

    def indices(self, d: int) -> np.ndarray:
        if self.levels > d:
            raise ValueError(f"block needs {self.levels} levels, state has {d}")
        if self.block == "square":
            return fs.square_block(self.levels, d)
        if self.block == "total":
            return fs.total_photon_block(self.levels, d)
        return fs.ket_block([(0, 1), (1, 0)], d)


@dataclass(frozen=True)
class CriterionVerdict:
    entangled: bool
    witness_value: float
    criterion: str


def ndpt_test(rho, cfg: NdptConfig = NdptConfig()) -> CriterionVerdict:
    """Smallest eigenvalue of the chosen block of ``rho``'s partial transpose.

    ``rho`` may be a density matrix or an :class:`EvolutionResult`; when the
    latter comes from :func:`evolve_exact` its low-level elements are exact
    even if probability has leaked above the cutoff.
    """
    if isinstance(rho, EvolutionResult):
        rho = rho.rho
    m = np.asarray(getattr(rho, "elements", rho))
    d = fs.cutoff_of(m)
    if cfg.d_evolve is not None and cfg.levels > d:
        raise ValueError(f"block needs {cfg.levels} levels, state has {d}")
    block = fs.restrict_indices(fs.partial_transpose(m), cfg.indices(d))
    witness = float(fs.hermitian_eigenvalues(block)[0])
    return CriterionVerdict(witness < -cfg.negativity_tol, witness, f"ndpt-{cfg.block}")


def ndpt_at(state: PnesCoefficients, params: ChannelParams, t: float,
            cfg: NdptConfig = NdptConfig(), rho0=None) -> CriterionVerdict:
    """Evolve ``state`` exactly onto the block's levels and run :func:`ndpt_test`."""
    if rho0 is None:
        rho0 = fs.pure_pnes_density(state, max(state.d, 2))
    levels = cfg.d_evolve or cfg.levels
    return ndpt_test(evolve_exact(rho0, params, t, dim=max(levels, 2)), cfg)


def simon_test(state, params: ChannelParams, t: float) -> CriterionVerdict:
    """Gaussian PPT test of a twin beam (given as coefficients) or a covariance matrix.

    Non-Gaussian PNES are refused: their covariance matrix would be judged
    by a test that ignores the non-Gaussian part of the entanglement.
    """
    if isinstance(state, PnesCoefficients):
        if not state.gaussian:
            raise NonGaussianStateError(
                f"Simon test needs a Gaussian state, got family {state.family!r}")
        sigma0 = twb_covariance(state.param if state.family == "twb" else 0.0)
    else:
        sigma0 = check_covariance(state)
    result = pt_spectrum_from_excess(evolve_covariance_excess(sigma0, params, t))
    return CriterionVerdict(result.entangled, result.excess, "simon")


def _single_mode_transfer(params: ChannelParams, t: float):
    """Matrix elements of the thermal channel on the vacuum/one-photon sector.

    Returns ``(P00, P10, P01, P11, q)`` with ``Pmn = <m|Phi(|n><n|)|m>`` and
    ``q = <0|Phi(|0><1|)|1>``.
    """
    eta, gain = params.attenuator_amplifier(t)
    p00 = 1.0 / gain
    p10 = (gain - 1.0) / gain**2
    p01 = (1.0 - eta) / gain
    p11 = (eta + (1.0 - eta) * (gain - 1.0)) / gain**2
    q = math.sqrt(eta) * gain**-1.5
    return p00, p10, p01, p11, q


def phi1_elements(c0: complex, c1: complex, params: ChannelParams, t: float):
    """``(<01|rho|01>, <10|rho|10>, <00|rho|11>)`` for the evolved ``c0|00> + c1|11>``.

    An attenuator lowers, and an amplifier raises, the photon number, so with
    at most one photon per mode only the listed single-mode elements enter.
    """
    p00, p10, p01, p11, q = _single_mode_transfer(params, t)
    w0, w1 = abs(c0) ** 2, abs(c1) ** 2
    pop01 = w0 * p00 * p10 + w1 * p01 * p11
    pop10 = w0 * p10 * p00 + w1 * p11 * p01
    coh = c0 * np.conj(c1) * q * q
    return pop01, pop10, complex(coh)


def phi1_witness(pop01: float, pop10: float, coh: complex) -> float:
    """Smaller eigenvalue of ``[[pop01, coh], [coh*, pop10]]``."""
    mean = 0.5 * (pop01 + pop10)
    return mean - math.hypot(0.5 * (pop01 - pop10), abs(coh))


def phi1_subspace_entangled(c0: complex, c1: complex, params: ChannelParams, t: float,
                            negativity_tol: float = 1e-10) -> CriterionVerdict:
    """Negativity of the ``{|01>, |10>}`` block of the partial transpose.

    Partial transposition moves the ``|00><11|`` coherence into that block,
    so the block is ``[[p01, coh], [coh*, p10]]`` and turns non-positive
    exactly when ``|coh|^2 > p01 p10``.  The witness is its smaller
    eigenvalue.
    """
    witness = phi1_witness(*phi1_elements(c0, c1, params, t))
    return CriterionVerdict(witness < -negativity_tol, witness, "phi1")


def _phi1_balance(c0: complex, c1: complex, n_thermal: float) -> Polynomial:
    """Polynomial in ``tau`` vanishing where ``|coh| = p01`` (``= p10``).

    Multiplying ``|c0 c1| tau / G^4 = p01`` by ``G^4`` with
    ``G = 1 + (1 - tau) N_T`` and ``eta = tau / G`` gives
    ``|c0|^2 G^2 (G-1) + |c1|^2 (G-tau)(tau + (G-tau)(G-1)) - |c0 c1| tau G``.
    Negative means entangled in the block.
    """
    tau = Polynomial([0.0, 1.0])
    gain = 1.0 + n_thermal * (1.0 - tau)
    w0, w1 = abs(c0) ** 2, abs(c1) ** 2
    return (w0 * gain**2 * (gain - 1.0) + w1 * (gain - tau) * (tau + (gain - tau) * (gain - 1.0))
            - abs(c0) * abs(c1) * tau * gain)


def phi1_separation_time(c0: complex, c1: complex, params: ChannelParams) -> float:
    """``gamma t`` at which the ``{|01>, |10>}`` block stops detecting entanglement.

    The balance condition is a cubic in ``tau = exp(-gamma t)``; the
    separation time is ``-ln`` of its largest root in ``(0, 1)``, or ``inf``
    if there is none.  With pure loss (``N_T = 0``) the cubic reduces to
    ``tau (|c1|^2 (1 - tau) - |c0 c1|) = 0``, so a finite time exists only
    when ``|c1| > |c0|``.
    """
    if abs(c0) * abs(c1) == 0:
        raise ValueError("c0 c1 = 0: the state is not entangled")
    poly = _phi1_balance(c0, c1, params.n_thermal)
    roots = [z.real for z in poly.roots() if abs(z.imag) < 1e-9 and 0.0 < z.real < 1.0]
    if not roots:
        return math.inf
    tau = max(roots)
    # polish the companion-matrix root on a sign-changing bracket
    lo, hi = tau * (1 - 1e-9), min(tau * (1 + 1e-9), 1.0)
    if poly(lo) * poly(hi) < 0:
        tau = brentq(poly, lo, hi, xtol=1e-16, rtol=1e-15)
    return -math.log(tau)
