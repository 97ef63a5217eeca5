"""Covariance-matrix track for two-mode Gaussian states.

Quadratures are ordered ``(x1, p1, x2, p2)`` with ``x = (a + a^dag)/sqrt(2)``,
so the vacuum covariance is ``I/2`` and a two-mode Gaussian state is
separable iff the smaller partially transposed symplectic eigenvalue is at
least ``1/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .thermal_channel import ChannelParams

OMEGA = np.array(
    [[0.0, 1.0, 0.0, 0.0], [-1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0], [0.0, 0.0, -1.0, 0.0]]
)
VACUUM_NU = 0.5


@dataclass(frozen=True)
class SimonResult:
    """PT symplectic spectrum; ``excess = nu_minus - 1/2`` is kept separately
    because it is far smaller than ``nu_minus`` near the vacuum."""

    nu_minus: float
    nu_plus: float
    excess: float

    @property
    def entangled(self) -> bool:
        return self.excess < 0


def check_covariance(sigma, atol: float = 1e-10) -> np.ndarray:
    """Validate a bona fide two-mode covariance matrix and return it as an array."""
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != (4, 4):
        raise ValueError(f"expected a 4x4 covariance matrix, got {sigma.shape}")
    if np.max(np.abs(sigma - sigma.T)) > atol:
        raise ValueError("covariance matrix is not symmetric")
    uncertainty = sigma + 0.5j * OMEGA
    if np.linalg.eigvalsh(uncertainty)[0] < -atol:
        raise ValueError("covariance matrix violates the uncertainty principle")
    return sigma


def twb_covariance(r: float) -> np.ndarray:
    if r < 0:
        raise ValueError(f"squeezing must be >= 0, got {r}")
    a = 0.5 * math.cosh(2 * r)
    c = 0.5 * math.sinh(2 * r)
    return np.array([[a, 0, c, 0], [0, a, 0, -c], [c, 0, a, 0], [0, -c, 0, a]])


def thermal_covariance(n_thermal: float) -> np.ndarray:
    return (n_thermal + 0.5) * np.eye(4)


def evolve_covariance(sigma0, params: ChannelParams, t: float) -> np.ndarray:
    """``tau sigma0 + (1 - tau)(N_T + 1/2) I`` with ``tau = exp(-gamma t)``."""
    sigma0 = np.asarray(sigma0, dtype=float)
    tau = params.transmissivity(t)
    return tau * sigma0 + (1.0 - tau) * (params.n_thermal + 0.5) * np.eye(4)


def pt_symplectic_eigenvalues(sigma) -> SimonResult:
    """Symplectic spectrum of the partially transposed covariance matrix."""
    sigma = check_covariance(sigma)
    return pt_spectrum_from_excess(sigma - VACUUM_NU * np.eye(4))


def pt_spectrum_from_excess(excess) -> SimonResult:
    """PT symplectic spectrum of ``sigma = I/2 + excess``.

    With ``u = nu_plus^2 - 1/4`` and ``v = nu_minus^2 - 1/4``, the sum
    ``u + v`` and product ``u v`` are polynomials in ``excess`` without a
    constant term, so ``v`` keeps full relative precision even when
    ``sigma`` is within rounding of the vacuum.
    """
    d = np.asarray(excess, dtype=float)
    da, db, dc = d[:2, :2], d[2:, 2:], d[:2, 2:]
    det_a, det_b, det_c = np.linalg.det(da), np.linalg.det(db), np.linalg.det(dc)
    # elementary symmetric polynomials of the eigenvalues of the full excess
    e = np.poly(np.linalg.eigvalsh(0.5 * (d + d.T)))
    e2, e3, e4 = e[2], -e[3], e[4]
    total = 0.5 * (np.trace(da) + np.trace(db)) + det_a + det_b - 2.0 * det_c
    product = 0.25 * e2 + 0.5 * e3 + e4 - 0.25 * (det_a + det_b - 2.0 * det_c)
    disc = math.sqrt(max(total * total - 4.0 * product, 0.0))
    u = 0.5 * (total + disc)
    v = product / u if u > 0 else 0.5 * (total - disc)
    nu_minus = math.sqrt(max(0.25 + v, 0.0))
    return SimonResult(nu_minus, math.sqrt(0.25 + u), float(v / (nu_minus + 0.5)))


def evolve_covariance_excess(sigma0, params: ChannelParams, t: float) -> np.ndarray:
    """``sigma(t) - I/2`` computed without subtracting two O(1) numbers."""
    sigma0 = np.asarray(sigma0, dtype=float)
    tau = params.transmissivity(t)
    return tau * (sigma0 - VACUUM_NU * np.eye(4)) + (-math.expm1(-params.gamma * t)) * params.n_thermal * np.eye(4)


def twb_nu_minus(r: float, params: ChannelParams, t: float) -> float:
    """Closed form of ``nu_minus`` for the evolved twin beam."""
    tau = params.transmissivity(t)
    return tau * 0.5 * math.exp(-2 * r) + (1 - tau) * (params.n_thermal + 0.5)


def twb_separation_time(r: float, params: ChannelParams) -> float:
    """Time (in units of ``1/gamma``, i.e. ``gamma t``) at which the evolved
    twin beam becomes separable.

    Setting the affine ``nu_minus(t)`` equal to ``1/2`` gives
    ``gamma t = ln(1 + (1 - exp(-2r)) / (2 N_T))``; for ``N_T = 0`` the bound
    is never reached and ``inf`` is returned.
    """
    if r < 0:
        raise ValueError(f"squeezing must be >= 0, got {r}")
    n = params.n_thermal
    if n == 0:
        return math.inf
    return math.log1p(-math.expm1(-2 * r) / (2 * n))


def covariance_from_density(rho) -> np.ndarray:
    """Quadrature covariance matrix of a two-mode Fock-basis density matrix.

    Moments are evaluated with exact ladder-operator matrix elements, so no
    truncated products like ``a a^dag`` enter.
    """
    m = np.asarray(getattr(rho, "elements", rho), dtype=complex)
    d = math.isqrt(m.shape[0])
    t = m.reshape(d, d, d, d)
    s = np.sqrt(np.arange(1, d))

    # <O> = tr(rho O); rho[n,m,k,j] = <n,m|rho|k,j>
    def expect(op1: np.ndarray, op2: np.ndarray) -> complex:
        return complex(np.einsum("nmkj,kn,jm->", t, op1, op2))

    eye = np.eye(d)
    a = np.diag(s, 1)
    ad = a.T
    num = np.diag(np.arange(d, dtype=float))
    a2 = a @ a  # exact on every level: lowers by two
    ops1 = {"a": (a, eye), "aa": (a2, eye), "n": (num, eye)}
    ops2 = {"a": (eye, a), "aa": (eye, a2), "n": (eye, num)}
    mean = [expect(*ops1["a"]), expect(*ops2["a"])]
    aa = [[expect(*ops1["aa"]), expect(a, a)], [expect(a, a), expect(*ops2["aa"])]]
    # <a_i^dag a_j>
    ada = [[expect(*ops1["n"]), expect(ad, a)], [expect(a, ad), expect(*ops2["n"])]]

    sigma = np.zeros((4, 4))
    for i in range(2):
        for j in range(2):
            pair = aa[i][j] - mean[i] * mean[j]
            number = ada[i][j] - np.conj(mean[i]) * mean[j]
            half = 0.5 if i == j else 0.0
            sigma[2 * i, 2 * j] = pair.real + number.real + half
            sigma[2 * i + 1, 2 * j + 1] = -pair.real + number.real + half
            sigma[2 * i, 2 * j + 1] = pair.imag + number.imag
            sigma[2 * j + 1, 2 * i] = pair.imag + number.imag
    return sigma
