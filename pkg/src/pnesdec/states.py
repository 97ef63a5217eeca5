"""Photon-number entangled states ``sum_n psi_n |n, n>`` and their figures of merit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TAIL_TOL = 1e-10
NORM_TOL = 1e-9
MEASURES = ("log_negativity", "entropy")
FAMILIES = ("twb", "pssv", "phi1")


@dataclass(frozen=True)
class PnesCoefficients:
    """Schmidt coefficients of a pure PNES, plus the family that produced them."""

    psi: np.ndarray
    family: str = "custom"
    param: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        psi = np.array(self.psi, dtype=complex)
        if psi.ndim != 1 or psi.size == 0:
            raise ValueError("coefficients must be a non-empty vector")
        norm = float(np.sum(np.abs(psi) ** 2))
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"coefficients are not normalized (norm^2 = {norm!r})")
        psi.setflags(write=False)
        object.__setattr__(self, "psi", psi)

    @property
    def d(self) -> int:
        return self.psi.size

    @property
    def gaussian(self) -> bool:
        """True for the twin beam (and the vacuum, its ``r = 0`` member)."""
        if self.family == "twb":
            return True
        return bool(np.all(self.psi[1:] == 0))

    def padded(self, d: int) -> np.ndarray:
        out = np.zeros(max(d, self.d), dtype=complex)
        out[: self.d] = self.psi
        return out[:d] if d >= self.d or not np.any(self.psi[d:]) else out


@dataclass(frozen=True)
class MatchSpec:
    """Target for :func:`match_parameter`: equal entanglement or equal energy."""

    kind: str
    value: float
    measure: str = "log_negativity"

    def __post_init__(self):
        if self.kind not in ("entanglement", "energy"):
            raise ValueError(f"unknown matching kind {self.kind!r}")
        if self.measure not in MEASURES:
            raise ValueError(f"unknown measure {self.measure!r}")
        if not self.value > 0:
            raise ValueError(f"match target must be > 0, got {self.value}")


def _truncated(weights: np.ndarray, tail_tol: float, d: int | None, what: str) -> np.ndarray:
    """Cut an (unnormalized) amplitude sequence where its tail mass drops below ``tail_tol``."""
    probs = np.abs(weights) ** 2
    total = probs.sum()
    # tail[k] = mass beyond index k, summed from the small end to avoid cancellation
    tail = np.append(np.cumsum(probs[::-1])[::-1][1:], 0.0) / total
    if d is None:
        hits = np.flatnonzero(tail < tail_tol)
        if not hits.size:
            raise ValueError(f"{what}: tail mass does not fall below {tail_tol:g}")
        d = max(int(hits[0]) + 1, 2)
    elif d < len(tail) and tail[d - 1] > tail_tol:
        raise ValueError(f"{what}: tail mass {tail[d - 1]:.3g} beyond cutoff {d} exceeds {tail_tol:g}")
    psi = weights[:d].astype(complex)
    return psi / np.linalg.norm(psi)


def _series_length(t: float, tail_tol: float) -> int:
    # enough terms that t^(2n) n^2 is negligible next to tail_tol
    if t == 0:
        return 2
    n = int(math.ceil(math.log(tail_tol * 1e-6) / (2 * math.log(t)))) + 8
    while (n + 1) ** 2 * t ** (2 * n) > tail_tol * 1e-6:
        n *= 2
    return max(n, 4)


def twb_coeffs(r: float, d: int | None = None, tail_tol: float = TAIL_TOL) -> PnesCoefficients:
    """Twin beam: ``psi_n = tanh(r)^n / cosh(r)``, renormalized over the cutoff."""
    if r < 0:
        raise ValueError(f"squeezing must be >= 0, got {r}")
    t = math.tanh(r)
    n = np.arange(max(_series_length(t, tail_tol), d or 0))
    weights = t**n / math.cosh(r)
    return PnesCoefficients(_truncated(weights, tail_tol, d, "twb"), "twb", float(r))


def pssv_coeffs(r: float, d: int | None = None, tail_tol: float = TAIL_TOL) -> PnesCoefficients:
    """Two-mode photon-subtracted squeezed vacuum ``a1 a2 |TWB>``: ``psi_n ~ (n+1) tanh(r)^n``."""
    if not r > 0:
        raise ValueError("photon subtraction annihilates the vacuum; need r > 0")
    t = math.tanh(r)
    n = np.arange(max(_series_length(t, tail_tol), d or 0))
    weights = (n + 1) * t**n
    return PnesCoefficients(_truncated(weights, tail_tol, d, "pssv"), "pssv", float(r))


def pssv_norm_squared(r: float) -> float:
    """Closed form of ``sum_n (n+1)^2 t^(2n)`` with ``t = tanh r``."""
    x = math.tanh(r) ** 2
    return (1 + x) / (1 - x) ** 3


def phi1_coeffs(c0: complex, c1: complex) -> PnesCoefficients:
    """``c0|00> + c1|11>``."""
    norm = abs(c0) ** 2 + abs(c1) ** 2
    if abs(norm - 1.0) > NORM_TOL:
        raise ValueError(f"|c0|^2 + |c1|^2 = {norm!r}, expected 1")
    return PnesCoefficients(np.array([c0, c1]), "phi1", float(abs(c1) ** 2))


def phi1_from_c1sq(c1sq: float) -> PnesCoefficients:
    """Real non-negative amplitudes with ``|c1|^2 = c1sq``."""
    if not 0.0 <= c1sq <= 1.0:
        raise ValueError(f"|c1|^2 must lie in [0, 1], got {c1sq}")
    return phi1_coeffs(math.sqrt(1.0 - c1sq), math.sqrt(c1sq))


def random_pnes(dim: int, seed: int) -> PnesCoefficients:
    """Complex-Gaussian Schmidt coefficients on ``dim`` levels, reproducible from ``seed``."""
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return PnesCoefficients(z / np.linalg.norm(z), "random", None, {"seed": seed})


def family_coeffs(family: str, param: float, d: int | None = None,
                  tail_tol: float = TAIL_TOL) -> PnesCoefficients:
    """Dispatch on family name; ``param`` is ``r`` (twb, pssv) or ``|c1|^2`` (phi1)."""
    if family == "twb":
        return twb_coeffs(param, d, tail_tol)
    if family == "pssv":
        return pssv_coeffs(param, d, tail_tol)
    if family == "phi1":
        return phi1_from_c1sq(param)
    raise ValueError(f"unknown family {family!r}")


def mean_energy(coeffs) -> float:
    """Mean total photon number over both modes, ``sum 2n |psi_n|^2``."""
    psi = np.asarray(getattr(coeffs, "psi", coeffs))
    p = np.abs(psi) ** 2
    return float(2.0 * np.dot(np.arange(p.size), p))


def entanglement(coeffs, measure: str = "log_negativity") -> float:
    """Entanglement of a pure PNES in nats.

    ``log_negativity``: ``2 ln(sum |psi_n|)``.  ``entropy``: von Neumann
    entropy of either reduced state, ``-sum |psi_n|^2 ln |psi_n|^2``.
    """
    psi = np.asarray(getattr(coeffs, "psi", coeffs))
    amp = np.abs(psi)
    if measure == "log_negativity":
        return float(2.0 * math.log(amp.sum()))
    if measure == "entropy":
        p = amp[amp > 0] ** 2
        return float(-np.sum(p * np.log(p)))
    raise ValueError(f"unknown measure {measure!r}")


# family measures are evaluated on long expansions so truncation cannot bias matching
_MATCH_TAIL = 1e-30


def _figure_of_merit(family: str, param: float, spec: MatchSpec) -> float:
    coeffs = family_coeffs(family, param, tail_tol=_MATCH_TAIL)
    if spec.kind == "energy":
        return mean_energy(coeffs)
    return entanglement(coeffs, spec.measure)


def match_parameter(family: str, spec: MatchSpec, xtol: float = 1e-12) -> float:
    """Family parameter (``r``, or ``|c1|^2`` for phi1) whose measure equals ``spec.value``.

    Bisection on the increasing map parameter -> measure.  ``phi1`` is
    searched on ``|c1|^2 in (0, 1/2]`` where both entanglement measures and
    the energy increase.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    target = spec.value
    f = lambda p: _figure_of_merit(family, p, spec) - target  # noqa: E731
    if family == "phi1":
        lo, hi = 0.0, 0.5
        top = f(hi)
        if top < 0 and top > -1e-12 * max(1.0, target):
            return hi
        if top < 0:
            raise ValueError(f"target {target} is out of reach for phi1 (max {f(hi) + target:.6g})")
    else:
        lo, hi = 0.0, 0.5
        while f(hi) < 0:
            lo, hi = hi, 2 * hi
            if hi > 20:
                raise ValueError(f"target {target} is out of reach for {family}")
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
