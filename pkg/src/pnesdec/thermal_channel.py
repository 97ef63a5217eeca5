"""Two independent Markovian thermal reservoirs acting on a two-mode state.

The generator is

    drho/dt = A sum_i D[a_i] rho + B sum_i D[a_i^dag] rho,
    D[O] rho = 2 O rho O^dag - O^dag O rho - rho O^dag O,

with ``A = gamma/2 (N_T + 1)`` and ``B = gamma/2 N_T``.  Two independent
routes to ``rho(t)`` are provided:

* :func:`evolve_exact` applies the closed-form single-mode channel to each
  mode.  Moment matching fixes the channel as a quantum-limited attenuator
  of transmissivity ``eta`` followed by a quantum-limited amplifier of gain
  ``G``.  With ``tau = exp(-gamma t)`` the covariance map of the composition
  is ``sigma -> G eta sigma + (2G - G eta - 1)/2``; equating with
  ``tau sigma + (1 - tau)(N_T + 1/2)`` gives ``G = 1 + (1 - tau) N_T`` and
  ``eta = tau / G``.  Both maps only move photons down (attenuator) or up
  (amplifier), so the output on levels ``< dim`` is exact for any ``dim``;
  probability pushed above the cutoff is reported as ``trace_leak``.
* :func:`evolve_ode` integrates :func:`lindblad_rhs` with an adaptive
  Dormand-Prince 5(4) stepper on a padded working cutoff.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy.special import gammaln, xlogy

from .fock_space import TwoModeDensityMatrix, annihilation_matrix

log = logging.getLogger(__name__)

LEAK_TOL = 1e-6


class ConvergenceError(RuntimeError):
    """A numerical procedure failed to reach its tolerance."""


@dataclass(frozen=True)
class ChannelParams:
    """Reservoir couplings: ``A`` (loss) and ``B`` (gain), both in inverse time."""

    A: float
    B: float

    def __post_init__(self):
        if not (math.isfinite(self.A) and math.isfinite(self.B)):
            raise ValueError("couplings must be finite")
        if self.B < 0:
            raise ValueError(f"B must be >= 0, got {self.B}")
        if not self.A > self.B:
            raise ValueError(f"a thermal reservoir needs A > B, got A={self.A}, B={self.B}")

    @classmethod
    def thermal(cls, n_thermal: float, gamma: float = 1.0) -> ChannelParams:
        if gamma <= 0 or n_thermal < 0:
            raise ValueError("need gamma > 0 and n_thermal >= 0")
        return cls(0.5 * gamma * (n_thermal + 1.0), 0.5 * gamma * n_thermal)

    @classmethod
    def from_ratio(cls, ratio: float, gamma: float = 1.0) -> ChannelParams:
        """Couplings with ``B/A = ratio`` at fixed ``gamma = 2(A - B)``."""
        if not 0.0 <= ratio < 1.0:
            raise ValueError(f"B/A must lie in [0, 1), got {ratio}")
        a = 0.5 * gamma / (1.0 - ratio)
        return cls(a, ratio * a)

    @property
    def gamma(self) -> float:
        return 2.0 * (self.A - self.B)

    @property
    def n_thermal(self) -> float:
        return self.B / (self.A - self.B)

    @property
    def ratio(self) -> float:
        return self.B / self.A

    def transmissivity(self, t: float) -> float:
        """``tau = exp(-gamma t)``."""
        if not t >= 0:
            raise ValueError(f"time must be >= 0, got {t}")
        return math.exp(-self.gamma * t)

    def attenuator_amplifier(self, t: float) -> tuple[float, float]:
        """``(eta, G)`` of the equivalent attenuator-then-amplifier pair."""
        tau = self.transmissivity(t)
        gain = 1.0 + (1.0 - tau) * self.n_thermal
        return tau / gain, gain


@dataclass(frozen=True)
class EvolutionResult:
    rho: TwoModeDensityMatrix
    time: float
    trace_leak: float

    @property
    def valid(self) -> bool:
        return self.trace_leak < LEAK_TOL


def _as_matrix(rho) -> np.ndarray:
    return np.asarray(getattr(rho, "elements", rho), dtype=complex)


# -- master equation -------------------------------------------------------


@functools.lru_cache(maxsize=32)
def _rhs_tables(d: int, A: float, B: float):
    s = np.sqrt(np.arange(1, d, dtype=float))
    ladder = np.outer(s, s)
    # a a^dag truncated: (n + 1) below the top level, 0 on it
    up = np.arange(1, d + 1, dtype=float)
    up[-1] = 0.0
    return ladder, A * np.arange(d) + B * up


@numba.njit(cache=True, fastmath=True)
def _rhs_kernel(t, two_a, two_b, ladder, c, upper, band, out):
    # With ``upper`` only elements with composite row index <= column index
    # are produced; that triangle is closed under the generator.  Elements
    # with |n - k| or |m - j| above ``band`` are skipped: the generator
    # conserves both photon-number differences, so they stay zero.
    d = t.shape[0]
    for n in range(d):
        for m in range(d):
            k0 = max(n if upper else 0, n - band)
            for k in range(k0, min(d, n + band + 1)):
                j0 = max(m if (upper and k == n) else 0, m - band)
                j1 = min(d, m + band + 1)
                cnmk = c[n] + c[m] + c[k]
                for j in range(j0, j1):
                    out[n, m, k, j] = -(cnmk + c[j]) * t[n, m, k, j]
                if n < d - 1 and k < d - 1:
                    w = two_a * ladder[n, k]
                    for j in range(j0, j1):
                        out[n, m, k, j] += w * t[n + 1, m, k + 1, j]
                if n > 0 and k > 0 and two_b != 0.0:
                    w = two_b * ladder[n - 1, k - 1]
                    for j in range(j0, j1):
                        out[n, m, k, j] += w * t[n - 1, m, k - 1, j]
                if m < d - 1:
                    for j in range(j0, min(j1, d - 1)):
                        out[n, m, k, j] += two_a * ladder[m, j] * t[n, m + 1, k, j + 1]
                if m > 0 and two_b != 0.0:
                    for j in range(max(j0, 1), j1):
                        out[n, m, k, j] += two_b * ladder[m - 1, j - 1] * t[n, m - 1, k, j - 1]
    return out


def _rhs_tensor(t: np.ndarray, A: float, B: float, out: np.ndarray | None = None,
                upper: bool = False, band: int | None = None) -> np.ndarray:
    d = t.shape[0]
    ladder, c = _rhs_tables(d, A, B)
    if out is None:
        out = np.zeros_like(t, dtype=complex)
    return _rhs_kernel(np.ascontiguousarray(t, dtype=complex), 2 * A, 2 * B, ladder, c,
                       upper, d if band is None else band, out)


def band_segments(d: int, band: int) -> np.ndarray:
    """Flat ``[start, stop)`` runs of the upper triangle of a two-mode
    ``d^2 x d^2`` matrix restricted to ``|n - k|, |m - j| <= band``."""
    runs = []
    for n in range(d):
        for m in range(d):
            for k in range(n, min(d, n + band + 1)):
                j0 = max(m if k == n else 0, m - band)
                j1 = min(d, m + band + 1)
                if j0 < j1:
                    start = ((n * d + m) * d + k) * d
                    runs.append((start + j0, start + j1))
    return np.array(runs, dtype=np.int64).reshape(-1, 2)


def lindblad_rhs(rho, params: ChannelParams) -> np.ndarray:
    """Time derivative of ``rho`` under both reservoirs, same shape as ``rho``.

    Ladder operators are truncated at the cutoff, so the result is exactly
    traceless but deviates from the untruncated generator on the top level.
    """
    m = _as_matrix(rho)
    d = int(round(math.sqrt(m.shape[0])))
    t = m.reshape(d, d, d, d)
    return _rhs_tensor(t, params.A, params.B).reshape(m.shape)


# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
_E = tuple(b5 - b4 for b5, b4 in zip(_B5, _B4))


@numba.njit(cache=True)
def _mirror_upper(y, side, segments):
    """Copy the conjugate of every upper-triangle entry in ``segments`` to
    its mirror position of a flat ``side x side`` matrix."""
    for s in range(segments.shape[0]):
        for i in range(segments[s, 0], segments[s, 1]):
            r, c = i // side, i % side
            if r == c:
                y[i] = y[i].real
            else:
                y[c * side + r] = np.conj(y[i])


@numba.njit(cache=True, fastmath=True)
def _combine(y, h, coeffs, ks, n_stages, segments, out):
    for s in range(segments.shape[0]):
        for i in range(segments[s, 0], segments[s, 1]):
            acc = y[i]
            for st in range(n_stages):
                acc += (h * coeffs[st]) * ks[st, i]
            out[i] = acc
    return out


@numba.njit(cache=True, fastmath=True)
def _max_abs_combo(coeffs, ks, segments):
    best = 0.0
    for s in range(segments.shape[0]):
        for i in range(segments[s, 0], segments[s, 1]):
            acc = 0j
            for st in range(ks.shape[0]):
                acc += coeffs[st] * ks[st, i]
            a = acc.real * acc.real + acc.imag * acc.imag
            if a > best:
                best = a
    return np.sqrt(best)


def integrate_dp45(f, y0: np.ndarray, t_end, tol: float, h0: float | None = None,
                   hermitian: bool = False, max_steps: int = 1_000_000,
                   segments: np.ndarray | None = None):
    """Adaptive Dormand-Prince 5(4) for an autonomous ODE ``y' = f(y)``.

    ``f(y, out)`` writes the derivative into ``out`` (both shaped like
    ``y0``).  Accepted steps keep the max-norm local error estimate
    ``<= tol``.  ``t_end`` may be a scalar or an ascending sequence of output
    times; steps are clipped to land on each.

    With ``hermitian=True`` the state is a flattened square matrix whose
    upper triangle (row <= column) must be closed under ``f``; only that
    triangle is integrated and ``f`` need not fill the rest.  Each accepted
    step re-imposes Hermiticity: the diagonal is made real and the lower
    triangle is rebuilt as the conjugate of the upper.  ``segments``
    (``[start, stop)`` rows of flat indices) narrows the integrated entries
    further; everything outside them must stay zero under ``f``.

    Returns ``(states, accepted_steps)``.
    """
    scalar = np.ndim(t_end) == 0
    targets = [float(t_end)] if scalar else [float(x) for x in t_end]
    if any(b < a for a, b in zip(targets, targets[1:])) or (targets and targets[0] < 0):
        raise ValueError("output times must be ascending and non-negative")
    shape = y0.shape
    y = np.array(y0, dtype=complex).ravel()
    side = 0
    if hermitian:
        side = math.isqrt(y.size)
        if side * side != y.size:
            raise ValueError("hermitian mode needs a square matrix state")
        if segments is None:
            segments = np.array([(r * side + r, (r + 1) * side) for r in range(side)], dtype=np.int64)
    elif segments is None:
        segments = np.array([(0, y.size)], dtype=np.int64)
    segments = np.asarray(segments, dtype=np.int64).reshape(-1, 2)
    ks = np.zeros((7, y.size), dtype=complex)
    stage = np.zeros_like(y)
    a_rows = [np.array(row + (0.0,) * (7 - len(row))) for row in _A]
    err_c = np.array(_E)

    def g(v, out):
        f(v.reshape(shape), out.reshape(shape))

    def finish(v):
        v = v.copy()
        if hermitian:
            _mirror_upper(v, side, segments)
        return v.reshape(shape)

    g(y, ks[0])
    t = 0.0
    t_final = targets[-1] if targets else 0.0
    scale = float(np.max(np.abs(ks[0]))) if y.size else 0.0
    h = h0 if h0 is not None else (min(t_final, 0.5 * (tol / scale) ** 0.2) if scale else t_final)
    results = []
    accepted = 0
    for target in targets:
        for _ in range(max_steps):
            if t >= target:
                break
            step = min(h, target - t)
            for s in range(1, 7):
                _combine(y, step, a_rows[s], ks, s, segments, stage)
                g(stage, ks[s])
            # stage 7 is evaluated at the 5th-order solution (FSAL)
            err = step * _max_abs_combo(err_c, ks, segments)
            if err <= tol:
                y, stage = stage, y
                ks[0] = ks[6]
                if hermitian:
                    _mirror_upper(y, side, segments)
                t = target if step == target - t else t + step
                accepted += 1
            factor = 0.9 * (tol / err) ** 0.2 if err > 0 else 5.0
            if step == h or err > tol:
                h = step * min(5.0, max(0.2, factor))
            if h < 1e-14 * max(t_final, 1.0):
                raise ConvergenceError(f"step size underflow at t={t:.6g}")
        else:
            raise ConvergenceError(f"exceeded {max_steps} steps")
        results.append(finish(y))
    if scalar:
        return results[0], accepted
    return results, accepted


def suggest_cutoff(params: ChannelParams, t: float, top_level: int, tail: float = 1e-6,
                   limit: int = 400) -> int:
    """Smallest cutoff holding all but ``tail`` of the population of ``|top_level>`` at ``t``."""
    d = top_level + 1
    pops = single_mode_populations(params, t, top_level, limit)
    above = np.cumsum(pops[::-1])[::-1]
    idx = np.flatnonzero(above < tail)
    return max(d, int(idx[0]) if idx.size else limit)


def _coerce(rho0) -> TwoModeDensityMatrix:
    if isinstance(rho0, TwoModeDensityMatrix):
        return rho0
    m = np.asarray(rho0, dtype=complex)
    return TwoModeDensityMatrix(int(round(math.sqrt(m.shape[0]))), m)


def _single_mode_ode(params: ChannelParams, times: tuple[float, ...], top_level: int,
                     d: int, tol: float) -> list[np.ndarray]:
    a = annihilation_matrix(d)
    ad = a.T
    num = ad @ a
    anti = a @ ad
    A, B = params.A, params.B

    def f(r, out):
        out[:] = (A * (2 * a @ r @ ad - num @ r - r @ num)
                  + B * (2 * ad @ r @ a - anti @ r - r @ anti))

    r0 = np.zeros((d, d), dtype=complex)
    r0[top_level, top_level] = 1.0
    states, _ = integrate_dp45(f, r0, list(times), tol)
    return states


@functools.lru_cache(maxsize=64)
def ode_work_cutoff(params: ChannelParams, times: tuple[float, ...], top_level: int, dim: int,
                    target: float = 1e-6, probe: int = 6, limit: int = 120) -> int:
    """Working cutoff for :func:`evolve_ode` chosen by self-consistency.

    A single mode prepared in ``|top_level>`` is integrated at cutoffs ``D``
    and ``D + probe``; the smallest ``D >= dim`` (in steps of 2) whose
    trace distance on the first ``dim`` levels stays below ``target`` at all
    ``times`` is returned.
    """
    if params.B == 0:
        # pure loss never populates levels above the input
        return max(dim, top_level + 1)
    tol = 1e-12
    cache: dict[int, list[np.ndarray]] = {}

    def run(d):
        if d not in cache:
            cache[d] = _single_mode_ode(params, times, top_level, d, tol)
        return cache[d]

    d = max(dim, top_level + 2)
    while d < limit:
        err = max(
            0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(x[:dim, :dim] - y[:dim, :dim]))))
            for x, y in zip(run(d), run(d + probe))
        )
        if err <= target:
            return d
        d += 2
    return limit


def evolve_ode_path(rho0, params: ChannelParams, times, tol: float = 1e-9,
                    dim: int | None = None, work_dim: int | None = None) -> list[EvolutionResult]:
    """Integrate the master equation once through ascending ``times``.

    The state is padded to ``work_dim`` levels for integration and truncated
    back to ``dim`` (default: the input cutoff) on output.  ``work_dim``
    defaults to :func:`ode_work_cutoff`, which bounds the truncation error
    seen on the reported block.  Only the upper triangle of the density
    matrix is integrated, and only within the band of photon-number
    differences present in the input; Hermiticity is restored after every
    step.
    """
    rho0 = _coerce(rho0)
    times = [float(x) for x in times]
    if any(not x >= 0 for x in times):
        raise ValueError("times must be >= 0")
    dim = dim or rho0.d
    positive = tuple(x for x in times if x > 0)
    if work_dim is None:
        work_dim = ode_work_cutoff(params, positive, rho0.d - 1, dim) if positive else dim
    work_dim = max(work_dim, dim)
    y0 = rho0.resized(work_dim).tensor().copy()
    A, B = params.A, params.B
    band = rho0.d - 1
    states, steps = integrate_dp45(lambda y, out: _rhs_tensor(y, A, B, out, upper=True, band=band),
                                   y0, times, tol, hermitian=True,
                                   segments=band_segments(work_dim, band))
    log.debug("evolve_ode: %d steps at work_dim=%d", steps, work_dim)
    results = []
    for x, y in zip(times, states):
        out = TwoModeDensityMatrix.from_tensor(y[:dim, :dim, :dim, :dim])
        results.append(EvolutionResult(out, params.gamma * x, max(0.0, rho0.trace - out.trace)))
    return results


def evolve_ode(rho0, params: ChannelParams, t: float, tol: float = 1e-9,
               dim: int | None = None, work_dim: int | None = None) -> EvolutionResult:
    """``rho(t)`` by adaptive Dormand-Prince integration of :func:`lindblad_rhs`.

    See :func:`evolve_ode_path` for the cutoff handling.
    """
    if not t >= 0:
        raise ValueError(f"time must be >= 0, got {t}")
    return evolve_ode_path(rho0, params, [t], tol, dim, work_dim)[0]


# -- exact channel ---------------------------------------------------------


def _attenuator_weights(eta: float, d: int) -> np.ndarray:
    """``w[k, n] = <n-k| A_k |n>`` for the pure-loss Kraus family."""
    n = np.arange(d)[None, :]
    k = np.arange(d)[:, None]
    valid = n >= k
    nk = np.where(valid, n - k, 0)
    logw = 0.5 * (gammaln(n + 1) - gammaln(k + 1) - gammaln(nk + 1)
                  + xlogy(nk, eta) + xlogy(k, 1.0 - eta))
    return np.where(valid, np.exp(logw), 0.0)


def _amplifier_weights(gain: float, d_in: int, d_out: int) -> np.ndarray:
    """``w[k, n] = <n+k| B_k |n>`` for the quantum-limited amplifier."""
    n = np.arange(d_in)[None, :]
    k = np.arange(d_out)[:, None]
    logw = 0.5 * (gammaln(n + k + 1) - gammaln(k + 1) - gammaln(n + 1)
                  + xlogy(k, 1.0 - 1.0 / gain) - (n + 1) * math.log(gain))
    return np.where(n + k < d_out, np.exp(logw), 0.0)


def thermal_kraus(params: ChannelParams, t: float, d: int) -> tuple[np.ndarray, ...]:
    """Single-mode Kraus operators ``B_j A_k`` of the thermal channel on ``d`` levels.

    Amplifier operators that would leave the cutoff are dropped, so the set is
    complete only on levels well below ``d``.
    """
    return _thermal_kraus(params, float(t), int(d))


@functools.lru_cache(maxsize=64)
def _thermal_kraus(params: ChannelParams, t: float, d: int) -> tuple[np.ndarray, ...]:
    eta, gain = params.attenuator_amplifier(t)
    if not 0.0 < eta * gain <= 1.0:
        raise ValueError(f"invalid transmissivity {eta * gain}")
    att = _attenuator_weights(eta, d)
    amp = _amplifier_weights(gain, d, d)
    att_ops = [np.diag(att[k, k:], k=k) for k in range(d) if np.any(att[k])]
    amp_ops = [np.diag(amp[j, : d - j], k=-j) for j in range(d) if np.any(amp[j])]
    ops = []
    for a in att_ops:
        for b in amp_ops:
            kraus = b @ a
            if np.any(kraus):
                kraus.setflags(write=False)
                ops.append(kraus)
    return tuple(ops)


def _apply_down(t: np.ndarray, w: np.ndarray, d_out: int) -> np.ndarray:
    """Kraus family lowering axis-0/2 occupation by ``k`` with weights ``w[k, n]``."""
    d_in = t.shape[0]
    out = np.zeros((d_out, t.shape[1], d_out, t.shape[3]), dtype=complex)
    for k in range(d_in):
        hi = min(d_in, d_out + k)
        if hi <= k:
            break
        wk = w[k, k:hi]
        out[: hi - k, :, : hi - k, :] += (
            wk[:, None, None, None] * wk[None, None, :, None] * t[k:hi, :, k:hi, :]
        )
    return out


def _apply_up(t: np.ndarray, w: np.ndarray, d_out: int) -> np.ndarray:
    """Kraus family raising axis-0/2 occupation by ``k`` with weights ``w[k, n]``."""
    d_in = t.shape[0]
    out = np.zeros((d_out, t.shape[1], d_out, t.shape[3]), dtype=complex)
    for k in range(d_out):
        n = min(d_in, d_out - k)
        if n <= 0:
            break
        wk = w[k, :n]
        out[k : k + n, :, k : k + n, :] += (
            wk[:, None, None, None] * wk[None, None, :, None] * t[:n, :, :n, :]
        )
    return out


def _channel_on_first_mode(t: np.ndarray, eta: float, gain: float, d_out: int) -> np.ndarray:
    d_in = t.shape[0]
    if eta < 1.0:
        t = _apply_down(t, _attenuator_weights(eta, d_in), min(d_in, d_out))
    else:
        t = t[:d_out, :, :d_out, :]
    if gain > 1.0:
        t = _apply_up(t, _amplifier_weights(gain, t.shape[0], d_out), d_out)
    elif t.shape[0] < d_out:
        pad = d_out - t.shape[0]
        t = np.pad(t, ((0, pad), (0, 0), (0, pad), (0, 0)))
    return t


def apply_thermal_channel(tensor: np.ndarray, params: ChannelParams, t: float, dim: int) -> np.ndarray:
    """Apply the channel to both modes of ``T[n, m, n', m']`` returning ``dim`` levels."""
    eta, gain = params.attenuator_amplifier(t)
    out = _channel_on_first_mode(tensor, eta, gain, dim)
    out = out.transpose(1, 0, 3, 2)
    out = _channel_on_first_mode(out, eta, gain, dim)
    return out.transpose(1, 0, 3, 2)


def evolve_exact(rho0, params: ChannelParams, t: float, dim: int | None = None) -> EvolutionResult:
    """Exact ``rho(t)`` on ``dim`` levels per mode (default: the input cutoff).

    Elements on the returned levels carry no truncation error provided the
    input is fully represented; mass above ``dim`` shows up as ``trace_leak``.
    """
    rho0 = _coerce(rho0)
    dim = dim or rho0.d
    out = apply_thermal_channel(rho0.tensor(), params, t, dim)
    rho = TwoModeDensityMatrix.from_tensor(0.5 * (out + out.transpose(2, 3, 0, 1).conj()))
    return EvolutionResult(rho, params.gamma * t, max(0.0, rho0.trace - rho.trace))


def single_mode_channel(rho: np.ndarray, params: ChannelParams, t: float, dim: int | None = None) -> np.ndarray:
    """Thermal channel on a single-mode ``d x d`` matrix."""
    rho = np.asarray(rho, dtype=complex)
    dim = dim or rho.shape[0]
    eta, gain = params.attenuator_amplifier(t)
    t4 = rho[:, None, :, None]
    return _channel_on_first_mode(t4, eta, gain, dim)[:, 0, :, 0]


def single_mode_populations(params: ChannelParams, t: float, n0: int, dim: int) -> np.ndarray:
    """Photon-number distribution after the channel acts on ``|n0><n0|``."""
    rho = np.zeros((n0 + 1, n0 + 1))
    rho[n0, n0] = 1.0
    return np.real(np.diag(single_mode_channel(rho, params, t, dim)))
