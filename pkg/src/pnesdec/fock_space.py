"""Truncated two-mode Fock space.

Basis kets ``|n, m>`` (mode 1 occupation ``n``, mode 2 occupation ``m``) are
flattened with the composite index ``i = n * d + m``.  A two-mode operator is
therefore a ``(d*d, d*d)`` matrix, and ``matrix.reshape(d, d, d, d)`` gives
the tensor ``T[n, m, n', m'] = <n, m| O |n', m'>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

HERMITIAN_ATOL = 1e-10


def annihilation_matrix(d: int) -> np.ndarray:
    """Single-mode annihilation operator truncated to ``d`` levels."""
    if d < 2:
        raise ValueError(f"cutoff must be >= 2, got {d}")
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1)


def cutoff_of(matrix: np.ndarray) -> int:
    """Per-mode cutoff ``d`` of a ``(d*d, d*d)`` two-mode matrix."""
    n = matrix.shape[0]
    d = math.isqrt(n)
    if d * d != n or matrix.shape != (n, n):
        raise ValueError(f"matrix of shape {matrix.shape} is not a two-mode operator")
    return d


@dataclass(frozen=True)
class TwoModeDensityMatrix:
    """Two-mode density matrix on ``d`` Fock levels per mode.

    The trace may be below one when probability has leaked past the cutoff.
    """

    d: int
    elements: np.ndarray

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"cutoff must be >= 2, got {self.d}")
        elements = np.asarray(self.elements, dtype=complex)
        if elements.shape != (self.d**2, self.d**2):
            raise ValueError(
                f"expected shape {(self.d**2, self.d**2)}, got {elements.shape}"
            )
        elements.setflags(write=False)
        object.__setattr__(self, "elements", elements)

    @classmethod
    def from_tensor(cls, tensor: np.ndarray) -> TwoModeDensityMatrix:
        d = tensor.shape[0]
        return cls(d, np.asarray(tensor).reshape(d * d, d * d))

    def tensor(self) -> np.ndarray:
        """View as ``T[n, m, n', m']``."""
        return self.elements.reshape(self.d, self.d, self.d, self.d)

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.elements)))

    def element(self, bra: tuple[int, int], ket: tuple[int, int]) -> complex:
        """``<bra| rho |ket>`` for kets given as occupation pairs."""
        return complex(self.elements[bra[0] * self.d + bra[1], ket[0] * self.d + ket[1]])

    def resized(self, d: int) -> TwoModeDensityMatrix:
        """Zero-pad or truncate to ``d`` levels per mode."""
        out = np.zeros((d, d, d, d), dtype=complex)
        k = min(d, self.d)
        out[:k, :k, :k, :k] = self.tensor()[:k, :k, :k, :k]
        return TwoModeDensityMatrix.from_tensor(out)


def pure_pnes_density(psi, d: int | None = None, atol: float = 1e-9) -> TwoModeDensityMatrix:
    """Projector onto ``sum_n psi[n] |n, n>``.

    Coefficients beyond the cutoff must vanish; the input must be normalized.
    """
    psi = np.asarray(getattr(psi, "psi", psi), dtype=complex)
    if d is None:
        d = max(len(psi), 2)
    norm = float(np.sum(np.abs(psi) ** 2))
    if abs(norm - 1.0) > atol:
        raise ValueError(f"PNES coefficients are not normalized (norm^2 = {norm!r})")
    if len(psi) > d and np.any(psi[d:] != 0):
        raise ValueError(f"nonzero coefficients beyond cutoff d={d}")
    ket = np.zeros(d * d, dtype=complex)
    k = min(d, len(psi))
    ket[np.arange(k) * (d + 1)] = psi[:k]
    return TwoModeDensityMatrix(d, np.outer(ket, ket.conj()))


def partial_transpose(rho, mode: int = 2) -> np.ndarray:
    """Partial transpose on ``mode`` (1 or 2) of a two-mode matrix."""
    m = np.asarray(getattr(rho, "elements", rho))
    d = cutoff_of(m)
    t = m.reshape(d, d, d, d)
    if mode == 2:
        t = t.transpose(0, 3, 2, 1)
    elif mode == 1:
        t = t.transpose(2, 1, 0, 3)
    else:
        raise ValueError(f"mode must be 1 or 2, got {mode}")
    return t.reshape(d * d, d * d)


def partial_trace(rho, mode: int = 2) -> np.ndarray:
    """Trace out ``mode`` (1 or 2), returning the reduced state of the other."""
    m = np.asarray(getattr(rho, "elements", rho))
    d = cutoff_of(m)
    t = m.reshape(d, d, d, d)
    if mode == 2:
        return np.einsum("nmkm->nk", t)
    if mode == 1:
        return np.einsum("nmnk->mk", t)
    raise ValueError(f"mode must be 1 or 2, got {mode}")


def hermitian_eigenvalues(matrix: np.ndarray, atol: float = HERMITIAN_ATOL) -> np.ndarray:
    """Ascending real spectrum of a Hermitian matrix.

    Raises ``ValueError`` if ``matrix`` deviates from its conjugate transpose
    by more than ``atol``.
    """
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    dev = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if dev > atol:
        raise ValueError(f"matrix is not Hermitian (max deviation {dev:.3g})")
    return np.linalg.eigvalsh(0.5 * (m + m.conj().T))


def square_block(n_tr: int, d: int) -> np.ndarray:
    """Composite indices of kets ``|n, m>`` with ``n, m < n_tr``."""
    if n_tr > d:
        raise ValueError(f"truncation {n_tr} exceeds cutoff {d}")
    if n_tr < 1:
        raise ValueError(f"truncation must be positive, got {n_tr}")
    n, m = np.divmod(np.arange(d * d), d)
    return np.flatnonzero((n < n_tr) & (m < n_tr))


def total_photon_block(n_tr: int, d: int) -> np.ndarray:
    """Composite indices of kets with ``n + m < n_tr`` (exchange-symmetric block)."""
    if n_tr > d:
        raise ValueError(f"truncation {n_tr} exceeds cutoff {d}")
    n, m = np.divmod(np.arange(d * d), d)
    return np.flatnonzero(n + m < n_tr)


def ket_block(kets, d: int) -> np.ndarray:
    """Composite indices of an explicit list of ``(n, m)`` kets."""
    return np.array([n * d + m for n, m in kets], dtype=int)


def restrict_subspace(matrix: np.ndarray, n_tr: int) -> np.ndarray:
    """Principal submatrix on kets ``|n, m>`` with ``n, m < n_tr``."""
    m = np.asarray(matrix)
    idx = square_block(n_tr, cutoff_of(m))
    return m[np.ix_(idx, idx)]


def restrict_indices(matrix: np.ndarray, idx) -> np.ndarray:
    m = np.asarray(matrix)
    return m[np.ix_(idx, idx)]


def trace_distance(a, b) -> float:
    """Half the trace norm of ``a - b``."""
    a = np.asarray(getattr(a, "elements", a))
    b = np.asarray(getattr(b, "elements", b))
    diff = a - b
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T)))))
