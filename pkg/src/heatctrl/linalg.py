"""Dense matrix algebra for the structural theory of coupled pairs (A, B).

Everything here lives at the matrix level: exponentials, tolerance-based
ranks, the controllability decomposition, and the two structural numbers
attached to a pair --- the half-period window ``d_A`` derived from the
imaginary parts of the spectrum of ``A``, and the best single-column
controllability rank ``q_{A,B}``.

Matrices are small (n <= ~8); all ranks are numerical ranks with a
documented singular-value cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

#: Singular values below RANK_RTOL * sigma_max are treated as zero.
RANK_RTOL = 1e-10

#: Relative tolerance scale for deciding that an eigenvalue is real.
IMAG_RTOL = 1e-9


def _as_matrix(value, name):
    arr = np.array(value, dtype=float, copy=True)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-d matrix, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must have finite entries")
    return arr


@dataclass(frozen=True)
class ControlPair:
    """A coupling matrix ``A`` (n x n) and a nonzero input matrix ``B`` (n x m)."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        B = _as_matrix(self.B, "B")
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise ValueError(
                f"B must have {A.shape[0]} rows to match A, got shape {B.shape}"
            )
        if not np.any(B):
            raise ValueError("B must be nonzero")
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class KalmanDecomposition:
    """Orthogonal change of basis exhibiting the controllable subspace.

    ``P`` is orthogonal (``P.T == P^{-1}``); its first ``k`` columns span the
    controllable subspace.  In the new basis::

        P^T A P = [[A1, A2],    P^T B = [[B1],
                   [ 0, A3]]             [ 0]]

    with ``(A1, B1)`` controllable of rank ``k``.  ``A2``/``A3`` are ``None``
    when ``k == n`` (the blocks do not exist).
    """

    P: np.ndarray
    A1: np.ndarray
    A2: np.ndarray | None
    A3: np.ndarray | None
    B1: np.ndarray
    k: int

    @property
    def n(self) -> int:
        return self.P.shape[0]

    def block_a(self) -> np.ndarray:
        """Assemble the block upper-triangular form of ``A`` (zeroed lower block)."""
        if self.k == self.n:
            return np.array(self.A1)
        out = np.zeros((self.n, self.n))
        out[: self.k, : self.k] = self.A1
        out[: self.k, self.k :] = self.A2
        out[self.k :, self.k :] = self.A3
        return out

    def stacked_b(self) -> np.ndarray:
        """Assemble ``(B1; 0)``."""
        out = np.zeros((self.n, self.B1.shape[1]))
        out[: self.k] = self.B1
        return out

    def reconstruct(self) -> tuple[np.ndarray, np.ndarray]:
        """Map the block form back to the original basis: ``(P A_blk P^T, P B_blk)``."""
        return self.P @ self.block_a() @ self.P.T, self.P @ self.stacked_b()


def mat_exp(M, t: float = 1.0) -> np.ndarray:
    """Matrix exponential ``e^{t M}``.

    Uses the scaling-and-squaring Pade implementation from scipy behind a
    validated surface.

    Parameters
    ----------
    M : array_like, square
    t : float, finite scalar

    Returns
    -------
    ndarray of the same shape as ``M``.
    """
    arr = _as_matrix(M, "M")
    if arr.shape[0] != arr.shape[1]:
        raise ValueError(f"M must be square, got shape {arr.shape}")
    t = float(t)
    if not math.isfinite(t):
        raise ValueError(f"t must be finite, got {t}")
    return scipy.linalg.expm(t * arr)


def numerical_rank(M: np.ndarray, rtol: float = RANK_RTOL) -> int:
    """Count singular values >= rtol * sigma_max."""
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.count_nonzero(sv >= rtol * sv[0]))


def controllability_matrix(pair: ControlPair) -> np.ndarray:
    """The n x (n m) block matrix ``(B, AB, ..., A^{n-1} B)``."""
    blocks = [pair.B]
    for _ in range(pair.n - 1):
        blocks.append(pair.A @ blocks[-1])
    return np.hstack(blocks)


def kalman_rank(pair: ControlPair, rtol: float = RANK_RTOL) -> int:
    """Numerical rank of ``(B, AB, ..., A^{n-1} B)``."""
    return numerical_rank(controllability_matrix(pair), rtol)


def compute_dA(pair: ControlPair, imag_rtol: float = IMAG_RTOL) -> float:
    """Minimal ``pi / |Im(lambda)|`` over the spectrum of ``A``.

    Returns ``math.inf`` when every eigenvalue is real (imaginary parts below
    ``imag_rtol * (1 + ||A||_2)``, which absorbs the conjugate-pair noise a
    real dense solver produces).
    """
    eigs = np.linalg.eigvals(pair.A)
    tol = imag_rtol * (1.0 + np.linalg.norm(pair.A, 2))
    imag = np.abs(eigs.imag)
    mask = imag > tol
    if not np.any(mask):
        return math.inf
    return float(np.min(np.pi / imag[mask]))


def compute_qAB(pair: ControlPair, rtol: float = RANK_RTOL) -> int:
    """Best single-column controllability rank.

    Maximum over columns ``b`` of ``B`` of the numerical rank of
    ``(b, Ab, ..., A^{n-1} b)``.  In ``[1, n]`` whenever ``B != 0``.
    """
    best = 0
    for j in range(pair.m):
        col = pair.B[:, j : j + 1]
        if not np.any(col):
            continue
        sub = ControlPair(pair.A, col)
        best = max(best, kalman_rank(sub, rtol))
    return best


def kalman_decompose(pair: ControlPair, rtol: float = RANK_RTOL) -> KalmanDecomposition:
    """Controllability decomposition by an orthogonal change of basis.

    An orthonormal basis of the column span of the controllability matrix is
    extended to an orthonormal basis of R^n by a QR factorization of
    ``[range_basis | I]`` (deterministic column order, so ``P`` is
    reproducible across runs).
    """
    n = pair.n
    ctrb = controllability_matrix(pair)
    u, sv, _ = np.linalg.svd(ctrb)
    k = int(np.count_nonzero(sv >= rtol * sv[0])) if sv[0] > 0 else 0
    basis = u[:, :k]
    if k == n:
        P = basis
    else:
        q, _ = np.linalg.qr(np.hstack([basis, np.eye(n)]))
        P = q[:, :n]
    T = P.T @ pair.A @ P
    Bt = P.T @ pair.B
    if k == n:
        return KalmanDecomposition(P=P, A1=T, A2=None, A3=None, B1=Bt, k=k)
    return KalmanDecomposition(
        P=P,
        A1=T[:k, :k],
        A2=T[:k, k:],
        A3=T[k:, k:],
        B1=Bt[:k],
        k=k,
    )


def sampled_controllability_matrix(pair: ControlPair, times) -> np.ndarray:
    """Horizontally stacked blocks ``(e^{A t_1} B, ..., e^{A t_p} B)``."""
    ts = np.asarray(times, dtype=float)
    if ts.ndim != 1 or ts.size < 1:
        raise ValueError("times must be a nonempty 1-d sequence")
    if np.any(np.diff(ts) <= 0):
        raise ValueError("times must be strictly increasing")
    blocks = [mat_exp(pair.A, t) @ pair.B for t in ts]
    return np.hstack(blocks)


def sampled_kalman_rank(pair: ControlPair, times, rtol: float = RANK_RTOL) -> int:
    """Numerical rank of the sampled block matrix over increasing times.

    Over any strictly increasing family whose span stays below ``d_A``
    and whose length is at least ``q_{A,B}``, this equals ``kalman_rank``;
    the rotation pair sampled at spacing exactly pi shows the window
    restriction is sharp.
    """
    return numerical_rank(sampled_controllability_matrix(pair, times), rtol)
