"""Orthogonal matrices: Givens composition, Haar sampling, Cayley retraction,
and distances that ignore signed permutations (columns) or block rotations.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import MicaError

ORTHO_TOL = 1e-8
REPAIR_TOL = 1e-6
ROUNDING_FLOOR = 1e-14  # distances below this are reported as exactly 0


@dataclass(frozen=True)
class Alignment:
    """Column ``i`` of ``b`` is matched to column ``permutation[i]`` of ``c``,
    and ``signs[i] * c[:, permutation[i]]`` has a non-negative inner product
    with ``b[:, i]``."""

    permutation: np.ndarray
    signs: np.ndarray
    score: float

    def apply(self, c: np.ndarray) -> np.ndarray:
        return c[:, self.permutation] * self.signs


def orthogonality_error(q: np.ndarray) -> float:
    q = np.asarray(q, dtype=float)
    return float(np.max(np.abs(q.T @ q - np.eye(q.shape[1]))))


def reorthonormalize(q: np.ndarray) -> np.ndarray:
    """QR with the diagonal of R made positive, so a nearly-orthonormal input
    moves as little as possible."""
    qq, r = np.linalg.qr(q)
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    return qq * d


def as_ortho(q, tol: float = ORTHO_TOL, repair: float = REPAIR_TOL) -> np.ndarray:
    """Validate an orthonormal-column matrix, repairing small drift."""
    q = np.array(q, dtype=float)
    if q.ndim != 2 or q.shape[0] < q.shape[1]:
        raise MicaError(f"expected a p x k matrix with k <= p, got shape {q.shape}")
    err = orthogonality_error(q)
    if err <= tol:
        return q
    if err <= repair:
        return reorthonormalize(q)
    raise MicaError(f"matrix is not orthonormal (max |Q'Q - I| = {err:.3g})")


def n_angles(p: int) -> int:
    return p * (p - 1) // 2


def angle_pairs(p: int) -> list[tuple[int, int]]:
    """Lexicographic (i, j), i < j, matching the angle vector layout."""
    return list(combinations(range(p), 2))


def givens_compose(theta, p: int | None = None) -> np.ndarray:
    """Product of Givens rotations over (0,1), (0,2), ..., (p-2,p-1), left to right.

    Each factor is the identity with ``cos`` at (i,i) and (j,j), ``sin`` at
    (i,j) and ``-sin`` at (j,i).
    """
    theta = np.asarray(theta, dtype=float).ravel()
    if p is None:
        p = int(round((1 + np.sqrt(1 + 8 * theta.size)) / 2))
    if theta.size != n_angles(p):
        raise MicaError(f"expected {n_angles(p)} angles for p={p}, got {theta.size}")
    q = np.eye(p)
    for (i, j), t in zip(angle_pairs(p), theta):
        c, s = np.cos(t), np.sin(t)
        # right-multiplying by the rotation touches columns i and j only
        qi = q[:, i].copy()
        qj = q[:, j]
        q[:, i] = c * qi - s * qj
        q[:, j] = s * qi + c * qj
    return q


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def haar_random(p: int, seed=None) -> np.ndarray:
    """Haar-distributed orthogonal matrix via sign-corrected QR of a Gaussian matrix."""
    if p < 1:
        raise MicaError("p must be >= 1")
    z = _rng(seed).standard_normal((p, p))
    q, r = np.linalg.qr(z)
    return q * np.sign(np.diag(r))


def cayley_step(q: np.ndarray, euclid_grad: np.ndarray, tau: float) -> np.ndarray:
    """One Cayley-transform retraction step along ``-W Q``.

    ``W = G Q^T - Q G^T``; returns ``(I + tau/2 W)^{-1} (I - tau/2 W) Q``.
    Raises ``numpy.linalg.LinAlgError`` if ``I + tau/2 W`` is singular.
    """
    if tau <= 0:
        raise MicaError("tau must be positive")
    w = euclid_grad @ q.T - q @ euclid_grad.T
    return cayley_apply(q, w, tau)


def cayley_apply(q: np.ndarray, w: np.ndarray, tau: float) -> np.ndarray:
    p = q.shape[0]
    half = 0.5 * tau * w
    eye = np.eye(p)
    lhs = eye + half
    if np.linalg.cond(lhs) > 1e12:
        raise np.linalg.LinAlgError("I + tau/2 W is singular; reduce tau")
    return np.linalg.solve(lhs, (eye - half) @ q)


def align_columns(b: np.ndarray, c: np.ndarray) -> Alignment:
    """Signed permutation of ``c``'s columns maximizing ``sum_i |b_i^T c_pi(i)|``."""
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    if b.shape != c.shape:
        raise MicaError(f"shape mismatch {b.shape} vs {c.shape}")
    inner = b.T @ c
    score = np.abs(inner)
    rows, cols = linear_sum_assignment(score, maximize=True)
    perm = cols[np.argsort(rows)]
    matched = inner[np.arange(b.shape[1]), perm]
    signs = np.where(matched < 0, -1.0, 1.0)
    return Alignment(perm, signs, float(np.abs(matched).sum()))


def d_distance_scaled(b: np.ndarray, c: np.ndarray) -> float:
    """``1 - (1/p) sum_i |b_i^T c_i|`` after optimal column alignment, in [0, 1]."""
    al = align_columns(b, c)
    p = np.asarray(b).shape[1]
    return _clip_unit(1.0 - al.score / p)


def _clip_unit(v: float) -> float:
    if v < ROUNDING_FLOOR:
        return 0.0
    return float(min(v, 1.0))


def split_blocks(a: np.ndarray, sizes: Sequence[int]) -> list[np.ndarray]:
    """Cut ``a`` into consecutive column blocks of the given sizes."""
    edges = np.cumsum([0, *sizes])
    if edges[-1] != a.shape[1]:
        raise MicaError(f"block sizes {tuple(sizes)} do not sum to {a.shape[1]}")
    return [a[:, edges[k] : edges[k + 1]] for k in range(len(sizes))]


def align_blocks(b_blocks: Sequence[np.ndarray], c_blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Match blocks of equal width maximizing the summed projector overlap.

    Returns ``sigma`` with ``b_blocks[i]`` paired to ``c_blocks[sigma[i]]``.
    """
    m = len(b_blocks)
    if len(c_blocks) != m:
        raise MicaError(f"group counts differ: {m} vs {len(c_blocks)}")
    bs = sorted(blk.shape[1] for blk in b_blocks)
    cs = sorted(blk.shape[1] for blk in c_blocks)
    if bs != cs:
        raise MicaError(f"group size multisets differ: {bs} vs {cs}")
    overlap = np.full((m, m), -1.0)
    for i, bi in enumerate(b_blocks):
        for j, cj in enumerate(c_blocks):
            if bi.shape[1] == cj.shape[1]:
                overlap[i, j] = float(np.sum((bi.T @ cj) ** 2))
    # incompatible pairs get a penalty that no compatible assignment can reach
    penalty = -(overlap.max() + 1.0) * (m + 1)
    overlap[overlap < 0] = penalty
    rows, cols = linear_sum_assignment(overlap, maximize=True)
    return cols[np.argsort(rows)]


def dtilde_distance_scaled(b_blocks: Sequence[np.ndarray], c_blocks: Sequence[np.ndarray]) -> float:
    """``max_i (1 - tr(B_i B_i^T C_i C_i^T) / p_i)`` after block alignment."""
    sigma = align_blocks(b_blocks, c_blocks)
    worst = 0.0
    for i, bi in enumerate(b_blocks):
        ci = c_blocks[sigma[i]]
        pi = bi.shape[1]
        worst = max(worst, 1.0 - float(np.sum((bi.T @ ci) ** 2)) / pi)
    return _clip_unit(worst)
