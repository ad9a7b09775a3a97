"""Sample martingale difference divergence and correlation.

All statistics are V-statistics (the ``i == j`` terms are kept and sums are
divided by ``n**2``).  For a scalar conditioner the divergence is evaluated in
``O(n log n)`` by sorting the conditioner; the gap between consecutive sorted
values is weighted by the squared partial sum of the centered response, which
also makes the fast path non-negative by construction.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import DegenerateDenominator, MicaError

EPS_DEN = 1e-12


class LaggedPair(NamedTuple):
    response: np.ndarray
    conditioner: np.ndarray
    lag: int


def _as_2d(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise MicaError(f"{name} must be 1-D or 2-D, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise MicaError(f"{name} needs at least 2 observations, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise MicaError(f"{name} contains non-finite values")
    return arr


def _check_pair(v, u) -> tuple[np.ndarray, np.ndarray]:
    v2 = _as_2d(v, "v")
    u2 = _as_2d(u, "u")
    if v2.shape[0] != u2.shape[0]:
        raise MicaError(f"row count mismatch: v has {v2.shape[0]}, u has {u2.shape[0]}")
    return v2, u2


def gap_statistic(c: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Return ``-sum_{s,t} c_s c_t |u_s - u_t|`` for every column of ``c``.

    ``c`` is ``(n, k)`` and must have (numerically) zero column sums; ``u`` is a
    length-``n`` vector.  Uses ``|u_s - u_t| = sum of sorted gaps between them``
    so that the double sum collapses to ``2 * sum_k gap_k * L_k * R_k`` with
    prefix sums ``L`` and suffix sums ``R`` of ``c`` in sorted order.
    """
    order = np.argsort(u, kind="stable")
    us = u[order]
    cs = c[order]
    gaps = np.diff(us)
    left = np.cumsum(cs[:-1], axis=0)
    right = np.cumsum(cs[:0:-1], axis=0)[::-1]
    return -2.0 * (gaps @ (left * right))


def mdd_sq_naive(v, u) -> float:
    """Brute-force double loop over all ``(i, j)`` pairs.  Test oracle only."""
    v2, u2 = _check_pair(v, u)
    n = v2.shape[0]
    c = v2 - v2.mean(axis=0)
    total = 0.0
    for i in range(n):
        for j in range(n):
            total += float(c[i] @ c[j]) * float(np.linalg.norm(u2[i] - u2[j]))
    return -total / n**2


def mdd_sq(v, u) -> float:
    """Sample MDD^2(V | U).

    Parameters
    ----------
    v : array_like, shape (n,) or (n, r)
        Response.  For a vector response the statistic is summed over columns.
    u : array_like, shape (n,) or (n, q)
        Conditioning variable.

    Returns
    -------
    float
        ``-(1/n^2) sum_{i,j} (V_i - Vbar)^T (V_j - Vbar) ||U_i - U_j||``.
    """
    v2, u2 = _check_pair(v, u)
    n = v2.shape[0]
    c = v2 - v2.mean(axis=0)
    if u2.shape[1] == 1:
        # collapse tied conditioner values first: each tie group is summed in
        # index order, so negating u exactly reverses the sequence below
        us, inverse = np.unique(u2[:, 0], return_inverse=True)
        cs = np.column_stack(
            [np.bincount(inverse, weights=c[:, k], minlength=us.size) for k in range(c.shape[1])]
        )
        gaps = np.diff(us)
        left = np.cumsum(cs[:-1], axis=0)
        right = np.cumsum(cs[:0:-1], axis=0)[::-1]
        terms = (gaps[:, None] * (left * right)).ravel()
        # fsum is exactly rounded, so the result does not depend on sort direction
        return -2.0 * math.fsum(terms) / n**2
    dist = cdist(u2, u2)
    return -float(np.sum((c @ c.T) * dist)) / n**2


def _double_centered(d: np.ndarray) -> np.ndarray:
    return d - d.mean(axis=0) - d.mean(axis=1)[:, None] + d.mean()


def dvar(u) -> float:
    """Sample distance variance ``(1/n^2) sum B_ij^2``.

    For a scalar sample the double-centered sum of squares is expanded as
    ``sum a_ij^2 - 2 n sum_i abar_i^2 + n^2 abar^2`` with row sums of
    ``|u_i - u_j|`` taken from sorted prefix sums.
    """
    u2 = _as_2d(u, "u")
    n = u2.shape[0]
    if u2.shape[1] == 1:
        x = u2[:, 0] - u2[:, 0].mean()
        order = np.argsort(x, kind="stable")
        xs = x[order]
        k = np.arange(n)
        prefix = np.concatenate(([0.0], np.cumsum(xs)[:-1]))
        total = xs.sum()
        # sum_j |x_i - x_j| for the i-th sorted point
        rows = xs * k - prefix + (total - prefix - xs) - xs * (n - 1 - k)
        sum_sq = 2.0 * n * np.sum(x * x) - 2.0 * total**2
        rbar = rows / n
        val = (sum_sq - 2.0 * n * np.sum(rbar**2) + n**2 * rbar.mean() ** 2) / n**2
        return max(float(val), 0.0)
    b = _double_centered(cdist(u2, u2))
    return float(np.sum(b * b)) / n**2


def tr_var_sq(v) -> float:
    """``tr(var(V)^2)`` with the biased sample covariance."""
    v2 = _as_2d(v, "v")
    c = v2 - v2.mean(axis=0)
    cov = c.T @ c / v2.shape[0]
    return float(np.sum(cov * cov))


def tr_var_sq_naive(v) -> float:
    """Double-centering of ``a_ij = ||V_i - V_j||^2 / 2``.  Test oracle only."""
    v2 = _as_2d(v, "v")
    n = v2.shape[0]
    a = 0.5 * cdist(v2, v2, "sqeuclidean")
    big_a = _double_centered(a)
    return float(np.sum(big_a * big_a)) / n**2


def mdc_sq(v, u, eps_den: float = EPS_DEN) -> float:
    """Sample MDC^2(V | U); raw value, never clamped to [0, 1]."""
    v2, u2 = _check_pair(v, u)
    tv = tr_var_sq(v2)
    du = dvar(u2)
    if tv <= eps_den or du <= eps_den:
        raise DegenerateDenominator(
            f"MDC denominator degenerate: tr(var(V)^2)={tv:.3g}, dvar(U)={du:.3g}"
        )
    return mdd_sq(v2, u2) / (math.sqrt(tv) * math.sqrt(du))


def make_lagged(x, response_col: int, conditioner_cols, h: int) -> LaggedPair:
    """Align ``x[t, response_col]`` with ``x[t - h, conditioner_cols]``."""
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    cols = np.atleast_1d(np.asarray(conditioner_cols, dtype=int))
    if cols.size == 0:
        raise MicaError("empty conditioner set")
    if h < 0 or h > n - 2:
        raise MicaError(f"lag {h} leaves fewer than 2 aligned rows (n={n})")
    if not 0 <= response_col < p or np.any((cols < 0) | (cols >= p)):
        raise MicaError("column index out of range")
    return LaggedPair(x[h:, response_col], x[: n - h][:, cols], h)
