"""Cross-component MDD sums with analytic gradients, and Cayley descent.

The engine evaluates

    T(A) = sum_{h=0}^{h0} sum_{j} sum_{k not in group j} MDD^2(x_{k,t} | X^{(j)}_{t-h})

for ``X = Y A`` and a partition of the columns of ``A`` into groups, together
with dT/dA.  Singleton conditioners use the sorted-gap representation; wider
conditioners use an explicit distance matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import DegenerateProjection
from .ortho import orthogonality_error, reorthonormalize

Groups = Sequence[np.ndarray]


def singleton_groups(p: int) -> list[np.ndarray]:
    return [np.array([k]) for k in range(p)]


def check_projection(x: np.ndarray, rtol: float = 1e-12) -> None:
    scale = max(float(np.max(np.abs(x))), 1.0)
    sd = x.std(axis=0)
    bad = np.flatnonzero(sd <= rtol * scale)
    if bad.size:
        raise DegenerateProjection(f"projected components {bad.tolist()} are constant")


def _vector_lags(x, y, cols, gj, h0, want_grad):
    """Responses ``cols`` against the vector conditioner ``gj``, all lags.

    The lag-h conditioner distances are the leading block of the lag-0
    distance matrix, so responses for every lag are zero-padded to ``n`` rows
    and pushed through a single distance matrix.
    """
    n = x.shape[0]
    k = cols.size
    u = x[:, gj]
    dist = cdist(u, u)
    cpad = np.zeros((n, (h0 + 1) * k))
    scales = np.empty((h0 + 1) * k)
    for h in range(h0 + 1):
        xr = x[h:, cols]
        cpad[: n - h, h * k : (h + 1) * k] = xr - xr.mean(axis=0)
        scales[h * k : (h + 1) * k] = -1.0 / (n - h) ** 2
    dc = dist @ cpad
    value = float(np.sum(scales * np.sum(cpad * dc, axis=0)))
    if not want_grad:
        return value, None
    grad = np.zeros((y.shape[1], x.shape[1]))
    for h in range(h0 + 1):
        yr = y[h:] - y[h:].mean(axis=0)
        grad[:, cols] += (-2.0 / (n - h) ** 2) * (yr.T @ dc[: n - h, h * k : (h + 1) * k])
    kern = (cpad * scales) @ cpad.T
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.where(dist > 0, kern / dist, 0.0)
    du = 2.0 * (e.sum(axis=1)[:, None] * u - e @ u)
    grad[:, gj] += y.T @ du
    return value, grad


def _scalar_lag(cr, xc, yr, yc, want_grad, scale, conds, mask):
    """Scalar conditioners ``conds`` at one lag, vectorized over conditioners.

    ``mask[j, k]`` selects response column ``k`` of ``cr`` for conditioner
    ``conds[j]``.  The gradient comes back as ``(d/d response columns,
    d/d conditioner columns)``.
    Each conditioner is sorted once; ``sum_{s,t} c_s c_t |u_s - u_t|`` becomes
    ``2 sum_k gap_k L_k R_k`` with prefix sums ``L`` and suffix sums ``R`` of
    the centered responses in sorted order.
    """
    u = xc[:, conds].T                                 # (j, t)
    orders = np.argsort(u, axis=1)
    us = np.take_along_axis(u, orders, axis=1)
    gaps = np.diff(us, axis=1)
    cs = cr[orders]                                    # (j, t, k)
    left = np.cumsum(cs[:, :-1], axis=1)
    right = np.cumsum(cs[:, :0:-1], axis=1)[:, ::-1]
    pair = np.einsum("jt,jtk->jk", gaps, left * right)
    value = scale * 2.0 * float(np.sum(pair * mask))
    if not want_grad:
        return value, None
    zero = np.zeros((len(conds), 1, cr.shape[1]))
    diffs = np.concatenate([zero, left], axis=1) - np.concatenate([right, zero], axis=1)
    uc = (us - us.mean(axis=1, keepdims=True))[:, :, None]
    cu = np.cumsum(cs * uc, axis=1)
    cu_before = np.concatenate([zero, cu[:, :-1]], axis=1)
    cu_after = cu[:, -1:] - cu
    # w[j, t, k] = sum_l |u_t - u_l| c_lk in sorted order, masked
    w = (uc * diffs - cu_before + cu_after) * mask[:, None, :]
    g_resp = (2.0 * scale) * np.einsum("jtd,jtk->dk", yr[orders], w)
    du = (2.0 * scale) * np.einsum("jtk,jtk->jt", cs * mask[:, None, :], diffs)
    g_cond = np.einsum("jtd,jt->dj", yc[orders], du)
    return value, (g_resp, g_cond)


def cross_mdd_total(
    y: np.ndarray,
    a: np.ndarray,
    groups: Groups,
    h0: int,
    want_grad: bool = False,
    focus: int | None = None,
):
    """Return ``(T, dT/dA)``; the gradient is ``None`` unless requested.

    With ``focus`` set, only (response group, conditioner group) pairs where
    either side is group ``focus`` are included.
    """
    n, p = y.shape
    x = y @ a
    total = 0.0
    grad = np.zeros_like(a) if want_grad else None
    member = np.empty(p, dtype=int)
    for gi, g in enumerate(groups):
        member[g] = gi
    # response mask per conditioner group
    resp = np.zeros((len(groups), p))
    for j in range(len(groups)):
        if focus is None or j == focus:
            resp[j] = member != j
        else:
            resp[j] = member == focus
    single = [j for j, g in enumerate(groups) if len(g) == 1 and resp[j].any()]
    # with a focus, conditioners sharing a response pattern are batched on
    # just those columns; otherwise all singletons go in one batch
    batches: dict[bytes, list[int]] = {}
    for j in single:
        key = resp[j].tobytes() if focus is not None else b""
        batches.setdefault(key, []).append(j)
    for js in batches.values():
        conds = np.array([groups[j][0] for j in js])
        cols = np.flatnonzero(resp[js].any(axis=0))
        mask = resp[js][:, cols]
        for h in range(h0 + 1):
            nh = n - h
            xr = x[h:, cols]
            yr = y[h:]
            value, g = _scalar_lag(
                xr - xr.mean(axis=0), x[:nh], yr - yr.mean(axis=0), y[:nh],
                want_grad, -1.0 / nh**2, conds, mask,
            )
            total += value
            if want_grad:
                grad[:, cols] += g[0]
                grad[:, conds] += g[1]
    for j, gj in enumerate(groups):
        if len(gj) > 1 and resp[j].any():
            value, g = _vector_lags(x, y, np.flatnonzero(resp[j]), gj, h0, want_grad)
            total += value
            if want_grad:
                grad += g
    return total, grad


def normalized(total: float, grad, a: np.ndarray, power: float):
    """Divide by ``tr(A A^T) ** power`` and apply the quotient rule."""
    tr = float(np.sum(a * a))
    val = total / tr**power
    if grad is None:
        return val, None
    return val, grad / tr**power - total * power * 2.0 * a / tr ** (power + 1)


def cayley_right(omega: np.ndarray, tau: float) -> np.ndarray:
    """``(I + tau/2 Omega)^{-1} (I - tau/2 Omega)`` for skew ``Omega``."""
    eye = np.eye(omega.shape[0])
    half = 0.5 * tau * omega
    return np.linalg.solve(eye + half, eye - half)


@dataclass
class DescentResult:
    q: np.ndarray
    value: float
    trace: list[float] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    tau: float = 1.0


def cayley_descent(
    fg: Callable[[np.ndarray, bool], tuple[float, np.ndarray | None]],
    q: np.ndarray,
    *,
    max_iter: int,
    tol_obj: float,
    mask: np.ndarray | None = None,
    tau: float = 1.0,
    tau_min: float = 1e-8,
    tau_max: float = 1e4,
    armijo: float = 1e-4,
) -> DescentResult:
    """Armijo-backtracked Cayley steps ``Q <- Q C(tau * Omega)``.

    ``Omega = Q^T G - G^T Q`` is the gradient in the right-multiplied frame
    (equivalent to ``W = G Q^T - Q G^T`` since ``W = Q Omega Q^T``).  ``mask``
    zeroes entries of ``Omega`` so that only chosen column pairs rotate.
    Each iteration restarts from twice the last accepted step.
    """
    f, g = fg(q, True)
    trace = [f]
    res = DescentResult(q, f, trace, tau=tau)
    for it in range(max_iter):
        omega = q.T @ g - g.T @ q
        if mask is not None:
            omega = omega * mask
        sq = float(np.sum(omega * omega))
        if sq <= 1e-30:
            res.converged = True
            break
        slope = -0.5 * sq
        accepted = False
        while tau >= tau_min:
            q_new = q @ cayley_right(omega, tau)
            f_new, _ = fg(q_new, False)
            if f_new <= f + armijo * tau * slope:
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            # no descent step above tau_min: stationary up to resolution
            res.converged = True
            break
        if orthogonality_error(q_new) > 1e-10:
            q_new = reorthonormalize(q_new)
        rel = (f - f_new) / max(abs(f), 1e-300)
        q = q_new
        f, g = fg(q, True)
        trace.append(f)
        res.iterations = it + 1
        if rel < tol_obj:
            res.converged = True
            break
        tau = min(2.0 * tau, tau_max)
    res.q, res.value, res.tau = q, f, tau
    return res
