"""Mean independent component analysis (MICA).

Minimizes the lag-summed pairwise MDD objective over orthogonal matrices:
Latin hypercube multi-start over Givens angles, then Cayley-retraction
descent from the best start.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from . import _engine
from .exceptions import MicaError
from .ortho import as_ortho, givens_compose, n_angles, reorthonormalize

logger = logging.getLogger(__name__)

MIN_STAGE_STARTS = 10


@dataclass(frozen=True)
class MicaConfig:
    h0: int = 1
    n_starts: int = 200
    max_iter: int = 500
    tol_obj: float = 1e-8
    fd_step: float = 1e-6
    seed: int = 0
    gradient: str = "analytic"  # or "fd"
    n_refine: int = 1  # best starts that get a full descent

    def __post_init__(self):
        if self.h0 < 1:
            raise MicaError("h0 must be >= 1")
        if self.n_starts < 1 or self.n_refine < 1:
            raise MicaError("n_starts and n_refine must be >= 1")
        if self.max_iter < 0 or self.tol_obj <= 0 or self.fd_step <= 0:
            raise MicaError("max_iter must be >= 0 and tolerances positive")
        if self.gradient not in ("analytic", "fd"):
            raise MicaError(f"unknown gradient mode {self.gradient!r}")


@dataclass
class EstimationResult:
    a_hat: np.ndarray
    components: np.ndarray
    objective: float
    start_index: int
    trace: list[float] = field(default_factory=list)
    converged: bool = True


def check_series(y, min_rows: int = 2) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 2:
        raise MicaError(f"series must be an n x p matrix, got shape {y.shape}")
    if y.shape[0] < min_rows:
        raise MicaError(f"need at least {min_rows} observations, got {y.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise MicaError("series contains non-finite values")
    return y


def objective_s(a_tilde, y, h0: int) -> float:
    """Pairwise lag-summed MDD^2 divided by ``tr(A A^T)``."""
    y = check_series(y, min_rows=h0 + 3)
    a = np.asarray(a_tilde, dtype=float)
    if a.shape != (y.shape[1], y.shape[1]):
        raise MicaError(f"matrix shape {a.shape} does not match p={y.shape[1]}")
    _engine.check_projection(y @ a)
    total, _ = _engine.cross_mdd_total(y, a, _engine.singleton_groups(a.shape[1]), h0)
    return _engine.normalized(total, None, a, 1.0)[0]


def fd_gradient(f, a: np.ndarray, step: float) -> np.ndarray:
    """Central finite differences of ``f`` over every entry of ``a``."""
    g = np.empty_like(a)
    for idx in np.ndindex(*a.shape):
        e = np.zeros_like(a)
        e[idx] = step
        g[idx] = (f(a + e) - f(a - e)) / (2 * step)
    return g


def make_fg(y, groups, h0, power, gradient="analytic", fd_step=1e-6, focus=None):
    """Objective/gradient closure used by the descent loops."""

    def value(a):
        total, _ = _engine.cross_mdd_total(y, a, groups, h0, focus=focus)
        return _engine.normalized(total, None, a, power)[0]

    def fg(a, want_grad):
        if gradient == "fd":
            return value(a), (fd_gradient(value, a, fd_step) if want_grad else None)
        total, grad = _engine.cross_mdd_total(y, a, groups, h0, want_grad, focus=focus)
        return _engine.normalized(total, grad, a, power)

    return fg


def lhs_angles(n_starts: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Latin hypercube sample over ``[0, pi)^dim``."""
    if dim == 0:
        return np.zeros((n_starts, 0))
    return np.pi * qmc.LatinHypercube(d=dim, seed=rng).random(n_starts)


def _warn_small_n(n: int, p: int) -> None:
    if n < 10 * p:
        warnings.warn(f"n={n} is below 10*p={10 * p}; estimates may be poor", stacklevel=3)


def estimate_mica(y, cfg: MicaConfig = MicaConfig()) -> EstimationResult:
    y = check_series(y, min_rows=cfg.h0 + 3)
    n, p = y.shape
    _warn_small_n(n, p)
    if p == 1:
        a = np.eye(1)
        return EstimationResult(a, y.copy(), 0.0, 0, [0.0])
    rng = np.random.default_rng(cfg.seed)
    groups = _engine.singleton_groups(p)
    fg = make_fg(y, groups, cfg.h0, 1.0, cfg.gradient, cfg.fd_step)

    thetas = lhs_angles(cfg.n_starts, n_angles(p), rng)
    values = np.array([fg(givens_compose(t, p), False)[0] for t in thetas])
    ranked = np.argsort(values, kind="stable")[: cfg.n_refine]
    best, res = -1, None
    for idx in ranked:
        cand = _engine.cayley_descent(
            fg, givens_compose(thetas[idx], p), max_iter=cfg.max_iter, tol_obj=cfg.tol_obj
        )
        if res is None or cand.value < res.value:
            best, res = int(idx), cand
    logger.debug("best of %d refined starts: #%d, objective %.6g", len(ranked), best, res.value)
    a_hat = as_ortho(res.q)
    return EstimationResult(a_hat, y @ a_hat, res.value, best, res.trace, res.converged)


def _spherical(phi: np.ndarray) -> np.ndarray:
    """Unit vector in R^{len(phi)+1} from hyperspherical angles."""
    d = phi.size + 1
    s = np.ones(d)
    for k, t in enumerate(phi):
        s[k] *= np.cos(t)
        s[k + 1 :] *= np.sin(t)
    return s


def _completion(s: np.ndarray) -> np.ndarray:
    """Orthogonal matrix whose first column is ``s`` (Householder reflection)."""
    d = s.size
    v = -s.copy()
    v[0] += 1.0
    nv = float(v @ v)
    if nv < 1e-24:
        return np.eye(d)
    return np.eye(d) - 2.0 * np.outer(v, v) / nv


def estimate_mica_sequential(y, cfg: MicaConfig = MicaConfig()) -> EstimationResult:
    """Estimate the columns one at a time.

    At stage ``k`` the first ``k`` columns are frozen and the new column ranges
    over the unit sphere of their orthogonal complement (``p - k - 1`` angles).
    The stage objective sums every lagged MDD^2 term that involves the new
    component: against each frozen component and against the remaining
    complement taken as one vector-valued block.

    The multi-start budget ``cfg.n_starts`` is shared out across stages in
    proportion to their angle counts (at least ``MIN_STAGE_STARTS`` each), so
    the total number of start evaluations matches the joint estimator.
    """
    y = check_series(y, min_rows=cfg.h0 + 3)
    n, p = y.shape
    if p < 3:
        return estimate_mica(y, cfg)
    _warn_small_n(n, p)
    rng = np.random.default_rng(cfg.seed)
    q = np.eye(p)
    trace: list[float] = []
    converged = True
    first_start = 0
    for k in range(p - 1):
        d = p - k
        groups = [np.array([j]) for j in range(k + 1)] + [np.arange(k + 1, p)]
        fg = make_fg(y, groups, cfg.h0, 1.0, cfg.gradient, cfg.fd_step, focus=k)
        basis = q[:, k:]

        def stage_matrix(phi):
            out = q.copy()
            out[:, k:] = basis @ _completion(_spherical(phi))
            return out

        share = math.ceil(cfg.n_starts * (d - 1) / n_angles(p))
        phis = lhs_angles(max(MIN_STAGE_STARTS, share), d - 1, rng)
        values = np.array([fg(stage_matrix(phi), False)[0] for phi in phis])
        best = int(np.argmin(values))
        if k == 0:
            first_start = best
        mask = np.zeros((p, p))
        mask[k, k + 1 :] = 1.0
        mask[k + 1 :, k] = 1.0
        res = _engine.cayley_descent(
            fg, stage_matrix(phis[best]), max_iter=cfg.max_iter, tol_obj=cfg.tol_obj, mask=mask
        )
        q = res.q
        trace.extend(res.trace)
        converged &= res.converged
    a_hat = as_ortho(reorthonormalize(q))
    return EstimationResult(
        a_hat, y @ a_hat, objective_s(a_hat, y, cfg.h0), first_start, trace, converged
    )
