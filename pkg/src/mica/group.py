"""Group mean independent component analysis (GMICA)."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from . import _engine
from .exceptions import DegenerateDenominator, MicaError
from .estimator import EstimationResult, MicaConfig, check_series, estimate_mica, make_fg
from .mdd import EPS_DEN, dvar, gap_statistic, tr_var_sq
from .ortho import align_columns, as_ortho

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroupStructure:
    """Ordered group sizes plus the component -> group map."""

    sizes: tuple[int, ...]
    assignment: np.ndarray

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        assignment = np.asarray(self.assignment, dtype=int)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "assignment", assignment)
        if not sizes or min(sizes) < 1:
            raise MicaError(f"group sizes must be positive, got {sizes}")
        if assignment.shape != (sum(sizes),):
            raise MicaError("assignment length must equal the sum of group sizes")
        counts = np.bincount(assignment, minlength=len(sizes))
        if counts.size != len(sizes) or tuple(counts) != sizes:
            raise MicaError(f"assignment {assignment.tolist()} inconsistent with sizes {sizes}")

    @classmethod
    def from_sizes(cls, sizes: Sequence[int]) -> "GroupStructure":
        """Contiguous layout: the first ``sizes[0]`` components form group 0, etc."""
        return cls(tuple(sizes), np.repeat(np.arange(len(sizes)), sizes))

    @classmethod
    def singletons(cls, p: int) -> "GroupStructure":
        return cls.from_sizes([1] * p)

    @property
    def m(self) -> int:
        return len(self.sizes)

    @property
    def p(self) -> int:
        return int(self.assignment.size)

    def members(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.assignment == g) for g in range(self.m)]

    def contiguous_order(self) -> np.ndarray:
        """Column order that lays the groups out one after another."""
        return np.concatenate(self.members())

    def blocks(self, a: np.ndarray) -> list[np.ndarray]:
        return [a[:, idx] for idx in self.members()]

    def partition(self) -> frozenset[frozenset[int]]:
        return frozenset(frozenset(m.tolist()) for m in self.members())


@dataclass
class Gmica1Result:
    a_hat: np.ndarray
    groups: GroupStructure
    r_hat: int
    iterations: int
    converged: bool
    objective: float
    components: np.ndarray | None = None
    history: list[dict] = field(default_factory=list)


def objective_g(a_tilde, groups: GroupStructure, y, h0: int) -> float:
    """Cross-group lag-summed MDD^2 divided by ``tr(A A^T) ** 0.5``."""
    y = check_series(y, min_rows=h0 + 3)
    a = np.asarray(a_tilde, dtype=float)
    if a.shape != (y.shape[1], y.shape[1]) or groups.p != y.shape[1]:
        raise MicaError("matrix, groups and data dimensions disagree")
    _engine.check_projection(y @ a)
    total, _ = _engine.cross_mdd_total(y, a, groups.members(), h0)
    return _engine.normalized(total, None, a, 0.5)[0]


def pair_stats(x_hat, h0: int, eps_den: float = EPS_DEN) -> np.ndarray:
    """``M(i, j) = max_h max(MDC^2(x_i,t | x_j,t-h), MDC^2(x_j,t | x_i,t-h))``.

    Degenerate-denominator entries are recorded as 0 with a warning.
    """
    x = np.asarray(x_hat, dtype=float)
    n, p = x.shape
    if h0 > n - 2:
        raise MicaError(f"h0={h0} too large for n={n}")
    out = np.zeros((p, p))
    degenerate = 0
    for h in range(h0 + 1):
        resp = x[h:]
        cond = x[: n - h]
        nh = n - h
        c = resp - resp.mean(axis=0)
        tv = np.array([tr_var_sq(resp[:, i]) for i in range(p)])
        dv = np.array([dvar(cond[:, j]) for j in range(p)])
        for j in range(p):
            # MDD^2(x_i,t | x_j,t-h) for every i at once
            mdd = gap_statistic(c, cond[:, j]) / nh**2
            for i in range(p):
                if i == j:
                    continue
                if tv[i] <= eps_den or dv[j] <= eps_den:
                    degenerate += 1
                    continue
                val = mdd[i] / math.sqrt(tv[i] * dv[j])
                if val > out[i, j]:
                    out[i, j] = val
    if degenerate:
        warnings.warn(f"{degenerate} MDC terms had a degenerate denominator; recorded as 0")
    m = np.maximum(out, out.T)
    np.fill_diagonal(m, 0.0)
    return m


def _sorted_pairs(stats: np.ndarray) -> list[tuple[float, int, int]]:
    p = stats.shape[0]
    pairs = [(float(stats[i, j]), i, j) for i, j in combinations(range(p), 2)]
    # descending value, ties by lexicographic (i, j)
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
    return pairs


def estimate_r(stats: np.ndarray, c0: float = 0.75, floor: float = 1e-10) -> int:
    """Ratio estimator ``argmax_{1 <= j <= c0 p0} M_j / M_{j+1}``.

    Ties go to the smallest ``j``; a zero denominator counts as +inf.  Returns
    0 when every statistic is below ``floor``.
    """
    vals = np.array([v for v, _, _ in _sorted_pairs(np.asarray(stats, dtype=float))])
    p0 = vals.size
    if p0 < 2:
        raise MicaError("need at least 3 components (2 pairs) to estimate r")
    if not 0 < c0 <= 1:
        raise MicaError("c0 must be in (0, 1]")
    if vals[0] < floor:
        return 0
    jmax = min(int(math.floor(c0 * p0)), p0 - 1)
    best_j, best_ratio = 1, -math.inf
    for j in range(1, jmax + 1):
        num, den = vals[j - 1], vals[j]
        if den <= 0:
            ratio = math.inf if num > 0 else -math.inf
        else:
            ratio = num / den
        if ratio > best_ratio:
            best_j, best_ratio = j, ratio
            if ratio == math.inf:
                break
    return best_j


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def group_from_graph(stats: np.ndarray, r_hat: int) -> GroupStructure:
    """Connected components of the graph on the ``r_hat`` largest pair statistics.

    Groups are ordered by descending size, then by smallest member.
    """
    stats = np.asarray(stats, dtype=float)
    p = stats.shape[0]
    pairs = _sorted_pairs(stats)
    if not 0 <= r_hat <= len(pairs):
        raise MicaError(f"r_hat={r_hat} outside [0, {len(pairs)}]")
    uf = _UnionFind(p)
    for _, i, j in pairs[:r_hat]:
        uf.union(i, j)
    roots = [uf.find(i) for i in range(p)]
    comps: dict[int, list[int]] = {}
    for i, r in enumerate(roots):
        comps.setdefault(r, []).append(i)
    ordered = sorted(comps.values(), key=lambda c: (-len(c), c[0]))
    assignment = np.empty(p, dtype=int)
    for g, members in enumerate(ordered):
        assignment[members] = g
    return GroupStructure(tuple(len(c) for c in ordered), assignment)


def route_columns(stats: np.ndarray, sizes: Sequence[int], max_enum: int = 20000) -> np.ndarray:
    """Assign components to groups of the given sizes, maximizing the summed
    within-group pair statistics.  Returns a column order laying the groups
    out contiguously (group 0 first).

    Exhaustive over set partitions when there are at most ``max_enum`` of
    them; otherwise groups are filled greedily, largest first.
    """
    p = stats.shape[0]
    sizes = list(sizes)
    count = math.factorial(p)
    for s in sizes:
        count //= math.factorial(s)
    if count <= max_enum:
        best, best_val = None, -math.inf

        def rec(remaining: tuple[int, ...], k: int, chosen: list[tuple[int, ...]], val: float):
            nonlocal best, best_val
            if k == len(sizes):
                if val > best_val:
                    best, best_val = list(chosen), val
                return
            for combo in combinations(remaining, sizes[k]):
                inner = sum(stats[i, j] for i, j in combinations(combo, 2))
                rest = tuple(i for i in remaining if i not in combo)
                chosen.append(combo)
                rec(rest, k + 1, chosen, val + inner)
                chosen.pop()

        rec(tuple(range(p)), 0, [], 0.0)
        return np.array([i for combo in best for i in combo])
    free = set(range(p))
    order: list[int] = []
    for s in sizes:
        # seed with the strongest remaining pair (or any index), then grow
        block: list[int] = []
        if s >= 2:
            cand = [(stats[i, j], i, j) for i, j in combinations(sorted(free), 2)]
            _, i, j = max(cand, key=lambda t: (t[0], -t[1], -t[2]))
            block = [i, j]
        else:
            block = [min(free)]
        while len(block) < s:
            rest = sorted(free - set(block))
            k = max(rest, key=lambda r: (sum(stats[r, b] for b in block), -r))
            block.append(k)
        order.extend(block)
        free -= set(block)
    return np.array(order)


def _block_masks(groups: GroupStructure) -> list[np.ndarray]:
    masks = []
    a = groups.assignment
    for g in range(groups.m):
        inside = a == g
        masks.append((inside[:, None] ^ inside[None, :]).astype(float))
    if groups.m == 2:
        masks = masks[:1]
    return masks


def refine_known(y, groups: GroupStructure, init: np.ndarray, cfg):
    """Block-coordinate Cayley descent on the group objective from ``init``.

    Each sweep visits the groups in order; for group ``i`` only rotations that
    mix its columns with the other groups are allowed.  Stops when a sweep
    improves the objective by less than ``cfg.tol_obj`` relative, or after
    ``cfg.max_iter`` accepted steps in total.
    """
    q = as_ortho(init)
    members = groups.members()
    fg = make_fg(y, members, cfg.h0, 0.5, cfg.gradient, cfg.fd_step)
    f = fg(q, False)[0]
    trace = [f]
    if groups.m == 1:
        return EstimationResult(q, y @ q, 0.0, 0, [0.0], True)
    masks = _block_masks(groups)
    steps_left = cfg.max_iter
    converged = False
    tau = 1.0
    inner_cap = max(1, min(25, cfg.max_iter))
    while steps_left > 0:
        f_sweep = f
        for mask in masks:
            res = _engine.cayley_descent(
                fg, q, max_iter=min(inner_cap, steps_left), tol_obj=cfg.tol_obj,
                mask=mask, tau=tau,
            )
            steps_left -= res.iterations
            q, f, tau = res.q, res.value, res.tau
            trace.extend(res.trace[1:])
            if steps_left <= 0:
                break
        if (f_sweep - f) <= cfg.tol_obj * max(abs(f_sweep), 1e-300):
            converged = True
            break
    q = as_ortho(q)
    return EstimationResult(q, y @ q, f, 0, trace, converged)


def estimate_gmica_known(y, groups: GroupStructure, cfg=None, init: np.ndarray | None = None):
    """Estimate with a known group structure.

    Without ``init``, the MICA estimate is computed and its columns are routed
    into the groups (see ``route_columns``).  The returned ``a_hat`` has the
    groups' columns in the positions given by ``groups.assignment``.
    """
    cfg = cfg or MicaConfig()
    y = check_series(y, min_rows=cfg.h0 + 3)
    if groups.p != y.shape[1]:
        raise MicaError(f"groups cover {groups.p} components but data has {y.shape[1]}")
    if init is None:
        mica = estimate_mica(y, cfg)
        if groups.m == 1 or groups.m == groups.p:
            routed = mica.a_hat
        else:
            stats = pair_stats(mica.components, cfg.h0)
            order = route_columns(stats, groups.sizes)
            routed = np.empty_like(mica.a_hat)
            routed[:, groups.contiguous_order()] = mica.a_hat[:, order]
        init = routed
    return refine_known(y, groups, init, cfg)


def algorithm1(y, cfg=None, c0: float = 0.75, eps_frob: float = 1e-4, max_outer: int = 10) -> Gmica1Result:
    """Alternate grouping (pair statistics, ratio estimator, graph components)
    and known-group estimation until the grouping repeats and the aligned
    matrix moves less than ``eps_frob`` in Frobenius norm.

    ``max_outer = 1`` runs the single pass without iteration.
    """
    cfg = cfg or MicaConfig()
    y = check_series(y, min_rows=cfg.h0 + 3)
    p = y.shape[1]
    mica = estimate_mica(y, cfg)
    a_prev = mica.a_hat
    groups_prev = GroupStructure.singletons(p)
    history: list[dict] = []
    converged = False
    r_hat = 0
    groups = groups_prev
    objective = float("nan")
    it = 0
    for it in range(1, max_outer + 1):
        stats = pair_stats(y @ a_prev, cfg.h0)
        r_hat = estimate_r(stats, c0) if p >= 3 else int(stats[0, 1] > 1e-10)
        found = group_from_graph(stats, r_hat)
        order = found.contiguous_order()
        groups = GroupStructure.from_sizes(found.sizes)
        init = a_prev[:, order]
        init_obj = objective_g(init, groups, y, cfg.h0)
        res = refine_known(y, groups, init, cfg)
        a_new = res.a_hat
        objective = res.objective
        al = align_columns(a_prev, a_new)
        moved = float(np.linalg.norm(al.apply(a_new) - a_prev))
        same = found.partition() == groups_prev.partition()
        history.append(
            {"iteration": it, "sizes": groups.sizes, "r_hat": r_hat,
             "initial_objective": init_obj, "objective": objective, "moved": moved}
        )
        logger.debug("outer %d: sizes %s r=%d objective %.6g moved %.3g",
                     it, groups.sizes, r_hat, objective, moved)
        a_prev, groups_prev = a_new, groups
        if same and moved < eps_frob:
            converged = True
            break
    return Gmica1Result(a_prev, groups, r_hat, it, converged, objective, y @ a_prev, history)
