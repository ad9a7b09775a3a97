"""Simulation designs for MICA and GMICA, whitening, and scoring truth.

Designs
-------
``mica-ex1``   independent AR(1) components, phi_i ~ U(0.5, 0.9)
``mica-ex2``   independent all-pass ARMA(1,1) components
``gmica-ex1``  three ARMA base series, groups of lag-shifted copies
``gmica-ex2``  three all-pass base series (phi = 0.9, 0.5, 0.1), same layout
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import polar
from scipy.signal import lfilter

from .exceptions import MicaError, SingularCovariance
from .group import GroupStructure
from .ortho import as_ortho, haar_random

DISTRIBUTIONS = ("normal", "t3", "exp")
DESIGNS = ("mica-ex1", "mica-ex2", "gmica-ex1", "gmica-ex2")

# (AR coefficients, MA coefficients) in lfilter convention
GMICA_EX1_BASES = (
    ([1.0, -0.5, -0.3], [1.0, -0.9, 0.3, 1.2, 1.3]),
    ([1.0, -0.8, 0.5], [1.0, 1.0, 0.8, 1.8]),
    ([1.0, 0.7, 0.5], [1.0, -1.0, -0.8]),
)
GMICA_EX2_PHIS = (0.9, 0.5, 0.1)


@dataclass(frozen=True)
class DgpSpec:
    design: str
    p: int
    n: int
    dist: str = "normal"
    seed: int = 0
    burn_in: int = 500

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise MicaError(f"unknown design {self.design!r}; expected one of {DESIGNS}")
        if self.dist not in DISTRIBUTIONS:
            raise MicaError(f"unknown distribution {self.dist!r}; expected one of {DISTRIBUTIONS}")
        if self.n < 2 or self.p < 1 or self.burn_in < 0:
            raise MicaError("need n >= 2, p >= 1 and burn_in >= 0")
        if self.design.startswith("gmica") and self.p % 6:
            raise MicaError(f"GMICA designs need p divisible by 6, got {self.p}")
        if self.design == "mica-ex2" and self.dist == "normal":
            raise MicaError("mica-ex2 excludes normal innovations (Gaussian all-pass is i.i.d.)")


@dataclass
class GeneratedData:
    y: np.ndarray
    a_true: np.ndarray
    x_true: np.ndarray
    groups_true: GroupStructure
    b_true: np.ndarray | None = None


def innovations(dist: str, size, rng: np.random.Generator) -> np.ndarray:
    """Mean-zero innovations; exponential draws are shifted by -1."""
    if dist == "normal":
        return rng.standard_normal(size)
    if dist == "t3":
        return rng.standard_t(3, size)
    if dist == "exp":
        return rng.exponential(1.0, size) - 1.0
    raise MicaError(f"unknown distribution {dist!r}")


def _standardize(x: np.ndarray) -> np.ndarray:
    x = x - x.mean(axis=0)
    return x / x.std(axis=0)


def _mix(spec: DgpSpec, x: np.ndarray, groups: GroupStructure, rng) -> GeneratedData:
    a = haar_random(spec.p, rng)
    return GeneratedData(x @ a.T, a, x, groups)


def gen_mica_ex1(spec: DgpSpec, phi: Sequence[float] | None = None) -> GeneratedData:
    """AR(1) components ``x_t = phi x_{t-1} + e_t``; ``phi`` overrides the draw."""
    if spec.design != "mica-ex1":
        raise MicaError(f"gen_mica_ex1 called with design {spec.design!r}")
    rng = np.random.default_rng(spec.seed)
    phis = rng.uniform(0.5, 0.9, spec.p) if phi is None else np.asarray(phi, dtype=float)
    eps = innovations(spec.dist, (spec.burn_in + spec.n, spec.p), rng)
    x = np.column_stack([lfilter([1.0], [1.0, -f], eps[:, i]) for i, f in enumerate(phis)])
    x = _standardize(x[spec.burn_in :])
    return _mix(spec, x, GroupStructure.singletons(spec.p), rng)


def gen_mica_ex2(spec: DgpSpec, phi: Sequence[float] | None = None) -> GeneratedData:
    """All-pass ``x_t = phi x_{t-1} - e_{t-1} / phi + e_t``."""
    if spec.design != "mica-ex2":
        raise MicaError(f"gen_mica_ex2 called with design {spec.design!r}")
    rng = np.random.default_rng(spec.seed)
    phis = rng.uniform(0.5, 0.9, spec.p) if phi is None else np.asarray(phi, dtype=float)
    eps = innovations(spec.dist, (spec.burn_in + spec.n, spec.p), rng)
    x = np.column_stack(
        [lfilter([1.0, -1.0 / f], [1.0, -f], eps[:, i]) for i, f in enumerate(phis)]
    )
    x = _standardize(x[spec.burn_in :])
    return _mix(spec, x, GroupStructure.singletons(spec.p), rng)


def gmica_sizes(p: int) -> tuple[int, int, int]:
    if p % 6:
        raise MicaError(f"p must be divisible by 6, got {p}")
    return (p // 2, p // 3, p // 6)


def gen_gmica(spec: DgpSpec) -> GeneratedData:
    """Groups of forward-shifted copies of three independent base series.

    Component ``k`` of group ``g`` is ``z^(g)_{t+k}``; each base series is
    simulated with ``burn_in`` extra leading samples and enough trailing
    samples to supply the largest shift.
    """
    if not spec.design.startswith("gmica"):
        raise MicaError(f"gen_gmica called with design {spec.design!r}")
    rng = np.random.default_rng(spec.seed)
    sizes = gmica_sizes(spec.p)
    length = spec.burn_in + spec.n + max(sizes) - 1
    if spec.design == "gmica-ex1":
        filters = GMICA_EX1_BASES
    else:
        filters = tuple(([1.0, -f], [1.0, -1.0 / f]) for f in GMICA_EX2_PHIS)
    cols = []
    for size, (ar, ma) in zip(sizes, filters):
        z = lfilter(ma, ar, innovations(spec.dist, length, rng))
        for k in range(size):
            cols.append(z[spec.burn_in + k : spec.burn_in + k + spec.n])
    x = _standardize(np.column_stack(cols))
    return _mix(spec, x, GroupStructure.from_sizes(sizes), rng)


def generate(spec: DgpSpec) -> GeneratedData:
    if spec.design == "mica-ex1":
        return gen_mica_ex1(spec)
    if spec.design == "mica-ex2":
        return gen_mica_ex2(spec)
    return gen_gmica(spec)


def _sym_power(cov: np.ndarray, power: float) -> np.ndarray:
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() <= 1e-10:
        raise SingularCovariance(f"covariance is rank deficient (min eigenvalue {vals.min():.3g})")
    return (vecs * vals**power) @ vecs.T


def whiten(y) -> tuple[np.ndarray, np.ndarray]:
    """Center and whiten with the symmetric inverse square root of the
    (biased) sample covariance.  Returns ``(w, transform)``."""
    y = np.asarray(y, dtype=float)
    c = y - y.mean(axis=0)
    t = _sym_power(c.T @ c / y.shape[0], -0.5)
    return c @ t, t


def adjusted_truth(a_true, x_true, groups: GroupStructure, transform) -> np.ndarray:
    """Ground-truth separating matrix in whitened coordinates.

    ``transform @ a_true @ S^{1/2}``, where ``S`` is the sample covariance of
    ``x_true`` with cross-group blocks zeroed, mapped to the nearest
    orthogonal matrix (polar factor).
    """
    x = np.asarray(x_true, dtype=float)
    c = x - x.mean(axis=0)
    cov = c.T @ c / x.shape[0]
    same = groups.assignment[:, None] == groups.assignment[None, :]
    root = _sym_power(np.where(same, cov, 0.0), 0.5)
    b = np.asarray(transform) @ np.asarray(a_true) @ root
    u, _ = polar(b)
    return as_ortho(u)
