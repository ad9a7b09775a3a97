"""Monte Carlo experiment runner for the simulation designs.

Configs are INI files with three sections::

    [design]
    design = mica-ex1
    p = 5
    n = 200
    dist = normal

    [method]
    method = mica
    h0 = 1

    [run]
    replications = 100
    base_seed = 0

Replication ``r`` uses seed ``base_seed + r`` for both the data and the
optimizer's multi-start draws, so results do not depend on the worker count.
"""
from __future__ import annotations

import configparser
import csv
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from functools import partial

import numpy as np

from .estimator import MicaConfig, estimate_mica, estimate_mica_sequential
from .exceptions import ConfigError, MicaError, TooManyFailures
from .group import algorithm1, estimate_gmica_known
from .io import fmt
from .ortho import d_distance_scaled, dtilde_distance_scaled, split_blocks
from .simulate import DgpSpec, adjusted_truth, generate, whiten

logger = logging.getLogger(__name__)

METHODS = ("mica", "mica-sequential", "gmica-known", "gmica-alg1")
MAX_FAILED_SHARE = 0.2
TRUTH_LABEL = "whitened-adjusted"

# section -> {key: type}
_SCHEMA = {
    "design": {"design": str, "p": int, "n": int, "dist": str, "burn_in": int},
    "method": {"method": str, "h0": int, "c0": float, "n_starts": int, "max_outer": int},
    "run": {"replications": int, "base_seed": int, "workers": int, "output": str, "name": str},
}
_REQUIRED = {"design": ("design", "p", "n"), "method": ("method",)}


@dataclass(frozen=True)
class ExperimentConfig:
    design: str
    p: int
    n: int
    dist: str = "normal"
    burn_in: int = 500
    method: str = "mica"
    h0: int = 1
    c0: float = 0.75
    n_starts: int = 200
    max_outer: int = 10
    replications: int = 100
    base_seed: int = 0
    workers: int = 1
    output: str | None = None
    name: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.h0 < 1:
            raise ConfigError("h0 must be >= 1")
        if not 0 < self.c0 <= 1:
            raise ConfigError("c0 must be in (0, 1]")
        if self.n_starts < 1 or self.max_outer < 1 or self.workers < 1:
            raise ConfigError("n_starts, max_outer and workers must be >= 1")
        try:
            self.dgp(0)
        except MicaError as exc:
            raise ConfigError(str(exc)) from None

    def dgp(self, seed: int) -> DgpSpec:
        return DgpSpec(self.design, self.p, self.n, self.dist, seed, self.burn_in)

    def mica_config(self, seed: int) -> MicaConfig:
        return MicaConfig(h0=self.h0, n_starts=self.n_starts, seed=seed)

    @property
    def setting(self) -> str:
        if self.name:
            return self.name
        return f"{self.design}/{self.dist}/p={self.p}/n={self.n}/{self.method}/h0={self.h0}"

    @property
    def grouped(self) -> bool:
        return self.method.startswith("gmica")


def _line_of(lines: list[str], section: str, key: str) -> int:
    current = None
    for no, raw in enumerate(lines, 1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and s.split("=", 1)[0].split(":", 1)[0].strip() == key:
            return no
    return 0


def parse_config(text: str, source: str = "<config>", **overrides) -> ExperimentConfig:
    """Parse INI text; ``overrides`` with non-None values replace file entries."""
    lines = text.splitlines()
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.ParsingError as exc:
        no = exc.errors[0][0]
        raise ConfigError(f"{source}: line {no}: cannot parse {lines[no - 1].strip()!r}") from None
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        where = f"line {lineno}: " if lineno else ""
        raise ConfigError(f"{source}: {where}{exc.message}") from None

    values: dict = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            no = next(i for i, s in enumerate(lines, 1) if s.strip() == f"[{section}]")
            raise ConfigError(f"{source}: line {no}: unknown section [{section}]")
        for key, raw in cp.items(section):
            no = _line_of(lines, section, key)
            kind = _SCHEMA[section].get(key)
            if kind is None:
                raise ConfigError(f"{source}: line {no}: unknown key {key!r} in [{section}]")
            try:
                values[key] = kind(raw.strip())
            except ValueError:
                raise ConfigError(
                    f"{source}: line {no}: {key} expects {kind.__name__}, got {raw.strip()!r}"
                ) from None
    for section, keys in _REQUIRED.items():
        for key in keys:
            if key not in values:
                raise ConfigError(f"{source}: missing required key {key!r} in [{section}]")
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(ExperimentConfig)}
    return ExperimentConfig(**{k: v for k, v in values.items() if k in known})


def load_config(path, **overrides) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot open ({exc.strerror})") from None
    return parse_config(text, str(path), **overrides)


@dataclass
class ReplicationResult:
    index: int
    seed: int
    distance: float = math.nan
    groups_found: tuple[int, ...] = ()
    correct: bool | None = None
    iterations: int = 0
    converged: bool | None = None
    runtime: float = 0.0
    error: str | None = None


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    replications: list[ReplicationResult]
    mean_distance: float
    sd_distance: float
    pi: float
    total_runtime: float
    failed: int = 0

    def write_summary(self, path, timing: bool = False) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["setting", "mean_d2", "sd_d2", "pi", "runtime", "truth"])
            w.writerow([
                self.config.setting,
                fmt(self.mean_distance),
                fmt(self.sd_distance),
                fmt(self.pi) if self.config.grouped else "",
                fmt(self.total_runtime) if timing else "",
                TRUTH_LABEL,
            ])

    def write_replications(self, path, timing: bool = False) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["replication", "seed", "distance", "groups_found", "correct",
                        "iterations", "converged", "runtime", "error"])
            for r in self.replications:
                w.writerow([
                    r.index,
                    r.seed,
                    fmt(r.distance),
                    "-".join(map(str, r.groups_found)),
                    "" if r.correct is None else int(r.correct),
                    r.iterations,
                    "" if r.converged is None else int(r.converged),
                    fmt(r.runtime) if timing else "",
                    r.error or "",
                ])


def _truth(data, w_transform):
    return adjusted_truth(data.a_true, data.x_true, data.groups_true, w_transform)


def run_replication(cfg: ExperimentConfig, index: int) -> ReplicationResult:
    seed = cfg.base_seed + index
    t0 = time.perf_counter()
    data = generate(cfg.dgp(seed))
    w, transform = whiten(data.y)
    truth = _truth(data, transform)
    mcfg = cfg.mica_config(seed)
    out = ReplicationResult(index, seed)
    true_groups = data.groups_true
    if cfg.method in ("mica", "mica-sequential"):
        fit = estimate_mica if cfg.method == "mica" else estimate_mica_sequential
        res = fit(w, mcfg)
        out.distance = d_distance_scaled(truth, res.a_hat)
        out.groups_found = (1,) * cfg.p
        out.iterations = max(len(res.trace) - 1, 0)
        out.converged = res.converged
    elif cfg.method == "gmica-known":
        res = estimate_gmica_known(w, true_groups, mcfg)
        out.distance = dtilde_distance_scaled(
            split_blocks(truth, true_groups.sizes), true_groups.blocks(res.a_hat)
        )
        out.groups_found = true_groups.sizes
        out.correct = True
        out.iterations = max(len(res.trace) - 1, 0)
        out.converged = res.converged
    else:
        res = algorithm1(w, mcfg, c0=cfg.c0, max_outer=cfg.max_outer)
        out.groups_found = res.groups.sizes
        out.iterations = res.iterations
        out.converged = res.converged
        out.correct = res.groups.sizes == true_groups.sizes
        if out.correct:
            out.distance = dtilde_distance_scaled(
                split_blocks(truth, true_groups.sizes), res.groups.blocks(res.a_hat)
            )
    out.runtime = time.perf_counter() - t0
    return out


def _guarded(cfg: ExperimentConfig, index: int) -> ReplicationResult:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return run_replication(cfg, index)
    except (MicaError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return ReplicationResult(index, cfg.base_seed + index, error=f"{type(exc).__name__}: {exc}")


def summarize(cfg: ExperimentConfig, results: list[ReplicationResult]) -> ExperimentReport:
    results = sorted(results, key=lambda r: r.index)
    failed = sum(r.error is not None for r in results)
    if failed > MAX_FAILED_SHARE * len(results):
        raise TooManyFailures(
            f"{failed} of {len(results)} replications failed; first: "
            + next(r.error for r in results if r.error)
        )
    if failed:
        warnings.warn(f"{failed} replication(s) failed and were excluded", stacklevel=2)
    d = np.array([r.distance for r in results if r.error is None and not math.isnan(r.distance)])
    mean = float(np.mean(d)) if d.size else math.nan
    sd = float(np.std(d, ddof=1)) if d.size > 1 else (0.0 if d.size else math.nan)
    pi = sum(bool(r.correct) for r in results) / len(results) if cfg.grouped else math.nan
    total = float(sum(r.runtime for r in results))
    return ExperimentReport(cfg, results, mean, sd, pi, total, failed)


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> ExperimentReport:
    workers = cfg.workers if workers is None else workers
    job = partial(_guarded, cfg)
    indices = range(cfg.replications)
    if workers > 1 and cfg.replications > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, indices))
    else:
        results = [job(i) for i in indices]
    for r in results:
        logger.debug("replication %d: distance %s groups %s", r.index, r.distance, r.groups_found)
    return summarize(cfg, results)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
