"""Acceptance criteria, each checked at its full tolerance.

Run with pytest, or directly (``python tests/test_acceptance.py [names...]``)
to print one PASS/FAIL line per criterion.  Monte Carlo summaries are cached
in ``.acceptance_cache/`` under a key that includes a hash of the package
source, so a rerun after a code change recomputes them.
"""
from __future__ import annotations

import ast
import hashlib
import json
import subprocess
import sys
import tempfile
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pytest

import mica
from mica import (
    GroupStructure,
    d_distance_scaled,
    dtilde_distance_scaled,
    haar_random,
    mdd_sq,
    objective_g,
    objective_s,
)
from mica.harness import ExperimentConfig, run_experiment
from mica.ortho import split_blocks

sys.path.insert(0, str(Path(__file__).parent))
from oracles import (  # noqa: E402
    mdd_brute,
    objective_g_brute,
    objective_s_brute,
    random_signed_permutation,
)

ROOT = Path(__file__).resolve().parents[1]
CACHE = ROOT / ".acceptance_cache"
SRC = Path(mica.__file__).parent

# criterion name -> (passed, detail), filled as criteria run
RESULTS: dict[str, tuple[bool, str]] = {}


def _code_only(path: Path) -> str:
    """AST dump without docstrings, so comment or doc edits keep the cache."""
    tree = ast.parse(path.read_text())
    for node in ast.walk(tree):
        body = getattr(node, "body", None)
        if (isinstance(body, list) and body and isinstance(body[0], ast.Expr)
                and isinstance(body[0].value, ast.Constant)
                and isinstance(body[0].value.value, str)):
            node.body = body[1:] or [ast.Pass()]
    return ast.dump(tree)


def _source_hash() -> str:
    """Hash of the modules a Monte Carlo run depends on (not the CLI)."""
    h = hashlib.sha256()
    for f in sorted(SRC.glob("*.py")):
        if f.name != "cli.py":
            h.update(f.name.encode())
            h.update(_code_only(f).encode())
    return h.hexdigest()[:16]


# taken at import, so it describes the code this process actually runs
SOURCE_HASH = _source_hash()


def experiment(cfg: ExperimentConfig) -> dict:
    """Summary of ``run_experiment(cfg)``, cached by config and source hash."""
    key = hashlib.sha256(f"{SOURCE_HASH}|{cfg!r}".encode()).hexdigest()[:20]
    path = CACHE / f"{key}.json"
    if path.exists():
        return json.loads(path.read_text())
    t0 = time.perf_counter()
    report = run_experiment(cfg)
    out = {
        "config": repr(cfg),
        "mean": report.mean_distance,
        "sd": report.sd_distance,
        "pi": report.pi,
        "failed": report.failed,
        "wall": time.perf_counter() - t0,
        "replications": [asdict(r) for r in report.replications],
    }
    CACHE.mkdir(exist_ok=True)
    path.write_text(json.dumps(out, indent=1))
    return out


def record(name: str, passed: bool, detail: str) -> None:
    RESULTS[name] = (passed, detail)
    assert passed, f"{name}: {detail}"


# 1 -------------------------------------------------------------------------

def check_mdd_oracle():
    rng = np.random.default_rng(20240101)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(200):
        n = int(rng.integers(2, 201))
        q = int(rng.integers(1, 5))
        v = rng.standard_normal(n)
        u = rng.standard_normal((n, q)) if q > 1 else rng.standard_normal(n)
        fast, ref = mdd_sq(v, u), mdd_brute(v, u)
        worst = max(worst, abs(fast - ref) / max(abs(ref), 1e-300))
    elapsed = time.perf_counter() - t0
    passed = worst <= 1e-10 and elapsed < 5.0
    return passed, f"max rel err {worst:.2e} (<= 1e-10), {elapsed:.2f}s (< 5s)"


# 2 -------------------------------------------------------------------------

def check_objective_oracle():
    rng = np.random.default_rng(7)
    worst_s = worst_g = 0.0
    for k in range(50):
        p = int(rng.integers(2, 5))
        n = int(rng.integers(20, 101))
        h0 = int(rng.integers(1, 3))
        y = rng.standard_normal((n, p))
        a = haar_random(p, rng)
        s, s_ref = objective_s(a, y, h0), objective_s_brute(a, y, h0)
        worst_s = max(worst_s, abs(s - s_ref) / abs(s_ref))
        sizes = [(p,), (1,) * p, (p - 1, 1)][k % 3]
        g = objective_g(a, GroupStructure.from_sizes(sizes), y, h0)
        g_ref = objective_g_brute(a, sizes, y, h0)
        if g_ref == 0.0:
            worst_g = max(worst_g, abs(g))
        else:
            worst_g = max(worst_g, abs(g - g_ref) / abs(g_ref))
    passed = worst_s <= 1e-10 and worst_g <= 1e-10
    return passed, f"max rel err S {worst_s:.2e}, G {worst_g:.2e} (<= 1e-10)"


# 3 -------------------------------------------------------------------------

def check_invariances():
    rng = np.random.default_rng(11)
    worst_s = worst_d = worst_dt = 0.0
    for _ in range(100):
        p = int(rng.integers(2, 6))
        y = rng.standard_normal((60, p))
        a = haar_random(p, rng)
        perm = random_signed_permutation(p, rng)
        s0 = objective_s(a, y, 1)
        worst_s = max(worst_s, abs(objective_s(a @ perm, y, 1) - s0) / s0)
        worst_d = max(worst_d, d_distance_scaled(a, a @ perm))
        sizes = [p] if p == 2 else [p - 2, 2]
        b = split_blocks(a, sizes)
        c = [blk @ haar_random(blk.shape[1], rng) for blk in b]
        worst_dt = max(worst_dt, dtilde_distance_scaled(b, c))
    passed = worst_s <= 1e-10 and worst_d <= 1e-12 and worst_dt <= 1e-12
    return passed, (f"S rel change {worst_s:.1e} (<= 1e-10), D(B, BP) {worst_d:.1e}, "
                    f"Dtilde under block rotation {worst_dt:.1e} (<= 1e-12)")


# 4 -------------------------------------------------------------------------

MICA_BANDS = [
    # design, dist, reference mean, band
    ("mica-ex1", "normal", 0.050, (0.030, 0.070)),
    ("mica-ex1", "t3", 0.012, (0.002, 0.032)),
    ("mica-ex2", "exp", 0.007, (0.001, 0.027)),
]


def mica_band_config(design, dist) -> ExperimentConfig:
    return ExperimentConfig(design=design, p=5, n=200, dist=dist, method="mica", h0=1,
                            replications=100, base_seed=1000)


def check_mica_bands():
    parts, passed = [], True
    for design, dist, ref, (lo, hi) in MICA_BANDS:
        res = experiment(mica_band_config(design, dist))
        ok = lo <= res["mean"] <= hi
        passed &= ok
        parts.append(f"{design}/{dist} mean D2 {res['mean']:.4f} in [{lo}, {hi}] "
                     f"(reference {ref}) {'ok' if ok else 'MISS'}")
    return passed, "; ".join(parts)


# 5 -------------------------------------------------------------------------

GMICA_BANDS = [
    # design, dist, p, replications, minimum pi, maximum mean Dtilde^2
    ("gmica-ex1", "normal", 6, 100, 0.90, 0.015),
    ("gmica-ex2", "exp", 6, 100, 0.90, 0.03),
    ("gmica-ex1", "normal", 12, 20, 0.50, None),
    ("gmica-ex2", "exp", 12, 20, 0.50, None),
]


def gmica_band_config(design, dist, p, reps, max_outer=1) -> ExperimentConfig:
    return ExperimentConfig(design=design, p=p, n=1000, dist=dist, method="gmica-alg1", h0=5,
                            max_outer=max_outer, replications=reps, base_seed=2000)


def check_gmica_bands():
    parts, passed = [], True
    for design, dist, p, reps, min_pi, max_d in GMICA_BANDS:
        res = experiment(gmica_band_config(design, dist, p, reps))
        ok = res["pi"] >= min_pi and (max_d is None or res["mean"] <= max_d)
        passed &= ok
        d_part = f", mean Dtilde2 {res['mean']:.4f} (<= {max_d})" if max_d else ""
        parts.append(f"{design}/{dist} p={p}: pi {res['pi']:.2f} (>= {min_pi}){d_part} "
                     f"{'ok' if ok else 'MISS'}")
    return passed, "; ".join(parts)


# 6 -------------------------------------------------------------------------

def recovery_config(dist) -> ExperimentConfig:
    return ExperimentConfig(design="mica-ex1", p=3, n=5000, dist=dist, method="mica",
                            h0=1, replications=100, base_seed=3000)


def _recovered(dist) -> int:
    res = experiment(recovery_config(dist))
    return sum(r["distance"] < 0.01 for r in res["replications"] if r["error"] is None)


def check_recovery():
    # judged on the default (normal) innovations; the other laws are context only
    good = _recovered("normal")
    info = ", ".join(f"{d} {_recovered(d)}/100" for d in ("t3", "exp"))
    return good >= 95, f"{good}/100 replications with D2 < 0.01 (>= 95); not judged: {info}"


# 7 -------------------------------------------------------------------------

def check_algorithm1_convergence():
    parts, passed = [], True
    for design, dist in (("gmica-ex1", "normal"), ("gmica-ex2", "exp")):
        res = experiment(gmica_band_config(design, dist, 6, 20, max_outer=10))
        reps = [r for r in res["replications"] if r["error"] is None]
        fast = sum(bool(r["converged"]) and r["iterations"] <= 5 for r in reps)
        share = fast / len(res["replications"])
        passed &= share >= 0.9
        parts.append(f"{design}/{dist}: {fast}/{len(res['replications'])} converged within 5")
    return passed, "; ".join(parts) + " (>= 90%)"


# 8 -------------------------------------------------------------------------

CLI_CONFIG = """\
[design]
design = mica-ex1
p = 3
n = 150
dist = t3

[method]
method = mica
h0 = 1
n_starts = 20

[run]
replications = 3
base_seed = 5
"""


def _cli(args, cwd) -> subprocess.CompletedProcess:
    return subprocess.run([sys.executable, "-m", "mica.cli", *args], cwd=cwd,
                          capture_output=True, text=True, check=False)


def _snapshot(root: Path) -> dict[str, bytes]:
    return {str(f.relative_to(root)): f.read_bytes() for f in sorted(root.rglob("*")) if f.is_file()}


def _cli_session(root: Path) -> list[str]:
    (root / "exp.ini").write_text(CLI_CONFIG)
    cmds = [
        ["simulate", "--design", "gmica-ex1", "--p", "6", "--n", "300", "--seed", "4",
         "--out", "sim"],
        ["estimate", "--input", "sim/y.csv", "--method", "mica", "--h0", "2",
         "--n-starts", "30", "--seed", "1", "--out", "est"],
        ["estimate", "--input", "sim/y.csv", "--method", "gmica-alg1", "--h0", "2",
         "--n-starts", "30", "--max-outer", "2", "--out", "alg1"],
        ["group", "--input", "est/components.csv", "--h0", "2", "--out", "grp"],
        ["bench", "--config", "exp.ini", "--out", "bench/report.csv"],
        ["distance", "sim/b_true.csv", "est/a_hat.csv"],
        ["distance", "sim/b_true.csv", "alg1/a_hat.csv", "--groups", "3,2,1"],
    ]
    outputs = []
    for cmd in cmds:
        proc = _cli(cmd, root)
        outputs.append(f"{cmd[0]} rc={proc.returncode}\n{proc.stdout}{proc.stderr}")
    return outputs


def check_cli_determinism():
    with tempfile.TemporaryDirectory() as d1, tempfile.TemporaryDirectory() as d2:
        out1, out2 = _cli_session(Path(d1)), _cli_session(Path(d2))
        snap1, snap2 = _snapshot(Path(d1)), _snapshot(Path(d2))
    codes_ok = all(" rc=0\n" in o for o in out1)
    same_files = snap1 == snap2
    differing = sorted(k for k in set(snap1) | set(snap2) if snap1.get(k) != snap2.get(k))
    passed = codes_ok and same_files and out1 == out2
    return passed, (f"{len(snap1)} files byte-identical: {same_files}"
                    + (f" (differ: {differing})" if differing else "")
                    + f"; stdout identical: {out1 == out2}; all exit 0: {codes_ok}")


CRITERIA = {
    "1-mdd-oracle": check_mdd_oracle,
    "2-objective-oracle": check_objective_oracle,
    "3-invariances": check_invariances,
    "4-mica-bands": check_mica_bands,
    "5-gmica-bands": check_gmica_bands,
    "6-recovery": check_recovery,
    "7-algorithm1-convergence": check_algorithm1_convergence,
    "8-cli-determinism": check_cli_determinism,
}
FAST = {"1-mdd-oracle", "2-objective-oracle", "3-invariances", "8-cli-determinism"}


@pytest.mark.parametrize(
    "name",
    [n if n in FAST else pytest.param(n, marks=pytest.mark.slow) for n in CRITERIA],
)
def test_criterion(name):
    passed, detail = CRITERIA[name]()
    record(name, passed, detail)


def main(names) -> int:
    failed = 0
    for name in names or CRITERIA:
        passed, detail = CRITERIA[name]()
        failed += not passed
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}", flush=True)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
