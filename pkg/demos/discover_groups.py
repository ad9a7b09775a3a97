"""Find the (3, 2, 1) block layout of a grouped design without being told it.

Run: python demos/discover_groups.py
"""
from mica import DgpSpec, MicaConfig, adjusted_truth, algorithm1, dtilde_distance_scaled, generate, whiten
from mica.ortho import split_blocks

data = generate(DgpSpec("gmica-ex1", p=6, n=1000, dist="normal", seed=2000))
w, transform = whiten(data.y)
truth = adjusted_truth(data.a_true, data.x_true, data.groups_true, transform)

res = algorithm1(w, MicaConfig(h0=5, n_starts=100, seed=2000), c0=0.75, max_outer=10)
print(f"true sizes {data.groups_true.sizes}, found {res.groups.sizes}, r_hat {res.r_hat}")
for step in res.history:
    print("  outer step:", {k: v for k, v in step.items() if k != "a_hat"})
if res.groups.sizes == data.groups_true.sizes:
    d = dtilde_distance_scaled(split_blocks(truth, data.groups_true.sizes), res.groups.blocks(res.a_hat))
    print(f"block distance to truth {d:.4f}")
