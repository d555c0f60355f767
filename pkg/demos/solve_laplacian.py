"""Solve a Laplacian system with the recursive solver and compare with a dense solve."""
import numpy as np

from sddsolve.config import SolverConfig
from sddsolve.generators import path_plus_random_chords
from sddsolve.graph import DenseOracle, laplacian_of
from sddsolve.recursive import top_solve

g = path_plus_random_chords(520, 55, seed=0)
b = np.random.default_rng(1).standard_normal(g.n_vertices)
b -= b.mean()

res = top_solve(g, b, 1e-8, SolverConfig(inner_rule="derived", seed=0))
err = DenseOracle(laplacian_of(g)).relative_error(res.x, b)

print(f"n={res.n} m={res.m} stretch norm={res.norm_p:.1f}")
print(f"relative error in the L-norm: {err:.2e}")
print(f"outer iterations: {res.stats.outer_iterations}")
for lv in res.stats.to_dict()["levels"]:
    if lv["n"] == 0:
        print(f"  level {lv['depth']}: {lv['direct_solves']} direct solves of reduced graphs")
        continue
    print(f"  level {lv['depth']}: n={lv['n']} kappa={lv['kappa']:.2f} chebyshev={lv['cheby_iterations']} "
          f"richardson={lv['rr_iterations']}")
print(f"setup {res.timings['setup']:.2f}s, solve {res.timings['solve']:.2f}s")
