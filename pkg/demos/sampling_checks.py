"""Exact moment enumeration, one-step contraction and the spectral sandwich on small graphs."""
from sddsolve.generators import grid2d
from sddsolve.trees import compute_stretch, low_stretch_tree
from sddsolve.validation import (diagonal_decomposition, verify_expected_contraction, verify_moments,
                                 verify_spectral_sandwich)

rep = verify_moments(diagonal_decomposition([0.5, 0.5], [1.0, 1.0]), 0.1)
print(f"moments: first {rep.first / rep.reference:.4f}, second {rep.second / rep.reference:.4f} "
      f"(bounds 1/3..{rep.first_upper_bound:.3f}, {rep.second_upper_bound:.3f})")

g = grid2d(8)
t = low_stretch_tree(g)
tau = compute_stretch(g, t)
con = verify_expected_contraction(g, t, tau, 2000, seed=0)
print(f"contraction: squared {con.squared_mean:.4f} +- {con.squared_stderr:.4f} (bound {con.squared_bound:.4f})")

sw = verify_spectral_sandwich(g, t, tau, 0.1, 100, seed=0)
print(f"sandwich: smallest constant {sw.constant:.2f}, eigenvalues in "
      f"[{min(sw.lambda_min):.3f}, {max(sw.lambda_max):.3f}]")
