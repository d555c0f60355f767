"""Route one unit of current across a barbell and compare the energy with the optimum."""
import math

import numpy as np

from sddsolve.flow import FlowProblem, electrical_flow, flow_energy, residual
from sddsolve.generators import barbell
from sddsolve.graph import laplacian_of

g = barbell(8, 6)
d = np.zeros(g.n_vertices)
d[0], d[-1] = 1.0, -1.0
p = FlowProblem(g, d)
f = electrical_flow(p, 1e-3)

optimum = math.sqrt(d @ np.linalg.pinv(laplacian_of(g).toarray()) @ d)
print(f"energy {flow_energy(p, f):.6f}, optimum {optimum:.6f}")
print(f"max demand violation {np.abs(residual(p, f)).max():.1e}")
bridge = np.argmax(np.abs(f.values))
print(f"largest edge flow {f.values[bridge]:.4f} on ({g.u[bridge]}, {g.v[bridge]})")
