"""
Six points on the sphere
========================

For tau = sqrt(2) the Lagrangian vanishes between points at least a right
angle apart.  Six points can arrange themselves so that only the
diagonal terms remain: the octahedron.
"""

import numpy as np

from causalvp import SphereLagrangian, action
from causalvp.eulerlagrange import calibrate_nu, ell_semi_derivative
from causalvp.minimality import align_to_octahedron, anneal_sphere, octahedron, pairwise_angles

S = SphereLagrangian()
rho = octahedron()
print(f"octahedron action {action(rho, S):.15f} (8/3 = {8 / 3:.15f})")
nu = calibrate_nu(rho, S)
print(f"nu = {nu:.15f}")

# %%
# ell has a kink at every vertex: it increases in every tangent direction.
x = rho.points[0]
for v in ([0, 1, 0], [0, 1, 1], [0, -0.3, 0.8]):
    v = np.array(v, float)
    print(f"D+ ell along {v}: {ell_semi_derivative(x, v, rho, S):.6f}, along -v: {ell_semi_derivative(x, -v, rho, S):.6f}")

# %%
# Simulated annealing from random starting points finds the same shape.
res = anneal_sphere(6, seed=0)
aligned, rot, _, err = align_to_octahedron(res.measure.points)
print(f"\nannealed action {res.action:.10f}, {res.accepted} accepted moves")
print(f"after alignment, largest vertex offset {err:.2e} rad")
print("pairwise angles / pi:", np.round(pairwise_angles(aligned) / np.pi, 6))
