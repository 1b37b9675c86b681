"""
The causal Lagrangian on finite-rank operators
==============================================

Points are self-adjoint operators of rank at most 2n; the Lagrangian
depends only on the spectrum of the product xy.
"""

import numpy as np

from causalvp import CfsLagrangian, CfsParams

L = CfsLagrangian(CfsParams(n=1, kappa=1.0))

z = np.diag([1.0, -1.0])
print(f"L(diag(1,-1), diag(1,-1)) = {L(z, z)}")

rng = np.random.default_rng(0)


def random_point(d):
    a = rng.standard_normal((d, 2)) + 1j * rng.standard_normal((d, 2))
    m = a @ np.diag([1.0, -1.0]) @ a.conj().T
    return m / np.linalg.norm(m, 2)


print("\n d   L(x, y)        L(y, x)        eigenvalues of xy")
for d in (2, 4, 6):
    x, y = random_point(d), random_point(d)
    lam = L.nontrivial_eigenvalues(x, y)
    print(f"{d:2d}   {L(x, y):.10f}   {L(y, x):.10f}   {np.round(lam, 4)}")
