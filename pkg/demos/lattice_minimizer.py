"""
The lattice minimizer and its Euler-Lagrange function
=====================================================

A finite window of the lattice measure, the value of nu that makes ell
vanish on it, and how ell grows once a point leaves the support.
"""

import numpy as np

from causalvp import LatticeParams, LatticeWindow
from causalvp.eulerlagrange import ProbeSpec, calibrate_nu, el_check, ell, valid_interior

params = LatticeParams(eps=0.1, delta=1.0, lambda_I=2.0, lambda_A=5.0)
win = LatticeWindow(T=24, W=32)
rho, L = win.measure(), win.lagrangian(params)

# Only atoms with a complete neighbourhood see the infinite-lattice sums.
interior = valid_interior(rho, L)
print(f"{len(rho)} atoms, {interior.sum()} in the valid interior")

nu = calibrate_nu(rho, L, support_mask=interior)
print(f"calibrated nu = {nu}  (2 lambda_A + 4 lambda_I = {params.nu()})")

# %%
# Moving the phase away from zero costs delta (1 - cos phi)^2.
x0 = rho.points[np.flatnonzero(interior)[0]]
print("\n   phi      ell(x)      delta (1 - cos phi)^2")
for phi in np.linspace(0.0, np.pi, 7):
    x = x0 + [0.0, 0.0, phi]
    print(f"{phi:6.3f}  {ell(x, rho, L, nu):10.6f}  {params.delta * (1 - np.cos(phi)) ** 2:10.6f}")

# %%
# Leaving the lattice sites is much more expensive: ell jumps to at least lambda_A.
rep = el_check(rho, L, nu, ProbeSpec(count=2000, seed=1))
print()
for kind, m in sorted(rep.probe_minima.items()):
    print(f"min ell over {kind:11s} probes: {m:.6g}")
print(f"sup |ell| on the support: {rep.sup_ell_on_support}")
