"""
Linearized fields and the conserved surface-layer form
======================================================

Lattice jets evolve by two decoupled recurrences: a discrete wave
equation for the phase component and a three-term recurrence for the
scalar component.  For two solutions the bilinear form sigma, summed across a
time slice, does not depend on the slice.
"""

import numpy as np

from causalvp import LatticeParams
from causalvp.linfield import (
    LatticeJetState,
    lattice_evolve,
    lin_residual,
    plane_wave,
    plane_wave_state,
    scalar_mode_state,
    scalar_roots,
)
from causalvp.symplectic import Region, conservation_sweep, state_jets, surface_layer_integral
from causalvp.lagrangians import LatticeLagrangian

params = LatticeParams()
W = 32

# %%
# Plane waves travel at the lattice speed of light with no dispersion.
wave = lattice_evolve(plane_wave_state(W, m=3), params, steps=50)
err = np.max(np.abs(wave.v_phi - plane_wave(W, 3, wave.times)))
print(f"plane wave m=3 after 50 steps: max deviation {err:.2e}")
print(f"weak-EL residual of the evolved state: {lin_residual(wave, params).max_wave_residual:.2e}")

# %%
# The scalar recurrence has one decaying and one growing root.
r_minus, r_plus = scalar_roots(params)
print(f"\nscalar roots r- = {r_minus}, r+ = {r_plus}")

# %%
# Two solutions with compactly supported Cauchy data.
rng = np.random.default_rng(0)


def bump():
    v = np.zeros((2, W))
    v[:, 10:16] = rng.standard_normal((2, 6))
    return LatticeJetState(W, 0, np.zeros((2, W)), v)


u = lattice_evolve(bump() + scalar_mode_state(params, W, rng.standard_normal(W), "minus"), params, 30)
v = lattice_evolve(bump() + scalar_mode_state(params, W, rng.standard_normal(W), "plus"), params, 30)
rep = conservation_sweep(u, v, params)
print("\n  t   sigma on the past of slice t")
for t in list(rep.values)[::5]:
    print(f"{t:3d}   {rep.values[t]: .15f}")
print(f"max deviation {rep.max_deviation:.2e}")

# %%
# Over a bounded box the flux in equals the flux out.
rho, ju, jv = state_jets(u, v)
box = Region.box(5, 20, 4, 24)
print(f"\nsigma over a compact box: {surface_layer_integral(box, ju, jv, rho, LatticeLagrangian(params, W)):.2e}")
