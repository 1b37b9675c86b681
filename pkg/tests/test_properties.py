"""Hypothesis checks of the structural invariants."""
import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from causalvp.eulerlagrange import Jet, jet_commutator, FiniteDifferenceOracle
from causalvp.geometry import rotate_about_axis, sphere_angle, wrap_angle
from causalvp.lagrangians import CfsLagrangian, CfsParams, LatticeLagrangian, LatticeParams, SphereLagrangian
from causalvp.linfield import LatticeJetState, lattice_evolve, scalar_roots
from causalvp.measures import (
    DiscreteMeasure,
    LatticeWindow,
    SignedMeasure,
    action,
    action_difference,
    jordan_decompose,
    pair_matrix,
    push_forward,
)
from causalvp.minimality import lattice_stencil, octahedron
from causalvp.symplectic import Region, sigma_slice_lattice, state_jets, surface_layer_integral

P = LatticeParams()
W = 16
finite = st.floats(-1e3, 1e3, allow_nan=False)
unit = st.floats(-1.0, 1.0, allow_nan=False)
seeds = st.integers(0, 2**32 - 1)
vec3 = arrays(float, 3, elements=st.floats(-1, 1)).filter(lambda v: np.linalg.norm(v) > 1e-3)
fast = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])


# geometry

@given(finite)
def test_wrap_idempotent(phi):
    w = wrap_angle(phi)
    assert wrap_angle(w) == w and -math.pi <= w < math.pi


@given(vec3, vec3)
def test_sphere_angle_symmetric(x, y):
    assert sphere_angle(x, y) == sphere_angle(y, x)


@given(vec3, vec3, unit, unit)
def test_rotation_composes(x, axis, t1, t2):
    a = axis / np.linalg.norm(axis)
    lhs = rotate_about_axis(rotate_about_axis(x, a, 3 * t2), a, 3 * t1)
    np.testing.assert_allclose(lhs, rotate_about_axis(x, a, 3 * (t1 + t2)), atol=1e-12)


# lagrangians

lattice_pts = st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(-4, 4))


@given(lattice_pts, lattice_pts)
def test_lattice_symmetric_nonnegative_and_bounded(x, y):
    L = LatticeLagrangian(P, W)
    v = L(np.array(x), np.array(y))
    assert v == L(np.array(y), np.array(x))
    assert 0.0 <= v <= L.upper_bound()


@given(lattice_pts, st.floats(0, 10))
def test_lattice_range(x, shift):
    L = LatticeLagrangian(P)
    y = np.array(x) + [2.0 + shift, 0.3, 0.1]
    assert L(np.array(x), y) == 0.0
    y = np.array(x) + [0.0, 2.0 + shift, 0.1]
    assert L(np.array(x), y) == 0.0


@given(vec3, vec3)
def test_sphere_symmetric_nonnegative(x, y):
    S = SphereLagrangian()
    x, y = x / np.linalg.norm(x), y / np.linalg.norm(y)
    assert S(x, y) == S(y, x) >= 0.0


def _rank2(rng, d):
    A = rng.standard_normal((d, 2)) + 1j * rng.standard_normal((d, 2))
    m = A @ np.diag(rng.standard_normal(2)) @ A.conj().T
    m = 0.5 * (m + m.conj().T)
    return m / np.linalg.norm(m, 2)


@fast
@given(seeds, st.integers(2, 6))
def test_cfs_symmetric_nonnegative(seed, d):
    rng = np.random.default_rng(seed)
    x, y = _rank2(rng, d), _rank2(rng, d)
    L = CfsLagrangian(CfsParams())
    a, b = L(x, y), L(y, x)
    assert abs(a - b) <= 1e-10 and a >= 0 and b >= 0


# measures

@fast
@given(seeds, st.integers(0, 20), st.integers(-20, 20))
def test_lattice_translation_invariance(seed, dt, ds):
    rng = np.random.default_rng(seed)
    win = LatticeWindow(6, W)
    rho = win.measure()
    rho = DiscreteMeasure(rho.points, rng.uniform(0.5, 2.0, len(rho)))
    L = win.lagrangian(P)
    moved = push_forward(rho, lambda p: p + [dt, ds, 0.0])
    assert abs(action(moved, L) - action(rho, L)) <= 1e-10


@fast
@given(vec3, st.floats(-math.pi, math.pi))
def test_sphere_rotation_invariance(axis, angle):
    a = axis / np.linalg.norm(axis)
    rho = octahedron()
    S = SphereLagrangian()
    moved = push_forward(rho, lambda p: rotate_about_axis(p, a, angle))
    assert abs(action(moved, S) - action(rho, S)) <= 1e-10


@fast
@given(seeds)
def test_action_difference_matches_subtraction(seed):
    rng = np.random.default_rng(seed)
    S = SphereLagrangian()
    pts = rng.standard_normal((5, 3))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    rho = DiscreteMeasure(pts, rng.uniform(0.5, 1.5, 5), "sphere")
    pts2 = rng.standard_normal((4, 3))
    pts2 /= np.linalg.norm(pts2, axis=1, keepdims=True)
    w2 = rng.uniform(0.5, 1.5, 4)
    tilde = DiscreteMeasure(pts2, w2 * rho.mass() / w2.sum(), "sphere")
    fwd = action_difference(rho, tilde, S)
    back = action_difference(tilde, rho, S)
    assert abs(fwd - (action(tilde, S) - action(rho, S))) <= 1e-10
    assert abs(fwd + back) <= 1e-10


@given(arrays(float, 6, elements=st.floats(-10, 10)))
def test_jordan_round_trip(w):
    pts = np.column_stack([np.arange(6.0), np.zeros(6), np.zeros(6)])
    mu = SignedMeasure(pts, w)
    pos, neg = jordan_decompose(mu)
    back = dict(zip(map(tuple, pos.points), pos.weights))
    for p, x in zip(map(tuple, neg.points), neg.weights):
        back[p] = back.get(p, 0.0) - x
    for p, x in zip(map(tuple, pts), w):
        assert back.get(p, 0.0) == x


# jets

@fast
@given(seeds)
def test_commutator_antisymmetric(seed):
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((4, 2))
    c = rng.standard_normal(6)

    def jet(k):
        a_f = lambda p: c[k] * p[0] * p[1]
        u_f = lambda p: np.array([c[k + 1] * p[1], p[0] ** 2])
        return Jet([a_f(p) for p in pts], [u_f(p) for p in pts], a_f, u_f)

    u, v = jet(0), jet(2)
    oracle = FiniteDifferenceOracle(pts)
    uv, vu = jet_commutator(u, v, oracle), jet_commutator(v, u, oracle)
    np.testing.assert_allclose(uv.a, -vu.a, atol=1e-12)
    np.testing.assert_allclose(uv.u, -vu.u, atol=1e-12)


# linearized fields

@given(st.floats(2.0, 50.0), st.floats(0.11, 20.0))
def test_scalar_roots_relations(lam_I, gap):
    p = LatticeParams(lambda_I=lam_I, lambda_A=2 * lam_I + gap)
    rm, rp = scalar_roots(p)
    assert abs(rm * rp - 1) <= 1e-12
    assert abs(rm + rp + p.lambda_A / p.lambda_I) <= 1e-12 * max(1.0, p.lambda_A / p.lambda_I)


def _random_state(rng, steps):
    v = rng.standard_normal((2, W))
    return lattice_evolve(LatticeJetState(W, 0, np.zeros((2, W)), v), P, steps)


@fast
@given(seeds, st.integers(1, 40))
def test_time_reversal(seed, n):
    rng = np.random.default_rng(seed)
    out = _random_state(rng, n)
    back = lattice_evolve(LatticeJetState(W, 0, np.zeros((2, W)), out.v_phi[::-1][:2].copy()), P, n)
    np.testing.assert_allclose(back.v_phi[::-1][:2], out.v_phi[:2], atol=1e-9)


@fast
@given(seeds, st.floats(-3, 3), st.floats(-3, 3))
def test_superposition(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    x = LatticeJetState(W, 0, 1e-3 * rng.standard_normal((2, W)), rng.standard_normal((2, W)))
    y = LatticeJetState(W, 0, 1e-3 * rng.standard_normal((2, W)), rng.standard_normal((2, W)))
    lhs = lattice_evolve(alpha * x + beta * y, P, 15)
    rhs = alpha * lattice_evolve(x, P, 15) + beta * lattice_evolve(y, P, 15)
    np.testing.assert_allclose(lhs.v_phi, rhs.v_phi, atol=1e-10)
    np.testing.assert_allclose(lhs.b, rhs.b, rtol=1e-10, atol=1e-10)


# symplectic form

@fast
@given(seeds, st.integers(2, 8), st.integers(1, 6))
def test_sigma_antisymmetry_and_slice_additivity(seed, t1, gap):
    rng = np.random.default_rng(seed)
    u, v = _random_state(rng, 18), _random_state(rng, 18)
    rho, ju, jv = state_jets(u, v)
    L = LatticeLagrangian(P, W)
    t2 = t1 + gap
    past = [surface_layer_integral(Region.half_space_past(t), ju, jv, rho, L) for t in (t1, t2)]
    rev = surface_layer_integral(Region.half_space_past(t1), jv, ju, rho, L)
    assert abs(past[0] + rev) <= 1e-12 * max(1, abs(rev))
    # the slab between t1 and t2 carries the difference of the two half-space values
    slab = surface_layer_integral(Region.box(t1 + 1, t2, 0, W - 1), ju, jv, rho, L)
    assert abs((past[1] - past[0]) - slab) <= 1e-12 * max(1, abs(past[0]), abs(past[1]))


@fast
@given(seeds, st.floats(-3, 3))
def test_sigma_bilinear(seed, alpha):
    rng = np.random.default_rng(seed)
    u1, u2, v = (_random_state(rng, 10) for _ in range(3))
    lhs = sigma_slice_lattice(4, alpha * u1 + u2, v, P)
    rhs = alpha * sigma_slice_lattice(4, u1, v, P) + sigma_slice_lattice(4, u2, v, P)
    assert abs(lhs - rhs) <= 1e-10 * max(1, abs(lhs))


# minimality

def test_young_bound_on_large_window():
    # 10^5 zero-mean samples on 32 x 32; weights are 1, so <psi, L psi> = sum psi * stencil(psi)
    rng = np.random.default_rng(0)
    gap = P.lambda_A - 2 * P.lambda_I
    for _ in range(10):
        psi = rng.standard_normal((32, 32, 10_000))
        psi -= psi.mean(axis=(0, 1), keepdims=True)
        form = np.einsum("tsk,tsk->k", psi, lattice_stencil(psi, P))
        norm2 = np.einsum("tsk,tsk->k", psi, psi)
        assert np.all(form >= gap * norm2 * (1 - 1e-12))


def test_octahedron_weight_probing():
    # 10^5 zero-mean perturbations with sup-norm 0.1, evaluated as a quadratic form
    rho, S = octahedron(), SphereLagrangian()
    K = pair_matrix(S, rho.points, rho.points)
    rng = np.random.default_rng(1)
    psi = rng.uniform(-1, 1, (100_000, 6))
    psi -= psi.mean(axis=1, keepdims=True)
    psi *= 0.1 / np.max(np.abs(psi), axis=1, keepdims=True)
    wt = rho.weights * (1 + psi)
    diff = np.einsum("ki,ij,kj->k", wt, K, wt) - rho.weights @ K @ rho.weights
    assert diff.min() >= -1e-12
    for k in range(0, 100_000, 50):
        tilde = DiscreteMeasure(rho.points, wt[k], "sphere")
        assert abs(action_difference(rho, tilde, S) - diff[k]) <= 1e-12
