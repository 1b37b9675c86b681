import math

import numpy as np
import pytest
from oracles import exact_varied_action_difference, lattice_kernel_at_rest

from causalvp.eulerlagrange import ProbeSpec, calibrate_nu
from causalvp.lagrangians import LatticeParams, SphereLagrangian
from causalvp.measures import LatticeWindow, action, pair_matrix
from causalvp.minimality import (
    AnnealSchedule,
    ConvergenceError,
    PositivityError,
    align_to_octahedron,
    anneal_sphere,
    apply_L_rho,
    certify_local_min,
    lattice_spectrum,
    lattice_spectrum_min,
    lattice_stencil,
    octahedron,
    pairwise_angles,
    project_zero_mean,
    quadratic_form,
    rayleigh_min,
    second_variation,
)

P = LatticeParams()


@pytest.fixture(scope="module")
def small():
    win = LatticeWindow(16, 8)
    return win.measure(), win.lagrangian(P)


def interior_psi(rng, rho, T):
    t = rho.points[:, 0]
    inside = (t >= 1) & (t <= T - 2)
    psi = np.zeros(len(rho))
    psi[inside] = rng.standard_normal(inside.sum())
    psi[inside] -= psi[inside].mean()
    return psi


def test_kernel_matches_neighbour_rule(small):
    rho, L = small
    np.testing.assert_array_equal(pair_matrix(L, rho.points, rho.points), lattice_kernel_at_rest(16, 8, 5.0, 2.0))


def test_L_rho_matches_stencil(small):
    rho, L = small
    psi = np.random.default_rng(0).standard_normal(len(rho))
    grid = psi.reshape(16, 8)
    np.testing.assert_allclose(apply_L_rho(psi, rho, L).reshape(16, 8), lattice_stencil(grid, P), atol=1e-13)


def test_spectrum_formula_against_dense_eigenvalues():
    T = 9
    M = lattice_kernel_at_rest(T, 1, 5.0, 2.0)
    np.testing.assert_allclose(np.sort(lattice_spectrum(T, P)), np.linalg.eigvalsh(M), atol=1e-12)
    assert lattice_spectrum_min(32, 32, P) == pytest.approx(5 - 4 * math.cos(math.pi / 33), abs=1e-14)
    with pytest.raises(ValueError):
        lattice_spectrum_min(4, 1, P)


def test_rayleigh_min_small_window(small):
    rho, L = small
    got = rayleigh_min(rho, L)
    assert got == pytest.approx(lattice_spectrum_min(16, 8, P), abs=1e-8)
    assert got >= P.lambda_A - 2 * P.lambda_I - 1e-12


def test_rayleigh_min_without_interaction():
    win = LatticeWindow(6, 8)
    p = LatticeParams.unchecked(lambda_I=0.0)
    assert rayleigh_min(win.measure(), win.lagrangian(p)) == pytest.approx(5.0, abs=1e-12)


def test_rayleigh_min_errors(small):
    rho, L = small
    with pytest.raises(ConvergenceError) as err:
        rayleigh_min(rho, L, iterations=3)
    assert err.value.iterations == 3
    one = LatticeWindow(1, 8).measure()
    with pytest.raises(ValueError):
        rayleigh_min(type(one)(one.points[:1], one.weights[:1]), L)


def test_quadratic_form_symmetric_and_bounded(small):
    rho, L = small
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal(len(rho)), rng.standard_normal(len(rho))
    assert quadratic_form(a, b, rho, L) == pytest.approx(quadratic_form(b, a, rho, L), rel=1e-13)
    # |<a, L b>| <= (lambda_A + 2 lambda_I) |a| |b| by Young's inequality
    assert abs(quadratic_form(a, b, rho, L)) <= 9.0 * np.linalg.norm(a) * np.linalg.norm(b)
    a0 = project_zero_mean(a, rho.weights)
    assert quadratic_form(a0, a0, rho, L) >= lattice_spectrum_min(16, 8, P) * (a0 @ a0) - 1e-9


def test_second_variation_against_exact_oracle(small):
    rho, L = small
    K = lattice_kernel_at_rest(16, 8, 5.0, 2.0)
    rng = np.random.default_rng(2)
    for _ in range(30):
        psi = interior_psi(rng, rho, 16)
        for tau in (1e-3, 1e-2, 0.1):
            exact = float(exact_varied_action_difference(rho.weights, psi, tau, K))
            quad = tau * tau * quadratic_form(psi, psi, rho, L)
            assert exact == pytest.approx(quad, rel=1e-10)
            assert second_variation(psi, tau, rho, L, nu=P.nu()) == pytest.approx(exact, rel=1e-10)
            assert second_variation(psi, tau, rho, L) == pytest.approx(exact, rel=1e-10)


def test_second_variation_edge_cases(small):
    rho, L = small
    psi = interior_psi(np.random.default_rng(3), rho, 16)
    assert second_variation(psi, 0.0, rho, L) == 0.0
    with pytest.raises(ValueError):
        second_variation(psi + 1.0, 1e-3, rho, L)
    big = np.zeros(len(rho))
    big[10], big[11] = 5.0, -5.0
    with pytest.raises(PositivityError):
        second_variation(big, 1.0, rho, L)


def test_certify_lattice():
    win = LatticeWindow(12, 16)
    rho, L = win.measure(), win.lagrangian(P)
    cert = certify_local_min(rho, L, P.nu(), ProbeSpec(300, 0))
    assert cert.verdict and cert.el_ok and cert.strict_off_support_ok and cert.lagrangian_bounded_ok
    assert cert.spectral_epsilon == pytest.approx(lattice_spectrum_min(12, 16, P), abs=1e-8)
    assert cert.details["lagrangian_max_sampled"] <= cert.details["lagrangian_bound"]


def test_certify_lattice_fails_without_quartic_term():
    win = LatticeWindow(12, 16)
    rho, L = win.measure(), win.lagrangian(LatticeParams(delta=0.0))
    cert = certify_local_min(rho, L, P.nu(), ProbeSpec(300, 0))
    assert cert.el_ok and not cert.strict_off_support_ok and not cert.verdict


def test_certify_wrong_nu():
    win = LatticeWindow(12, 16)
    rho, L = win.measure(), win.lagrangian(P)
    assert not certify_local_min(rho, L, 17.0, ProbeSpec(100, 0)).el_ok


def test_certify_sphere_reports_without_certifying():
    rho, S = octahedron(), SphereLagrangian()
    cert = certify_local_min(rho, S, calibrate_nu(rho, S), ProbeSpec(500, 0))
    assert cert.el_ok and cert.strict_off_support_ok and cert.lagrangian_bounded_ok
    assert not cert.spectral_certified and not cert.verdict
    assert cert.spectral_epsilon == pytest.approx(8 / 3, abs=1e-10)
    assert set(cert.to_dict()) >= {"verdict", "spectral_epsilon", "details"}


def test_octahedron_weight_perturbations_increase_action():
    rho, S = octahedron(), SphereLagrangian()
    base = action(rho, S)
    rng = np.random.default_rng(5)
    for _ in range(50):
        psi = project_zero_mean(rng.standard_normal(6), rho.weights)
        assert second_variation(psi, 0.05, rho, S) > 0
        varied = type(rho)(rho.points, rho.weights * (1 + 0.05 * psi), "sphere")
        assert action(varied, S) > base


FAST = AnnealSchedule(proposals_per_stage=60, stages=60, polish_stages=30)


def test_anneal_single_point():
    res = anneal_sphere(1, FAST, seed=0)
    assert res.action == 16.0 and len(res.measure) == 1
    with pytest.raises(ValueError):
        anneal_sphere(0)


def test_anneal_two_points_leave_the_interaction_range():
    # any pair at angle >= pi/2 has L = 0, leaving only the diagonal 2 * 16 / 4
    res = anneal_sphere(2, FAST, seed=1)
    p, q = res.measure.points
    assert p @ q <= 1e-9
    assert res.action == pytest.approx(8.0, abs=1e-9)


def test_anneal_is_deterministic():
    a = anneal_sphere(4, FAST, seed=3)
    b = anneal_sphere(4, FAST, seed=3)
    np.testing.assert_array_equal(a.measure.points, b.measure.points)
    assert a.history == b.history


def test_align_recovers_rotation():
    from scipy.spatial.transform import Rotation

    R = Rotation.from_rotvec([0.4, 1.0, -0.2])
    pts = R.apply(octahedron().points)[[3, 0, 5, 1, 4, 2]]
    aligned, _, _, err = align_to_octahedron(pts)
    assert err <= 1e-10
    ang = pairwise_angles(pts)
    assert np.sum(np.isclose(ang, np.pi)) == 3 and np.sum(np.isclose(ang, np.pi / 2)) == 12
    with pytest.raises(ValueError):
        align_to_octahedron(pts[:5])
