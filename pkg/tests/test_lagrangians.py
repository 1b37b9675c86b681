import math

import numpy as np
import pytest

from causalvp.lagrangians import (
    CfsLagrangian,
    CfsParams,
    LatticeLagrangian,
    LatticeParams,
    ParameterError,
    SphereLagrangian,
    SphereParams,
    cfs_L,
    lattice_L,
    numeric_pair_derivative,
    semi_derivative,
    sphere_L,
)

P = LatticeParams(eps=0.1, delta=1.0, lambda_I=2.0, lambda_A=5.0)


def oracle_lattice(dt, ds, dphi, p=P):
    """Term-by-term transcription of the four-term Lagrangian."""
    def ball(ct, cs):
        return 1.0 if (dt - ct) ** 2 + (ds - cs) ** 2 < p.eps ** 2 else 0.0

    chi_a = 1.0 if abs(dt) < 1 and abs(ds) < 1 else 0.0
    chi_i = 1.0 if dt * dt - ds * ds > 0 and abs(dt) < 1 + p.eps else 0.0
    f = ball(0, 1) + ball(0, -1) - ball(1, 0) - ball(-1, 0)
    V = 1 - math.cos(dphi)
    return p.lambda_A * chi_a + p.lambda_I * chi_i + V * f + p.delta * ball(0, 0) * V * V


# -- parameters ---------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(eps=0.0), dict(eps=0.25), dict(delta=-1.0), dict(lambda_I=1.9),
                                dict(lambda_A=4.05)])
def test_lattice_params_rejected(kw):
    with pytest.raises(ParameterError):
        LatticeParams(**kw)


def test_unchecked_params_allow_degenerate_values():
    p = LatticeParams.unchecked(lambda_I=0.0)
    assert p.lambda_I == 0.0 and p.lambda_A == 5.0


def test_sphere_and_cfs_params_rejected():
    with pytest.raises(ParameterError):
        SphereParams(tau=0.5)
    with pytest.raises(ParameterError):
        CfsParams(kappa=0.0)
    with pytest.raises(ParameterError):
        CfsParams(n=0)


def test_nu_formula():
    assert P.nu() == 18.0


# -- lattice values -----------------------------------------------------------

def test_lattice_diagonal_is_lambda_A():
    assert lattice_L([0, 0, 0.3], [0, 0, 0.3], P) == 5.0


def test_lattice_temporal_neighbour_is_lambda_I():
    assert lattice_L([1, 0, 0], [0, 0, 0], P) == 2.0


def test_lattice_spatial_neighbour_at_phase_pi():
    assert lattice_L([0, 1, math.pi], [0, 0, 0], P) == 2.0


def test_lattice_matches_term_oracle_on_random_pairs():
    rng = np.random.default_rng(3)
    L = LatticeLagrangian(P)
    d = rng.uniform(-2.5, 2.5, size=(4000, 2))
    # bias a quarter of the samples into the eps-balls and boundaries
    d[:1000] = np.round(d[:1000]) + rng.uniform(-0.12, 0.12, size=(1000, 2))
    phi = rng.uniform(-math.pi, math.pi, size=4000)
    x = np.column_stack([d, phi])
    y = np.zeros_like(x)
    got = L(x, y)
    want = [oracle_lattice(a, b, c) for a, b, c in x]
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-15)


def test_lattice_periodic_wrap():
    L = LatticeLagrangian(P, width=8)
    assert L([0, 7, 0], [0, 0, 0]) == L([0, -1, 0], [0, 0, 0])
    assert L([1, 0, 0], [0, 7.5, 0]) == L([1, 0.5, 0], [0, 0, 0])


def test_lattice_width_too_small():
    with pytest.raises(ParameterError):
        LatticeLagrangian(P, width=4)


def test_lattice_vanishes_beyond_range():
    rng = np.random.default_rng(0)
    L = LatticeLagrangian(P)
    d = rng.uniform(2.0, 6.0, size=(500, 2)) * rng.choice([-1, 1], size=(500, 2))
    x = np.column_stack([d, rng.uniform(-3, 3, 500)])
    assert np.all(L(x, np.zeros_like(x)) == 0.0)
    assert not np.any(L.in_range(x, np.zeros_like(x)))


def test_lattice_upper_bound():
    assert LatticeLagrangian(P).upper_bound() == 5 + 2 + 2 + 4


def test_lattice_lsc_at_indicator_boundaries():
    L = LatticeLagrangian(P)
    for boundary, inward in [((1.0, 0.5), (-1, 0)), ((0.5, 1.0), (0, -1)), ((1.1, 0.0), (-1, 0)),
                             ((0.5, 0.5), (1, 0))]:
        b = np.array([*boundary, 0.0])
        val = L(b, np.zeros(3))
        approach = [L(b + h * np.array([*inward, 0.0]), np.zeros(3)) for h in np.logspace(-12, -3, 10)]
        # strict inequalities: boundary value is the lower one
        assert min(approach) >= val


# -- sphere values ------------------------------------------------------------

@pytest.mark.parametrize("theta, expected", [(0.0, 16.0), (math.pi / 2, 0.0), (3 * math.pi / 4, 0.0)])
def test_sphere_values(theta, expected):
    x = np.array([1.0, 0.0, 0.0])
    y = np.array([math.cos(theta), math.sin(theta), 0.0])
    assert sphere_L(x, y) == pytest.approx(expected, abs=1e-13)


def test_sphere_closed_form_for_sqrt2():
    rng = np.random.default_rng(1)
    S = SphereLagrangian()
    theta = rng.uniform(0, math.pi, 300)
    c = np.cos(theta)
    x = np.tile([1.0, 0.0, 0.0], (300, 1))
    y = np.column_stack([c, np.sin(theta), np.zeros(300)])
    np.testing.assert_allclose(S(x, y), np.maximum(0, 8 * (1 + c) * c), atol=1e-12)


def test_sphere_kink_semi_derivatives():
    S = SphereLagrangian()
    x = np.array([1.0, 0.0, 0.0])
    y = np.array([0.0, 1.0, 0.0])
    v = np.array([0.0, 1.0, 0.0])  # toward y
    assert semi_derivative(S, x, y, v, "plus") == pytest.approx(8.0, rel=1e-12)
    assert semi_derivative(S, x, y, -v, "plus") == 0.0
    assert semi_derivative(S, x, y, 0.5 * v, "plus") == pytest.approx(4.0, rel=1e-12)


def test_sphere_angle_derivative_identity():
    S = SphereLagrangian()
    assert S.dD_of_angle(math.pi / 2) == pytest.approx(-8.0)


# -- CFS ------------------------------------------------------------------------

def test_cfs_hand_case():
    x = np.diag([1.0, -1.0])
    assert cfs_L(x, x, CfsParams(n=1, kappa=1.0)) == 4.0
    assert cfs_L(x, x, CfsParams(n=1, kappa=2.5)) == 10.0


def test_cfs_orthogonal_supports():
    x = np.diag([1.0, 0.0, 0.0, 0.0])
    y = np.diag([0.0, 0.0, 1.0, -1.0])
    assert cfs_L(x, y) == 0.0


def _random_pair(rng, d, k):
    out = []
    for _ in range(2):
        A = rng.standard_normal((d, k)) + 1j * rng.standard_normal((d, k))
        m = A @ np.diag(rng.standard_normal(k)) @ A.conj().T
        m = 0.5 * (m + m.conj().T)
        out.append(m / np.linalg.norm(m, 2))
    return out


def oracle_cfs(x, y, n, kappa):
    lam = np.linalg.eigvals(x @ y)
    a = np.sort(np.abs(lam))[::-1][: 2 * n]
    return np.sum((a[:, None] - a[None, :]) ** 2) / (4 * n) + kappa * a.sum() ** 2


@pytest.mark.parametrize("n, d", [(1, 4), (1, 6), (2, 6), (2, 8), (3, 8)])
def test_cfs_matches_full_eigen_oracle(n, d):
    rng = np.random.default_rng(10 * n + d)
    L = CfsLagrangian(CfsParams(n=n, kappa=0.7))
    for _ in range(30):
        x, y = _random_pair(rng, d, 2 * n)
        assert L(x, y) == pytest.approx(oracle_cfs(x, y, n, 0.7), rel=1e-9, abs=1e-12)


def test_cfs_eigenvalues_of_xy_and_yx_agree():
    rng = np.random.default_rng(2)
    L = CfsLagrangian()
    x, y = _random_pair(rng, 5, 2)
    a = np.sort_complex(L.nontrivial_eigenvalues(x, y))
    b = np.sort_complex(L.nontrivial_eigenvalues(y, x))
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_cfs_rejects_bad_input():
    L = CfsLagrangian()
    with pytest.raises(ValueError, match="self-adjoint"):
        L(np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2))
    with pytest.raises(ValueError, match="exceeds"):
        L(np.eye(9), np.eye(9))
    with pytest.raises(ValueError, match="rank"):
        L(np.eye(3), np.eye(3))


def test_cfs_has_no_analytic_derivative():
    with pytest.raises(ValueError):
        semi_derivative(CfsLagrangian(), np.eye(2), np.eye(2)[:, ::-1], np.eye(2), method="analytic")


# -- semi-derivatives -----------------------------------------------------------

def test_lattice_phi_derivative_vanishes_at_support():
    L = LatticeLagrangian(P)
    x = np.zeros(3)
    e_phi = np.array([0.0, 0.0, 1.0])
    assert semi_derivative(L, x, x, e_phi) == 0.0
    assert semi_derivative(L, x, np.array([0.0, 1.0, 0.0]), e_phi) == 0.0


def test_lattice_jump_detection():
    L = LatticeLagrangian(P)
    x = np.zeros(3)
    y = np.array([1.0, 0.0, 0.0])  # x - y = (-1, 0) lies on the boundary of A
    assert semi_derivative(L, x, y, [1.0, 0.0, 0.0], "plus") == math.inf
    assert semi_derivative(L, x, y, [-1.0, 0.0, 0.0], "plus") == 0.0
    # minus side is minus the plus derivative along -v
    assert semi_derivative(L, x, y, [-1.0, 0.0, 0.0], "minus") == -math.inf


def test_lattice_time_boundary_of_I():
    L = LatticeLagrangian(P)
    x = np.array([1.1, 0.0, 0.0])
    y = np.zeros(3)
    assert semi_derivative(L, x, y, [-1.0, 0.0, 0.0]) == math.inf
    assert semi_derivative(L, x, y, [1.0, 0.0, 0.0]) == 0.0


def test_lattice_downward_jump_into_negative_ball():
    # entering the temporal eps-ball with a phase difference lowers L
    L = LatticeLagrangian(P)
    x = np.array([1.0, P.eps, 1.0])
    assert semi_derivative(L, x, np.zeros(3), [0.0, -1.0, 0.0]) == -math.inf


def test_analytic_and_numeric_agree_away_from_boundaries():
    rng = np.random.default_rng(7)
    L = LatticeLagrangian(P)
    S = SphereLagrangian()
    checked = 0
    for _ in range(400):
        x = np.array([*rng.uniform(-1.5, 1.5, 2), rng.uniform(-3, 3)])
        y = np.zeros(3)
        v = rng.standard_normal(3)
        a = semi_derivative(L, x, y, v, "plus", "analytic")
        # skip points within a step of an indicator boundary
        if L(L.curve(x, v, 1e-4), y) - L(x, y) > 1e-2 or not math.isfinite(a):
            continue
        n = semi_derivative(L, x, y, v, "plus", "numeric")
        assert a == pytest.approx(n, abs=1e-6)
        checked += 1
    assert checked > 200
    for _ in range(200):
        x, y = rng.standard_normal((2, 3))
        x, y = x / np.linalg.norm(x), y / np.linalg.norm(y)
        if abs(S.D(x @ y)) < 1e-2:
            continue
        v = rng.standard_normal(3)
        a = semi_derivative(S, x, y, v, "plus", "analytic")
        n = semi_derivative(S, x, y, v, "plus", "numeric")
        assert a == pytest.approx(n, abs=1e-6)


def test_numeric_pair_derivative_linear_function():
    class Lin(LatticeLagrangian):
        def __call__(self, x, y):
            return float(np.sum(x) - np.sum(y))

    L = Lin(P)
    d = numeric_pair_derivative(L, np.zeros(3), np.zeros(3), np.array([1.0, 2.0, 0.0]), np.zeros(3))
    assert d == pytest.approx(3.0, rel=1e-10)


def test_bad_side_rejected():
    with pytest.raises(ValueError):
        semi_derivative(SphereLagrangian(), [1, 0, 0], [0, 1, 0], [0, 1, 0], side="up")
