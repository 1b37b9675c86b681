"""Linearized field equations: the pairing <u, Delta v>, lattice evolution
and certified linearized solutions."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .eulerlagrange import Jet, valid_interior
from .lagrangians import LagrangianModel, LatticeLagrangian, LatticeParams, PLUS, MINUS
from .measures import DiscreteMeasure, LatticeWindow, interaction_pairs, row_sums

__all__ = [
    "L1ViolationError",
    "ScalarGrowthError",
    "LatticeJetState",
    "LinResidualReport",
    "lattice_evolve",
    "lin_pairing",
    "lin_residual",
    "lin_residual_jets",
    "scalar_roots",
    "plane_wave",
    "plane_wave_state",
    "scalar_mode_state",
    "jet_from_state",
    "sphere_rotation_jet",
    "state_to_csv",
    "state_to_json",
    "state_from_json",
]

GROWTH_LIMIT = 1e12


class L1ViolationError(ArithmeticError):
    """The derivative combination required of a linearized solution does not exist."""


class ScalarGrowthError(OverflowError):
    """Scalar amplitudes left the safe floating-point range during evolution."""

    def __init__(self, step: int, magnitude: float):
        super().__init__(
            f"scalar amplitude {magnitude:.3e} exceeds {GROWTH_LIMIT:.0e} at step {step}; "
            "the recurrence has a characteristic root of modulus > 1"
        )
        self.step = step
        self.magnitude = magnitude


@dataclass
class LatticeJetState:
    """Time slices ``t0, t0+1, ...`` of a lattice jet ``(b, v_phi)`` on ``W`` periodic sites.

    ``v_minkowski`` is the constant (t, s) component of the jet; it never
    enters a pairing.
    """

    width: int
    t0: int
    b: np.ndarray
    v_phi: np.ndarray
    v_minkowski: tuple = (0.0, 0.0)

    def __post_init__(self):
        self.b = np.atleast_2d(np.asarray(self.b, dtype=float))
        self.v_phi = np.atleast_2d(np.asarray(self.v_phi, dtype=float))
        if self.width < 8:
            raise ValueError(f"periodic width must be >= 8, got {self.width}")
        if self.b.shape != self.v_phi.shape or self.b.shape[1] != self.width:
            raise ValueError(f"slices must have shape (n_t, {self.width}); got {self.b.shape} and {self.v_phi.shape}")
        self.v_minkowski = tuple(float(c) for c in self.v_minkowski)

    @property
    def n_slices(self) -> int:
        return self.b.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.t0, self.t0 + self.n_slices)

    def slice(self, t: int):
        k = t - self.t0
        if not 0 <= k < self.n_slices:
            raise KeyError(f"slice t={t} not present (have {self.t0}..{self.t0 + self.n_slices - 1})")
        return self.b[k], self.v_phi[k]

    def window(self) -> LatticeWindow:
        return LatticeWindow(self.n_slices, self.width, self.t0)

    def __add__(self, other: "LatticeJetState") -> "LatticeJetState":
        self._same_grid(other)
        vm = tuple(a + b for a, b in zip(self.v_minkowski, other.v_minkowski))
        return LatticeJetState(self.width, self.t0, self.b + other.b, self.v_phi + other.v_phi, vm)

    def __mul__(self, c: float) -> "LatticeJetState":
        return LatticeJetState(self.width, self.t0, c * self.b, c * self.v_phi,
                               tuple(c * a for a in self.v_minkowski))

    __rmul__ = __mul__

    def _same_grid(self, other):
        if (self.width, self.t0, self.n_slices) != (other.width, other.t0, other.n_slices):
            raise ValueError("states live on different grids")


@dataclass
class LinResidualReport:
    max_scalar_residual: float
    max_wave_residual: float
    atoms_checked: int
    scalar_residual: np.ndarray | None = field(default=None, repr=False)
    wave_residual: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "max_scalar_residual": self.max_scalar_residual,
            "max_wave_residual": self.max_wave_residual,
            "atoms_checked": self.atoms_checked,
        }


def scalar_roots(params: LatticeParams):
    """Roots ``(r_minus, r_plus)`` of ``lambda_I r^2 + lambda_A r + lambda_I = 0``, ``|r_minus| < 1``."""
    a, c = params.lambda_I, params.lambda_A
    if a == 0:
        raise ValueError("scalar recurrence degenerates for lambda_I = 0")
    disc = c * c - 4 * a * a
    if disc < 0:
        raise ValueError("complex characteristic roots; lambda_A < 2 lambda_I")
    # avoid cancellation: compute the large root first
    r_plus = (-c - math.copysign(math.sqrt(disc), c)) / (2 * a)
    r_minus = a / (a * r_plus)
    return r_minus, r_plus


def lattice_evolve(state: LatticeJetState, params: LatticeParams, steps: int) -> LatticeJetState:
    """Append ``steps`` slices using the scalar and wave recurrences.

    ``b(t+1) = -(lambda_A/lambda_I) b(t) - b(t-1)`` and
    ``v(t+1, s) = v(t, s+1) + v(t, s-1) - v(t-1, s)``.
    """
    if state.n_slices < 2:
        raise ValueError("evolution needs two consecutive slices of Cauchy data")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    ratio = params.lambda_A / params.lambda_I
    n = state.n_slices
    b = np.empty((n + steps, state.width))
    v = np.empty_like(b)
    b[:n] = state.b
    v[:n] = state.v_phi
    for k in range(n, n + steps):
        b[k] = -ratio * b[k - 1] - b[k - 2]
        v[k] = np.roll(v[k - 1], -1) + np.roll(v[k - 1], 1) - v[k - 2]
        mag = float(np.max(np.abs(b[k]), initial=0.0))
        if not mag <= GROWTH_LIMIT:
            raise ScalarGrowthError(k - n + 1, mag)
    return LatticeJetState(state.width, state.t0, b, v, state.v_minkowski)


def plane_wave(width: int, m: int, times, phase: float = 0.0, direction: int = 1) -> np.ndarray:
    """``cos(k s - direction * k t + phase)`` with ``k = 2 pi m / W``; one row per time."""
    k = 2 * math.pi * m / width
    t = np.asarray(times, dtype=float)[:, None]
    s = np.arange(width)[None, :]
    return np.cos(k * s - direction * k * t + phase)


def plane_wave_state(width: int, m: int, t0: int = 0, phase: float = 0.0, direction: int = 1) -> LatticeJetState:
    v = plane_wave(width, m, [t0, t0 + 1], phase, direction)
    return LatticeJetState(width, t0, np.zeros_like(v), v)


def scalar_mode_state(params: LatticeParams, width: int, profile, mode: str = "minus", t0: int = 0) -> LatticeJetState:
    """Cauchy data ``b(t0 + k) = r^k * profile`` for ``k = 0, 1`` in one characteristic mode."""
    r_minus, r_plus = scalar_roots(params)
    r = r_minus if mode == "minus" else r_plus
    profile = np.asarray(profile, dtype=float).reshape(width)
    b = np.stack([profile, r * profile])
    return LatticeJetState(width, t0, b, np.zeros_like(b))


def jet_from_state(state: LatticeJetState) -> Jet:
    """The jet on the window measure of ``state`` (atoms in t-major order)."""
    n = state.n_slices * state.width
    u = np.zeros((n, 3))
    u[:, 0], u[:, 1] = state.v_minkowski
    u[:, 2] = state.v_phi.ravel()
    return Jet(state.b.ravel(), u)


# ---------------------------------------------------------------------------
# pairing


def _lattice_pairing_terms(u: Jet, v: Jet, idx, rho: DiscreteMeasure, L: LatticeLagrangian, nu: float):
    """Closed form of <u, Delta v> for jets with constant (t, s) components."""
    x = rho.points[idx]
    i, j, _ = interaction_pairs(L, x, rho.points)
    Lv, dL, ddL = L.phi_derivatives(x[i], rho.points[j])
    w = rho.weights[j]
    ii = np.asarray(idx)[i]
    bx, by = v.a[ii], v.a[j]
    vx, vy = v.u[ii, 2], v.u[j, 2]
    F = row_sums(len(idx), i, w * ((bx + by) * Lv + (vx - vy) * dL)) - v.a[idx] * nu / 2.0
    DF = row_sums(len(idx), i, w * ((bx + by) * dL + (vx - vy) * ddL))
    return u.a[idx] * F + u.u[idx, 2] * DF


def _check_lattice_jets(u: Jet, v: Jet):
    for name, jet in (("u", u), ("v", v)):
        mk = jet.u[:, :2]
        if len(mk) and not np.all(mk == mk[0]):
            if name == "v":
                raise L1ViolationError(
                    "v has a non-constant (t, s) component; the required derivative combination is infinite"
                )
            return False
    return bool(len(u.u) == 0 or np.all(u.u[:, :2] == 0))


def _joint_derivative(L: LagrangianModel, x, y, vx, vy, tol=1e-8) -> float:
    """Two-sided ``(D_{1,v} + D_{2,v}) L``; raises when the sides disagree."""
    plus = L.pair_derivative(x, y, vx, vy, PLUS)
    minus = L.pair_derivative(x, y, vx, vy, MINUS)
    if not (math.isfinite(plus) and math.isfinite(minus)) or abs(plus - minus) > tol * (1 + abs(plus)):
        raise L1ViolationError(f"one-sided derivatives {plus} and {minus} differ")
    return 0.5 * (plus + minus)


def _generic_F(point, i, v: Jet, rho: DiscreteMeasure, L: LagrangianModel, nu: float) -> float:
    bx = v.scalar_at(i, point)
    vx = v.vector_at(i, point)
    terms = []
    for j, (y, w) in enumerate(zip(rho.points, rho.weights)):
        Lxy = L(point, y)
        vy = v.u[j] if v.vector_field is None else v.vector_at(j, y)
        terms.append(w * ((bx + v.a[j]) * Lxy + _joint_derivative(L, point, y, vx, vy)))
    return math.fsum(terms) - bx * nu / 2.0


def lin_pairing(u: Jet, v: Jet, x_index: int, rho: DiscreteMeasure, L: LagrangianModel, nu: float,
                steps=(1e-4, 5e-5)) -> float:
    """``<u, Delta v>`` at the atom ``x_index``.

    Lattice jets with vanishing (t, s) test components use the closed form;
    otherwise the inner derivative is analytic (or Richardson) and the outer
    derivative along ``u`` is a one-sided Richardson difference.  ``v`` may
    carry a ``vector_field`` extension (used off the support).
    """
    if isinstance(L, LatticeLagrangian) and L.analytic:
        if _check_lattice_jets(u, v):
            return float(_lattice_pairing_terms(u, v, np.array([x_index]), rho, L, nu)[0])
    x = rho.points[x_index]
    F0 = _generic_F(x, x_index, v, rho, L, nu)
    ux = u.u[x_index]
    if not np.any(ux):
        return float(u.a[x_index] * F0)
    h1, h2 = steps
    d1 = (_generic_F(L.curve(x, ux, h1), x_index, v, rho, L, nu) - F0) / h1
    d2 = (_generic_F(L.curve(x, ux, h2), x_index, v, rho, L, nu) - F0) / h2
    return float(u.a[x_index] * F0 + (h1 * d2 - h2 * d1) / (h1 - h2))


def lin_residual(state: LatticeJetState, params: LatticeParams, nu: float | None = None) -> LinResidualReport:
    """Residuals of an evolved lattice state against delta-supported test jets.

    The scalar test jet at ``x`` yields ``lambda_A b + lambda_I (b(t+1) + b(t-1)) + b ell``
    and the phi test jet yields ``-sum_y f(x - y) v(y)``; both are evaluated on
    valid-interior atoms of the state's window.
    """
    nu = params.nu() if nu is None else nu
    win = state.window()
    rho = win.measure()
    L = win.lagrangian(params)
    jet = jet_from_state(state)
    _check_lattice_jets(Jet.zeros(len(jet), 3), jet)
    idx = np.flatnonzero(valid_interior(rho, L))
    n = len(jet)
    scalar_test = Jet(np.ones(n), np.zeros((n, 3)))
    phi_u = np.zeros((n, 3))
    phi_u[:, 2] = 1.0
    phi_test = Jet(np.zeros(n), phi_u)
    if len(idx) == 0:
        return LinResidualReport(0.0, 0.0, 0, np.zeros(0), np.zeros(0))
    sres = _lattice_pairing_terms(scalar_test, jet, idx, rho, L, nu)
    wres = _lattice_pairing_terms(phi_test, jet, idx, rho, L, nu)
    return LinResidualReport(
        max_scalar_residual=float(np.max(np.abs(sres))),
        max_wave_residual=float(np.max(np.abs(wres))),
        atoms_checked=int(len(idx)),
        scalar_residual=sres,
        wave_residual=wres,
    )


def lin_residual_jets(v: Jet, rho: DiscreteMeasure, L: LagrangianModel, nu: float, test_jets, atoms=None) -> float:
    """``max |<u, Delta v>(x)|`` over the given test jets and atoms."""
    idx = np.flatnonzero(valid_interior(rho, L)) if atoms is None else np.asarray(atoms)
    worst = 0.0
    for u in test_jets:
        for i in idx:
            worst = max(worst, abs(lin_pairing(u, v, int(i), rho, L, nu)))
    return worst


def sphere_rotation_jet(axis, rho: DiscreteMeasure) -> Jet:
    """Jet ``(0, axis x x)`` of the rotation family about ``axis``."""
    k = np.asarray(axis, dtype=float)
    if abs(np.linalg.norm(k) - 1.0) > 1e-12:
        raise ValueError("rotation axis must be a unit vector")
    u = np.cross(k, rho.points)
    return Jet(np.zeros(len(rho)), u, vector_field=lambda p: np.cross(k, p))


# ---------------------------------------------------------------------------
# export


def state_to_csv(state: LatticeJetState, path=None) -> str:
    """CSV with columns t,s,b,v_phi; written to ``path`` when given."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["t", "s", "b", "v_phi"])
    for k, t in enumerate(state.times):
        for s in range(state.width):
            wr.writerow([int(t), s, repr(float(state.b[k, s])), repr(float(state.v_phi[k, s]))])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def state_to_json(state: LatticeJetState) -> str:
    return json.dumps(
        {
            "width": state.width,
            "t0": state.t0,
            "b": state.b.tolist(),
            "v_phi": state.v_phi.tolist(),
            "v_minkowski": list(state.v_minkowski),
        },
        sort_keys=True,
    )


def state_from_json(text: str) -> LatticeJetState:
    d = json.loads(text)
    return LatticeJetState(d["width"], d["t0"], np.array(d["b"]), np.array(d["v_phi"]), tuple(d["v_minkowski"]))
