"""The surface-layer bilinear form sigma and its conservation on the lattice."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .eulerlagrange import Jet
from .lagrangians import LagrangianModel, LatticeLagrangian, LatticeParams, PLUS, MINUS
from .linfield import LatticeJetState, jet_from_state
from .measures import DiscreteMeasure, interaction_pairs

__all__ = [
    "WindowContaminationError",
    "Region",
    "SigmaReport",
    "sigma_integrand",
    "surface_layer_integral",
    "sigma_slice_lattice",
    "conservation_sweep",
    "sigma_series_csv",
    "state_jets",
]

SIDES = (PLUS, MINUS)


class WindowContaminationError(ValueError):
    """A region's surface layer reaches points missing from the truncation window."""


@dataclass(frozen=True)
class Region:
    """A set of configuration points given by a membership predicate on point stacks."""

    predicate: object
    label: str = "region"

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self.predicate(pts), dtype=bool).reshape(len(pts))

    @classmethod
    def empty(cls) -> "Region":
        return cls(lambda p: np.zeros(len(p), dtype=bool), "empty")

    @classmethod
    def half_space_past(cls, t: float) -> "Region":
        """Atoms with time coordinate ``<= t``."""
        return cls(lambda p: p[:, 0] <= t, f"past({t})")

    @classmethod
    def box(cls, t_lo, t_hi, s_lo, s_hi, width: int | None = None) -> "Region":
        """Closed box in (t, s); with ``width`` the s-range is read modulo the width."""

        def pred(p):
            s = p[:, 1] if width is None else np.mod(p[:, 1] - s_lo, width) + s_lo
            return (p[:, 0] >= t_lo) & (p[:, 0] <= t_hi) & (s >= s_lo) & (s <= s_hi)

        return cls(pred, f"box({t_lo},{t_hi},{s_lo},{s_hi})")


def _lattice_sigma(u: Jet, v: Jet, i, j, rho: DiscreteMeasure, L: LatticeLagrangian) -> np.ndarray:
    Lv, dL, ddL = L.phi_derivatives(rho.points[i], rho.points[j])
    a, b = u.a, v.a
    up, vp = u.u[:, 2], v.u[:, 2]
    # grad_{1,u} grad_{2,v} L with d_{y phi} = -d_{x phi}
    uv = a[i] * b[j] * Lv - a[i] * vp[j] * dL + b[j] * up[i] * dL - up[i] * vp[j] * ddL
    vu = b[i] * a[j] * Lv - b[i] * up[j] * dL + a[j] * vp[i] * dL - vp[i] * up[j] * ddL
    return uv - vu


def _lattice_ok(u: Jet, v: Jet) -> bool:
    return bool(np.all(u.u[:, :2] == u.u[:1, :2]) and np.all(v.u[:, :2] == v.u[:1, :2])) if len(u) else True


def _mixed(L, x, y, ux, vy, s, s2, steps=(1e-4, 5e-5)):
    """``D^s_{1,u} D^{s2}_{2,v} L`` by a one-sided Richardson difference in x."""
    base = L.pair_derivative(x, y, np.zeros_like(ux), vy, s2)
    if not np.any(ux):
        return 0.0
    sign = 1.0 if s == PLUS else -1.0
    h1, h2 = steps
    q = []
    for h in steps:
        moved = L.curve(x, sign * ux, h)
        q.append((L.pair_derivative(moved, y, np.zeros_like(ux), vy, s2) - base) / h)
    return sign * (h1 * q[1] - h2 * q[0]) / (h1 - h2)


def _generic_sigma(u: Jet, v: Jet, i: int, j: int, rho, L: LagrangianModel, sides) -> float:
    s, s2 = sides
    x, y = rho.points[i], rho.points[j]
    Lxy = L(x, y)
    zero = np.zeros_like(u.u[i])

    def nabla_nabla(p: Jet, q: Jet, sa, sb):
        # grad^{sa}_{1,p} grad^{sb}_{2,q} L(x, y)
        return (p.a[i] * q.a[j] * Lxy
                + p.a[i] * L.pair_derivative(x, y, zero, q.u[j], sb)
                + q.a[j] * L.pair_derivative(x, y, p.u[i], zero, sa)
                + _mixed(L, x, y, p.u[i], q.u[j], sa, sb))

    return float(nabla_nabla(u, v, s, s2) - nabla_nabla(v, u, s2, s))


def sigma_integrand(u: Jet, v: Jet, i: int, j: int, rho: DiscreteMeasure, L: LagrangianModel,
                    sides=(PLUS, PLUS)) -> float:
    """``sigma^{s,s'}_{u,v}(x_i, x_j)``.

    On the lattice (phi and scalar components, constant (t, s) components)
    this is the closed form ``(a(x) b(y) - b(x) a(y)) L - (u(x) v(y) - v(x) u(y)) f``
    at the support, with the general phi dependence kept off it.
    """
    if isinstance(L, LatticeLagrangian) and _lattice_ok(u, v):
        return float(_lattice_sigma(u, v, np.array([i]), np.array([j]), rho, L)[0])
    return _generic_sigma(u, v, i, j, rho, L, sides)


def _check_window(omega: Region, rho: DiscreteMeasure, L: LatticeLagrangian):
    """Reject regions whose surface layer would need lattice points outside the window."""
    W = L.width
    key = (lambda t, s: (t, s % W)) if W is not None else (lambda t, s: (t, s))
    present = {key(float(p[0]), float(p[1])) for p in rho.points}
    inside = omega(rho.points)
    missing, owners = [], []
    for k, p in enumerate(rho.points):
        for dt in (-1, 0, 1):
            for ds in (-1, 0, 1):
                t, s = float(p[0]) + dt, float(p[1]) + ds
                if key(t, s) not in present:
                    missing.append((t, s, 0.0))
                    owners.append(k)
    if not missing:
        return
    miss_in = omega(np.array(missing))
    bad = miss_in != inside[np.array(owners)]
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise WindowContaminationError(
            f"atom {rho.points[owners[k]].tolist()} interacts across the region boundary with "
            f"{list(missing[k][:2])}, which lies outside the truncation window"
        )


def surface_layer_integral(omega: Region, u: Jet, v: Jet, rho: DiscreteMeasure, L: LagrangianModel,
                           average_sides: bool = False, check_window: bool = True) -> float:
    """``sum_{x in Omega} sum_{y not in Omega} w(x) w(y) sigma_{u,v}(x, y)``."""
    if len(u) != len(rho) or len(v) != len(rho):
        raise ValueError("jets are not defined on the support of rho")
    mask = omega(rho.points)
    if not np.any(mask) or np.all(mask):
        return 0.0
    lattice = isinstance(L, LatticeLagrangian)
    if lattice and check_window:
        _check_window(omega, rho, L)
    xi = np.flatnonzero(mask)
    yi = np.flatnonzero(~mask)
    i, j, _ = interaction_pairs(L, rho.points[xi], rho.points[yi])
    i, j = xi[i], yi[j]
    w = rho.weights[i] * rho.weights[j]
    if lattice and _lattice_ok(u, v):
        return math.fsum(w * _lattice_sigma(u, v, i, j, rho, L))
    combos = [(a, b) for a in SIDES for b in SIDES] if average_sides else [(PLUS, PLUS)]
    total = []
    for sides in combos:
        total.append(math.fsum(wk * _generic_sigma(u, v, int(a), int(b), rho, L, sides)
                               for wk, a, b in zip(w, i, j)))
    return math.fsum(total) / len(combos)


def sigma_slice_lattice(t: int, u: LatticeJetState, v: LatticeJetState, params: LatticeParams) -> float:
    """Closed form of sigma on the past of the slice ``t``.

    ``lambda_I sum_s (a_t b_{t+1} - a_{t+1} b_t) + sum_s (u_t v_{t+1} - u_{t+1} v_t)``.
    """
    a0, u0 = u.slice(t)
    a1, u1 = u.slice(t + 1)
    b0, v0 = v.slice(t)
    b1, v1 = v.slice(t + 1)
    scalar = math.fsum(np.concatenate([a0 * b1, -(a1 * b0)]))
    vector = math.fsum(np.concatenate([u0 * v1, -(u1 * v0)]))
    return params.lambda_I * scalar + vector


@dataclass
class SigmaReport:
    values: dict
    max_deviation: float
    reference: float
    relative_deviation: float = field(default=0.0)

    def to_dict(self) -> dict:
        return {
            "values": {str(k): val for k, val in sorted(self.values.items())},
            "max_deviation": self.max_deviation,
            "reference": self.reference,
            "relative_deviation": self.relative_deviation,
        }


def conservation_sweep(u: LatticeJetState, v: LatticeJetState, params: LatticeParams, t_range=None) -> SigmaReport:
    """sigma on the past of each slice in ``t_range`` (default: all that fit)."""
    if t_range is None:
        start = max(u.t0, v.t0)
        stop = min(u.t0 + u.n_slices, v.t0 + v.n_slices) - 1
        t_range = range(start, stop)
    values = {int(t): sigma_slice_lattice(int(t), u, v, params) for t in t_range}
    if not values:
        raise ValueError("empty time range")
    ref = values[min(values)]
    dev = max(abs(val - ref) for val in values.values())
    return SigmaReport(values, dev, ref, dev / max(1.0, abs(ref)))


def sigma_series_csv(report: SigmaReport, path=None) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["t", "sigma"])
    for t, val in sorted(report.values.items()):
        wr.writerow([t, repr(float(val))])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def state_jets(u: LatticeJetState, v: LatticeJetState):
    """Window measure, Lagrangian-ready jets for a pair of states on one grid."""
    u._same_grid(v)
    rho = u.window().measure()
    return rho, jet_from_state(u), jet_from_state(v)
