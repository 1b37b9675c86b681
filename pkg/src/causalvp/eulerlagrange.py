"""The function ell, calibration of nu, EL residuals and jets.

Jets live on the atoms of a reference measure and are aligned with its
point array.  Unless a jet carries explicit field callables they are extended
locally constant off the support.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import normalize
from .lagrangians import LagrangianModel, LatticeLagrangian, SphereLagrangian, numeric_pair_derivative
from .measures import DiscreteMeasure, interaction_pairs, row_sums

__all__ = [
    "Jet",
    "ProbeSpec",
    "ElReport",
    "WeakElResidual",
    "ell",
    "ell_semi_derivative",
    "calibrate_nu",
    "valid_interior",
    "make_probes",
    "el_check",
    "strict_off_support",
    "nabla_jet",
    "weak_el_residual",
    "diff_jet_test",
    "jet_commutator",
    "locally_constant_oracle",
    "FiniteDifferenceOracle",
]


@dataclass
class Jet:
    """A one-jet ``(a, u)``: scalar values ``a`` and tangent vectors ``u`` per atom.

    ``scalar_field`` and ``vector_field`` optionally give the extension of the
    jet to arbitrary points (callables on a single point); without them the
    jet is locally constant.
    """

    a: np.ndarray
    u: np.ndarray
    scalar_field: object = None
    vector_field: object = None

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float).reshape(-1)
        self.u = np.asarray(self.u, dtype=float).reshape(len(self.a), -1)

    @classmethod
    def zeros(cls, n: int, dim: int) -> "Jet":
        return cls(np.zeros(n), np.zeros((n, dim)))

    @classmethod
    def scalar(cls, a, dim: int) -> "Jet":
        a = np.asarray(a, dtype=float)
        return cls(a, np.zeros((a.size, dim)))

    def __len__(self):
        return len(self.a)

    def _compatible(self, other: "Jet"):
        if self.u.shape != other.u.shape:
            raise ValueError("jets live on different domains")

    def __add__(self, other: "Jet") -> "Jet":
        self._compatible(other)
        return Jet(self.a + other.a, self.u + other.u)

    def __sub__(self, other: "Jet") -> "Jet":
        self._compatible(other)
        return Jet(self.a - other.a, self.u - other.u)

    def __neg__(self) -> "Jet":
        return Jet(-self.a, -self.u)

    def __mul__(self, c: float) -> "Jet":
        return Jet(c * self.a, c * self.u)

    __rmul__ = __mul__

    def scalar_at(self, i: int, point=None) -> float:
        if point is None or self.scalar_field is None:
            return float(self.a[i])
        return float(self.scalar_field(point))

    def vector_at(self, i: int, point=None) -> np.ndarray:
        if point is None or self.vector_field is None:
            return self.u[i]
        return np.asarray(self.vector_field(point), dtype=float)

    def is_zero(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.a) <= tol) and np.all(np.abs(self.u) <= tol))


# ---------------------------------------------------------------------------
# ell and calibration


def _integrals(points, rho: DiscreteMeasure, L: LagrangianModel) -> np.ndarray:
    """``sum_y w(y) L(x, y)`` for each row of ``points``, exactly rounded."""
    pts = np.asarray(points, dtype=float if L.model != "cfs" else complex)
    if L.model == "cfs":
        return np.array([math.fsum(w * L(p, y) for y, w in zip(rho.points, rho.weights)) for p in pts])
    pts = pts.reshape(-1, rho.points.shape[1])
    i, j, vals = interaction_pairs(L, pts, rho.points)
    return row_sums(len(pts), i, vals * rho.weights[j])


def ell(x, rho: DiscreteMeasure, L: LagrangianModel, nu: float):
    """``ell(x) = sum_y w(y) L(x, y) - nu/2``; accepts a point or a stack."""
    x_arr = np.asarray(x, dtype=float)
    single = x_arr.ndim == 1
    vals = _integrals(np.atleast_2d(x_arr), rho, L) - nu / 2.0
    return float(vals[0]) if single else vals


def ell_semi_derivative(x, v, rho: DiscreteMeasure, L: LagrangianModel, side: str = "plus") -> float:
    """One-sided derivative of ell at ``x`` along ``v`` (nu drops out).

    An upward jump in any summand makes the value ``+inf``; a downward jump
    (possible off the support) gives ``-inf`` unless an upward one is present.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if L.analytic:
        i, j, _ = interaction_pairs(L, x[None, :], rho.points)
        ys = rho.points[j]
        d = np.asarray(L.pair_derivative(np.broadcast_to(x, ys.shape), ys, v, np.zeros_like(ys), side)).reshape(-1)
    else:
        ys = rho.points
        d = np.array([numeric_pair_derivative(L, x, y, v, np.zeros_like(v), side) for y in ys])
        j = np.arange(len(rho))
    w = rho.weights[j]
    if np.any(np.isposinf(d)):
        return math.inf
    if np.any(np.isneginf(d)):
        return -math.inf
    return math.fsum(w * d)


def valid_interior(rho: DiscreteMeasure, L: LagrangianModel, margin: int = 2) -> np.ndarray:
    """Atoms whose full interaction neighbourhood is present in the support.

    For the lattice an atom qualifies when every lattice point within
    max-norm distance ``margin`` is an atom; the other models are compact and
    every atom qualifies.
    """
    n = len(rho)
    if not isinstance(L, LatticeLagrangian):
        return np.ones(n, dtype=bool)
    W = L.width

    def key(t, s):
        return (t, s % W) if W is not None else (t, s)

    pts = rho.points
    present = {key(float(p[0]), float(p[1])) for p in pts}
    offsets = [(dt, ds) for dt in range(-margin, margin + 1) for ds in range(-margin, margin + 1)]
    mask = np.zeros(n, dtype=bool)
    for k, p in enumerate(pts):
        t, s = float(p[0]), float(p[1])
        mask[k] = all(key(t + dt, s + ds) in present for dt, ds in offsets)
    return mask


def calibrate_nu(rho: DiscreteMeasure, L: LagrangianModel, probes=None, support_mask=None) -> float:
    """``2 * min`` of ``sum_y w(y) L(x, y)`` over support atoms and probes.

    ``support_mask`` restricts which atoms take part (e.g. the valid interior
    of a truncated lattice window).
    """
    parts = []
    atoms = rho.points if support_mask is None else rho.points[np.asarray(support_mask)]
    if len(atoms):
        parts.append(_integrals(atoms, rho, L))
    if probes is not None and len(probes):
        parts.append(_integrals(np.asarray(probes), rho, L))
    if not parts:
        raise ValueError("calibrate_nu needs at least one probe point")
    return 2.0 * float(np.min(np.concatenate(parts)))


# ---------------------------------------------------------------------------
# probes and EL check


@dataclass(frozen=True)
class ProbeSpec:
    count: int = 10_000
    seed: int = 42
    kinds: tuple = ("off_lattice", "phase", "mixed")


def make_probes(rho: DiscreteMeasure, L: LagrangianModel, spec: ProbeSpec, base_mask=None):
    """Deterministic probe cloud; returns ``(points, kinds)``.

    Lattice probes sit next to randomly chosen valid-interior atoms:
    ``off_lattice`` shifts (t, s) by an offset in (0, 1)^2 keeping phi = 0,
    ``phase`` keeps the lattice point and draws phi != 0, ``mixed`` does both.
    Sphere probes are uniform on S^2.
    """
    rng = np.random.default_rng(spec.seed)
    if isinstance(L, LatticeLagrangian):
        base = rho.points if base_mask is None else rho.points[np.asarray(base_mask)]
        if len(base) == 0:
            raise ValueError("no base atoms for lattice probes")
        per = [spec.count] * len(spec.kinds)
        chunks, labels = [], []
        for kind, m in zip(spec.kinds, per):
            b = base[rng.integers(0, len(base), size=m)].copy()
            if kind in ("off_lattice", "mixed"):
                off = rng.uniform(0.0, 1.0, size=(m, 2))
                off = np.where(off == 0.0, 0.5, off)
                b[:, :2] += off
            if kind in ("phase", "mixed"):
                phi = rng.uniform(-math.pi, math.pi, size=m)
                phi = np.where(phi == 0.0, 1.0, phi)
                b[:, 2] = phi
            elif kind != "off_lattice":
                raise ValueError(f"unknown probe kind {kind!r}")
            chunks.append(b)
            labels += [kind] * m
        return np.concatenate(chunks), np.array(labels)
    if isinstance(L, SphereLagrangian):
        pts = normalize(rng.standard_normal((spec.count, 3)))
        return pts, np.array(["uniform"] * spec.count)
    raise ValueError(f"no probe cloud for model {L.model!r}")


@dataclass
class ElReport:
    sup_ell_on_support: float
    min_ell_on_probes: float
    nu_used: float
    probe_count: int
    seed: int = 42
    support_count: int = 0
    probe_minima: dict = field(default_factory=dict)
    probe_points: np.ndarray | None = field(default=None, repr=False)
    probe_values: np.ndarray | None = field(default=None, repr=False)
    probe_kinds: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "sup_ell_on_support": self.sup_ell_on_support,
            "min_ell_on_probes": self.min_ell_on_probes,
            "nu_used": self.nu_used,
            "probe_count": self.probe_count,
            "seed": self.seed,
            "support_count": self.support_count,
            "probe_minima": dict(sorted(self.probe_minima.items())),
        }


def el_check(rho: DiscreteMeasure, L: LagrangianModel, nu: float, probe_spec: ProbeSpec | None = None) -> ElReport:
    """Strong EL check: ell on valid-interior atoms and on a probe cloud."""
    spec = probe_spec if probe_spec is not None else ProbeSpec()
    mask = valid_interior(rho, L)
    sup_support = float(np.max(np.abs(ell(rho.points[mask], rho, L, nu)), initial=0.0))
    probes, kinds = make_probes(rho, L, spec, base_mask=mask)
    values = ell(probes, rho, L, nu)
    minima = {str(k): float(values[kinds == k].min()) for k in np.unique(kinds)}
    return ElReport(
        sup_ell_on_support=sup_support,
        min_ell_on_probes=float(values.min()) if len(values) else math.inf,
        nu_used=float(nu),
        probe_count=int(len(values)),
        seed=spec.seed,
        support_count=int(mask.sum()),
        probe_minima=minima,
        probe_points=probes,
        probe_values=values,
        probe_kinds=kinds,
    )


def _distance_to_support(points, rho: DiscreteMeasure, L: LagrangianModel) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    sup = rho.points
    if isinstance(L, LatticeLagrangian):
        dt = pts[:, None, 0] - sup[None, :, 0]
        ds = pts[:, None, 1] - sup[None, :, 1]
        if L.width is not None:
            ds = ds - L.width * np.round(ds / L.width)
        dphi = np.angle(np.exp(1j * (pts[:, None, 2] - sup[None, :, 2])))
        d = np.sqrt(dt**2 + ds**2 + dphi**2)
    else:
        d = np.linalg.norm(pts[:, None, :] - sup[None, :, :], axis=-1)
    return d.min(axis=1)


def strict_off_support(report: ElReport, rho: DiscreteMeasure, L: LagrangianModel,
                       tol: float = 1e-14, eta: float = 1e-3) -> bool:
    """Every probe where ell vanishes (``<= tol``) lies within ``eta`` of the support.

    ``tol`` only absorbs rounding; probes that close to the support may
    legitimately have tiny ell, which ``eta`` accounts for.
    """
    vals = report.probe_values
    if vals is None:
        raise ValueError("report carries no probe values")
    low = vals <= tol
    if not np.any(low):
        return True
    pts = report.probe_points[low]
    ok = True
    for start in range(0, len(pts), 256):
        if np.any(_distance_to_support(pts[start:start + 256], rho, L) > eta):
            ok = False
            break
    return ok


# ---------------------------------------------------------------------------
# jets acting on ell


def nabla_jet(jet: Jet, index: int, value: float, directional_derivative: float) -> float:
    """``a(x) * value + D_u(value)`` at atom ``index``."""
    return float(jet.a[index]) * value + directional_derivative


@dataclass
class WeakElResidual:
    min_nabla: float
    max_abs_nabla: float
    max_side_gap: float
    atoms_checked: int
    side: str = "plus"


def weak_el_residual(rho: DiscreteMeasure, L: LagrangianModel, nu: float, jet: Jet,
                     side: str = "plus", atoms=None) -> WeakElResidual:
    """Evaluate ``a ell + D^side_u ell`` on valid-interior atoms.

    ``min_nabla`` must be ``>= -tol`` for the inequality form; ``max_abs_nabla``
    is the equality residual and ``max_side_gap`` the difference between
    the plus and minus one-sided values (zero for differentiable jets).
    """
    if len(jet) != len(rho):
        raise ValueError("jet is not defined on the support of rho")
    idx = np.flatnonzero(valid_interior(rho, L)) if atoms is None else np.asarray(atoms)
    other = "minus" if side == "plus" else "plus"
    values, gaps = [], []
    ell_vals = ell(rho.points[idx], rho, L, nu) if len(idx) else np.zeros(0)
    for k, i in enumerate(idx):
        x = rho.points[i]
        u = jet.u[i]
        if np.any(u):
            d = ell_semi_derivative(x, u, rho, L, side)
            d_other = ell_semi_derivative(x, u, rho, L, other)
        else:
            d = d_other = 0.0
        val = nabla_jet(jet, i, ell_vals[k], d)
        values.append(val)
        gap = abs(d - d_other) if math.isfinite(d) and math.isfinite(d_other) else math.inf
        gaps.append(gap)
    values = np.array(values)
    return WeakElResidual(
        min_nabla=float(values.min()) if len(values) else math.inf,
        max_abs_nabla=float(np.abs(values).max()) if len(values) else 0.0,
        max_side_gap=float(max(gaps)) if gaps else 0.0,
        atoms_checked=int(len(idx)),
        side=side,
    )


def diff_jet_test(rho: DiscreteMeasure, L: LagrangianModel, nu: float, x, v) -> bool:
    """True iff ell is differentiable at ``x`` in direction ``v``."""
    d_plus = ell_semi_derivative(x, v, rho, L, "plus")
    d_back = ell_semi_derivative(x, -np.asarray(v, dtype=float), rho, L, "plus")
    if not (math.isfinite(d_plus) and math.isfinite(d_back)):
        return False
    return abs(d_plus + d_back) <= 1e-6 * (1.0 + abs(d_plus))


# ---------------------------------------------------------------------------
# commutator


def locally_constant_oracle(u: Jet, v: Jet):
    """Derivative data for locally constant jets: everything vanishes."""
    n, d = u.u.shape
    return np.zeros(n), np.zeros(n), np.zeros((n, d))


class FiniteDifferenceOracle:
    """Derivatives of jet field extensions by central differences.

    Works in flat coordinates (the lattice model or R^n); jets must carry
    ``scalar_field`` and ``vector_field`` callables and ``points`` gives the
    atoms they are attached to.
    """

    def __init__(self, points, h: float = 1e-5):
        self.points = np.asarray(points, dtype=float)
        self.h = h

    def _dir(self, fn, x, direction):
        h = self.h
        return (np.asarray(fn(x + h * direction)) - np.asarray(fn(x - h * direction))) / (2 * h)

    def __call__(self, u: Jet, v: Jet):
        n, d = u.u.shape
        Du_b = np.zeros(n)
        Dv_a = np.zeros(n)
        br = np.zeros((n, d))
        for k, x in enumerate(self.points):
            ux = u.vector_at(k, x)
            vx = v.vector_at(k, x)
            if v.scalar_field is not None:
                Du_b[k] = self._dir(v.scalar_field, x, ux)
            if u.scalar_field is not None:
                Dv_a[k] = self._dir(u.scalar_field, x, vx)
            if u.vector_field is not None and v.vector_field is not None:
                br[k] = self._dir(v.vector_field, x, ux) - self._dir(u.vector_field, x, vx)
        return Du_b, Dv_a, br


def jet_commutator(u: Jet, v: Jet, derivative_oracle=None) -> Jet:
    """``[u, v] = (D_u b - D_v a, [u, v])`` with derivatives from the oracle."""
    u._compatible(v)
    oracle = derivative_oracle if derivative_oracle is not None else locally_constant_oracle
    Du_b, Dv_a, bracket = oracle(u, v)
    return Jet(np.asarray(Du_b) - np.asarray(Dv_a), bracket)
