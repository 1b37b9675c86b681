"""Concrete Lagrangians behind one evaluation + semi-derivative interface.

Three models are provided:

* :class:`LatticeLagrangian` on R^{1,1} x S^1 (optionally periodic in the
  spatial coordinate),
* :class:`SphereLagrangian`, ``max(0, D)`` on S^2,
* :class:`CfsLagrangian`, the spectral Lagrangian of a pair of self-adjoint
  operators of small rank (evaluation only).

Points are numpy arrays; the lattice and sphere models broadcast over leading
axes so that whole pair lists can be evaluated at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import sphere_geodesic, tangent_project, wrap_angle

__all__ = [
    "ParameterError",
    "LagrangianModel",
    "LatticeParams",
    "SphereParams",
    "CfsParams",
    "LatticeLagrangian",
    "SphereLagrangian",
    "CfsLagrangian",
    "lattice_L",
    "sphere_L",
    "cfs_L",
    "semi_derivative",
    "numeric_pair_derivative",
]

PLUS, MINUS = "plus", "minus"


class ParameterError(ValueError):
    """Model parameters violate their admissibility constraints."""


def _check_side(side: str) -> float:
    if side == PLUS:
        return 1.0
    if side == MINUS:
        return -1.0
    raise ValueError(f"side must be 'plus' or 'minus', got {side!r}")


def _limit_inside(g0, g1, g2):
    """Limit as tau -> 0+ of ``g0 + g1*tau + g2*tau**2 < 0``.

    The sign is decided by the first non-zero coefficient; if all vanish the
    point stays on the boundary of the open set and is outside.
    """
    return (g0 < 0) | ((g0 == 0) & (g1 < 0)) | ((g0 == 0) & (g1 == 0) & (g2 < 0))


class LagrangianModel:
    """Interface shared by the models.

    Subclasses set ``model``, ``interaction_range`` and ``analytic`` and
    implement ``__call__``, ``curve`` and, when ``analytic`` is true,
    ``pair_derivative``.
    """

    model: str = ""
    interaction_range: float = math.inf
    analytic: bool = False

    def __call__(self, x, y):
        raise NotImplementedError

    def in_range(self, x, y):
        """Cheap mask that is False only where the Lagrangian surely vanishes."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.ones(np.broadcast_shapes(x.shape[:-1], y.shape[:-1]), dtype=bool)

    def curve(self, x, v, h):
        raise NotImplementedError

    def pair_derivative(self, x, y, vx, vy, side=PLUS):
        """One-sided derivative of ``tau -> L(x + tau vx, y + tau vy)`` at 0."""
        return numeric_pair_derivative(self, x, y, vx, vy, side)

    def upper_bound(self) -> float:
        return math.inf


# ---------------------------------------------------------------------------
# lattice model


@dataclass(frozen=True)
class LatticeParams:
    eps: float = 0.1
    delta: float = 1.0
    lambda_I: float = 2.0
    lambda_A: float = 5.0

    def __post_init__(self):
        if getattr(self, "_unchecked", False):
            return
        if not 0.0 < self.eps < 0.25:
            raise ParameterError(f"eps must lie in (0, 1/4), got {self.eps}")
        if self.delta < 0:
            raise ParameterError(f"delta must be >= 0, got {self.delta}")
        if self.lambda_I < 2:
            raise ParameterError(f"lambda_I must be >= 2, got {self.lambda_I}")
        if self.lambda_A < 2 * self.lambda_I + self.eps:
            raise ParameterError(
                f"lambda_A must be >= 2*lambda_I + eps = {2 * self.lambda_I + self.eps}, "
                f"got {self.lambda_A}"
            )

    @classmethod
    def unchecked(cls, **kw) -> "LatticeParams":
        """Build parameters outside the admissible range (degenerate probes)."""
        obj = cls.__new__(cls)
        defaults = dict(eps=0.1, delta=1.0, lambda_I=2.0, lambda_A=5.0)
        defaults.update(kw)
        for k, v in defaults.items():
            object.__setattr__(obj, k, float(v))
        object.__setattr__(obj, "_unchecked", True)
        return obj

    def nu(self) -> float:
        """Volume multiplier making the unit lattice satisfy the EL equations."""
        return 2 * self.lambda_A + 4 * self.lambda_I


def _V(phi):
    return 1.0 - np.cos(phi)


class LatticeLagrangian(LagrangianModel):
    """The lattice Lagrangian; ``width`` makes the spatial direction periodic.

    All characteristic functions use strict inequalities (open sets).
    """

    model = "lattice"
    analytic = True

    # (center_t, center_s, sign) for the four eps-balls of f
    _BALLS = ((0.0, 1.0, 1.0), (0.0, -1.0, 1.0), (1.0, 0.0, -1.0), (-1.0, 0.0, -1.0))

    def __init__(self, params: LatticeParams | None = None, width: int | None = None):
        self.params = params if params is not None else LatticeParams()
        if width is not None and width < 8:
            raise ParameterError(f"periodic width must be >= 8, got {width}")
        self.width = width
        self.interaction_range = 1.0 + self.params.eps

    def __repr__(self):
        return f"LatticeLagrangian({self.params!r}, width={self.width})"

    def differences(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        dt = x[..., 0] - y[..., 0]
        ds = x[..., 1] - y[..., 1]
        if self.width is not None:
            ds = ds - self.width * np.round(ds / self.width)
        dphi = x[..., 2] - y[..., 2]
        return dt, ds, dphi

    def _indicators(self, dt, ds):
        p = self.params
        chi_A = (np.abs(dt) < 1) & (np.abs(ds) < 1)
        chi_I = (dt * dt - ds * ds > 0) & (np.abs(dt) < 1 + p.eps)
        f = np.zeros(np.shape(dt))
        for ct, cs, sign in self._BALLS:
            f = f + sign * (((dt - ct) ** 2 + (ds - cs) ** 2) < p.eps**2)
        ball0 = (dt * dt + ds * ds) < p.eps**2
        return chi_A, chi_I, f, ball0

    def from_differences(self, dt, ds, dphi):
        p = self.params
        chi_A, chi_I, f, ball0 = self._indicators(dt, ds)
        V = _V(dphi)
        return p.lambda_A * chi_A + p.lambda_I * chi_I + V * f + p.delta * ball0 * V**2

    def __call__(self, x, y):
        out = self.from_differences(*self.differences(x, y))
        return float(out) if np.ndim(out) == 0 else out

    def in_range(self, x, y):
        dt, ds, _ = self.differences(x, y)
        return np.maximum(np.abs(dt), np.abs(ds)) < 2.0

    def f_values(self, x, y):
        """The sign function f of the spatial/temporal neighbour balls."""
        dt, ds, _ = self.differences(x, y)
        return self._indicators(dt, ds)[2]

    def phi_derivatives(self, x, y):
        """Return ``(L, dL/dx^phi, d2L/d(x^phi)^2)``.

        The Lagrangian depends on the phases only through their difference,
        so derivatives in ``y^phi`` follow by sign flips.
        """
        dt, ds, dphi = self.differences(x, y)
        _, _, f, ball0 = self._indicators(dt, ds)
        V, V1, V2 = _V(dphi), np.sin(dphi), np.cos(dphi)
        d = self.params.delta * ball0
        L = self.from_differences(dt, ds, dphi)
        dL = V1 * f + 2 * d * V * V1
        ddL = V2 * f + 2 * d * (V1 * V1 + V * V2)
        return L, dL, ddL

    def curve(self, x, v, h):
        out = np.asarray(x, dtype=float) + h * np.asarray(v, dtype=float)
        out = out.copy()
        out[..., 2] = wrap_angle(out[..., 2])
        return out

    def pair_derivative(self, x, y, vx, vy, side=PLUS):
        sign = _check_side(side)
        vx = sign * np.asarray(vx, dtype=float)
        vy = sign * np.asarray(vy, dtype=float)
        dt, ds, dphi = self.differences(x, y)
        rt = vx[..., 0] - vy[..., 0]
        rs = vx[..., 1] - vy[..., 1]
        q = vx[..., 2] - vy[..., 2]
        dt, ds, dphi, rt, rs, q = np.broadcast_arrays(dt, ds, dphi, rt, rs, q)
        p = self.params

        now = self._indicators(dt, ds)
        lim_A = _limit_inside(dt * dt - 1, 2 * dt * rt, rt * rt) & _limit_inside(
            ds * ds - 1, 2 * ds * rs, rs * rs
        )
        lim_I = _limit_inside(
            -(dt * dt - ds * ds), -2 * (dt * rt - ds * rs), -(rt * rt - rs * rs)
        ) & _limit_inside(dt * dt - (1 + p.eps) ** 2, 2 * dt * rt, rt * rt)
        lim_f = np.zeros(dt.shape)
        for ct, cs, sgn in self._BALLS:
            et, es = dt - ct, ds - cs
            inside = _limit_inside(et * et + es * es - p.eps**2, 2 * (et * rt + es * rs), rt * rt + rs * rs)
            lim_f = lim_f + sgn * inside
        lim_0 = _limit_inside(dt * dt + ds * ds - p.eps**2, 2 * (dt * rt + ds * rs), rt * rt + rs * rs)

        V, V1 = _V(dphi), np.sin(dphi)
        jump = (
            p.lambda_A * (lim_A.astype(float) - now[0])
            + p.lambda_I * (lim_I.astype(float) - now[1])
            + V * (lim_f - now[2])
            + p.delta * V**2 * (lim_0.astype(float) - now[3])
        )
        smooth = V1 * q * lim_f + 2 * p.delta * lim_0 * V * V1 * q
        out = np.where(jump > 0, np.inf, np.where(jump < 0, -np.inf, smooth))
        out = sign * out
        return float(out) if out.ndim == 0 else out

    def upper_bound(self) -> float:
        p = self.params
        return p.lambda_A + p.lambda_I + 2.0 + 4.0 * p.delta


def lattice_L(x, y, p: LatticeParams | None = None, width: int | None = None):
    return LatticeLagrangian(p, width)(x, y)


# ---------------------------------------------------------------------------
# sphere model


@dataclass(frozen=True)
class SphereParams:
    tau: float = math.sqrt(2.0)

    def __post_init__(self):
        if self.tau < 1:
            raise ParameterError(f"tau must be >= 1, got {self.tau}")


class SphereLagrangian(LagrangianModel):
    """``L = max(0, D)`` with ``D = 2 tau^2 (1+c)(2 - tau^2 (1-c))``, ``c = <x,y>``."""

    model = "sphere"
    analytic = True
    kink_tol = 1e-10

    def __init__(self, params: SphereParams | None = None):
        self.params = params if params is not None else SphereParams()
        t2 = self.params.tau**2
        self.c_max = 1.0 - 2.0 / t2
        self.interaction_range = math.acos(max(-1.0, min(1.0, self.c_max)))

    def __repr__(self):
        return f"SphereLagrangian({self.params!r})"

    def D(self, c):
        t2 = self.params.tau**2
        return 2 * t2 * (1 + c) * (2 - t2 * (1 - c))

    def dD(self, c):
        """Derivative of D with respect to the cosine ``c``."""
        t2 = self.params.tau**2
        return 4 * t2 * (1 + t2 * c)

    def D_of_angle(self, theta):
        return self.D(np.cos(theta))

    def dD_of_angle(self, theta):
        return -np.sin(theta) * self.dD(np.cos(theta))

    def cosines(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.clip(np.sum(x * y, axis=-1), -1.0, 1.0)

    def __call__(self, x, y):
        out = np.maximum(0.0, self.D(self.cosines(x, y)))
        return float(out) if np.ndim(out) == 0 else out

    def curve(self, x, v, h):
        return sphere_geodesic(x, v, h)

    def pair_derivative(self, x, y, vx, vy, side=PLUS):
        sign = _check_side(side)
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        vx = tangent_project(x, sign * np.asarray(vx, dtype=float))
        vy = tangent_project(y, sign * np.asarray(vy, dtype=float))
        c = self.cosines(x, y)
        cdot = np.sum(vx * y, axis=-1) + np.sum(x * vy, axis=-1)
        Dc = self.D(c)
        rate = self.dD(c) * cdot
        out = np.where(
            Dc > self.kink_tol, rate, np.where(Dc < -self.kink_tol, 0.0, np.maximum(0.0, rate))
        )
        out = sign * out
        return float(out) if out.ndim == 0 else out

    def upper_bound(self) -> float:
        return float(self.D(1.0))


def sphere_L(x, y, p: SphereParams | None = None):
    return SphereLagrangian(p)(x, y)


# ---------------------------------------------------------------------------
# causal fermion system Lagrangian

MAX_CFS_DIM = 8


@dataclass(frozen=True)
class CfsParams:
    n: int = 1
    kappa: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError(f"spin dimension n must be a positive integer, got {self.n}")
        if not self.kappa > 0:
            raise ParameterError(f"kappa must be > 0, got {self.kappa}")
        if not self.c > 0:
            raise ParameterError(f"local trace c must be > 0, got {self.c}")


def _char_poly_roots(m: np.ndarray) -> np.ndarray:
    """Eigenvalues of a small matrix from its Faddeev-LeVerrier characteristic polynomial."""
    r = m.shape[0]
    if r == 0:
        return np.zeros(0, dtype=complex)
    if r == 1:
        return np.array([m[0, 0]], dtype=complex)
    if r == 2:
        # closed-form roots of lambda^2 - tr lambda + det; exact for double roots
        half = 0.5 * (m[0, 0] + m[1, 1])
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        root = np.sqrt(complex(half * half - det))
        return np.array([half + root, half - root], dtype=complex)
    coeffs = [1.0 + 0j]
    mk = np.zeros_like(m, dtype=complex)
    eye = np.eye(r, dtype=complex)
    for k in range(1, r + 1):
        mk = m @ mk + coeffs[-1] * eye
        coeffs.append(-np.trace(m @ mk) / k)
    return np.roots(coeffs)


class CfsLagrangian(LagrangianModel):
    """Spectral Lagrangian of two self-adjoint operators of rank at most 2n."""

    model = "cfs"
    analytic = False
    hermitian_tol = 1e-10
    rank_tol = 1e-10

    def __init__(self, params: CfsParams | None = None):
        self.params = params if params is not None else CfsParams()

    def __repr__(self):
        return f"CfsLagrangian({self.params!r})"

    def _check(self, x):
        x = np.asarray(x, dtype=complex)
        if x.ndim != 2 or x.shape[0] != x.shape[1]:
            raise ValueError("operators must be square matrices")
        if x.shape[0] > MAX_CFS_DIM:
            raise ValueError(f"Hilbert space dimension {x.shape[0]} exceeds supported bound {MAX_CFS_DIM}")
        if np.max(np.abs(x - x.conj().T), initial=0.0) > self.hermitian_tol:
            raise ValueError("operator is not self-adjoint")
        return x

    def nontrivial_eigenvalues(self, x, y) -> np.ndarray:
        """The 2n non-trivial eigenvalues of ``xy`` (zero padded).

        The non-zero spectrum of ``xy = (x V) (Lambda V^*)`` agrees with that
        of the small matrix ``Lambda V^* x V`` built on the image of ``y``.
        """
        x, y = self._check(x), self._check(y)
        if x.shape != y.shape:
            raise ValueError("operators act on different spaces")
        two_n = 2 * self.params.n
        mu, vecs = np.linalg.eigh(y)
        scale = max(np.max(np.abs(mu), initial=0.0), 1.0)
        keep = np.abs(mu) > self.rank_tol * scale
        if keep.sum() > two_n:
            raise ValueError(f"rank of y is {keep.sum()}, exceeds 2n = {two_n}")
        V = vecs[:, keep]
        small = (mu[keep][:, None] * V.conj().T) @ x @ V
        if small.shape[0] <= 4:
            lam = _char_poly_roots(small)
        else:
            lam = np.linalg.eigvals(small)
        out = np.zeros(two_n, dtype=complex)
        out[: lam.size] = lam
        return out

    def __call__(self, x, y):
        a = np.abs(self.nontrivial_eigenvalues(x, y))
        n = self.params.n
        spread = np.sum((a[:, None] - a[None, :]) ** 2) / (4 * n)
        return float(spread + self.params.kappa * np.sum(a) ** 2)

    def curve(self, x, v, h):
        return np.asarray(x) + h * np.asarray(v)


def cfs_L(x, y, p: CfsParams | None = None) -> float:
    return CfsLagrangian(p)(x, y)


# ---------------------------------------------------------------------------
# semi-derivatives

RICHARDSON_STEPS = (1e-4, 5e-5)


def numeric_pair_derivative(L: LagrangianModel, x, y, vx, vy, side=PLUS, steps=RICHARDSON_STEPS):
    """One-sided finite differences with first-order Richardson extrapolation."""
    sign = _check_side(side)
    h1, h2 = steps
    vx = sign * np.asarray(vx)
    vy = sign * np.asarray(vy)
    base = L(x, y)

    def quotient(h):
        return (L(L.curve(x, vx, h), L.curve(y, vy, h)) - base) / h

    d1, d2 = quotient(h1), quotient(h2)
    return sign * (h1 * d2 - h2 * d1) / (h1 - h2)


def semi_derivative(L: LagrangianModel, x, y, v, side=PLUS, method="auto"):
    """One-sided directional derivative of L in its first argument.

    ``method`` is ``"analytic"``, ``"numeric"`` or ``"auto"`` (analytic when
    the model provides it).  Infinite values signal a jump of a
    characteristic function.
    """
    zero = np.zeros_like(np.asarray(v, dtype=float if L.model != "cfs" else complex))
    if method == "auto":
        method = "analytic" if L.analytic else "numeric"
    if method == "analytic":
        if not L.analytic:
            raise ValueError(f"{L.model} model has no analytic semi-derivative")
        return L.pair_derivative(x, y, v, zero, side)
    if method == "numeric":
        return numeric_pair_derivative(L, x, y, v, zero, side)
    raise ValueError(f"unknown method {method!r}")
