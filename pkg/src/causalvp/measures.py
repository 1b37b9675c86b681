"""Finitely supported measures, the causal action and the action difference."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .lagrangians import LagrangianModel, LatticeLagrangian, LatticeParams

__all__ = [
    "MeasureError",
    "VolumeConstraintError",
    "DiscreteMeasure",
    "SignedMeasure",
    "jordan_decompose",
    "action",
    "pair_matrix",
    "interaction_pairs",
    "row_sums",
    "action_difference",
    "signed_action_difference",
    "push_forward",
    "LatticeWindow",
    "measure_to_json",
    "measure_from_json",
]

SPHERE_DUP_TOL = 1e-12
SPHERE_MERGE_TOL = 1e-9


class MeasureError(ValueError):
    pass


class VolumeConstraintError(MeasureError):
    """The two measures being compared do not have the same total mass."""


def _as_points(points) -> np.ndarray:
    pts = np.array(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :] if pts.size else pts.reshape(0, 0)
    return pts


def _find_duplicate(points: np.ndarray, model: str, tol: float):
    if len(points) < 2:
        return None
    if model == "sphere":
        d2 = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=-1)
        np.fill_diagonal(d2, np.inf)
        i, j = np.unravel_index(np.argmin(d2), d2.shape)
        return (i, j) if d2[i, j] <= tol**2 else None
    seen = {}
    for i, p in enumerate(map(tuple, points)):
        if p in seen:
            return seen[p], i
        seen[p] = i
    return None


@dataclass(frozen=True)
class SignedMeasure:
    points: np.ndarray
    weights: np.ndarray
    model: str = "lattice"

    def __post_init__(self):
        pts = _as_points(self.points)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if len(pts) != len(w):
            raise MeasureError(f"{len(pts)} points but {len(w)} weights")
        if not np.all(np.isfinite(w)):
            raise MeasureError("weights must be finite")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.weights)

    def mass(self) -> float:
        return math.fsum(self.weights)

    def total_variation(self) -> float:
        return math.fsum(np.abs(self.weights))


@dataclass(frozen=True)
class DiscreteMeasure(SignedMeasure):
    """Weighted sum of Dirac masses with positive weights and distinct points."""

    def __post_init__(self):
        super().__post_init__()
        if np.any(self.weights <= 0):
            raise MeasureError("all weights must be > 0")
        dup = _find_duplicate(self.points, self.model, SPHERE_DUP_TOL)
        if dup is not None:
            raise MeasureError(f"atoms {dup[0]} and {dup[1]} share the same point")

    @classmethod
    def empty(cls, dim: int, model: str = "lattice") -> "DiscreteMeasure":
        return cls(np.zeros((0, dim)), np.zeros(0), model)

    def scaled(self, factor) -> "DiscreteMeasure":
        return DiscreteMeasure(self.points, self.weights * factor, self.model)

    def __sub__(self, other: "SignedMeasure") -> SignedMeasure:
        return signed_difference(self, other)


def signed_difference(a: SignedMeasure, b: SignedMeasure) -> SignedMeasure:
    """``a - b`` as a signed measure on the union of supports (exact point match)."""
    index = {tuple(p): i for i, p in enumerate(a.points)}
    pts = [p for p in a.points]
    w = list(a.weights)
    for p, wb in zip(b.points, b.weights):
        key = tuple(p)
        if key in index:
            w[index[key]] -= wb
        else:
            index[key] = len(pts)
            pts.append(p)
            w.append(-wb)
    dim = a.points.shape[1] if a.points.size else b.points.shape[1]
    pts_arr = np.array(pts) if pts else np.zeros((0, dim))
    return SignedMeasure(pts_arr, np.array(w), a.model)


def jordan_decompose(mu: SignedMeasure):
    """Split ``mu`` into positive and negative parts with disjoint supports."""
    pos = mu.weights > 0
    neg = mu.weights < 0
    return (
        DiscreteMeasure(mu.points[pos], mu.weights[pos], mu.model),
        DiscreteMeasure(mu.points[neg], -mu.weights[neg], mu.model),
    )


def pair_matrix(L: LagrangianModel, xs, ys) -> np.ndarray:
    """Dense matrix ``L(x_i, y_j)`` (small inputs and oracles)."""
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    out = np.zeros((len(xs), len(ys)))
    i, j, vals = interaction_pairs(L, xs, ys)
    out[i, j] = vals
    return out


def _lattice_tree_coords(points, width, t_min, t_box):
    pts = np.asarray(points, dtype=float)
    t = pts[:, 0] - t_min
    if width is None:
        return np.stack([t, pts[:, 1]], axis=-1), None
    s = np.mod(pts[:, 1], width)
    s = np.where(s >= width, 0.0, s)
    return np.stack([t, s], axis=-1), np.array([t_box, float(width)])


def interaction_pairs(L: LagrangianModel, xs, ys):
    """Index pairs ``(i, j)`` and values ``L(x_i, y_j)`` for all non-zero candidates.

    Lattice pairs are found with a KD-tree in the (t, s) plane using the
    max-norm radius 2 (periodic in s when the model has a width); other
    models use the full product.  Output is sorted by ``(i, j)``.
    """
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    empty = (np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.intp), np.zeros(0))
    if len(xs) == 0 or len(ys) == 0:
        return empty
    if isinstance(L, LatticeLagrangian):
        t_all = np.concatenate([xs[:, 0], ys[:, 0]])
        t_min = float(np.floor(t_all.min()))
        t_box = float(np.ceil(t_all.max()) - t_min + 8.0)
        cx, box = _lattice_tree_coords(xs, L.width, t_min, t_box)
        cy, _ = _lattice_tree_coords(ys, L.width, t_min, t_box)
        tree = cKDTree(cy, boxsize=box)
        hits = tree.query_ball_point(cx, r=2.0, p=np.inf)
        counts = np.fromiter((len(h) for h in hits), dtype=np.intp, count=len(hits))
        i = np.repeat(np.arange(len(xs)), counts)
        j = np.fromiter((k for h in hits for k in sorted(h)), dtype=np.intp, count=int(counts.sum()))
        keep = L.in_range(xs[i], ys[j])
        i, j = i[keep], j[keep]
        vals = np.asarray(L(xs[i], ys[j]), dtype=float).reshape(-1)
        return i, j, vals
    if L.model == "cfs":
        i, j = np.meshgrid(np.arange(len(xs)), np.arange(len(ys)), indexing="ij")
        i, j = i.ravel(), j.ravel()
        vals = np.array([L(xs[a], ys[b]) for a, b in zip(i, j)], dtype=float)
        return i, j, vals
    i, j = np.meshgrid(np.arange(len(xs)), np.arange(len(ys)), indexing="ij")
    i, j = i.ravel(), j.ravel()
    vals = np.asarray(L(xs[i], ys[j]), dtype=float).reshape(-1)
    return i, j, vals


def row_sums(n_rows: int, i, terms) -> np.ndarray:
    """Exactly rounded per-row sums of ``terms`` grouped by sorted row index ``i``."""
    out = np.zeros(n_rows)
    if len(i) == 0:
        return out
    bounds = np.searchsorted(i, np.arange(n_rows + 1))
    terms = np.asarray(terms, dtype=float)
    for r in range(n_rows):
        a, b = bounds[r], bounds[r + 1]
        if b > a:
            out[r] = math.fsum(terms[a:b])
    return out


def action(rho: SignedMeasure, L: LagrangianModel) -> float:
    """Double sum of ``w(x) w(y) L(x, y)`` over all ordered atom pairs."""
    i, j, vals = interaction_pairs(L, rho.points, rho.points)
    w = rho.weights
    return math.fsum(w[i] * w[j] * vals)


def action_difference(rho: DiscreteMeasure, rho_tilde: DiscreteMeasure, L: LagrangianModel,
                      ell=None, nu: float = 0.0) -> float:
    """``S(rho_tilde) - S(rho)`` via the two-term formula.

    ``2 * sum (ell + nu/2) d(mu) + sum sum L d(mu) d(mu)`` with ``mu = rho_tilde
    - rho``.  ``ell`` maps an array of points to values of the function
    ``ell`` of ``rho`` (defaults to a direct sum against ``rho``).
    """
    mu = signed_difference(rho_tilde, rho)
    scale = max(1.0, rho.mass(), rho_tilde.mass())
    if abs(mu.mass()) > 1e-12 * scale:
        raise VolumeConstraintError(f"total masses differ by {mu.mass():.3e}")
    return signed_action_difference(rho, mu, L, ell, nu)


def signed_action_difference(rho: DiscreteMeasure, mu: SignedMeasure, L: LagrangianModel,
                             ell=None, nu: float = 0.0) -> float:
    """``S(rho + mu) - S(rho)`` for a signed variation ``mu`` given directly.

    Skips forming ``rho + mu``, so small variations keep their full relative
    precision.  The volume constraint is the caller's responsibility.
    """
    if ell is None:
        i, j, vals = interaction_pairs(L, mu.points, rho.points)
        ell_plus = row_sums(len(mu), i, vals * rho.weights[j])
    else:
        ell_plus = np.asarray(ell(mu.points), dtype=float) + nu / 2.0
    first = 2.0 * math.fsum(np.asarray(ell_plus) * mu.weights)
    return first + action(mu, L)


def push_forward(rho: DiscreteMeasure, F, f=None) -> DiscreteMeasure:
    """Image measure of ``f * rho`` under the point map ``F``.

    ``F`` and ``f`` act on a single point.  Coincident images are merged by
    summing weights (sphere: chordal distance below 1e-9).
    """
    if f is None:
        factors = np.ones(len(rho))
    else:
        factors = np.array([float(f(p)) for p in rho.points])
    if np.any(factors <= 0):
        raise MeasureError("weight function must be positive on all atoms")
    images = np.array([np.asarray(F(p), dtype=float) for p in rho.points]).reshape(len(rho), -1)
    weights = factors * rho.weights
    merged_pts, merged_w = [], []
    for p, w in zip(images, weights):
        for k, q in enumerate(merged_pts):
            same = (np.linalg.norm(p - q) <= SPHERE_MERGE_TOL) if rho.model == "sphere" else np.array_equal(p, q)
            if same:
                merged_w[k] += w
                break
        else:
            merged_pts.append(p)
            merged_w.append(w)
    return DiscreteMeasure(np.array(merged_pts).reshape(len(merged_pts), -1), np.array(merged_w), rho.model)


@dataclass(frozen=True)
class LatticeWindow:
    """Unit-weight lattice measure on times ``t0 .. t0+T-1`` and ``W`` periodic sites."""

    T: int
    W: int = 64
    t0: int = 0
    margin: int = field(default=2)

    def __post_init__(self):
        if self.T < 1:
            raise MeasureError("window needs at least one time slice")
        if self.W < 8:
            raise MeasureError(f"periodic width must be >= 8, got {self.W}")

    def points(self) -> np.ndarray:
        t, s = np.meshgrid(np.arange(self.t0, self.t0 + self.T), np.arange(self.W), indexing="ij")
        return np.stack([t.ravel(), s.ravel(), np.zeros(t.size)], axis=-1).astype(float)

    def measure(self) -> DiscreteMeasure:
        return DiscreteMeasure(self.points(), np.ones(self.T * self.W), "lattice")

    def interior_mask(self, points) -> np.ndarray:
        """Points whose max-norm neighbourhood of radius ``margin`` lies in the window.

        The spatial direction is periodic, so only time matters.
        """
        t = np.asarray(points, dtype=float)[..., 0]
        return (t >= self.t0 + self.margin) & (t <= self.t0 + self.T - 1 - self.margin)

    def lagrangian(self, params: LatticeParams | None = None) -> LatticeLagrangian:
        return LatticeLagrangian(params, width=self.W)


def measure_to_json(rho: DiscreteMeasure) -> str:
    doc = {
        "model": rho.model,
        "atoms": [{"point": [float(c) for c in p], "weight": float(w)} for p, w in zip(rho.points, rho.weights)],
    }
    return json.dumps(doc, sort_keys=True)


def measure_from_json(text: str) -> DiscreteMeasure:
    doc = json.loads(text)
    try:
        model = doc["model"]
        atoms = doc["atoms"]
        pts = [a["point"] for a in atoms]
        w = [a["weight"] for a in atoms]
    except (KeyError, TypeError) as exc:
        raise MeasureError(f"malformed measure document: {exc}") from None
    if model not in ("lattice", "sphere"):
        raise MeasureError(f"unknown model {model!r}")
    dim = 3
    return DiscreteMeasure(np.array(pts, dtype=float).reshape(len(pts), dim), np.array(w, dtype=float), model)
