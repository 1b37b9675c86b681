"""Coordinates and flows on the two configuration spaces.

The lattice model lives on R^{1,1} x S^1 with points ``(t, s, phi)``; the
sphere model lives on S^2 with unit 3-vectors.  Functions accept single
points or stacks of points (leading axes broadcast).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LatticeModelPoint",
    "SpherePoint",
    "minkowski_interval",
    "wrap_angle",
    "normalize",
    "sphere_angle",
    "rotate_about_axis",
    "tangent_project",
    "sphere_geodesic",
]


def minkowski_interval(dx) -> np.ndarray | float:
    """Return ``dt**2 - ds**2`` for a difference vector ``(dt, ds)``."""
    dx = np.asarray(dx, dtype=float)
    out = dx[..., 0] ** 2 - dx[..., 1] ** 2
    return float(out) if out.ndim == 0 else out


def wrap_angle(phi):
    """Wrap ``phi`` into the half-open interval [-pi, pi).

    Values already inside the interval are returned unchanged, which makes
    the map exactly idempotent.
    """
    arr = np.asarray(phi, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("wrap_angle: non-finite angle")
    inside = (arr >= -math.pi) & (arr < math.pi)
    wrapped = np.mod(arr + math.pi, 2.0 * math.pi) - math.pi
    # np.mod can round up to exactly 2*pi for tiny negative arguments
    wrapped = np.where(wrapped >= math.pi, wrapped - 2.0 * math.pi, wrapped)
    out = np.where(inside, arr, wrapped)
    return float(out) if out.ndim == 0 else out


def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise ValueError("cannot normalize the zero vector")
    return v / n


def sphere_angle(x, y):
    """Angle in [0, pi] between unit vectors; inner product is clamped first."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    c = np.clip(np.sum(x * y, axis=-1), -1.0, 1.0)
    out = np.arccos(c)
    return float(out) if out.ndim == 0 else out


def rotate_about_axis(x, axis, tau):
    """Rodrigues rotation of ``x`` by angle ``tau`` about the unit ``axis``."""
    x = np.asarray(x, dtype=float)
    k = np.asarray(axis, dtype=float)
    if abs(np.linalg.norm(k) - 1.0) > 1e-12:
        raise ValueError("rotation axis must be a unit vector")
    c, s = math.cos(tau), math.sin(tau)
    kx = np.cross(k, x)
    kdotx = np.sum(x * k, axis=-1, keepdims=True)
    return x * c + kx * s + k * kdotx * (1.0 - c)


def tangent_project(x, v) -> np.ndarray:
    """Project ``v`` onto the tangent space of the sphere at ``x``."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    return v - x * np.sum(x * v, axis=-1, keepdims=True)


def sphere_geodesic(x, v, h):
    """Point reached after time ``h`` along the great circle through ``x``
    with initial (tangent) velocity ``v``."""
    x = np.asarray(x, dtype=float)
    v = tangent_project(x, v)
    speed = np.linalg.norm(v, axis=-1, keepdims=True)
    theta = speed * h
    safe = np.where(speed > 0, speed, 1.0)
    out = x * np.cos(theta) + (v / safe) * np.sin(theta)
    return normalize(out)


@dataclass(frozen=True)
class LatticeModelPoint:
    """A point ``(t, s, phi)`` of R^{1,1} x S^1; ``phi`` is kept in [-pi, pi)."""

    t: float
    s: float
    phi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "phi", wrap_angle(self.phi))

    def as_array(self) -> np.ndarray:
        return np.array([self.t, self.s, self.phi])


@dataclass(frozen=True)
class SpherePoint:
    v: tuple

    def __post_init__(self):
        arr = normalize(np.asarray(self.v, dtype=float).reshape(3))
        object.__setattr__(self, "v", tuple(float(c) for c in arr))

    def as_array(self) -> np.ndarray:
        return np.array(self.v)
