"""Torus geometry and angle conventions.

Angles are in degrees. Absolute orientations live in [0, 360) with east = 0
and counter-clockwise positive; relative turns and bearings live in
(-180, 180].
"""
from __future__ import annotations

import numpy as np


def wrap_position(p, L: float) -> np.ndarray:
    """Map coordinates into [0, L) on each axis."""
    p = np.mod(np.asarray(p, dtype=np.float64), L)
    # fmod of a tiny negative number rounds up to exactly L
    return np.where(p >= L, 0.0, p)


def wrap_angle(a):
    """Wrap an orientation into [0, 360)."""
    a = np.mod(np.asarray(a, dtype=np.float64), 360.0)
    a = np.where(a >= 360.0, 0.0, a)
    return float(a) if a.ndim == 0 else a


def wrap_turn(a):
    """Wrap a relative angle into (-180, 180]; exactly-behind maps to +180."""
    a = 180.0 - np.mod(180.0 - np.asarray(a, dtype=np.float64), 360.0)
    a = np.where(a <= -180.0, 180.0, a)
    return float(a) if a.ndim == 0 else a


def torus_displacement(a, b, L: float) -> np.ndarray:
    """Shortest displacement vector(s) from ``a`` to ``b``. Broadcasts."""
    d = np.asarray(b, dtype=np.float64) - np.asarray(a, dtype=np.float64)
    return d - L * np.round(d / L)


def torus_distance(a, b, L: float):
    d = torus_displacement(a, b, L)
    r = np.sqrt(np.sum(d * d, axis=-1))
    return float(r) if r.ndim == 0 else r


def max_torus_distance(L: float) -> float:
    return L * np.sqrt(2.0) / 2.0


def heading_of(v) -> np.ndarray:
    """Absolute heading in [0, 360) of vector(s) ``v``."""
    v = np.asarray(v, dtype=np.float64)
    return wrap_angle(np.degrees(np.arctan2(v[..., 1], v[..., 0])))


def unit_vector(angle_deg) -> np.ndarray:
    r = np.radians(np.asarray(angle_deg, dtype=np.float64))
    return np.stack([np.cos(r), np.sin(r)], axis=-1)


def torus_direction(src, facing: float, dst, L: float, eps: float = 1e-12) -> float:
    """Signed turn from ``facing`` toward ``dst`` along the shortest path.

    Coincident points give 0.
    """
    d = torus_displacement(src, dst, L)
    if abs(d[0]) <= eps and abs(d[1]) <= eps:
        return 0.0
    bearing = np.degrees(np.arctan2(d[1], d[0]))
    return wrap_turn(bearing - facing)


def torus_directions(d: np.ndarray, facing, eps: float = 1e-12) -> np.ndarray:
    """Vectorised bearings for precomputed displacements ``d`` (..., 2)."""
    bearing = np.degrees(np.arctan2(d[..., 1], d[..., 0]))
    out = wrap_turn(bearing - facing)
    coincident = (np.abs(d[..., 0]) <= eps) & (np.abs(d[..., 1]) <= eps)
    return np.where(coincident, 0.0, out)
