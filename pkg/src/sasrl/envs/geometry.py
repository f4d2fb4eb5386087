"""Vectorised 2-D geometry helpers shared by the navigation environments."""

from __future__ import annotations

import numpy as np

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


def disc_pattern(n: int, radius: float) -> np.ndarray:
    """Deterministic sunflower pattern of ``n`` points covering a disc.

    Point 0 is the centre; for n > 1 the last point lies on the rim.
    """
    if n < 1:
        raise ValueError("pattern needs at least one point")
    if n == 1:
        return np.zeros((1, 2))
    i = np.arange(n)
    r = radius * np.sqrt(i / (n - 1))
    theta = i * GOLDEN_ANGLE
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)


def limit_norm(a: np.ndarray, limit: float) -> np.ndarray:
    """Rescale rows of ``a`` whose Euclidean norm exceeds ``limit``."""
    norm = np.linalg.norm(a, axis=-1, keepdims=True)
    scale = np.where(norm > limit, limit / np.maximum(norm, 1e-300), 1.0)
    return a * scale


def segment_hits_disc(p0: np.ndarray, p1: np.ndarray, centre, radius: float) -> np.ndarray:
    """True where the segment p0->p1 passes within ``radius`` of ``centre``."""
    centre = np.asarray(centre, dtype=np.float64)
    d = p1 - p0
    dd = np.sum(d * d, axis=-1)
    t = np.where(dd > 0, np.sum((centre - p0) * d, axis=-1) / np.where(dd > 0, dd, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = p0 + t[..., None] * d
    return np.sum((closest - centre) ** 2, axis=-1) <= radius * radius


def ray_segment_distance(origin: np.ndarray, direction: np.ndarray, q0, q1) -> np.ndarray:
    """Distance along unit ``direction`` to the segment q0-q1; inf if missed."""
    q0 = np.asarray(q0, dtype=np.float64)
    e = np.asarray(q1, dtype=np.float64) - q0
    denom = direction[..., 0] * e[1] - direction[..., 1] * e[0]
    w = q0 - origin
    ok = np.abs(denom) > 1e-12
    safe = np.where(ok, denom, 1.0)
    t = (w[..., 0] * e[1] - w[..., 1] * e[0]) / safe
    u = (w[..., 0] * direction[..., 1] - w[..., 1] * direction[..., 0]) / safe
    hit = ok & (t >= 0.0) & (u >= 0.0) & (u <= 1.0)
    return np.where(hit, t, np.inf)


def ray_disc_distance(origin: np.ndarray, direction: np.ndarray, centre: np.ndarray, radius: float) -> np.ndarray:
    """Distance along unit ``direction`` to the first point of a disc; inf if missed.

    An origin already inside the disc gives distance 0.
    """
    w = centre - origin
    proj = np.sum(w * direction, axis=-1)
    dist2 = np.sum(w * w, axis=-1)
    disc = proj * proj - (dist2 - radius * radius)
    inside = dist2 <= radius * radius
    t_near = proj - np.sqrt(np.maximum(disc, 0.0))
    hit = (disc >= 0.0) & (t_near >= 0.0)
    return np.where(inside, 0.0, np.where(hit, t_near, np.inf))
