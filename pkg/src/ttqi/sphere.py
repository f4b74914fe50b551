"""Deterministic point sets on the unit sphere."""

from __future__ import annotations

import numpy as np

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))
# Plastic number; (1/g, 1/g^2) is the low-discrepancy R2 additive recurrence.
_PLASTIC = 1.324717957244746


def fibonacci_sphere(n: int) -> np.ndarray:
    """Standard Fibonacci lattice: ``n`` near-uniform unit vectors, shape (n, 3)."""
    if n < 1:
        raise ValueError("n must be positive")
    i = np.arange(n, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = i * GOLDEN_ANGLE
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def fibonacci_hemisphere(n: int) -> np.ndarray:
    """Fibonacci lattice restricted to the upper hemisphere (z > 0).

    Suited to objectives that are even under u -> -u.
    """
    if n < 1:
        raise ValueError("n must be positive")
    i = np.arange(n, dtype=float)
    z = 1.0 - (i + 0.5) / n
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = i * GOLDEN_ANGLE
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def nested_sphere_points(n: int) -> np.ndarray:
    """First ``n`` points of an infinite golden-ratio spiral sequence.

    Unlike :func:`fibonacci_sphere`, ``nested_sphere_points(m)`` is a prefix
    of ``nested_sphere_points(n)`` for ``m < n``, so minima over the lattice
    are monotone in ``n``. Height and longitude follow the two-dimensional
    golden-ratio (R2) additive recurrence, mapped to the sphere through the
    area-preserving cylinder projection.
    """
    return _nested_points(n, 2.0)


def nested_hemisphere_points(n: int) -> np.ndarray:
    """Prefix-nested sequence like :func:`nested_sphere_points` on z >= 0.

    For objectives even under u -> -u this doubles the effective density.
    """
    return _nested_points(n, 1.0)


def _nested_points(n: int, height: float) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be positive")
    i = np.arange(1, n + 1, dtype=float)
    a = np.mod(0.5 + i / _PLASTIC, 1.0)
    b = np.mod(0.5 + i / _PLASTIC**2, 1.0)
    z = 1.0 - height * a
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = 2.0 * np.pi * b
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def tangent_frame(s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors completing ``s`` to a right-handed orthonormal frame."""
    t = np.array([1.0, 0.0, 0.0]) if abs(s[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(s, t)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(s, e1)
