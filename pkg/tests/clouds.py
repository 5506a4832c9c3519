"""Synthetic point clouds for grasp-planning tests."""

import numpy as np


def box_surface(rng, size=(0.06, 0.08, 0.2), n=400) -> np.ndarray:
    """Area-uniform samples over all six faces of an axis-aligned box at the origin."""
    sx, sy, sz = size
    faces = [(sy * sz, 0), (sy * sz, 0), (sx * sz, 1), (sx * sz, 1), (sx * sy, 2), (sx * sy, 2)]
    areas = np.array([a for a, _ in faces])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    half = np.array(size) / 2
    pts = rng.uniform(-half, half, size=(n, 3))
    for f in range(6):
        axis = faces[f][1]
        sel = face == f
        pts[sel, axis] = half[axis] if f % 2 == 0 else -half[axis]
    return pts


def sphere_surface(rng, radius=0.05, n=400, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    v = rng.normal(size=(n, 3))
    return radius * v / np.linalg.norm(v, axis=1, keepdims=True) + np.asarray(center)


def cylinder_surface(rng, radius=0.03, height=0.2, n=400) -> np.ndarray:
    """Lateral surface of a cylinder along z."""
    phi = rng.uniform(0, 2 * np.pi, n)
    z = rng.uniform(-height / 2, height / 2, n)
    return np.stack([radius * np.cos(phi), radius * np.sin(phi), z], axis=1)


def spherical_cap(rng, radius=0.05, half_angle_deg=25.0, n=200) -> np.ndarray:
    cos_max = np.cos(np.radians(half_angle_deg))
    z = rng.uniform(cos_max, 1.0, n)
    phi = rng.uniform(0, 2 * np.pi, n)
    s = np.sqrt(1 - z * z)
    return radius * np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def random_blob(rng, n=None) -> np.ndarray:
    """Noisy ellipsoid surface with random axes and orientation."""
    n = n or int(rng.integers(60, 301))
    axes = rng.uniform(0.015, 0.07, 3)
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    pts = v * axes * (1 + rng.normal(0, 0.02, size=(n, 1)))
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    return pts @ (q * np.sign(np.diag(r))).T + rng.uniform(-1, 1, 3)


def cylinder_grid(radius=0.03, height=0.2, n_phi=36, n_z=21) -> np.ndarray:
    """Regular lateral grid: symmetric, so the sample covariance is exactly axis-aligned."""
    phi = np.arange(n_phi) * 2 * np.pi / n_phi
    z = np.linspace(-height / 2, height / 2, n_z)
    pp, zz = np.meshgrid(phi, z)
    return np.stack([radius * np.cos(pp), radius * np.sin(pp), zz], axis=-1).reshape(-1, 3)
