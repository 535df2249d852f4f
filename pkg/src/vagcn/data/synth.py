"""Synthetic primitive shapes as a small stand-in for CAD benchmarks.

Every sampler draws points uniformly by surface area in a canonical frame
(z up) and also returns a per-point part id local to that primitive.
"""
from __future__ import annotations

import math

import numpy as np

from .container import DatasetContainer
from .mesh import Mesh, sample_surface
from .transforms import normalize_unit_sphere, random_rotation

SHAPES = ("sphere", "cube", "cylinder", "cone", "torus", "pyramid", "capsule", "disk")


def _split(rng, n, areas):
    """Multinomial split of n samples over parts weighted by area."""
    areas = np.asarray(areas, dtype=float)
    part = rng.choice(len(areas), size=n, p=areas / areas.sum())
    return part


def _disk(rng, n, radius, z=0.0):
    rho = radius * np.sqrt(rng.random(n))
    phi = rng.uniform(0, 2 * math.pi, n)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), np.full(n, z)], axis=1)


def _tube(rng, n, radius, z0, z1):
    phi = rng.uniform(0, 2 * math.pi, n)
    return np.stack([radius * np.cos(phi), radius * np.sin(phi), rng.uniform(z0, z1, n)], axis=1)


def _sphere_dirs(rng, n):
    v = rng.standard_normal((n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sample_sphere(rng, n, radius=1.0):
    return radius * _sphere_dirs(rng, n), np.zeros(n, dtype=np.int64)


def box_mesh(half) -> Mesh:
    hx, hy, hz = half
    v = np.array([[sx * hx, sy * hy, sz * hz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    f = [(a, b, c) for a, b, c, d in quads] + [(a, c, d) for a, b, c, d in quads]
    return Mesh(v, np.array(f, dtype=np.int64))


def sample_box(rng, n, half=(1.0, 1.0, 1.0)):
    pts = sample_surface(box_mesh(half), n, rng)
    return pts, np.zeros(n, dtype=np.int64)


def sample_cylinder(rng, n, radius=1.0, height=2.0):
    part = _split(rng, n, [2 * math.pi * radius * height, 2 * math.pi * radius ** 2])
    pts = np.empty((n, 3))
    side = part == 0
    pts[side] = _tube(rng, int(side.sum()), radius, -height / 2, height / 2)
    caps = ~side
    top = rng.random(int(caps.sum())) < 0.5
    cap_pts = _disk(rng, int(caps.sum()), radius)
    cap_pts[:, 2] = np.where(top, height / 2, -height / 2)
    pts[caps] = cap_pts
    return pts, part


def sample_cone(rng, n, radius=1.0, height=2.0):
    slant = math.hypot(radius, height)
    part = _split(rng, n, [math.pi * radius * slant, math.pi * radius ** 2])
    pts = np.empty((n, 3))
    lat = part == 0
    m = int(lat.sum())
    t = np.sqrt(rng.random(m))  # fraction of the way from apex to rim; density grows linearly
    phi = rng.uniform(0, 2 * math.pi, m)
    pts[lat] = np.stack([t * radius * np.cos(phi), t * radius * np.sin(phi), height / 2 - t * height], axis=1)
    pts[~lat] = _disk(rng, n - m, radius, -height / 2)
    return pts, part


def sample_torus(rng, n, major=1.0, minor=0.3):
    out = np.empty((0, 3))
    while len(out) < n:
        m = 2 * (n - len(out)) + 16
        theta = rng.uniform(0, 2 * math.pi, m)
        accept = rng.random(m) * (major + minor) < major + minor * np.cos(theta)
        theta = theta[accept]
        phi = rng.uniform(0, 2 * math.pi, len(theta))
        ring = major + minor * np.cos(theta)
        out = np.concatenate([out, np.stack([ring * np.cos(phi), ring * np.sin(phi), minor * np.sin(theta)], axis=1)])
    return out[:n], np.zeros(n, dtype=np.int64)


def pyramid_mesh(half_base=1.0, height=1.5) -> Mesh:
    b, h = half_base, height
    v = np.array([[-b, -b, -h / 2], [b, -b, -h / 2], [b, b, -h / 2], [-b, b, -h / 2], [0, 0, h / 2]])
    f = [(0, 2, 1), (0, 3, 2), (0, 1, 4), (1, 2, 4), (2, 3, 4), (3, 0, 4)]
    return Mesh(v, np.array(f, dtype=np.int64))


def sample_pyramid(rng, n, half_base=1.0, height=1.5):
    pts, face = sample_surface(pyramid_mesh(half_base, height), n, rng, return_faces=True)
    return pts, (face >= 2).astype(np.int64)


def sample_capsule(rng, n, radius=0.5, height=1.5):
    part = _split(rng, n, [2 * math.pi * radius * height, 4 * math.pi * radius ** 2])
    pts = np.empty((n, 3))
    body = part == 0
    pts[body] = _tube(rng, int(body.sum()), radius, -height / 2, height / 2)
    m = n - int(body.sum())
    d = radius * _sphere_dirs(rng, m)
    d[:, 2] += np.where(d[:, 2] >= 0, height / 2, -height / 2)
    pts[~body] = d
    return pts, part


def sample_disk(rng, n, radius=1.0):
    return _disk(rng, n, radius), np.zeros(n, dtype=np.int64)


def _jitter(rng, lo=0.8, hi=1.2):
    return rng.uniform(lo, hi)


def sample_primitive(name: str, n: int, rng: np.random.Generator):
    """Canonical-frame samples of one primitive with random aspect jitter."""
    if name == "sphere":
        return sample_sphere(rng, n, _jitter(rng))
    if name == "cube":
        return sample_box(rng, n, tuple(_jitter(rng, 0.85, 1.15) for _ in range(3)))
    if name == "cylinder":
        return sample_cylinder(rng, n, 0.6 * _jitter(rng), 2.0 * _jitter(rng))
    if name == "cone":
        return sample_cone(rng, n, 0.8 * _jitter(rng), 2.0 * _jitter(rng))
    if name == "torus":
        return sample_torus(rng, n, 1.0, 0.3 * _jitter(rng))
    if name == "pyramid":
        return sample_pyramid(rng, n, 0.8 * _jitter(rng), 1.8 * _jitter(rng))
    if name == "capsule":
        return sample_capsule(rng, n, 0.5 * _jitter(rng), 1.6 * _jitter(rng))
    if name == "disk":
        return sample_disk(rng, n, _jitter(rng))
    raise ValueError(f"unknown shape {name!r}; choose from {', '.join(SHAPES)}")


def _orient(rng, orientation: str) -> np.ndarray:
    if orientation == "full":
        return random_rotation(rng)
    if orientation == "upright":
        a = rng.uniform(0, 2 * math.pi)
        c, s = math.cos(a), math.sin(a)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    raise ValueError(f"unknown orientation {orientation!r}")


def synth_shapes(classes, per_class: int, n_points: int, seed: int = 0,
                 orientation: str = "upright") -> DatasetContainer:
    """Labelled clouds of each primitive, randomly oriented and unit-sphere normalized.

    ``orientation`` is "upright" (random spin about z) or "full" (uniform 3D rotation).
    """
    classes = list(classes)
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    for c in classes:
        if c not in SHAPES:
            raise ValueError(f"unknown shape {c!r}; choose from {', '.join(SHAPES)}")
    rng = np.random.default_rng(seed)
    pts, labels = [], []
    for label, name in enumerate(classes):
        for _ in range(per_class):
            p, _ = sample_primitive(name, n_points, rng)
            p = p @ _orient(rng, orientation).T
            pts.append(normalize_unit_sphere(p))
            labels.append(label)
    return DatasetContainer(np.stack(pts), np.array(labels), len(classes), class_names=classes)


PART_CATEGORIES = {
    "cylinder": (sample_cylinder, ("side", "caps")),
    "cone": (sample_cone, ("lateral", "base")),
    "capsule": (sample_capsule, ("body", "ends")),
    "pyramid": (sample_pyramid, ("base", "faces")),
}


def synth_parts(categories, per_category: int, n_points: int, seed: int = 0,
                orientation: str = "upright") -> DatasetContainer:
    """Part-segmentation clouds; part ids are global across categories."""
    categories = list(categories)
    for c in categories:
        if c not in PART_CATEGORIES:
            raise ValueError(f"unknown part category {c!r}; choose from {', '.join(PART_CATEGORIES)}")
    rng = np.random.default_rng(seed)
    offsets, total = {}, 0
    for c in categories:
        offsets[c] = total
        total += len(PART_CATEGORIES[c][1])
    pts, labels, cats = [], [], []
    for ci, name in enumerate(categories):
        for _ in range(per_category):
            p, part = sample_primitive(name, n_points, rng)
            p = p @ _orient(rng, orientation).T
            pts.append(normalize_unit_sphere(p))
            labels.append(part + offsets[name])
            cats.append(ci)
    return DatasetContainer(np.stack(pts), np.stack(labels), total, categories=np.array(cats),
                            class_names=categories)
