"""OFF meshes and area-weighted surface sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import (
    FaceArityError,
    FaceIndexError,
    MissingCountsError,
    OffParseError,
    VertexCountError,
)


@dataclass
class Mesh:
    vertices: np.ndarray   # (V, 3) float64
    faces: np.ndarray      # (F, 3) int64
    dropped_faces: int = 0

    def face_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.faces[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def _content_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def parse_off(text: str) -> Mesh:
    """Parse OFF text; polygons are fan-triangulated and zero-area triangles dropped.

    Accepts the ModelNet quirk where the counts are fused onto the keyword
    line (``OFF4 4 0``).
    """
    lines = _content_lines(text)
    try:
        lineno, line = next(lines)
    except StopIteration:
        raise MissingCountsError("empty OFF input", 1) from None
    if line.startswith("OFF"):
        line = line[3:].strip()
        if not line:
            try:
                lineno, line = next(lines)
            except StopIteration:
                raise MissingCountsError("missing counts line", lineno) from None
    try:
        counts = [int(tok) for tok in line.split()]
    except ValueError:
        raise MissingCountsError(f"expected 'V F E' counts, got {line!r}", lineno) from None
    if len(counts) < 2:
        raise MissingCountsError(f"expected 'V F E' counts, got {line!r}", lineno)
    n_vert, n_face = counts[0], counts[1]

    vertices = np.empty((n_vert, 3))
    for v in range(n_vert):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise VertexCountError(f"expected {n_vert} vertices, found {v}", lineno) from None
        toks = line.split()
        try:
            if len(toks) < 3:
                raise ValueError
            vertices[v] = [float(t) for t in toks[:3]]
        except ValueError:
            raise VertexCountError(f"malformed vertex line {line!r}", lineno) from None

    tris = []
    for f in range(n_face):
        try:
            lineno, line = next(lines)
        except StopIteration:
            raise OffParseError(f"expected {n_face} faces, found {f}", lineno) from None
        try:
            toks = [int(t) for t in line.split()]
        except ValueError:
            # trailing per-face colors may be floats; indices never are
            toks = line.split()
            try:
                toks = [int(toks[0])] + [int(t) for t in toks[1:1 + int(toks[0])]]
            except (ValueError, IndexError):
                raise OffParseError(f"malformed face line {line!r}", lineno) from None
        n = toks[0]
        if n < 3:
            raise FaceArityError(f"face with {n} vertices", lineno)
        idx = toks[1:1 + n]
        if len(idx) < n:
            raise FaceArityError(f"face declares {n} vertices but lists {len(idx)}", lineno)
        for i in idx:
            if not 0 <= i < n_vert:
                raise FaceIndexError(f"vertex index {i} out of range for {n_vert} vertices", lineno)
        for j in range(1, n - 1):
            tris.append((idx[0], idx[j], idx[j + 1]))

    faces = np.asarray(tris, dtype=np.int64).reshape(-1, 3)
    mesh = Mesh(vertices, faces)
    areas = mesh.face_areas()
    keep = areas > 0
    return Mesh(vertices, faces[keep], int((~keep).sum()))


def write_off(mesh: Mesh) -> str:
    out = ["OFF", f"{len(mesh.vertices)} {len(mesh.faces)} 0"]
    out += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    out += ["3 " + " ".join(str(int(i)) for i in f) for f in mesh.faces]
    return "\n".join(out) + "\n"


def sample_surface(mesh: Mesh, n: int, seed=0, return_faces: bool = False):
    """Draw ``n`` points uniformly over the surface (face chosen by area)."""
    rng = np.random.default_rng(seed)
    areas = mesh.face_areas()
    total = areas.sum()
    if not total > 0:
        raise ValueError("mesh has zero total surface area")
    face = rng.choice(len(areas), size=n, p=areas / total)
    u, v = rng.random(n), rng.random(n)
    flip = u + v > 1
    u[flip], v[flip] = 1 - u[flip], 1 - v[flip]
    tri = mesh.vertices[mesh.faces[face]]
    pts = tri[:, 0] + u[:, None] * (tri[:, 1] - tri[:, 0]) + v[:, None] * (tri[:, 2] - tri[:, 0])
    return (pts, face) if return_faces else pts
