import io
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from vagcn.data import (
    SHAPES,
    DatasetContainer,
    Mesh,
    augment,
    normalize_unit_sphere,
    parse_off,
    read_container,
    sample_surface,
    synth_parts,
    synth_shapes,
    write_container,
    write_off,
)
from vagcn.data.synth import sample_box, sample_sphere
from vagcn.errors import (
    FaceArityError,
    FaceIndexError,
    LabelError,
    LengthError,
    MagicError,
    MissingCountsError,
    OffParseError,
    VersionError,
    VertexCountError,
)

FIXTURES = Path(__file__).parent / "fixtures"

TETRA = """OFF
4 4 6
0 0 0
1 0 0
0 1 0
0 0 1
3 0 1 2
3 0 1 3
3 0 2 3
3 1 2 3
"""


def fixture(name):
    return parse_off((FIXTURES / name).read_text())


# ---------------------------------------------------------------- OFF

def test_tetrahedron():
    m = parse_off(TETRA)
    assert m.vertices.shape == (4, 3) and m.faces.shape == (4, 3) and m.dropped_faces == 0


def test_header_dialects_and_quads_agree():
    split, fused, quad = fixture("pyramid_split.off"), fixture("pyramid_fused.off"), fixture("pyramid_quad.off")
    for other in (fused, quad):
        assert np.array_equal(split.vertices, other.vertices)
        assert np.array_equal(split.faces, other.faces)
    assert quad.faces[:2].tolist() == [[0, 1, 2], [0, 2, 3]]


def test_fused_header_inline():
    assert np.array_equal(parse_off("OFF4 4 0\n" + TETRA.split("\n", 2)[2]).faces, parse_off(TETRA).faces)


def test_zero_area_faces_dropped_and_counted():
    text = "OFF\n3 2 0\n0 0 0\n1 0 0\n2 0 0\n3 0 1 2\n3 0 0 1\n"
    m = parse_off(text)
    assert m.faces.shape == (0, 3) and m.dropped_faces == 2


@pytest.mark.parametrize("text, error, line", [
    ("", MissingCountsError, 1),
    ("OFF\n# nothing else\n", MissingCountsError, 1),
    ("OFF\nfour four zero\n", MissingCountsError, 2),
    ("OFF\n3 1 0\n0 0 0\n1 0 0\n", VertexCountError, 4),
    ("OFF\n3 1 0\n0 0 0\n1 0\n0 1 0\n3 0 1 2\n", VertexCountError, 4),
    ("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 3\n", FaceIndexError, 6),
    ("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n2 0 1\n", FaceArityError, 6),
    ("OFF\n3 2 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n", OffParseError, 6),
])
def test_parse_errors_carry_line_numbers(text, error, line):
    with pytest.raises(error) as info:
        parse_off(text)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")


def test_error_kinds_are_distinct():
    kinds = {MissingCountsError, VertexCountError, FaceIndexError, FaceArityError}
    assert len(kinds) == 4 and all(issubclass(k, OffParseError) for k in kinds)


def test_write_parse_round_trip():
    rng = np.random.default_rng(0)
    mesh = Mesh(rng.standard_normal((6, 3)), rng.integers(0, 6, (5, 3)))
    mesh.faces = mesh.faces[mesh.face_areas() > 0]
    back = parse_off(write_off(mesh))
    assert np.array_equal(back.vertices, mesh.vertices) and np.array_equal(back.faces, mesh.faces)


# ---------------------------------------------------------------- sampling

SQUARE = Mesh(np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]]), np.array([[0, 1, 2], [0, 2, 3]]))


def test_square_halves_get_equal_share():
    _, face = sample_surface(SQUARE, 10000, seed=1, return_faces=True)
    assert abs(int((face == 0).sum()) - 5000) <= 300


def test_degenerate_mesh_rejected():
    flat = Mesh(np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]]), np.array([[0, 1, 2]]))
    with pytest.raises(ValueError):
        sample_surface(flat, 10)


def test_samples_lie_on_their_faces():
    mesh = fixture("pyramid_quad.off")
    pts, face = sample_surface(mesh, 2000, seed=3, return_faces=True)
    tri = mesh.vertices[mesh.faces[face]]
    normal = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    normal /= np.linalg.norm(normal, axis=1, keepdims=True)
    assert np.abs(((pts - tri[:, 0]) * normal).sum(axis=1)).max() < 1e-6


def test_sampling_is_seeded():
    assert np.array_equal(sample_surface(SQUARE, 50, seed=7), sample_surface(SQUARE, 50, seed=7))
    assert not np.array_equal(sample_surface(SQUARE, 50, seed=7), sample_surface(SQUARE, 50, seed=8))


@pytest.mark.parametrize("name", ["pyramid_quad.off", "pyramid_split.off"])
def test_face_occupancy_matches_area(name):
    mesh = fixture(name)
    for order in (np.arange(len(mesh.faces)), np.random.default_rng(0).permutation(len(mesh.faces))):
        shuffled = Mesh(mesh.vertices, mesh.faces[order])
        _, face = sample_surface(shuffled, 20000, seed=11, return_faces=True)
        observed = np.bincount(face, minlength=len(order))
        areas = shuffled.face_areas()
        expected = 20000 * areas / areas.sum()
        assert stats.chisquare(observed, expected).pvalue > 0.001


# ---------------------------------------------------------------- synthetic shapes

def test_sphere_samples_on_radius():
    pts, _ = sample_sphere(np.random.default_rng(0), 500, radius=0.7)
    assert np.abs(np.linalg.norm(pts, axis=1) - 0.7).max() < 1e-6


def test_cube_samples_on_one_face_each():
    half = (0.9, 1.1, 1.0)
    pts, _ = sample_box(np.random.default_rng(0), 500, half)
    on_face = np.abs(np.abs(pts) - np.array(half)) < 1e-6
    assert np.all(on_face.sum(axis=1) == 1)
    assert np.all(np.abs(pts) <= np.array(half) + 1e-12)


def test_synth_shapes_deterministic_and_normalized():
    a = synth_shapes(SHAPES, 2, 64, seed=3)
    b = synth_shapes(SHAPES, 2, 64, seed=3)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.labels, b.labels)
    assert a.points.shape == (16, 64, 3) and a.labels.tolist() == sorted([0, 1, 2, 3, 4, 5, 6, 7] * 2)
    norms = np.linalg.norm(a.points, axis=-1)
    np.testing.assert_allclose(norms.max(axis=1), 1, atol=1e-6)
    full = synth_shapes(["sphere", "cube"], 1, 32, seed=0, orientation="full")
    assert full.num_samples == 2


def test_synth_errors():
    with pytest.raises(ValueError):
        synth_shapes(["sphere"], 2, 32)
    with pytest.raises(ValueError):
        synth_shapes(["sphere", "teapot"], 2, 32)
    with pytest.raises(ValueError):
        synth_parts(["teapot"], 2, 32)
    with pytest.raises(ValueError):
        synth_shapes(["sphere", "cube"], 1, 32, orientation="sideways")


def test_synth_parts_labels():
    ds = synth_parts(["cylinder", "cone"], 3, 128, seed=0)
    assert ds.segmentation and ds.num_classes == 4
    assert ds.categories.tolist() == [0, 0, 0, 1, 1, 1]
    assert set(np.unique(ds.labels[:3])) <= {0, 1} and set(np.unique(ds.labels[3:])) <= {2, 3}


# ---------------------------------------------------------------- transforms

def test_normalize_examples():
    unit = normalize_unit_sphere(np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 0.5, 0]]))
    again = normalize_unit_sphere(unit)
    np.testing.assert_allclose(again, unit, atol=1e-7)
    assert normalize_unit_sphere(np.array([[3.0, 4.0, 5.0]])).tolist() == [[0.0, 0.0, 0.0]]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 100))
def test_normalize_properties(seed, n):
    pts = np.random.default_rng(seed).uniform(-50, 50, (n, 3))
    out = normalize_unit_sphere(pts)
    assert abs(np.linalg.norm(out, axis=1).max() - 1) < 1e-6
    np.testing.assert_allclose(out.mean(axis=0), 0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.001, 0.2))
def test_jitter_is_clipped(seed, sigma):
    pts = np.random.default_rng(seed).uniform(-1, 1, (200, 3))
    out = augment(pts, seed, scale_range=(1, 1), jitter_sigma=sigma, jitter_clip=0.05, shift_range=0.0)
    assert np.abs(out - pts).max() <= 0.05 + 1e-12


def test_augment_identity_and_reproducible():
    pts = np.random.default_rng(0).uniform(-1, 1, (50, 3))
    same = augment(pts, 1, scale_range=(1, 1), jitter_sigma=0.0, shift_range=0.0)
    assert np.array_equal(same, pts)
    assert np.array_equal(augment(pts, 5), augment(pts, 5))
    assert not np.array_equal(augment(pts, 5), pts)


# ---------------------------------------------------------------- container

def as_bytes(ds):
    buf = io.BytesIO()
    write_container(buf, ds)
    return buf.getvalue()


def test_container_round_trip_bitwise(tmp_path):
    ds = synth_shapes(["sphere", "cube", "disk"], 2, 32, seed=1)
    ds.extras = np.random.default_rng(0).standard_normal((6, 32, 2)).astype(np.float32)
    path = tmp_path / "d.vapc"
    write_container(path, ds)
    back = read_container(path)
    assert np.array_equal(back.points, ds.points) and np.array_equal(back.extras, ds.extras)
    assert np.array_equal(back.labels, ds.labels) and back.num_classes == 3
    assert as_bytes(back) == path.read_bytes()


def test_segmentation_container_round_trip():
    ds = synth_parts(["capsule", "pyramid"], 2, 16, seed=2)
    back = read_container(as_bytes(ds))
    assert back.segmentation and np.array_equal(back.labels, ds.labels)
    assert np.array_equal(back.categories, ds.categories)
    assert as_bytes(back) == as_bytes(ds)


def test_container_header_layout():
    ds = DatasetContainer(np.zeros((2, 4, 3)), [1, 0], 2)
    raw = as_bytes(ds)
    assert raw[:4] == b"VAPC"
    assert np.frombuffer(raw[4:24], "<u4").tolist() == [1, 2, 4, 0, 2]
    assert len(raw) == 24 + 2 * (4 * 3 * 4 + 2)


def test_container_errors():
    raw = as_bytes(synth_shapes(["sphere", "cube"], 1, 8))
    with pytest.raises(MagicError):
        read_container(b"XAPC" + raw[4:])
    with pytest.raises(LengthError):
        read_container(raw[:-1])
    with pytest.raises(LengthError):
        read_container(raw + b"\0")
    with pytest.raises(VersionError):
        read_container(raw[:4] + (2).to_bytes(4, "little") + raw[8:])
    with pytest.raises(LabelError):
        read_container(raw[:20] + (1).to_bytes(4, "little") + raw[24:])
    with pytest.raises(LabelError):
        write_container(io.BytesIO(), DatasetContainer(np.zeros((1, 2, 3)), [5], 2))
    kinds = {MagicError, LengthError, LabelError, VersionError}
    assert len(kinds) == 4
