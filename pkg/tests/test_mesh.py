import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vawtevo.genome import Genotype, make_rng, random_genotype
from vawtevo.mesh import (
    STLParseError,
    TriMesh,
    close_edge_contacts,
    extract_surface,
    face_normals,
    read_stl,
    smooth,
    write_stl,
)
from vawtevo.morphology import GRID, VOXEL_PITCH, build_grid, platform_mask


def grid_with(*cells, shape=(4, 4, 4)):
    g = np.zeros(shape, dtype=bool)
    for c in cells:
        g[c] = True
    return g


def exposed_faces(grid):
    # brute-force neighbour scan
    n = 0
    padded = np.pad(grid, 1)
    for z, y, x in np.argwhere(grid):
        for dz, dy, dx in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
            n += not padded[z + 1 + dz, y + 1 + dy, x + 1 + dx]
    return n


def f32_soup(mesh):
    return mesh.vertices.astype(np.float32)[mesh.triangles]


def cube():
    return extract_surface(grid_with((1, 1, 1)), pitch=1.0)


# --- extraction -----------------------------------------------------------


def test_single_voxel_cube():
    m = cube()
    assert (m.n_vertices, m.n_triangles) == (8, 12)
    assert m.is_closed_manifold()
    assert m.euler_characteristic() == 2
    assert m.signed_volume() == pytest.approx(1.0)


def test_two_adjacent_voxels():
    g = grid_with((1, 1, 1), (1, 1, 2))
    m = extract_surface(g, pitch=1.0)
    assert exposed_faces(g) == 10
    assert m.n_triangles == 20
    assert m.n_vertices == 12
    assert m.is_closed_manifold()


def test_empty_grid_rejected():
    with pytest.raises(ValueError):
        extract_surface(np.zeros((3, 3, 3), dtype=bool))


def test_platform_only_is_a_torus():
    grid = np.broadcast_to(platform_mask(), (GRID, GRID, GRID))
    m = extract_surface(grid)
    assert m.is_closed_manifold()
    assert m.euler_characteristic() == 0


def test_faces_point_outward():
    m = cube()
    s = m.soup()
    centroids = s.mean(axis=1)
    outward = centroids - 1.5
    assert (np.einsum("ij,ij->i", face_normals(s), outward) > 0).all()


def test_diagonal_contact_is_closed():
    g = grid_with((1, 1, 1), (1, 2, 2))
    assert not extract_surface(g, close_contacts=False).is_closed_manifold()
    closed = close_edge_contacts(g)
    assert closed[1, 1:3, 1:3].all()
    assert extract_surface(g).is_closed_manifold()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.8))
def test_random_blobs_are_closed(seed, density):
    g = np.random.default_rng(seed).random((5, 5, 5)) < density
    if not g.any():
        g[2, 2, 2] = True
    m = extract_surface(g, pitch=1.0)
    assert m.is_closed_manifold()
    assert m.signed_volume() > 0
    assert (m.triangle_areas() > 0).all()
    # filling diagonal contacts only adds voxels
    assert m.signed_volume() >= g.sum() - 1e-9


def test_genotype_mesh_valid_and_within_workspace():
    rng = make_rng(11)
    for mode in ("flat", "z-varying"):
        m = extract_surface(build_grid(random_genotype(rng, mode)))
        assert m.is_closed_manifold()
        lo, hi = m.bounds()
        assert lo.min() >= -1e-9 and hi.max() <= GRID * VOXEL_PITCH + 1e-9
        assert (m.triangle_areas() > 0).all()


# --- smoothing ------------------------------------------------------------


def test_smooth_zero_steps_is_identity():
    m = extract_surface(build_grid(Genotype((5, 8, 2, 4, 9, 12, 30, 41, 20, 7))))
    s = smooth(m, 0)
    assert np.array_equal(s.vertices, m.vertices)
    assert np.array_equal(s.triangles, m.triangles)


def test_smooth_cube_one_step():
    m = cube()
    s = smooth(m, 1)
    c = m.vertices.mean(axis=0)
    assert np.allclose(s.vertices.mean(axis=0), c)
    before = np.linalg.norm(m.vertices - c, axis=1)
    after = np.linalg.norm(s.vertices - c, axis=1)
    assert (after < before).all()
    # the triangulated cube is symmetric under point reflection through its centre
    for i, v in enumerate(m.vertices):
        j = int(np.flatnonzero((m.vertices == 2 * c - v).all(axis=1))[0])
        assert np.allclose(s.vertices[i] - c, c - s.vertices[j])


def test_smooth_is_synchronous_mean():
    m = cube()
    s = smooth(m, 1)
    edges, _ = m.edges()
    for i in range(m.n_vertices):
        nbrs = set(edges[edges[:, 0] == i, 1]) | set(edges[edges[:, 1] == i, 0])
        assert np.allclose(s.vertices[i], m.vertices[sorted(nbrs)].mean(axis=0))


def test_smooth_bbox_non_increasing():
    m = extract_surface(build_grid(random_genotype(make_rng(3), "z-varying")))
    lo, hi = m.bounds()
    for _ in range(50):
        m = smooth(m, 1)
        nlo, nhi = m.bounds()
        assert (nlo >= lo - 1e-12).all() and (nhi <= hi + 1e-12).all()
        lo, hi = nlo, nhi


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 20))
def test_smooth_preserves_connectivity(seed, steps):
    g = np.random.default_rng(seed).random((4, 4, 4)) < 0.5
    g[1, 1, 1] = True
    m = extract_surface(g)
    s = smooth(m, steps)
    assert s.n_vertices == m.n_vertices
    assert np.array_equal(s.triangles, m.triangles)
    assert s.is_closed_manifold()


# --- STL ------------------------------------------------------------------


def test_binary_cube_size_and_count():
    data = write_stl(cube())
    assert len(data) == 84 + 12 * 50 == 684
    assert int.from_bytes(data[80:84], "little") == 12


def test_binary_is_byte_deterministic():
    m = smooth(cube(), 2)
    assert write_stl(m) == write_stl(m)


@pytest.mark.parametrize("fmt", ["binary", "ascii"])
def test_round_trip(fmt):
    m = smooth(extract_surface(build_grid(random_genotype(make_rng(8), "z-varying"))), 5)
    back = read_stl(write_stl(m, fmt))
    assert np.array_equal(back.soup(), f32_soup(m))
    assert back.n_vertices == m.n_vertices
    assert back.is_closed_manifold()


def test_ascii_and_binary_parse_equal():
    m = smooth(cube(), 3)
    a, b = read_stl(write_stl(m, "ascii")), read_stl(write_stl(m, "binary"))
    assert np.array_equal(a.soup(), b.soup())
    assert np.array_equal(a.triangles, b.triangles)


def test_ascii_grammar():
    text = write_stl(cube(), "ascii", name="cube").decode()
    lines = text.splitlines()
    assert lines[0] == "solid cube" and lines[-1] == "endsolid cube"
    assert text.count("facet normal") == 12
    assert text.count("vertex") == 36


def test_truncated_binary():
    data = write_stl(cube())
    with pytest.raises(STLParseError) as info:
        read_stl(data[:-10])
    assert info.value.offset == 84 + 11 * 50
    with pytest.raises(STLParseError):
        read_stl(data[:50])


def test_bad_ascii_reports_offset():
    data = write_stl(cube(), "ascii")
    bad = data.replace(b"outer loop", b"outer lop", 1)
    with pytest.raises(STLParseError) as info:
        read_stl(bad)
    assert bad[info.value.offset :].startswith(b"lop")


def test_unknown_format():
    with pytest.raises(ValueError):
        write_stl(cube(), "obj")


def test_trimesh_soup_shape():
    m = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    assert m.soup().shape == (1, 3, 3)
    assert not m.is_closed_manifold()
