"""Voxel surface extraction, Laplacian smoothing and STL input/output.

Meshes are indexed triangle lists in millimetres.  Surface extraction emits
two triangles for every exposed voxel face, merging corners that share a
lattice point, so the result is blocky until smoothed.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .morphology import VOXEL_PITCH

SMOOTHING_STEPS = 50

STL_HEADER = b"vawtevo binary STL"
_STL_RECORD = np.dtype(
    [("normal", "<f4", (3,)), ("vertices", "<f4", (3, 3)), ("attr", "<u2")]
)
assert _STL_RECORD.itemsize == 50


class STLParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset


@dataclass
class TriMesh:
    vertices: np.ndarray  # (n, 3) float64, mm
    triangles: np.ndarray  # (m, 3) int64, counter-clockwise seen from outside

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def soup(self) -> np.ndarray:
        """(m, 3, 3) array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Undirected edges (sorted vertex pairs) and how many triangles use each."""
        t = self.triangles
        a = t.ravel()
        b = t[:, [1, 2, 0]].ravel()
        n = max(self.n_vertices, 1)
        keys = np.minimum(a, b) * n + np.maximum(a, b)
        keys.sort()
        starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
        counts = np.diff(np.r_[starts, len(keys)])
        keys = keys[starts]
        return np.stack([keys // n, keys % n], axis=1), counts

    def is_closed_manifold(self) -> bool:
        if self.n_triangles == 0:
            return False
        _, counts = self.edges()
        return bool(np.all(counts == 2))

    def euler_characteristic(self) -> int:
        edges, _ = self.edges()
        used = np.unique(self.triangles)
        return len(used) - len(edges) + self.n_triangles

    def triangle_areas(self) -> np.ndarray:
        s = self.soup()
        return 0.5 * np.linalg.norm(np.cross(s[:, 1] - s[:, 0], s[:, 2] - s[:, 0]), axis=1)

    def signed_volume(self) -> float:
        s = self.soup()
        return float(np.einsum("ij,ij->i", s[:, 0], np.cross(s[:, 1], s[:, 2])).sum() / 6.0)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def close_edge_contacts(grid: np.ndarray) -> np.ndarray:
    """Fill cells until no two voxels touch along an edge only.

    Two filled cells that meet diagonally across a lattice edge (with the
    other two cells around that edge empty) would put four faces on a single
    edge.  Both empty cells of such a 2x2 block are filled, which keeps any
    lattice symmetry of the grid, and the scan repeats until nothing changes.
    """
    g = np.asarray(grid, dtype=bool).copy()
    while True:
        changed = False
        for a, b in ((0, 1), (0, 2), (1, 2)):
            g2 = np.moveaxis(g, (a, b), (0, 1))
            p, q = g2[:-1, :-1], g2[1:, 1:]
            r, s = g2[1:, :-1], g2[:-1, 1:]
            diag = (p & q & ~r & ~s) | (r & s & ~p & ~q)
            if diag.any():
                changed = True
                fill = np.zeros(g2.shape, dtype=bool)
                fill[:-1, :-1] |= diag
                fill[1:, 1:] |= diag
                fill[1:, :-1] |= diag
                fill[:-1, 1:] |= diag
                g2 |= fill  # g2 is a view of g
        if not changed:
            return g


# corner offsets in the face plane for +/- faces; (b, c) follow the face axis cyclically
_QUAD_POS = ((0, 0), (1, 0), (1, 1), (0, 1))
_QUAD_NEG = ((0, 0), (0, 1), (1, 1), (1, 0))


def extract_surface(grid: np.ndarray, pitch: float = VOXEL_PITCH, close_contacts: bool = True) -> TriMesh:
    """Closed triangle mesh of the filled region of a ``[z, y, x]`` grid.

    With ``close_contacts`` (the default) diagonal edge contacts are filled
    first so that every mesh edge borders exactly two triangles.
    """
    grid = np.asarray(grid, dtype=bool)
    if not grid.any():
        raise ValueError("cannot extract a surface from an empty grid")
    if close_contacts:
        grid = close_edge_contacts(grid)
    # work in (x, y, z) order so that vertex coordinates come out as x, y, z
    vox = np.ascontiguousarray(np.pad(np.transpose(grid, (2, 1, 0)), 1))
    inner = vox[1:-1, 1:-1, 1:-1]
    dims = inner.shape
    n = max(dims) + 1  # lattice points per axis
    stride = np.array([n * n, n, 1])

    keys = []
    for axis in range(3):
        b, c = (axis + 1) % 3, (axis + 2) % 3
        for sign in (1, -1):
            sl = [slice(1, -1)] * 3
            sl[axis] = slice(1 + sign, vox.shape[axis] - 1 + sign)
            exposed = inner & ~vox[tuple(sl)]
            flat = np.flatnonzero(exposed)
            if len(flat) == 0:
                continue
            i, rem = np.divmod(flat, dims[1] * dims[2])
            j, k = np.divmod(rem, dims[2])
            base = i * stride[0] + j * stride[1] + k * stride[2]
            if sign > 0:
                base += stride[axis]
            quad = _QUAD_POS if sign > 0 else _QUAD_NEG
            offsets = np.array([db * stride[b] + dc * stride[c] for db, dc in quad])
            keys.append(base[:, None] + offsets[None, :])
    keys = np.concatenate(keys)  # (faces, 4) lattice keys

    # dense lattice index: vertices come out sorted by (x, y, z)
    used = np.zeros(n**3, dtype=bool)
    used[keys.ravel()] = True
    uniq = np.flatnonzero(used)
    index = np.cumsum(used) - 1
    inverse = index[keys]
    lattice = np.stack([uniq // (n * n), (uniq // n) % n, uniq % n], axis=1)
    tris = np.concatenate([inverse[:, [0, 1, 2]], inverse[:, [0, 2, 3]]])
    return TriMesh(lattice * pitch, tris)


def neighbour_matrix(mesh: TriMesh) -> sparse.csr_matrix:
    """Row-normalised vertex adjacency over triangle edges."""
    t = mesh.triangles
    rows = np.concatenate([t[:, 0], t[:, 1], t[:, 2], t[:, 1], t[:, 2], t[:, 0]])
    cols = np.concatenate([t[:, 1], t[:, 2], t[:, 0], t[:, 0], t[:, 1], t[:, 2]])
    n = mesh.n_vertices
    adj = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n)).tocsr()
    adj.data[:] = 1.0  # duplicates from the two triangles on each edge
    deg = np.asarray(adj.sum(axis=1)).ravel()
    deg[deg == 0] = 1.0
    return sparse.diags(1.0 / deg) @ adj


def smooth(mesh: TriMesh, steps: int = SMOOTHING_STEPS) -> TriMesh:
    """Uniform-weight Laplacian smoothing with synchronous updates.

    Every step replaces each vertex by the mean of its edge neighbours,
    computed from the previous step's positions.  Connectivity is untouched.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    v = mesh.vertices.copy()
    if steps:
        avg = neighbour_matrix(mesh)
        for _ in range(steps):
            v = avg @ v
    return TriMesh(v, mesh.triangles.copy())


def face_normals(soup: np.ndarray) -> np.ndarray:
    """Unit normals from the winding; zero for degenerate triangles."""
    u = soup[:, 1] - soup[:, 0]
    v = soup[:, 2] - soup[:, 0]
    n = np.empty_like(u)
    n[:, 0] = u[:, 1] * v[:, 2] - u[:, 2] * v[:, 1]
    n[:, 1] = u[:, 2] * v[:, 0] - u[:, 0] * v[:, 2]
    n[:, 2] = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
    length = np.sqrt(np.einsum("ij,ij->i", n, n))[:, None]
    return np.divide(n, length, out=np.zeros_like(n), where=length > 0)


def write_stl(mesh: TriMesh, fmt: str = "binary", name: str = "vawt") -> bytes:
    """Serialise to binary (little-endian float32) or ASCII STL."""
    soup = mesh.vertices.astype(np.float32)[mesh.triangles]
    normals = face_normals(soup)
    if fmt == "binary":
        rec = np.zeros(len(soup), dtype=_STL_RECORD)
        rec["normal"] = normals
        rec["vertices"] = soup
        header = STL_HEADER.ljust(80, b" ")
        return header + struct.pack("<I", len(soup)) + rec.tobytes()
    if fmt == "ascii":
        lines = [f"solid {name}"]
        for nrm, tri in zip(normals, soup):
            lines.append("  facet normal {:.9g} {:.9g} {:.9g}".format(*nrm))
            lines.append("    outer loop")
            for v in tri:
                lines.append("      vertex {:.9g} {:.9g} {:.9g}".format(*v))
            lines.append("    endloop")
            lines.append("  endfacet")
        lines.append(f"endsolid {name}")
        return ("\n".join(lines) + "\n").encode("ascii")
    raise ValueError(f"unknown STL format {fmt!r}")


def _mesh_from_soup(soup: np.ndarray) -> TriMesh:
    # exact-bit identity after unifying -0.0 with +0.0; order is lexicographic
    flat = np.ascontiguousarray(soup.reshape(-1, 3), dtype=np.float32) + np.float32(0.0)
    if len(flat) == 0:
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    bits = flat.view(np.uint32)
    hi = (bits[:, 0].astype(np.uint64) << np.uint64(32)) | bits[:, 1]
    lo = bits[:, 2]
    order = np.lexsort((lo, hi))
    hi_s, lo_s = hi[order], lo[order]
    new = np.ones(len(order), dtype=bool)
    new[1:] = (hi_s[1:] != hi_s[:-1]) | (lo_s[1:] != lo_s[:-1])
    inverse = np.empty(len(order), dtype=np.int64)
    inverse[order] = np.cumsum(new) - 1
    verts = flat[order[new]].astype(np.float64)
    return TriMesh(verts, inverse.reshape(-1, 3))


def _read_binary(data: bytes) -> TriMesh:
    (count,) = struct.unpack_from("<I", data, 80)
    expected = 84 + 50 * count
    if len(data) < expected:
        complete = (len(data) - 84) // 50
        raise STLParseError(f"truncated: {count} triangles declared, {complete} complete", 84 + 50 * complete)
    if len(data) > expected:
        raise STLParseError(f"{len(data) - expected} trailing bytes after {count} triangles", expected)
    rec = np.frombuffer(data, dtype=_STL_RECORD, count=count, offset=84)
    return _mesh_from_soup(rec["vertices"])


_TOKEN = re.compile(rb"\S+")


def _read_ascii(data: bytes) -> TriMesh:
    tokens = [(m.group(), m.start()) for m in _TOKEN.finditer(data)]
    pos = 0

    def take(expected=None):
        nonlocal pos
        if pos >= len(tokens):
            raise STLParseError(f"unexpected end of file, expected {expected or 'more input'}", len(data))
        tok, off = tokens[pos]
        if expected is not None and tok != expected:
            raise STLParseError(f"expected {expected.decode()!r}, got {tok.decode(errors='replace')!r}", off)
        pos += 1
        return tok, off

    def number():
        tok, off = take()
        try:
            return float(tok)
        except ValueError:
            raise STLParseError(f"expected a number, got {tok.decode(errors='replace')!r}", off) from None

    take(b"solid")
    # optional solid name runs up to the first facet or endsolid
    while pos < len(tokens) and tokens[pos][0] not in (b"facet", b"endsolid"):
        pos += 1
    tris = []
    while True:
        if pos >= len(tokens):
            raise STLParseError("missing endsolid", len(data))
        if tokens[pos][0] == b"endsolid":
            break
        take(b"facet")
        take(b"normal")
        for _ in range(3):
            number()
        take(b"outer")
        take(b"loop")
        tri = []
        for _ in range(3):
            take(b"vertex")
            tri.append([number(), number(), number()])
        take(b"endloop")
        take(b"endfacet")
        tris.append(tri)
    return _mesh_from_soup(np.array(tris, dtype=np.float32).reshape(-1, 3, 3))


def read_stl(data: bytes) -> TriMesh:
    """Parse binary or ASCII STL; vertices are re-merged by exact coordinate."""
    if len(data) >= 84:
        (count,) = struct.unpack_from("<I", data, 80)
        if 84 + 50 * count == len(data):
            return _read_binary(data)
    if data.lstrip()[:5] == b"solid":
        return _read_ascii(data)
    if len(data) < 84:
        raise STLParseError("truncated binary header", len(data))
    return _read_binary(data)
