"""Triangulated disk-type surfaces: I/O, validation, measures and landmarks."""

from __future__ import annotations

import csv
import io
import logging
import os
import struct
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import BinaryIO, Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

logger = logging.getLogger(__name__)

DUPLICATE_TOL = 1e-9
DEGENERATE_TOL = 1e-12


class MeshError(ValueError):
    """Base class for mesh loading and validation failures."""


class MeshParseError(MeshError):
    pass


class TopologyError(MeshError):
    pass


class DegenerateFaceError(MeshError):
    pass


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Embedded triangle mesh with counterclockwise faces.

    Arrays are stored read-only so a mesh can be shared between workers.
    Construction does not validate topology; use :func:`check_disk_mesh`
    (``load_mesh`` does this for you).
    """

    vertices: np.ndarray
    faces: np.ndarray
    specimen_id: str = ""

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        f = np.asarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must have shape (n, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshError(f"faces must have shape (m, 3), got {f.shape}")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError("face index out of range")
        object.__setattr__(self, "vertices", _readonly(v.copy()))
        object.__setattr__(self, "faces", _readonly(f.copy()))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def face_normals_raw(self) -> np.ndarray:
        v = self.vertices
        f = self.faces
        return np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])

    @cached_property
    def face_areas(self) -> np.ndarray:
        return _readonly(0.5 * np.linalg.norm(self.face_normals_raw, axis=1))

    @property
    def total_area(self) -> float:
        return float(self.face_areas.sum())

    @cached_property
    def bbox_diagonal(self) -> float:
        if len(self.vertices) == 0:
            return 0.0
        return float(np.linalg.norm(self.vertices.max(0) - self.vertices.min(0)))

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted index pairs, shape (E, 2)."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        return _readonly(np.unique(e, axis=0))

    @cached_property
    def boundary_loops(self) -> list[np.ndarray]:
        """Boundary loops as ordered vertex arrays (orientation of the faces)."""
        nxt = _boundary_successors(self.faces)
        loops = []
        seen = set()
        for start in sorted(nxt):
            if start in seen:
                continue
            loop = [start]
            seen.add(start)
            cur = nxt[start][0]
            while cur != start:
                if cur in seen or cur not in nxt:
                    break
                loop.append(cur)
                seen.add(cur)
                cur = nxt[cur][0]
            loops.append(np.array(loop, dtype=np.int64))
        return loops

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        if not self.boundary_loops:
            return np.zeros(0, dtype=np.int64)
        return _readonly(np.sort(np.concatenate(self.boundary_loops)))

    @cached_property
    def is_boundary_vertex(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.boundary_vertices] = True
        return _readonly(mask)

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric vertex adjacency with Euclidean edge lengths as weights."""
        e = self.edges
        lengths = np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)
        n = self.n_vertices
        a = sparse.coo_matrix(
            (np.concatenate([lengths, lengths]), (np.concatenate([e[:, 0], e[:, 1]]), np.concatenate([e[:, 1], e[:, 0]]))),
            shape=(n, n),
        )
        return a.tocsr()

    def transformed(self, rotation: np.ndarray, translation: np.ndarray | None = None, scale: float = 1.0) -> "TriMesh":
        """Return ``scale * R x + t`` applied to every vertex."""
        t = np.zeros(3) if translation is None else np.asarray(translation, dtype=float)
        v = scale * self.vertices @ np.asarray(rotation, dtype=float).T + t
        return TriMesh(v, self.faces, self.specimen_id)


def _boundary_successors(faces: np.ndarray) -> dict[int, list[int]]:
    f = faces
    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    und = np.sort(directed, axis=1)
    _, inv, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    bd = directed[counts[inv] == 1]
    nxt: dict[int, list[int]] = {}
    for a, b in bd.tolist():
        nxt.setdefault(a, []).append(b)
    return nxt


@dataclass
class TopologyReport:
    n_vertices: int
    n_edges: int
    n_faces: int
    euler_characteristic: int
    n_boundary_loops: int
    n_boundary_edges: int
    non_manifold_edges: int
    misoriented_edges: int
    pinched_vertices: int
    unreferenced_vertices: int
    passed: bool
    messages: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def validate_disk_topology(mesh: TriMesh) -> TopologyReport:
    """Diagnose whether ``mesh`` is an oriented manifold disk."""
    f = mesh.faces
    msgs = []
    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    und = np.sort(directed, axis=1)
    uniq, inv, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    n_edges = len(uniq)
    non_manifold = int(np.sum(counts > 2))
    if non_manifold:
        msgs.append(f"{non_manifold} edge(s) shared by more than two faces")

    # each directed edge may occur at most once in an oriented manifold
    _, dcounts = np.unique(directed, axis=0, return_counts=True)
    misoriented = int(np.sum(dcounts > 1))
    if misoriented:
        msgs.append(f"{misoriented} directed edge(s) repeated: inconsistent orientation")

    nxt = _boundary_successors(f)
    pinched = sum(1 for v in nxt.values() if len(v) > 1)
    if pinched:
        msgs.append(f"{pinched} boundary vertex/vertices pinched")
    n_boundary_edges = int(np.sum(counts == 1))
    n_loops = len(mesh.boundary_loops) if not pinched else _count_loops_loose(nxt)

    referenced = np.zeros(mesh.n_vertices, dtype=bool)
    referenced[f.ravel()] = True
    unreferenced = int(np.sum(~referenced))
    if unreferenced:
        msgs.append(f"{unreferenced} unreferenced vertex/vertices")

    chi = mesh.n_vertices - n_edges + mesh.n_faces
    if n_loops != 1:
        msgs.append(f"expected 1 boundary loop, found {n_loops}")
    if chi != 1:
        msgs.append(f"Euler characteristic {chi} != 1")
    passed = not msgs
    return TopologyReport(
        n_vertices=mesh.n_vertices,
        n_edges=n_edges,
        n_faces=mesh.n_faces,
        euler_characteristic=chi,
        n_boundary_loops=n_loops,
        n_boundary_edges=n_boundary_edges,
        non_manifold_edges=non_manifold,
        misoriented_edges=misoriented,
        pinched_vertices=pinched,
        unreferenced_vertices=unreferenced,
        passed=passed,
        messages=msgs,
    )


def _count_loops_loose(nxt: dict[int, list[int]]) -> int:
    # pinched boundaries: count connected components of the boundary graph
    if not nxt:
        return 0
    nodes = sorted(set(nxt) | {b for bs in nxt.values() for b in bs})
    idx = {v: i for i, v in enumerate(nodes)}
    rows = [idx[a] for a, bs in nxt.items() for _ in bs]
    cols = [idx[b] for bs in nxt.values() for b in bs]
    g = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(nodes), len(nodes)))
    return int(csgraph.connected_components(g, directed=False)[0])


def check_disk_mesh(mesh: TriMesh) -> TriMesh:
    """Raise unless ``mesh`` is a valid, non-degenerate disk-type surface."""
    if mesh.n_faces == 0:
        raise TopologyError("mesh has no faces")
    report = validate_disk_topology(mesh)
    if not report.passed:
        raise TopologyError("; ".join(report.messages))
    diag = mesh.bbox_diagonal
    if diag <= 0:
        raise DegenerateFaceError("mesh has zero extent")
    bad = np.flatnonzero(mesh.face_areas <= DEGENERATE_TOL * diag**2)
    if len(bad):
        raise DegenerateFaceError(f"{len(bad)} degenerate face(s), first index {bad[0]}")
    pairs = cKDTree(mesh.vertices).query_pairs(DUPLICATE_TOL * diag)
    if pairs:
        i, j = min(pairs)
        raise TopologyError(f"duplicate vertices {i} and {j}")
    return mesh


# --------------------------------------------------------------------- I/O


def _tokens(lines: Iterable[str]):
    for line in lines:
        line = line.split("#", 1)[0].strip()
        if line:
            yield line


def _parse_off(text: str, specimen_id: str) -> TriMesh:
    lines = _tokens(text.splitlines())
    try:
        head = next(lines)
    except StopIteration:
        raise MeshParseError("empty OFF file") from None
    if not head.startswith("OFF"):
        raise MeshParseError("missing OFF header")
    rest = head[3:].split()
    try:
        counts = rest if rest else next(lines).split()
        nv, nf = int(counts[0]), int(counts[1])
        verts = np.array([next(lines).split()[:3] for _ in range(nv)], dtype=np.float64).reshape(nv, 3)
        faces = []
        for _ in range(nf):
            parts = next(lines).split()
            k = int(parts[0])
            if k != 3:
                raise MeshParseError(f"non-triangular face with {k} vertices")
            faces.append([int(p) for p in parts[1:4]])
    except MeshParseError:
        raise
    except (StopIteration, ValueError, IndexError) as exc:
        raise MeshParseError(f"malformed OFF: {exc}") from exc
    faces_arr = np.array(faces, dtype=np.int64).reshape(nf, 3)
    if nf and (faces_arr.min() < 0 or faces_arr.max() >= nv):
        raise MeshParseError("face index out of range")
    return TriMesh(verts, faces_arr, specimen_id)


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _parse_ply(data: bytes, specimen_id: str) -> TriMesh:
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise MeshParseError("missing PLY header")
    nl = data.find(b"\n", end)
    header = data[:end].decode("ascii", errors="replace").splitlines()
    body = data[nl + 1:] if nl >= 0 else b""
    fmt = None
    elements: list[tuple[str, int, list]] = []
    for line in header[1:]:
        parts = line.split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise MeshParseError("property before element")
            if parts[1] == "list":
                elements[-1][2].append((parts[4], "list", parts[2], parts[3]))
            else:
                elements[-1][2].append((parts[2], parts[1]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise MeshParseError(f"unsupported PLY format {fmt!r}")
    try:
        if fmt == "ascii":
            return _ply_ascii(body.decode("ascii"), elements, specimen_id)
        return _ply_binary(body, elements, specimen_id)
    except MeshParseError:
        raise
    except (ValueError, IndexError, KeyError, struct.error) as exc:
        raise MeshParseError(f"malformed PLY: {exc}") from exc


def _xyz_indices(props) -> list[int]:
    names = [p[0] for p in props]
    return [names.index(c) for c in "xyz"]


def _ply_ascii(text: str, elements, specimen_id: str) -> TriMesh:
    lines = iter(_tokens(text.splitlines()))
    verts = faces = None
    for name, count, props in elements:
        rows = [next(lines).split() for _ in range(count)]
        if name == "vertex":
            ix = _xyz_indices(props)
            verts = np.array([[float(r[i]) for i in ix] for r in rows], dtype=np.float64).reshape(count, 3)
        elif name == "face":
            faces = []
            for r in rows:
                k = int(r[0])
                if k != 3:
                    raise MeshParseError(f"non-triangular face with {k} vertices")
                faces.append([int(x) for x in r[1:4]])
            faces = np.array(faces, dtype=np.int64).reshape(count, 3)
    if verts is None or faces is None:
        raise MeshParseError("PLY needs vertex and face elements")
    return TriMesh(verts, faces, specimen_id)


def _ply_binary(body: bytes, elements, specimen_id: str) -> TriMesh:
    offset = 0
    verts = faces = None
    for name, count, props in elements:
        if all(p[1] != "list" for p in props):
            dt = np.dtype([(p[0], "<" + _PLY_TYPES[p[1]]) for p in props])
            arr = np.frombuffer(body, dtype=dt, count=count, offset=offset)
            offset += dt.itemsize * count
            if name == "vertex":
                verts = np.stack([arr[c].astype(np.float64) for c in "xyz"], axis=1)
            continue
        if name != "face" or len(props) != 1:
            raise MeshParseError(f"unsupported list layout in element {name!r}")
        _, _, ctype, itype = props[0]
        ct, it = np.dtype("<" + _PLY_TYPES[ctype]), np.dtype("<" + _PLY_TYPES[itype])
        dt = np.dtype([("n", ct), ("idx", it, (3,))])
        arr = np.frombuffer(body, dtype=dt, count=count, offset=offset)
        if np.any(arr["n"] != 3):
            raise MeshParseError("non-triangular face in binary PLY")
        offset += dt.itemsize * count
        faces = arr["idx"].astype(np.int64)
    if verts is None or faces is None:
        raise MeshParseError("PLY needs vertex and face elements")
    return TriMesh(verts, faces, specimen_id)


def load_mesh(source, format: str | None = None, specimen_id: str | None = None, validate: bool = True) -> TriMesh:
    """Read an OFF or PLY mesh from a path or binary stream.

    Parameters
    ----------
    source : str, os.PathLike or binary file object
    format : {"OFF", "PLY"}, optional
        Inferred from the file suffix or header when omitted.
    specimen_id : str, optional
        Defaults to the file stem.
    validate : bool
        Run :func:`check_disk_mesh` on the result.
    """
    if isinstance(source, (str, os.PathLike)):
        path = os.fspath(source)
        with open(path, "rb") as fh:
            data = fh.read()
        if specimen_id is None:
            specimen_id = os.path.splitext(os.path.basename(path))[0]
    else:
        data = source.read()
    if specimen_id is None:
        specimen_id = ""
    if format is None:
        format = "PLY" if data[:3] == b"ply" else "OFF"
    format = format.upper()
    if format == "OFF":
        try:
            text = data.decode("ascii")
        except UnicodeDecodeError as exc:
            raise MeshParseError("OFF file is not ASCII") from exc
        mesh = _parse_off(text, specimen_id)
    elif format == "PLY":
        mesh = _parse_ply(data, specimen_id)
    else:
        raise MeshParseError(f"unknown mesh format {format!r}")
    return check_disk_mesh(mesh) if validate else mesh


def save_mesh(mesh: TriMesh, target, format: str = "OFF", binary: bool = False) -> None:
    """Write ``mesh`` as OFF or PLY; ASCII floats use 17 significant digits."""
    format = format.upper()
    if format == "OFF":
        buf = io.StringIO()
        buf.write("OFF\n%d %d 0\n" % (mesh.n_vertices, mesh.n_faces))
        for x, y, z in mesh.vertices.tolist():
            buf.write("%.17g %.17g %.17g\n" % (x, y, z))
        for a, b, c in mesh.faces.tolist():
            buf.write("3 %d %d %d\n" % (a, b, c))
        data = buf.getvalue().encode("ascii")
    elif format == "PLY":
        head = (
            "ply\nformat %s 1.0\nelement vertex %d\nproperty double x\nproperty double y\nproperty double z\n"
            "element face %d\nproperty list uchar int vertex_indices\nend_header\n"
            % ("binary_little_endian" if binary else "ascii", mesh.n_vertices, mesh.n_faces)
        )
        if binary:
            fdt = np.dtype([("n", "u1"), ("idx", "<i4", (3,))])
            fa = np.empty(mesh.n_faces, dtype=fdt)
            fa["n"] = 3
            fa["idx"] = mesh.faces
            data = head.encode("ascii") + mesh.vertices.astype("<f8").tobytes() + fa.tobytes()
        else:
            lines = ["%.17g %.17g %.17g" % tuple(r) for r in mesh.vertices.tolist()]
            lines += ["3 %d %d %d" % tuple(r) for r in mesh.faces.tolist()]
            data = (head + "\n".join(lines) + "\n").encode("ascii")
    else:
        raise MeshParseError(f"unknown mesh format {format!r}")
    if isinstance(target, (str, os.PathLike)):
        with open(target, "wb") as fh:
            fh.write(data)
    else:
        target.write(data)


# ---------------------------------------------------------------- measures


def vertex_areas(mesh: TriMesh) -> np.ndarray:
    """Barycentric-lumped vertex areas: each face gives a third of its area to each corner."""
    return np.bincount(mesh.faces.ravel(), weights=np.repeat(mesh.face_areas / 3.0, 3), minlength=mesh.n_vertices)


def normalize_mesh(mesh: TriMesh) -> TriMesh:
    """Center at the area-weighted centroid and scale to unit surface area."""
    w = vertex_areas(mesh)
    total = w.sum()
    if not total > 0:
        raise DegenerateFaceError("cannot normalize a zero-area mesh")
    centroid = w @ mesh.vertices / total
    v = (mesh.vertices - centroid) / np.sqrt(total)
    return TriMesh(v, mesh.faces, mesh.specimen_id)


# --------------------------------------------------------------- landmarks


@dataclass(frozen=True, eq=False)
class LandmarkSet:
    """Landmarks stored intrinsically as (face, barycentric) on a mesh."""

    labels: tuple[str, ...]
    faces: np.ndarray
    barycentric: np.ndarray

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1)
        b = np.asarray(self.barycentric, dtype=np.float64).reshape(-1, 3)
        if not (len(labels) == len(f) == len(b)):
            raise ValueError("labels, faces and barycentric must have equal length")
        if len(set(labels)) != len(labels):
            raise ValueError("landmark labels must be unique")
        if np.any(b < -1e-12) or np.any(np.abs(b.sum(1) - 1.0) > 1e-12):
            raise ValueError("barycentric coordinates must be nonnegative and sum to 1")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "faces", _readonly(f))
        object.__setattr__(self, "barycentric", _readonly(b))

    def __len__(self):
        return len(self.labels)

    def check(self, mesh: TriMesh) -> "LandmarkSet":
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= mesh.n_faces):
            raise IndexError("landmark face index out of range for mesh")
        return self

    def subset(self, labels: Sequence[str]) -> "LandmarkSet":
        pos = {lab: i for i, lab in enumerate(self.labels)}
        idx = [pos[lab] for lab in labels]
        return LandmarkSet(tuple(labels), self.faces[idx], self.barycentric[idx])


def landmark_to_point(mesh: TriMesh, face: int, barycentric) -> np.ndarray:
    if not 0 <= face < mesh.n_faces:
        raise IndexError(f"face index {face} out of range")
    b = np.asarray(barycentric, dtype=np.float64)
    return b @ mesh.vertices[mesh.faces[face]]


def landmark_positions(mesh: TriMesh, landmarks: LandmarkSet) -> np.ndarray:
    landmarks.check(mesh)
    corners = mesh.vertices[mesh.faces[landmarks.faces]]
    return np.einsum("nk,nkd->nd", landmarks.barycentric, corners)


def closest_point_barycentric(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of the closest point to ``p`` on each triangle (a, b, c).

    Vectorised over the leading axis of ``a``, ``b``, ``c``; region tests
    follow the Voronoi-region classification of a triangle.
    """
    ab, ac = b - a, c - a
    ap, bp, cp = p - a, p - b, p - c
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    n = len(a)
    out = np.empty((n, 3))
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = np.where(denom != 0, vb / denom, 1 / 3)
        w = np.where(denom != 0, vc / denom, 1 / 3)
        out[:] = np.stack([1 - v - w, v, w], axis=1)
        # edges and vertices, applied in reverse priority so earlier regions win
        m = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        out[m] = np.stack([np.zeros(m.sum()), 1 - t[m], t[m]], axis=1)
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        t = d2 / (d2 - d6)
        out[m] = np.stack([1 - t[m], np.zeros(m.sum()), t[m]], axis=1)
        m = (d6 >= 0) & (d5 <= d6)
        out[m] = (0.0, 0.0, 1.0)
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        t = d1 / (d1 - d3)
        out[m] = np.stack([1 - t[m], t[m], np.zeros(m.sum())], axis=1)
        m = (d3 >= 0) & (d4 <= d3)
        out[m] = (0.0, 1.0, 0.0)
        m = (d1 <= 0) & (d2 <= 0)
        out[m] = (1.0, 0.0, 0.0)
    out = np.clip(out, 0.0, 1.0)
    return out / out.sum(1, keepdims=True)


class SurfaceLocator:
    """Nearest-point queries on a mesh surface.

    Candidate faces come from a KD-tree over face centroids; the search
    radius grows until the best candidate is provably closest.
    """

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        v, f = mesh.vertices, mesh.faces
        self._a, self._b, self._c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
        cent = (self._a + self._b + self._c) / 3.0
        self._tree = cKDTree(cent)
        # max distance from a centroid to its own corners
        self._reach = np.max(
            np.linalg.norm(np.stack([self._a, self._b, self._c]) - cent[None], axis=2)
        )

    def closest(self, point) -> tuple[int, np.ndarray, float]:
        """Return (face, barycentric, distance) of the closest surface point."""
        p = np.asarray(point, dtype=np.float64)
        k = min(16, self.mesh.n_faces)
        while True:
            _, idx = self._tree.query(p, k=k)
            idx = np.atleast_1d(idx)
            bary = closest_point_barycentric(p, self._a[idx], self._b[idx], self._c[idx])
            q = bary[:, :1] * self._a[idx] + bary[:, 1:2] * self._b[idx] + bary[:, 2:] * self._c[idx]
            dist = np.linalg.norm(q - p, axis=1)
            best = int(np.lexsort((idx, dist))[0])
            far = np.linalg.norm((self._a[idx[-1]] + self._b[idx[-1]] + self._c[idx[-1]]) / 3 - p)
            # any unseen face has centroid beyond `far`, so its points are beyond far - reach
            if k >= self.mesh.n_faces or far - self._reach >= dist[best]:
                return int(idx[best]), bary[best], float(dist[best])
            k = min(4 * k, self.mesh.n_faces)

    def snap(self, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        faces = np.empty(len(pts), dtype=np.int64)
        bary = np.empty((len(pts), 3))
        dist = np.empty(len(pts))
        for i, p in enumerate(pts):
            faces[i], bary[i], dist[i] = self.closest(p)
        return faces, bary, dist


def snap_points(mesh: TriMesh, labels: Sequence[str], points) -> LandmarkSet:
    """Snap raw 3D points to their nearest surface points."""
    faces, bary, _ = SurfaceLocator(mesh).snap(points)
    return LandmarkSet(tuple(labels), faces, bary)


def read_landmarks(path, mesh: TriMesh | None = None) -> LandmarkSet:
    """Read a landmark CSV in ``label,face,b0,b1,b2`` or ``label,x,y,z`` form.

    The second form needs ``mesh`` to snap points to the surface.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty landmark file")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    if header == ["label", "face", "b0", "b1", "b2"]:
        labels = [r[0] for r in body]
        faces = [int(r[1]) for r in body]
        bary = np.array([[float(x) for x in r[2:5]] for r in body]).reshape(-1, 3)
        lm = LandmarkSet(tuple(labels), faces, bary)
        return lm.check(mesh) if mesh is not None else lm
    if header == ["label", "x", "y", "z"]:
        if mesh is None:
            raise ValueError("point landmarks need a mesh to snap to")
        labels = [r[0] for r in body]
        pts = np.array([[float(x) for x in r[1:4]] for r in body]).reshape(-1, 3)
        return snap_points(mesh, labels, pts)
    raise ValueError(f"{path}: unrecognised landmark header {header}")


def write_landmarks(landmarks: LandmarkSet, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "face", "b0", "b1", "b2"])
        for lab, f, b in zip(landmarks.labels, landmarks.faces.tolist(), landmarks.barycentric.tolist()):
            w.writerow([lab, f] + ["%.17g" % x for x in b])


# ---------------------------------------------------------------- geodesics


STEINER_POINTS = 4


@lru_cache(maxsize=8)
def _steiner_layout(mesh: TriMesh, k: int):
    """Node positions, face-local node ids and the base edge list of the Steiner graph.

    Every mesh edge carries ``k`` evenly spaced interior points.  Nodes on
    a common face are joined by straight segments, which lie in the face,
    so any path in the graph is a path on the surface.
    """
    n = mesh.n_vertices
    v, f = mesh.vertices, mesh.faces
    E = mesh.edges
    t = np.arange(1, k + 1) / (k + 1)
    pos = [v]
    if k:
        pos.append((v[E[:, 0], None] + t[None, :, None] * (v[E[:, 1]] - v[E[:, 0]])[:, None]).reshape(-1, 3))
    pos = np.concatenate(pos)
    # edge id of each face side (f0 f1), (f1 f2), (f2 f0)
    key = E[:, 0] * n + E[:, 1]
    local = [f]
    for a, b in ((0, 1), (1, 2), (2, 0)):
        lo, hi = np.minimum(f[:, a], f[:, b]), np.maximum(f[:, a], f[:, b])
        eid = np.searchsorted(key, lo * n + hi)
        ids = n + eid[:, None] * k + np.arange(k)[None, :]
        # order the side's points from f[a] to f[b]
        local.append(np.where((f[:, a] < f[:, b])[:, None], ids, ids[:, ::-1]))
    local = np.concatenate(local, axis=1)
    # local nodes on a common side are joined along the edge chain instead
    member = [{0, 2}, {0, 1}, {1, 2}] + [{s} for s in range(3) for _ in range(k)]
    L = len(member)
    pairs = [(p, q) for p in range(L) for q in range(p + 1, L) if not member[p] & member[q]]
    ii, jj = np.array(pairs, dtype=np.int64).reshape(-1, 2).T
    rows = [local[:, ii].ravel()]
    cols = [local[:, jj].ravel()]
    chain = np.concatenate([E[:, :1], n + np.arange(len(E) * k).reshape(len(E), k), E[:, 1:]], axis=1)
    rows.append(chain[:, :-1].ravel())
    cols.append(chain[:, 1:].ravel())
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    w = np.linalg.norm(pos[rows] - pos[cols], axis=1)
    return pos, local, rows, cols, w


def steiner_graph(mesh: TriMesh, anchors: Sequence[tuple[int, np.ndarray]] = (), k: int = STEINER_POINTS):
    """Symmetric surface graph with ``k`` Steiner points per edge and optional anchor nodes.

    Anchor ``m`` (a ``(face, barycentric)`` pair) becomes node ``N + m``
    where ``N`` is the number of vertex and Steiner nodes.  Returns the
    CSR graph and ``N``.
    """
    pos, local, rows, cols, w = _steiner_layout(mesh, int(k))
    N = len(pos)
    rows, cols, w = [rows], [cols], [w]
    for m, (face, bary) in enumerate(anchors):
        p = landmark_to_point(mesh, face, bary)
        nodes = local[face]
        d = np.linalg.norm(pos[nodes] - p, axis=1)
        rows.append(np.full(len(nodes), N + m))
        cols.append(nodes)
        # zero weights would be dropped as missing edges
        w.append(np.maximum(d, 1e-300))
    rows, cols, w = np.concatenate(rows), np.concatenate(cols), np.concatenate(w)
    size = N + len(anchors)
    # sides shared by two faces list some pairs twice; keep one copy
    lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
    _, first = np.unique(lo * size + hi, return_index=True)
    lo, hi, w = lo[first], hi[first], w[first]
    g = sparse.coo_matrix((np.concatenate([w, w]), (np.concatenate([lo, hi]), np.concatenate([hi, lo]))),
                          shape=(size, size))
    return g.tocsr(), N


def surface_distance(
    mesh: TriMesh, a: tuple[int, np.ndarray], b: tuple[int, np.ndarray], k: int = STEINER_POINTS
) -> float:
    """Approximate geodesic distance between two surface points.

    Shortest path through a Steiner graph with ``k`` points per edge; it
    bounds the true geodesic from above and converges to it as ``k``
    grows.  Points on a common face use the straight segment, which is
    exact there.
    """
    pa = landmark_to_point(mesh, a[0], a[1])
    pb = landmark_to_point(mesh, b[0], b[1])
    direct = float(np.linalg.norm(pa - pb)) if a[0] == b[0] else np.inf
    g, N = steiner_graph(mesh, [a, b], k)
    d = csgraph.dijkstra(g, directed=False, indices=N)
    return float(min(direct, d[N + 1]))


def geodesic_diameter(mesh: TriMesh, k: int = STEINER_POINTS) -> float:
    """Largest Steiner-graph distance from a boundary vertex to any vertex.

    For the disk-type shapes handled here the farthest pair of points lies
    on the boundary, so this is the surface diameter up to the graph error.
    """
    g, N = steiner_graph(mesh, (), k)
    D = csgraph.dijkstra(g, directed=False, indices=mesh.boundary_vertices)
    return float(D[:, : mesh.n_vertices].max())


def edge_graph_distances(mesh: TriMesh, sources) -> np.ndarray:
    """Dijkstra distances on the edge graph from each vertex in ``sources``."""
    return csgraph.dijkstra(mesh.adjacency, directed=False, indices=np.atleast_1d(sources))
