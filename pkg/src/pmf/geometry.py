"""Triangle meshes: loading, validation, writing and basic measurements.

Only ASCII OFF and ASCII PLY are supported. Vertex order is preserved
exactly as in the file, since correspondences refer to it by 0-based index.
"""

from __future__ import annotations

import logging
import os
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

logger = logging.getLogger(__name__)


class MeshParseError(ValueError):
    """Malformed mesh file (header, counts, tokens)."""


class MeshValidationError(ValueError):
    """Mesh parses but violates a structural invariant."""


class TriMesh:
    """Immutable triangle mesh.

    Parameters
    ----------
    vertices : array_like, shape (n, 3)
        Vertex positions.
    faces : array_like, shape (f, 3)
        Vertex-index triples, 0-based.
    validate : bool
        Check index range, degenerate faces, zero-length edges and
        connectivity of the edge graph.

    Notes
    -----
    Boundaries are allowed; only connectivity is required, because the
    geodesic metric must be finite between every pair of vertices.
    """

    def __init__(self, vertices, faces, validate=True):
        v = np.array(vertices, dtype=np.float64)
        f = np.array(faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshValidationError(f"vertices must have shape (n, 3), got {v.shape}")
        if f.size == 0:
            f = f.reshape(0, 3)
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshValidationError(f"faces must have shape (f, 3), got {f.shape}")
        v.flags.writeable = False
        f.flags.writeable = False
        self._v = v
        self._f = f
        if validate:
            self._validate()

    @property
    def vertices(self) -> np.ndarray:
        return self._v

    @property
    def faces(self) -> np.ndarray:
        return self._f

    @property
    def n_vertices(self) -> int:
        return self._v.shape[0]

    @property
    def n_faces(self) -> int:
        return self._f.shape[0]

    def __len__(self):
        return self.n_vertices

    def __repr__(self):
        return f"TriMesh(n_vertices={self.n_vertices}, n_faces={self.n_faces})"

    def _validate(self):
        n = self.n_vertices
        if n == 0:
            raise MeshValidationError("mesh has no vertices")
        f = self._f
        bad = np.flatnonzero(((f < 0) | (f >= n)).any(axis=1))
        if bad.size:
            i = int(bad[0])
            raise MeshValidationError(
                f"face {i} references vertex out of range [0, {n}): {f[i].tolist()}"
            )
        rep = np.flatnonzero((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2]))
        if rep.size:
            i = int(rep[0])
            raise MeshValidationError(f"face {i} has a repeated vertex: {f[i].tolist()}")
        zero = np.flatnonzero(self.edge_lengths <= 0.0)
        if zero.size:
            a, b = self.edges[zero[0]]
            raise MeshValidationError(f"zero-length edge between vertices {a} and {b}")
        if n > 1:
            ncomp, labels = connected_components(self.adjacency, directed=False)
            if ncomp > 1:
                lonely = int(np.flatnonzero(labels != labels[0])[0])
                raise MeshValidationError(
                    f"edge graph is disconnected ({ncomp} components); "
                    f"vertex {lonely} is not reachable from vertex 0"
                )

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted index pairs, shape (e, 2)."""
        f = self._f
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e = np.unique(np.sort(e, axis=1), axis=0)
        e.flags.writeable = False
        return e

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e = self.edges
        out = np.linalg.norm(self._v[e[:, 0]] - self._v[e[:, 1]], axis=1)
        out.flags.writeable = False
        return out

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric edge graph weighted by Euclidean edge length."""
        n = self.n_vertices
        e = self.edges
        w = self.edge_lengths
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return sparse.csr_matrix((np.concatenate([w, w]), (rows, cols)), shape=(n, n))

    def face_areas(self) -> np.ndarray:
        v = self._v
        f = self._f
        cr = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        return 0.5 * np.linalg.norm(cr, axis=1)


def mesh_area(mesh: TriMesh) -> float:
    """Total surface area as the sum of triangle areas."""
    area = float(mesh.face_areas().sum())
    if not area > 0.0:
        raise MeshValidationError("mesh has zero total area")
    return area


def shape_diameter(space, sample_count: int = 64, seed: int = 0) -> float:
    """Largest pairwise distance within a farthest-point sample.

    This is a lower bound on the true diameter and is only meant for
    normalizing errors. It is non-decreasing in `sample_count` because
    farthest-point samples are nested.
    """
    from .sampling import farthest_point_order

    if sample_count < 2:
        raise ValueError("sample_count must be >= 2")
    k = min(int(sample_count), space.n)
    if k < 2:
        raise ValueError("space needs at least 2 points to have a diameter")
    order, _ = farthest_point_order(space, k, seed=seed)
    cols = space.distance_columns(order, cache=False)
    return float(cols[:, order].max())


# ----------------------------------------------------------------------------
# I/O


def _tokens(path):
    """Yield (line_number, tokens) skipping blanks and '#' comments."""
    with open(path, "r", encoding="ascii", errors="strict") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.split("#", 1)[0].strip()
            if s:
                yield lineno, s.split()


def _infer_format(path, fmt):
    if fmt is not None:
        fmt = fmt.lower()
        if fmt in ("ply-ascii", "ply"):
            return "ply"
        if fmt == "off":
            return "off"
        raise ValueError(f"unsupported mesh format {fmt!r}; expected OFF or PLY-ascii")
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".off":
        return "off"
    if ext == ".ply":
        return "ply"
    raise ValueError(f"cannot infer mesh format from extension {ext!r}; use .off or .ply")


def load_mesh(path, format=None, validate=True) -> TriMesh:
    """Read an ASCII OFF or ASCII PLY triangle mesh."""
    fmt = _infer_format(path, format)
    if fmt == "off":
        v, f, lines = _read_off(path)
    else:
        v, f, lines = _read_ply(path)
    try:
        return TriMesh(v, f, validate=validate)
    except MeshValidationError as exc:
        msg = str(exc)
        if msg.startswith("face ") and lines:
            i = int(msg.split()[1])
            msg = f"{path}:{lines[i]}: {msg}"
        else:
            msg = f"{path}: {msg}"
        raise MeshValidationError(msg) from None


def _read_off(path):
    it = _tokens(path)
    try:
        lineno, tok = next(it)
    except StopIteration:
        raise MeshParseError(f"{path}: empty file") from None
    head = tok[0]
    if not head.endswith("OFF"):
        raise MeshParseError(f"{path}:{lineno}: expected 'OFF' header, got {head!r}")
    if head != "OFF":
        raise MeshParseError(f"{path}:{lineno}: unsupported OFF variant {head!r}")
    rest = tok[1:]
    if not rest:
        try:
            lineno, rest = next(it)
        except StopIteration:
            raise MeshParseError(f"{path}: missing counts line") from None
    try:
        nv, nf = int(rest[0]), int(rest[1])
    except (ValueError, IndexError):
        raise MeshParseError(f"{path}:{lineno}: malformed counts line {' '.join(rest)!r}") from None
    if nv < 0 or nf < 0:
        raise MeshParseError(f"{path}:{lineno}: negative counts")
    verts = np.empty((nv, 3))
    for i in range(nv):
        try:
            lineno, tok = next(it)
        except StopIteration:
            raise MeshParseError(f"{path}: expected {nv} vertices, file ended after {i}") from None
        if len(tok) < 3:
            raise MeshParseError(f"{path}:{lineno}: vertex line needs 3 coordinates")
        try:
            verts[i] = [float(t) for t in tok[:3]]
        except ValueError:
            raise MeshParseError(f"{path}:{lineno}: bad vertex line {' '.join(tok)!r}") from None
    faces = np.empty((nf, 3), dtype=np.int64)
    lines = []
    for i in range(nf):
        try:
            lineno, tok = next(it)
        except StopIteration:
            raise MeshParseError(f"{path}: expected {nf} faces, file ended after {i}") from None
        try:
            k = int(tok[0])
            idx = [int(t) for t in tok[1 : 1 + k]]
        except (ValueError, IndexError):
            raise MeshParseError(f"{path}:{lineno}: bad face line {' '.join(tok)!r}") from None
        if k != 3 or len(idx) != 3:
            raise MeshParseError(f"{path}:{lineno}: face {i} is not a triangle ({k} vertices)")
        faces[i] = idx
        lines.append(lineno)
    return verts, faces, lines


_PLY_SCALARS = {
    "char", "uchar", "short", "ushort", "int", "uint", "float", "double",
    "int8", "uint8", "int16", "uint16", "int32", "uint32", "float32", "float64",
}


def _read_ply(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError:
        raise MeshParseError(f"{path}: binary PLY is not supported; convert to ASCII") from None
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MeshParseError(f"{path}:1: missing 'ply' magic")
    elements = []  # [name, count, [(kind, name, ...)]]
    ln = 1
    fmt_seen = False
    while True:
        if ln >= len(lines):
            raise MeshParseError(f"{path}: header not terminated by end_header")
        tok = lines[ln].split()
        ln += 1
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] != "ascii":
                raise MeshParseError(f"{path}:{ln}: binary PLY is not supported; convert to ASCII")
            fmt_seen = True
        elif tok[0] == "element":
            try:
                elements.append([tok[1], int(tok[2]), []])
            except (IndexError, ValueError):
                raise MeshParseError(f"{path}:{ln}: malformed element line") from None
        elif tok[0] == "property":
            if not elements:
                raise MeshParseError(f"{path}:{ln}: property before any element")
            if len(tok) >= 5 and tok[1] == "list":
                elements[-1][2].append(("list", tok[4]))
            elif len(tok) >= 3 and tok[1] in _PLY_SCALARS:
                elements[-1][2].append(("scalar", tok[2]))
            else:
                raise MeshParseError(f"{path}:{ln}: malformed property line")
        elif tok[0] == "end_header":
            break
        else:
            raise MeshParseError(f"{path}:{ln}: unexpected header line {lines[ln - 1]!r}")
    if not fmt_seen:
        raise MeshParseError(f"{path}: missing format line")

    verts = None
    faces = None
    face_lines = []
    for name, count, props in elements:
        rows = []
        for _ in range(count):
            while ln < len(lines) and not lines[ln].strip():
                ln += 1
            if ln >= len(lines):
                raise MeshParseError(f"{path}: element {name!r} expects {count} rows, file ended")
            tok = lines[ln].split()
            ln += 1
            rows.append((ln, tok))
        if name == "vertex":
            pos = {}
            for j, (kind, pname) in enumerate(props):
                if kind == "scalar" and pname in ("x", "y", "z"):
                    pos[pname] = j
            if set(pos) != {"x", "y", "z"}:
                raise MeshParseError(f"{path}: vertex element lacks x/y/z properties")
            verts = np.empty((count, 3))
            for i, (lno, tok) in enumerate(rows):
                vals = _split_row(path, lno, tok, props)
                try:
                    verts[i] = [float(vals[pos[c]]) for c in "xyz"]
                except ValueError:
                    raise MeshParseError(f"{path}:{lno}: bad vertex row") from None
        elif name == "face":
            j_idx = None
            for j, (kind, pname) in enumerate(props):
                if kind == "list" and pname in ("vertex_indices", "vertex_index"):
                    j_idx = j
            if j_idx is None:
                raise MeshParseError(f"{path}: face element lacks vertex_indices list")
            faces = np.empty((count, 3), dtype=np.int64)
            for i, (lno, tok) in enumerate(rows):
                vals = _split_row(path, lno, tok, props)
                idx = vals[j_idx]
                if len(idx) != 3:
                    raise MeshParseError(f"{path}:{lno}: face {i} is not a triangle ({len(idx)} vertices)")
                try:
                    faces[i] = [int(t) for t in idx]
                except ValueError:
                    raise MeshParseError(f"{path}:{lno}: bad face row") from None
                face_lines.append(lno)
    if verts is None:
        raise MeshParseError(f"{path}: no vertex element")
    if faces is None:
        faces = np.empty((0, 3), dtype=np.int64)
    return verts, faces, face_lines


def _split_row(path, lno, tok, props):
    """Split a PLY data row into one entry per property (lists as sublists)."""
    out = []
    pos = 0
    try:
        for kind, _ in props:
            if kind == "list":
                k = int(tok[pos])
                out.append(tok[pos + 1 : pos + 1 + k])
                if len(out[-1]) != k:
                    raise IndexError
                pos += 1 + k
            else:
                out.append(tok[pos])
                pos += 1
    except (IndexError, ValueError):
        raise MeshParseError(f"{path}:{lno}: row does not match header properties") from None
    return out


def _fmt(x: float) -> str:
    return repr(float(x))


def write_mesh(mesh: TriMesh, path, format=None, colors=None) -> None:
    """Write `mesh` as ASCII OFF or ASCII PLY.

    Coordinates are written with ``repr`` so that reloading reproduces
    them bit-identically. `colors` (n x 3, uint8) is only valid for PLY.
    """
    fmt = _infer_format(path, format)
    v = mesh.vertices
    f = mesh.faces
    if colors is not None:
        colors = np.asarray(colors)
        if fmt != "ply":
            raise ValueError("per-vertex colors require PLY output")
        if colors.shape != (mesh.n_vertices, 3):
            raise ValueError(f"colors must have shape ({mesh.n_vertices}, 3)")
        if colors.min() < 0 or colors.max() > 255:
            raise ValueError("colors must lie in [0, 255]")
        colors = colors.astype(np.int64)
    out = []
    if fmt == "off":
        out.append("OFF")
        out.append(f"{mesh.n_vertices} {mesh.n_faces} {mesh.n_edges}")
        for p in v:
            out.append(" ".join(_fmt(c) for c in p))
        for t in f:
            out.append(f"3 {t[0]} {t[1]} {t[2]}")
    else:
        out += [
            "ply",
            "format ascii 1.0",
            f"element vertex {mesh.n_vertices}",
            "property double x",
            "property double y",
            "property double z",
        ]
        if colors is not None:
            out += ["property uchar red", "property uchar green", "property uchar blue"]
        out += [
            f"element face {mesh.n_faces}",
            "property list uchar int vertex_indices",
            "end_header",
        ]
        for i, p in enumerate(v):
            row = " ".join(_fmt(c) for c in p)
            if colors is not None:
                c = colors[i]
                row += f" {c[0]} {c[1]} {c[2]}"
            out.append(row)
        for t in f:
            out.append(f"3 {t[0]} {t[1]} {t[2]}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(out))
        fh.write("\n")


def read_ply_colors(path) -> np.ndarray:
    """Per-vertex red/green/blue of an ASCII PLY as an (n, 3) int array."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    props = []
    count = None
    in_vertex = False
    ln = 0
    while lines[ln].strip() != "end_header":
        tok = lines[ln].split()
        if tok and tok[0] == "element":
            in_vertex = tok[1] == "vertex"
            if in_vertex:
                count = int(tok[2])
        elif tok and tok[0] == "property" and in_vertex:
            props.append(tok[-1])
        ln += 1
    ln += 1
    cols = [props.index(c) for c in ("red", "green", "blue")]
    out = np.empty((count, 3), dtype=np.int64)
    for i in range(count):
        tok = lines[ln + i].split()
        out[i] = [int(tok[c]) for c in cols]
    return out
