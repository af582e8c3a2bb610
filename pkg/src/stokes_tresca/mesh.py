"""Triangular meshes with Dirichlet / friction boundary tags."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MeshError, MshParseError

DIRICHLET = 1
FRICTION = 2
TAG_NAMES = {DIRICHLET: "dirichlet", FRICTION: "friction"}
SIDES = ("bottom", "right", "top", "left")


def _signed_areas(vertices, triangles):
    p0, p1, p2 = (vertices[triangles[:, i]] for i in range(3))
    e1, e2 = p1 - p0, p2 - p0
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation of a 2D domain.

    ``facets`` holds the boundary edges as vertex pairs and ``facet_tags``
    marks each one DIRICHLET or FRICTION. The constructor checks every
    structural invariant and raises :class:`MeshError` on the first one
    that fails.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    element_areas: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=float)
        triangles = np.ascontiguousarray(self.triangles, dtype=np.int64)
        facets = np.ascontiguousarray(self.facets, dtype=np.int64).reshape(-1, 2)
        tags = np.ascontiguousarray(self.facet_tags, dtype=np.int64).reshape(-1)
        for arr in (vertices, triangles, facets, tags):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)
        object.__setattr__(self, "facets", facets)
        object.__setattr__(self, "facet_tags", tags)
        self._validate()
        areas = _signed_areas(vertices, triangles)
        areas.setflags(write=False)
        object.__setattr__(self, "element_areas", areas)

    def _validate(self):
        v, t, f, tags = self.vertices, self.triangles, self.facets, self.facet_tags
        if v.ndim != 2 or v.shape[1] != 2:
            raise MeshError("vertices must have shape (n, 2)")
        if t.ndim != 2 or t.shape[1] != 3 or len(t) == 0:
            raise MeshError("triangles must have shape (m, 3) with m >= 1")
        if t.min() < 0 or t.max() >= len(v):
            raise MeshError("triangle references a vertex index out of range")
        if len(tags) != len(f):
            raise MeshError("facet_tags must have one entry per facet")
        bad_tag = set(np.unique(tags)) - {DIRICHLET, FRICTION}
        if bad_tag:
            raise MeshError(f"unknown boundary tag(s) {sorted(bad_tag)}")

        areas = _signed_areas(v, t)
        if np.any(areas <= 0):
            k = int(np.argmax(areas <= 0))
            raise MeshError(f"triangle {k} has non-positive signed area {areas[k]:.3e}")

        used = np.zeros(len(v), dtype=bool)
        used[t.ravel()] = True
        if not used.all():
            raise MeshError(f"dangling vertex {int(np.argmin(used))} is not in any triangle")

        edge_count = Counter(map(tuple, np.sort(t[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1).tolist()))
        if max(edge_count.values()) > 2:
            raise MeshError("non-manifold edge shared by more than two triangles")
        boundary = {e for e, c in edge_count.items() if c == 1}
        tagged = [tuple(e) for e in np.sort(f, axis=1).tolist()]
        if len(set(tagged)) != len(tagged):
            raise MeshError("boundary facet listed more than once")
        for e in tagged:
            if e not in boundary:
                raise MeshError(f"facet {e} is not a boundary edge of exactly one triangle")
        missing = boundary - set(tagged)
        if missing:
            raise MeshError(f"boundary edge {sorted(missing)[0]} carries no tag")

        lengths = np.linalg.norm(v[f[:, 1]] - v[f[:, 0]], axis=1)
        if lengths[tags == DIRICHLET].sum() <= 0:
            raise MeshError("the Dirichlet boundary must have positive length")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def area(self):
        return float(self.element_areas.sum())

    @property
    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def facet_lengths(self):
        f = self.facets
        return np.linalg.norm(self.vertices[f[:, 1]] - self.vertices[f[:, 0]], axis=1)

    @property
    def boundary_length(self):
        return float(self.facet_lengths.sum())

    def facets_with(self, tag):
        return self.facets[self.facet_tags == tag]

    @property
    def dirichlet_nodes(self):
        """Vertices touching a Dirichlet facet (mixed corners included)."""
        return np.unique(self.facets_with(DIRICHLET))

    @property
    def friction_nodes(self):
        """Vertices touching at least one friction facet."""
        return np.unique(self.facets_with(FRICTION))

    def retagged(self, tag):
        """Copy of the mesh with every boundary facet set to ``tag``."""
        return Mesh(self.vertices, self.triangles, self.facets, np.full(len(self.facets), tag))

    def summary(self):
        lengths = self.facet_lengths
        return {
            "vertices": self.n_vertices,
            "triangles": self.n_triangles,
            "area": self.area,
            "dirichlet_facets": int(np.sum(self.facet_tags == DIRICHLET)),
            "friction_facets": int(np.sum(self.facet_tags == FRICTION)),
            "dirichlet_length": float(lengths[self.facet_tags == DIRICHLET].sum()),
            "friction_length": float(lengths[self.facet_tags == FRICTION].sum()),
        }


def _parse_tag(tag):
    if isinstance(tag, str):
        key = tag.strip().lower()
        for value, name in TAG_NAMES.items():
            if key == name:
                return value
        raise ValueError(f"unknown boundary tag {tag!r}")
    if tag in TAG_NAMES:
        return int(tag)
    raise ValueError(f"unknown boundary tag {tag!r}")


def generate_rectangle(nx, ny, width=1.0, height=1.0, tag_rule=None):
    """Structured triangulation of ``[0, width] x [0, height]``.

    Each of the ``nx * ny`` cells is cut along one diagonal, alternating
    direction in a checkerboard pattern. ``tag_rule`` maps side names
    (bottom, right, top, left) to DIRICHLET or FRICTION; unlisted sides
    are Dirichlet.
    """
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be integers >= 1, got nx={nx}, ny={ny}")
    if not (width > 0 and height > 0):
        raise ValueError(f"width and height must be > 0, got {width}, {height}")
    nx, ny = int(nx), int(ny)
    rule = {side: DIRICHLET for side in SIDES}
    for side, tag in (tag_rule or {}).items():
        if side not in rule:
            raise ValueError(f"unknown side {side!r}; expected one of {SIDES}")
        rule[side] = _parse_tag(tag)

    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    triangles = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if (i + j) % 2 == 0:
                triangles += [(a, b, c), (a, c, d)]
            else:
                triangles += [(a, b, d), (b, c, d)]

    facets, tags = [], []
    for i in range(nx):
        facets.append((vid(i, 0), vid(i + 1, 0)))
        tags.append(rule["bottom"])
    for j in range(ny):
        facets.append((vid(nx, j), vid(nx, j + 1)))
        tags.append(rule["right"])
    for i in range(nx, 0, -1):
        facets.append((vid(i, ny), vid(i - 1, ny)))
        tags.append(rule["top"])
    for j in range(ny, 0, -1):
        facets.append((vid(0, j), vid(0, j - 1)))
        tags.append(rule["left"])
    return Mesh(vertices, np.array(triangles), np.array(facets), np.array(tags))


@dataclass(frozen=True)
class BoundaryFrame:
    node: int
    normal: np.ndarray
    tangent: np.ndarray
    weight: float


@dataclass(frozen=True, eq=False)
class BoundaryFrames:
    """Per-node (normal, tangent) frames on the friction boundary.

    Stored as parallel arrays; indexing yields a :class:`BoundaryFrame`.
    ``weight`` is the lumped boundary measure: half the summed length of
    the friction facets incident to the node.
    """

    nodes: np.ndarray
    normals: np.ndarray
    tangents: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.nodes)

    def __getitem__(self, i):
        return BoundaryFrame(int(self.nodes[i]), self.normals[i], self.tangents[i], float(self.weights[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def _outward_facet_normals(mesh, facets):
    # orient each facet as it runs in its (counter-clockwise) triangle
    owner = {}
    for tri in mesh.triangles.tolist():
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            owner[(a, b)] = True
    normals = np.empty((len(facets), 2))
    for k, (a, b) in enumerate(facets.tolist()):
        if (b, a) in owner and (a, b) not in owner:
            a, b = b, a
        t = mesh.vertices[b] - mesh.vertices[a]
        normals[k] = (t[1], -t[0])
    return normals / np.linalg.norm(normals, axis=1, keepdims=True)


def boundary_frames(mesh):
    """Frames for every vertex incident to a friction facet."""
    fr = mesh.facets_with(FRICTION)
    nodes = np.unique(fr)
    if len(nodes) == 0:
        empty = np.zeros((0, 2))
        return BoundaryFrames(nodes.astype(np.int64), empty, empty.copy(), np.zeros(0))
    facet_normals = _outward_facet_normals(mesh, fr)
    lengths = np.linalg.norm(mesh.vertices[fr[:, 1]] - mesh.vertices[fr[:, 0]], axis=1)
    index = {n: i for i, n in enumerate(nodes.tolist())}
    nsum = np.zeros((len(nodes), 2))
    count = np.zeros(len(nodes))
    weights = np.zeros(len(nodes))
    for (a, b), nrm, length in zip(fr.tolist(), facet_normals, lengths):
        for node in (a, b):
            i = index[node]
            nsum[i] += nrm
            count[i] += 1
            weights[i] += 0.5 * length
    avg = nsum / count[:, None]
    norms = np.linalg.norm(avg, axis=1)
    if np.any(norms < 1e-12):
        raise MeshError("friction facets meet at a cusp; the averaged normal vanishes")
    normals = avg / norms[:, None]
    tangents = np.column_stack([-normals[:, 1], normals[:, 0]])
    return BoundaryFrames(nodes.astype(np.int64), normals, tangents, weights)


# --- Gmsh MSH 2.2 (ASCII) -------------------------------------------------

_NODES_PER_TYPE = {1: 2, 2: 3, 15: 1}


def save_msh(mesh, path):
    """Write ``mesh`` as an ASCII Gmsh 2.2 file (lines then triangles)."""
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(mesh.n_vertices)]
    for i, (x, y) in enumerate(mesh.vertices, start=1):
        lines.append(f"{i} {float(x)!r} {float(y)!r} 0")
    lines += ["$EndNodes", "$Elements", str(len(mesh.facets) + mesh.n_triangles)]
    eid = 1
    for (a, b), tag in zip(mesh.facets.tolist(), mesh.facet_tags.tolist()):
        lines.append(f"{eid} 1 2 {tag} {tag} {a + 1} {b + 1}")
        eid += 1
    for a, b, c in mesh.triangles.tolist():
        lines.append(f"{eid} 2 2 10 10 {a + 1} {b + 1} {c + 1}")
        eid += 1
    lines.append("$EndElements")
    Path(path).write_text("\n".join(lines) + "\n")


def _sections(text, path):
    sections = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        if not line.startswith("$"):
            raise MshParseError(f"{path}: line {i + 1}: expected a section header, got {line!r}")
        name = line[1:]
        end = "$End" + name
        j = i + 1
        while j < len(lines) and lines[j].strip() != end:
            j += 1
        if j == len(lines):
            raise MshParseError(f"{path}: section ${name} has no {end}")
        sections[name] = (i + 2, [s.strip() for s in lines[i + 1:j]])
        i = j + 1
    return sections


def _count(section_lines, start, path):
    try:
        return int(section_lines[0])
    except (ValueError, IndexError):
        raise MshParseError(f"{path}: line {start}: expected an entry count") from None


def load_msh(path):
    """Read an ASCII Gmsh 2.2 file.

    Line elements (type 1) are boundary facets whose physical tag must be
    1 (Dirichlet) or 2 (friction); type 2 elements are triangles. Point
    elements are skipped. Vertex ids are renumbered densely from zero and
    clockwise triangles are reoriented.
    """
    path = Path(path)
    sections = _sections(path.read_text(), path)
    for required in ("MeshFormat", "Nodes", "Elements"):
        if required not in sections:
            raise MshParseError(f"{path}: missing ${required} section")

    _, fmt = sections["MeshFormat"]
    parts = fmt[0].split() if fmt else []
    if len(parts) < 2 or parts[0] not in ("2.2", "2.2.0") or parts[1] != "0":
        raise MshParseError(f"{path}: unsupported MSH version/format {fmt[0] if fmt else ''!r}; need ASCII 2.2")

    start, node_lines = sections["Nodes"]
    n_nodes = _count(node_lines, start, path)
    ids, coords = [], []
    for k, line in enumerate(node_lines[1:1 + n_nodes]):
        tok = line.split()
        try:
            ids.append(int(tok[0]))
            coords.append((float(tok[1]), float(tok[2])))
        except (ValueError, IndexError):
            raise MshParseError(f"{path}: line {start + 1 + k}: malformed node record {line!r}") from None
    if len(ids) != n_nodes:
        raise MshParseError(f"{path}: $Nodes declares {n_nodes} nodes but lists {len(ids)}")
    position = {nid: i for i, nid in enumerate(ids)}

    start, elem_lines = sections["Elements"]
    n_elems = _count(elem_lines, start, path)
    triangles, facets, tags = [], [], []
    for k, line in enumerate(elem_lines[1:1 + n_elems]):
        lineno = start + 1 + k
        try:
            tok = [int(s) for s in line.split()]
            eid, etype, ntags = tok[0], tok[1], tok[2]
        except (ValueError, IndexError):
            raise MshParseError(f"{path}: line {lineno}: malformed element record {line!r}") from None
        if etype not in _NODES_PER_TYPE:
            raise MshParseError(f"{path}: line {lineno}: element {eid} has unsupported type {etype}")
        node_ids = tok[3 + ntags:3 + ntags + _NODES_PER_TYPE[etype]]
        try:
            local = [position[n] for n in node_ids]
        except KeyError as exc:
            raise MshParseError(f"{path}: line {lineno}: element {eid} references unknown node {exc.args[0]}") from None
        if etype == 1:
            if ntags == 0:
                raise MshParseError(f"{path}: line {lineno}: untagged boundary line element {eid}")
            phys = tok[3]
            if phys not in TAG_NAMES:
                raise MshParseError(f"{path}: line {lineno}: unknown physical tag {phys} on line element {eid}")
            facets.append(local)
            tags.append(phys)
        elif etype == 2:
            triangles.append(local)
    if not triangles:
        raise MshParseError(f"{path}: no triangle elements")

    used = sorted({n for tri in triangles for n in tri})
    if len(used) != len(ids):
        dangling = sorted(set(range(len(ids))) - set(used))[0]
        raise MshParseError(f"{path}: dangling vertex {ids[dangling]} is not used by any triangle")
    vertices = np.array(coords)
    triangles = np.array(triangles, dtype=np.int64)
    flip = _signed_areas(vertices, triangles) < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    try:
        return Mesh(vertices, triangles, np.array(facets, dtype=np.int64).reshape(-1, 2), np.array(tags))
    except MeshError as exc:
        raise MshParseError(f"{path}: {exc}") from None
