"""Conforming 2D triangle meshes.

Plain numpy containers for triangulations plus the two operations the
adaptive loop needs: structured rectangle grids and newest-vertex
bisection with conformity closure.  A marked triangle has all three of
its edges split (four children); neighbours are bisected as needed so no
hanging nodes remain.  Right-isoceles grid triangles reproduce their own
similarity class under this scheme, so shape regularity is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# boundary segment labels used by uniform_mesh
LEFT, RIGHT, BOTTOM, TOP = 1, 2, 3, 4


class MeshInvariantError(Exception):
    """A mesh violates one of its structural invariants."""


class RefinementOverflowError(Exception):
    """A refinement request exceeded the configured bisection budget."""


@dataclass
class Mesh:
    """Immutable conforming triangulation.

    Attributes
    ----------
    vertices : (n, 2) float array
        Vertex coordinates.
    triangles : (m, 3) int array
        Vertex indices per triangle, counterclockwise.
    tri_region : (m,) int array
        Integer region label per triangle, inherited under refinement.
    boundary_edges : (b, 3) int array
        Rows (i, j, label) with i < j, sorted lexicographically.
    edge_adjacency : dict
        Sorted vertex pair -> (tri, tri) for interior edges,
        (tri, label) for boundary edges.
    refinement_edge : (m,) int array
        Local index k of the bisection edge of each triangle; the edge
        itself connects local vertices k+1 and k+2 (mod 3).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    tri_region: np.ndarray
    boundary_edges: np.ndarray
    edge_adjacency: dict
    refinement_edge: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)


@dataclass
class MeshMetrics:
    """Per-triangle size measures and per-edge lengths."""

    h: np.ndarray          # longest edge per triangle
    rho: np.ndarray        # inradius per triangle
    area: np.ndarray
    edge_length: dict      # sorted vertex pair -> length


def _signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    d1 = vertices[triangles[:, 1]] - vertices[triangles[:, 0]]
    d2 = vertices[triangles[:, 2]] - vertices[triangles[:, 0]]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _edge_table(triangles: np.ndarray):
    """Unique edges and the edge id opposite each local vertex.

    Returns (edges, tri_edge_ids) where edges is (n_edges, 2) with each
    row sorted and rows in lexicographic order, and tri_edge_ids[t, k]
    is the id of the edge opposite local vertex k of triangle t.
    """
    m = len(triangles)
    raw = np.stack(
        [
            triangles[:, [1, 2]],
            triangles[:, [2, 0]],
            triangles[:, [0, 1]],
        ],
        axis=1,
    ).reshape(3 * m, 2)
    raw.sort(axis=1)
    edges, inverse = np.unique(raw, axis=0, return_inverse=True)
    return edges, inverse.reshape(m, 3)


def initial_refinement_edges(
    vertices: np.ndarray, triangles: np.ndarray
) -> np.ndarray:
    """Longest edge of each triangle; ties go to the edge opposite the
    smallest vertex index."""
    p = vertices[triangles]
    lengths = np.stack(
        [
            np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
            np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
            np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
        ],
        axis=1,
    )
    longest = lengths.max(axis=1, keepdims=True)
    # among longest edges, prefer the smallest opposite-vertex index
    opposite = np.where(lengths == longest, triangles, np.iinfo(np.int64).max)
    return np.argmin(opposite, axis=1).astype(np.int64)


def make_mesh(
    vertices,
    triangles,
    tri_region=None,
    boundary_labels: dict | None = None,
    refinement_edge=None,
    sigma_max: float = 10.0,
) -> Mesh:
    """Build a Mesh from raw arrays and validate its invariants.

    Parameters
    ----------
    vertices, triangles : array-like
        Coordinates and counterclockwise vertex triples.
    tri_region : array-like, optional
        Region labels, default all zero.
    boundary_labels : dict, optional
        Sorted vertex pair -> segment label for boundary edges; edges
        not listed get label 0.  Keys that are not topological boundary
        edges are rejected.
    refinement_edge : array-like, optional
        Bisection edge indices; default assigns the longest edge.
    sigma_max : float
        Shape-regularity bound on max(h/rho).

    Raises
    ------
    MeshInvariantError
        On wrong orientation, non-conforming connectivity, stray
        boundary labels, or shape-regularity violation.
    """
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 2)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    m = len(triangles)
    if tri_region is None:
        tri_region = np.zeros(m, dtype=np.int64)
    else:
        tri_region = np.asarray(tri_region, dtype=np.int64).copy()

    if triangles.min(initial=0) < 0 or triangles.max(initial=-1) >= len(vertices):
        raise MeshInvariantError("triangle vertex index out of range")
    areas = _signed_areas(vertices, triangles)
    if np.any(areas <= 0.0):
        bad = int(np.argmin(areas))
        raise MeshInvariantError(
            f"triangle {bad} has non-positive area {areas[bad]:g}"
        )

    edges, tri_edge_ids = _edge_table(triangles)
    counts = np.bincount(tri_edge_ids.ravel(), minlength=len(edges))
    if counts.max(initial=0) > 2:
        raise MeshInvariantError("an edge is shared by more than 2 triangles")

    adjacency: dict = {}
    for t in range(m):
        for k in range(3):
            key = (int(edges[tri_edge_ids[t, k], 0]), int(edges[tri_edge_ids[t, k], 1]))
            adjacency.setdefault(key, []).append(t)

    boundary_labels = dict(boundary_labels or {})
    boundary_keys = {k for k, v in adjacency.items() if len(v) == 1}
    stray = set(boundary_labels) - boundary_keys
    if stray:
        raise MeshInvariantError(f"labels given for non-boundary edges: {sorted(stray)}")

    edge_adjacency = {}
    rows = []
    for key in sorted(boundary_keys):
        label = int(boundary_labels.get(key, 0))
        edge_adjacency[key] = (adjacency[key][0], label)
        rows.append((key[0], key[1], label))
    for key, tris in adjacency.items():
        if len(tris) == 2:
            edge_adjacency[key] = (tris[0], tris[1])
    boundary_edges = (
        np.asarray(rows, dtype=np.int64).reshape(-1, 3)
        if rows
        else np.zeros((0, 3), dtype=np.int64)
    )

    if refinement_edge is None:
        refinement_edge = initial_refinement_edges(vertices, triangles)
    else:
        refinement_edge = np.asarray(refinement_edge, dtype=np.int64).copy()

    mesh = Mesh(
        vertices=vertices,
        triangles=triangles,
        tri_region=tri_region,
        boundary_edges=boundary_edges,
        edge_adjacency=edge_adjacency,
        refinement_edge=refinement_edge,
    )
    metrics = mesh_metrics(mesh)
    sigma = float(np.max(metrics.h / metrics.rho))
    if sigma > sigma_max:
        raise MeshInvariantError(
            f"shape regularity violated: max h/rho = {sigma:.3f} > {sigma_max}"
        )
    return mesh


def uniform_mesh(nx: int, ny: int, rect, sigma_max: float = 10.0) -> Mesh:
    """Structured grid on an axis-aligned rectangle.

    Each of the nx*ny cells is split along its lower-left to upper-right
    diagonal, giving 2*nx*ny triangles.  Boundary edges carry the labels
    LEFT, RIGHT, BOTTOM, TOP.

    Parameters
    ----------
    nx, ny : int
        Number of cells per direction, at least 1.
    rect : tuple
        (xmin, ymin, xmax, ymax), nondegenerate.
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be at least 1")
    x0, y0, x1, y1 = map(float, rect)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate rectangle {rect}")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    def vid(ix, iy):
        return iy * (nx + 1) + ix

    triangles = []
    for iy in range(ny):
        for ix in range(nx):
            v00, v10 = vid(ix, iy), vid(ix + 1, iy)
            v01, v11 = vid(ix, iy + 1), vid(ix + 1, iy + 1)
            triangles.append((v00, v10, v11))
            triangles.append((v00, v11, v01))

    labels = {}
    for ix in range(nx):
        labels[tuple(sorted((vid(ix, 0), vid(ix + 1, 0))))] = BOTTOM
        labels[tuple(sorted((vid(ix, ny), vid(ix + 1, ny))))] = TOP
    for iy in range(ny):
        labels[tuple(sorted((vid(0, iy), vid(0, iy + 1))))] = LEFT
        labels[tuple(sorted((vid(nx, iy), vid(nx, iy + 1))))] = RIGHT

    return make_mesh(
        vertices, triangles, boundary_labels=labels, sigma_max=sigma_max
    )


def mesh_metrics(mesh: Mesh) -> MeshMetrics:
    """Longest edge, inradius (2 area / perimeter), area, edge lengths."""
    p = mesh.vertices[mesh.triangles]
    sides = np.stack(
        [
            np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
            np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
            np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
        ],
        axis=1,
    )
    area = _signed_areas(mesh.vertices, mesh.triangles)
    h = sides.max(axis=1)
    rho = 2.0 * area / sides.sum(axis=1)
    edge_length = {
        key: float(np.linalg.norm(mesh.vertices[key[1]] - mesh.vertices[key[0]]))
        for key in mesh.edge_adjacency
    }
    return MeshMetrics(h=h, rho=rho, area=area, edge_length=edge_length)


def refine(
    mesh: Mesh,
    marked,
    bisection_budget: int | None = None,
    sigma_max: float | None = None,
) -> Mesh:
    """Bisect the marked triangles and close the mesh to conformity.

    Every marked triangle has all three edges split.  Closure then marks
    the bisection edge of any triangle touching a split edge, so the
    rebuilt mesh is conforming.  Children keep their parent's region
    label, split boundary edges keep their segment label, and the newest
    vertex of each child becomes the peak opposite its next bisection
    edge.

    An empty marking returns the input mesh unchanged.  If
    bisection_budget is given and the closure cascade needs more single
    bisections than that, RefinementOverflowError is raised before any
    work is done.

    Bisection keeps the number of similarity classes finite but a single
    round may worsen h/rho; unless an explicit sigma_max is given, the
    result is validated against twice the input mesh's own ratio (or 10,
    whichever is larger).
    """
    marked = {int(t) for t in marked}
    if not marked:
        return mesh
    if sigma_max is None:
        metrics = mesh_metrics(mesh)
        sigma_max = max(10.0, 2.0 * float(np.max(metrics.h / metrics.rho)))
    m = mesh.n_triangles
    if any(t < 0 or t >= m for t in marked):
        raise ValueError("marked triangle index out of range")

    edges, tri_edge_ids = _edge_table(mesh.triangles)
    marked_edge = np.zeros(len(edges), dtype=bool)
    for t in marked:
        marked_edge[tri_edge_ids[t]] = True

    ref_ids = tri_edge_ids[np.arange(m), mesh.refinement_edge]
    while True:
        touched = marked_edge[tri_edge_ids].any(axis=1)
        need = touched & ~marked_edge[ref_ids]
        if not need.any():
            break
        marked_edge[ref_ids[need]] = True

    n_bisections = int(marked_edge[tri_edge_ids].sum())
    if bisection_budget is not None and n_bisections > bisection_budget:
        raise RefinementOverflowError(
            f"closure needs {n_bisections} bisections, budget is {bisection_budget}"
        )

    # one new vertex per split edge, numbered in edge-table order
    split_ids = np.flatnonzero(marked_edge)
    new_vertex = {}
    mids = []
    for offset, eid in enumerate(split_ids):
        new_vertex[int(eid)] = mesh.n_vertices + offset
        a, b = edges[eid]
        mids.append(0.5 * (mesh.vertices[a] + mesh.vertices[b]))
    vertices = np.vstack([mesh.vertices, np.asarray(mids).reshape(-1, 2)])

    triangles = []
    regions = []
    ref_edge = []

    def emit(tri, region, r):
        triangles.append(tri)
        regions.append(region)
        ref_edge.append(r)

    for t in range(m):
        ids = tri_edge_ids[t]
        if not marked_edge[ids].any():
            emit(tuple(mesh.triangles[t]), mesh.tri_region[t], mesh.refinement_edge[t])
            continue
        r = mesh.refinement_edge[t]
        tri = mesh.triangles[t]
        w0, w1, w2 = tri[r], tri[(r + 1) % 3], tri[(r + 2) % 3]
        e0, e1, e2 = ids[r], ids[(r + 1) % 3], ids[(r + 2) % 3]
        # closure guarantees the bisection edge is split
        m0 = new_vertex[int(e0)]
        region = mesh.tri_region[t]
        if marked_edge[e2]:
            m2 = new_vertex[int(e2)]
            emit((m2, m0, w0), region, 0)
            emit((m2, w1, m0), region, 0)
        else:
            emit((m0, w0, w1), region, 0)
        if marked_edge[e1]:
            m1 = new_vertex[int(e1)]
            emit((m1, m0, w2), region, 0)
            emit((m1, w0, m0), region, 0)
        else:
            emit((m0, w2, w0), region, 0)

    pair_to_id = {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}
    labels = {}
    for i, j, label in mesh.boundary_edges:
        key = (int(i), int(j))
        eid = pair_to_id[key]
        if marked_edge[eid]:
            mid = new_vertex[eid]
            labels[tuple(sorted((key[0], mid)))] = int(label)
            labels[tuple(sorted((mid, key[1])))] = int(label)
        else:
            labels[key] = int(label)

    return make_mesh(
        vertices,
        triangles,
        tri_region=regions,
        boundary_labels=labels,
        refinement_edge=ref_edge,
        sigma_max=sigma_max,
    )


def write_bdfmesh(mesh: Mesh, path) -> None:
    """Write the native line-oriented mesh format (17 significant digits)."""
    lines = ["bdfmesh 1", f"vertices {mesh.n_vertices}"]
    for x, y in mesh.vertices:
        lines.append(f"{x:.16e} {y:.16e}")
    lines.append(f"triangles {mesh.n_triangles}")
    for (i, j, k), region in zip(mesh.triangles, mesh.tri_region):
        lines.append(f"{i} {j} {k} {region}")
    lines.append(f"boundary {len(mesh.boundary_edges)}")
    for i, j, label in mesh.boundary_edges:
        lines.append(f"{i} {j} {label}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_bdfmesh(path) -> Mesh:
    """Read the native mesh format written by write_bdfmesh."""
    with open(path) as f:
        tokens = f.read().split("\n")
    lines = [ln for ln in (s.strip() for s in tokens) if ln]
    if not lines or lines[0] != "bdfmesh 1":
        raise ValueError("not a bdfmesh version 1 file")
    pos = 1

    def expect(keyword):
        nonlocal pos
        parts = lines[pos].split()
        if len(parts) != 2 or parts[0] != keyword:
            raise ValueError(f"expected '{keyword} <count>' at line {pos + 1}")
        pos += 1
        return int(parts[1])

    n = expect("vertices")
    vertices = [tuple(map(float, lines[pos + i].split())) for i in range(n)]
    pos += n
    m = expect("triangles")
    tri_rows = [tuple(map(int, lines[pos + i].split())) for i in range(m)]
    pos += m
    b = expect("boundary")
    bnd_rows = [tuple(map(int, lines[pos + i].split())) for i in range(b)]

    triangles = [(i, j, k) for i, j, k, _ in tri_rows]
    regions = [r for _, _, _, r in tri_rows]
    labels = {tuple(sorted((i, j))): label for i, j, label in bnd_rows}
    return make_mesh(vertices, triangles, tri_region=regions, boundary_labels=labels)
