"""Triangular meshes on the unit square: uniform refinement hierarchy,
facet bookkeeping with fixed normals, and node-neighborhood patches.

The seed mesh splits [0,1]^2 along the diagonal from (0,0) to (1,1) into two
triangles.  Refinement is red (regular): every triangle is split into four
similar children, so each level quadruples the element count and halves the
mesh size.  Facets are stored with a fixed unit normal; for interior facets
the normal points from the lower-indexed adjacent triangle to the
higher-indexed one, for boundary facets it is the outward normal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TriMesh:
    """Conforming triangulation with facet/normal bookkeeping.

    vertices          (nv, 2) coordinates
    triangles         (nt, 3) vertex indices, positively oriented
    facets            (nf, 2) vertex index pairs, sorted low-high, stored in
                      lexicographic order
    facet_normals     (nf, 2) fixed unit normals
    facet_to_elements (nf, 2) adjacent triangle indices, -1 when the facet
                      lies on the domain boundary
    """

    vertices: np.ndarray
    triangles: np.ndarray
    facets: np.ndarray
    facet_normals: np.ndarray
    facet_to_elements: np.ndarray
    boundary_facets: np.ndarray   # bool mask over facets
    boundary_vertices: np.ndarray  # bool mask over vertices
    H: float

    # derived geometry, filled in by _finalize
    areas: np.ndarray = field(default=None, repr=False)
    centroids: np.ndarray = field(default=None, repr=False)
    grads: np.ndarray = field(default=None, repr=False)  # (nt, 3, 2) P1 hat gradients
    facet_lengths: np.ndarray = field(default=None, repr=False)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def n_facets(self) -> int:
        return self.facets.shape[0]

    def triangle_facets(self, t: int) -> np.ndarray:
        """Global indices of the three facets of triangle t."""
        tri = self.triangles[t]
        out = np.empty(3, dtype=np.int64)
        for k in range(3):
            a, b = tri[k], tri[(k + 1) % 3]
            out[k] = self.facet_index(min(a, b), max(a, b))
        return out

    def facet_index(self, a: int, b: int) -> int:
        """Index of facet (a, b) with a < b; -1 if absent."""
        key = a * self.n_vertices + b
        idx = np.searchsorted(self._facet_keys, key)
        if idx < len(self._facet_keys) and self._facet_keys[idx] == key:
            return int(idx)
        return -1

    @property
    def _facet_keys(self) -> np.ndarray:
        return self.facets[:, 0].astype(np.int64) * self.n_vertices + self.facets[:, 1]

    def vertex_to_triangles(self):
        """CSR-style incidence: (indptr, indices) mapping vertex -> triangles."""
        nv, nt = self.n_vertices, self.n_triangles
        counts = np.bincount(self.triangles.ravel(), minlength=nv)
        indptr = np.concatenate(([0], np.cumsum(counts)))
        indices = np.empty(3 * nt, dtype=np.int64)
        fill = indptr[:-1].copy()
        for t in range(nt):
            for v in self.triangles[t]:
                indices[fill[v]] = t
                fill[v] += 1
        return indptr, indices

    def element_facet_table(self) -> np.ndarray:
        """(nt, 3) facet indices per triangle (edge k is opposite-free: between
        local vertices k and k+1)."""
        keys = self._facet_keys
        tri = self.triangles
        nv = self.n_vertices
        table = np.empty((self.n_triangles, 3), dtype=np.int64)
        for k in range(3):
            a = tri[:, k]
            b = tri[:, (k + 1) % 3]
            lo = np.minimum(a, b).astype(np.int64)
            hi = np.maximum(a, b).astype(np.int64)
            table[:, k] = np.searchsorted(keys, lo * nv + hi)
        return table

    def to_text(self) -> str:
        """Plain-text dump (vertex, triangle, facet tables) for debugging."""
        lines = [f"# trimesh nv={self.n_vertices} nt={self.n_triangles} nf={self.n_facets} H={self.H!r}"]
        lines.append("# vertices: index x y boundary")
        for i, (x, y) in enumerate(self.vertices):
            lines.append(f"v {i} {x!r} {y!r} {int(self.boundary_vertices[i])}")
        lines.append("# triangles: index v0 v1 v2")
        for i, t in enumerate(self.triangles):
            lines.append(f"t {i} {t[0]} {t[1]} {t[2]}")
        lines.append("# facets: index v0 v1 nx ny elem0 elem1 boundary")
        for i in range(self.n_facets):
            a, b = self.facets[i]
            nx, ny = self.facet_normals[i]
            e0, e1 = self.facet_to_elements[i]
            lines.append(f"f {i} {a} {b} {nx!r} {ny!r} {e0} {e1} {int(self.boundary_facets[i])}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Patch:
    """ell-th order node-neighborhood patch around a center element.

    elements       triangle indices of the patch (sorted)
    active_facets  facets whose adjacent elements all lie in the patch; this
                   keeps facets on the physical boundary and drops only those
                   on the artificial patch boundary
    boundary_facets facets on the patch boundary (artificial and physical)
    """

    center: int
    order: int
    elements: np.ndarray
    active_facets: np.ndarray
    boundary_facets: np.ndarray
    saturated: bool


def _is_boundary_vertex(v: np.ndarray) -> np.ndarray:
    x, y = v[:, 0], v[:, 1]
    return (x == 0.0) | (x == 1.0) | (y == 0.0) | (y == 1.0)


def _finalize(vertices: np.ndarray, triangles: np.ndarray) -> TriMesh:
    """Assemble facet tables, normals, and geometry caches."""
    vertices = np.ascontiguousarray(vertices, dtype=np.float64)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    nv = vertices.shape[0]
    nt = triangles.shape[0]

    # unique facets in lexicographic order
    a = triangles[:, [0, 1, 2]].ravel()
    b = triangles[:, [1, 2, 0]].ravel()
    lo = np.minimum(a, b).astype(np.int64)
    hi = np.maximum(a, b).astype(np.int64)
    keys = lo * nv + hi
    owner = np.repeat(np.arange(nt, dtype=np.int64), 3)
    order = np.argsort(keys, kind="stable")
    keys_s, owner_s = keys[order], owner[order]
    uniq, start = np.unique(keys_s, return_index=True)
    nf = len(uniq)
    facets = np.stack([uniq // nv, uniq % nv], axis=1).astype(np.int64)

    f2e = -np.ones((nf, 2), dtype=np.int64)
    counts = np.diff(np.concatenate([start, [len(keys_s)]]))
    if counts.max() > 2:
        raise ValueError("nonconforming mesh: facet shared by more than 2 triangles")
    f2e[:, 0] = owner_s[start]
    second = counts == 2
    f2e[second, 1] = owner_s[start[second] + 1]
    swap = second & (f2e[:, 0] > f2e[:, 1])
    f2e[swap] = f2e[swap][:, ::-1]
    boundary_facets = ~second

    # fixed normals: lower-indexed -> higher-indexed element, outward on the boundary
    pa = vertices[facets[:, 0]]
    pb = vertices[facets[:, 1]]
    tang = pb - pa
    lengths = np.linalg.norm(tang, axis=1)
    tang = tang / lengths[:, None]
    normals = np.stack([tang[:, 1], -tang[:, 0]], axis=1)
    centroids_t = vertices[triangles].mean(axis=1)
    mid = 0.5 * (pa + pb)
    ref = np.where(
        second[:, None],
        centroids_t[f2e[:, 1]] - centroids_t[np.maximum(f2e[:, 0], 0)],
        mid - centroids_t[np.maximum(f2e[:, 0], 0)],
    )
    flip = np.einsum("ij,ij->i", normals, ref) < 0.0
    normals[flip] *= -1.0

    v0 = vertices[triangles[:, 0]]
    e1 = vertices[triangles[:, 1]] - v0
    e2 = vertices[triangles[:, 2]] - v0
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if np.any(det <= 0):
        raise ValueError("triangles must be positively oriented")
    areas = 0.5 * det

    # P1 hat gradients: grad lambda_k = rot90(opposite edge) / (2 |T|)
    p = vertices[triangles]  # (nt, 3, 2)
    grads = np.empty((nt, 3, 2))
    for k in range(3):
        opp = p[:, (k + 2) % 3] - p[:, (k + 1) % 3]
        grads[:, k, 0] = -opp[:, 1]
        grads[:, k, 1] = opp[:, 0]
    grads /= (2.0 * areas)[:, None, None]

    diam = np.maximum(
        np.linalg.norm(e1, axis=1),
        np.maximum(np.linalg.norm(e2, axis=1), np.linalg.norm(e2 - e1, axis=1)),
    )
    mesh = TriMesh(
        vertices=vertices,
        triangles=triangles,
        facets=facets,
        facet_normals=normals,
        facet_to_elements=f2e,
        boundary_facets=boundary_facets,
        boundary_vertices=_is_boundary_vertex(vertices),
        H=float(diam.max()),
        areas=areas,
        centroids=centroids_t,
        grads=grads,
        facet_lengths=lengths,
    )
    return mesh


def build_initial_mesh() -> TriMesh:
    """Unit square split by the diagonal from (0,0) to (1,1): 2 triangles."""
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    triangles = np.array([[0, 1, 2], [0, 2, 3]])
    return _finalize(vertices, triangles)


@dataclass(frozen=True)
class RefinementInfo:
    """Bookkeeping for one red-refinement step.

    parent_of_triangle   fine triangle -> coarse parent (children are 4t..4t+3)
    facet_children       (nf_coarse, 2) fine facet indices tiling each coarse facet
    edge_midpoint_vertex coarse facet -> index of the new midpoint vertex; the
                         first nv_coarse fine vertices coincide with the coarse ones
    """

    parent_of_triangle: np.ndarray
    facet_children: np.ndarray
    edge_midpoint_vertex: np.ndarray


def refine_uniform(mesh: TriMesh) -> tuple[TriMesh, RefinementInfo]:
    """Red refinement: each triangle into 4 similar children; conformity and
    positive orientation are preserved and H halves."""
    nv = mesh.n_vertices
    nt = mesh.n_triangles
    nf = mesh.n_facets

    midpoint_vertex = nv + np.arange(nf, dtype=np.int64)
    new_vertices = np.vstack([
        mesh.vertices,
        0.5 * (mesh.vertices[mesh.facets[:, 0]] + mesh.vertices[mesh.facets[:, 1]]),
    ])

    ef = mesh.element_facet_table()
    tri = mesh.triangles
    children = np.empty((4 * nt, 3), dtype=np.int64)
    m01 = midpoint_vertex[ef[:, 0]]
    m12 = midpoint_vertex[ef[:, 1]]
    m20 = midpoint_vertex[ef[:, 2]]
    children[0::4] = np.stack([tri[:, 0], m01, m20], axis=1)
    children[1::4] = np.stack([m01, tri[:, 1], m12], axis=1)
    children[2::4] = np.stack([m20, m12, tri[:, 2]], axis=1)
    children[3::4] = np.stack([m01, m12, m20], axis=1)

    fine = _finalize(new_vertices, children)

    fine_keys = fine.facets[:, 0].astype(np.int64) * fine.n_vertices + fine.facets[:, 1]
    facet_children = np.empty((nf, 2), dtype=np.int64)
    for half in range(2):
        a = mesh.facets[:, half].astype(np.int64)
        lo = np.minimum(a, midpoint_vertex)
        hi = np.maximum(a, midpoint_vertex)
        facet_children[:, half] = np.searchsorted(fine_keys, lo * fine.n_vertices + hi)
    info = RefinementInfo(
        parent_of_triangle=np.repeat(np.arange(nt, dtype=np.int64), 4),
        facet_children=facet_children,
        edge_midpoint_vertex=midpoint_vertex,
    )
    return fine, info


class MeshHierarchy:
    """Nested uniform refinements of the initial mesh.

    Level k holds the mesh whose opposing triangle pairs form squares of side
    2^-k.  Triangle ancestry, facet tilings, and P1 prolongations between any
    two levels are derived from the per-step refinement info.
    """

    def __init__(self, n_levels: int):
        if n_levels < 1:
            raise ValueError("need at least one level")
        self.levels: list[TriMesh] = [build_initial_mesh()]
        self.steps: list[RefinementInfo] = []
        for _ in range(n_levels - 1):
            fine, info = refine_uniform(self.levels[-1])
            self.levels.append(fine)
            self.steps.append(info)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def triangle_ancestors(self, coarse: int, fine: int) -> np.ndarray:
        """Map each triangle of level `fine` to its ancestor on level `coarse`."""
        self._check_pair(coarse, fine)
        idx = np.arange(self.levels[fine].n_triangles, dtype=np.int64)
        for lvl in range(fine, coarse, -1):
            idx = self.steps[lvl - 1].parent_of_triangle[idx]
        return idx

    def facet_tiling(self, coarse: int, fine: int):
        """List over coarse facets of the fine facet indices tiling each one."""
        self._check_pair(coarse, fine)
        tiles = [np.array([i], dtype=np.int64) for i in range(self.levels[coarse].n_facets)]
        for lvl in range(coarse, fine):
            ch = self.steps[lvl].facet_children
            tiles = [ch[t].ravel() for t in tiles]
        return tiles

    def prolongation(self, coarse: int, fine: int):
        """Sparse P1 nodal prolongation (nv_fine x nv_coarse), scalar version."""
        import scipy.sparse as sp

        self._check_pair(coarse, fine)
        P = sp.identity(self.levels[coarse].n_vertices, format="csr")
        for lvl in range(coarse, fine):
            cm = self.levels[lvl]
            fm = self.levels[lvl + 1]
            rows = np.concatenate([
                np.arange(cm.n_vertices, dtype=np.int64),
                np.repeat(self.steps[lvl].edge_midpoint_vertex, 2),
            ])
            cols = np.concatenate([
                np.arange(cm.n_vertices, dtype=np.int64),
                cm.facets.ravel(),
            ])
            vals = np.concatenate([
                np.ones(cm.n_vertices),
                np.full(2 * cm.n_facets, 0.5),
            ])
            step = sp.csr_matrix((vals, (rows, cols)), shape=(fm.n_vertices, cm.n_vertices))
            P = step @ P
        return P

    def _check_pair(self, coarse: int, fine: int):
        if not (0 <= coarse <= fine < self.n_levels):
            raise ValueError(f"invalid level pair ({coarse}, {fine})")


def build_patch(mesh: TriMesh, center: int, order: int,
                vertex_incidence=None) -> Patch:
    """N^ell(T): the ell-fold node-neighbor closure of element T.

    Facets are active when every adjacent element lies in the patch, which
    keeps physical-boundary facets and excludes exactly the facets on the
    artificial patch boundary.
    """
    if not (0 <= center < mesh.n_triangles):
        raise ValueError(f"invalid element id {center}")
    if order < 0:
        raise ValueError("patch order must be nonnegative")
    if vertex_incidence is None:
        vertex_incidence = mesh.vertex_to_triangles()
    indptr, indices = vertex_incidence

    in_patch = np.zeros(mesh.n_triangles, dtype=bool)
    in_patch[center] = True
    saturated = mesh.n_triangles == 1
    for _ in range(order):
        verts = np.unique(mesh.triangles[in_patch].ravel())
        grown = in_patch.copy()
        for v in verts:
            grown[indices[indptr[v]:indptr[v + 1]]] = True
        if np.array_equal(grown, in_patch):
            saturated = True
            break
        in_patch = grown
    if bool(in_patch.all()):
        saturated = True

    f2e = mesh.facet_to_elements
    interior = f2e[:, 1] >= 0
    adj0 = in_patch[f2e[:, 0]]
    adj1 = interior & in_patch[np.maximum(f2e[:, 1], 0)]
    active = adj0 & (adj1 | ~interior)
    boundary = (interior & (adj0 ^ adj1)) | (~interior & adj0)

    return Patch(
        center=center,
        order=order,
        elements=np.flatnonzero(in_patch),
        active_facets=np.flatnonzero(active),
        boundary_facets=np.flatnonzero(boundary),
        saturated=saturated,
    )
