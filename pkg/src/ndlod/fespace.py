"""Discrete spaces and interpolation operators.

* VectorFESpace: P1 vector fields with vanishing tangential trace on the
  boundary of the unit square (x-component constrained on y in {0,1},
  y-component on x in {0,1}, both at corners).
* QoIMap: the facet normal-flux functionals q_F(v) = int_F v.n_F ds of a
  coarse mesh, assembled exactly (trapezoidal per fine sub-facet) against a
  fine space.
* Bubbles: normal-directed fields rho_F supported on the one or two elements
  sharing F with q_F'(rho_F) = delta_FF'; two admissible profiles are
  provided ("plateau": sum of interior fine hats, "quadratic": interpolated
  coarse edge bubble), which must produce the same multiscale basis.
* Quasi-interpolation: nodal values from the mean normal fluxes of two
  adjacent facets with maximal normal determinant, projected onto the
  tangential boundary condition at boundary nodes.
* ScalarLagrangeSpace: order-1/2 Lagrange spaces carrying the load
  interpolant of the post-processing step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import TriMesh


class VectorFESpace:
    """P1 vector fields on a TriMesh; dof 2*v + c is component c at vertex v."""

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        nv = mesh.n_vertices
        self.ndof = 2 * nv
        x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
        constrained = np.zeros(self.ndof, dtype=bool)
        constrained[0::2] = (y == 0.0) | (y == 1.0)   # tangential on horizontal edges
        constrained[1::2] = (x == 0.0) | (x == 1.0)   # tangential on vertical edges
        self.constrained = constrained
        self.free_dofs = np.flatnonzero(~constrained)
        self.n_free = self.free_dofs.size

    def interpolate(self, f) -> np.ndarray:
        """Vertex interpolant of an analytic field f(x, y) -> (2,) arrays."""
        vals = np.asarray(f(self.mesh.vertices[:, 0], self.mesh.vertices[:, 1]))
        return np.ascontiguousarray(vals.T).reshape(self.ndof)

    def conform(self, v: np.ndarray) -> np.ndarray:
        out = v.copy()
        out[self.constrained] = 0.0
        return out

    def restrict(self, full: np.ndarray) -> np.ndarray:
        return full[self.free_dofs]

    def extend(self, free: np.ndarray) -> np.ndarray:
        full = np.zeros(self.ndof)
        full[self.free_dofs] = free
        return full


class MultiplierSpace:
    """One degree of freedom per facet of the given index set."""

    def __init__(self, facet_ids: np.ndarray):
        self.facet_ids = np.asarray(facet_ids, dtype=np.int64)
        self.index_of = {int(f): i for i, f in enumerate(self.facet_ids)}

    @property
    def ndof(self) -> int:
        return self.facet_ids.size


class QoIMap:
    """Normal-flux functionals of the coarse facets on a fine space.

    The matrix row of facet F evaluates int_F v.n_F ds exactly for
    piecewise-linear v via the trapezoid rule on each fine sub-facet; the
    coarse facet's fixed normal is used throughout.
    """

    def __init__(self, fine_space: VectorFESpace, coarse_mesh: TriMesh, tiling):
        self.fine_space = fine_space
        self.coarse_mesh = coarse_mesh
        self.tiling = tiling
        fine = fine_space.mesh
        rows, cols, vals = [], [], []
        for F in range(coarse_mesh.n_facets):
            nF = coarse_mesh.facet_normals[F]
            subs = tiling[F]
            if np.any(subs < 0):
                raise ValueError(f"coarse facet {F} is not resolved by the fine mesh")
            L = fine.facet_lengths[subs]
            ends = fine.facets[subs]  # (ns, 2)
            for c in range(2):
                rows.extend([F] * (2 * len(subs)))
                cols.extend((2 * ends[:, 0] + c).tolist())
                cols.extend((2 * ends[:, 1] + c).tolist())
                vals.extend((0.5 * L * nF[c]).tolist())
                vals.extend((0.5 * L * nF[c]).tolist())
        self.matrix = sp.csr_matrix(
            (vals, (rows, cols)), shape=(coarse_mesh.n_facets, fine_space.ndof)
        )

    def qoi(self, F: int, v: np.ndarray) -> float:
        return float((self.matrix[F] @ v)[0])

    def all(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v


@dataclass(frozen=True)
class Bubble:
    facet: int
    vector: np.ndarray
    support: np.ndarray  # coarse element ids (omega_F)


def _omega_f_interior_vertices(fine: TriMesh, coarse: TriMesh, ancestors, tiling, F):
    """Fine vertices in int(omega_F) union relint(F)."""
    omega = coarse.facet_to_elements[F]
    omega = omega[omega >= 0]
    in_omega = np.isin(ancestors, omega)
    nv = fine.n_vertices
    inc_total = np.bincount(fine.triangles.ravel(), minlength=nv)
    inc_in = np.bincount(fine.triangles[in_omega].ravel(), minlength=nv)
    all_in = (inc_in == inc_total) & (inc_total > 0)

    relint = np.unique(fine.facets[tiling[F]].ravel())
    coarse_ends = coarse.facets[F]
    # coarse endpoints coincide with fine vertices of the same index (nested refinement)
    relint = relint[~np.isin(relint, coarse_ends)]

    mask = all_in & ~fine.boundary_vertices
    mask[relint] = True
    return np.flatnonzero(mask), omega, relint


def build_bubble(fine_space: VectorFESpace, coarse_mesh: TriMesh, tiling,
                 ancestors: np.ndarray, qoimap: QoIMap, F: int,
                 profile: str = "plateau") -> Bubble:
    """Normal-directed bubble with unit flux through F and zero flux through
    every other coarse facet.

    "plateau" sums the fine hat functions at the interior vertices;
    "quadratic" interpolates the coarse edge bubble 4*lam_p*lam_q.  Both
    vanish on the boundary of omega_F away from F, which yields the
    Kronecker property, and both are conforming.
    """
    fine = fine_space.mesh
    verts, omega, relint = _omega_f_interior_vertices(fine, coarse_mesh, ancestors, tiling, F)
    if relint.size == 0:
        raise ValueError(f"facet {F}: no interior fine vertex (fine mesh too coarse)")
    nF = coarse_mesh.facet_normals[F]

    if profile == "plateau":
        beta = np.ones(verts.size)
    elif profile == "quadratic":
        # every selected vertex has all incident fine elements inside omega_F,
        # so any incident element identifies a containing coarse triangle
        incident_elem = np.full(fine.n_vertices, -1, dtype=np.int64)
        for k in range(3):
            incident_elem[fine.triangles[:, k]] = np.arange(fine.n_triangles)
        T = ancestors[incident_elem[verts]]
        corners = coarse_mesh.vertices[coarse_mesh.triangles[T]]  # (m, 3, 2)
        M = np.concatenate([corners.transpose(0, 2, 1),
                            np.ones((verts.size, 1, 3))], axis=1)
        rhs = np.concatenate([fine.vertices[verts], np.ones((verts.size, 1))], axis=1)
        lam = np.linalg.solve(M, rhs[:, :, None])[:, :, 0]  # (m, 3)
        p, q = coarse_mesh.facets[F]
        lam_p = (lam * (coarse_mesh.triangles[T] == p)).sum(axis=1)
        lam_q = (lam * (coarse_mesh.triangles[T] == q)).sum(axis=1)
        beta = 4.0 * lam_p * lam_q
    else:
        raise ValueError(f"unknown bubble profile {profile!r}")

    vec = np.zeros(fine_space.ndof)
    vec[2 * verts] = beta * nF[0]
    vec[2 * verts + 1] = beta * nF[1]
    vec[fine_space.constrained] = 0.0
    flux = qoimap.qoi(F, vec)
    if abs(flux) < 1e-14:
        raise ValueError(f"facet {F}: degenerate bubble flux")
    return Bubble(facet=F, vector=vec / flux, support=omega)


def build_bubbles(fine_space, coarse_mesh, tiling, ancestors, qoimap,
                  profile: str = "plateau") -> sp.csc_matrix:
    """All bubbles as a sparse (ndof_fine x n_facets) matrix."""
    cols = []
    for F in range(coarse_mesh.n_facets):
        cols.append(build_bubble(fine_space, coarse_mesh, tiling, ancestors,
                                 qoimap, F, profile).vector)
    return sp.csc_matrix(np.column_stack(cols))


def _facets_at_vertices(mesh: TriMesh):
    """List over vertices of incident facet indices (sorted)."""
    out = [[] for _ in range(mesh.n_vertices)]
    for F, (a, b) in enumerate(mesh.facets):
        out[a].append(F)
        out[b].append(F)
    return [np.array(f, dtype=np.int64) for f in out]


def select_facet_pair(mesh: TriMesh, z: int, incident=None) -> tuple[int, int]:
    """The two facets at node z maximizing |det| of their stacked normals,
    ties broken toward the lexicographically smallest index pair."""
    fz = incident[z] if incident is not None else _facets_at_vertices(mesh)[z]
    best, best_det = None, -1.0
    for ii in range(len(fz)):
        for jj in range(ii + 1, len(fz)):
            n1 = mesh.facet_normals[fz[ii]]
            n2 = mesh.facet_normals[fz[jj]]
            det = abs(n1[0] * n2[1] - n1[1] * n2[0])
            if det > best_det + 1e-12:
                best, best_det = (int(fz[ii]), int(fz[jj])), det
    if best is None or best_det < 1e-12:
        raise ValueError(f"node {z}: no facet pair with independent normals")
    return best


def quasi_interpolation_matrix(coarse_space: VectorFESpace, qoimap: QoIMap) -> sp.csr_matrix:
    """Matrix of the quasi-interpolation onto the coarse P1 vector space.

    At each node the two selected facets' mean normal fluxes determine the
    nodal value through the inverse of the stacked-normal matrix; boundary
    nodes are post-processed by zeroing the constrained (tangential)
    components, so the output is conforming and depends on its argument only
    through the quantities of interest.
    """
    coarse = coarse_space.mesh
    incident = _facets_at_vertices(coarse)
    rows, cols, vals = [], [], []
    flux = qoimap.matrix.tocsr()
    inv_len = 1.0 / coarse.facet_lengths
    for z in range(coarse.n_vertices):
        F1, F2 = select_facet_pair(coarse, z, incident)
        N = np.array([coarse.facet_normals[F1], coarse.facet_normals[F2]])
        Minv = np.linalg.inv(N)
        for c in range(2):
            dof = 2 * z + c
            if coarse_space.constrained[dof]:
                continue
            for w, F in ((Minv[c, 0] * inv_len[F1], F1), (Minv[c, 1] * inv_len[F2], F2)):
                row = flux.getrow(F)
                rows.extend([dof] * row.nnz)
                cols.extend(row.indices.tolist())
                vals.extend((w * row.data).tolist())
    return sp.csr_matrix((vals, (rows, cols)),
                         shape=(coarse_space.ndof, qoimap.fine_space.ndof))


def vector_prolongation(scalar_P: sp.spmatrix) -> sp.csr_matrix:
    """Blow a scalar nodal prolongation up to the interleaved 2-component
    dof layout."""
    return sp.kron(scalar_P, sp.identity(2), format="csr")


class ScalarLagrangeSpace:
    """Order-1 or order-2 Lagrange space on a TriMesh; order-2 edge dofs are
    indexed nv + facet."""

    def __init__(self, mesh: TriMesh, order: int):
        if order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        self.mesh = mesh
        self.order = order
        if order == 1:
            self.dof_points = mesh.vertices.copy()
        else:
            mids = 0.5 * (mesh.vertices[mesh.facets[:, 0]] + mesh.vertices[mesh.facets[:, 1]])
            self.dof_points = np.vstack([mesh.vertices, mids])
        self.ndof = self.dof_points.shape[0]
        self.element_facets = mesh.element_facet_table()

    def interpolate(self, f) -> np.ndarray:
        return np.asarray(f(self.dof_points[:, 0], self.dof_points[:, 1]), dtype=float)

    def eval_cellwise(self, coeffs: np.ndarray, elems: np.ndarray, bary: np.ndarray) -> np.ndarray:
        """Values at barycentric points `bary` (nq, 3) inside each listed
        element; returns (len(elems), nq)."""
        tri = self.mesh.triangles[elems]  # (ne, 3)
        lam = bary.T  # (3, nq)
        nodal = coeffs[tri]  # (ne, 3)
        if self.order == 1:
            return nodal @ lam
        vertex_basis = lam * (2.0 * lam - 1.0)  # (3, nq)
        out = nodal @ vertex_basis
        edge = coeffs[self.mesh.n_vertices + self.element_facets[elems]]  # (ne, 3): edges (01, 12, 20)
        for k in range(3):
            out += edge[:, k][:, None] * (4.0 * lam[k] * lam[(k + 1) % 3])[None, :]
        return out


def interpolate_rhs(f, Y: ScalarLagrangeSpace) -> np.ndarray:
    """Nodal interpolant of an analytic load onto Y."""
    return Y.interpolate(f)
