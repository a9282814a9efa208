"""Assembly of the stabilized bilinear form, constraint forms, loads, and
norm evaluators on a P1 vector space.

The bilinear form is

  a(psi, phi) = (A:Dpsi + b.psi, A:Dphi + b.phi)_L2 + sigma (rot psi, rot phi)_L2,

with rot(psi) = d2 psi_1 - d1 psi_2.  Coefficients are evaluated once per
fine triangle at its centroid, which is exact when every fine triangle lies
inside a single coefficient cell (h <= eps); all element integrals are then
polynomial and integrated exactly (edge-midpoint rule for the quadratic
products, degree-5 rule for analytic loads).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from . import kernels
from .coeffs import CoeffSet
from .fespace import ScalarLagrangeSpace, VectorFESpace


def _check_alignment(space: VectorFESpace, coeffs: CoeffSet):
    # each fine triangle must sit inside one coefficient cell; for the nested
    # dyadic meshes this holds iff the fine square side divides the cell size
    h_square = space.mesh.H / np.sqrt(2.0)
    if h_square > coeffs.epsilon + 1e-12:
        raise ValueError(
            f"fine mesh (h = {h_square:g}) does not resolve the coefficient "
            f"grid (eps = {coeffs.epsilon:g})"
        )


def _element_coeffs(space: VectorFESpace, coeffs: CoeffSet, elems=None):
    mesh = space.mesh
    pts = mesh.centroids if elems is None else mesh.centroids[elems]
    A, b = coeffs.eval_at_many(pts)
    cA = np.stack([A[:, 0, 0], A[:, 0, 1], A[:, 1, 1]], axis=1)
    return np.ascontiguousarray(cA), np.ascontiguousarray(b)


def _local_dofs(mesh, elems=None):
    tri = mesh.triangles if elems is None else mesh.triangles[elems]
    dofs = np.empty((tri.shape[0], 6), dtype=np.int64)
    dofs[:, 0::2] = 2 * tri
    dofs[:, 1::2] = 2 * tri + 1
    return dofs


def assemble_a(space: VectorFESpace, coeffs: CoeffSet, sigma: float,
               elements=None) -> sp.csr_matrix:
    """Matrix of the stabilized form on all dofs; `elements` restricts the
    integration domain (used for the element-local forms a_T)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    _check_alignment(space, coeffs)
    mesh = space.mesh
    elems = None if elements is None else np.asarray(elements, dtype=np.int64)
    grads = mesh.grads if elems is None else mesh.grads[elems]
    areas = mesh.areas if elems is None else mesh.areas[elems]
    cA, cb = _element_coeffs(space, coeffs, elems)
    M = kernels.element_a(grads, areas, cA, cb, sigma)
    dofs = _local_dofs(mesh, elems)
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    mat = sp.csr_matrix((M.ravel(), (rows, cols)), shape=(space.ndof, space.ndof))
    mat.sum_duplicates()
    return mat


def assemble_load(space: VectorFESpace, f, coeffs: CoeffSet,
                  elements=None) -> np.ndarray:
    """Load vector of phi -> (f, A:Dphi + b.phi) for an analytic f, degree-5
    quadrature per fine triangle."""
    _check_alignment(space, coeffs)
    mesh = space.mesh
    elems = None if elements is None else np.asarray(elements, dtype=np.int64)
    grads = mesh.grads if elems is None else mesh.grads[elems]
    areas = mesh.areas if elems is None else mesh.areas[elems]
    tri = mesh.triangles if elems is None else mesh.triangles[elems]
    cA, cb = _element_coeffs(space, coeffs, elems)
    pts = kernels.quad_points(mesh.vertices[tri], kernels.QUAD7_BARY)
    fq = np.asarray(f(pts[:, :, 0], pts[:, :, 1]), dtype=float)
    loads = kernels.element_load(grads, areas, cA, cb, fq)
    out = np.zeros(space.ndof)
    np.add.at(out, _local_dofs(mesh, elems).ravel(), loads.ravel())
    return out


def assemble_load_yh(space: VectorFESpace, Y: ScalarLagrangeSpace,
                     y_coeffs: np.ndarray, coeffs: CoeffSet,
                     coarse_elements, ancestors: np.ndarray,
                     fine_elements_of=None) -> np.ndarray:
    """Load vector of w -> (y_H, A:Dw + b.w) integrated over the fine
    triangles whose coarse ancestor lies in `coarse_elements`."""
    _check_alignment(space, coeffs)
    mesh = space.mesh
    coarse_elements = np.asarray(coarse_elements, dtype=np.int64)
    if fine_elements_of is not None:
        elems = np.concatenate([fine_elements_of[T] for T in coarse_elements])
    else:
        elems = np.flatnonzero(np.isin(ancestors, coarse_elements))
    if elems.size == 0:
        return np.zeros(space.ndof)
    grads = mesh.grads[elems]
    areas = mesh.areas[elems]
    cA, cb = _element_coeffs(space, coeffs, elems)

    # y_H at the fine quadrature points, through coarse barycentric coordinates
    pts = kernels.quad_points(mesh.vertices[mesh.triangles[elems]], kernels.QUAD7_BARY)
    anc = ancestors[elems]
    corners = Y.mesh.vertices[Y.mesh.triangles[anc]]  # (ne, 3, 2)
    M = np.concatenate([corners.transpose(0, 2, 1), np.ones((elems.size, 1, 3))], axis=1)
    Minv = np.linalg.inv(M)  # (ne, 3, 3)
    ones = np.ones(pts.shape[:2] + (1,))
    rhs = np.concatenate([pts, ones], axis=2)  # (ne, nq, 3)
    lam = np.einsum("eij,eqj->eqi", Minv, rhs)  # coarse barycentric per point
    yq = _eval_scalar(Y, y_coeffs, anc, lam)
    loads = kernels.element_load(grads, areas, cA, cb, yq)
    out = np.zeros(space.ndof)
    np.add.at(out, _local_dofs(mesh, elems).ravel(), loads.ravel())
    return out


def _eval_scalar(Y: ScalarLagrangeSpace, coeffs: np.ndarray, elems: np.ndarray,
                 lam: np.ndarray) -> np.ndarray:
    """Scalar space values at per-element barycentric points (ne, nq, 3)."""
    nodal = coeffs[Y.mesh.triangles[elems]]  # (ne, 3)
    if Y.order == 1:
        return np.einsum("ek,eqk->eq", nodal, lam)
    out = np.einsum("ek,eqk->eq", nodal, lam * (2.0 * lam - 1.0))
    edge = coeffs[Y.mesh.n_vertices + Y.element_facets[elems]]
    for k in range(3):
        out += edge[:, k][:, None] * 4.0 * lam[:, :, k] * lam[:, :, (k + 1) % 3]
    return out


def assemble_b(qoimap, facet_ids=None) -> sp.csr_matrix:
    """Constraint matrix: one QoI row per multiplier facet."""
    if facet_ids is None:
        return qoimap.matrix
    return qoimap.matrix[np.asarray(facet_ids, dtype=np.int64)]


def element_facet_weights(coarse_mesh, T: int):
    """Facets of dT with the sharing weights 1/N(F)."""
    fids = coarse_mesh.triangle_facets(T)
    nshare = (coarse_mesh.facet_to_elements[fids] >= 0).sum(axis=1)
    return fids, 1.0 / nshare


def assemble_b_element(qoimap, coarse_mesh, T: int) -> sp.csr_matrix:
    """Element-weighted constraint form b_T: QoI rows of the facets of dT
    scaled by 1/N(F), all other rows zero."""
    fids, w = element_facet_weights(coarse_mesh, T)
    D = sp.csr_matrix(
        (w, (fids, fids)), shape=(coarse_mesh.n_facets, coarse_mesh.n_facets)
    )
    return D @ qoimap.matrix


def mass_matrix(space: VectorFESpace) -> sp.csr_matrix:
    """Exact P1 vector mass matrix."""
    mesh = space.mesh
    nt = mesh.n_triangles
    scalar = np.full((3, 3), 1.0 / 12.0)
    np.fill_diagonal(scalar, 1.0 / 6.0)
    M = np.zeros((nt, 6, 6))
    for c in range(2):
        M[:, c::2, c::2] = mesh.areas[:, None, None] * scalar[None, :, :]
    dofs = _local_dofs(mesh)
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    mat = sp.csr_matrix((M.ravel(), (rows, cols)), shape=(space.ndof, space.ndof))
    mat.sum_duplicates()
    return mat


def gradient_tables(space: VectorFESpace, v: np.ndarray) -> np.ndarray:
    """(nt, 2, 2) Jacobians D[v] per element, (Dv)_{cj} = d_j v_c."""
    mesh = space.mesh
    vv = v.reshape(-1, 2)[mesh.triangles]  # (nt, 3, 2)
    return np.einsum("tkc,tkj->tcj", vv, mesh.grads)


def norms(space: VectorFESpace, v: np.ndarray, amat: sp.spmatrix | None = None,
          mmat: sp.spmatrix | None = None) -> dict:
    """L2, H1-seminorm, divergence, rotation, and (optionally) energy norms."""
    mesh = space.mesh
    D = gradient_tables(space, v)
    h1 = float(np.sqrt((mesh.areas[:, None, None] * D**2).sum()))
    div = D[:, 0, 0] + D[:, 1, 1]
    rot = D[:, 0, 1] - D[:, 1, 0]
    out = {
        "h1_semi": h1,
        "div_l2": float(np.sqrt((mesh.areas * div**2).sum())),
        "rot_l2": float(np.sqrt((mesh.areas * rot**2).sum())),
    }
    if mmat is None:
        mmat = mass_matrix(space)
    out["l2"] = float(np.sqrt(max(v @ (mmat @ v), 0.0)))
    if amat is not None:
        out["energy"] = float(np.sqrt(max(v @ (amat @ v), 0.0)))
    return out
