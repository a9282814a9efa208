"""Recovery of the scalar solution from the gradient approximation.

The scalar unknown solves the Poisson problem whose source is the divergence
of the recovered gradient field; its P1 Galerkin form reads

    int grad(u) . grad(v) = int z . grad(v)   for all P1 v vanishing on the
                                              boundary,

which moves the divergence off z by integration by parts, so the piecewise
linear field is never differentiated.  Any hierarchy level not finer than
the carrier of z is an admissible recovery mesh.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import MeshHierarchy, TriMesh


class ScalarPoissonSpace:
    """P1 space with homogeneous Dirichlet constraints on all boundary
    vertices."""

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        self.interior = np.flatnonzero(~mesh.boundary_vertices)

    def stiffness(self) -> sp.csr_matrix:
        """Full P1 Laplacian (constraints applied at solve time)."""
        mesh = self.mesh
        local = np.einsum("tkj,tlj->tkl", mesh.grads, mesh.grads) * mesh.areas[:, None, None]
        return self._scatter(local)

    def mass(self) -> sp.csr_matrix:
        """Exact P1 mass matrix."""
        mesh = self.mesh
        local = np.full((3, 3), 1.0 / 12.0)
        np.fill_diagonal(local, 1.0 / 6.0)
        return self._scatter(mesh.areas[:, None, None] * local[None])

    def _scatter(self, local: np.ndarray) -> sp.csr_matrix:
        mesh = self.mesh
        rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
        cols = np.tile(mesh.triangles, (1, 3)).ravel()
        K = sp.csr_matrix((local.reshape(mesh.n_triangles, 9).ravel(), (rows, cols)),
                          shape=(mesh.n_vertices, mesh.n_vertices))
        K.sum_duplicates()
        return K


def recover_u(hierarchy: MeshHierarchy, fine_level: int, recovery_level: int,
              z_full: np.ndarray) -> np.ndarray:
    """Nodal values of the recovered scalar on the recovery mesh.

    z_full is a P1 vector field on the fine level; the right-hand side
    integrates z against the constant gradients of the recovery hats exactly
    (z is linear per fine element).
    """
    if recovery_level > fine_level:
        raise ValueError("recovery mesh must not be finer than the carrier of z")
    rmesh = hierarchy.levels[recovery_level]
    fmesh = hierarchy.levels[fine_level]
    anc = hierarchy.triangle_ancestors(recovery_level, fine_level)
    space = ScalarPoissonSpace(rmesh)

    zz = z_full.reshape(-1, 2)[fmesh.triangles].mean(axis=1)  # (nt_fine, 2), centroid values
    rhs = np.zeros(rmesh.n_vertices)
    contrib = np.einsum("ec,ekc->ek", zz * fmesh.areas[:, None], rmesh.grads[anc])
    np.add.at(rhs, rmesh.triangles[anc].ravel(), contrib.ravel())

    K = space.stiffness()
    idx = space.interior
    u = np.zeros(rmesh.n_vertices)
    if idx.size:
        u[idx] = spla.spsolve(K[idx][:, idx].tocsc(), rhs[idx])
    return u


def scalar_l2_error(mesh: TriMesh, nodal: np.ndarray, exact, bary, weights) -> float:
    """Quadrature L2 distance between a P1 field and an analytic function."""
    pts = np.einsum("qk,ekx->eqx", bary, mesh.vertices[mesh.triangles])
    approx = np.einsum("ek,qk->eq", nodal[mesh.triangles], bary)
    diff2 = (approx - exact(pts[:, :, 0], pts[:, :, 1])) ** 2
    return float(np.sqrt((mesh.areas[:, None] * weights[None, :] * diff2).sum()))
