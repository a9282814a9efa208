"""Multiscale engine: localized correctors, the problem-adapted basis, the
coarse Galerkin solve, and the post-processing correction.

The basis functions are phi_F = I_H rho_F - sum_T K_T rho_F, where each K_T
solves a saddle-point problem on the ell-th order patch around T with the
element-restricted operator data on the primal side and the element-shared
facet fluxes on the constraint side.  Post-processing adds the fine-scale
correction driven by the order-p interpolant of the load, solved per element
on the same patches with the constraint right-hand side zero.  Saturating
patches (the patch is the whole domain) realize the ideal method and serve
as the oracle for the localized one.
"""

from __future__ import annotations

import time
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly
from .coeffs import CoeffSet
from .fespace import (QoIMap, ScalarLagrangeSpace, VectorFESpace, build_bubbles,
                      interpolate_rhs, quasi_interpolation_matrix,
                      vector_prolongation)
from .mesh import MeshHierarchy, Patch, build_patch
from .saddle import SaddleSystem

RHS_SKIP_TOL = 1e-14


class Discretization:
    """Grids, spaces, and assembled operators shared by one coarse/fine pair.

    Couples a coarse level (carrying the multiplier facets) with a fine level
    (carrying the P1 vector space) of a mesh hierarchy.  Requires
    h <= min(eps, H/2): the fine mesh must resolve both the coefficient grid
    and the bubble construction.
    """

    def __init__(self, hierarchy: MeshHierarchy, coarse_level: int, fine_level: int,
                 coeffs: CoeffSet, sigma: float = 1.0, bubble_profile: str = "plateau"):
        if fine_level < coarse_level + 1:
            raise ValueError("fine level must refine the coarse level at least once")
        self.hierarchy = hierarchy
        self.coarse_level = coarse_level
        self.fine_level = fine_level
        self.coeffs = coeffs
        self.sigma = float(sigma)
        self.coarse = hierarchy.levels[coarse_level]
        self.fine = hierarchy.levels[fine_level]
        self.space = VectorFESpace(self.fine)
        self.coarse_space = VectorFESpace(self.coarse)
        self.tiling = hierarchy.facet_tiling(coarse_level, fine_level)
        self.ancestors = hierarchy.triangle_ancestors(coarse_level, fine_level)

        order = np.argsort(self.ancestors, kind="stable")
        bounds = np.searchsorted(self.ancestors[order], np.arange(self.coarse.n_triangles + 1))
        self.fine_elements_of = [order[bounds[t]:bounds[t + 1]]
                                 for t in range(self.coarse.n_triangles)]

        self.qoimap = QoIMap(self.space, self.coarse, self.tiling)
        self.A_full = assembly.assemble_a(self.space, coeffs, sigma)
        self.M_full = assembly.mass_matrix(self.space)
        free = self.space.free_dofs
        self.A_free = self.A_full[free][:, free].tocsr()
        self.B_free = self.qoimap.matrix[:, free].tocsr()

        self.bubble_profile = bubble_profile
        self.bubbles = build_bubbles(self.space, self.coarse, self.tiling,
                                     self.ancestors, self.qoimap, bubble_profile)
        self.IH_coarse = quasi_interpolation_matrix(self.coarse_space, self.qoimap)
        self.P_vec = vector_prolongation(hierarchy.prolongation(coarse_level, fine_level))
        self.IH_fine = (self.P_vec @ self.IH_coarse).tocsr()

        self.element_a = [assembly.assemble_a(self.space, coeffs, sigma,
                                              elements=self.fine_elements_of[t])
                          for t in range(self.coarse.n_triangles)]

        nv, nt = self.fine.n_vertices, self.fine.n_triangles
        ones = np.ones(3 * nt)
        self._vinc = sp.csr_matrix(
            (ones, (self.fine.triangles.ravel(), np.repeat(np.arange(nt), 3))),
            shape=(nv, nt))
        self._vinc_total = np.asarray(self._vinc.sum(axis=1)).ravel()
        self._coarse_vinc = self.coarse.vertex_to_triangles()
        self._system_cache: OrderedDict = OrderedDict()
        self._fine_lu = None
        self._coarse_efacets = self.coarse.element_facet_table()
        f2e = self.coarse.facet_to_elements
        self._facet_weight = 1.0 / (f2e >= 0).sum(axis=1)

    # -- norms ------------------------------------------------------------

    def energy_norm(self, v: np.ndarray) -> float:
        return float(np.sqrt(max(v @ (self.A_full @ v), 0.0)))

    def l2_norm(self, v: np.ndarray) -> float:
        return float(np.sqrt(max(v @ (self.M_full @ v), 0.0)))

    # -- patches ----------------------------------------------------------

    def saturating_ell(self) -> int:
        return self.coarse.n_triangles

    def patch(self, T: int, ell: int | None) -> Patch:
        if ell is None:
            ell = self.saturating_ell()
        return build_patch(self.coarse, T, ell, self._coarse_vinc)

    def patch_dofs(self, patch: Patch) -> np.ndarray:
        """Free fine dofs at vertices all of whose incident elements lie in
        the patch (the discrete fields vanishing outside it)."""
        in_patch = np.zeros(self.coarse.n_triangles, dtype=bool)
        in_patch[patch.elements] = True
        counts = self._vinc @ in_patch[self.ancestors].astype(float)
        verts = np.flatnonzero(counts == self._vinc_total)
        dofs = np.empty(2 * verts.size, dtype=np.int64)
        dofs[0::2] = 2 * verts
        dofs[1::2] = 2 * verts + 1
        return dofs[~self.space.constrained[dofs]]

    def patch_system(self, patch: Patch, context: str = ""):
        """(SaddleSystem, patch dofs, active facets), deduplicated across
        identical patches (all saturating patches share one factorization)."""
        key = (patch.elements.tobytes(), patch.active_facets.tobytes())
        hit = self._system_cache.get(key)
        if hit is not None:
            self._system_cache.move_to_end(key)
            return hit
        pdofs = self.patch_dofs(patch)
        active = patch.active_facets
        A = self.A_full[pdofs][:, pdofs]
        B = self.qoimap.matrix[active][:, pdofs]
        sys = SaddleSystem(A, B, context or f"patch(T={patch.center}, ell={patch.order})")
        self._system_cache[key] = (sys, pdofs, active)
        while len(self._system_cache) > 2:
            self._system_cache.popitem(last=False)
        return sys, pdofs, active

    # -- global (oracle) solves --------------------------------------------

    def _global_saddle(self) -> tuple[SaddleSystem, np.ndarray, np.ndarray]:
        patch = self.patch(0, None)
        return self.patch_system(patch, context="global saddle")

    def global_projection(self, v: np.ndarray) -> np.ndarray:
        """The energy-orthogonal projection onto the ideal multiscale space
        by the full-domain saddle solve: a(Rv, w) + b(w, lam) = 0,
        b(Rv, mu) = b(v, mu)."""
        sys, pdofs, active = self._global_saddle()
        x, _ = sys.solve(np.zeros(pdofs.size), self.qoimap.matrix[active] @ v)
        out = np.zeros(self.space.ndof)
        out[pdofs] = x
        return out

    def global_corrector_Q(self, rhs_full: np.ndarray) -> np.ndarray:
        """Constrained solve in the fine-scale space: a(q, w) = rhs(w) for
        all w with vanishing coarse fluxes; all QoIs of q are zero."""
        sys, pdofs, _ = self._global_saddle()
        x, _ = sys.solve(rhs_full[pdofs], None)
        out = np.zeros(self.space.ndof)
        out[pdofs] = x
        return out

    def solve_fine(self, f) -> np.ndarray:
        """Reference solution of the stabilized problem on the fine space."""
        if self._fine_lu is None:
            self._fine_lu = spla.splu(self.A_free.tocsc())
        load = assembly.assemble_load(self.space, f, self.coeffs)
        x = self._fine_lu.solve(load[self.space.free_dofs])
        return self.space.extend(x)

    # -- corrector right-hand sides ----------------------------------------

    def _k_rhs(self, T: int, v_interp: np.ndarray, qoi_defect: np.ndarray,
               pdofs: np.ndarray, active: np.ndarray):
        """Patch right-hand sides of the element corrector: a_T(I_H v, .) on
        the primal block and the 1/N(F)-weighted flux defect of v - I_H v on
        the facets of dT."""
        rhs_p = (self.element_a[T] @ v_interp)[pdofs]
        rhs_c = np.zeros(active.size)
        for F in self._coarse_efacets[T]:
            pos = np.searchsorted(active, F)
            if pos < active.size and active[pos] == F:
                rhs_c[pos] = -self._facet_weight[F] * qoi_defect[F]
        return rhs_p, rhs_c


def strip_coarse_fluxes(disc: Discretization, v: np.ndarray) -> np.ndarray:
    """v minus its bubble lift: the result has vanishing coarse fluxes, a
    convenient generator of fine-scale test fields."""
    return v - disc.bubbles @ (disc.qoimap.matrix @ v)


def corrector_K(disc: Discretization, T: int, ell: int | None, v_full: np.ndarray,
                v_interp: np.ndarray | None = None) -> np.ndarray:
    """Element corrector K_T^ell applied to v, extended by zero outside the
    patch."""
    if v_interp is None:
        v_interp = disc.IH_fine @ v_full
    patch = disc.patch(T, ell)
    sys, pdofs, active = disc.patch_system(patch)
    qoi_defect = disc.qoimap.matrix @ (v_full - v_interp)
    rhs_p, rhs_c = disc._k_rhs(T, v_interp, qoi_defect, pdofs, active)
    out = np.zeros(disc.space.ndof)
    if max(np.linalg.norm(rhs_p), np.linalg.norm(rhs_c)) <= RHS_SKIP_TOL:
        return out
    x, _ = sys.solve(rhs_p, rhs_c)
    out[pdofs] = x
    return out


def corrector_Q(disc: Discretization, T: int, ell: int | None,
                Y: ScalarLagrangeSpace, y_coeffs: np.ndarray) -> np.ndarray:
    """Post-processing corrector Q_T^ell for the element-restricted load
    (y_H, A:Dw + b.w)_T; the output has vanishing coarse fluxes."""
    patch = disc.patch(T, ell)
    sys, pdofs, _ = disc.patch_system(patch)
    rhs_full = assembly.assemble_load_yh(disc.space, Y, y_coeffs, disc.coeffs,
                                         [T], disc.ancestors, disc.fine_elements_of)
    out = np.zeros(disc.space.ndof)
    if np.linalg.norm(rhs_full[pdofs]) <= RHS_SKIP_TOL:
        return out
    x, _ = sys.solve(rhs_full[pdofs], None)
    out[pdofs] = x
    return out


@dataclass
class MultiscaleBasis:
    """Problem-adapted basis, one function per coarse facet."""

    ell: int | None
    bubble_profile: str
    vectors: np.ndarray            # (n_facets, ndof_fine)
    gram: np.ndarray               # a(phi_F, phi_F')
    supports: list = field(repr=False, default=None)  # coarse elements per facet


@dataclass
class MultiscaleSolution:
    coarse_coeffs: np.ndarray
    z_tilde: np.ndarray
    z_hat: np.ndarray | None
    params: dict


def _basis_jobs(disc: Discretization):
    """Per coarse element, the facets whose corrector data can be nonzero
    there; the assembled right-hand sides are re-checked against the skip
    tolerance."""
    IH_rho_coarse = (disc.IH_coarse @ disc.bubbles).tocsc()
    defect = (disc.qoimap.matrix @ (disc.bubbles - disc.IH_fine @ disc.bubbles)).tocsc()
    indptr_v, indices_v = disc._coarse_vinc
    f2e = disc.coarse.facet_to_elements
    jobs: dict[int, list[int]] = {}
    supports: list[set] = []
    for F in range(disc.coarse.n_facets):
        col = IH_rho_coarse[:, F]
        verts = np.unique(col.indices // 2)
        cand = set()
        for z in verts:
            cand.update(indices_v[indptr_v[z]:indptr_v[z + 1]].tolist())
        dcol = defect[:, F]
        facets = dcol.indices[np.abs(dcol.data) > RHS_SKIP_TOL]
        for Fp in facets:
            cand.update(int(e) for e in f2e[Fp] if e >= 0)
        for T in cand:
            jobs.setdefault(int(T), []).append(F)
        supports.append(cand)
    return jobs, supports


def _corrector_sweep(disc: Discretization, ell: int | None,
                     facet_jobs: dict[int, list[int]] | None,
                     q_sources: list[tuple] | None):
    """One element-major pass: each patch is factorized once and reused for
    all basis correctors and post-processing loads attached to it."""
    ndof = disc.space.ndof
    k_sum = None
    if facet_jobs:
        k_sum = np.zeros((disc.coarse.n_facets, ndof))
        IH_rho = (disc.IH_fine @ disc.bubbles).toarray()
        defect = (disc.qoimap.matrix @ disc.bubbles).toarray() - disc.qoimap.matrix @ IH_rho
    q_out = {key: np.zeros(ndof) for key, _, _ in (q_sources or [])}

    elements = set(facet_jobs or ())
    if q_sources:
        elements.update(range(disc.coarse.n_triangles))
    for T in sorted(elements):
        patch = disc.patch(T, ell)
        sys, pdofs, active = disc.patch_system(patch)
        for F in (facet_jobs or {}).get(T, ()):
            rhs_p, rhs_c = disc._k_rhs(T, IH_rho[:, F], defect[:, F], pdofs, active)
            if max(np.linalg.norm(rhs_p), np.linalg.norm(rhs_c)) <= RHS_SKIP_TOL:
                continue
            x, _ = sys.solve(rhs_p, rhs_c)
            k_sum[F, pdofs] += x
        for key, Y, ycoef in q_sources or ():
            rhs_full = assembly.assemble_load_yh(
                disc.space, Y, ycoef, disc.coeffs, [T], disc.ancestors,
                disc.fine_elements_of)
            if np.linalg.norm(rhs_full[pdofs]) <= RHS_SKIP_TOL:
                continue
            x, _ = sys.solve(rhs_full[pdofs], None)
            q_out[key][pdofs] += x
    return k_sum, q_out


def _assemble_basis(disc, ell, k_sum, supports) -> MultiscaleBasis:
    vectors = np.asarray((disc.IH_fine @ disc.bubbles).todense()).T - k_sum
    gram = vectors @ (disc.A_full @ vectors.T)
    gram = 0.5 * (gram + gram.T)
    return MultiscaleBasis(ell=ell, bubble_profile=disc.bubble_profile,
                           vectors=vectors, gram=gram,
                           supports=[np.array(sorted(s), dtype=np.int64)
                                     for s in supports])


def build_basis(disc: Discretization, ell: int | None) -> MultiscaleBasis:
    """All localized basis functions phi_F = I_H rho_F - sum_T K_T^ell rho_F
    and their coarse stiffness matrix."""
    jobs, supports = _basis_jobs(disc)
    k_sum, _ = _corrector_sweep(disc, ell, jobs, None)
    return _assemble_basis(disc, ell, k_sum, supports)


def solve_multiscale(disc: Discretization, basis: MultiscaleBasis, f) -> MultiscaleSolution:
    """Galerkin solve in the multiscale space for the load functional
    (f, A:Dv + b.v)."""
    load = assembly.assemble_load(disc.space, f, disc.coeffs)
    rhs = basis.vectors @ load
    try:
        import scipy.linalg as sla

        c = sla.cho_solve(sla.cho_factor(basis.gram), rhs)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"coarse system singular (basis defect): {exc}") from exc
    z_tilde = basis.vectors.T @ c
    return MultiscaleSolution(
        coarse_coeffs=c, z_tilde=z_tilde, z_hat=None,
        params={"ell": basis.ell, "sigma": disc.sigma,
                "H_level": disc.coarse_level, "h_level": disc.fine_level,
                "coeffs": disc.coeffs.tag})


def postprocess(disc: Discretization, sol: MultiscaleSolution, f, p: int,
                ell: int | None = None) -> MultiscaleSolution:
    """Add the fine-scale correction driven by the order-p interpolant of f."""
    if ell is None:
        ell = sol.params.get("ell")
    Y = ScalarLagrangeSpace(disc.coarse, p)
    ycoef = interpolate_rhs(f, Y)
    _, q_out = _corrector_sweep(disc, ell, None, [("q", Y, ycoef)])
    return MultiscaleSolution(
        coarse_coeffs=sol.coarse_coeffs, z_tilde=sol.z_tilde,
        z_hat=sol.z_tilde + q_out["q"],
        params={**sol.params, "p": p, "ell_pp": ell})


def multiscale_solve(disc: Discretization, f, ell: int | None,
                     p_orders=(1, 2)) -> dict:
    """Full pipeline sharing one corrector sweep: basis, Galerkin solution,
    and the post-processed approximations for every requested order."""
    t0 = time.perf_counter()
    jobs, supports = _basis_jobs(disc)
    q_sources = []
    for p in p_orders:
        Y = ScalarLagrangeSpace(disc.coarse, p)
        q_sources.append((p, Y, interpolate_rhs(f, Y)))
    k_sum, q_out = _corrector_sweep(disc, ell, jobs, q_sources)
    basis = _assemble_basis(disc, ell, k_sum, supports)
    sol = solve_multiscale(disc, basis, f)
    z_hat = {p: sol.z_tilde + q_out[p] for p in p_orders}
    return {"basis": basis, "solution": sol, "z_hat": z_hat,
            "wall_time": time.perf_counter() - t0}
