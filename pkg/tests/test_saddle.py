import numpy as np
import pytest
import scipy.sparse as sp

from conftest import random_conforming, random_w
from ndlod.saddle import SaddleSolveError, SaddleSystem


def _system(disc):
    free = disc.space.free_dofs
    return SaddleSystem(disc.A_free, disc.B_free, "test"), free


def test_zero_rhs_gives_zero(disc_small):
    sys, free = _system(disc_small)
    x, lam = sys.solve(np.zeros(sys.n), np.zeros(sys.m))
    assert not x.any() and not lam.any()


def test_constraint_feasibility(disc_small):
    disc = disc_small
    sys, free = _system(disc)
    rng = np.random.default_rng(0)
    vbar = random_conforming(disc, rng)
    g = disc.qoimap.matrix @ vbar
    x, _ = sys.solve(np.zeros(sys.n), g)
    qois = disc.B_free @ x
    assert np.abs(qois - g).max() < 1e-10 * max(1.0, np.abs(g).max())


def test_global_projection_defining_equations(disc_small):
    disc = disc_small
    rng = np.random.default_rng(1)
    F = 7
    rho = disc.bubbles[:, F].toarray().ravel()
    Rrho = disc.global_projection(rho)
    # R rho - rho has vanishing coarse fluxes
    assert np.abs(disc.qoimap.matrix @ (Rrho - rho)).max() < 1e-10
    # a(R rho, w) = 0 against 50 fine-scale samples
    for _ in range(50):
        w = random_w(disc, rng)
        num = abs(w @ (disc.A_full @ Rrho))
        den = disc.energy_norm(w) * disc.energy_norm(Rrho)
        assert num < 1e-9 * den


def test_constrained_solve_in_w(disc_small):
    disc = disc_small
    sys, free = _system(disc)
    rng = np.random.default_rng(2)
    rhs_full = rng.standard_normal(disc.space.ndof)
    x, _ = sys.solve(rhs_full[free], None)
    q = disc.space.extend(x)
    assert np.abs(disc.qoimap.matrix @ q).max() < 1e-10
    # Galerkin optimality in the constrained space
    for _ in range(50):
        w = random_w(disc, rng)
        res = w @ (disc.A_full @ q) - w[free] @ rhs_full[free]
        assert abs(res) < 1e-9 * max(1.0, disc.energy_norm(w) * np.linalg.norm(rhs_full))


def test_saturating_patch_reproduces_global(disc_small):
    disc = disc_small
    patch = disc.patch(0, None)
    assert patch.saturated
    sys, pdofs, active = disc.patch_system(patch)
    assert pdofs.size == disc.space.n_free
    assert active.size == disc.coarse.n_facets
    rng = np.random.default_rng(3)
    v = random_conforming(disc, rng)
    x, _ = sys.solve(np.zeros(pdofs.size), disc.qoimap.matrix[active] @ v)
    direct = disc.global_projection(v)
    e = disc.space.extend(x) - direct
    assert disc.energy_norm(e) < 1e-9 * max(1.0, disc.energy_norm(direct))


def test_singular_system_reported():
    A = sp.identity(4, format="csr")
    B = sp.csr_matrix(np.array([[1.0, 0, 0, 0], [1.0, 0, 0, 0]]))  # redundant rows
    with pytest.raises(SaddleSolveError):
        sys = SaddleSystem(A, B, "redundant")
        sys.solve(np.ones(4), np.zeros(2))


def test_residual_context_in_message():
    A = sp.identity(3, format="csr")
    B = sp.csr_matrix(np.zeros((1, 3)))
    with pytest.raises(SaddleSolveError, match="ctx-tag"):
        SaddleSystem(A, B, "ctx-tag").solve(np.ones(3), np.ones(1))
