import numpy as np
import pytest

from ndlod import CoeffSet, MeshHierarchy
from ndlod.lod import Discretization


@pytest.fixture(scope="session")
def hierarchy():
    return MeshHierarchy(6)


@pytest.fixture(scope="session")
def identity_coeffs():
    return CoeffSet.identity()


@pytest.fixture(scope="session")
def paper_coeffs_small():
    return CoeffSet.multiscale(seed=7, eps_exp=3)


@pytest.fixture(scope="session")
def disc_small(hierarchy, paper_coeffs_small):
    """Mini problem: H = 2^-1, h = 2^-4, eps = 2^-3."""
    return Discretization(hierarchy, 1, 4, paper_coeffs_small, sigma=1.0)


@pytest.fixture(scope="session")
def disc_identity(hierarchy, identity_coeffs):
    return Discretization(hierarchy, 1, 4, identity_coeffs, sigma=1.0)


def random_conforming(disc, rng):
    return disc.space.conform(rng.standard_normal(disc.space.ndof))


def random_w(disc, rng):
    from ndlod import strip_coarse_fluxes

    return strip_coarse_fluxes(disc, random_conforming(disc, rng))


def eoc(errors, hs):
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    return np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:])
