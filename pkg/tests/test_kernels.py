import numpy as np
import pytest

from ndlod import kernels


@pytest.fixture(scope="module")
def random_element_data():
    rng = np.random.default_rng(0)
    nt = 400
    grads = rng.standard_normal((nt, 3, 2))
    areas = np.abs(rng.standard_normal(nt)) + 0.1
    cA = rng.standard_normal((nt, 3))
    cb = rng.standard_normal((nt, 2))
    fq = rng.standard_normal((nt, 7))
    return grads, areas, cA, cb, fq


def test_quadrature_rules_consistent():
    assert abs(kernels.QUAD7_W.sum() - 1.0) < 1e-15
    assert np.abs(kernels.QUAD7_BARY.sum(axis=1) - 1.0).max() < 1e-15
    assert abs(kernels.QUAD3_W.sum() - 1.0) < 1e-15


def test_numba_and_numpy_agree_element_a(random_element_data):
    grads, areas, cA, cb, _ = random_element_data
    a_np = kernels._element_a_numpy(grads, areas, cA, cb, 1.7)
    a = kernels.element_a(grads, areas, cA, cb, 1.7)
    assert np.abs(a - a_np).max() < 1e-12


def test_numba_and_numpy_agree_load(random_element_data):
    grads, areas, cA, cb, fq = random_element_data
    l_np = kernels._element_load_numpy(grads, areas, cA, cb, fq)
    l = kernels.element_load(grads, areas, cA, cb, fq)
    assert np.abs(l - l_np).max() < 1e-12


def test_element_a_symmetric(random_element_data):
    grads, areas, cA, cb, _ = random_element_data
    a = kernels.element_a(grads, areas, cA, cb, 0.3)
    assert np.abs(a - a.transpose(0, 2, 1)).max() < 1e-13


def test_numpy_fallback_env_flag():
    import subprocess
    import sys

    out = subprocess.run(
        [sys.executable, "-c", "from ndlod import kernels; print(kernels.backend())"],
        capture_output=True, text=True, env={"NDLOD_NUMBA": "0", "PATH": "/usr/bin:/bin"},
    )
    assert out.stdout.strip() == "numpy"
