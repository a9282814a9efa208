"""Element-level assembly kernels.

The two inner loops that dominate assembly time -- the 6x6 element matrices
of the stabilized bilinear form and the quadrature loads -- are provided in
two variants: a numba @njit version (default) and a pure-numpy vectorized
version.  Set NDLOD_NUMBA=0 to force the numpy path; `backend()` reports
which one is active.  benchmarks/bench_kernels.py compares the two.

Element data layout per fine triangle e:
  coeff_A[e] = (a11, a12, a22), coeff_b[e] = (b1, b2), constant on e.
Local dof i in 0..5 is (vertex k = i // 2, component c = i % 2) of the P1
vector element; its Jacobian contribution is A grad(lambda_k) row c and its
rot contribution is +grad_y (c = 0) or -grad_x (c = 1).
"""

from __future__ import annotations

import os

import numpy as np

_SQ15 = np.sqrt(15.0)
# degree-5, 7-point rule on the reference triangle (barycentric, weights sum to 1)
QUAD7_BARY = np.array(
    [
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        [(6.0 - _SQ15) / 21.0, (6.0 - _SQ15) / 21.0, (9.0 + 2.0 * _SQ15) / 21.0],
        [(6.0 - _SQ15) / 21.0, (9.0 + 2.0 * _SQ15) / 21.0, (6.0 - _SQ15) / 21.0],
        [(9.0 + 2.0 * _SQ15) / 21.0, (6.0 - _SQ15) / 21.0, (6.0 - _SQ15) / 21.0],
        [(6.0 + _SQ15) / 21.0, (6.0 + _SQ15) / 21.0, (9.0 - 2.0 * _SQ15) / 21.0],
        [(6.0 + _SQ15) / 21.0, (9.0 - 2.0 * _SQ15) / 21.0, (6.0 + _SQ15) / 21.0],
        [(9.0 - 2.0 * _SQ15) / 21.0, (6.0 + _SQ15) / 21.0, (6.0 + _SQ15) / 21.0],
    ]
)
QUAD7_W = np.array(
    [
        9.0 / 40.0,
        (155.0 - _SQ15) / 1200.0,
        (155.0 - _SQ15) / 1200.0,
        (155.0 - _SQ15) / 1200.0,
        (155.0 + _SQ15) / 1200.0,
        (155.0 + _SQ15) / 1200.0,
        (155.0 + _SQ15) / 1200.0,
    ]
)
# edge-midpoint rule, exact for quadratics
QUAD3_BARY = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
QUAD3_W = np.array([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0])


def _element_a_numpy(grads, areas, coeff_A, coeff_b, sigma):
    """(nt, 6, 6) element matrices of
    (A:Dpsi + b.psi, A:Dphi + b.phi)_T + sigma (rot psi, rot phi)_T."""
    nt = areas.shape[0]
    a11, a12, a22 = coeff_A[:, 0], coeff_A[:, 1], coeff_A[:, 2]
    # Agrad[e, k, c] = (A grad lambda_k)_c
    Agrad = np.empty((nt, 3, 2))
    Agrad[:, :, 0] = a11[:, None] * grads[:, :, 0] + a12[:, None] * grads[:, :, 1]
    Agrad[:, :, 1] = a12[:, None] * grads[:, :, 0] + a22[:, None] * grads[:, :, 1]

    # g[e, q, i]: value of A:Dphi_i + b.phi_i at quadrature point q
    lam = QUAD3_BARY  # (3q, 3k)
    g = np.empty((nt, 3, 6))
    for k in range(3):
        for c in range(2):
            g[:, :, 2 * k + c] = Agrad[:, None, k, c] + coeff_b[:, None, c] * lam[None, :, k]
    M = np.einsum("q,eqi,eqj->eij", QUAD3_W, g, g) * areas[:, None, None]

    rot = np.empty((nt, 6))
    rot[:, 0::2] = grads[:, :, 1]
    rot[:, 1::2] = -grads[:, :, 0]
    M += sigma * areas[:, None, None] * rot[:, :, None] * rot[:, None, :]
    return M


def _element_load_numpy(grads, areas, coeff_A, coeff_b, fq):
    """(nt, 6) loads of (f, A:Dphi_i + b.phi_i)_T given f at the 7-point rule,
    fq shape (nt, 7)."""
    nt = areas.shape[0]
    a11, a12, a22 = coeff_A[:, 0], coeff_A[:, 1], coeff_A[:, 2]
    Agrad = np.empty((nt, 3, 2))
    Agrad[:, :, 0] = a11[:, None] * grads[:, :, 0] + a12[:, None] * grads[:, :, 1]
    Agrad[:, :, 1] = a12[:, None] * grads[:, :, 0] + a22[:, None] * grads[:, :, 1]
    lam = QUAD7_BARY  # (7, 3)
    out = np.empty((nt, 6))
    wf = QUAD7_W[None, :] * fq  # (nt, 7)
    for k in range(3):
        for c in range(2):
            gi = Agrad[:, None, k, c] + coeff_b[:, None, c] * lam[None, :, k]
            out[:, 2 * k + c] = (wf * gi).sum(axis=1)
    return out * areas[:, None]


def _make_numba_kernels():
    from numba import njit

    @njit(cache=True, fastmath=False)
    def element_a(grads, areas, coeff_A, coeff_b, sigma):
        nt = areas.shape[0]
        lam = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        M = np.zeros((nt, 6, 6))
        g = np.empty(6)
        rot = np.empty(6)
        for e in range(nt):
            a11 = coeff_A[e, 0]
            a12 = coeff_A[e, 1]
            a22 = coeff_A[e, 2]
            for k in range(3):
                gx = grads[e, k, 0]
                gy = grads[e, k, 1]
                rot[2 * k] = gy
                rot[2 * k + 1] = -gx
            w = areas[e] / 3.0
            for q in range(3):
                for k in range(3):
                    gx = grads[e, k, 0]
                    gy = grads[e, k, 1]
                    g[2 * k] = a11 * gx + a12 * gy + coeff_b[e, 0] * lam[q, k]
                    g[2 * k + 1] = a12 * gx + a22 * gy + coeff_b[e, 1] * lam[q, k]
                for i in range(6):
                    for j in range(6):
                        M[e, i, j] += w * g[i] * g[j]
            for i in range(6):
                for j in range(6):
                    M[e, i, j] += sigma * areas[e] * rot[i] * rot[j]
        return M

    @njit(cache=True, fastmath=False)
    def element_load(grads, areas, coeff_A, coeff_b, fq, lam, weights):
        nt = areas.shape[0]
        nq = weights.shape[0]
        out = np.zeros((nt, 6))
        for e in range(nt):
            a11 = coeff_A[e, 0]
            a12 = coeff_A[e, 1]
            a22 = coeff_A[e, 2]
            for q in range(nq):
                wf = weights[q] * fq[e, q] * areas[e]
                for k in range(3):
                    gx = grads[e, k, 0]
                    gy = grads[e, k, 1]
                    out[e, 2 * k] += wf * (a11 * gx + a12 * gy + coeff_b[e, 0] * lam[q, k])
                    out[e, 2 * k + 1] += wf * (a12 * gx + a22 * gy + coeff_b[e, 1] * lam[q, k])
        return out

    return element_a, element_load


_use_numba = os.environ.get("NDLOD_NUMBA", "1") not in ("0", "false", "no")
if _use_numba:
    try:
        _element_a_numba, _element_load_numba = _make_numba_kernels()
    except ImportError:
        _use_numba = False


def backend() -> str:
    return "numba" if _use_numba else "numpy"


def element_a(grads, areas, coeff_A, coeff_b, sigma):
    if _use_numba:
        return _element_a_numba(grads, areas, coeff_A, coeff_b, float(sigma))
    return _element_a_numpy(grads, areas, coeff_A, coeff_b, float(sigma))


def element_load(grads, areas, coeff_A, coeff_b, fq):
    if _use_numba:
        return _element_load_numba(grads, areas, coeff_A, coeff_b, fq, QUAD7_BARY, QUAD7_W)
    return _element_load_numpy(grads, areas, coeff_A, coeff_b, fq)


def quad_points(vertices_of_triangles: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Physical quadrature points, shape (nt, nq, 2), from (nt, 3, 2) corners."""
    return np.einsum("qk,ekx->eqx", bary, vertices_of_triangles)
