"""Multiscale coefficient fields, the Cordes-type verifier, and the
renormalization function.

The experiment coefficients are piecewise constant on a Cartesian grid of
spacing eps = 2^-k: the off-diagonal diffusion entry and the first drift
component are iid uniform samples, overridden by a constant value on a
channel of cells whose midpoints lie within 4*eps of a parabola.  Randomness
comes from a self-contained xorshift64* generator (seeded via one splitmix64
scramble) so that identical inputs reproduce bit-identical fields on any
platform; the exact update rules are documented in the README.

The admissibility check is the pointwise bound

    (A:A + b.b) / tr(A)^2  <=  1 / (d - 1 + delta),   d = 2,

required to hold in every cell for some delta in (delta0, 1], where
delta0 = eta / (1 + C_P^2), eta = 1 iff the drift is nonzero, and C_P is the
Poincare constant of the tangential-trace space (pi on the unit square).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

_MASK64 = (1 << 64) - 1
COEFF_MAGIC = b"NDLODCF1"

#: Poincare constant of the tangential-trace space on the unit square.
DEFAULT_POINCARE = float(np.pi)


def _splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def uniform_sequence(seed: int, count: int) -> np.ndarray:
    """`count` doubles in [0, 1) from the xorshift64* stream for `seed`."""
    state = _splitmix64(seed & _MASK64)
    if state == 0:
        state = 0x9E3779B97F4A7C15
    out = np.empty(count)
    for i in range(count):
        state ^= state >> 12
        state = (state ^ (state << 25)) & _MASK64
        state ^= state >> 27
        out[i] = ((state * 0x2545F4914F6CDD1D) & _MASK64) >> 11
    return out * 2.0**-53


@dataclass(frozen=True)
class Parabola:
    """Channel curve y = curvature * (x - x_apex)^2 + y_apex."""

    curvature: float = 4.0
    x_apex: float = 0.5
    y_apex: float = 0.0

    def distance(self, points: np.ndarray) -> np.ndarray:
        """Euclidean distance from each point (n, 2) to the curve."""
        px = points[:, 0] - self.x_apex
        py = points[:, 1] - self.y_apex
        a = self.curvature
        if a == 0.0:
            return np.abs(py)
        # stationarity of the squared distance: 2 a^2 s^3 + (1 - 2 a py) s - px = 0
        p = (1.0 - 2.0 * a * py) / (2.0 * a * a)
        q = -px / (2.0 * a * a)
        roots = _cubic_real_roots(p, q)
        # polish (guards classification of near-threshold cells)
        for _ in range(2):
            f = roots**3 + p[:, None] * roots + q[:, None]
            df = 3.0 * roots**2 + p[:, None]
            roots = roots - np.where(np.isnan(roots), 0.0, f / df)
        d2 = (roots - px[:, None]) ** 2 + (a * roots**2 - py[:, None]) ** 2
        return np.sqrt(np.nanmin(d2, axis=1))


def _cubic_real_roots(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Real roots of s^3 + p s + q = 0, shape (n, 3), NaN-padded."""
    n = p.shape[0]
    roots = np.full((n, 3), np.nan)
    disc = -4.0 * p**3 - 27.0 * q**2
    three = disc > 0.0
    if np.any(three):
        pp, qq = p[three], q[three]
        m = 2.0 * np.sqrt(-pp / 3.0)
        arg = np.clip(3.0 * qq / (pp * m), -1.0, 1.0)
        theta = np.arccos(arg)
        for k in range(3):
            roots[three, k] = m * np.cos(theta / 3.0 - 2.0 * np.pi * k / 3.0)
    one = ~three
    if np.any(one):
        pp, qq = p[one], q[one]
        rad = np.sqrt(np.maximum((qq / 2.0) ** 2 + (pp / 3.0) ** 3, 0.0))
        roots[one, 0] = np.cbrt(-qq / 2.0 + rad) + np.cbrt(-qq / 2.0 - rad)
    return roots


@dataclass(frozen=True)
class CellField:
    """Piecewise-constant scalar field on the eps-Cartesian grid of the unit
    square; values are row-major with index j * n + i for cell (i, j)."""

    epsilon: float
    n: int
    values: np.ndarray
    seed: int = 0
    value_range: tuple[float, float] = (0.0, 0.0)
    channel_value: float | None = None
    channel: Parabola | None = None

    def __post_init__(self):
        if self.values.shape != (self.n * self.n,):
            raise ValueError("values must have length n^2")

    @staticmethod
    def constant(c: float) -> "CellField":
        return CellField(epsilon=1.0, n=1, values=np.array([float(c)]),
                         value_range=(float(c), float(c)))

    def cell_of(self, points: np.ndarray) -> np.ndarray:
        """Cell index per point; exact cell-boundary points belong to the
        lower-indexed cell."""
        pts = np.atleast_2d(points)
        if np.any(pts < 0.0) or np.any(pts > 1.0):
            raise ValueError("point outside the unit square")
        scaled = pts * self.n
        idx = np.floor(scaled).astype(np.int64)
        on_boundary = (scaled == idx) & (idx > 0)
        idx = np.where(on_boundary, idx - 1, idx)
        idx = np.minimum(idx, self.n - 1)
        return idx[:, 1] * self.n + idx[:, 0]

    def at(self, points: np.ndarray) -> np.ndarray:
        return self.values[self.cell_of(points)]

    def refined(self, n: int) -> np.ndarray:
        """Values replicated onto a finer n x n grid (n a multiple of self.n)."""
        if n % self.n:
            raise ValueError(f"grid {n} does not refine {self.n}")
        r = n // self.n
        grid = self.values.reshape(self.n, self.n)
        return np.repeat(np.repeat(grid, r, axis=0), r, axis=1).ravel()


def generate_field(seed: int, epsilon: float, value_range: tuple[float, float],
                   channel_value: float | None = None,
                   channel: Parabola | None = None) -> CellField:
    """iid uniform cell values in `value_range`, then the channel override on
    cells whose midpoints lie within 4*eps of the parabola."""
    n = round(1.0 / epsilon)
    if abs(n * epsilon - 1.0) > 1e-12 or n & (n - 1):
        raise ValueError("epsilon must be a power of 1/2")
    lo, hi = value_range
    if lo > hi:
        raise ValueError("empty value range")
    values = lo + (hi - lo) * uniform_sequence(seed, n * n)
    if channel_value is not None:
        if channel is None:
            channel = Parabola()
        i = np.arange(n)
        mx, my = np.meshgrid((i + 0.5) * epsilon, (i + 0.5) * epsilon)
        mids = np.stack([mx.ravel(), my.ravel()], axis=1)
        mask = channel.distance(mids) < 4.0 * epsilon
        values = np.where(mask, channel_value, values)
    return CellField(epsilon=epsilon, n=n, values=values, seed=seed,
                     value_range=(float(lo), float(hi)),
                     channel_value=channel_value, channel=channel)


_SQ11 = np.sqrt(11.0)
_SQ8 = np.sqrt(8.0)


@dataclass(frozen=True)
class CoeffSet:
    """Symmetric diffusion A = [[a11, a12], [a12, a22]] and drift b = (b1, b2)
    with constant diagonal/second-drift entries and cell fields elsewhere."""

    a11: float
    a12: CellField
    a22: float
    b1: CellField
    b2: float
    tag: str = ""

    @staticmethod
    def constant(a11: float, a12: float, a22: float, b1: float, b2: float,
                 tag: str = "constant") -> "CoeffSet":
        return CoeffSet(a11=a11, a12=CellField.constant(a12), a22=a22,
                        b1=CellField.constant(b1), b2=b2, tag=tag)

    @staticmethod
    def identity() -> "CoeffSet":
        return CoeffSet.constant(1.0, 0.0, 1.0, 0.0, 0.0, tag="identity")

    @staticmethod
    def multiscale(seed: int, eps_exp: int, a12_range=(-1.0, -0.9),
                   a12_channel=1.0, b1_range=(-1.0 / _SQ8, 0.0),
                   b1_channel=1.0 / _SQ8, channel: Parabola | None = None) -> "CoeffSet":
        """The experiment coefficients: constant diagonal sqrt(11)/4 and
        3 sqrt(11)/4, random a12 and b1 with channel overrides, b2 = 1."""
        eps = 2.0**-eps_exp
        if channel is None:
            channel = Parabola()
        a12 = generate_field(seed, eps, a12_range, a12_channel, channel)
        b1 = generate_field(seed + 1, eps, b1_range, b1_channel, channel)
        return CoeffSet(a11=_SQ11 / 4.0, a12=a12, a22=3.0 * _SQ11 / 4.0,
                        b1=b1, b2=1.0, tag=f"multiscale(seed={seed},eps=2^-{eps_exp})")

    @property
    def grid_n(self) -> int:
        return max(self.a12.n, self.b1.n)

    @property
    def epsilon(self) -> float:
        return 1.0 / self.grid_n

    def cell_tables(self):
        """Per-cell (a11, a12, a22, b1, b2) arrays on the common grid."""
        n = self.grid_n
        a12 = self.a12.refined(n)
        b1 = self.b1.refined(n)
        shape = a12.shape
        return (np.full(shape, self.a11), a12, np.full(shape, self.a22),
                b1, np.full(shape, self.b2))

    def eval_at(self, point) -> tuple[np.ndarray, np.ndarray]:
        """Cell-constant (A, b) at a single point."""
        A12, B1 = self.eval_at_many(np.atleast_2d(np.asarray(point, dtype=float)))
        return A12[0], B1[0]

    def eval_at_many(self, points: np.ndarray):
        """(n, 2, 2) diffusion matrices and (n, 2) drifts at given points."""
        a12 = self.a12.at(points)
        b1 = self.b1.at(points)
        n = a12.shape[0]
        A = np.empty((n, 2, 2))
        A[:, 0, 0] = self.a11
        A[:, 0, 1] = a12
        A[:, 1, 0] = a12
        A[:, 1, 1] = self.a22
        b = np.empty((n, 2))
        b[:, 0] = b1
        b[:, 1] = self.b2
        return A, b


@dataclass(frozen=True)
class CordesReport:
    """Outcome of the per-cell admissibility check."""

    worst_ratio: float
    delta_max: float
    delta_floor: float
    delta: float
    satisfied: bool
    gamma_field: CellField = field(repr=False, default=None)


def _cell_quantities(coeffs: CoeffSet):
    a11, a12, a22, b1, b2 = coeffs.cell_tables()
    trace = a11 + a22
    if np.any(trace <= 0.0):
        raise ValueError("nonpositive trace: invalid diffusion coefficient")
    frob = a11**2 + 2.0 * a12**2 + a22**2 + b1**2 + b2**2
    return trace, frob


def gamma(coeffs: CoeffSet) -> CellField:
    """Renormalization tr(A) / (A:A + b.b) per cell; positive under
    ellipticity."""
    trace, frob = _cell_quantities(coeffs)
    vals = trace / frob
    return CellField(epsilon=coeffs.epsilon, n=coeffs.grid_n, values=vals)


def check_cordes(coeffs: CoeffSet, delta: float,
                 poincare: float = DEFAULT_POINCARE) -> CordesReport:
    """Verify the pointwise bound for the requested delta and report the
    largest admissible value delta_max = min_cells tr(A)^2/(A:A + b.b) - 1.

    Equality cases (the experiment field attains delta_max = 1/10 exactly)
    are accepted through a 1e-12 tolerance.
    """
    if not (0.0 < delta <= 1.0):
        raise ValueError("delta must lie in (0, 1]")
    trace, frob = _cell_quantities(coeffs)
    ratios = frob / trace**2
    worst = float(ratios.max())
    delta_max = float((trace**2 / frob).min() - 1.0)
    _, _, _, b1, b2 = coeffs.cell_tables()
    eta = 1.0 if (np.any(b1 != 0.0) or b2 != 0.0) else 0.0
    delta_floor = eta / (1.0 + poincare**2)
    satisfied = (delta <= delta_max + 1e-12) and (delta > delta_floor)
    return CordesReport(worst_ratio=worst, delta_max=delta_max,
                        delta_floor=delta_floor, delta=float(delta),
                        satisfied=bool(satisfied), gamma_field=gamma(coeffs))


def ellipticity_bounds(coeffs: CoeffSet) -> tuple[float, float]:
    """Extremal eigenvalues of A over all cells (closed-form 2x2)."""
    a11, a12, a22, _, _ = coeffs.cell_tables()
    mean = 0.5 * (a11 + a22)
    rad = np.sqrt((0.5 * (a11 - a22)) ** 2 + a12**2)
    nu1 = float((mean - rad).min())
    nu2 = float((mean + rad).max())
    if nu1 <= 0.0:
        raise ValueError(f"coefficients not uniformly elliptic (nu1 = {nu1})")
    return nu1, nu2


# binary coefficient file: header + row-major float64 a12 values then b1 values
_HEADER = struct.Struct("<8sIIQdddddddddddd")


def write_coeff_file(path, coeffs: CoeffSet):
    a12, b1 = coeffs.a12, coeffs.b1
    if a12.n != b1.n:
        raise ValueError("a12 and b1 must share the cell grid")
    ch = a12.channel or Parabola()
    eps_exp = round(np.log2(a12.n))
    header = _HEADER.pack(
        COEFF_MAGIC, 1, eps_exp, a12.seed & _MASK64,
        coeffs.a11, coeffs.a22, coeffs.b2,
        a12.value_range[0], a12.value_range[1],
        np.nan if a12.channel_value is None else a12.channel_value,
        b1.value_range[0], b1.value_range[1],
        np.nan if b1.channel_value is None else b1.channel_value,
        ch.curvature, ch.x_apex, ch.y_apex,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(a12.values.astype("<f8").tobytes())
        fh.write(b1.values.astype("<f8").tobytes())


def read_coeff_file(path) -> CoeffSet:
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        (magic, version, eps_exp, seed, a11, a22, b2, a12_lo, a12_hi, a12_ch,
         b1_lo, b1_hi, b1_ch, curv, x_apex, y_apex) = _HEADER.unpack(raw)
        if magic != COEFF_MAGIC or version != 1:
            raise ValueError(f"not a coefficient file: {path}")
        n = 2**eps_exp
        eps = 2.0**-eps_exp
        data = np.frombuffer(fh.read(2 * n * n * 8), dtype="<f8")
    if data.size != 2 * n * n:
        raise ValueError(f"truncated coefficient file: {path}")
    channel = Parabola(curv, x_apex, y_apex)
    a12 = CellField(epsilon=eps, n=n, values=data[: n * n].copy(), seed=seed,
                    value_range=(a12_lo, a12_hi),
                    channel_value=None if np.isnan(a12_ch) else a12_ch, channel=channel)
    b1 = CellField(epsilon=eps, n=n, values=data[n * n:].copy(), seed=seed,
                   value_range=(b1_lo, b1_hi),
                   channel_value=None if np.isnan(b1_ch) else b1_ch, channel=channel)
    return CoeffSet(a11=a11, a12=a12, a22=a22, b1=b1, b2=b2,
                    tag=f"file(eps=2^-{eps_exp})")
