"""Even-parity Dirichlet eigenstates of the billiard.

Eigenvalues come from the scaling method over a basis of plane waves
symmetrized about the x-axis.  Each diagonalization at a reference wavenumber
``k`` yields every level within a small distance of ``k``; a window is swept
with overlapping reference points and the estimates are merged.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as la
from scipy.optimize import brentq, minimize_scalar
from scipy.special import jv, y0

from .errors import IllConditioned, MissingLevels, PointOutsideDomain
from .geometry import (
    BilliardShape,
    arclength_of_theta,
    contains,
    derivative,
    position,
    r_dot_n,
    speed,
    theta_of_arclength,
)

log = logging.getLogger(__name__)

NORMALIZATION_TAG = "rn_u2_eq_2k2"


@dataclass
class EigenstateRecord:
    """Eigen-wavenumber with its boundary function on a uniform arclength grid."""

    k: float
    u_samples: np.ndarray
    lam: float
    perimeter: float
    parity: str = "even"
    window_id: int = 0

    @property
    def boundary_grid_size(self) -> int:
        return int(self.u_samples.size)

    @property
    def s_grid(self) -> np.ndarray:
        return np.arange(self.boundary_grid_size) * (self.perimeter / self.boundary_grid_size)


@dataclass
class SpectralWindow:
    k_lo: float
    k_hi: float
    levels: list[EigenstateRecord]
    lam: float
    window_id: int = 0
    complete: bool = True
    weyl_expected: float = float("nan")

    @property
    def ks(self) -> np.ndarray:
        return np.array([r.k for r in self.levels])


@dataclass
class SolverOptions:
    """Knobs for :func:`solve_window`.

    ``half_width`` bounds the distance between a level and the reference
    wavenumber it is computed at; the scaling-method error grows as its cube.
    """

    half_width: float = 0.03
    basis_factor: float = 1.6
    basis_extra: int = 12
    quad_density: float = 10.0
    boundary_density: float = 6.0
    rank_eps: float = 1e-14
    max_basis: int = 4000
    weyl_tolerance: float | None = None
    check_weyl: bool = True
    k_floor: float = 20.0
    extra: dict = field(default_factory=dict)


def _basis_size(shape: BilliardShape, k: float, opts: SolverOptions) -> int:
    # number of directions in [0, pi/2]; each gives a cosine and a sine wave
    nd = int(math.ceil(0.5 * opts.basis_factor * k * shape.perimeter / (2 * np.pi))) + opts.basis_extra
    if 2 * nd > opts.max_basis:
        raise IllConditioned(f"basis of {2 * nd} functions exceeds the cap {opts.max_basis}")
    return nd


def _boundary_quadrature(shape: BilliardShape, k: float, opts: SolverOptions):
    """Midpoint rule on the upper half boundary, doubled to cover the full curve."""
    n = int(math.ceil(opts.quad_density * k * 0.5 * shape.perimeter / (2 * np.pi))) + 20
    th = np.pi * (np.arange(n) + 0.5) / n
    x, y = position(shape, th)
    weight = 2.0 * (np.pi / n) * speed(shape, th) / r_dot_n(shape, th)
    return x, y, weight


def _directions(nd: int):
    phi = (np.arange(nd) + 0.5) * (0.5 * np.pi / nd)
    return np.cos(phi), np.sin(phi)


def _basis_values(x, y, k, cx, sy):
    a = k * np.multiply.outer(x, cx)
    b = k * np.multiply.outer(y, sy)
    ca, sa, cb, sb = np.cos(a), np.sin(a), np.cos(b), np.sin(b)
    return ca, sa, cb, sb


def _scaling_matrices(shape, k, opts):
    nd = _basis_size(shape, k, opts)
    cx, sy = _directions(nd)
    x, y, w = _boundary_quadrature(shape, k, opts)
    ca, sa, cb, sb = _basis_values(x, y, k, cx, sy)
    B = np.hstack([ca * cb, sa * cb])
    X = np.multiply.outer(x, cx)
    Y = np.multiply.outer(y, sy)
    # d/dk of each basis function at fixed position
    D = np.hstack([-sa * cb * X - ca * sb * Y, ca * cb * X - sa * sb * Y])
    WB = w[:, None] * B
    F = B.T @ WB
    G = WB.T @ D
    G = G + G.T
    return F, G, nd


def _gradient_normal(shape, theta, k, coef, nd):
    """Outward normal derivative of ``sum coef_i f_i(k r)`` at boundary angles."""
    cx, sy = _directions(nd)
    x, y = position(shape, theta)
    dx, dy = derivative(shape, theta)
    v = np.hypot(dx, dy)
    nx, ny = dy / v, -dx / v
    ca, sa, cb, sb = _basis_values(x, y, k, cx, sy)
    gx = np.hstack([-sa * cb * cx, ca * cb * cx]) * k
    gy = np.hstack([-ca * sb * sy, -sa * sb * sy]) * k
    return (nx[:, None] * gx + ny[:, None] * gy) @ coef


def scaling_step(shape: BilliardShape, k: float, opts: SolverOptions | None = None):
    """One diagonalization at reference wavenumber ``k``.

    Returns ``(k_levels, coefficients, nd)`` for every level within
    ``1.5 * half_width`` of ``k``.
    """
    opts = opts or SolverOptions()
    F, G, nd = _scaling_matrices(shape, k, opts)
    f, V = la.eigh(F)
    if not np.isfinite(f).all() or f[-1] <= 0:
        raise IllConditioned("boundary norm matrix is not positive")
    keep = f > opts.rank_eps * f[-1]
    if keep.sum() < 0.5 * k * shape.perimeter / (2 * np.pi):
        raise IllConditioned(f"numerical rank {keep.sum()} too small at k={k}")
    Z = V[:, keep] / np.sqrt(f[keep])
    mu, Y = la.eigh(Z.T @ G @ Z)
    with np.errstate(divide="ignore"):
        kk = k - 2.0 / mu
    sel = np.abs(kk - k) <= 1.5 * opts.half_width
    order = np.argsort(kk[sel])
    return kk[sel][order], (Z @ Y[:, sel])[:, order], nd


def _boundary_function(shape, k_level, coef, nd, n_b):
    s = np.arange(n_b) * (shape.perimeter / n_b)
    th = theta_of_arclength(shape, s)
    u = _gradient_normal(shape, th, k_level, coef[:, None], nd)[:, 0]
    rn = r_dot_n(shape, th)
    norm = np.sum(rn * u * u) * (shape.perimeter / n_b)
    return u * math.sqrt(2.0 * k_level ** 2 / norm)


def boundary_samples_needed(shape: BilliardShape, k: float, density: float = 6.0) -> int:
    n = int(math.ceil(density * k * shape.perimeter / (2 * np.pi)))
    return n + (n % 2)


def solve_window(
    shape: BilliardShape,
    k_lo: float,
    k_hi: float,
    options: SolverOptions | None = None,
    *,
    window_id: int = 0,
    with_boundary: bool = True,
) -> SpectralWindow:
    """All even-parity levels in ``[k_lo, k_hi)`` with their boundary functions."""
    opts = options or SolverOptions()
    if k_lo < opts.k_floor:
        raise ValueError(f"k_lo must be at least {opts.k_floor}")
    if k_hi <= k_lo:
        raise ValueError("empty window")
    h = opts.half_width
    n_ref = max(1, int(math.ceil((k_hi - k_lo) / (2 * h))))
    centers = k_lo + (np.arange(n_ref) + 0.5) * (k_hi - k_lo) / n_ref
    step = (k_hi - k_lo) / n_ref
    merge_tol = 1e-4
    found: list[tuple[float, int, np.ndarray, int]] = []
    for ic, c in enumerate(centers):
        lo = c - 0.5 * step - merge_tol
        hi = c + 0.5 * step + merge_tol
        kk, coef, nd = scaling_step(shape, c, opts)
        for j, kv in enumerate(kk):
            if lo <= kv < hi and k_lo <= kv < k_hi:
                found.append((float(kv), ic, coef[:, j], nd))
    found.sort(key=lambda t: t[0])
    merged: list[tuple[float, int, np.ndarray, int]] = []
    for item in found:
        if merged and item[1] != merged[-1][1] and item[0] - merged[-1][0] < 2 * merge_tol:
            prev = merged[-1]
            # keep the estimate from the reference point closest to the level
            if abs(item[0] - centers[item[1]]) < abs(prev[0] - centers[prev[1]]):
                merged[-1] = item
            continue
        merged.append(item)

    levels = []
    for kv, ic, coef, nd in merged:
        u = np.empty(0)
        if with_boundary:
            u = _boundary_function(shape, kv, coef, nd, boundary_samples_needed(shape, kv, opts.boundary_density))
        levels.append(EigenstateRecord(kv, u, shape.lam, shape.perimeter, window_id=window_id))
    expected = weyl_count(shape, k_hi) - weyl_count(shape, k_lo)
    window = SpectralWindow(k_lo, k_hi, levels, shape.lam, window_id, True, expected)
    if opts.check_weyl:
        tol = opts.weyl_tolerance
        if tol is None:
            tol = 3.0 * math.sqrt(max(expected, 1.0)) + 2.0
        if len(levels) < expected - tol:
            window.complete = False
            raise MissingLevels(
                f"found {len(levels)} levels in [{k_lo}, {k_hi}), Weyl expects {expected:.1f}"
            )
    return window


# ---------------------------------------------------------------- Weyl law

THEORETICAL_WEYL_CONSTANT = -1.0 / 24.0


def weyl_smooth(shape: BilliardShape, k) -> np.ndarray:
    """Area and perimeter terms of the even-parity counting function.

    The half domain has Dirichlet conditions on the curved boundary (length
    L/2) and Neumann conditions on the symmetry chord.
    """
    k = np.asarray(k, dtype=float)
    half_area = 0.5 * shape.area
    edge = 0.5 * shape.perimeter - shape.symmetry_line_length
    return half_area * k * k / (4 * np.pi) - edge * k / (4 * np.pi)


@lru_cache(maxsize=64)
def weyl_constant(lam: float, k_fit: float = 18.0) -> float:
    """Constant term fitted to the complete low-lying spectrum of one shape."""
    shape = BilliardShape(lam)
    opts = SolverOptions(k_floor=0.5, check_weyl=False, half_width=0.02)
    ks = solve_window(shape, 1.0, k_fit, opts, with_boundary=False).ks
    staircase = np.arange(1, ks.size + 1) - 0.5
    return float(np.mean(staircase - weyl_smooth(shape, ks)))


def weyl_count(shape: BilliardShape, k, constant: float | None = None) -> np.ndarray:
    """Smooth estimate of the number of even levels below ``k``.

    The constant defaults to its theoretical value (curvature term minus the
    two Dirichlet-Neumann right-angle corners); pass
    ``weyl_constant(shape.lam)`` to use the fitted one.
    """
    c = THEORETICAL_WEYL_CONSTANT if constant is None else constant
    return weyl_smooth(shape, k) + c


def weyl_density(shape: BilliardShape, k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    return 0.5 * shape.area * k / (2 * np.pi) - (0.5 * shape.perimeter - shape.symmetry_line_length) / (4 * np.pi)


# ------------------------------------------------------------- circle oracle

def _bessel_zeros(n: int, k_max: float) -> list[float]:
    """Zeros of ``J_n`` below ``k_max`` by sign-change scan and bracketing."""
    if n > k_max:
        return []
    lo = max(n, 1e-3)
    x = np.arange(lo, k_max + 0.05, 0.05)
    f = jv(n, x)
    zeros = []
    idx = np.flatnonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0)
    for i in idx:
        zeros.append(brentq(lambda t: jv(n, t), x[i], x[i + 1], xtol=1e-14, rtol=1e-15, maxiter=200))
    return [z for z in zeros if z <= k_max]


def circle_oracle(k_max: float) -> list[tuple[int, int, float]]:
    """Even circle levels ``(n, m, j_{n,m})`` with ``j_{n,m} <= k_max``, sorted by k."""
    if k_max <= 0:
        raise ValueError("k_max must be positive")
    out = []
    n = 0
    while n <= k_max:
        for m, z in enumerate(_bessel_zeros(n, k_max), start=1):
            out.append((n, m, z))
        n += 1
    out.sort(key=lambda t: t[2])
    return out


# ---------------------------------------------------------- interior values

def wavefunction_at(record: EigenstateRecord, shape: BilliardShape, point) -> float:
    """Interior value from the boundary function.

    Uses ``psi(r) = -(1/4) * integral of Y0(k |r - r(s)|) u(s) ds``, the real
    part of the single-layer representation with the outgoing free Green
    function.  Points close to the boundary split the integrand with a smooth
    partition of unity: the far part keeps the periodic trapezoidal rule and
    the near part is integrated on Gauss-Legendre panels graded toward the
    closest boundary point, with ``u`` trigonometrically interpolated.
    """
    pts = np.atleast_2d(np.asarray(point, dtype=float))
    if not np.all(contains(shape, pts[:, 0], pts[:, 1])):
        raise PointOutsideDomain(f"point {point} is not inside the billiard")
    n = record.boundary_grid_size
    L = shape.perimeter
    s = np.arange(n) * (L / n)
    bx, by = position(shape, theta_of_arclength(shape, s))
    coef = np.fft.rfft(record.u_samples) / n
    out = np.array([_psi_single(record, shape, p, s, bx, by, coef) for p in pts])
    return float(out[0]) if np.ndim(point) == 1 else out


# near-field panel geometry in units of the boundary grid spacing
_NEAR_FLAT = 6.0
_NEAR_EDGE = 30.0
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _cutoff(d, a, b):
    """Smooth function equal to 1 for ``d <= a`` and 0 for ``d >= b``."""
    t = np.clip((np.abs(d) - a) / (b - a), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        g1 = np.where(t < 1, np.exp(-1.0 / np.maximum(1 - t, 1e-300)), 0.0)
        g0 = np.where(t > 0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
    return g1 / (g0 + g1)


def _interp_u(coef, n, L, s):
    m = np.arange(coef.size)
    w = np.full(coef.size, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    phase = np.exp(2j * np.pi * np.multiply.outer(s, m) / L)
    return (phase * (w * coef)).real.sum(axis=1)


def _graded_nodes(c, b, delta):
    """Quadrature nodes on ``[c - b, c + b]`` with panels halving toward ``c``."""
    edges = [b]
    while edges[-1] > max(delta, 1e-14):
        edges.append(edges[-1] / 2)
    edges.append(0.0)
    edges = np.array(edges[::-1])
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        xs.append(mid + half * _GL_X)
        ws.append(half * _GL_W)
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    return np.concatenate([c - x[::-1], c + x]), np.concatenate([w[::-1], w])


def _psi_single(record, shape, p, s, bx, by, coef):
    k = record.k
    n = s.size
    L = shape.perimeter
    h = L / n
    r = np.hypot(bx - p[0], by - p[1])
    j = int(np.argmin(r))
    if r[j] > 8.0 * h:
        return float(-0.25 * np.sum(y0(k * r) * record.u_samples) * h)
    # closest boundary point by a bounded scalar search around the nearest node
    def dist2(t):
        x, y = position(shape, t)
        return (x - p[0]) ** 2 + (y - p[1]) ** 2

    th_j = float(theta_of_arclength(shape, s[j]))
    dth = 2.0 * h / float(speed(shape, th_j))
    res = minimize_scalar(dist2, bounds=(th_j - dth, th_j + dth), method="bounded",
                          options={"xatol": 1e-13})
    s0 = float(arclength_of_theta(shape, res.x))
    delta = math.sqrt(max(res.fun, 0.0))
    a, b = _NEAR_FLAT * h, min(_NEAR_EDGE * h, 0.45 * L)
    # far part on the uniform grid
    d = (s - s0 + 0.5 * L) % L - 0.5 * L
    far = np.sum(y0(k * r) * record.u_samples * (1.0 - _cutoff(d, a, b))) * h
    # near part on graded panels
    sq, wq = _graded_nodes(s0, b, delta)
    xq, yq = position(shape, theta_of_arclength(shape, sq))
    rq = np.maximum(np.hypot(xq - p[0], yq - p[1]), 1e-300)
    uq = _interp_u(coef, n, L, sq)
    near = np.sum(wq * y0(k * rq) * uq * _cutoff(sq - s0, a, b))
    return float(-0.25 * (far + near))
