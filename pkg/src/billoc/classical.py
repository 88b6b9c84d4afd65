"""Bounce-map dynamics, momentum transport and the chaotic-component grid."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _bounce
from .errors import NoIntersection, NotConverged, SeedInRegularRegion, TangentialLaunch
from .geometry import BilliardShape, arclength_of_theta, theta_of_arclength

log = logging.getLogger(__name__)

P_EPS = 1e-12
DEFAULT_FRACTIONS = (0.5, 0.7, 0.8, 0.9)


@dataclass(frozen=True)
class PhasePoint:
    s: float
    p: float


@dataclass
class TransportResult:
    lam: float
    second_moment_series: np.ndarray
    asymptote: float
    n_t_by_criterion: dict[float, int]
    ensemble_size: int
    seed: int


@dataclass
class ChaoticGrid:
    """Indicator grid ``K[i, j]`` in {+1, -1}; rows index s, columns index p."""

    grid: np.ndarray
    lam: float
    perimeter: float
    seed: int
    n_collisions: int
    start: PhasePoint = field(default=PhasePoint(0.0, 0.0))

    @property
    def chi_c(self) -> float:
        return float(np.count_nonzero(self.grid > 0)) / self.grid.size

    @property
    def dims(self) -> tuple[int, int]:
        return self.grid.shape


def bounce(shape: BilliardShape, point: PhasePoint) -> PhasePoint:
    """Next collision in Poincare-Birkhoff coordinates."""
    if not abs(point.p) < 1.0 - P_EPS:
        raise TangentialLaunch(f"|p| = {abs(point.p)} is too close to 1")
    th0 = float(theta_of_arclength(shape, point.s))
    th1, p1, ok = _bounce.bounce_theta(shape.lam, th0, float(point.p), shape.convex)
    if not ok:
        raise NoIntersection(f"no chord endpoint found from {point}")
    s1 = float(arclength_of_theta(shape, th1)) % shape.perimeter
    return PhasePoint(s1, float(p1))


def orbit(shape: BilliardShape, start: PhasePoint, n: int) -> tuple[np.ndarray, np.ndarray]:
    """``n`` iterates of the bounce map; arrays of length ``n + 1`` including the start."""
    th0 = float(theta_of_arclength(shape, start.s))
    try:
        ths, ps = _bounce.iterate(shape.lam, th0, float(start.p), int(n), shape.convex)
    except RuntimeError as exc:
        raise NoIntersection(str(exc)) from None
    return np.mod(arclength_of_theta(shape, ths), shape.perimeter), ps


def jacobian(shape: BilliardShape, point: PhasePoint, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of the bounce map in (s, p)."""
    L = shape.perimeter
    J = np.empty((2, 2))
    for col, (ds, dp) in enumerate([(h, 0.0), (0.0, h)]):
        a = bounce(shape, PhasePoint(point.s + ds, point.p + dp))
        b = bounce(shape, PhasePoint(point.s - ds, point.p - dp))
        dsv = (a.s - b.s + L / 2) % L - L / 2
        J[0, col] = dsv / (2 * h)
        J[1, col] = (a.p - b.p) / (2 * h)
    return J


def _n_t(series: np.ndarray, asymptote: float, f: float) -> int:
    hit = np.flatnonzero(series >= f * asymptote)
    if hit.size == 0:
        raise NotConverged(f"<p^2> never reaches {f:.0%} of its asymptote")
    return int(hit[0])


def transport_time(
    shape: BilliardShape,
    ensemble_size: int = 100_000,
    fractions=DEFAULT_FRACTIONS,
    max_collisions: int = 5000,
    seed: int = 0,
    *,
    tail_fraction: float = 0.1,
    slope_threshold: float = 0.05,
    n_chunks: int = 64,
) -> TransportResult:
    """Collisions needed for ``<p^2>`` to reach given fractions of its asymptote.

    The ensemble starts uniform in arclength with zero momentum.  The
    asymptote is the mean over the final ``tail_fraction`` of the series; the
    tail counts as stationary when a linear fit across it changes by less
    than ``slope_threshold`` relative to its mean.
    """
    if ensemble_size < 10_000:
        raise ValueError("ensemble_size must be at least 1e4")
    fractions = sorted(float(f) for f in fractions)
    if not all(0.0 < f < 1.0 for f in fractions):
        raise ValueError("fractions must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    s0 = rng.uniform(0.0, shape.perimeter, ensemble_size)
    th0 = theta_of_arclength(shape, s0)
    p0 = np.zeros(ensemble_size)
    acc, failures = _bounce.ensemble_second_moment(
        shape.lam, th0, p0, int(max_collisions), int(n_chunks), shape.convex
    )
    if failures.sum():
        raise NoIntersection(f"{int(failures.sum())} trajectories failed")
    series = acc.sum(axis=0) / ensemble_size

    n_tail = max(2, int(round(tail_fraction * series.size)))
    tail = series[-n_tail:]
    asymptote = float(tail.mean())
    if asymptote <= 1e-12:
        raise NotConverged("<p^2> stays at zero; momentum is conserved")
    slope = np.polyfit(np.arange(n_tail), tail, 1)[0]
    drift = abs(slope) * n_tail / asymptote
    if drift > slope_threshold:
        raise NotConverged(f"tail of <p^2> still drifting by {drift:.3f} (relative)")
    n_t = {f: _n_t(series, asymptote, f) for f in fractions}
    return TransportResult(shape.lam, series, asymptote, n_t, ensemble_size, seed)


def alpha(shape: BilliardShape | None, k: float, n_t: int) -> float:
    """Ratio of Heisenberg time to transport time, ``2 k / N_T``."""
    if k <= 0 or n_t < 1:
        raise ValueError("need k > 0 and n_t >= 1")
    return 2.0 * k / n_t


def lyapunov_estimate(shape: BilliardShape, start: PhasePoint, n: int = 2000, delta: float = 1e-8) -> float:
    th0 = float(theta_of_arclength(shape, start.s))
    return float(_bounce.finite_time_lyapunov(shape.lam, th0, float(start.p), int(n), delta, shape.convex))


DEFAULT_SEEDS = (PhasePoint(0.0, 0.5), PhasePoint(0.3, 0.2), PhasePoint(1.7, 0.05), PhasePoint(2.5, 0.4))


def chaotic_grid(
    shape: BilliardShape,
    n_collisions: int = 100_000_000,
    grid_dims: tuple[int, int] = (400, 400),
    seed: int = 0,
    *,
    start: PhasePoint | None = None,
    lyapunov_threshold: float = 0.01,
    min_cell_fraction: float = 0.01,
) -> ChaoticGrid:
    """Mark every grid cell visited by one long chaotic orbit.

    When ``start`` is not given, candidates from ``DEFAULT_SEEDS`` (then
    random points drawn from ``seed``) are tried until one shows a positive
    finite-time Lyapunov exponent.
    """
    n_q, n_p = grid_dims
    if start is None:
        rng = np.random.default_rng(seed)
        candidates = list(DEFAULT_SEEDS) + [
            PhasePoint(rng.uniform(0, shape.perimeter), rng.uniform(-0.9, 0.9)) for _ in range(12)
        ]
        for cand in candidates:
            if lyapunov_estimate(shape, cand) > lyapunov_threshold:
                start = cand
                break
        else:
            raise SeedInRegularRegion("no candidate start point shows a positive Lyapunov exponent")
    theta_edges = theta_of_arclength(shape, np.linspace(0.0, shape.perimeter, n_q + 1))
    theta_edges[0] = 0.0
    theta_edges[-1] = 2 * np.pi
    th0 = float(theta_of_arclength(shape, start.s))
    visited = _bounce.visit_cells(shape.lam, th0, float(start.p), int(n_collisions), theta_edges, n_p, shape.convex)
    frac = np.count_nonzero(visited) / visited.size
    if frac < min_cell_fraction:
        raise SeedInRegularRegion(f"orbit from {start} visits only {frac:.4%} of the cells")
    grid = np.where(visited > 0, 1, -1).astype(np.int8)
    log.info("lambda=%g chi_c=%.4f after %d collisions", shape.lam, frac, n_collisions)
    return ChaoticGrid(grid, shape.lam, shape.perimeter, seed, int(n_collisions), start)
