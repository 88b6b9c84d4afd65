"""Boundary geometry of the billiard family ``w = z + lam * z**2``.

The boundary is the image of the unit circle ``z = exp(i*theta)``.  All
quantities are exact closed forms except the inverse arclength map, which is
a table lookup refined by Newton iterations.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import ellipe, ellipeinc

TWO_PI = 2.0 * np.pi

_TABLE_SIZE = 4097


@dataclass(frozen=True)
class BoundaryPoint:
    theta: float
    position: np.ndarray
    arclength: float
    tangent: np.ndarray
    inward_normal: np.ndarray
    curvature: float


@dataclass(frozen=True)
class BilliardShape:
    """One member of the family, ``0 <= lam <= 1/2``."""

    lam: float
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        lam = float(self.lam)
        if not (0.0 <= lam <= 0.5) or not np.isfinite(lam):
            raise ValueError(f"lambda must lie in [0, 1/2], got {self.lam!r}")
        object.__setattr__(self, "lam", lam)

    # elliptic parameter of the arclength integral
    @property
    def _m(self) -> float:
        return 8.0 * self.lam / (1.0 + 2.0 * self.lam) ** 2

    @cached_property
    def perimeter(self) -> float:
        return 4.0 * (1.0 + 2.0 * self.lam) * float(ellipe(self._m))

    @cached_property
    def area(self) -> float:
        return area(self)

    @property
    def convex(self) -> bool:
        return self.lam <= 0.25

    @property
    def symmetry_line_length(self) -> float:
        """Length of the x-axis chord, from w(pi) to w(0)."""
        return 2.0

    @cached_property
    def _theta_table(self) -> tuple[np.ndarray, np.ndarray]:
        th = np.linspace(0.0, TWO_PI, _TABLE_SIZE)
        return th, arclength_of_theta(self, th)


def speed(shape: BilliardShape, theta) -> np.ndarray:
    """``|w'(theta)| = sqrt(1 + 4 lam cos(theta) + 4 lam^2)``."""
    lam = shape.lam
    return np.sqrt(1.0 + 4.0 * lam * np.cos(theta) + 4.0 * lam * lam)


def position(shape: BilliardShape, theta):
    """Return ``(x, y)`` arrays of boundary positions."""
    lam = shape.lam
    return np.cos(theta) + lam * np.cos(2 * theta), np.sin(theta) + lam * np.sin(2 * theta)


def derivative(shape: BilliardShape, theta):
    """``dw/dtheta = i e^{i theta} (1 + 2 lam e^{i theta})`` as ``(dx, dy)``."""
    lam = shape.lam
    return -np.sin(theta) - 2 * lam * np.sin(2 * theta), np.cos(theta) + 2 * lam * np.cos(2 * theta)


def curvature(shape: BilliardShape, theta) -> np.ndarray:
    """Signed curvature, positive where the boundary is convex (circle = +1)."""
    lam = shape.lam
    c = np.cos(theta)
    num = 1.0 + 8.0 * lam * lam + 6.0 * lam * c
    return num / (1.0 + 4.0 * lam * c + 4.0 * lam * lam) ** 1.5


def r_dot_n(shape: BilliardShape, theta) -> np.ndarray:
    """Position times outward unit normal; positive for every lam < 1/2."""
    lam = shape.lam
    return (1.0 + 2 * lam * lam + 3 * lam * np.cos(theta)) / speed(shape, theta)


def arclength_of_theta(shape: BilliardShape, theta):
    """Arclength from ``theta = 0`` counter-clockwise.

    ``s(theta) = 2 (1 + 2 lam) E(theta / 2 | m)`` with ``m = 8 lam / (1 + 2 lam)^2``.
    Angles outside ``[0, 2 pi]`` map to arclength outside ``[0, L]`` consistently.
    """
    return 2.0 * (1.0 + 2.0 * shape.lam) * ellipeinc(np.asarray(theta, dtype=float) / 2.0, shape._m)


def theta_of_arclength(shape: BilliardShape, s, *, iterations: int = 4):
    """Inverse of :func:`arclength_of_theta`; ``s`` is reduced modulo the perimeter."""
    L = shape.perimeter
    s = np.mod(np.asarray(s, dtype=float), L)
    th_tab, s_tab = shape._theta_table
    th = np.interp(s, s_tab, th_tab)
    for _ in range(iterations):
        th = th - (arclength_of_theta(shape, th) - s) / speed(shape, th)
    return th


def boundary_point(shape: BilliardShape, theta: float) -> BoundaryPoint:
    theta = float(np.mod(theta, TWO_PI))
    if theta >= TWO_PI:
        # tiny negative inputs round up to exactly 2 pi
        theta = 0.0
    x, y = position(shape, theta)
    dx, dy = derivative(shape, theta)
    v = np.hypot(dx, dy)
    t = np.array([dx / v, dy / v])
    return BoundaryPoint(
        theta=theta,
        position=np.array([x, y]),
        arclength=float(arclength_of_theta(shape, theta)),
        tangent=t,
        inward_normal=np.array([-t[1], t[0]]),
        curvature=float(curvature(shape, theta)),
    )


def area(shape: BilliardShape) -> float:
    """Enclosed area ``pi (1 + 2 lam^2)`` (Green's theorem on the conformal image)."""
    return np.pi * (1.0 + 2.0 * shape.lam ** 2)


def contains(shape: BilliardShape, x, y) -> np.ndarray:
    """Point-in-domain test.

    Uses the polar description ``r < r_b(phi)``; the domain is star-shaped about
    the origin for ``lam < 1/2`` so the boundary crosses every ray once.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    phi = np.arctan2(y, x)
    th = polar_theta(shape, phi)
    bx, by = position(shape, th)
    return x * x + y * y < bx * bx + by * by


def polar_theta(shape: BilliardShape, phi, iterations: int = 30):
    """Parameter ``theta`` whose boundary point has polar angle ``phi``."""
    phi = np.asarray(phi, dtype=float)
    lam = shape.lam
    th = np.array(phi, copy=True)
    for _ in range(iterations):
        # polar angle of w(theta) is theta + atan2(lam sin th, 1 + lam cos th)
        g = th + np.arctan2(lam * np.sin(th), 1 + lam * np.cos(th)) - phi
        g = np.mod(g + np.pi, TWO_PI) - np.pi
        dg = 1 + lam * (lam + np.cos(th)) / (1 + 2 * lam * np.cos(th) + lam * lam)
        th = th - g / dg
    return th
