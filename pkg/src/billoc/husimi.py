"""Poincare-Husimi functions and the localization measures built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .classical import ChaoticGrid
from .errors import DimensionMismatch
from .quantum import EigenstateRecord

DEFAULT_DIMS = (400, 400)
MAX_IMAGE = 2
# exp(-40) is below double precision relative to the Gaussian peak
_GAUSS_CUT = 40.0


@dataclass
class HusimiGrid:
    """Husimi density on cell centres of ``[0, L) x [-1, 1]``; rows index q."""

    values: np.ndarray
    k: float
    lam: float
    perimeter: float
    normalized: bool = True

    @property
    def dims(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def q(self) -> np.ndarray:
        return cell_centres_q(self.perimeter, self.values.shape[0])

    @property
    def p(self) -> np.ndarray:
        return cell_centres_p(self.values.shape[1])


@dataclass
class LocalizationRecord:
    k: float
    A: float
    A_normalized: float
    nIPR: float
    M: float
    classification: str

    def as_dict(self) -> dict:
        return {
            "k": self.k,
            "A": self.A,
            "A_normalized": self.A_normalized,
            "nIPR": self.nIPR,
            "M": self.M,
            "class": self.classification,
        }


def cell_centres_q(perimeter: float, n_q: int) -> np.ndarray:
    return (np.arange(n_q) + 0.5) * (perimeter / n_q)


def cell_centres_p(n_p: int) -> np.ndarray:
    return -1.0 + (np.arange(n_p) + 0.5) * (2.0 / n_p)


def _extended(record: EigenstateRecord):
    n = record.boundary_grid_size
    L = record.perimeter
    t = np.arange(-MAX_IMAGE * n, (MAX_IMAGE + 1) * n) * (L / n)
    u = np.tile(record.u_samples, 2 * MAX_IMAGE + 1)
    return t, u, L / n


def coherent_overlap(record: EigenstateRecord, q: float, p: float) -> complex:
    """Projection of the boundary function onto the periodized coherent state at (q, p).

    The image sum runs over ``|m| <= 2``.
    """
    k = record.k
    L = record.perimeter
    s = record.s_grid
    amp = 0j
    for m in range(-MAX_IMAGE, MAX_IMAGE + 1):
        x = s - q + m * L
        c = np.exp(1j * k * p * x - 0.5 * k * x * x)
        amp += np.sum(np.conj(c) * record.u_samples)
    return complex(amp * (L / record.boundary_grid_size))


def husimi_grid(record: EigenstateRecord, dims: tuple[int, int] = DEFAULT_DIMS, *, block: int = 40,
                normalize: bool = True) -> HusimiGrid:
    """Squared coherent-state projections on the full section, normalized to unit sum."""
    n_q, n_p = dims
    k = record.k
    L = record.perimeter
    t, u, ds = _extended(record)
    q = cell_centres_q(L, n_q)
    p = cell_centres_p(n_p)
    cut = min(math.sqrt(2.0 * _GAUSS_CUT / k), MAX_IMAGE * L)
    phase = k * np.multiply.outer(t, p)
    real_u = not np.iscomplexobj(u)
    if real_u:
        cos_t, sin_t = np.cos(phase), np.sin(phase)
    else:
        expo = np.exp(-1j * phase)
    H = np.empty((n_q, n_p))
    for start in range(0, n_q, block):
        qb = q[start:start + block]
        lo = np.searchsorted(t, qb[0] - cut)
        hi = np.searchsorted(t, qb[-1] + cut, side="right")
        x = t[lo:hi][None, :] - qb[:, None]
        X = np.exp(-0.5 * k * x * x) * u[lo:hi][None, :]
        if real_u:
            re = X @ cos_t[lo:hi]
            im = X @ sin_t[lo:hi]
            H[start:start + block] = re * re + im * im
        else:
            a = X @ expo[lo:hi]
            H[start:start + block] = (a * np.conj(a)).real
    H *= ds * ds
    if normalize:
        H /= H.sum()
    return HusimiGrid(H, k, record.lam, L, normalize)


def entropy_A(H: HusimiGrid | np.ndarray) -> float:
    """``exp(I) / N`` with ``I = -sum H ln H`` over all ``N`` grid cells."""
    v = _values(H)
    nz = v[v > 0]
    info = -np.sum(nz * np.log(nz))
    return float(math.exp(info) / v.size)


def information_entropy(H: HusimiGrid | np.ndarray) -> float:
    v = _values(H)
    nz = v[v > 0]
    return float(-np.sum(nz * np.log(nz)))


def nipr(H: HusimiGrid | np.ndarray) -> float:
    v = _values(H)
    return float(1.0 / (v.size * np.sum(v * v)))


def overlap_index(H: HusimiGrid | np.ndarray, K: ChaoticGrid | np.ndarray) -> float:
    """Husimi-weighted mean of the +1/-1 chaotic indicator."""
    v = _values(H)
    kg = K.grid if isinstance(K, ChaoticGrid) else np.asarray(K)
    if v.shape != kg.shape:
        raise DimensionMismatch(f"Husimi grid {v.shape} vs indicator grid {kg.shape}")
    return float(np.sum(v * kg))


def classify(M: float, M_t: float = 0.5) -> str:
    return "chaotic" if M >= M_t else "regular"


def classical_threshold(M_values, rho1: float) -> float:
    """Threshold leaving a fraction ``rho1`` of the states below it.

    Returns the midpoint between the ``n_reg``-th and ``n_reg + 1``-th smallest
    overlap index, where ``n_reg = round(rho1 * n)``.
    """
    m = np.sort(np.asarray(M_values, dtype=float))
    n_reg = int(round(rho1 * m.size))
    if n_reg <= 0:
        return float(m[0] - 1e-12)
    if n_reg >= m.size:
        return float(m[-1] + 1e-12)
    return float(0.5 * (m[n_reg - 1] + m[n_reg]))


def localization_record(record: EigenstateRecord, H: HusimiGrid, K: ChaoticGrid, M_t: float = 0.5) -> LocalizationRecord:
    A = entropy_A(H)
    M = overlap_index(H, K)
    return LocalizationRecord(record.k, A, A / K.chi_c, nipr(H), M, classify(M, M_t))


def window_average(A, nipr_values, size: int = 100, stride: int | None = None):
    """Means of consecutive blocks of ``size`` states (sliding by ``stride``)."""
    A = np.asarray(A, dtype=float)
    n = np.asarray(nipr_values, dtype=float)
    stride = stride or size
    starts = range(0, A.size - size + 1, stride)
    return (np.array([A[i:i + size].mean() for i in starts]),
            np.array([n[i:i + size].mean() for i in starts]))


def _values(H) -> np.ndarray:
    return H.values if isinstance(H, HusimiGrid) else np.asarray(H, dtype=float)
