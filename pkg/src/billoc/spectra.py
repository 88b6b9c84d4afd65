"""Spacing distributions, gap probabilities and the fits used on spectra and A samples.

Gap probabilities ``E(S)`` and spacing densities ``P(S) = E''(S)`` for the
Poisson, Wigner, Brody, Berry-Robnik and Berry-Robnik-Brody (BRB) models, the
beta-distribution model of the entropy measure ``A`` and the saturating
rational function used against ``alpha``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, stats
from scipy.special import betaln, erfc, gamma, gammaincc

from .errors import (
    DegenerateFit,
    IncompleteWindow,
    InsufficientData,
    OptimizerNotConverged,
    ParameterOutOfRange,
    SampleOutOfRange,
)
from .geometry import BilliardShape
from .quantum import SpectralWindow, weyl_count

MIN_SPACINGS = 500
MIN_A_SAMPLES = 200
DEFAULT_A0 = 0.7
# spacings are floored here so that log S stays finite for exact degeneracies
_S_FLOOR = 1e-300


# ------------------------------------------------------------------ models

@dataclass(frozen=True)
class BrodyModel:
    beta: float

    def __post_init__(self):
        _check_unit("beta", self.beta)

    def pdf(self, S):
        return brody_P(S, self.beta)

    def gap(self, S):
        return brody_E(S, self.beta)

    def cdf(self, S):
        return brody_cdf(S, self.beta)


@dataclass(frozen=True)
class BRBModel:
    rho1: float
    beta: float = 1.0

    def __post_init__(self):
        _check_unit("rho1", self.rho1)
        _check_unit("beta", self.beta)

    @property
    def rho2(self) -> float:
        return 1.0 - self.rho1

    def pdf(self, S):
        return brb_P(S, self.rho1, self.beta)

    def gap(self, S):
        return brb_E(S, self.rho1, self.beta)

    def cdf(self, S):
        return brb_cdf(S, self.rho1, self.beta)


@dataclass(frozen=True)
class BetaDistModel:
    """Density ``C A^a (A0 - A)^b`` on ``[0, A0]``."""

    a: float
    b: float
    A0: float = DEFAULT_A0

    def __post_init__(self):
        if not (self.a > -1 and self.b > -1 and np.isfinite(self.a) and np.isfinite(self.b)):
            raise ParameterOutOfRange(f"exponents must be finite and > -1, got a={self.a}, b={self.b}")
        if not self.A0 > 0:
            raise ParameterOutOfRange("A0 must be positive")

    @property
    def log_norm(self) -> float:
        """``ln C`` with ``1/C = A0^(a+b+1) B(a+1, b+1)``."""
        return -((self.a + self.b + 1) * math.log(self.A0) + betaln(self.a + 1, self.b + 1))

    def pdf(self, A):
        A = np.asarray(A, dtype=float)
        inside = (A >= 0) & (A <= self.A0)
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = self.log_norm + self.a * np.log(A) + self.b * np.log(self.A0 - A)
        return np.where(inside, np.exp(logp), 0.0)

    def cdf(self, A):
        """Cumulative distribution ``W(A)``."""
        return self._frozen().cdf(A)

    def _frozen(self):
        return stats.beta(self.a + 1, self.b + 1, loc=0.0, scale=self.A0)


@dataclass(frozen=True)
class RationalFit:
    """``y = asymptote * s * alpha / (1 + s * alpha)``."""

    asymptote: float
    s: float
    residual_rms: float = float("nan")

    def __call__(self, alpha):
        x = self.s * np.asarray(alpha, dtype=float)
        return self.asymptote * x / (1.0 + x)


@dataclass
class FitResult:
    """Parameters and goodness of fit for a maximum-likelihood fit."""

    model: object
    params: dict
    log_likelihood: float
    ks_statistic: float
    ks_pvalue: float
    n_samples: int
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {
            "model": type(self.model).__name__,
            "params": dict(self.params),
            "log_likelihood": self.log_likelihood,
            "ks_statistic": self.ks_statistic,
            "ks_pvalue": self.ks_pvalue,
            "n_samples": self.n_samples,
        }
        out.update(self.extra)
        return out


@dataclass
class UnfoldedSpectrum:
    unfolded_levels: np.ndarray
    spacings: np.ndarray
    lam: float
    k_lo: float
    k_hi: float

    @property
    def mean_spacing(self) -> float:
        return float(self.spacings.mean()) if self.spacings.size else float("nan")


# ------------------------------------------------------- parameter checks

def _check_unit(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0):
        raise ParameterOutOfRange(f"{name} must lie in [0, 1], got {value!r}")


def _spacing_array(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if np.any(S < 0) or np.any(np.isnan(S)):
        raise ParameterOutOfRange("spacings must be nonnegative")
    return S


# ------------------------------------------------------- Poisson and Wigner

def poisson_P(S):
    return np.exp(-_spacing_array(S))


def poisson_E(S):
    return np.exp(-_spacing_array(S))


def wigner_P(S):
    S = _spacing_array(S)
    return 0.5 * np.pi * S * np.exp(-0.25 * np.pi * S * S)


def wigner_E(S):
    S = _spacing_array(S)
    return erfc(0.5 * math.sqrt(math.pi) * S)


# ------------------------------------------------------------------- Brody

def brody_constants(beta: float) -> tuple[float, float, float]:
    """``(c, d, gamma)`` normalizing the Brody density to unit norm and unit mean."""
    _check_unit("beta", beta)
    g = float(gamma((beta + 2.0) / (beta + 1.0)))
    d = g ** (beta + 1.0)
    return (beta + 1.0) * d, d, g


def brody_P(S, beta: float):
    S = _spacing_array(S)
    c, d, _ = brody_constants(beta)
    with np.errstate(divide="ignore", invalid="ignore"):
        return c * np.power(S, beta) * np.exp(-d * np.power(S, beta + 1.0))


def brody_E(S, beta: float):
    """Gap probability ``Gamma(a) Q(a, (gamma S)^(beta+1)) / (gamma (beta+1))`` with ``a = 1/(beta+1)``."""
    S = _spacing_array(S)
    _, _, g = brody_constants(beta)
    a = 1.0 / (beta + 1.0)
    x = np.power(g * S, beta + 1.0)
    return gamma(a) * gammaincc(a, x) / (g * (beta + 1.0))


def _brody_tail(S, beta: float):
    # 1 - CDF of the Brody spacing, equal to -E'(S)
    _, d, _ = brody_constants(beta)
    return np.exp(-d * np.power(S, beta + 1.0))


def brody_cdf(S, beta: float):
    S = _spacing_array(S)
    return 1.0 - _brody_tail(S, beta)


# ------------------------------------------------------ Berry-Robnik(-Brody)

def brb_E(S, rho1: float, beta: float):
    """``exp(-rho1 S) E_B(rho2 S)``."""
    _check_unit("rho1", rho1)
    S = _spacing_array(S)
    rho2 = 1.0 - rho1
    return np.exp(-rho1 * S) * brody_E(rho2 * S, beta)


def brb_P(S, rho1: float, beta: float):
    """Second derivative of :func:`brb_E`.

    ``exp(-rho1 S) [rho1^2 E_B(x) + 2 rho1 rho2 exp(-d x^(beta+1)) + rho2^2 P_B(x)]``
    with ``x = rho2 S``.
    """
    _check_unit("rho1", rho1)
    S = _spacing_array(S)
    rho2 = 1.0 - rho1
    x = rho2 * S
    inner = rho1 * rho1 * brody_E(x, beta) + 2.0 * rho1 * rho2 * _brody_tail(x, beta)
    if rho2 > 0:
        inner = inner + rho2 * rho2 * brody_P(x, beta)
    return np.exp(-rho1 * S) * inner


def brb_cdf(S, rho1: float, beta: float):
    _check_unit("rho1", rho1)
    S = _spacing_array(S)
    rho2 = 1.0 - rho1
    x = rho2 * S
    e = np.exp(-rho1 * S)
    return 1.0 - rho1 * e * brody_E(x, beta) - rho2 * e * _brody_tail(x, beta)


def berry_robnik_P(S, rho1: float):
    return brb_P(S, rho1, 1.0)


def berry_robnik_E(S, rho1: float):
    return brb_E(S, rho1, 1.0)


# ----------------------------------------------------------------- samplers

def sample_brody(n: int, beta: float, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws ``S = (-ln(1-U)/d)^(1/(beta+1))``."""
    _, d, _ = brody_constants(beta)
    u = rng.random(n)
    return np.power(-np.log1p(-u) / d, 1.0 / (beta + 1.0))


def sample_brb(n: int, rho1: float, beta: float, rng: np.random.Generator) -> np.ndarray:
    """Spacings of a Poisson sequence (density ``rho1``) superposed on a Brody renewal sequence.

    The superposition of independent stationary sequences has gap
    probability ``E_1(rho1 S) E_2(rho2 S)``, so the spacings follow the BRB law.
    """
    _check_unit("rho1", rho1)
    rho2 = 1.0 - rho1
    length = float(n)
    parts = []
    if rho1 > 0:
        m = rng.poisson(rho1 * length)
        parts.append(rng.uniform(0.0, length, m))
    if rho2 > 0:
        m = int(rho2 * length * 1.2) + 100
        steps = sample_brody(m, beta, rng) / rho2
        # random phase makes the renewal sequence stationary
        start = -rng.random() * steps[0]
        pts = start + np.cumsum(steps)
        parts.append(pts[(pts >= 0) & (pts < length)])
    levels = np.sort(np.concatenate(parts))
    return np.diff(levels)


def sample_beta_dist(n: int, a: float, b: float, rng: np.random.Generator, A0: float = DEFAULT_A0) -> np.ndarray:
    return A0 * rng.beta(a + 1.0, b + 1.0, n)


# ---------------------------------------------------------------- unfolding

def unfold_levels(ks, shape: BilliardShape, constant: float | None = None) -> np.ndarray:
    return np.asarray(weyl_count(shape, np.asarray(ks, dtype=float), constant), dtype=float)


def unfold(window: SpectralWindow, shape: BilliardShape, constant: float | None = None) -> UnfoldedSpectrum:
    """Map levels through the smooth counting function so the mean spacing is one."""
    if not window.complete:
        raise IncompleteWindow(f"window [{window.k_lo}, {window.k_hi}) failed its completeness check")
    x = unfold_levels(window.ks, shape, constant)
    return UnfoldedSpectrum(x, np.diff(x), window.lam, window.k_lo, window.k_hi)


# ------------------------------------------------------------ spacing fits

def _ks(samples: np.ndarray, cdf) -> tuple[float, float]:
    res = stats.kstest(samples, cdf)
    return float(res.statistic), float(res.pvalue)


def _prepare_spacings(spacings) -> np.ndarray:
    s = np.asarray(spacings, dtype=float)
    if s.size < MIN_SPACINGS:
        raise InsufficientData(f"need at least {MIN_SPACINGS} spacings, got {s.size}")
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise SampleOutOfRange("spacings must be finite and nonnegative")
    return s


def brody_loglik(beta: float, spacings) -> float:
    s = np.maximum(np.asarray(spacings, dtype=float), _S_FLOOR)
    c, d, _ = brody_constants(beta)
    return float(s.size * math.log(c) + beta * np.sum(np.log(s)) - d * np.sum(np.power(s, beta + 1.0)))


def brb_loglik(rho1: float, beta: float, spacings) -> float:
    s = np.maximum(np.asarray(spacings, dtype=float), _S_FLOOR)
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(brb_P(s, rho1, beta))))


def fit_brody(spacings) -> FitResult:
    """Maximum-likelihood Brody exponent on ``[0, 1]``."""
    s = _prepare_spacings(spacings)
    res = optimize.minimize_scalar(
        lambda b: -brody_loglik(b, s), bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-7}
    )
    if not res.success:
        raise OptimizerNotConverged("Brody fit did not converge", best={"beta": float(res.x)}, grad_norm=float("nan"))
    beta = float(res.x)
    model = BrodyModel(beta)
    ks, pv = _ks(s, model.cdf)
    return FitResult(model, {"beta": beta}, -float(res.fun), ks, pv, int(s.size))


def _numeric_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fit_brb(spacings, rho1: float | None = None) -> FitResult:
    """Maximum-likelihood BRB fit.

    With ``rho1`` given it is held fixed and only ``beta`` is fitted;
    otherwise ``(rho1, beta)`` are fitted jointly on the unit square.
    """
    s = _prepare_spacings(spacings)
    s = np.maximum(s, _S_FLOOR)
    if rho1 is not None:
        _check_unit("rho1", rho1)
        res = optimize.minimize_scalar(
            lambda b: -brb_loglik(rho1, b, s), bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-7}
        )
        if not res.success:
            raise OptimizerNotConverged("BRB fit did not converge", best={"beta": float(res.x)}, grad_norm=float("nan"))
        r1, beta, ll = float(rho1), float(res.x), -float(res.fun)
    else:
        def nll(x):
            return -brb_loglik(float(np.clip(x[0], 0, 1)), float(np.clip(x[1], 0, 1)), s) / s.size

        # coarse scan picks the basin, one local run refines it
        grid = [(r, b) for r in np.linspace(0.05, 0.95, 7) for b in np.linspace(0.05, 0.95, 7)]
        x0 = min(grid, key=lambda v: nll(np.array(v)))
        best = optimize.minimize(nll, np.array(x0), method="L-BFGS-B", bounds=[(0.0, 1.0), (0.0, 1.0)],
                                 options={"ftol": 1e-13, "gtol": 1e-9})
        x = np.clip(best.x, 0.0, 1.0)
        if not best.success:
            g = _numeric_grad(nll, x)
            # a point on the boundary with an outward gradient is still optimal
            interior = (x > 1e-8) & (x < 1 - 1e-8)
            if np.linalg.norm(g[interior]) > 1e-4:
                raise OptimizerNotConverged(
                    f"BRB fit did not converge: {best.message}",
                    best={"rho1": float(x[0]), "beta": float(x[1])},
                    grad_norm=float(np.linalg.norm(g)),
                )
        r1, beta, ll = float(x[0]), float(x[1]), -float(best.fun) * s.size
    model = BRBModel(r1, beta)
    ks, pv = _ks(s, model.cdf)
    return FitResult(model, {"rho1": r1, "beta": beta}, ll, ks, pv, int(s.size),
                     extra={"rho1_fixed": rho1 is not None})


# --------------------------------------------------------- beta distribution

def resolve_A0(a_samples, A0: float | str = DEFAULT_A0) -> float:
    """``A0`` as given, or ``"max"`` for the largest sample times ``1 + 1/n``."""
    if isinstance(A0, str):
        if A0 != "max":
            raise ParameterOutOfRange(f"unknown A0 mode {A0!r}")
        x = np.asarray(a_samples, dtype=float)
        return float(x.max() * (1.0 + 1.0 / x.size))
    return float(A0)


def fit_beta_dist(a_samples, A0: float | str = DEFAULT_A0) -> FitResult:
    """Maximum-likelihood exponents of ``C A^a (A0 - A)^b`` for fixed ``A0``."""
    x = np.asarray(a_samples, dtype=float)
    if x.size < MIN_A_SAMPLES:
        raise InsufficientData(f"need at least {MIN_A_SAMPLES} samples, got {x.size}")
    A0v = resolve_A0(x, A0)
    if np.any(x <= 0) or np.any(x >= A0v) or not np.all(np.isfinite(x)):
        raise SampleOutOfRange(f"all samples must lie in (0, {A0v})")
    p, q, _, _ = stats.beta.fit(x, floc=0.0, fscale=A0v)
    model = BetaDistModel(float(p - 1.0), float(q - 1.0), A0v)
    ll = float(np.sum(stats.beta.logpdf(x, p, q, loc=0.0, scale=A0v)))
    ks, pv = _ks(x, model.cdf)
    mean, second, sigma = beta_dist_moments(model)[:3]
    return FitResult(model, {"a": model.a, "b": model.b, "A0": A0v}, ll, ks, pv, int(x.size),
                     extra={"mean": mean, "second_moment": second, "sigma": sigma})


@dataclass(frozen=True)
class BetaMoments:
    mean: float
    second_moment: float
    sigma: float
    closed_mean: float
    closed_second_moment: float
    printed_mean: float
    printed_second_moment: float
    printed_sigma: float

    def __iter__(self):
        return iter((self.mean, self.second_moment, self.sigma))

    def __getitem__(self, i):
        return (self.mean, self.second_moment, self.sigma)[i]

    @property
    def printed_mismatch(self) -> bool:
        """True when the commonly printed closed forms disagree with direct integration."""
        return not (
            math.isclose(self.mean, self.printed_mean, rel_tol=1e-8)
            and math.isclose(self.second_moment, self.printed_second_moment, rel_tol=1e-8)
        )


def beta_dist_moments(model: BetaDistModel) -> BetaMoments:
    """Moments by adaptive quadrature, plus the closed forms for comparison.

    ``closed_*`` come from integrating the density exactly.  ``printed_*``
    are the expressions with denominators ``a+b+3`` and ``(a+b+3)(a+b+4)``
    that are commonly quoted for this model; they correspond to a
    different exponent convention and are reported, not used.
    """
    a, b, A0 = model.a, model.b, model.A0
    # integrate in t = A / A0 against the normalized beta weight
    lnB = betaln(a + 1, b + 1)

    def moment(j):
        def f(t):
            return math.exp(a * math.log(t) + b * math.log1p(-t) - lnB + j * math.log(t)) if 0 < t < 1 else 0.0

        val, _ = integrate.quad(f, 0.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)
        return val * A0 ** j

    m1 = moment(1)
    m2 = moment(2)
    sigma = math.sqrt(max(m2 - m1 * m1, 0.0))
    closed1 = A0 * (a + 1) / (a + b + 2)
    closed2 = A0 ** 2 * (a + 1) * (a + 2) / ((a + b + 2) * (a + b + 3))
    printed1 = A0 * (a + 1) / (a + b + 3)
    printed2 = A0 ** 2 * (a + 2) * (a + 1) / ((a + b + 4) * (a + b + 3))
    printed_var = A0 ** 2 * (a + 2) * (b + 2) / ((a + b + 4) * (a + b + 3) ** 2)
    return BetaMoments(m1, m2, sigma, closed1, closed2, printed1, printed2, math.sqrt(printed_var))


# ------------------------------------------------------------ rational fits

def fit_rational(points) -> RationalFit:
    """Least-squares ``y_inf`` and ``s`` of ``y = y_inf s alpha / (1 + s alpha)``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 5:
        raise InsufficientData("need at least 5 (alpha, y) points")
    alpha, y = pts[:, 0], pts[:, 1]
    if np.any(alpha <= 0):
        raise ParameterOutOfRange("alpha must be positive")

    def resid(v):
        x = v[1] * alpha
        return v[0] * x / (1.0 + x) - y

    best = None
    y0 = float(np.clip(y.max(), 1e-3, 1.1))
    for s0 in 1.0 / np.geomspace(alpha.min(), alpha.max(), 5):
        res = optimize.least_squares(resid, [y0, s0], bounds=([0.0, 1e-12], [1.1, np.inf]),
                                     x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if best is None or res.cost < best.cost:
            best = res
    y_inf, s = (float(v) for v in best.x)
    x = s * alpha
    if x.min() > 20.0 or x.max() < 0.05:
        raise DegenerateFit("every alpha lies on one side of the saturation point; y_inf and s are not separable")
    rms = float(np.sqrt(np.mean(best.fun ** 2)))
    return RationalFit(y_inf, s, rms)
