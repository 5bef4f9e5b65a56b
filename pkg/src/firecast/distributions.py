"""Observation distributions and shape-parameter priors.

The extended generalised Pareto (eGP) family has CDF

    F(y) = H(y / sigma) ** kappa,   H(z) = 1 - (1 + xi z) ** (-1 / xi)

with the exponential limit at xi = 0.  Its scale is tied to a linear
predictor through the alpha-quantile: the alpha-quantile of the response
equals exp(eta).

All ``*_loglik_eta`` functions return ``(value, d/deta, d2/deta2)`` as numpy
arrays broadcast over their inputs; these feed the Newton iterations of the
latent-field fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import DomainError, ParameterError

XI_BRANCH_TOL = 1e-8

__all__ = [
    "EgpParams",
    "MedianLink",
    "TruncPoissonParams",
    "PcPriorConfig",
    "AltLikelihoodParams",
    "egp_cdf",
    "egp_pdf",
    "egp_logpdf",
    "egp_quantile",
    "egp_sample",
    "egp_sigma_from_eta",
    "egp_sigma",
    "egp_loglik_eta",
    "trunc_poisson_pmf",
    "trunc_poisson_loglik_eta",
    "trunc_poisson_sample",
    "bernoulli_loglik_eta",
    "gaussian_loglik_eta",
    "alt_scale_from_eta",
    "alt_loglik_eta",
    "alt_sample",
    "kld_gpd_xi",
    "pc_prior_xi",
    "log_pc_prior_xi",
    "kld_egp_kappa",
    "pc_prior_kappa",
    "log_pc_prior_kappa",
]


@dataclass(frozen=True)
class EgpParams:
    sigma: float
    xi: float
    kappa: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ParameterError(f"sigma must be positive, got {self.sigma}")
        if not (np.isfinite(self.kappa) and self.kappa > 0):
            raise ParameterError(f"kappa must be positive, got {self.kappa}")
        if not np.isfinite(self.xi):
            raise ParameterError(f"xi must be finite, got {self.xi}")

    @property
    def upper(self) -> float:
        """Right end of the support (inf unless xi < 0)."""
        if self.xi < -XI_BRANCH_TOL:
            return -self.sigma / self.xi
        return np.inf


@dataclass(frozen=True)
class MedianLink:
    """Quantile link: the alpha-quantile of the response is exp(eta)."""

    eta: float
    alpha: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")


@dataclass(frozen=True)
class TruncPoissonParams:
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ParameterError(f"rate must be positive, got {self.lam}")


@dataclass(frozen=True)
class PcPriorConfig:
    """Penalised-complexity prior settings for the eGP shapes.

    ``kappa_form`` selects the prior built on the exact divergence
    (``"exact"``) or on its exponential approximation (``"approximate"``,
    the default used for fitting).
    """

    rate: float = 10.0
    xi_bounds: tuple[float, float] = (-0.5, 0.5)
    kappa_form: str = "approximate"

    def __post_init__(self):
        lo, hi = self.xi_bounds
        if not self.rate > 0:
            raise ParameterError("PC prior rate must be positive")
        if not lo < 0 < hi:
            raise ParameterError("xi bounds must straddle zero")
        if self.kappa_form not in ("exact", "approximate"):
            raise ParameterError(f"unknown kappa_form {self.kappa_form!r}")


@dataclass(frozen=True)
class AltLikelihoodParams:
    family: str
    shape: float

    def __post_init__(self):
        if self.family not in ("gamma", "weibull"):
            raise ParameterError(f"unknown family {self.family!r}")
        if not self.shape > 0:
            raise ParameterError("shape must be positive")


# ---------------------------------------------------------------------------
# eGP helpers (vectorised, no validation)


def _log1p_over_xi(xi, z):
    """log1p(xi * z) / xi, switching to its series when |xi| is tiny."""
    xi, z = np.broadcast_arrays(np.asarray(xi, float), np.asarray(z, float))
    small = np.abs(xi) < XI_BRANCH_TOL
    safe_xi = np.where(small, 1.0, xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        general = np.log1p(safe_xi * z) / safe_xi
    zs = np.where(small, z, 0.0)
    series = zs - 0.5 * xi * zs**2 + xi**2 * zs**3 / 3.0
    return np.where(small, series, general)


def _expm1_over_xi(xi, ell):
    """expm1(xi * ell) / xi with the same small-xi switch."""
    xi, ell = np.broadcast_arrays(np.asarray(xi, float), np.asarray(ell, float))
    small = np.abs(xi) < XI_BRANCH_TOL
    safe_xi = np.where(small, 1.0, xi)
    general = np.expm1(safe_xi * ell) / safe_xi
    es = np.where(small, ell, 0.0)
    series = es + 0.5 * xi * es**2 + xi**2 * es**3 / 6.0
    return np.where(small, series, general)


def _log1mexp(x):
    """log(1 - exp(-x)) for x > 0."""
    x = np.asarray(x, float)
    with np.errstate(divide="ignore"):
        return np.where(x < np.log(2.0), np.log(-np.expm1(-x)), np.log1p(-np.exp(-x)))


def _gpd_parts(z, xi):
    """(log H, log h): unit-scale GPD log CDF and log density at z >= 0."""
    ell = _log1p_over_xi(xi, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_h = -ell - np.log1p(xi * z)
        log_H = _log1mexp(ell)
    return log_H, log_h


def _unit_quantile(u, xi, kappa):
    """eGP quantile at sigma = 1."""
    log_v = np.log(u) / kappa  # v = u ** (1 / kappa)
    with np.errstate(divide="ignore"):
        ell = np.where(
            log_v < -np.log(2.0),
            -np.log1p(-np.exp(log_v)),
            -np.log(-np.expm1(log_v)),
        )
    return _expm1_over_xi(xi, ell)


def _check_support(y, p: EgpParams):
    y = np.asarray(y, float)
    if np.any(~np.isfinite(y) & ~np.isposinf(y)) or np.any(y < 0):
        raise DomainError("eGP argument must be non-negative")
    if np.any(y > p.upper):
        raise DomainError(f"argument beyond the support bound {p.upper}")
    return y


# ---------------------------------------------------------------------------
# eGP public API


def egp_cdf(y, p: EgpParams):
    """CDF of the eGP distribution."""
    y = _check_support(y, p)
    z = y / p.sigma
    ell = _log1p_over_xi(p.xi, z)
    H = -np.expm1(-ell)
    out = np.power(H, p.kappa)
    return out if out.ndim else float(out)


def egp_logpdf(y, p: EgpParams):
    y = _check_support(y, p)
    z = y / p.sigma
    log_H, log_h = _gpd_parts(z, p.xi)
    if p.kappa == 1.0:
        lower = np.zeros_like(log_H)
    else:
        with np.errstate(invalid="ignore"):
            lower = (p.kappa - 1.0) * log_H
    out = np.log(p.kappa) + lower + log_h - np.log(p.sigma)
    return out if out.ndim else float(out)


def egp_pdf(y, p: EgpParams):
    """Density of the eGP distribution (infinite at 0 when kappa < 1)."""
    out = np.exp(egp_logpdf(y, p))
    return out if np.ndim(out) else float(out)


def egp_quantile(u, p: EgpParams):
    u = np.asarray(u, float)
    if np.any(~(u > 0) | ~(u < 1)):
        raise DomainError("quantile level must lie in (0, 1)")
    out = p.sigma * _unit_quantile(u, p.xi, p.kappa)
    return out if out.ndim else float(out)


def egp_sample(n: int, p: EgpParams, seed=None):
    """Inverse-CDF draws; ``seed`` may be an int or a numpy Generator."""
    if n < 0:
        raise ParameterError("sample size must be non-negative")
    rng = np.random.default_rng(seed)
    if n == 0:
        return np.empty(0)
    u = rng.random(n)
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    return p.sigma * _unit_quantile(u, p.xi, p.kappa)


def egp_sigma(eta, xi, kappa, alpha=0.5):
    """Vectorised scale making the alpha-quantile equal exp(eta)."""
    return np.exp(eta) / _unit_quantile(alpha, xi, kappa)


def egp_sigma_from_eta(link: MedianLink, xi: float, kappa: float) -> float:
    if not kappa > 0:
        raise ParameterError("kappa must be positive")
    return float(egp_sigma(link.eta, xi, kappa, link.alpha))


def egp_loglik_eta(y, eta, xi, kappa, alpha=0.5):
    """Log density of y under the eGP with quantile link, and its eta-derivatives.

    With z = y / sigma(eta) and g(z) = (kappa-1) log H(z) + log h(z),
    d/deta = -z g'(z) - 1 and d2/deta2 = z g'(z) + z^2 g''(z).
    Observations outside the support give value -inf.
    """
    y = np.asarray(y, float)
    if np.any(~(y > 0)):
        raise DomainError("eGP log-likelihood needs y > 0")
    eta = np.asarray(eta, float)
    xi = np.asarray(xi, float)
    kappa = np.asarray(kappa, float)
    q = _unit_quantile(alpha, xi, kappa)
    z = y * q * np.exp(-eta)
    one_plus = 1.0 + xi * z
    feasible = one_plus > 0
    z_safe = np.where(feasible, z, 0.5)
    onep_safe = np.where(feasible, one_plus, 1.0)
    log_H, log_h = _gpd_parts(z_safe, xi)
    ratio = np.exp(log_h - log_H)  # h / H
    km1 = kappa - 1.0
    value = np.log(kappa) + km1 * log_H + log_h - eta + np.log(q)
    c = (1.0 + xi) / onep_safe
    g1 = km1 * ratio - c
    # far out in the tail the squared terms can overflow; the limits are still usable
    with np.errstate(over="ignore", invalid="ignore"):
        g2 = km1 * (-c * ratio - ratio**2) + xi * (1.0 + xi) / onep_safe**2
        grad = -z_safe * g1 - 1.0
        hess = z_safe * g1 + z_safe**2 * g2
    value = np.where(feasible, value, -np.inf)
    grad = np.where(feasible, grad, np.nan)
    hess = np.where(feasible, hess, np.nan)
    return value, grad, hess


# ---------------------------------------------------------------------------
# zero-truncated Poisson


def _trunc_poisson_logpmf(y, lam):
    log_norm = _log1mexp(lam)
    return special.xlogy(y, lam) - lam - special.gammaln(y + 1.0) - log_norm


def trunc_poisson_pmf(y, p):
    """Zero-truncated Poisson pmf; ``p`` is a TruncPoissonParams or a rate."""
    lam = p.lam if isinstance(p, TruncPoissonParams) else float(p)
    if not lam > 0:
        raise ParameterError("rate must be positive")
    y = np.asarray(y)
    if np.any(y < 1) or np.any(y != np.floor(y)):
        raise DomainError("zero-truncated Poisson support is y >= 1")
    out = np.exp(_trunc_poisson_logpmf(y.astype(float), lam))
    return out if out.ndim else float(out)


def trunc_poisson_loglik_eta(y, eta):
    """Zero-truncated Poisson with lambda = exp(eta)."""
    y = np.asarray(y, float)
    if np.any(y < 1):
        raise DomainError("zero-truncated Poisson support is y >= 1")
    eta = np.asarray(eta, float)
    y, eta = np.broadcast_arrays(y, eta)
    lam = np.exp(eta)
    lgam = special.gammaln(y + 1.0)
    # below 1e-4 the closed forms cancel; use the expansion of
    # log(1 - e^-lam) = log(lam) - lam/2 + lam^2/24 + O(lam^4) instead
    small = lam < 1e-4
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        em1 = np.expm1(lam)
        q = np.nan_to_num(lam / em1, nan=0.0)  # lam e^-lam / (1 - e^-lam)
        qq = np.nan_to_num(lam**2 / (em1 * -np.expm1(-lam)), nan=0.0)
        value = y * eta - lam - _log1mexp(lam) - lgam
    value = np.where(small, (y - 1.0) * eta - lam / 2.0 - lam**2 / 24.0 - lgam, value)
    grad = np.where(small, (y - 1.0) - lam / 2.0 - lam**2 / 12.0, y - lam - q)
    hess = np.where(small, -lam / 2.0 - lam**2 / 6.0, -lam - q + qq)
    return value, grad, hess


def trunc_poisson_sample(lam, rng):
    """One zero-truncated Poisson draw per entry of ``lam``.

    Entries whose rate is not finite come back as -1 so the caller can
    report them.
    """
    lam = np.asarray(lam, float)
    u = rng.random(lam.shape)
    out = np.full(lam.shape, -1, dtype=np.int64)
    ok = np.isfinite(lam) & (lam > 0)
    tiny = ok & (lam < 1e-10)
    out[tiny] = 1
    reg = ok & ~tiny
    if np.any(reg):
        lr = lam[reg]
        p0 = np.exp(-lr)
        target = p0 + u[reg] * (-np.expm1(-lr))
        draw = stats.poisson.ppf(target, lr)
        draw = np.where(np.isfinite(draw), draw, -1)
        out[reg] = np.maximum(draw, 1).astype(np.int64)
    return out


# ---------------------------------------------------------------------------
# Bernoulli and Gaussian


def bernoulli_loglik_eta(z, eta):
    """Logistic log-likelihood of a 0/1 outcome."""
    z = np.asarray(z, float)
    eta = np.asarray(eta, float)
    p = special.expit(eta)
    value = z * eta - np.logaddexp(0.0, eta)
    return value, z - p, -p * (1.0 - p)


def gaussian_loglik_eta(y, eta, precision):
    """Gaussian observation with known precision; identity link."""
    y = np.asarray(y, float)
    eta = np.asarray(eta, float)
    r = y - eta
    value = -0.5 * precision * r**2 + 0.5 * np.log(precision / (2.0 * np.pi))
    return value, precision * r, np.full(np.broadcast(y, eta).shape, -float(precision))


# ---------------------------------------------------------------------------
# Gamma / Weibull with median link


def _alt_median_factor(family, shape):
    """Median of the unit-scale distribution."""
    if family == "gamma":
        return special.gammaincinv(shape, 0.5)
    return np.log(2.0) ** (1.0 / shape)


def alt_scale_from_eta(eta, params: AltLikelihoodParams):
    return np.exp(eta) / _alt_median_factor(params.family, params.shape)


def alt_loglik_eta(y, eta, params: AltLikelihoodParams):
    y = np.asarray(y, float)
    if np.any(~(y > 0)):
        raise DomainError("log-likelihood needs y > 0")
    eta = np.asarray(eta, float)
    a = params.shape
    scale = alt_scale_from_eta(eta, params)
    r = y / scale
    if params.family == "gamma":
        value = (a - 1.0) * np.log(y) - r - a * np.log(scale) - special.gammaln(a)
        return value, r - a, -r
    rk = r**a
    value = np.log(a) - np.log(scale) + (a - 1.0) * np.log(r) - rk
    return value, a * rk - a, -(a**2) * rk


def alt_sample(eta, params: AltLikelihoodParams, rng):
    scale = alt_scale_from_eta(np.asarray(eta, float), params)
    if params.family == "gamma":
        return rng.gamma(params.shape, scale)
    return scale * rng.weibull(params.shape, size=np.shape(scale))


# ---------------------------------------------------------------------------
# divergences and PC priors


def kld_gpd_xi(xi):
    """Divergence of GPD(xi) from the exponential base model."""
    xi = np.asarray(xi, float)
    if np.any(xi < 0) or np.any(xi >= 1):
        raise DomainError("xi must lie in [0, 1)")
    out = xi**2 / (1.0 - xi)
    return out if out.ndim else float(out)


def _xi_norm(cfg: PcPriorConfig):
    lo, hi = cfg.xi_bounds
    lam = cfg.rate
    return -np.expm1(lam * lo) - np.expm1(-lam * hi)


def pc_prior_xi(xi, cfg: PcPriorConfig = PcPriorConfig(), outside: str = "zero"):
    """Symmetric exponential prior on xi truncated to ``cfg.xi_bounds``.

    ``outside`` is ``"zero"`` (density 0 beyond the bounds) or ``"error"``.
    """
    xi = np.asarray(xi, float)
    lo, hi = cfg.xi_bounds
    inside = (xi > lo) & (xi < hi)
    if outside == "error" and not np.all(inside):
        raise DomainError(f"xi outside ({lo}, {hi})")
    dens = cfg.rate * np.exp(-cfg.rate * np.abs(xi)) / _xi_norm(cfg)
    out = np.where(inside, dens, 0.0)
    return out if out.ndim else float(out)


def log_pc_prior_xi(xi, cfg: PcPriorConfig = PcPriorConfig()):
    lo, hi = cfg.xi_bounds
    if not lo < xi < hi:
        return -np.inf
    return float(np.log(cfg.rate) - cfg.rate * abs(xi) - np.log(_xi_norm(cfg)))


def kld_egp_kappa(kappa):
    """Divergence of eGP(kappa) from the kappa = 1 base model: log k - (k-1)/k."""
    kappa = np.asarray(kappa, float)
    if np.any(~(kappa > 0)):
        raise DomainError("kappa must be positive")
    e = kappa - 1.0
    direct = np.log(kappa) - e / kappa
    # the direct form cancels badly near 1; sum the alternating series there
    series = np.zeros_like(e)
    for n in range(9, 1, -1):
        series = series + (-1) ** n * (n - 1) / n * e**n
    out = np.where(np.abs(e) < 1e-2, series, direct)
    return out if out.ndim else float(out)


def _pc_kappa_exact_log(kappa, lam):
    e = kappa - 1.0
    d = np.sqrt(2.0 * kld_egp_kappa(kappa))
    with np.errstate(divide="ignore", invalid="ignore"):
        # |k-1| / d -> 1 as k -> 1 since d ~ |k-1|
        ratio = np.where(np.abs(e) < 1e-6, 1.0, np.abs(e) / d)
    return np.log(lam / 2.0) + np.log(ratio) - 2.0 * np.log(kappa) - lam * d


def _pc_kappa_approx_log(kappa, lam):
    return np.log(lam) - lam * np.abs(kappa - 1.0) - np.log(2.0 - np.exp(-lam))


def pc_prior_kappa(kappa, cfg: PcPriorConfig = PcPriorConfig()):
    kappa = np.asarray(kappa, float)
    if np.any(~(kappa > 0)):
        raise DomainError("kappa must be positive")
    if cfg.kappa_form == "exact":
        out = np.exp(_pc_kappa_exact_log(kappa, cfg.rate))
    else:
        out = np.exp(_pc_kappa_approx_log(kappa, cfg.rate))
    return out if out.ndim else float(out)


def log_pc_prior_kappa(kappa, cfg: PcPriorConfig = PcPriorConfig()):
    if not kappa > 0:
        return -np.inf
    if cfg.kappa_form == "exact":
        return float(_pc_kappa_exact_log(np.asarray(kappa, float), cfg.rate))
    return float(_pc_kappa_approx_log(np.asarray(kappa, float), cfg.rate))
