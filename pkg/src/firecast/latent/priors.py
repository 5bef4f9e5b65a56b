"""Hyperparameter transforms and prior densities.

Each hyperparameter is optimised and integrated on an unconstrained
internal scale; ``Hyper.log_prior_internal`` adds the log-Jacobian so the
density is the one of the internal coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from ..distributions import PcPriorConfig, log_pc_prior_kappa, log_pc_prior_xi
from ..errors import ConfigError

TRANSFORMS = ("log", "logit", "interval", "identity")


def _x_minus_log1p(x):
    """x - log(1 + x), with a series near 0 where the difference cancels."""
    x = np.asarray(x, float)
    small = np.abs(x) < 1e-2
    series = np.zeros_like(x)
    for k in range(10, 1, -1):
        series = series + (-1) ** k * x**k / k
    with np.errstate(invalid="ignore", divide="ignore"):
        direct = x - np.log1p(x)
    return np.where(small, series, direct)


def bym2_phi_distance(phi, eigvals):
    """sqrt(2 KL) of N(0, (1-phi) I + phi S) from N(0, I), S with eigenvalues ``eigvals``."""
    c = np.asarray(eigvals, float) - 1.0
    kld = 0.5 * np.sum(_x_minus_log1p(phi * c))
    return np.sqrt(2.0 * kld)


def log_pc_bym2_phi(phi, eigvals, u=0.5, alpha=0.5):
    """PC prior for the BYM2 mixing weight with P(phi < u) = alpha."""
    if not 0.0 < phi < 1.0:
        return -np.inf
    c = np.asarray(eigvals, float) - 1.0
    rate = -np.log1p(-alpha) / bym2_phi_distance(u, eigvals)
    d = bym2_phi_distance(phi, eigvals)
    dkld = 0.5 * phi * np.sum(c**2 / (1.0 + phi * c))
    # d'(phi) = KL'(phi) / d(phi); both vanish linearly at 0
    slope = dkld / d if d > 1e-12 else np.sqrt(0.5 * np.sum(c**2))
    return float(np.log(rate) - rate * d + np.log(slope))


def log_pc_precision(tau, u=1.0, alpha=0.01):
    """PC prior for a precision with P(1/sqrt(tau) > u) = alpha."""
    if not tau > 0:
        return -np.inf
    lam = -np.log(alpha) / u
    return float(np.log(lam / 2.0) - 1.5 * np.log(tau) - lam / np.sqrt(tau))


def log_gamma_density(x, shape, rate):
    if not x > 0:
        return -np.inf
    return float(shape * np.log(rate) - special.gammaln(shape) + (shape - 1.0) * np.log(x) - rate * x)


def log_normal_density(x, mean, variance):
    return float(-0.5 * np.log(2.0 * np.pi * variance) - 0.5 * (x - mean) ** 2 / variance)


@dataclass
class Prior:
    """A named prior family with keyword parameters.

    kinds: ``gamma(shape, rate)``, ``pc_prec(u, alpha)``,
    ``pc_phi(u, alpha)`` (needs ``eigvals`` from the spatial block),
    ``normal(mean, variance)``, ``pc_xi(rate, lower, upper)``,
    ``pc_kappa(rate, form)``, ``flat``.
    """

    kind: str
    params: dict = field(default_factory=dict)
    eigvals: np.ndarray | None = None

    def log_density(self, x: float) -> float:
        p = self.params
        k = self.kind
        if k == "gamma":
            return log_gamma_density(x, p["shape"], p["rate"])
        if k == "pc_prec":
            return log_pc_precision(x, p.get("u", 1.0), p.get("alpha", 0.01))
        if k == "pc_phi":
            if self.eigvals is None:
                raise ConfigError("pc_phi prior needs the spatial eigenvalues")
            return log_pc_bym2_phi(x, self.eigvals, p.get("u", 0.5), p.get("alpha", 0.5))
        if k == "normal":
            return log_normal_density(x, p.get("mean", 0.0), p["variance"])
        if k == "pc_xi":
            return log_pc_prior_xi(x, PcPriorConfig(rate=p.get("rate", 10.0), xi_bounds=(p["lower"], p["upper"])))
        if k == "pc_kappa":
            return log_pc_prior_kappa(x, PcPriorConfig(rate=p.get("rate", 10.0), kappa_form=p.get("form", "approximate")))
        if k == "flat":
            return 0.0
        raise ConfigError(f"unknown prior kind {k!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}


@dataclass
class Hyper:
    """One hyperparameter: name, transform to the internal scale, prior, start value.

    ``interval`` maps (lower, upper) through a scaled logistic.
    ``bounds`` limit the internal coordinate during optimisation.
    """

    name: str
    transform: str
    prior: Prior
    init: float
    lower: float = 0.0
    upper: float = 1.0
    bounds: tuple = (-10.0, 10.0)

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ConfigError(f"unknown transform {self.transform!r}")
        if self.transform == "interval" and not self.lower < self.upper:
            raise ConfigError("interval transform needs lower < upper")

    def to_user(self, x: float) -> float:
        t = self.transform
        if t == "log":
            return float(np.exp(x))
        if t == "logit":
            return float(special.expit(x))
        if t == "interval":
            return float(self.lower + (self.upper - self.lower) * special.expit(x))
        return float(x)

    def to_internal(self, v: float) -> float:
        t = self.transform
        if t == "log":
            return float(np.log(v))
        if t == "logit":
            return float(special.logit(v))
        if t == "interval":
            return float(special.logit((v - self.lower) / (self.upper - self.lower)))
        return float(v)

    def log_jacobian(self, x: float) -> float:
        t = self.transform
        if t == "log":
            return float(x)
        if t in ("logit", "interval"):
            width = 1.0 if t == "logit" else self.upper - self.lower
            return float(np.log(width) - np.logaddexp(0.0, x) - np.logaddexp(0.0, -x))
        return 0.0

    def log_prior_internal(self, x: float) -> float:
        return self.prior.log_density(self.to_user(x)) + self.log_jacobian(x)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "transform": self.transform,
            "prior": self.prior.to_dict(),
            "init": self.init,
            "lower": self.lower,
            "upper": self.upper,
            "bounds": list(self.bounds),
        }

    @classmethod
    def from_dict(cls, d: dict, eigvals=None) -> "Hyper":
        prior = Prior(d["prior"]["kind"], dict(d["prior"]["params"]), eigvals)
        return cls(d["name"], d["transform"], prior, d["init"], d["lower"], d["upper"], tuple(d["bounds"]))
