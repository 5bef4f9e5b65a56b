"""Posterior predictive simulation for the hurdle model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from ..distributions import (
    AltLikelihoodParams,
    _unit_quantile,
    alt_sample,
    egp_sigma,
    trunc_poisson_sample,
)
from ..errors import ConfigError
from .grid import FitResult, point_approx
from .hurdle import HurdleModel


@dataclass
class PosteriorPredictive:
    """Draws (rows) by cells (columns).

    ``area`` is on the hectare scale and zero where ``z`` is 0.
    ``root_given_fire`` holds square-root area draws from the conditional
    law given a fire, for every cell and draw (it equals ``sqrt(area)``
    wherever ``z`` is 1).
    """

    z: np.ndarray
    count: np.ndarray
    area: np.ndarray
    root_given_fire: np.ndarray
    failures: int = 0

    @property
    def n_samples(self) -> int:
        return self.z.shape[0]

    def to_dict(self) -> dict:
        return {
            "z": self.z.tolist(),
            "count": self.count.tolist(),
            "area": self.area.tolist(),
            "root_given_fire": self.root_given_fire.tolist(),
            "failures": self.failures,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PosteriorPredictive":
        return cls(
            np.array(d["z"], np.int8),
            np.array(d["count"], np.int64),
            np.array(d["area"], float),
            np.array(d["root_given_fire"], float),
            d["failures"],
        )


def sample_hurdle(eta_z, eta_c, eta_b, area_family: str, params: dict, rng, alpha: float = 0.5):
    """One hurdle draw per entry of the eta arrays.

    Returns ``(z, count, sqrt_area, root_given_fire, failed)``.  The
    conditional square-root area is drawn for every entry and copied into
    ``sqrt_area`` where ``z`` is 1.  ``failed`` marks cells whose count
    rate overflowed (their count is reported as 0 and flagged).
    """
    eta_z, eta_c, eta_b = np.broadcast_arrays(*(np.asarray(a, float) for a in (eta_z, eta_c, eta_b)))
    if area_family not in ("egp", "gamma", "weibull"):
        raise ConfigError(f"unknown area family {area_family!r}")
    z = (rng.random(eta_z.shape) < special.expit(eta_z)).astype(np.int8)
    if area_family == "egp":
        xi, kappa = params["xi"], params["kappa"]
        sigma = egp_sigma(eta_b, xi, kappa, alpha)
        u = rng.random(eta_b.shape)
        u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
        cond = sigma * _unit_quantile(u, xi, kappa)
    else:
        cond = alt_sample(eta_b, AltLikelihoodParams(area_family, params["shape"]), rng)
    count = np.zeros(eta_z.shape, np.int64)
    failed = np.zeros(eta_z.shape, bool)
    on = z == 1
    if np.any(on):
        with np.errstate(over="ignore"):
            lam = np.exp(eta_c[on])
        c = trunc_poisson_sample(lam, rng)
        bad = c < 1
        failed[on] = bad
        count[on] = np.where(bad, 0, c)
    root = np.where(on, cond, 0.0)
    return z, count, root, cond, failed


def posterior_predictive(hm: HurdleModel, fit: FitResult, n_samples: int = 1000, seed: int = 0) -> PosteriorPredictive:
    """Hurdle draws for the prediction cells of ``hm``.

    Each draw picks an integration point with probability equal to its
    weight, a latent field from that point's Gaussian approximation, and
    then the three responses.  Determinism: the point choices come from
    ``seed`` and each point's draws from ``(seed, point index)``.
    """
    if hm.prediction is None or hm.n_predict == 0:
        raise ConfigError("model was assembled without prediction cells")
    n = hm.n_predict
    model = hm.model
    w = fit.weights
    chooser = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    picks = chooser.choice(len(fit.points), size=n_samples, p=w / w.sum())
    z = np.zeros((n_samples, n), np.int8)
    count = np.zeros((n_samples, n), np.int64)
    area = np.zeros((n_samples, n))
    cond = np.zeros((n_samples, n))
    failures = 0
    lik_b = model.likelihood("B")
    for k in np.unique(picks):
        rows = np.nonzero(picks == k)[0]
        p = fit.points[k]
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1, int(k)]))
        res = point_approx(model, p)
        U = res.approx.sample(rng, rows.size)
        eta = (hm.prediction.matrix(p.theta) @ U).T  # (draws, 3n)
        params = {key: lik_b.param(key, p.theta) for key in lik_b.hyper}
        zk, ck, rk, gk, fk = sample_hurdle(eta[:, :n], eta[:, n : 2 * n], eta[:, 2 * n :], lik_b.family, params, rng, lik_b.alpha)
        z[rows], count[rows], area[rows], cond[rows] = zk, ck, rk**2, gk
        failures += int(fk.sum())
    return PosteriorPredictive(z, count, area, cond, failures)
