"""Hyperparameter posterior: mode search, curvature, integration design.

``log post(x) = log evidence(theta(x)) + log prior(x)`` on the internal
scale ``x``.  Strategies:

* ``eb``   a single point at the mode (empirical Bayes);
* ``ccd``  the mode plus a central composite design on the sphere of radius
  ``f0 * sqrt(n)`` in the standardised coordinates ``z`` with
  ``x = x* + V diag(lambda^-1/2) z`` (``V, lambda`` the eigenpairs of the
  negative Hessian).  Non-centre points share one weight; the centre weight
  makes the design integrate a standard Gaussian and its second moments
  exactly (see ``ccd_design``);
* ``grid`` a regular grid of step ``dz`` in ``z``, kept where the log
  posterior is within ``diff_logdens`` of the mode; equal volume weights.

Point weights are ``design weight * exp(log post)``, normalised in log space.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special
from scipy.linalg import hadamard

from ..errors import ConfigError, ConvergenceError, DataError
from .laplace import LaplaceResult, laplace_fit
from .model import LatentModel

STRATEGIES = ("ccd", "grid", "eb")


@dataclass(frozen=True)
class GridConfig:
    strategy: str = "ccd"
    f0: float = 1.1
    dz: float = 0.5
    diff_logdens: float = 6.0
    zmax: float = 6.0
    fd_step: float = 1e-3
    hess_step: float = 0.02
    max_iter: int = 200
    mode_ftol: float = 1e-7
    newton_tol: float = 1e-8

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown grid strategy {self.strategy!r}")
        if not self.f0 > 1.0:
            raise ConfigError("f0 must exceed 1")
        if not (self.dz > 0 and self.fd_step > 0 and self.hess_step > 0):
            raise ConfigError("grid steps must be positive")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class HyperPoint:
    x: np.ndarray
    theta: dict
    log_evidence: float
    log_prior: float
    design_log_weight: float
    mode: np.ndarray
    weight: float = 0.0

    @property
    def log_post(self) -> float:
        return self.log_evidence + self.log_prior

    def to_dict(self) -> dict:
        return {
            "x": self.x.tolist(),
            "theta": self.theta,
            "log_evidence": self.log_evidence,
            "log_prior": self.log_prior,
            "design_log_weight": self.design_log_weight,
            "weight": self.weight,
            "mode": self.mode.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HyperPoint":
        return cls(
            np.array(d["x"], float),
            dict(d["theta"]),
            d["log_evidence"],
            d["log_prior"],
            d["design_log_weight"],
            np.array(d["mode"], float),
            d["weight"],
        )


class Evaluator:
    """Laplace fits on the internal scale with warm starts and a call counter."""

    def __init__(self, model: LatentModel, tol: float = 1e-8):
        self.model = model
        self.tol = tol
        self.calls = 0
        self.anchor = None  # latent mode used as the next warm start

    def fit(self, x, u0=None) -> LaplaceResult:
        self.calls += 1
        theta = self.model.theta_user(x)
        start = u0 if u0 is not None else self.anchor
        try:
            res = laplace_fit(self.model, theta, start, tol=self.tol)
        except ConvergenceError:
            if start is None:
                raise
            res = laplace_fit(self.model, theta, None, tol=self.tol)
        return res

    def log_post(self, x, u0=None):
        lp = self.model.log_prior_internal(x)
        if not np.isfinite(lp):
            return -np.inf, None
        res = self.fit(x, u0)
        return res.log_evidence + lp, res


def find_mode(ev: Evaluator, x0, cfg: GridConfig):
    """Maximise the log posterior with L-BFGS-B and forward-difference gradients."""
    model = ev.model
    bounds = [h.bounds for h in model.hypers]
    x0 = np.clip(np.asarray(x0, float), [b[0] for b in bounds], [b[1] for b in bounds])
    n = x0.size
    best = {"f": np.inf, "x": x0, "res": None}

    def fun(x):
        f0, res = ev.log_post(x)
        if res is None or not np.isfinite(f0):
            return 1e30, np.zeros(n)
        ev.anchor = res.mode
        if -f0 < best["f"]:
            best.update(f=-f0, x=x.copy(), res=res)
        grad = np.zeros(n)
        for i in range(n):
            h = cfg.fd_step if x[i] + cfg.fd_step <= bounds[i][1] else -cfg.fd_step
            xi = x.copy()
            xi[i] += h
            fi, _ = ev.log_post(xi, res.mode)
            grad[i] = -(fi - f0) / h if np.isfinite(fi) else 0.0
        ev.anchor = res.mode
        return -f0, grad

    out = optimize.minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=bounds, options={"maxiter": cfg.max_iter, "ftol": cfg.mode_ftol})
    if best["res"] is None:
        raise ConvergenceError("hyperparameter mode search found no finite point")
    return best["x"], best["res"], out


def hessian(ev: Evaluator, x, f_center, u_center, step) -> np.ndarray:
    """Negative Hessian of the log posterior by finite differences."""
    n = x.size
    H = np.zeros((n, n))
    plus = np.zeros(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        fp, _ = ev.log_post(x + e, u_center)
        fm, _ = ev.log_post(x - e, u_center)
        plus[i] = fp
        H[i, i] = -(fp - 2.0 * f_center + fm) / step**2
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros(n)
            e[i] = e[j] = step
            fpp, _ = ev.log_post(x + e, u_center)
            H[i, j] = H[j, i] = -(fpp - plus[i] - plus[j] + f_center) / step**2
    return H


def standardise(Hneg: np.ndarray):
    """Eigen-decomposition of the negative Hessian with non-positive curvature clipped."""
    vals, vecs = np.linalg.eigh(0.5 * (Hneg + Hneg.T))
    floor = 1e-6 * max(1.0, float(np.max(np.abs(vals))))
    vals = np.maximum(vals, floor)
    return vecs, vals


def ccd_design(n: int, f0: float):
    """CCD points z (rows) and log design weights.

    Non-centre points: the +-1 rows of a Hadamard matrix scaled to radius
    r = f0 sqrt(n), plus the 2n axial points +-r e_i (duplicates removed).
    With N - 1 non-centre points, a standard Gaussian density p integrates
    to one with matched second moments when the centre carries
    w_0 p(0) = 1 - 1/f0^2 and each other point w_1 p(r) = 1 / ((N - 1) f0^2),
    i.e. log(w_0 / w_1) = log((N - 1)(f0^2 - 1)) - r^2 / 2 in the
    convention where the weights multiply density values.
    """
    r = f0 * np.sqrt(n)
    m = 1
    while m < n + 1:
        m *= 2
    fact = hadamard(m)[:, 1 : n + 1].astype(float) * r / np.sqrt(n)
    axial = np.vstack([r * np.eye(n), -r * np.eye(n)])
    pts = np.unique(np.round(np.vstack([fact, axial]), 12), axis=0)
    N1 = pts.shape[0]
    z = np.vstack([np.zeros((1, n)), pts])
    logw = np.zeros(N1 + 1)
    logw[0] = np.log(N1 * (f0**2 - 1.0)) - 0.5 * r**2
    return z, logw


def grid_design(n: int, dz: float, zmax: float):
    k = int(np.floor(zmax / dz))
    axis = dz * np.arange(-k, k + 1)
    z = np.array(list(itertools.product(axis, repeat=n)))
    order = np.argsort(np.sum(z**2, axis=1), kind="stable")
    return z[order], np.zeros(z.shape[0])


@dataclass
class FitResult:
    """Integration points with normalised weights, plus the mode and curvature."""

    points: list
    strategy: str
    x_mode: np.ndarray
    neg_hessian: np.ndarray | None
    hyper_names: list
    n_laplace: int = 0
    info: dict = field(default_factory=dict)

    @property
    def weights(self) -> np.ndarray:
        return np.array([p.weight for p in self.points])

    def hyper_mean(self) -> dict:
        w = self.weights
        return {k: float(sum(wi * p.theta[k] for wi, p in zip(w, self.points))) for k in self.hyper_names}

    def to_dict(self) -> dict:
        return {
            "format": "firecast.latent_fit",
            "strategy": self.strategy,
            "hyper_names": list(self.hyper_names),
            "x_mode": self.x_mode.tolist(),
            "neg_hessian": None if self.neg_hessian is None else self.neg_hessian.tolist(),
            "n_laplace": self.n_laplace,
            "info": self.info,
            "points": [p.to_dict() for p in self.points],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        if d.get("format") != "firecast.latent_fit":
            raise DataError("not a serialised latent fit")
        H = d["neg_hessian"]
        return cls(
            [HyperPoint.from_dict(p) for p in d["points"]],
            d["strategy"],
            np.array(d["x_mode"], float),
            None if H is None else np.array(H, float),
            list(d["hyper_names"]),
            d["n_laplace"],
            d.get("info", {}),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=1)

    @classmethod
    def load(cls, path) -> "FitResult":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _normalise(points):
    logs = np.array([p.design_log_weight + p.log_post for p in points])
    w = np.exp(logs - special.logsumexp(logs))
    for p, wi in zip(points, w):
        p.weight = float(wi)


def hyper_grid(model: LatentModel, cfg: GridConfig = GridConfig(), x0=None) -> FitResult:
    ev = Evaluator(model, cfg.newton_tol)
    n = len(model.hypers)
    if n == 0:
        res = ev.fit(np.zeros(0))
        pt = HyperPoint(np.zeros(0), {}, res.log_evidence, 0.0, 0.0, res.mode, 1.0)
        return FitResult([pt], "eb", np.zeros(0), None, [], ev.calls)
    x_mode, res_mode, opt = find_mode(ev, model.initial_internal() if x0 is None else x0, cfg)
    lp_mode = model.log_prior_internal(x_mode)
    center = HyperPoint(x_mode, model.theta_user(x_mode), res_mode.log_evidence, lp_mode, 0.0, res_mode.mode)
    info = {"optimizer_message": str(opt.message), "optimizer_iterations": int(opt.nit)}
    if cfg.strategy == "eb":
        center.weight = 1.0
        return FitResult([center], "eb", x_mode, None, model.hyper_names, ev.calls, info)

    Hneg = hessian(ev, x_mode, center.log_post, res_mode.mode, cfg.hess_step)
    vecs, vals = standardise(Hneg)
    scale = vecs / np.sqrt(vals)
    if cfg.strategy == "ccd":
        z, logw = ccd_design(n, cfg.f0)
    else:
        z, logw = grid_design(n, cfg.dz, cfg.zmax)
    points = [center]
    for zk, lw in zip(z[1:] if cfg.strategy == "ccd" else z, logw[1:] if cfg.strategy == "ccd" else logw):
        if cfg.strategy == "grid" and not np.any(zk):
            continue
        x = x_mode + scale @ zk
        lo = np.array([h.bounds[0] for h in model.hypers])
        hi = np.array([h.bounds[1] for h in model.hypers])
        if np.any(x < lo - 5) or np.any(x > hi + 5):
            continue
        lpost, r = ev.log_post(x, res_mode.mode)
        if r is None or not np.isfinite(lpost):
            continue
        if cfg.strategy == "grid" and lpost < center.log_post - cfg.diff_logdens:
            continue
        points.append(HyperPoint(x, model.theta_user(x), r.log_evidence, lpost - r.log_evidence, float(lw), r.mode))
    if cfg.strategy == "ccd":
        center.design_log_weight = float(logw[0])
    _normalise(points)
    return FitResult(points, cfg.strategy, x_mode, Hneg, model.hyper_names, ev.calls, info)


def point_approx(model: LatentModel, point: HyperPoint, tol: float = 1e-8):
    """Recompute the Gaussian approximation at a stored integration point."""
    return laplace_fit(model, point.theta, point.mode, tol=tol)


def latent_marginals(model: LatentModel, fit: FitResult, idx, approxes=None):
    """Per-point means and variances of latent coordinates ``idx`` (arrays of shape (K, len(idx)))."""
    idx = np.atleast_1d(np.asarray(idx, int))
    means, variances = [], []
    for k, p in enumerate(fit.points):
        res = approxes[k] if approxes is not None else point_approx(model, p)
        means.append(res.mode[idx])
        variances.append(res.approx.marginal_variance(idx))
    return np.array(means), np.array(variances)


def mixture_quantile(weights, means, sds, q: float) -> float:
    """Quantile of a Gaussian mixture by bracketing root search."""
    weights = np.asarray(weights, float)
    f = lambda v: float(np.sum(weights * special.ndtr((v - means) / sds)) - q)
    lo = float(np.min(means - 10 * sds))
    hi = float(np.max(means + 10 * sds))
    return optimize.brentq(f, lo, hi, xtol=1e-12)


def credible_interval(model: LatentModel, fit: FitResult, index: int, level: float = 0.9, approxes=None):
    m, v = latent_marginals(model, fit, [index], approxes)
    w = fit.weights
    sd = np.sqrt(v[:, 0])
    a = 0.5 * (1.0 - level)
    return mixture_quantile(w, m[:, 0], sd, a), mixture_quantile(w, m[:, 0], sd, 1.0 - a)
