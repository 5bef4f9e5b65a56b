"""Gaussian (Laplace) approximation of the latent field for fixed hyperparameters.

For ``theta`` fixed, Newton's method maximises

    sum_i log p(y_i | eta_i) - u'(Q + C'C)u / 2   subject to  C u = 0

with each step projected onto the constraint set by conditioning on
``C u = 0`` (kriging).  At the mode ``u*`` with ``H = Q + C'C + A'WA`` and
``W = -d2 log p / d eta2`` the log evidence is

    sum_i log p(y_i | eta*_i) - u*'(Q + C'C)u*/2
        + (log|Q + C'C| - log|H| + log|C(Q + C'C)^-1 C'| - log|C H^-1 C'|) / 2.

It is exact when every likelihood is Gaussian.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ..errors import ConvergenceError
from .model import LatentModel


def _factor(H: np.ndarray):
    """Lower Cholesky factor, or None if H is not numerically positive definite."""
    try:
        return sla.cho_factor(H, lower=True, check_finite=False)
    except sla.LinAlgError:
        return None


def _damped_factor(H: np.ndarray):
    chol = _factor(H)
    if chol is not None:
        return chol, 0.0
    mu = 1e-8 * max(1.0, float(np.max(np.abs(np.diag(H)))))
    eye = np.eye(H.shape[0])
    for _ in range(40):
        chol = _factor(H + mu * eye)
        if chol is not None:
            return chol, mu
        mu *= 10.0
    raise ConvergenceError("could not damp the Newton system to positive definiteness")


@dataclass
class GaussianApprox:
    """N(mode, H^-1) conditioned on C u = 0."""

    mode: np.ndarray
    chol: tuple
    C: np.ndarray
    HinvCt: np.ndarray = field(init=False)
    S_chol: tuple | None = field(init=False)

    def __post_init__(self):
        if self.C.shape[0]:
            self.HinvCt = sla.cho_solve(self.chol, self.C.T, check_finite=False)
            self.S_chol = sla.cho_factor(self.C @ self.HinvCt, lower=True, check_finite=False)
        else:
            self.HinvCt = np.zeros((self.mode.size, 0))
            self.S_chol = None

    @property
    def dim(self) -> int:
        return self.mode.size

    def logdet_H(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol[0]))))

    def logdet_S(self) -> float:
        if self.S_chol is None:
            return 0.0
        return 2.0 * float(np.sum(np.log(np.diag(self.S_chol[0]))))

    def correct(self, X: np.ndarray) -> np.ndarray:
        """Kriging correction of columns of X onto C x = C mode."""
        if self.S_chol is None:
            return X
        resid = self.C @ X - (self.C @ self.mode)[:, None] if X.ndim == 2 else self.C @ X - self.C @ self.mode
        lam = sla.cho_solve(self.S_chol, resid, check_finite=False)
        return X - self.HinvCt @ lam

    def sample(self, rng, n: int) -> np.ndarray:
        """n draws as columns of a (dim, n) array."""
        z = rng.standard_normal((self.dim, n))
        L = self.chol[0]
        x = sla.solve_triangular(L, z, lower=True, trans="T", check_finite=False)
        return self.correct(self.mode[:, None] + x)

    def covariance_of(self, B) -> np.ndarray:
        """Covariance of B u for a (k, dim) matrix B."""
        B = np.asarray(B.toarray() if sp.issparse(B) else B, float)
        X = sla.cho_solve(self.chol, B.T, check_finite=False)
        cov = B @ X
        if self.S_chol is not None:
            BW = B @ self.HinvCt
            cov = cov - BW @ sla.cho_solve(self.S_chol, BW.T, check_finite=False)
        return 0.5 * (cov + cov.T)

    def marginal_variance(self, idx) -> np.ndarray:
        idx = np.atleast_1d(np.asarray(idx, int))
        E = np.zeros((idx.size, self.dim))
        E[np.arange(idx.size), idx] = 1.0
        return np.diag(self.covariance_of(E)).copy()


@dataclass
class LaplaceResult:
    theta: dict
    mode: np.ndarray
    log_evidence: float
    loglik: float
    iterations: int
    approx: GaussianApprox
    clipped: bool
    trace: list


def _project(v, C, CCt_chol):
    if C.shape[0] == 0:
        return v
    return v - C.T @ sla.cho_solve(CCt_chol, C @ v, check_finite=False)


def _make_feasible(model: LatentModel, u, A, theta):
    """Raise eGP intercepts until every positive response lies inside the support."""
    eta = A @ u
    for lik in model.likelihoods:
        lo = lik.min_feasible_eta(theta)
        if lo is None or lik.intercept is None:
            continue
        gap = np.max(lo - eta[lik.start : lik.stop])
        if gap > -1e-3:
            u = u.copy()
            u[lik.intercept] += gap + 0.5
            eta = A @ u
    return u


def laplace_fit(model: LatentModel, theta: dict, u0=None, tol: float = 1e-8, max_iter: int = 100) -> LaplaceResult:
    Qp, logdet_Q, logdet_CQ = model.prior(theta)
    A = model.design.matrix(theta)
    At = A.T.tocsr()
    C = model.constraints
    CCt = sla.cho_factor(C @ C.T, lower=True) if C.shape[0] else None
    u = np.zeros(model.dim) if u0 is None else np.array(u0, float)
    u = _project(u, C, CCt)
    u = _make_feasible(model, u, A, theta)

    def objective(v):
        with np.errstate(all="ignore"):
            val, _, _ = model.loglik(A @ v, theta)
            s = val.sum()
        return s - 0.5 * v @ (Qp @ v) if np.isfinite(s) else -np.inf

    trace = []
    stalled = False
    for it in range(max_iter + 1):
        val, g, h = model.loglik(A @ u, theta)
        f = val.sum() - 0.5 * u @ (Qp @ u)
        grad = At @ g - Qp @ u
        gnorm = float(np.max(np.abs(_project(grad, C, CCt)))) if grad.size else 0.0
        trace.append({"iter": it, "objective": float(f), "grad_max": gnorm})
        H = Qp + (At @ sp.diags(-h) @ A).toarray()
        if gnorm < tol or stalled:
            break
        if it == max_iter:
            raise ConvergenceError(f"Newton did not converge in {max_iter} iterations", trace)
        chol, _ = _damped_factor(H)
        d = sla.cho_solve(chol, grad, check_finite=False)
        if C.shape[0]:
            HCt = sla.cho_solve(chol, C.T, check_finite=False)
            d = d - HCt @ np.linalg.solve(C @ HCt, C @ d)
        step, accepted = 1.0, False
        slack = 1e-12 * (1.0 + abs(f))
        while step > 1e-10:
            cand = u + step * d
            fc = objective(cand)
            if np.isfinite(fc) and fc >= f - slack:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no ascent available: stationary up to rounding if the Newton decrement is negligible
            if grad @ d < 1e-12 * (1.0 + abs(f)):
                stalled = True
                continue
            raise ConvergenceError("line search failed", trace)
        u = cand

    clipped = False
    chol = _factor(H)
    if chol is None:
        # not a strict maximum in every direction; fall back to the non-negative curvature part
        clipped = True
        H = Qp + (At @ sp.diags(np.maximum(-h, 0.0)) @ A).toarray()
        chol, _ = _damped_factor(H)
    approx = GaussianApprox(u, chol, C)
    loglik = float(val.sum())
    log_ev = (
        loglik
        - 0.5 * u @ (Qp @ u)
        + 0.5 * (logdet_Q - approx.logdet_H() + logdet_CQ - approx.logdet_S())
    )
    return LaplaceResult(dict(theta), u, float(log_ev), loglik, it, approx, clipped, trace)
