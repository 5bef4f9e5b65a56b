"""Second-order losses on the raw (log-link) score."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, DomainError

LOSSES = ("poisson", "tweedie", "squared")


def check_loss(loss: str, power: float = 1.5):
    if loss not in LOSSES:
        raise ConfigError(f"unknown loss {loss!r}; expected one of {LOSSES}")
    if loss == "tweedie" and not 1.0 < power < 2.0:
        raise ConfigError(f"Tweedie power must lie in (1, 2), got {power}")


def check_targets(y, loss: str):
    y = np.asarray(y, float)
    if not np.all(np.isfinite(y)):
        raise DomainError("targets must be finite")
    if loss == "poisson" and (np.any(y < 0) or np.any(y != np.floor(y))):
        raise DomainError("Poisson targets must be non-negative integers")
    if loss == "tweedie" and np.any(y < 0):
        raise DomainError("Tweedie targets must be non-negative")
    return y


def loss_grad_hess(y, s, loss: str = "poisson", power: float = 1.5):
    """Gradient and Hessian of the loss with respect to the raw score ``s``.

    Poisson and Tweedie use half the unit deviance, so ``g`` and ``h`` are
    exact derivatives of ``0.5 * deviance(y, exp(s))``.  The squared loss
    (identity link) is a sanity mode with ``g = s - y`` and ``h = 1``.
    """
    y = np.asarray(y, float)
    s = np.asarray(s, float)
    if loss == "poisson":
        mu = np.exp(s)
        return mu - y, mu
    if loss == "tweedie":
        a = np.exp((1.0 - power) * s)
        b = np.exp((2.0 - power) * s)
        return -y * a + b, -(1.0 - power) * y * a + (2.0 - power) * b
    if loss == "squared":
        return s - y, np.ones(np.broadcast(y, s).shape)
    raise ConfigError(f"unknown loss {loss!r}")


def poisson_deviance(y, yhat):
    y = np.asarray(y, float)
    yhat = np.asarray(yhat, float)
    from scipy.special import xlogy

    return 2.0 * (xlogy(y, y) - xlogy(y, yhat) - (y - yhat))


def tweedie_deviance(y, yhat, k: float = 1.5):
    """Unit Tweedie deviance for 1 < k < 2 (elementwise)."""
    y = np.asarray(y, float)
    yhat = np.asarray(yhat, float)
    if not 1.0 < k < 2.0:
        raise DomainError("Tweedie power must lie in (1, 2)")
    if np.any(y < 0) or np.any(~(yhat > 0)):
        raise DomainError("need y >= 0 and yhat > 0")
    out = 2.0 * (
        np.maximum(y, 0.0) ** (2.0 - k) / ((1.0 - k) * (2.0 - k))
        - y * yhat ** (1.0 - k) / (1.0 - k)
        + yhat ** (2.0 - k) / (2.0 - k)
    )
    # exact zero at y == yhat is lost to rounding in the three-term sum
    out = np.maximum(out, 0.0)
    return out if out.ndim else float(out)


def unit_deviance(y, yhat, loss: str, power: float = 1.5):
    if loss == "poisson":
        return poisson_deviance(y, yhat)
    if loss == "tweedie":
        return tweedie_deviance(y, yhat, power)
    return (np.asarray(y, float) - np.asarray(yhat, float)) ** 2


def inverse_link(raw, loss: str):
    return np.asarray(raw, float) if loss == "squared" else np.exp(raw)


def initial_score(y, loss: str) -> float:
    """Raw score of the best constant model: log of the mean (mean for squared)."""
    m = float(np.mean(y))
    if loss == "squared":
        return m
    return float(np.log(max(m, 1e-12)))
