"""Generic latent Gaussian model: blocks, design, likelihood bindings, hyperparameters.

The latent vector stacks the named effects in order.  The linear
predictor is ``eta = A(theta) u`` where design entries may be multiplied
by a scaling hyperparameter (a "slot"); every observation group binds a
contiguous range of ``eta`` rows to one likelihood family.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..distributions import (
    AltLikelihoodParams,
    _unit_quantile,
    alt_loglik_eta,
    bernoulli_loglik_eta,
    egp_loglik_eta,
    gaussian_loglik_eta,
    trunc_poisson_loglik_eta,
)
from ..errors import ConfigError, DataError
from .blocks import Block, Bym2Block, block_from_dict
from .priors import Hyper

FAMILIES = ("bernoulli", "tpois", "egp", "gamma", "weibull", "gaussian")


@dataclass
class Design:
    """Sparse design in triplet form; ``slot[k] >= 0`` scales entry k by hyperparameter ``slot_names[slot[k]]``."""

    n_rows: int
    n_cols: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    slot: np.ndarray
    slot_names: list = field(default_factory=list)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, np.int64)
        self.cols = np.asarray(self.cols, np.int64)
        self.vals = np.asarray(self.vals, float)
        self.slot = np.asarray(self.slot, np.int64)
        n = self.rows.size
        if not (self.cols.size == self.vals.size == self.slot.size == n):
            raise DataError("design triplets have different lengths")
        if n and (self.rows.max() >= self.n_rows or self.cols.max() >= self.n_cols):
            raise DataError("design index out of range")

    def matrix(self, theta: dict) -> sp.csr_matrix:
        v = self.vals.copy()
        for k, name in enumerate(self.slot_names):
            v[self.slot == k] *= theta[name]
        return sp.csr_matrix((v, (self.rows, self.cols)), shape=(self.n_rows, self.n_cols))

    def to_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "n_cols": self.n_cols,
            "rows": self.rows.tolist(),
            "cols": self.cols.tolist(),
            "vals": self.vals.tolist(),
            "slot": self.slot.tolist(),
            "slot_names": list(self.slot_names),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Design":
        return cls(d["n_rows"], d["n_cols"], d["rows"], d["cols"], d["vals"], d["slot"], d["slot_names"])


class DesignBuilder:
    """Accumulates design triplets row by row."""

    def __init__(self, n_cols: int):
        self.n_cols = n_cols
        self.n_rows = 0
        self._r, self._c, self._v, self._s = [], [], [], []
        self.slot_names = []

    def add_rows(self, n: int) -> int:
        start = self.n_rows
        self.n_rows += n
        return start

    def add(self, rows, cols, vals=1.0, slot: str | None = None):
        rows = np.asarray(rows, np.int64)
        cols = np.broadcast_to(np.asarray(cols, np.int64), rows.shape)
        vals = np.broadcast_to(np.asarray(vals, float), rows.shape)
        if slot is None:
            k = -1
        else:
            if slot not in self.slot_names:
                self.slot_names.append(slot)
            k = self.slot_names.index(slot)
        self._r.append(rows)
        self._c.append(cols)
        self._v.append(vals)
        self._s.append(np.full(rows.shape, k))

    def build(self) -> Design:
        cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)
        return Design(
            self.n_rows,
            self.n_cols,
            cat(self._r, np.int64),
            cat(self._c, np.int64),
            cat(self._v, float),
            cat(self._s, np.int64),
            list(self.slot_names),
        )


@dataclass
class Likelihood:
    """Observation group: ``family`` on eta rows ``start .. start + len(y)``.

    ``hyper`` maps family parameters to hyperparameter names (``xi``,
    ``kappa`` for eGP; ``shape`` for gamma/weibull; ``precision`` for the
    Gaussian test binding) or to fixed numbers.  ``intercept`` is the latent
    column used to restore feasibility of eGP start values.
    """

    name: str
    family: str
    y: np.ndarray
    start: int
    hyper: dict = field(default_factory=dict)
    intercept: int | None = None
    alpha: float = 0.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown likelihood family {self.family!r}")
        self.y = np.asarray(self.y, float)
        if self.family == "bernoulli" and not np.all((self.y == 0) | (self.y == 1)):
            raise DataError("Bernoulli outcomes must be 0 or 1")
        if self.family == "tpois" and np.any((self.y < 1) | (self.y != np.floor(self.y))):
            raise DataError("zero-truncated counts must be integers >= 1")
        if self.family in ("egp", "gamma", "weibull") and np.any(~(self.y > 0)):
            raise DataError(f"{self.family} responses must be positive")

    @property
    def stop(self) -> int:
        return self.start + self.y.size

    def param(self, key: str, theta: dict) -> float:
        v = self.hyper[key]
        return float(theta[v]) if isinstance(v, str) else float(v)

    def evaluate(self, eta, theta: dict):
        f = self.family
        if f == "bernoulli":
            return bernoulli_loglik_eta(self.y, eta)
        if f == "tpois":
            return trunc_poisson_loglik_eta(self.y, eta)
        if f == "egp":
            return egp_loglik_eta(self.y, eta, self.param("xi", theta), self.param("kappa", theta), self.alpha)
        if f in ("gamma", "weibull"):
            return alt_loglik_eta(self.y, eta, AltLikelihoodParams(f, self.param("shape", theta)))
        return gaussian_loglik_eta(self.y, eta, self.param("precision", theta))

    def min_feasible_eta(self, theta: dict):
        """Per-row lower bound on eta for an eGP with xi < 0 (None otherwise)."""
        if self.family != "egp":
            return None
        xi = self.param("xi", theta)
        if xi >= 0:
            return None
        q = _unit_quantile(self.alpha, xi, self.param("kappa", theta))
        return np.log(self.y * (-xi) * q)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "family": self.family,
            "y": self.y.tolist(),
            "start": self.start,
            "hyper": dict(self.hyper),
            "intercept": self.intercept,
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Likelihood":
        return cls(d["name"], d["family"], d["y"], d["start"], d["hyper"], d["intercept"], d["alpha"])


class LatentModel:
    """Blocks + design + likelihoods + hyperparameters."""

    def __init__(self, effects, design: Design, likelihoods, hypers, meta=None):
        self.effects = list(effects)  # [(name, Block)]
        self.design = design
        self.likelihoods = list(likelihoods)
        self.hypers = list(hypers)
        self.meta = dict(meta or {})
        self.offsets = {}
        off = 0
        for name, block in self.effects:
            if name in self.offsets:
                raise ConfigError(f"duplicate effect name {name!r}")
            self.offsets[name] = off
            off += block.dim
        self.dim = off
        if design.n_cols != self.dim:
            raise DataError(f"design has {design.n_cols} columns, latent dimension is {self.dim}")
        covered = np.zeros(design.n_rows, int)
        for lik in self.likelihoods:
            if lik.stop > design.n_rows:
                raise DataError(f"likelihood {lik.name!r} exceeds the design rows")
            covered[lik.start : lik.stop] += 1
        if np.any(covered > 1):
            raise DataError("likelihood groups overlap")
        names = [h.name for h in self.hypers]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate hyperparameter names")
        needed = set(design.slot_names)
        for _, b in self.effects:
            needed |= set(b.hyper)
        for lik in self.likelihoods:
            needed |= {v for v in lik.hyper.values() if isinstance(v, str)}
        missing = needed - set(names)
        if missing:
            raise ConfigError(f"hyperparameters without a prior: {sorted(missing)}")
        C = []
        for name, b in self.effects:
            Cb = b.constraints
            if Cb.shape[0]:
                full = np.zeros((Cb.shape[0], self.dim))
                full[:, self.offsets[name] : self.offsets[name] + b.dim] = Cb
                C.append(full)
        self.constraints = np.vstack(C) if C else np.zeros((0, self.dim))

    # ---- hyperparameters
    @property
    def hyper_names(self) -> list:
        return [h.name for h in self.hypers]

    def theta_user(self, x) -> dict:
        return {h.name: h.to_user(v) for h, v in zip(self.hypers, np.asarray(x, float))}

    def theta_internal(self, theta: dict) -> np.ndarray:
        return np.array([h.to_internal(theta[h.name]) for h in self.hypers])

    def initial_internal(self) -> np.ndarray:
        return np.array([h.to_internal(h.init) for h in self.hypers])

    def log_prior_internal(self, x) -> float:
        return float(sum(h.log_prior_internal(v) for h, v in zip(self.hypers, np.asarray(x, float))))

    # ---- latent prior
    def prior(self, theta: dict):
        """Dense block-diagonal Q + C'C, log|Q + C'C| and log|C (Q + C'C)^-1 C'|."""
        Qp = np.zeros((self.dim, self.dim))
        logdet = 0.0
        logdet_c = 0.0
        for name, b in self.effects:
            Qb, ld, ldc = b.prior(theta)
            o = self.offsets[name]
            Qp[o : o + b.dim, o : o + b.dim] = Qb
            logdet += ld
            logdet_c += ldc
        return Qp, logdet, logdet_c

    def slice(self, name: str) -> slice:
        o = self.offsets[name]
        return slice(o, o + dict(self.effects)[name].dim)

    # ---- likelihood
    def loglik(self, eta, theta: dict):
        """Per-row (value, d/deta, d2/deta2); rows without a likelihood contribute zeros."""
        v = np.zeros(eta.size)
        g = np.zeros(eta.size)
        h = np.zeros(eta.size)
        for lik in self.likelihoods:
            s = slice(lik.start, lik.stop)
            v[s], g[s], h[s] = lik.evaluate(eta[s], theta)
        return v, g, h

    def likelihood(self, name: str) -> Likelihood:
        for lik in self.likelihoods:
            if lik.name == name:
                return lik
        raise KeyError(name)

    # ---- persistence
    def to_dict(self) -> dict:
        return {
            "format": "firecast.latent_model",
            "effects": [{"name": n, "block": b.to_dict()} for n, b in self.effects],
            "design": self.design.to_dict(),
            "likelihoods": [lik.to_dict() for lik in self.likelihoods],
            "hypers": [h.to_dict() for h in self.hypers],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LatentModel":
        if d.get("format") != "firecast.latent_model":
            raise DataError("not a serialised latent model")
        effects = [(e["name"], block_from_dict(e["block"])) for e in d["effects"]]
        eig = {}
        for _, b in effects:
            if isinstance(b, Bym2Block):
                eig[b.hyper[1]] = b.icar.eigvals
        hypers = [Hyper.from_dict(h, eig.get(h["name"])) for h in d["hypers"]]
        likelihoods = [Likelihood.from_dict(x) for x in d["likelihoods"]]
        return cls(effects, Design.from_dict(d["design"]), likelihoods, hypers, d.get("meta"))


def phi_eigvals(effects) -> dict:
    """Map each BYM2 mixing hyperparameter to its spatial covariance eigenvalues."""
    return {b.hyper[1]: b.icar.eigvals for _, b in effects if isinstance(b, Bym2Block)}


__all__ = ["Block", "Design", "DesignBuilder", "LatentModel", "Likelihood", "phi_eigvals"]
