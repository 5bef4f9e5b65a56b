"""Prior precision blocks for the latent field.

Every block knows its dimension, its linear sum-to-zero constraints and how
to produce, for given hyperparameter values, the *constrained-proper*
precision ``Q + C'C`` together with ``log|Q + C'C|`` and
``log|C (Q + C'C)^{-1} C'|``.  For an intrinsic block (RW1, ICAR) the
Gaussian N(0, (Q + C'C)^{-1}) conditioned on ``C u = 0`` is exactly the
intrinsic prior restricted to the constraint set, so these two log
determinants are all the Laplace evidence needs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from ..errors import ConfigError, DataError


def rw1_structure(n: int) -> sp.csr_matrix:
    """First-difference structure matrix D with x'Dx = sum (x_k - x_{k-1})^2."""
    if n < 2:
        raise ConfigError("a random walk needs at least two bins")
    main = np.full(n, 2.0)
    main[[0, -1]] = 1.0
    off = -np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def icar_structure(edges, n: int) -> sp.csr_matrix:
    """Graph Laplacian Diag(degree) - Adjacency of an undirected graph."""
    edges = np.asarray(edges, int).reshape(-1, 2)
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        raise DataError("edge index out of range")
    if np.any(edges[:, 0] == edges[:, 1]):
        raise DataError("self-loops are not allowed")
    i, j = edges[:, 0], edges[:, 1]
    W = sp.coo_matrix((np.ones(2 * len(i)), (np.r_[i, j], np.r_[j, i])), shape=(n, n)).tocsr()
    W.data[:] = 1.0  # duplicate edges count once
    return (sp.diags(np.asarray(W.sum(axis=1)).ravel()) - W).tocsr()


def components(edges, n: int) -> np.ndarray:
    edges = np.asarray(edges, int).reshape(-1, 2)
    adj = sp.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    return connected_components(adj, directed=False)[1]


def component_constraints(labels: np.ndarray, skip_singletons: bool = False) -> np.ndarray:
    """One indicator row per connected component."""
    rows = []
    for c in np.unique(labels):
        members = labels == c
        if skip_singletons and members.sum() == 1:
            continue
        rows.append(members.astype(float))
    return np.array(rows).reshape(-1, labels.size)


@dataclass
class ScaledIcar:
    """ICAR structure scaled so the geometric mean of constrained marginal variances is 1.

    Scaling is per connected component.  Singletons have no neighbours, so
    their structured part is pinned to zero by their own constraint.
    ``eigvals``/``eigvecs`` diagonalise the constrained covariance (the
    generalised inverse of the scaled structure); null directions have
    eigenvalue 0.
    """

    structure: np.ndarray
    constraints: np.ndarray
    scale: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray

    @property
    def n(self) -> int:
        return self.structure.shape[0]

    def covariance(self) -> np.ndarray:
        return (self.eigvecs * self.eigvals) @ self.eigvecs.T


def build_icar_scaled(edges, n: int) -> ScaledIcar:
    R = icar_structure(edges, n).toarray()
    labels = components(edges, n)
    C = component_constraints(labels)
    scale = np.ones(n)
    for c in np.unique(labels):
        idx = np.nonzero(labels == c)[0]
        if idx.size == 1:
            continue
        Rc = R[np.ix_(idx, idx)]
        # generalised inverse under the sum-to-zero constraint
        ones = np.ones((idx.size, 1))
        cov = np.linalg.inv(Rc + ones @ ones.T) - ones @ ones.T / idx.size**2
        scale[idx] = np.exp(np.mean(np.log(np.diag(cov))))
    # scaling the structure by s divides the variances by s
    s = np.sqrt(scale)
    Rs = R * np.outer(s, s)
    # each component's scale is constant on the component, so this equals s_c * R_c blockwise
    vals, vecs = np.linalg.eigh(Rs)
    tol = 1e-9 * max(1.0, np.abs(vals).max())
    null = vals < tol
    if null.sum() != C.shape[0]:
        raise DataError("unexpected rank deficiency in the ICAR structure")
    cov_vals = np.where(null, 0.0, 1.0 / np.where(null, 1.0, vals))
    return ScaledIcar(Rs, C, scale, cov_vals, vecs)


def bym2_covariance(icar: ScaledIcar, tau: float, phi: float) -> np.ndarray:
    """(1/tau) [(1 - phi) I + phi Sigma_icar]."""
    return ((1.0 - phi) * np.eye(icar.n) + phi * icar.covariance()) / tau


def bym2_precision(icar: ScaledIcar, tau: float, phi: float) -> tuple:
    """Direct BYM2 precision and its log determinant (proper for phi < 1)."""
    lam = (1.0 - phi) + phi * icar.eigvals
    Q = tau * (icar.eigvecs / lam) @ icar.eigvecs.T
    return 0.5 * (Q + Q.T), icar.n * np.log(tau) - np.sum(np.log(lam))


def bym2_augmented_precision(icar: ScaledIcar, tau: float, phi: float) -> sp.csr_matrix:
    """Joint sparse precision of (b, delta) with b | delta ~ N(sqrt(phi/tau) delta, (1-phi)/tau I).

    ``delta`` is the scaled ICAR component and carries the ICAR constraints;
    marginally ``b`` has the direct BYM2 covariance.
    """
    n = icar.n
    eye = sp.identity(n, format="csr")
    a = tau / (1.0 - phi)
    c = -np.sqrt(phi * tau) / (1.0 - phi)
    return sp.bmat(
        [[a * eye, c * eye], [c * eye, sp.csr_matrix(icar.structure) + phi / (1.0 - phi) * eye]],
        format="csr",
    )


def bin_covariate(values, n_bins: int = 20, mask=None, edges=None):
    """Quantile bins (0-based) of ``values``.

    Edges come from the training ``values[mask]`` unless ``edges`` (inner
    edges from an earlier call) are supplied; values beyond the outer
    edges clamp to the first or last bin.  Returns ``(index, inner_edges)``.
    """
    values = np.asarray(values, float)
    if edges is None:
        train = values if mask is None else values[np.asarray(mask, bool)]
        if train.size == 0:
            raise DataError("no training values to bin")
        q = np.quantile(train, np.linspace(0.0, 1.0, n_bins + 1))
        inner = np.unique(q[1:-1])
        if inner.size < n_bins - 1:
            warnings.warn(f"only {inner.size + 1} distinct bins out of {n_bins}", RuntimeWarning, stacklevel=2)
        edges = inner
    edges = np.asarray(edges, float)
    return np.searchsorted(edges, values, side="right"), edges


# ------------------------------------------------------------------ blocks


class Block:
    """Latent block interface; ``hyper`` lists the hyperparameter names it reads."""

    kind = "abstract"
    hyper: tuple = ()

    def __init__(self, dim: int):
        self.dim = int(dim)

    @property
    def constraints(self) -> np.ndarray:
        return np.zeros((0, self.dim))

    def prior(self, theta: dict):
        """(Q + C'C as dense array, log|Q + C'C|, log|C (Q + C'C)^-1 C'|)."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class FixedGaussian(Block):
    """Independent N(0, variance) coordinates with fixed variance (intercepts)."""

    kind = "fixed"

    def __init__(self, dim: int, variance: float):
        super().__init__(dim)
        if not variance > 0:
            raise ConfigError("variance must be positive")
        self.variance = float(variance)

    def prior(self, theta):
        prec = 1.0 / self.variance
        return np.eye(self.dim) * prec, self.dim * np.log(prec), 0.0

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim, "variance": self.variance}


class IidBlock(Block):
    kind = "iid"

    def __init__(self, dim: int, tau: str):
        super().__init__(dim)
        self.hyper = (tau,)

    def prior(self, theta):
        tau = theta[self.hyper[0]]
        return np.eye(self.dim) * tau, self.dim * np.log(tau), 0.0

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim, "tau": self.hyper[0]}


class Rw1Block(Block):
    kind = "rw1"

    def __init__(self, dim: int, tau: str):
        super().__init__(dim)
        self.hyper = (tau,)
        self.D = rw1_structure(dim).toarray()
        self._C = np.ones((1, dim))
        # log|D + 11'| restricted: eigenvalues of D on 1-perp, plus n from 11'
        vals = np.linalg.eigvalsh(self.D)
        self._logdet_struct = float(np.sum(np.log(vals[1:])))

    @property
    def constraints(self):
        return self._C

    def prior(self, theta):
        tau = theta[self.hyper[0]]
        Qp = tau * self.D + self._C.T @ self._C
        # 1 is an eigenvector of Qp with eigenvalue n, so C Qp^-1 C' = n / n
        logdet = np.log(self.dim) + (self.dim - 1) * np.log(tau) + self._logdet_struct
        return Qp, logdet, 0.0

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim, "tau": self.hyper[0]}


class Bym2Block(Block):
    """BYM2 effect replicated independently over ``n_groups`` groups (group-major order).

    Coordinate ``g * n_spatial + s`` is unit ``s`` in group ``g``.  The
    direct parameterisation is proper for phi < 1 and needs no constraint.
    """

    kind = "bym2"

    def __init__(self, edges, n_spatial: int, n_groups: int, tau: str, phi: str):
        super().__init__(n_spatial * n_groups)
        self.edges = np.asarray(edges, int).reshape(-1, 2)
        self.n_spatial = int(n_spatial)
        self.n_groups = int(n_groups)
        self.hyper = (tau, phi)
        self.icar = build_icar_scaled(self.edges, self.n_spatial)

    def spatial_precision(self, theta):
        return bym2_precision(self.icar, theta[self.hyper[0]], theta[self.hyper[1]])

    def prior(self, theta):
        Q, logdet = self.spatial_precision(theta)
        return np.kron(np.eye(self.n_groups), Q), self.n_groups * logdet, 0.0

    def to_dict(self):
        return {
            "kind": self.kind,
            "edges": self.edges.tolist(),
            "n_spatial": self.n_spatial,
            "n_groups": self.n_groups,
            "tau": self.hyper[0],
            "phi": self.hyper[1],
        }


def group_kron(precision: np.ndarray, n_groups: int) -> sp.csr_matrix:
    """Independent replicates of a spatial precision, group-major."""
    return sp.kron(sp.identity(n_groups), sp.csr_matrix(precision), format="csr")


def group_index(t, scheme: str, n_months: int | None = None, first_month: int = 1):
    """Group of month index ``t``: calendar month (12 groups) or the index itself."""
    t = np.asarray(t, int)
    if scheme == "calendar_month":
        return (t + first_month - 1) % 12
    if scheme == "unique_time":
        if n_months is not None and np.any((t < 0) | (t >= n_months)):
            raise DataError("time index outside the grouping range")
        return t
    raise ConfigError(f"unknown grouping scheme {scheme!r}")


def block_from_dict(d: dict) -> Block:
    kind = d["kind"]
    if kind == "fixed":
        return FixedGaussian(d["dim"], d["variance"])
    if kind == "iid":
        return IidBlock(d["dim"], d["tau"])
    if kind == "rw1":
        return Rw1Block(d["dim"], d["tau"])
    if kind == "bym2":
        return Bym2Block(d["edges"], d["n_spatial"], d["n_groups"], d["tau"], d["phi"])
    raise ConfigError(f"unknown block kind {kind!r}")
