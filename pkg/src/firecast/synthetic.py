"""Synthetic lattice panels drawn from the hurdle model.

Councils sit on an ``rows x cols`` rook lattice and are grouped into
rectangular districts.  For every council-month the three predictors are

    eta_Z = b0_Z +      Gc + Gd + T_Z + sum_p gamma_Zp x_p(origin)
    eta_C = b0_C + b1_C Gc + b2_C Gd + T_C + sum_p gamma_Cp x_p(origin)
    eta_B = b0_B + b1_B Gc + b2_B Gd + T_B + sum_p gamma_Bp x_p(origin)

with ``Gc`` a council BYM2 effect per calendar month, ``Gd`` a district
BYM2 effect per month and ``T_*`` year effects, all drawn from their
priors at the true hyperparameters.  Covariates act through their value
one month before the target (the forecast origin), so a one-step-ahead
forecaster can learn them and the spatial-temporal effects alone cannot.
Each fire cell is split into individual events whose areas sum to the cell
total; the panel is the aggregate of those events.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from .distributions import _unit_quantile, egp_sigma, trunc_poisson_sample
from .errors import ConfigError
from .features import (
    CovariateTable,
    CouncilMonthPanel,
    FireEvent,
    UnitTable,
    aggregate,
    write_covariates,
    write_edges,
    write_events,
    write_units,
)
from .latent.blocks import build_icar_scaled, bym2_covariance

PREDICTORS = ("Z", "C", "B")


def _default_intercepts():
    return {"Z": -0.5, "C": 0.3, "B": 2.5}


def _default_hyper():
    return {
        "xi": 0.15,
        "kappa": 1.2,
        "tau_Gc": 4.0,
        "phi_Gc": 0.6,
        "tau_Gd": 6.25,
        "phi_Gd": 0.5,
        "tau_T_Z": 25.0,
        "tau_T_C": 25.0,
        "tau_T_B": 25.0,
        "beta1_C": 0.5,
        "beta2_C": 0.3,
        "beta1_B": 0.4,
        "beta2_B": 0.3,
    }


def _default_effects():
    return {"Z": {"x1": 1.2}, "C": {"x2": 0.4}, "B": {"x2": 0.8}}


@dataclass
class SyntheticSpec:
    rows: int = 6
    cols: int = 6
    district_shape: tuple = (3, 3)
    n_months: int = 48
    start: tuple = (2000, 1)
    covariates: tuple = ("x1", "x2")
    intercepts: dict = field(default_factory=_default_intercepts)
    hyper: dict = field(default_factory=_default_hyper)
    effects: dict = field(default_factory=_default_effects)
    alpha: float = 0.5

    def __post_init__(self):
        self.district_shape = tuple(self.district_shape)
        self.start = tuple(self.start)
        self.covariates = tuple(self.covariates)
        if self.rows < 1 or self.cols < 1 or self.rows * self.cols < 2:
            raise ConfigError("the lattice needs at least two councils")
        if min(self.district_shape) < 1:
            raise ConfigError("district blocks must be at least 1 x 1")
        if self.n_months < 2:
            raise ConfigError("need at least two months")
        h = self.hyper
        missing = set(_default_hyper()) - set(h)
        if missing:
            raise ConfigError(f"missing true hyperparameters: {sorted(missing)}")
        if set(self.intercepts) != set(PREDICTORS):
            raise ConfigError("intercepts need exactly the keys Z, C, B")
        if not -0.5 < h["xi"] < 0.5 or not h["kappa"] > 0:
            raise ConfigError("xi must lie in (-0.5, 0.5) and kappa must be positive")
        for k in ("phi_Gc", "phi_Gd"):
            if not 0.0 <= h[k] < 1.0:
                raise ConfigError(f"{k} must lie in [0, 1)")
        for k in ("tau_Gc", "tau_Gd", "tau_T_Z", "tau_T_C", "tau_T_B"):
            if not h[k] > 0:
                raise ConfigError(f"{k} must be positive")
        for p, eff in self.effects.items():
            if p not in PREDICTORS:
                raise ConfigError(f"unknown predictor {p!r} in covariate effects")
            unknown = set(eff) - set(self.covariates)
            if unknown:
                raise ConfigError(f"effects reference unknown covariates {sorted(unknown)}")

    @property
    def n_units(self) -> int:
        return self.rows * self.cols

    def to_dict(self) -> dict:
        d = asdict(self)
        d["district_shape"] = list(self.district_shape)
        d["start"] = list(self.start)
        d["covariates"] = list(self.covariates)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad synthetic spec: {exc}") from exc


def lattice(spec: SyntheticSpec):
    """Unit table, council edges and district edges of the lattice."""
    r, c = spec.rows, spec.cols
    br, bc = spec.district_shape
    n_dc = -(-c // bc)
    ids, districts, lon, lat = [], [], [], []
    for i in range(r):
        for j in range(c):
            ids.append(f"c{i:02d}{j:02d}")
            districts.append(f"d{(i // br) * n_dc + j // bc:02d}")
            lon.append(float(j))
            lat.append(float(i))
    units = UnitTable(ids, districts, lon, lat)
    council = [(i * c + j, i * c + j + 1) for i in range(r) for j in range(c - 1)]
    council += [(i * c + j, (i + 1) * c + j) for i in range(r - 1) for j in range(c)]
    n_dr = -(-r // br)
    dpos = {d: k for k, d in enumerate(units.district_ids)}
    dist = set()
    for i in range(n_dr):
        for j in range(n_dc):
            here = dpos[f"d{i * n_dc + j:02d}"]
            if j + 1 < n_dc:
                dist.add(tuple(sorted((here, dpos[f"d{i * n_dc + j + 1:02d}"]))))
            if i + 1 < n_dr:
                dist.add(tuple(sorted((here, dpos[f"d{(i + 1) * n_dc + j:02d}"]))))
    council = np.array(sorted(council), int).reshape(-1, 2)
    return units, council, np.array(sorted(dist), int).reshape(-1, 2)


def _bym2_draw(rng, edges, n, tau, phi, n_groups):
    icar = build_icar_scaled(edges, n)
    L = np.linalg.cholesky(bym2_covariance(icar, tau, phi))
    return (L @ rng.standard_normal((n, n_groups))).T  # (groups, n)


@dataclass
class Simulation:
    panel: CouncilMonthPanel
    covariates: CovariateTable
    events: list
    truth: dict

    def truth_json(self) -> str:
        return json.dumps(self.truth, sort_keys=True, indent=1)


def simulate(spec: SyntheticSpec, seed: int) -> Simulation:
    units, council_edges, district_edges = lattice(spec)
    S, T = spec.n_units, spec.n_months
    D = len(units.district_ids)
    dist = units.district_index
    h = spec.hyper
    rng = np.random.default_rng(np.random.SeedSequence([seed, 20]))

    first = spec.start[0] * 12 + spec.start[1] - 1
    total = first + np.arange(T)
    month = total % 12
    year = total // 12
    years = np.unique(year)

    Gc = _bym2_draw(rng, council_edges, S, h["tau_Gc"], h["phi_Gc"], 12)
    Gd = _bym2_draw(rng, district_edges, D, h["tau_Gd"], h["phi_Gd"], T)
    Tyear = {p: rng.normal(0.0, 1.0 / np.sqrt(h[f"tau_T_{p}"]), years.size) for p in PREDICTORS}
    X = rng.standard_normal((S, T, len(spec.covariates)))
    origin = np.zeros_like(X)
    origin[:, 1:] = X[:, :-1]

    gc = Gc[month][:, np.arange(S)].T  # (S, T)
    gd = Gd[np.arange(T)][:, dist].T
    yi = np.searchsorted(years, year)
    eta = {}
    for p in PREDICTORS:
        b1 = 1.0 if p == "Z" else h[f"beta1_{p}"]
        b2 = 1.0 if p == "Z" else h[f"beta2_{p}"]
        e = spec.intercepts[p] + b1 * gc + b2 * gd + Tyear[p][yi][None, :]
        for name, coef in spec.effects.get(p, {}).items():
            e = e + coef * origin[:, :, spec.covariates.index(name)]
        eta[p] = e

    z = rng.random((S, T)) < special.expit(eta["Z"])
    count = np.where(z, trunc_poisson_sample(np.exp(eta["C"]), rng), 0)
    sigma = egp_sigma(eta["B"], h["xi"], h["kappa"], spec.alpha)
    u = rng.random((S, T))
    root = sigma * _unit_quantile(np.maximum(u, np.nextafter(0.0, 1.0)), h["xi"], h["kappa"])

    events = []
    for s, t in zip(*np.nonzero(z)):
        n = int(count[s, t])
        share = rng.dirichlet(np.ones(n)) if n > 1 else np.ones(1)
        dur = rng.uniform(1.0, 48.0, n)
        yy, mm = divmod(int(total[t]), 12)
        for a, d in zip(root[s, t] ** 2 * share, dur):
            events.append(FireEvent(units.ids[s], units.districts[s], yy, mm + 1, float(a), float(d)))
    panel = aggregate(events, units, spec.start, T, 0.0, 0.0, council_edges, district_edges)

    truth = {
        "seed": seed,
        "spec": spec.to_dict(),
        "intercepts": dict(spec.intercepts),
        "hyper": dict(h),
        "Gc": Gc.tolist(),
        "Gd": Gd.tolist(),
        "T": {p: v.tolist() for p, v in Tyear.items()},
        "years": years.tolist(),
        "eta": {p: v.tolist() for p, v in eta.items()},
        "root_area": np.where(z, root, 0.0).tolist(),
    }
    return Simulation(panel, CovariateTable(list(spec.covariates), X), events, truth)


DATASET_FILES = {
    "events": "events.csv",
    "units": "units.csv",
    "council_edges": "council_edges.csv",
    "district_edges": "district_edges.csv",
    "covariates": "covariates.csv",
    "truth": "truth.json",
}


def write_simulation(sim: Simulation, directory) -> dict:
    """Write the CSV inputs and the truth record; returns name -> path."""
    os.makedirs(directory, exist_ok=True)
    paths = {k: os.path.join(directory, v) for k, v in DATASET_FILES.items()}
    units = sim.panel.units
    write_events(paths["events"], sim.events)
    write_units(paths["units"], units)
    write_edges(paths["council_edges"], sim.panel.council_edges, units.ids)
    write_edges(paths["district_edges"], sim.panel.district_edges, units.district_ids)
    write_covariates(paths["covariates"], sim.covariates, sim.panel)
    with open(paths["truth"], "w") as fh:
        fh.write(sim.truth_json())
    return paths
