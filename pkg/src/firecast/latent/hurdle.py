"""Assembly of the three-predictor hurdle model.

Predictors for a cell (council s, month t):

    presence  eta_Z = b0_Z +      Gc(s, m(t)) +      Gd(d(s), t) + T_Z(y(t)) + R_ZC[bin(fc)] + R_ZB[bin(ba)]
    count     eta_C = b0_C + b1_C Gc(s, m(t)) + b2_C Gd(d(s), t) + T_C(y(t)) + R_C[bin(fc)]
    area      eta_B = b0_B + b1_B Gc(s, m(t)) + b2_B Gd(d(s), t) + T_B(y(t)) + R_B[bin(ba)]

``Gc`` is a council BYM2 replicated over calendar months, ``Gd`` a district
BYM2 replicated over distinct months, ``T_*`` independent year effects and
``R_*`` first-order random walks over quantile bins of the stage-one
forecasts (``fc`` count, ``ba`` square-root area).  Count and area rows
exist only for training cells with at least one fire.  Variants:

* ``M1`` eGP area likelihood (default);
* ``M2`` / ``M3`` Gamma / Weibull area likelihood with median link;
* ``M4`` eGP without the forecast random walks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DataError
from .blocks import Bym2Block, FixedGaussian, IidBlock, Rw1Block, bin_covariate
from .model import DesignBuilder, Design, LatentModel, Likelihood
from .priors import Hyper, Prior

VARIANTS = ("M1", "M2", "M3", "M4")
AREA_FAMILY = {"M1": "egp", "M2": "gamma", "M3": "weibull", "M4": "egp"}


@dataclass(frozen=True)
class HurdleConfig:
    variant: str = "M1"
    n_bins: int = 20
    alpha: float = 0.5
    pc_rate: float = 10.0
    xi_bounds: tuple = (-0.5, 0.5)
    kappa_form: str = "approximate"
    intercept_variance: float = 1000.0
    beta_variance: float = 0.1
    precision_gamma: tuple = (0.1, 0.1)
    bym2_sd: tuple = (1.0, 0.01)
    bym2_phi: tuple = (0.5, 0.5)
    shape_gamma: tuple = (1.0, 0.01)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")
        if self.n_bins < 2:
            raise ConfigError("need at least two forecast bins")

    @property
    def uses_forecasts(self) -> bool:
        return self.variant != "M4"

    @property
    def area_family(self) -> str:
        return AREA_FAMILY[self.variant]

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "HurdleConfig":
        d = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()}
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad hurdle config: {exc}") from exc


@dataclass
class Cells:
    """Council-month cells with optional observations and stage-one forecasts."""

    unit: np.ndarray
    time: np.ndarray
    fc_hat: np.ndarray
    ba_hat: np.ndarray
    count: np.ndarray | None = None
    area: np.ndarray | None = None

    def __post_init__(self):
        self.unit = np.asarray(self.unit, int)
        self.time = np.asarray(self.time, int)
        self.fc_hat = np.asarray(self.fc_hat, float)
        self.ba_hat = np.asarray(self.ba_hat, float)
        n = self.unit.size
        arrays = [self.time, self.fc_hat, self.ba_hat]
        if self.count is not None:
            self.count = np.asarray(self.count, int)
            self.area = np.asarray(self.area, float)
            arrays += [self.count, self.area]
            if np.any((self.count > 0) != (self.area > 0)):
                raise DataError("count and area disagree on fire presence")
        if any(a.size != n for a in arrays):
            raise DataError("cell arrays have different lengths")

    def __len__(self):
        return self.unit.size


@dataclass
class Geography:
    n_units: int
    council_edges: np.ndarray
    district_of: np.ndarray
    district_edges: np.ndarray
    start_month: int = 1
    start_year: int = 2000

    def __post_init__(self):
        self.council_edges = np.asarray(self.council_edges, int).reshape(-1, 2)
        self.district_edges = np.asarray(self.district_edges, int).reshape(-1, 2)
        self.district_of = np.asarray(self.district_of, int)
        if self.district_of.size != self.n_units:
            raise DataError("district map does not cover every council")

    @property
    def n_districts(self) -> int:
        return int(self.district_of.max()) + 1

    def calendar_month(self, t):
        return (np.asarray(t) + self.start_month - 1) % 12

    def year(self, t):
        return self.start_year + (np.asarray(t) + self.start_month - 1) // 12


@dataclass
class HurdleModel:
    model: LatentModel
    config: HurdleConfig
    prediction: Design | None
    n_predict: int
    bin_edges: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "format": "firecast.hurdle_model",
            "model": self.model.to_dict(),
            "config": self.config.to_dict(),
            "prediction": None if self.prediction is None else self.prediction.to_dict(),
            "n_predict": self.n_predict,
            "bin_edges": {k: v.tolist() for k, v in self.bin_edges.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HurdleModel":
        if d.get("format") != "firecast.hurdle_model":
            raise DataError("not a serialised hurdle model")
        pred = None if d["prediction"] is None else Design.from_dict(d["prediction"])
        return cls(
            LatentModel.from_dict(d["model"]),
            HurdleConfig.from_dict(d["config"]),
            pred,
            d["n_predict"],
            {k: np.array(v, float) for k, v in d["bin_edges"].items()},
        )


def _hypers(cfg: HurdleConfig, effects, area_family):
    g_shape, g_rate = cfg.precision_gamma
    prec = lambda name: Hyper(name, "log", Prior("gamma", {"shape": g_shape, "rate": g_rate}), 1.0, bounds=(-6.0, 12.0))
    beta = lambda name: Hyper(name, "identity", Prior("normal", {"mean": 0.0, "variance": cfg.beta_variance}), 0.0, bounds=(-3.0, 3.0))
    eig = {b.hyper[1]: b.icar.eigvals for _, b in effects if isinstance(b, Bym2Block)}
    hy = []
    if area_family == "egp":
        lo, hi = cfg.xi_bounds
        hy.append(Hyper("xi", "interval", Prior("pc_xi", {"rate": cfg.pc_rate, "lower": lo, "upper": hi}), 0.05, lo, hi, bounds=(-8.0, 8.0)))
        hy.append(Hyper("kappa", "log", Prior("pc_kappa", {"rate": cfg.pc_rate, "form": cfg.kappa_form}), 1.0, bounds=(-3.0, 3.0)))
    else:
        s_shape, s_rate = cfg.shape_gamma
        hy.append(Hyper("shape_B", "log", Prior("gamma", {"shape": s_shape, "rate": s_rate}), 1.5, bounds=(-4.0, 5.0)))
    u, a = cfg.bym2_sd
    pu, pa = cfg.bym2_phi
    for g in ("Gc", "Gd"):
        hy.append(Hyper(f"tau_{g}", "log", Prior("pc_prec", {"u": u, "alpha": a}), 1.0, bounds=(-6.0, 12.0)))
        hy.append(Hyper(f"phi_{g}", "logit", Prior("pc_phi", {"u": pu, "alpha": pa}, eig[f"phi_{g}"]), 0.5, bounds=(-6.0, 6.0)))
    for p in ("Z", "C", "B"):
        hy.append(prec(f"tau_T_{p}"))
    if cfg.uses_forecasts:
        for r in ("ZC", "ZB", "C", "B"):
            hy.append(prec(f"tau_R_{r}"))
    for p in ("C", "B"):
        hy.append(beta(f"beta1_{p}"))
        hy.append(beta(f"beta2_{p}"))
    return hy


def assemble(train: Cells, geo: Geography, cfg: HurdleConfig = HurdleConfig(), predict: Cells | None = None) -> HurdleModel:
    if train.count is None:
        raise DataError("training cells need observed counts and areas")
    all_units = train.unit if predict is None else np.r_[train.unit, predict.unit]
    all_times = train.time if predict is None else np.r_[train.time, predict.time]
    if all_units.min() < 0 or all_units.max() >= geo.n_units:
        raise DataError("cell unit index outside the geography")
    t0, t1 = int(all_times.min()), int(all_times.max())
    years = geo.year(all_times)
    y0, n_years = int(years.min()), int(years.max() - years.min() + 1)
    S, D = geo.n_units, geo.n_districts

    fire = train.count > 0
    edges = {}
    bins_train, bins_pred = {}, {}

    def binned(key, values_train, values_pred, mask):
        idx, e = bin_covariate(values_train, cfg.n_bins, mask)
        edges[key] = e
        bins_train[key] = idx
        if values_pred is not None:
            bins_pred[key] = bin_covariate(values_pred, cfg.n_bins, edges=e)[0]
        return e.size + 1

    effects = [
        ("b0_Z", FixedGaussian(1, cfg.intercept_variance)),
        ("b0_C", FixedGaussian(1, cfg.intercept_variance)),
        ("b0_B", FixedGaussian(1, cfg.intercept_variance)),
        ("Gc", Bym2Block(geo.council_edges, S, 12, "tau_Gc", "phi_Gc")),
        ("Gd", Bym2Block(geo.district_edges, D, t1 - t0 + 1, "tau_Gd", "phi_Gd")),
        ("T_Z", IidBlock(n_years, "tau_T_Z")),
        ("T_C", IidBlock(n_years, "tau_T_C")),
        ("T_B", IidBlock(n_years, "tau_T_B")),
    ]
    if cfg.uses_forecasts:
        pf = None if predict is None else predict.fc_hat
        pb = None if predict is None else predict.ba_hat
        sizes = {
            "ZC": binned("ZC", train.fc_hat, pf, None),
            "ZB": binned("ZB", train.ba_hat, pb, None),
            "C": binned("C", train.fc_hat, pf, fire),
            "B": binned("B", train.ba_hat, pb, fire),
        }
        for k, n in sizes.items():
            effects.append((f"R_{k}", Rw1Block(n, f"tau_R_{k}")))
    offsets = {}
    off = 0
    for name, b in effects:
        offsets[name] = off
        off += b.dim

    def add_predictor(db, start, unit, time, which, bins):
        n = unit.size
        rows = start + np.arange(n)
        db.add(rows, offsets[f"b0_{which}"])
        gc = offsets["Gc"] + geo.calendar_month(time) * S + unit
        gd = offsets["Gd"] + (time - t0) * D + geo.district_of[unit]
        db.add(rows, gc, slot=None if which == "Z" else f"beta1_{which}")
        db.add(rows, gd, slot=None if which == "Z" else f"beta2_{which}")
        db.add(rows, offsets[f"T_{which}"] + geo.year(time) - y0)
        if cfg.uses_forecasts:
            keys = ("ZC", "ZB") if which == "Z" else (which,)
            for k in keys:
                db.add(rows, offsets[f"R_{k}"] + bins[k])

    db = DesignBuilder(off)
    n_tr = len(train)
    sZ = db.add_rows(n_tr)
    add_predictor(db, sZ, train.unit, train.time, "Z", bins_train)
    fu, ft = train.unit[fire], train.time[fire]
    fb = {k: v[fire] for k, v in bins_train.items()}
    sC = db.add_rows(fu.size)
    add_predictor(db, sC, fu, ft, "C", fb)
    sB = db.add_rows(fu.size)
    add_predictor(db, sB, fu, ft, "B", fb)

    area_family = cfg.area_family
    area_hyper = {"xi": "xi", "kappa": "kappa"} if area_family == "egp" else {"shape": "shape_B"}
    likelihoods = [
        Likelihood("Z", "bernoulli", fire.astype(float), sZ, intercept=offsets["b0_Z"]),
        Likelihood("C", "tpois", train.count[fire], sC, intercept=offsets["b0_C"]),
        Likelihood("B", area_family, np.sqrt(train.area[fire]), sB, area_hyper, offsets["b0_B"], cfg.alpha),
    ]
    hypers = _hypers(cfg, effects, area_family)
    model = LatentModel(
        effects,
        db.build(),
        likelihoods,
        hypers,
        meta={"t0": t0, "year0": y0, "variant": cfg.variant},
    )

    pred = None
    n_pred = 0
    if predict is not None:
        n_pred = len(predict)
        pb = DesignBuilder(off)
        for which in ("Z", "C", "B"):
            start = pb.add_rows(n_pred)
            add_predictor(pb, start, predict.unit, predict.time, which, bins_pred)
        pred = pb.build()
    return HurdleModel(model, cfg, pred, n_pred, edges)
