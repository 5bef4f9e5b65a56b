"""Unit-month panels and window-based autoregressive features.

Time is a 0-based month index ``t`` counted from the panel's first calendar
month.  Feature functions take the *target* time: a row forecasting month
``tau`` only reads the response series at months ``<= tau - horizon``.

Autoregressive features per response series ``y`` and target ``tau``
(horizon 1):

* ``lag_j``  = y[tau - j]
* ``ma_j``   = mean(y[tau - j : tau])
* ``hist_j`` = mean over k = 1..3, i = 1..j of y[tau - 12k + i - (j + 1) // 2],
  i.e. the j months centred on the target's calendar month in each of the
  previous three years.

Values that would need data before the first month are NaN (the boosting
trees route them along learned default directions).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

EVENT_COLUMNS = ("unit", "district", "year", "month", "area_ha", "duration_h")
UNIT_COLUMNS = ("unit", "district", "lon", "lat")
COVARIATE_KEYS = ("unit", "year", "month")
EDGE_COLUMNS = ("a", "b")


@dataclass(frozen=True)
class FireEvent:
    unit: str
    district: str
    year: int
    month: int
    area_ha: float
    duration_h: float


@dataclass
class UnitTable:
    """Council ids with their parent district and centroid coordinates."""

    ids: list
    districts: list
    lon: np.ndarray
    lat: np.ndarray

    def __post_init__(self):
        self.ids = [str(u) for u in self.ids]
        self.districts = [str(d) for d in self.districts]
        self.lon = np.asarray(self.lon, float)
        self.lat = np.asarray(self.lat, float)
        n = len(self.ids)
        if len(set(self.ids)) != n:
            raise DataError("duplicate unit ids")
        if not (len(self.districts) == n == self.lon.size == self.lat.size):
            raise DataError("unit table columns have different lengths")

    def __len__(self):
        return len(self.ids)

    @property
    def district_ids(self) -> list:
        """Distinct districts in order of first appearance."""
        return list(dict.fromkeys(self.districts))

    @property
    def district_index(self) -> np.ndarray:
        pos = {d: i for i, d in enumerate(self.district_ids)}
        return np.array([pos[d] for d in self.districts], dtype=int)

    def position(self) -> dict:
        return {u: i for i, u in enumerate(self.ids)}


@dataclass
class CouncilMonthPanel:
    """Complete unit-by-month grid of fire counts and burnt areas."""

    units: UnitTable
    start: tuple
    count: np.ndarray
    area: np.ndarray
    council_edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), int))
    district_edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), int))

    def __post_init__(self):
        self.start = (int(self.start[0]), int(self.start[1]))
        if not 1 <= self.start[1] <= 12:
            raise DataError(f"start month {self.start[1]} outside 1..12")
        self.count = np.asarray(self.count, dtype=np.int64)
        self.area = np.asarray(self.area, dtype=float)
        self.council_edges = np.asarray(self.council_edges, int).reshape(-1, 2)
        self.district_edges = np.asarray(self.district_edges, int).reshape(-1, 2)
        if self.count.shape != self.area.shape or self.count.shape[0] != len(self.units):
            raise DataError("count/area arrays do not match the unit table")
        if np.any(self.count < 0) or np.any(self.area < 0):
            raise DataError("negative counts or areas")
        if np.any((self.count == 0) != (self.area == 0)):
            raise DataError("a cell has fires without area or area without fires")

    @property
    def n_units(self) -> int:
        return self.count.shape[0]

    @property
    def n_months(self) -> int:
        return self.count.shape[1]

    def calendar(self, t):
        """(year, month) arrays for month indices ``t``."""
        total = self.start[0] * 12 + self.start[1] - 1 + np.asarray(t)
        return total // 12, total % 12 + 1

    def index_of(self, year: int, month: int) -> int:
        return (year * 12 + month - 1) - (self.start[0] * 12 + self.start[1] - 1)

    def series(self, variable: str) -> np.ndarray:
        if variable == "fc":
            return self.count.astype(float)
        if variable == "ba":
            return self.area
        raise ConfigError(f"unknown response {variable!r}; use 'fc' or 'ba'")

    def district_sum(self, values: np.ndarray) -> np.ndarray:
        """Sum a (unit, month) array over the councils of each district."""
        out = np.zeros((len(self.units.district_ids), values.shape[1]))
        np.add.at(out, self.units.district_index, values)
        return out


def aggregate(
    events,
    units: UnitTable,
    start: tuple,
    n_months: int,
    min_area: float = 1.0,
    min_duration: float = 3.0,
    council_edges=(),
    district_edges=(),
) -> CouncilMonthPanel:
    """Totals per (unit, month) of events with area > min_area and duration > min_duration."""
    if n_months < 1:
        raise ConfigError("n_months must be at least 1")
    pos = units.position()
    count = np.zeros((len(units), n_months), dtype=np.int64)
    area = np.zeros((len(units), n_months))
    first = start[0] * 12 + start[1] - 1
    # canonical order makes floating-point totals independent of input order
    key = lambda e: (e.unit, e.year, e.month, e.area_ha, e.duration_h, e.district)
    for e in sorted(events, key=key):
        if e.unit not in pos:
            raise DataError(f"event references unknown unit {e.unit!r}")
        s = pos[e.unit]
        if e.district != units.districts[s]:
            raise DataError(f"event for unit {e.unit!r} lists district {e.district!r}, expected {units.districts[s]!r}")
        if not 1 <= e.month <= 12:
            raise DataError(f"event month {e.month} outside 1..12")
        t = e.year * 12 + e.month - 1 - first
        if not 0 <= t < n_months:
            raise DataError(f"event at {e.year}-{e.month:02d} is outside the study window")
        if e.area_ha < 0 or e.duration_h < 0:
            raise DataError("negative event area or duration")
        if e.area_ha > min_area and e.duration_h > min_duration:
            count[s, t] += 1
            area[s, t] += e.area_ha
    return CouncilMonthPanel(units, start, count, area, council_edges, district_edges)


def edges_from_ids(pairs, ids) -> np.ndarray:
    """Undirected id pairs to sorted, de-duplicated index pairs."""
    pos = {u: i for i, u in enumerate(ids)}
    out = set()
    for a, b in pairs:
        if a not in pos or b not in pos:
            raise DataError(f"edge ({a!r}, {b!r}) references an unknown id")
        i, j = pos[a], pos[b]
        if i == j:
            raise DataError(f"self-loop on {a!r}")
        out.add((min(i, j), max(i, j)))
    return np.array(sorted(out), dtype=int).reshape(-1, 2)


# ---------------------------------------------------------------- CSV I/O


def _reader(path, required):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
        missing = [c for c in required if rows and c not in rows[0]]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    return rows


def _fmt(x) -> str:
    return repr(float(x))


def write_events(path, events) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for e in events:
            w.writerow([e.unit, e.district, e.year, e.month, _fmt(e.area_ha), _fmt(e.duration_h)])


def read_events(path) -> list:
    try:
        return [
            FireEvent(r["unit"], r["district"], int(r["year"]), int(r["month"]), float(r["area_ha"]), float(r["duration_h"]))
            for r in _reader(path, EVENT_COLUMNS)
        ]
    except (KeyError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{path}: malformed event row ({exc})") from exc


def write_units(path, units: UnitTable) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(UNIT_COLUMNS)
        for u, d, x, y in zip(units.ids, units.districts, units.lon, units.lat):
            w.writerow([u, d, _fmt(x), _fmt(y)])


def read_units(path) -> UnitTable:
    rows = _reader(path, UNIT_COLUMNS)
    try:
        return UnitTable(
            [r["unit"] for r in rows],
            [r["district"] for r in rows],
            [float(r["lon"]) for r in rows],
            [float(r["lat"]) for r in rows],
        )
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{path}: malformed unit row ({exc})") from exc


def write_edges(path, edges, ids) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EDGE_COLUMNS)
        for i, j in np.asarray(edges, int).reshape(-1, 2):
            w.writerow([ids[i], ids[j]])


def read_edges(path, ids) -> np.ndarray:
    rows = _reader(path, EDGE_COLUMNS)
    return edges_from_ids([(r["a"], r["b"]) for r in rows], list(ids))


@dataclass
class CovariateTable:
    """Environmental covariates aligned to a panel: ``values[s, t, p]``."""

    names: list
    values: np.ndarray

    def __post_init__(self):
        self.names = [str(n) for n in self.names]
        self.values = np.asarray(self.values, float)
        if self.values.ndim != 3 or self.values.shape[2] != len(self.names):
            raise DataError("covariate values must be (units, months, len(names))")

    def check_aligned(self, panel: CouncilMonthPanel) -> None:
        if self.values.shape[:2] != (panel.n_units, panel.n_months):
            raise DataError(
                f"covariate table is {self.values.shape[:2]}, panel is {(panel.n_units, panel.n_months)}"
            )


def write_covariates(path, table: CovariateTable, panel: CouncilMonthPanel) -> None:
    table.check_aligned(panel)
    years, months = panel.calendar(np.arange(panel.n_months))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(COVARIATE_KEYS) + table.names)
        for s, u in enumerate(panel.units.ids):
            for t in range(panel.n_months):
                w.writerow([u, int(years[t]), int(months[t])] + [_fmt(v) for v in table.values[s, t]])


def read_covariates(path, panel: CouncilMonthPanel) -> CovariateTable:
    """Read a covariate CSV; every (unit, month) of the panel must appear exactly once."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[:3]) != COVARIATE_KEYS:
            raise DataError(f"{path}: header must start with {','.join(COVARIATE_KEYS)}")
        names = header[3:]
        values = np.full((panel.n_units, panel.n_months, len(names)), np.nan)
        seen = np.zeros((panel.n_units, panel.n_months), bool)
        pos = panel.units.position()
        for row in reader:
            if row[0] not in pos:
                raise DataError(f"{path}: unknown unit {row[0]!r}")
            s, t = pos[row[0]], panel.index_of(int(row[1]), int(row[2]))
            if not 0 <= t < panel.n_months:
                raise DataError(f"{path}: {row[1]}-{row[2]} outside the panel window")
            if seen[s, t]:
                raise DataError(f"{path}: duplicate row for {row[0]} {row[1]}-{row[2]}")
            seen[s, t] = True
            values[s, t] = [float(v) if v != "" else np.nan for v in row[3:]]
    if not seen.all():
        raise DataError(f"{path}: {int((~seen).sum())} (unit, month) cells missing")
    return CovariateTable(names, values)


# ---------------------------------------------------- autoregressive features


def lag_feature(y, t: int, j: int, horizon: int = 1) -> float:
    """Value ``j`` months before the forecast origin of target month ``t``."""
    y = np.asarray(y, float)
    i = t - (horizon - 1) - j
    return float(y[i]) if i >= 0 else np.nan


def ma_feature(y, t: int, j: int, horizon: int = 1) -> float:
    """Mean of the ``j`` months up to the forecast origin of target month ``t``."""
    y = np.asarray(y, float)
    end = t - (horizon - 1)
    if end - j < 0:
        return np.nan
    return float(sum(y[end - i] for i in range(1, j + 1)) / j)


def hist_feature(y, t: int, j: int) -> float:
    """Mean of the ``j`` months centred on target month ``t`` in each of the previous three years."""
    y = np.asarray(y, float)
    total = 0.0
    for k in range(1, 4):
        for i in range(1, j + 1):
            idx = t - 12 * k + i - (j + 1) // 2
            if idx < 0:
                return np.nan
            total += y[idx]
    return total / (3 * j)


def _shift(Y, d):
    """out[:, t] = Y[:, t - d] (NaN where t - d < 0); d >= 0."""
    out = np.full(Y.shape, np.nan)
    if d < Y.shape[1]:
        out[:, d:] = Y[:, : Y.shape[1] - d] if d else Y
    return out


def lag_matrix(Y, j, horizon=1):
    return _shift(Y, j + horizon - 1)


def ma_matrix(Y, j, horizon=1):
    return sum(_shift(Y, i + horizon - 1) for i in range(1, j + 1)) / j


def hist_matrix(Y, j):
    total = 0.0
    for k in range(1, 4):
        for i in range(1, j + 1):
            total = total + _shift(Y, 12 * k - i + (j + 1) // 2)
    return total / (3 * j)


def cyclical_month(month):
    """(sin, cos) of 2*pi*month/12 for calendar month(s) 1..12."""
    a = 2.0 * np.pi * np.asarray(month, float) / 12.0
    return np.sin(a), np.cos(a)


@dataclass(frozen=True)
class FeatureConfig:
    window: int = 36
    lags: tuple = tuple(range(1, 10))
    ma_spans: tuple = (3, 6, 9, 12, 24, 36)
    hist_spans: tuple = (1, 3, 5)
    horizon: int = 1
    levels: tuple = ("conc", "dist")

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        if any(j < 1 for j in (*self.lags, *self.ma_spans, *self.hist_spans)):
            raise ConfigError("lag and span lengths must be positive")
        span = max((*self.lags, *self.ma_spans), default=0)
        if self.window < span:
            raise ConfigError(f"window {self.window} shorter than the longest span {span}")
        for j in self.hist_spans:
            # most recent month read by hist_j is 12 - j + (j + 1) // 2 before the target
            if 12 - j + (j + 1) // 2 < self.horizon:
                raise ConfigError(f"hist span {j} would read past the forecast origin at horizon {self.horizon}")
        if not set(self.levels) <= {"conc", "dist"} or not self.levels:
            raise ConfigError("levels must be a non-empty subset of ('conc', 'dist')")

    @property
    def first_target(self) -> int:
        return self.window + self.horizon - 1

    def to_dict(self) -> dict:
        return {
            "window": self.window,
            "lags": list(self.lags),
            "ma_spans": list(self.ma_spans),
            "hist_spans": list(self.hist_spans),
            "horizon": self.horizon,
            "levels": list(self.levels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        d = dict(d)
        for k in ("lags", "ma_spans", "hist_spans", "levels"):
            if k in d:
                d[k] = tuple(d[k])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad feature config: {exc}") from exc


def autoregressive_block(Y, variable: str, level: str, cfg: FeatureConfig):
    """Named (unit, month) feature arrays for one response series at one level."""
    names, blocks = [], []
    for j in cfg.lags:
        names.append(f"{level}_{variable}_lag_{j}")
        blocks.append(lag_matrix(Y, j, cfg.horizon))
    for j in cfg.ma_spans:
        names.append(f"{level}_{variable}_ma_{j}")
        blocks.append(ma_matrix(Y, j, cfg.horizon))
    for j in cfg.hist_spans:
        names.append(f"{level}_{variable}_hist_{j}")
        blocks.append(hist_matrix(Y, j))
    return names, blocks


@dataclass
class WindowedDataset:
    """One row per (unit, target month) with features from data up to the forecast origin."""

    variant: str
    feature_names: list
    X: np.ndarray
    y: np.ndarray
    unit: np.ndarray
    time: np.ndarray

    def __len__(self):
        return self.X.shape[0]

    def select(self, mask) -> "WindowedDataset":
        mask = np.asarray(mask)
        return WindowedDataset(self.variant, self.feature_names, self.X[mask], self.y[mask], self.unit[mask], self.time[mask])


def build_windowed(panel: CouncilMonthPanel, covariates: CovariateTable | None, cfg: FeatureConfig, variant: str) -> WindowedDataset:
    """Supervised rows for fire count (``"C"``) or square-root burnt area (``"B"``).

    Columns: environmental covariates at the forecast origin, target-month
    sin/cos and year, centroid lon/lat, then autoregressive features of the
    variant's own response at council and district level.  Rows are ordered
    unit-major, target month ascending, and cover targets
    ``cfg.first_target .. T-1``.
    """
    if variant not in ("C", "B"):
        raise ConfigError(f"variant must be 'C' or 'B', got {variant!r}")
    S, T = panel.n_units, panel.n_months
    if T <= cfg.first_target:
        raise DataError(f"panel has {T} months; need more than {cfg.first_target} for one target")
    if covariates is None:
        covariates = CovariateTable([], np.zeros((S, T, 0)))
    covariates.check_aligned(panel)
    variable = "fc" if variant == "C" else "ba"
    Y = panel.series(variable)

    names, cols = [], []
    origin_env = np.full(covariates.values.shape, np.nan)
    origin_env[:, cfg.horizon :] = covariates.values[:, : T - cfg.horizon]
    for p, name in enumerate(covariates.names):
        names.append(name)
        cols.append(origin_env[:, :, p])
    years, months = panel.calendar(np.arange(T))
    msin, mcos = cyclical_month(months)
    for name, row in (("month_sin", msin), ("month_cos", mcos), ("year", years.astype(float))):
        names.append(name)
        cols.append(np.broadcast_to(row, (S, T)))
    for name, col in (("lon", panel.units.lon), ("lat", panel.units.lat)):
        names.append(name)
        cols.append(np.broadcast_to(col[:, None], (S, T)))
    if "conc" in cfg.levels:
        n, b = autoregressive_block(Y, variable, "conc", cfg)
        names += n
        cols += b
    if "dist" in cfg.levels:
        n, b = autoregressive_block(panel.district_sum(Y), variable, "dist", cfg)
        names += n
        cols += [blk[panel.units.district_index] for blk in b]

    targets = np.arange(cfg.first_target, T)
    unit = np.repeat(np.arange(S), targets.size)
    time = np.tile(targets, S)
    X = np.stack([c[unit, time] for c in cols], axis=1) if cols else np.zeros((unit.size, 0))
    y = Y[unit, time]
    if variant == "B":
        y = np.sqrt(y)
    return WindowedDataset(variant, names, X, y, unit, time)


def acf(series, max_lag: int, adjusted: bool = False) -> np.ndarray:
    """Sample autocorrelation at lags 0..max_lag.

    The default divides every lagged cross-product sum by n; ``adjusted``
    divides the lag-k sum by n - k instead.
    """
    x = np.asarray(series, float)
    n = x.size
    if max_lag < 0 or n <= max_lag:
        raise DataError(f"series of length {n} too short for max_lag {max_lag}")
    d = x - x.mean()
    c0 = d @ d
    if c0 == 0:
        raise DataError("constant series has no autocorrelation")
    out = np.array([d[: n - k] @ d[k:] for k in range(max_lag + 1)]) / c0
    if adjusted:
        out = out * n / (n - np.arange(max_lag + 1))
    return out


def monthly_mean_series(panel: CouncilMonthPanel, variable: str) -> np.ndarray:
    """Average over units for each month, the series used for ACF diagnostics."""
    return panel.series(variable).mean(axis=0)
