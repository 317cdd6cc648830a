"""Market input parameters from historical forecasts, prices and auction results.

Pipeline: average quarter-hourly forecasts to hours (intraday) and to
4-hour slices (balancing power), cluster each series with k-means, attach
the ID1 minus day-ahead price differences to the hourly clusters and the
auction marginal prices to the slice clusters, then read discrete price
ladders off the empirical acceptance and request curves.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "SchemaError", "InsufficientData",
    "ForecastRecord", "AggregatedForecasts", "ClusterModel", "IntradayStats",
    "ProbabilityCurve", "LadderStep", "PriceLadder", "PriceCombination", "CombinationSet",
    "TypicalWeeks", "MarketParameters",
    "aggregate_forecasts", "kmeans", "fit_intraday_stats", "probability_curve",
    "ladder_prices", "select_ladder", "typical_weeks", "prepare_parameters",
    "read_forecasts", "read_spot", "read_bp_auctions", "read_demands",
    "DEFAULT_CAPACITY_TARGETS", "DEFAULT_ENERGY_TARGETS", "DIRECTIONS", "KINDS",
]

DEFAULT_CAPACITY_TARGETS = (0.8, 0.5, 0.2)
DEFAULT_ENERGY_TARGETS = (0.8, 0.6, 0.4, 0.2)
CAPACITY_STEPS = len(DEFAULT_CAPACITY_TARGETS)
ENERGY_STEPS = len(DEFAULT_ENERGY_TARGETS)
DIRECTIONS = ("pos", "neg")
KINDS = ("capacity", "energy")
QUARTER_HOUR = timedelta(minutes=15)
HOURS_PER_WEEK = 168


class SchemaError(ValueError):
    """Input file or record sequence does not match its schema."""


class InsufficientData(ValueError):
    """Too little data to fit a parameter."""


# -- forecasts ---------------------------------------------------------

@dataclass(frozen=True)
class ForecastRecord:
    timestamp: datetime
    wind: float
    pv: float
    load: float

    def __post_init__(self):
        if min(self.wind, self.pv, self.load) < 0:
            raise SchemaError(f"negative forecast at {self.timestamp.isoformat()}")


@dataclass(frozen=True)
class AggregatedForecasts:
    """Window start times and mean ``(wind, pv, load)`` per window."""

    starts: tuple[datetime, ...]
    values: np.ndarray
    window_hours: int


def aggregate_forecasts(records: Sequence[ForecastRecord], window_hours: int = 1) -> AggregatedForecasts:
    """Average quarter-hourly records over aligned windows of 1 or 4 hours.

    The first record must start a window (minute 0, hour divisible by
    ``window_hours``) and the series must cover whole windows. A gap raises
    :class:`SchemaError` naming the missing interval.
    """
    if window_hours not in (1, 4):
        raise ValueError("window_hours must be 1 or 4")
    if not records:
        raise InsufficientData("no forecast records")
    per_window = 4 * window_hours
    for prev, cur in zip(records, records[1:]):
        step = cur.timestamp - prev.timestamp
        if step <= timedelta(0):
            raise SchemaError(f"timestamps not strictly increasing at {cur.timestamp.isoformat()}")
        if step != QUARTER_HOUR:
            raise SchemaError(
                f"missing forecast interval from {(prev.timestamp + QUARTER_HOUR).isoformat()} "
                f"to {(cur.timestamp - QUARTER_HOUR).isoformat()}")
    first = records[0].timestamp
    if first.minute or first.second or first.hour % window_hours:
        raise SchemaError(f"series must start on a {window_hours}-hour boundary, starts {first.isoformat()}")
    if len(records) % per_window:
        last = records[-1].timestamp
        raise SchemaError(f"incomplete final window: series ends at {last.isoformat()}, "
                          f"missing up to {(last + QUARTER_HOUR * (per_window - len(records) % per_window)).isoformat()}")
    raw = np.array([[r.wind, r.pv, r.load] for r in records], dtype=float)
    values = raw.reshape(-1, per_window, 3).mean(axis=1)
    starts = tuple(records[i].timestamp for i in range(0, len(records), per_window))
    return AggregatedForecasts(starts, values, window_hours)


# -- clustering --------------------------------------------------------

@dataclass(frozen=True)
class ClusterModel:
    """k-means result; ``centroids`` live in z-normalised feature space."""

    k: int
    centroids: np.ndarray
    assignment: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    inertia_history: tuple[float, ...] = ()

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1] if self.inertia_history else math.nan

    def normalize(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.mean) / self.std

    def predict(self, points) -> np.ndarray:
        z = self.normalize(np.atleast_2d(points))
        return _nearest(z, self.centroids)[0]

    def to_dict(self) -> dict:
        return {"k": self.k, "centroids": self.centroids.tolist(), "mean": self.mean.tolist(),
                "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ClusterModel":
        return cls(int(d["k"]), np.array(d["centroids"], dtype=float), np.array([], dtype=np.int64),
                   np.array(d["mean"], dtype=float), np.array(d["std"], dtype=float))


def _sq_dist(z, centroids):
    return ((z[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _nearest(z, centroids):
    dist = _sq_dist(z, centroids)
    idx = np.argmin(dist, axis=1)
    return idx, dist[np.arange(len(z)), idx]


def kmeans(points, k: int, seed: int = 0, max_iter: int = 300) -> ClusterModel:
    """Lloyd's algorithm with k-means++ seeding on z-scored features.

    Features with zero spread are left unscaled. An emptied cluster is
    moved onto the point farthest from its centroid.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = len(x)
    if k < 1:
        raise ValueError("k must be at least 1")
    if n < k:
        raise InsufficientData(f"{n} points cannot form {k} clusters")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    z = (x - mean) / std
    rng = np.random.default_rng(seed)

    centroids = np.empty((k, z.shape[1]))
    centroids[0] = z[rng.integers(n)]
    closest = ((z - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            # fewer distinct points than k; take the next unused rows
            pick = j
        else:
            pick = int(rng.choice(n, p=closest / total))
        centroids[j] = z[pick]
        closest = np.minimum(closest, ((z - centroids[j]) ** 2).sum(axis=1))

    history = []
    assignment = None
    for _ in range(max_iter):
        new, dist = _nearest(z, centroids)
        history.append(float(dist.sum()))
        if assignment is not None and np.array_equal(new, assignment):
            break
        assignment = new
        for j in range(k):
            members = z[assignment == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
            else:
                far = int(np.argmax(_nearest(z, centroids)[1]))
                centroids[j] = z[far]
    assignment, dist = _nearest(z, centroids)
    if history[-1] != float(dist.sum()):
        history.append(float(dist.sum()))
    return ClusterModel(k, centroids, assignment, mean, std, tuple(history))


# -- intraday statistics ----------------------------------------------

@dataclass(frozen=True)
class IntradayStats:
    mu: np.ndarray
    sigma: np.ndarray
    count: np.ndarray

    def to_dict(self) -> dict:
        return {"mu": self.mu.tolist(), "sigma": self.sigma.tolist(), "count": self.count.tolist()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "IntradayStats":
        return cls(np.array(d["mu"], dtype=float), np.array(d["sigma"], dtype=float),
                   np.array(d["count"], dtype=np.int64))


def fit_intraday_stats(cluster_model: ClusterModel, price_diffs, assignment=None) -> IntradayStats:
    """Per-cluster mean and unbiased standard deviation of ID1 minus day-ahead prices.

    ``price_diffs[i]`` belongs to ``assignment[i]`` (default: the model's own
    assignment of the points it was fitted on).
    """
    labels = cluster_model.assignment if assignment is None else np.asarray(assignment)
    diffs = np.asarray(price_diffs, dtype=float)
    if labels.shape != diffs.shape:
        raise ValueError(f"{diffs.size} price differences for {labels.size} cluster labels")
    mu, sigma, count = [], [], []
    for j in range(cluster_model.k):
        vals = diffs[labels == j]
        if len(vals) < 2:
            raise InsufficientData(f"cluster {j} has {len(vals)} price differences; need at least 2")
        mu.append(vals.mean())
        sigma.append(vals.std(ddof=1))
        count.append(len(vals))
    return IntradayStats(np.array(mu), np.array(sigma), np.array(count, dtype=np.int64))


# -- acceptance and request curves ------------------------------------

@dataclass(frozen=True)
class ProbabilityCurve:
    """Share of historical marginal prices strictly above a bid price."""

    marginals: np.ndarray
    kind: str = "capacity"
    direction: str = "pos"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")

    def __call__(self, price):
        counts = self.marginals.size - np.searchsorted(self.marginals, price, side="right")
        out = counts / self.marginals.size
        return float(out) if np.ndim(out) == 0 else out

    @property
    def points(self) -> list[tuple[float, float]]:
        """Step corners ``(price, probability)`` at each distinct observed price."""
        prices = np.unique(self.marginals)
        return [(float(p), self(p)) for p in prices]


def probability_curve(marginals, kind: str = "capacity", direction: str = "pos") -> ProbabilityCurve:
    m = np.sort(np.asarray(marginals, dtype=float).ravel())
    if m.size == 0:
        raise InsufficientData("probability curve needs at least one slice")
    if not np.all(np.isfinite(m)):
        raise SchemaError("marginal prices must be finite")
    return ProbabilityCurve(m, kind, direction)


@dataclass(frozen=True)
class LadderStep:
    price: float
    probability: float


def ladder_prices(curve: ProbabilityCurve, targets: Sequence[float]) -> tuple[LadderStep, ...]:
    """Largest observed price whose probability reaches each target."""
    prices = np.unique(curve.marginals)
    probs = curve(prices)
    steps = []
    for t in targets:
        if not 0.0 < t < 1.0:
            raise ValueError(f"ladder target {t} must lie strictly between 0 and 1")
        ok = np.flatnonzero(probs >= t)
        if ok.size == 0:
            raise InsufficientData(f"no {curve.direction} {curve.kind} price reaches probability {t}")
        p = float(prices[ok[-1]])
        steps.append(LadderStep(p, curve(p)))
    distinct = {s.price for s in steps}
    if len(distinct) < len(steps):
        raise InsufficientData(
            f"{curve.direction} {curve.kind} curve yields only {len(distinct)} distinct prices "
            f"for {len(steps)} targets")
    return tuple(sorted(steps, key=lambda s: s.price))


@dataclass(frozen=True)
class PriceLadder:
    """Capacity and energy price steps per direction, cheapest first."""

    capacity: Mapping[str, tuple[LadderStep, ...]]
    energy: Mapping[str, tuple[LadderStep, ...]]

    def __post_init__(self):
        for d in DIRECTIONS:
            for steps, size, what in ((self.capacity[d], CAPACITY_STEPS, "capacity"),
                                      (self.energy[d], ENERGY_STEPS, "energy")):
                if len(steps) != size:
                    raise ValueError(f"{d} {what} ladder needs {size} steps, got {len(steps)}")
                probs = [s.probability for s in steps]
                if any(b >= a for a, b in zip(probs, probs[1:])):
                    raise ValueError(f"{d} {what} probabilities must strictly decrease with price")

    def to_dict(self) -> dict:
        return {d: {"capacity": [[s.price, s.probability] for s in self.capacity[d]],
                    "energy": [[s.price, s.probability] for s in self.energy[d]]} for d in DIRECTIONS}

    @classmethod
    def from_dict(cls, d: Mapping) -> "PriceLadder":
        return cls({k: tuple(LadderStep(float(p), float(q)) for p, q in d[k]["capacity"]) for k in DIRECTIONS},
                   {k: tuple(LadderStep(float(p), float(q)) for p, q in d[k]["energy"]) for k in DIRECTIONS})


def select_ladder(curves: Mapping[tuple[str, str], ProbabilityCurve],
                  capacity_targets: Sequence[float] = DEFAULT_CAPACITY_TARGETS,
                  energy_targets: Sequence[float] = DEFAULT_ENERGY_TARGETS) -> PriceLadder:
    """Ladder from curves keyed by ``(direction, kind)``."""
    if not curves:
        raise InsufficientData("no probability curves")
    cap = {d: ladder_prices(curves[(d, "capacity")], capacity_targets) for d in DIRECTIONS}
    en = {d: ladder_prices(curves[(d, "energy")], energy_targets) for d in DIRECTIONS}
    return PriceLadder(cap, en)


@dataclass(frozen=True)
class PriceCombination:
    cp_plus: float
    ep_plus: float
    cp_minus: float
    ep_minus: float
    acc_prob_plus: float
    acc_prob_minus: float
    req_prob_plus: float
    req_prob_minus: float

    def __post_init__(self):
        for name in ("acc_prob_plus", "acc_prob_minus", "req_prob_plus", "req_prob_minus"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class CombinationSet:
    combinations: tuple[PriceCombination, ...]

    def __len__(self):
        return len(self.combinations)

    def __iter__(self):
        return iter(self.combinations)

    def __getitem__(self, i):
        return self.combinations[i]

    @classmethod
    def from_ladder(cls, ladder: PriceLadder) -> "CombinationSet":
        """All joint choices, ordered by ``cp+``, then ``ep+``, ``cp-``, ``ep-``."""
        out = []
        for cp in ladder.capacity["pos"]:
            for ep in ladder.energy["pos"]:
                for cm in ladder.capacity["neg"]:
                    for em in ladder.energy["neg"]:
                        out.append(PriceCombination(cp.price, ep.price, cm.price, em.price,
                                                    cp.probability, cm.probability,
                                                    ep.probability, em.probability))
        return cls(tuple(out))


# -- typical weeks -----------------------------------------------------

@dataclass(frozen=True)
class TypicalWeeks:
    medoids: tuple[int, ...]
    assignment: np.ndarray
    cost: float


def typical_weeks(demands, k: int, seed: int = 0, max_iter: int = 100) -> TypicalWeeks:
    """k-medoids (PAM) over whole weeks of hourly ``(el, heat, cool)`` demands.

    Each week is one vector of 168 x 3 values; distance is Euclidean. The
    seed fixes the order in which swap candidates are tried.
    """
    d = np.asarray(demands, dtype=float)
    if d.ndim == 1:
        d = d[:, None]
    if d.shape[0] % HOURS_PER_WEEK:
        raise SchemaError(f"{d.shape[0]} hours is not a whole number of weeks")
    weeks = d.reshape(-1, HOURS_PER_WEEK * d.shape[1])
    n = len(weeks)
    if n < k or k < 1:
        raise InsufficientData(f"{n} weeks cannot form {k} typical weeks")
    diff = weeks[:, None, :] - weeks[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))

    def cost(meds):
        return float(dist[:, meds].min(axis=1).sum())

    medoids = [int(np.argmin(dist.sum(axis=1)))]
    while len(medoids) < k:
        best, best_j = math.inf, -1
        for j in range(n):
            if j in medoids:
                continue
            c = cost(medoids + [j])
            if c < best - 1e-12:
                best, best_j = c, j
        medoids.append(best_j)

    rng = np.random.default_rng(seed)
    current = cost(medoids)
    for _ in range(max_iter):
        improved = False
        for pos in rng.permutation(k):
            for j in rng.permutation(n):
                if j in medoids:
                    continue
                trial = list(medoids)
                trial[pos] = int(j)
                c = cost(trial)
                if c < current - 1e-12:
                    medoids, current, improved = trial, c, True
        if not improved:
            break
    meds = sorted(medoids)
    assignment = np.argmin(dist[:, meds], axis=1)
    return TypicalWeeks(tuple(meds), assignment, current)


# -- parameters file ---------------------------------------------------

@dataclass(frozen=True)
class MarketParameters:
    """Fitted market model: hourly and slice clusterings with their parameters."""

    hourly: ClusterModel
    slices: ClusterModel
    intraday: IntradayStats
    ladders: tuple[PriceLadder, ...]
    meta: Mapping = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"hourly_clusters": self.hourly.to_dict(), "slice_clusters": self.slices.to_dict(),
                "intraday": self.intraday.to_dict(), "ladders": [l.to_dict() for l in self.ladders],
                "meta": dict(self.meta)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "MarketParameters":
        return cls(ClusterModel.from_dict(d["hourly_clusters"]), ClusterModel.from_dict(d["slice_clusters"]),
                   IntradayStats.from_dict(d["intraday"]),
                   tuple(PriceLadder.from_dict(l) for l in d["ladders"]), d.get("meta", {}))

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path) -> "MarketParameters":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def prepare_parameters(forecasts: Sequence[ForecastRecord], spot: Mapping[datetime, tuple[float, float]],
                       auctions: Mapping[tuple[datetime, str], tuple[float, float]], k: int = 4,
                       seed: int = 0, capacity_targets=DEFAULT_CAPACITY_TARGETS,
                       energy_targets=DEFAULT_ENERGY_TARGETS) -> MarketParameters:
    """Cluster forecasts and fit every market parameter.

    ``spot`` maps hour start to ``(da_price, id1_price)``; ``auctions`` maps
    ``(slice_start, direction)`` to ``(marginal_cp, marginal_ep)``. Hours
    and slices without price data are used for clustering only.
    """
    hourly_fc = aggregate_forecasts(forecasts, 1)
    slice_fc = aggregate_forecasts(forecasts, 4)
    hourly = kmeans(hourly_fc.values, k, seed)
    slices = kmeans(slice_fc.values, k, seed)

    labels, diffs = [], []
    for i, t in enumerate(hourly_fc.starts):
        if t in spot:
            da, id1 = spot[t]
            labels.append(hourly.assignment[i])
            diffs.append(id1 - da)
    if not diffs:
        raise InsufficientData("no spot prices overlap the forecast period")
    intraday = fit_intraday_stats(hourly, np.array(diffs), np.array(labels))

    ladders = []
    for j in range(k):
        members = [t for i, t in enumerate(slice_fc.starts) if slices.assignment[i] == j]
        curves = {}
        for d in DIRECTIONS:
            rows = [auctions[(t, d)] for t in members if (t, d) in auctions]
            if not rows:
                raise InsufficientData(f"slice cluster {j} has no {d} auction results")
            cps, eps = zip(*rows)
            curves[(d, "capacity")] = probability_curve(cps, "capacity", d)
            curves[(d, "energy")] = probability_curve(eps, "energy", d)
        try:
            ladders.append(select_ladder(curves, capacity_targets, energy_targets))
        except InsufficientData as exc:
            raise InsufficientData(f"slice cluster {j}: {exc}") from exc
    meta = {"k": k, "seed": seed, "capacity_targets": list(capacity_targets),
            "energy_targets": list(energy_targets),
            "period": [hourly_fc.starts[0].isoformat(), hourly_fc.starts[-1].isoformat()]}
    return MarketParameters(hourly, slices, intraday, tuple(ladders), meta)


# -- CSV readers -------------------------------------------------------

def _read_csv(path, columns: Sequence[str]) -> Iterable[tuple[int, dict]]:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in columns if c not in header]
        if missing:
            raise SchemaError(f"{path.name}: missing column(s) {', '.join(missing)}")
        for line, row in enumerate(reader, start=2):
            yield line, row


def _field(path, line, row, col, parse):
    raw = row.get(col)
    try:
        if raw is None or raw.strip() == "":
            raise ValueError("empty")
        return parse(raw.strip())
    except ValueError as exc:
        raise SchemaError(f"{Path(path).name} row {line}, column {col}: cannot parse {raw!r} ({exc})") from None


def _number(raw: str) -> float:
    v = float(raw)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def read_forecasts(path) -> list[ForecastRecord]:
    cols = ("timestamp", "wind_mw", "pv_mw", "load_mw")
    out = []
    for line, row in _read_csv(path, cols):
        ts = _field(path, line, row, "timestamp", datetime.fromisoformat)
        vals = [_field(path, line, row, c, _number) for c in cols[1:]]
        for c, v in zip(cols[1:], vals):
            if v < 0:
                raise SchemaError(f"{Path(path).name} row {line}, column {c}: negative value {v}")
        out.append(ForecastRecord(ts, *vals))
    return out


def read_spot(path) -> dict[datetime, tuple[float, float]]:
    cols = ("timestamp", "da_price_eur_mwh", "id1_price_eur_mwh")
    out = {}
    for line, row in _read_csv(path, cols):
        ts = _field(path, line, row, "timestamp", datetime.fromisoformat)
        if ts in out:
            raise SchemaError(f"{Path(path).name} row {line}, column timestamp: duplicate {ts.isoformat()}")
        out[ts] = (_field(path, line, row, cols[1], _number), _field(path, line, row, cols[2], _number))
    return out


def read_bp_auctions(path) -> dict[tuple[datetime, str], tuple[float, float]]:
    cols = ("slice_start", "direction", "marginal_cp_eur_mw_h", "marginal_ep_eur_mwh")
    out = {}
    for line, row in _read_csv(path, cols):
        ts = _field(path, line, row, "slice_start", datetime.fromisoformat)
        d = row["direction"].strip()
        if d not in DIRECTIONS:
            raise SchemaError(f"{Path(path).name} row {line}, column direction: {d!r} not in {DIRECTIONS}")
        if ts.hour % 4 or ts.minute:
            raise SchemaError(f"{Path(path).name} row {line}, column slice_start: {ts.isoformat()} "
                              "is not a 4-hour slice boundary")
        out[(ts, d)] = (_field(path, line, row, cols[2], _number), _field(path, line, row, cols[3], _number))
    return out


def read_demands(path) -> dict[datetime, tuple[float, float, float]]:
    cols = ("timestamp", "el_mw", "heat_mw", "cool_mw")
    out = {}
    for line, row in _read_csv(path, cols):
        ts = _field(path, line, row, "timestamp", datetime.fromisoformat)
        vals = tuple(_field(path, line, row, c, _number) for c in cols[1:])
        if min(vals) < 0:
            raise SchemaError(f"{Path(path).name} row {line}: negative demand")
        out[ts] = vals
    return out
