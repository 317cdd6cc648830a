import itertools
from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, strategies as st

from flexbid.fixtures import write_synthetic_dataset
from flexbid.market_data import (CombinationSet, ForecastRecord, InsufficientData, LadderStep, MarketParameters,
                                 PriceLadder, SchemaError, aggregate_forecasts, fit_intraday_stats, kmeans,
                                 ladder_prices, prepare_parameters, probability_curve, read_bp_auctions,
                                 read_demands, read_forecasts, read_spot, select_ladder, typical_weeks)

T0 = datetime(2021, 3, 1)


def records(winds, start=T0):
    return [ForecastRecord(start + timedelta(minutes=15 * i), w, 1.0, 2.0) for i, w in enumerate(winds)]


def test_hourly_mean():
    agg = aggregate_forecasts(records([10, 20, 30, 40]), 1)
    assert agg.values[:, 0].tolist() == [25.0]
    assert agg.starts == (T0,)


def test_constant_and_slice_means():
    agg = aggregate_forecasts(records([7.0] * 32), 4)
    assert agg.values.shape == (2, 3) and np.all(agg.values[:, 0] == 7.0)
    winds = np.arange(16.0)
    assert aggregate_forecasts(records(winds), 4).values[0, 0] == pytest.approx(winds.mean())


def test_gap_names_missing_interval():
    recs = records([1, 2, 3, 4, 5, 6, 7, 8])
    del recs[5]
    with pytest.raises(SchemaError, match="01:15:00 to 2021-03-01T01:15:00"):
        aggregate_forecasts(recs, 1)
    with pytest.raises(SchemaError, match="incomplete final window"):
        aggregate_forecasts(records([1, 2, 3, 4, 5]), 1)
    with pytest.raises(SchemaError, match="boundary"):
        aggregate_forecasts(records([1] * 16, start=T0 + timedelta(hours=1)), 4)
    with pytest.raises(ValueError):
        aggregate_forecasts(records([1] * 8), 2)


def test_kmeans_single_cluster_is_mean():
    pts = np.random.default_rng(0).normal(size=(30, 3)) * [1, 100, 1000]
    model = kmeans(pts, 1, seed=5)
    assert np.allclose(model.centroids[0], 0.0, atol=1e-12)
    assert np.all(model.assignment == 0)


def test_kmeans_separated_groups():
    rng = np.random.default_rng(1)
    a = rng.normal(0, 0.1, size=(20, 3))
    b = rng.normal(50, 0.1, size=(25, 3))
    model = kmeans(np.vstack([a, b]), 2, seed=0)
    labels = model.assignment
    assert len(set(labels[:20])) == 1 and len(set(labels[20:])) == 1 and labels[0] != labels[-1]
    z = model.normalize(np.vstack([a, b]))
    nearest = np.argmin(((z[:, None] - model.centroids[None]) ** 2).sum(axis=2), axis=1)
    assert np.array_equal(nearest, labels)


def test_kmeans_one_point_per_cluster():
    pts = np.random.default_rng(2).normal(size=(6, 3))
    model = kmeans(pts, 6, seed=0)
    assert model.inertia == pytest.approx(0.0, abs=1e-20)
    assert sorted(model.assignment.tolist()) == list(range(6))
    with pytest.raises(InsufficientData):
        kmeans(pts, 7)


@given(st.integers(0, 1000), st.integers(1, 6))
def test_kmeans_inertia_non_increasing(seed, k):
    pts = np.random.default_rng(seed).normal(size=(40, 3))
    hist = kmeans(pts, k, seed=seed).inertia_history
    assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))


def test_kmeans_deterministic_and_serialisable():
    pts = np.random.default_rng(3).normal(size=(50, 3))
    a, b = kmeans(pts, 3, seed=9), kmeans(pts, 3, seed=9)
    assert np.array_equal(a.centroids, b.centroids)
    again = type(a).from_dict(a.to_dict())
    assert np.array_equal(again.predict(pts), a.assignment)


def test_intraday_stats_examples():
    one = kmeans(np.zeros((2, 3)), 1)
    st1 = fit_intraday_stats(one, [-1.0, 1.0])
    assert st1.mu[0] == 0.0 and st1.sigma[0] == pytest.approx(1.41421, abs=1e-5)
    three = kmeans(np.zeros((3, 3)), 1)
    st2 = fit_intraday_stats(three, [2.0, 4.0, 6.0])
    assert st2.mu[0] == pytest.approx(4.0) and st2.sigma[0] == pytest.approx(2.0)
    st3 = fit_intraday_stats(three, [5.0] * 3)
    assert st3.mu[0] == 5.0 and st3.sigma[0] == 0.0
    with pytest.raises(InsufficientData):
        fit_intraday_stats(kmeans(np.zeros((1, 3)), 1), [1.0])


def test_pooled_stats_equal_global():
    diffs = np.random.default_rng(4).normal(3, 2, 100)
    s = fit_intraday_stats(kmeans(np.random.default_rng(5).normal(size=(100, 3)), 1), diffs)
    assert s.mu[0] == pytest.approx(diffs.mean()) and s.sigma[0] == pytest.approx(diffs.std(ddof=1))


def test_curve_examples():
    c = probability_curve([40, 10, 30, 20])
    assert c(25) == 0.5
    assert c(5) == 1.0 and c(45) == 0.0
    assert c(20) == 0.5  # ties count as rejected
    assert c.points == [(10.0, 0.75), (20.0, 0.5), (30.0, 0.25), (40.0, 0.0)]
    with pytest.raises(InsufficientData):
        probability_curve([])


@given(st.lists(st.floats(-500, 500), min_size=1, max_size=40), st.lists(st.floats(-600, 600), min_size=2))
def test_curve_monotone_step(marginals, queries):
    c = probability_curve(marginals)
    q = np.sort(queries)
    vals = c(q)
    assert np.all(np.diff(vals) <= 0)
    assert np.all((vals >= 0) & (vals <= 1))
    m = np.asarray(marginals)
    assert all(c(x) == pytest.approx(np.mean(m > x)) for x in queries[:5])


def test_ladder_example_and_consistency():
    c = probability_curve([10, 20, 30, 40])
    steps = ladder_prices(c, (0.75, 0.5, 0.25))
    assert [(s.price, s.probability) for s in steps] == [(10, 0.75), (20, 0.5), (30, 0.25)]
    for s in steps:
        assert c(s.price) == s.probability


def test_ladder_errors():
    with pytest.raises(InsufficientData):
        ladder_prices(probability_curve([15.0] * 8), (0.8, 0.5, 0.2))
    with pytest.raises(ValueError, match="strictly between"):
        ladder_prices(probability_curve([10, 20, 30, 40]), (1.0,))
    with pytest.raises(ValueError):
        PriceLadder({"pos": (LadderStep(1, 0.5),), "neg": ()}, {"pos": (), "neg": ()})


def _full_ladder():
    m = np.arange(1.0, 21.0)
    curves = {(d, k): probability_curve(m * (2 if k == "energy" else 1), k, d)
              for d in ("pos", "neg") for k in ("capacity", "energy")}
    return select_ladder(curves)


def test_combinations_cardinality_and_order():
    ladder = _full_ladder()
    combos = CombinationSet.from_ladder(ladder)
    assert len(combos) == 144
    assert combos[0].cp_plus == ladder.capacity["pos"][0].price
    assert combos[1].ep_minus == ladder.energy["neg"][1].price
    assert PriceLadder.from_dict(ladder.to_dict()) == ladder


def _weeks(*rows):
    return np.vstack([np.tile(r, (168, 1)) for r in rows])


def _exhaustive_medoids(demands, k):
    w = demands.reshape(-1, 168 * 3)
    dist = np.sqrt(((w[:, None] - w[None]) ** 2).sum(axis=2))
    return min(dist[:, list(m)].min(axis=1).sum() for m in itertools.combinations(range(len(w)), k))


def test_typical_weeks_examples():
    d = _weeks([1, 2, 3], [1, 2, 3], [9, 9, 9])
    tw = typical_weeks(d, 2, seed=0)
    assert tw.medoids in ((0, 2), (1, 2))
    assert tw.cost == pytest.approx(_exhaustive_medoids(d, 2))
    assert typical_weeks(d, 3).medoids == (0, 1, 2)
    d1 = _weeks([0, 0, 0], [1, 1, 1], [3, 3, 3], [7, 7, 7])
    w = d1.reshape(4, -1)
    total = np.sqrt(((w[:, None] - w[None]) ** 2).sum(axis=2)).sum(axis=1)
    assert typical_weeks(d1, 1).medoids == (int(np.argmin(total)),)
    with pytest.raises(SchemaError):
        typical_weeks(d1[:-1], 1)
    with pytest.raises(InsufficientData):
        typical_weeks(d1, 5)


@given(st.integers(0, 300))
def test_typical_weeks_are_swap_optimal(seed):
    rng = np.random.default_rng(seed)
    d = np.repeat(rng.normal(size=(6, 3)), 168, axis=0)
    tw = typical_weeks(d, 2, seed=seed)
    assert tw.cost >= _exhaustive_medoids(d, 2) - 1e-9
    w = d.reshape(6, -1)
    dist = np.sqrt(((w[:, None] - w[None]) ** 2).sum(axis=2))
    for pos, j in itertools.product(range(2), range(6)):
        trial = list(tw.medoids)
        trial[pos] = j
        assert dist[:, trial].min(axis=1).sum() >= tw.cost - 1e-9


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_csv_schema_errors(tmp_path):
    p = _write(tmp_path / "f.csv", "timestamp,wind_mw,pv_mw\n2021-01-01T00:00,1,2\n")
    with pytest.raises(SchemaError, match="load_mw"):
        read_forecasts(p)
    p = _write(tmp_path / "f.csv", "timestamp,wind_mw,pv_mw,load_mw\n2021-01-01T00:00,1,2,3\n2021-01-01T00:15,x,2,3\n")
    with pytest.raises(SchemaError, match="row 3, column wind_mw"):
        read_forecasts(p)
    p = _write(tmp_path / "s.csv", "timestamp,da_price_eur_mwh,id1_price_eur_mwh\n2021-01-01T00:00,1,2\n2021-01-01T00:00,1,2\n")
    with pytest.raises(SchemaError, match="duplicate"):
        read_spot(p)
    p = _write(tmp_path / "b.csv", "slice_start,direction,marginal_cp_eur_mw_h,marginal_ep_eur_mwh\n2021-01-01T00:00,up,1,2\n")
    with pytest.raises(SchemaError, match="direction"):
        read_bp_auctions(p)
    p = _write(tmp_path / "b.csv", "slice_start,direction,marginal_cp_eur_mw_h,marginal_ep_eur_mwh\n2021-01-01T01:00,pos,1,2\n")
    with pytest.raises(SchemaError, match="slice boundary"):
        read_bp_auctions(p)
    p = _write(tmp_path / "d.csv", "timestamp,el_mw,heat_mw,cool_mw\n2021-01-01T00:00,1,-2,0\n")
    with pytest.raises(SchemaError, match="negative"):
        read_demands(p)


def test_prepare_round_trip(tmp_path):
    paths = write_synthetic_dataset(tmp_path, weeks=2, seed=1)
    params = prepare_parameters(read_forecasts(paths["forecasts"]), read_spot(paths["spot"]),
                                read_bp_auctions(paths["bp_auctions"]), k=3, seed=1)
    assert params.hourly.k == 3 and len(params.ladders) == 3
    assert np.all(params.intraday.sigma > 0)
    params.write(tmp_path / "p.json")
    again = MarketParameters.read(tmp_path / "p.json")
    again.write(tmp_path / "q.json")
    assert (tmp_path / "p.json").read_bytes() == (tmp_path / "q.json").read_bytes()
    assert again.ladders == params.ladders
