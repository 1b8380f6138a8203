"""Ingestion, synthesis, windowing, and correlation tests."""

import datetime
import math

import numpy as np
import pytest

from freshplan import data
from freshplan.errors import DataError, InsufficientDataError


def _mk_record(day, cat="cat01", price=10.0, volume=20.0, wholesale=6.0, spoil=0.1):
    return data.SalesRecord(
        date=datetime.date(2023, 7, 1) + datetime.timedelta(days=day),
        category=cat, unit_price=price, volume=volume,
        wholesale_cost=wholesale, spoilage_rate=spoil,
    )


class TestSalesRecordValidation:
    def test_spoilage_out_of_range(self):
        with pytest.raises(DataError, match="spoilage_rate"):
            _mk_record(0, spoil=1.3).validate()

    def test_negative_volume(self):
        with pytest.raises(DataError, match="volume"):
            _mk_record(0, volume=-1.0).validate()

    def test_nonpositive_price(self):
        with pytest.raises(DataError, match="unit_price"):
            _mk_record(0, price=0.0).validate()

    def test_boundary_spoilage_allowed(self):
        _mk_record(0, spoil=0.0).validate()
        _mk_record(0, spoil=1.0).validate()


class TestDataset:
    def test_duplicate_rejected(self):
        with pytest.raises(DataError, match="duplicate"):
            data.Dataset.from_records([_mk_record(0), _mk_record(0)])

    def test_gap_rejected_naming_category(self):
        recs = [_mk_record(d) for d in (0, 1, 3)]
        with pytest.raises(DataError, match="cat01"):
            data.Dataset.from_records(recs)

    def test_sparse_second_category_rejected(self):
        recs = [_mk_record(d) for d in range(3)] + [_mk_record(0, cat="cat02")]
        with pytest.raises(DataError, match="cat02"):
            data.Dataset.from_records(recs)

    def test_sorted_by_category_then_date(self):
        recs = [_mk_record(1, cat="b"), _mk_record(0, cat="b"),
                _mk_record(1, cat="a"), _mk_record(0, cat="a")]
        ds = data.Dataset.from_records(recs)
        keys = [(r.category, r.date) for r in ds.records]
        assert keys == sorted(keys)
        assert ds.categories == ["a", "b"]
        assert ds.n_days == 2


class TestCsvRoundTrip:
    def test_write_then_ingest_is_identical(self, tmp_path):
        ds = data.synthesize(n_categories=2, n_days=14, seed=11)
        path = tmp_path / "sales.csv"
        ds.write_csv(path)
        back = data.ingest_csv(path)
        assert len(back.records) == len(ds.records)
        for a, b in zip(ds.records, back.records):
            # repr round-trip keeps every float bit-exact
            assert a == b

    def test_header_enforced(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("date,category,price\n", encoding="utf-8")
        with pytest.raises(DataError, match="header"):
            data.ingest_csv(p)

    def test_malformed_row_reports_line(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text(",".join(data.CSV_HEADER) + "\n2023-07-01,cat01,ten,20,6,0.1\n",
                     encoding="utf-8")
        with pytest.raises(DataError, match=":2:"):
            data.ingest_csv(p)

    def test_out_of_range_field_reports_line(self, tmp_path):
        p = tmp_path / "bad.csv"
        rows = [",".join(data.CSV_HEADER)]
        for d in range(14):
            rows.append(f"2023-07-{d+1:02d},cat01,10.0,20.0,6.0,0.1")
        rows[3] = "2023-07-03,cat01,10.0,20.0,6.0,1.3"
        p.write_text("\n".join(rows) + "\n", encoding="utf-8")
        with pytest.raises(DataError, match=":4:"):
            data.ingest_csv(p)

    def test_two_categories_fourteen_days(self, tmp_path):
        ds = data.synthesize(n_categories=2, n_days=14, seed=0)
        path = tmp_path / "ok.csv"
        ds.write_csv(path)
        assert len(data.ingest_csv(path).records) == 28


class TestSynthesize:
    def test_deterministic(self, tmp_path):
        a = data.synthesize(n_categories=2, n_days=20, seed=5)
        b = data.synthesize(n_categories=2, n_days=20, seed=5)
        pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
        a.write_csv(pa)
        b.write_csv(pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_seed_changes_output(self):
        a = data.synthesize(n_categories=1, n_days=20, seed=1)
        b = data.synthesize(n_categories=1, n_days=20, seed=2)
        assert any(x != y for x, y in zip(a.records, b.records))

    def test_zero_noise_sits_on_demand_line(self):
        # the weekend uplift is multiplicative seasonality, so it has to be
        # disabled for volumes to sit exactly on the line
        prof = data.GeneratorProfile(demand_slope=-3.17, demand_intercept=69.74,
                                     noise=0.0, weekend_uplift=1.0)
        ds = data.synthesize(n_categories=1, n_days=30, seed=3, profile=prof)
        for r in ds.records:
            assert r.volume == pytest.approx(-3.17 * r.unit_price + 69.74, abs=1e-9)

    def test_price_band_respected(self):
        prof = data.GeneratorProfile(price_band=(15.3, 15.8))
        for seed in range(5):
            ds = data.synthesize(n_categories=1, n_days=30, seed=seed, profile=prof)
            for r in ds.records:
                assert 15.3 <= r.unit_price <= 15.8

    def test_weekend_uplift_raises_weekend_volume(self):
        prof = data.GeneratorProfile(noise=0.0, weekend_uplift=1.5)
        ds = data.synthesize(n_categories=1, n_days=56, seed=9, profile=prof)
        weekend = [r for r in ds.records if r.date.weekday() >= 5]
        weekday = [r for r in ds.records if r.date.weekday() < 5]
        assert np.mean([r.volume for r in weekend]) > np.mean([r.volume for r in weekday])

    def test_preconditions(self):
        with pytest.raises(ValueError):
            data.synthesize(n_categories=1, n_days=13, seed=0)
        with pytest.raises(ValueError):
            data.synthesize(n_categories=0, n_days=14, seed=0)


class TestMakeWindows:
    def test_counts_and_order(self):
        ds = data.synthesize(n_categories=1, n_days=14, seed=0)
        train, test = data.make_windows(ds, "cat01", window_len=7, split_frac=0.5)
        # 7 windows total, ceil(0.5 * 7) = 4 train
        assert len(train) == 4 and len(test) == 3
        idx = [w.target_index for w in train + test]
        assert idx == sorted(idx)
        assert max(w.target_index for w in train) < min(w.target_index for w in test)

    def test_single_window_has_no_test_split(self):
        ds = data.synthesize(n_categories=1, n_days=14, seed=0)
        with pytest.raises(InsufficientDataError):
            data.make_windows(ds, "cat01", window_len=13, split_frac=0.5)

    def test_too_short_for_any_window(self):
        ds = data.synthesize(n_categories=1, n_days=14, seed=0)
        with pytest.raises(InsufficientDataError):
            data.make_windows(ds, "cat01", window_len=14, split_frac=0.5)

    def test_scaling_is_train_only(self):
        ds = data.synthesize(n_categories=1, n_days=40, seed=4)
        train, test = data.make_windows(ds, "cat01", window_len=7, split_frac=0.5)
        scaling = train[0].scaling
        series = ds.category_series("cat01")
        n_train_obs = 7 + math.ceil(0.5 * (len(series) - 7))
        head = series[:n_train_obs]
        for fi, name in enumerate(data.CORE_FEATURES):
            vals = [getattr(r, data._FIELD_ATTRS[name]) for r in head]
            assert scaling.lo[fi] == pytest.approx(min(vals), abs=1e-12)
            assert scaling.hi[fi] == pytest.approx(max(vals), abs=1e-12)

    def test_train_windows_normalized_to_unit_box(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            seed = int(rng.integers(0, 10**6))
            ds = data.synthesize(n_categories=1, n_days=30, seed=seed)
            train, _ = data.make_windows(ds, "cat01", window_len=7, split_frac=0.75)
            for w in train:
                core = w.inputs[:, : len(data.CORE_FEATURES)]
                assert np.all(core >= -1e-12) and np.all(core <= 1 + 1e-12)

    def test_constant_feature_maps_to_half(self):
        recs = [_mk_record(d, price=5.0, volume=5.0, spoil=0.5) for d in range(20)]
        ds = data.Dataset.from_records(recs)
        train, _ = data.make_windows(ds, "cat01", window_len=7, split_frac=0.5)
        core = train[0].inputs[:, : len(data.CORE_FEATURES)]
        np.testing.assert_allclose(core, 0.5)
        assert all(train[0].scaling.degenerate)

    def test_normalize_round_trip(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            seed = int(rng.integers(0, 10**6))
            ds = data.synthesize(n_categories=1, n_days=25, seed=seed)
            train, _ = data.make_windows(ds, "cat01", window_len=7, split_frac=0.75)
            sc = train[0].scaling
            vals = rng.uniform(sc.lo, sc.hi)
            back = sc.denormalize(sc.normalize(vals))
            np.testing.assert_allclose(back, vals, atol=1e-9)

    def test_day_of_week_one_hot_appended(self):
        ds = data.synthesize(n_categories=1, n_days=20, seed=2)
        train, _ = data.make_windows(ds, "cat01", window_len=7, split_frac=0.5,
                                     include_day_of_week=True)
        w = train[0]
        dow = w.inputs[:, len(data.CORE_FEATURES):]
        assert dow.shape[1] == 7
        np.testing.assert_allclose(dow.sum(axis=1), 1.0)
        plain, _ = data.make_windows(ds, "cat01", window_len=7, split_frac=0.5,
                                     include_day_of_week=False)
        assert plain[0].inputs.shape[1] == len(data.CORE_FEATURES)


class TestCorrelation:
    def _ds_from_columns(self, prices, volumes):
        recs = [_mk_record(d, price=p, volume=v)
                for d, (p, v) in enumerate(zip(prices, volumes))]
        return data.Dataset.from_records(recs)

    def test_self_correlation_is_one(self):
        ds = data.synthesize(n_categories=1, n_days=20, seed=0)
        m = data.correlation_matrix(ds, ["cat01:price", "cat01:volume"])
        assert m.values[0][0] == 1.0 and m.values[1][1] == 1.0

    def test_perfect_linear(self):
        ds = self._ds_from_columns([1.0, 2.0, 3.0, 4.0], [5.0, 7.0, 9.0, 11.0])
        m = data.correlation_matrix(ds, ["cat01:price", "cat01:volume"])
        assert m.values[0][1] == pytest.approx(1.0, abs=1e-12)

    def test_hand_computed_negative_one(self):
        ds = self._ds_from_columns([1.0, 2.0, 3.0], [3.0, 2.0, 1.0])
        m = data.correlation_matrix(ds, ["cat01:price", "cat01:volume"])
        assert m.values[0][1] == pytest.approx(-1.0, abs=1e-12)

    def test_exact_symmetry(self):
        ds = data.synthesize(n_categories=2, n_days=35, seed=8)
        sel = ["cat01:price", "cat01:volume", "cat02:price", "cat02:spoilage"]
        m = data.correlation_matrix(ds, sel)
        vals = np.asarray(m.values)
        assert np.array_equal(vals, vals.T)
        assert np.all(vals[np.isfinite(vals)] >= -1.0)
        assert np.all(vals[np.isfinite(vals)] <= 1.0)

    def test_zero_variance_reported_undefined(self):
        ds = self._ds_from_columns([1.0, 2.0, 3.0], [5.0, 5.0, 5.0])
        m = data.correlation_matrix(ds, ["cat01:price", "cat01:volume"])
        assert "cat01:volume" in m.undefined
        assert math.isnan(m.values[0][1])

    def test_unknown_selector(self):
        ds = data.synthesize(n_categories=1, n_days=14, seed=0)
        with pytest.raises(DataError):
            data.correlation_matrix(ds, ["cat01:price", "nope:volume"])

    def test_csv_export(self, tmp_path):
        ds = data.synthesize(n_categories=1, n_days=20, seed=0)
        m = data.correlation_matrix(ds, ["cat01:price", "cat01:volume"])
        p = tmp_path / "corr.csv"
        m.write_csv(p)
        lines = p.read_text(encoding="utf-8").strip().splitlines()
        assert lines[0] == ",cat01:price,cat01:volume"
        assert lines[1].startswith("cat01:price,1.0,")
        assert len(lines) == 3
