"""Sales panel ingest, synthetic data generation, windowing, and correlation.

The dataset is a dense per-category daily panel of prices, volumes,
wholesale costs, and spoilage rates. Gaps are rejected at ingest, never
imputed. Windowing normalizes features with min-max scaling computed from
the training split only.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DataError, InsufficientDataError

CSV_HEADER = ["date", "category", "unit_price", "volume", "wholesale_cost", "spoilage_rate"]

CORE_FEATURES = ("volume", "price", "spoilage")

# record attribute behind each selectable variable name
_FIELD_ATTRS = {
    "volume": "volume",
    "price": "unit_price",
    "spoilage": "spoilage_rate",
    "wholesale": "wholesale_cost",
}


@dataclass(frozen=True)
class SalesRecord:
    """One category-day observation."""

    date: dt.date
    category: str
    unit_price: float
    volume: float
    wholesale_cost: float
    spoilage_rate: float

    def validate(self, where: str = "") -> None:
        ctx = f" ({where})" if where else ""
        if not self.unit_price > 0:
            raise DataError(f"unit_price must be > 0, got {self.unit_price}{ctx}")
        if not self.wholesale_cost > 0:
            raise DataError(f"wholesale_cost must be > 0, got {self.wholesale_cost}{ctx}")
        if self.volume < 0:
            raise DataError(f"volume must be >= 0, got {self.volume}{ctx}")
        if not 0.0 <= self.spoilage_rate <= 1.0:
            raise DataError(f"spoilage_rate must be in [0, 1], got {self.spoilage_rate}{ctx}")


@dataclass
class Dataset:
    """Dense panel of SalesRecords sorted by (category, date)."""

    records: list[SalesRecord]
    categories: list[str]
    span: tuple[dt.date, dt.date]

    @classmethod
    def from_records(cls, records: Iterable[SalesRecord]) -> "Dataset":
        """Sort, validate field ranges, uniqueness, and panel density."""
        recs = sorted(records, key=lambda r: (r.category, r.date))
        if not recs:
            raise DataError("dataset has no records")
        for r in recs:
            r.validate(where=f"{r.category} {r.date.isoformat()}")

        categories = sorted({r.category for r in recs})
        start = min(r.date for r in recs)
        end = max(r.date for r in recs)
        n_days = (end - start).days + 1
        expected = {start + dt.timedelta(days=i) for i in range(n_days)}

        seen: set[tuple[str, dt.date]] = set()
        by_cat: dict[str, set[dt.date]] = {c: set() for c in categories}
        for r in recs:
            key = (r.category, r.date)
            if key in seen:
                raise DataError(f"duplicate record for category {r.category} on {r.date.isoformat()}")
            seen.add(key)
            by_cat[r.category].add(r.date)
        for c in categories:
            missing = sorted(expected - by_cat[c])
            if missing:
                raise DataError(
                    f"panel is not dense: category {c} is missing "
                    f"{', '.join(d.isoformat() for d in missing[:3])}"
                    + ("..." if len(missing) > 3 else "")
                )
        return cls(records=recs, categories=categories, span=(start, end))

    @property
    def n_days(self) -> int:
        return (self.span[1] - self.span[0]).days + 1

    def category_series(self, category: str) -> list[SalesRecord]:
        if category not in self.categories:
            raise DataError(f"unknown category {category!r}")
        return [r for r in self.records if r.category == category]

    def write_csv(self, path: Path | str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(CSV_HEADER)
            for r in self.records:
                w.writerow([
                    r.date.isoformat(), r.category,
                    repr(r.unit_price), repr(r.volume),
                    repr(r.wholesale_cost), repr(r.spoilage_rate),
                ])


def ingest_csv(path: Path | str) -> Dataset:
    """Parse a schema-conformant CSV into a dense, sorted Dataset.

    Raises DataError naming the offending line for malformed rows,
    out-of-range fields, duplicates, or panel gaps.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    records = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in header] != CSV_HEADER:
            raise DataError(f"{path}: bad header, expected {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise DataError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
            try:
                rec = SalesRecord(
                    date=dt.date.fromisoformat(row[0].strip()),
                    category=row[1].strip(),
                    unit_price=float(row[2]),
                    volume=float(row[3]),
                    wholesale_cost=float(row[4]),
                    spoilage_rate=float(row[5]),
                )
            except (ValueError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: malformed row: {exc}") from None
            try:
                rec.validate()
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            records.append(rec)
    return Dataset.from_records(records)


# --------------------------------------------------------------------------
# Synthetic generator
# --------------------------------------------------------------------------

# per-category magnitude anchors: (demand slope, intercept, price band)
_CATEGORY_ANCHORS = [
    (-3.17, 69.74, (15.3, 15.8)),
    (-1.25, 37.87, (13.9, 15.4)),
]

_DEFAULT_START = dt.date(2023, 7, 1)


@dataclass(frozen=True)
class GeneratorProfile:
    """Knobs for the synthetic panel generator.

    Pinned values (non-None) apply to every category; None lets each
    category draw its own magnitudes around the built-in anchors.
    Noise is uniform in a +/- fractional band; weekend uplift multiplies
    volume on Saturday/Sunday.
    """

    demand_slope: Optional[float] = None
    demand_intercept: Optional[float] = None
    price_band: Optional[tuple[float, float]] = None
    base_spoilage: Optional[float] = None
    noise: float = 0.05
    weekend_uplift: float = 1.2
    wholesale_frac: float = 0.6
    start_date: dt.date = _DEFAULT_START

    def validate(self) -> None:
        if self.noise < 0:
            raise ValueError(f"noise must be >= 0, got {self.noise}")
        if self.weekend_uplift <= 0:
            raise ValueError(f"weekend_uplift must be > 0, got {self.weekend_uplift}")
        if self.price_band is not None and not self.price_band[0] < self.price_band[1]:
            raise ValueError(f"price_band must have lo < hi, got {self.price_band}")
        if not 0 < self.wholesale_frac:
            raise ValueError("wholesale_frac must be > 0")


def synthesize(
    seed: int,
    n_categories: int,
    n_days: int,
    profile: GeneratorProfile = GeneratorProfile(),
) -> Dataset:
    """Generate a seeded synthetic panel on per-category linear demand curves.

    Prices follow a weekly sinusoid inside the category's price band;
    volumes sit on the demand line, scaled by the weekend uplift and
    jittered inside the noise band. Deterministic for a fixed
    (seed, profile) across runs and platforms.
    """
    if n_days < 14:
        raise ValueError(f"n_days must be >= 14, got {n_days}")
    if n_categories < 1:
        raise ValueError(f"n_categories must be >= 1, got {n_categories}")
    profile.validate()

    rng = np.random.default_rng(seed)
    records = []
    for k in range(n_categories):
        if k < len(_CATEGORY_ANCHORS):
            a_slope, a_intercept, a_band = _CATEGORY_ANCHORS[k]
        else:
            mid = float(rng.uniform(8.0, 18.0))
            width = mid * float(rng.uniform(0.02, 0.06))
            a_band = (mid - width / 2, mid + width / 2)
            a_slope = -float(rng.uniform(1.0, 4.0))
            a_intercept = float(rng.uniform(15.0, 45.0)) - a_slope * mid
        slope = profile.demand_slope if profile.demand_slope is not None else a_slope
        intercept = profile.demand_intercept if profile.demand_intercept is not None else a_intercept
        band = profile.price_band if profile.price_band is not None else a_band
        base_spoil = profile.base_spoilage if profile.base_spoilage is not None else 0.08 + 0.02 * (k % 3)

        lo, hi = band
        mid_price = (lo + hi) / 2.0
        amp = (hi - lo) / 2.0
        wholesale = profile.wholesale_frac * mid_price
        phase = int(rng.integers(0, 7))
        category = f"cat{k + 1:02d}"

        for t in range(n_days):
            date = profile.start_date + dt.timedelta(days=t)
            price = mid_price + amp * math.sin(2.0 * math.pi * (t + phase) / 7.0)
            if profile.noise > 0:
                price *= 1.0 + float(rng.uniform(-profile.noise, profile.noise))
                price = min(max(price, lo), hi)
            volume = max(0.0, slope * price + intercept)
            if date.weekday() >= 5:
                volume *= profile.weekend_uplift
            if profile.noise > 0:
                volume *= 1.0 + float(rng.uniform(-profile.noise, profile.noise))
                volume = max(0.0, volume)
            spoil = base_spoil
            if profile.noise > 0:
                spoil *= 1.0 + float(rng.uniform(-profile.noise, profile.noise))
            spoil = min(max(spoil, 0.0), 1.0)
            records.append(SalesRecord(
                date=date, category=category,
                unit_price=price, volume=volume,
                wholesale_cost=wholesale, spoilage_rate=spoil,
            ))
    return Dataset.from_records(records)


# --------------------------------------------------------------------------
# Windowing
# --------------------------------------------------------------------------


@dataclass
class FeatureScaling:
    """Per-feature min-max scaling fitted on the training split.

    Constant (degenerate) features map to 0.5 and denormalize back to
    their constant value.
    """

    names: tuple[str, ...]
    lo: np.ndarray
    hi: np.ndarray
    degenerate: np.ndarray  # bool per feature

    @classmethod
    def fit(cls, values: np.ndarray, names: Sequence[str]) -> "FeatureScaling":
        lo = values.min(axis=0)
        hi = values.max(axis=0)
        return cls(names=tuple(names), lo=lo, hi=hi, degenerate=(hi == lo))

    def normalize(self, values: np.ndarray) -> np.ndarray:
        span = np.where(self.degenerate, 1.0, self.hi - self.lo)
        out = (values - self.lo) / span
        return np.where(self.degenerate, 0.5, out)

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        out = self.lo + values * (self.hi - self.lo)
        return np.where(self.degenerate, self.lo, out)


@dataclass
class WindowedSeries:
    """One training example: L input steps and the next-step target.

    ``target_index`` is the target's position within the category series,
    so callers can map windows back to dates.
    """

    inputs: np.ndarray  # (window_len, n_features)
    target: np.ndarray  # (len(CORE_FEATURES),) normalized
    scaling: FeatureScaling
    target_index: int


def _core_matrix(series: list[SalesRecord]) -> np.ndarray:
    return np.array(
        [[r.volume, r.unit_price, r.spoilage_rate] for r in series], dtype=np.float64
    )


def _dow_onehot(series: list[SalesRecord]) -> np.ndarray:
    out = np.zeros((len(series), 7), dtype=np.float64)
    for i, r in enumerate(series):
        out[i, r.date.weekday()] = 1.0
    return out


def make_windows(
    ds: Dataset,
    category: str,
    window_len: int = 7,
    split_frac: float = 0.75,
    include_day_of_week: bool = True,
) -> tuple[list[WindowedSeries], list[WindowedSeries]]:
    """Window one category's series and split chronologically.

    A window is ``window_len`` input steps plus the next step as target.
    The first ceil(split_frac * n_windows) windows are training; scaling
    is fitted on the observations those windows cover, so nothing after
    the boundary can influence it. Train windows strictly precede test
    windows.
    """
    if not 0.0 < split_frac < 1.0:
        raise ValueError(f"split_frac must be in (0, 1), got {split_frac}")
    if window_len < 1:
        raise ValueError(f"window_len must be >= 1, got {window_len}")
    series = ds.category_series(category)
    n = len(series)
    n_windows = n - window_len
    if n_windows < 1:
        raise InsufficientDataError(
            f"category {category}: {n} observations are insufficient for even one "
            f"window of length {window_len}"
        )
    n_train = math.ceil(split_frac * n_windows)
    if n_train >= n_windows:
        raise InsufficientDataError(
            f"category {category}: insufficient data for the test split "
            f"({n_windows} windows, {n_train} taken by training)"
        )

    core = _core_matrix(series)
    # train windows cover observation indices [0, window_len + n_train)
    scaling = FeatureScaling.fit(core[: window_len + n_train], CORE_FEATURES)
    norm = scaling.normalize(core)
    features = np.hstack([norm, _dow_onehot(series)]) if include_day_of_week else norm

    train, test = [], []
    for t in range(window_len, n):
        w = WindowedSeries(
            inputs=features[t - window_len : t].copy(),
            target=norm[t].copy(),
            scaling=scaling,
            target_index=t,
        )
        (train if t < window_len + n_train else test).append(w)
    return train, test


# --------------------------------------------------------------------------
# Correlation analysis
# --------------------------------------------------------------------------


@dataclass
class CorrelationMatrix:
    """Pearson coefficients over aligned dates for the selected variables."""

    labels: list[str]
    values: np.ndarray
    undefined: list[str] = field(default_factory=list)

    def write_csv(self, path: Path | str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow([""] + self.labels)
            for label, row in zip(self.labels, self.values):
                w.writerow([label] + [repr(float(v)) for v in row])


def _select_variable(ds: Dataset, selector: str) -> np.ndarray:
    try:
        category, fieldname = selector.split(":", 1)
    except ValueError:
        raise DataError(
            f"bad variable selector {selector!r}, expected 'category:field'"
        ) from None
    if fieldname not in _FIELD_ATTRS:
        raise DataError(
            f"unknown field {fieldname!r} in selector {selector!r}; "
            f"choose from {', '.join(sorted(_FIELD_ATTRS))}"
        )
    attr = _FIELD_ATTRS[fieldname]
    return np.array([getattr(r, attr) for r in ds.category_series(category)], dtype=np.float64)


def correlation_matrix(ds: Dataset, variables: Sequence[str]) -> CorrelationMatrix:
    """Pearson correlation over 'category:field' selectors.

    Zero-variance variables are reported in ``undefined`` and their
    rows/columns are NaN, never silently 0. Each unordered pair is
    computed once, so the matrix is symmetric to exact equality.
    """
    if not variables:
        raise DataError("no variables selected")
    columns = [_select_variable(ds, v) for v in variables]
    n_obs = {len(c) for c in columns}
    if len(n_obs) != 1:
        raise DataError("selected variables cover different numbers of dates")
    if n_obs.pop() < 2:
        raise DataError("correlation needs at least 2 observations per variable")

    k = len(variables)
    centered = [c - c.mean() for c in columns]
    ss = [float(np.dot(c, c)) for c in centered]
    defined = [s > 0.0 for s in ss]

    values = np.full((k, k), np.nan)
    for i in range(k):
        if defined[i]:
            values[i, i] = 1.0
        for j in range(i + 1, k):
            if defined[i] and defined[j]:
                r = float(np.dot(centered[i], centered[j]) / math.sqrt(ss[i] * ss[j]))
                values[i, j] = r
                values[j, i] = r
    undefined = [v for v, d in zip(variables, defined) if not d]
    return CorrelationMatrix(labels=list(variables), values=values, undefined=undefined)
