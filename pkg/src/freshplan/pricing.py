"""Cost-plus pricing, demand regression, and the plan profit model.

A plan assigns a selling price and replenishment quantity to every
(category, day) cell. Profit per cell: sellable = min(qty, expected
demand at the price), revenue = price * sellable * (1 - spoilage),
cost = wholesale * qty. Constraint violations (price bands, inventory
caps, negative quantities) subtract a penalty proportional to the
violation magnitude, so an optimizer can roam infeasible space but is
driven back feasible.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, ShapeError

DEFAULT_PENALTY_COEFFICIENT = 1e4
DEFAULT_BAND_FRAC = (0.8, 1.2)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CostModel:
    """Cost structure of one category: wholesale is the fixed cost, the
    spoilage/discount-driven component is the variable cost."""

    category: str
    fixed_cost: float
    variable_cost: float
    profit_margin: float

    def __post_init__(self):
        if not self.fixed_cost > 0:
            raise DataError(f"fixed_cost must be > 0, got {self.fixed_cost}")
        if self.variable_cost < 0:
            raise DataError(f"variable_cost must be >= 0, got {self.variable_cost}")
        if self.profit_margin < 0:
            raise DataError(f"profit_margin must be >= 0, got {self.profit_margin}")


@dataclass(frozen=True)
class DemandModel:
    """Linear price -> volume relationship fitted by OLS."""

    category: str
    slope: float
    intercept: float
    r_squared: Optional[float]
    n_points: int


@dataclass(frozen=True)
class Constraints:
    """Price bands and per-day inventory caps.

    ``inventory_caps`` maps category to either a scalar (same cap every
    day) or a per-day sequence; categories without an entry are uncapped.
    """

    price_bands: dict[str, tuple[float, float]]
    inventory_caps: dict[str, object] = field(default_factory=dict)
    spoilage_source: str = "forecast"

    def __post_init__(self):
        for cat, (lo, hi) in self.price_bands.items():
            if not lo > 0:
                raise DataError(f"price band for {cat}: p_min must be > 0, got {lo}")
            if not lo < hi:
                raise DataError(f"price band for {cat}: p_min must be < p_max, got ({lo}, {hi})")
        for cat, cap in self.inventory_caps.items():
            caps = cap if isinstance(cap, (list, tuple, np.ndarray)) else [cap]
            if any(c < 0 for c in caps):
                raise DataError(f"inventory cap for {cat} must be >= 0")
        if self.spoilage_source not in ("forecast", "historical"):
            raise DataError(f"spoilage_source must be 'forecast' or 'historical', got {self.spoilage_source!r}")

    def caps_for(self, category: str, horizon: int) -> Optional[np.ndarray]:
        cap = self.inventory_caps.get(category)
        if cap is None:
            return None
        if isinstance(cap, (list, tuple, np.ndarray)):
            if len(cap) != horizon:
                raise DataError(
                    f"inventory cap for {category} has {len(cap)} days, expected {horizon}"
                )
            return np.asarray(cap, dtype=np.float64)
        return np.full(horizon, float(cap))


def default_price_bands(
    mean_prices: dict[str, float], frac: tuple[float, float] = DEFAULT_BAND_FRAC
) -> dict[str, tuple[float, float]]:
    """Bands as a fraction of each category's historical mean price."""
    return {c: (frac[0] * p, frac[1] * p) for c, p in mean_prices.items()}


# --------------------------------------------------------------------------
# Elementary pricing operations
# --------------------------------------------------------------------------


def weighted_loss_rate(records: Sequence[tuple[float, float]]) -> float:
    """Volume-weighted average spoilage rate over (volume, spoilage) pairs."""
    if not records:
        raise DataError("weighted loss rate is undefined for an empty record set")
    total = sum(v for v, _ in records)
    if total <= 0:
        raise DataError("weighted loss rate is undefined: total volume is 0")
    return sum(v * s for v, s in records) / total


def cost_plus_price(cm: CostModel) -> float:
    """Selling price as fixed cost plus marked-up variable cost."""
    return cm.fixed_cost + cm.variable_cost * cm.profit_margin


def derive_cost_model(
    category: str,
    records: Sequence,
    profit_margin: float,
    variable_cost: Optional[float] = None,
) -> CostModel:
    """Build a CostModel from a category's sales history.

    Fixed cost is the mean wholesale price. By default the variable cost
    amortizes the cost of spoiled goods over the goods actually sold:
    fixed * wlr / (1 - wlr) with wlr the weighted loss rate. Pass
    ``variable_cost`` to override the formula.
    """
    if not records:
        raise DataError(f"no records for category {category}")
    fixed = float(np.mean([r.wholesale_cost for r in records]))
    if variable_cost is None:
        wlr = weighted_loss_rate([(r.volume, r.spoilage_rate) for r in records])
        if wlr >= 1.0:
            raise DataError(f"category {category}: loss rate {wlr} leaves nothing sellable")
        variable_cost = fixed * wlr / (1.0 - wlr)
    return CostModel(
        category=category,
        fixed_cost=fixed,
        variable_cost=float(variable_cost),
        profit_margin=profit_margin,
    )


def fit_demand(points: Sequence[tuple[float, float]], category: str = "") -> DemandModel:
    """OLS fit of volume = slope * price + intercept."""
    if len(points) < 2:
        raise DataError("demand fit needs at least 2 points")
    prices = np.array([p for p, _ in points], dtype=np.float64)
    volumes = np.array([v for _, v in points], dtype=np.float64)
    dp = prices - prices.mean()
    dv = volumes - volumes.mean()
    ss_p = float(np.dot(dp, dp))
    if ss_p == 0.0:
        raise DataError("slope is undefined: all prices are identical")
    slope = float(np.dot(dp, dv) / ss_p)
    intercept = float(volumes.mean() - slope * prices.mean())

    ss_tot = float(np.dot(dv, dv))
    if ss_tot == 0.0:
        r_squared: Optional[float] = None
    else:
        resid = volumes - (slope * prices + intercept)
        r_squared = min(1.0, max(0.0, 1.0 - float(np.dot(resid, resid)) / ss_tot))
    return DemandModel(
        category=category, slope=slope, intercept=intercept,
        r_squared=r_squared, n_points=len(points),
    )


def expected_sales(dm: DemandModel, price: float) -> float:
    """Demand at a price, floored at zero."""
    return max(0.0, dm.slope * price + dm.intercept)


# --------------------------------------------------------------------------
# Plans and the profit model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PlanLayout:
    """Vector layout: category-major, day-minor, price before quantity."""

    categories: tuple[str, ...]
    horizon: int = 7

    @property
    def n_dims(self) -> int:
        return 2 * len(self.categories) * self.horizon


@dataclass
class Plan:
    layout: PlanLayout
    prices: np.ndarray  # (n_categories, horizon)
    quantities: np.ndarray  # (n_categories, horizon)
    projected_profit: Optional[float] = None
    constraint_report: Optional[list["ConstraintSlack"]] = None


def plan_from_vector(x: np.ndarray, layout: PlanLayout) -> Plan:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (layout.n_dims,):
        raise ShapeError(
            f"plan vector has length {x.size}, layout needs {layout.n_dims} "
            f"(2 x {len(layout.categories)} categories x {layout.horizon} days)"
        )
    cells = x.reshape(len(layout.categories), layout.horizon, 2)
    return Plan(layout=layout, prices=cells[:, :, 0].copy(), quantities=cells[:, :, 1].copy())


def vector_from_plan(plan: Plan) -> np.ndarray:
    cells = np.stack([plan.prices, plan.quantities], axis=-1)
    return cells.reshape(-1).copy()


@dataclass(frozen=True)
class ConstraintSlack:
    constraint: str  # price_min | price_max | inventory_cap | qty_nonneg
    category: str
    day: int  # 1-based
    slack: float


@dataclass(frozen=True)
class CellBreakdown:
    category: str
    day: int
    price: float
    qty: float
    expected_sales: float
    sellable: float
    waste: float
    revenue: float
    cost: float
    profit: float


@dataclass
class ProfitReport:
    raw_profit: float
    penalty: float
    fitness: float  # raw_profit - penalty
    cells: list[CellBreakdown]
    slacks: list[ConstraintSlack]

    @property
    def feasible(self) -> bool:
        return all(s.slack >= 0.0 for s in self.slacks)


def _cell_breakdown(
    category: str, day: int, price: float, qty: float,
    dm: DemandModel, wholesale: float, spoil: float,
) -> CellBreakdown:
    expected = expected_sales(dm, price)
    qty_eff = max(0.0, qty)  # economics of a negative order are meaningless
    sellable = min(qty_eff, expected)
    waste = qty_eff - sellable
    revenue = price * sellable * (1.0 - spoil)
    cost = wholesale * qty_eff
    return CellBreakdown(
        category=category, day=day, price=price, qty=qty,
        expected_sales=expected, sellable=sellable, waste=waste,
        revenue=revenue, cost=cost, profit=revenue - cost,
    )


def plan_profit(
    plan: Plan,
    demand: dict[str, DemandModel],
    costs: dict[str, CostModel],
    spoilage: dict[str, object],
    cons: Constraints,
    penalty_coefficient: float = DEFAULT_PENALTY_COEFFICIENT,
) -> ProfitReport:
    """Score a plan: raw profit, constraint slacks, and penalized fitness.

    ``spoilage`` maps category to a scalar or a per-day sequence. Every
    violated constraint contributes penalty_coefficient * violation to
    the penalty; slacks are reported for every constraint so violations
    are auditable.
    """
    layout = plan.layout
    for cat in layout.categories:
        if cat not in demand:
            raise DataError(f"no demand model for planned category {cat}")
        if cat not in costs:
            raise DataError(f"no cost model for planned category {cat}")
        if cat not in cons.price_bands:
            raise DataError(f"no price band for planned category {cat}")

    cells: list[CellBreakdown] = []
    slacks: list[ConstraintSlack] = []
    raw = 0.0
    violation = 0.0
    for ci, cat in enumerate(layout.categories):
        dm = demand[cat]
        wholesale = costs[cat].fixed_cost
        lo, hi = cons.price_bands[cat]
        caps = cons.caps_for(cat, layout.horizon)
        spoil = spoilage.get(cat, 0.0)
        spoil_days = (
            np.asarray(spoil, dtype=np.float64)
            if isinstance(spoil, (list, tuple, np.ndarray))
            else np.full(layout.horizon, float(spoil))
        )
        if spoil_days.shape != (layout.horizon,):
            raise DataError(f"spoilage for {cat} has {spoil_days.size} days, expected {layout.horizon}")
        for di in range(layout.horizon):
            day = di + 1
            price = float(plan.prices[ci, di])
            qty = float(plan.quantities[ci, di])
            cell = _cell_breakdown(cat, day, price, qty, dm, wholesale, float(spoil_days[di]))
            cells.append(cell)
            raw += cell.profit

            day_slacks = [
                ConstraintSlack("price_min", cat, day, price - lo),
                ConstraintSlack("price_max", cat, day, hi - price),
                ConstraintSlack("qty_nonneg", cat, day, qty),
            ]
            if caps is not None:
                day_slacks.append(ConstraintSlack("inventory_cap", cat, day, float(caps[di]) - qty))
            for s in day_slacks:
                violation += max(0.0, -s.slack)
            slacks.extend(day_slacks)

    penalty = penalty_coefficient * violation
    return ProfitReport(
        raw_profit=raw, penalty=penalty, fitness=raw - penalty,
        cells=cells, slacks=slacks,
    )


def cost_plus_baseline(
    layout: PlanLayout,
    demand: dict[str, DemandModel],
    costs: dict[str, CostModel],
    cons: Constraints,
) -> Plan:
    """Feasible reference plan: cost-plus price clamped into the band,
    quantity at expected demand clamped under the cap."""
    prices = np.zeros((len(layout.categories), layout.horizon))
    qtys = np.zeros_like(prices)
    for ci, cat in enumerate(layout.categories):
        lo, hi = cons.price_bands[cat]
        price = min(max(cost_plus_price(costs[cat]), lo), hi)
        caps = cons.caps_for(cat, layout.horizon)
        for di in range(layout.horizon):
            qty = expected_sales(demand[cat], price)
            if caps is not None:
                qty = min(qty, float(caps[di]))
            prices[ci, di] = price
            qtys[ci, di] = qty
    return Plan(layout=layout, prices=prices, quantities=qtys)


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------


def plan_to_doc(plan: Plan, report: ProfitReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "categories": list(plan.layout.categories),
        "horizon": plan.layout.horizon,
        "cells": {
            cat: [
                {
                    "day": c.day,
                    "price": c.price,
                    "qty": c.qty,
                    "expected_sales": c.expected_sales,
                    "sellable": c.sellable,
                    "waste": c.waste,
                    "revenue": c.revenue,
                    "cost": c.cost,
                    "profit": c.profit,
                }
                for c in report.cells
                if c.category == cat
            ]
            for cat in plan.layout.categories
        },
        "totals": {
            "raw_profit": report.raw_profit,
            "penalty": report.penalty,
            "fitness": report.fitness,
        },
        "feasible": report.feasible,
        "constraint_report": [
            {"constraint": s.constraint, "category": s.category, "day": s.day, "slack": s.slack}
            for s in report.slacks
        ],
    }


def plan_from_doc(doc: dict) -> Plan:
    layout = PlanLayout(categories=tuple(doc["categories"]), horizon=doc["horizon"])
    prices = np.zeros((len(layout.categories), layout.horizon))
    qtys = np.zeros_like(prices)
    for ci, cat in enumerate(layout.categories):
        for cell in doc["cells"][cat]:
            di = cell["day"] - 1
            prices[ci, di] = cell["price"]
            qtys[ci, di] = cell["qty"]
    plan = Plan(layout=layout, prices=prices, quantities=qtys)
    plan.projected_profit = doc["totals"]["raw_profit"]
    return plan


def plan_csv_text(doc: dict) -> str:
    cols = ["category", "day", "price", "qty", "expected_sales", "sellable",
            "waste", "revenue", "cost", "profit"]
    buf = io.StringIO()
    buf.write(f"# schema_version={doc['schema_version']}\n")
    w = csv.writer(buf)
    w.writerow(cols)
    for cat in doc["categories"]:
        for cell in doc["cells"][cat]:
            w.writerow([cat] + [repr(float(cell[k])) if k != "day" else cell[k] for k in cols[1:]])
    w.writerow(["TOTAL", "", "", "", "", "", "", "", "", repr(float(doc["totals"]["raw_profit"]))])
    return buf.getvalue()


def plan_to_csv(doc: dict, path: Path | str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(plan_csv_text(doc))
