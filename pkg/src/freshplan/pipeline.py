"""Pipeline orchestration: data -> forecast -> optimize -> feedback.

A run is a directory of JSON/CSV artifacts: config.json (the exact
resolved config), dataset.csv, models/<category>.npz (trained weights),
training/<category>_loss.csv, forecast/<category>.json, models.json
(demand/cost/constraint snapshot used by the optimizer), plan.json,
swarm_history.csv, and meta.json (run id, lineage, profit summary).
plan.json carries no run id or timestamp, so identical configs produce
bit-identical plans.

The grid oracle exhaustively searches per-cell price grids with the
quantity pinned to expected sales (clamped under the inventory cap).
For the deterministic profit model, profit is separable per cell and,
whenever price * (1 - spoilage) >= wholesale across the band, ordering
exactly the expected demand is optimal, so the per-cell argmax is the
exact grid optimum.
"""

from __future__ import annotations

import datetime
import json
import shutil
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import data as data_mod
from . import forecast as fc
from . import pricing
from . import swarm
from .errors import (ConfigError, DataError, FreshplanError, GridTooLargeError,
                     PipelineStageError)

SCHEMA_VERSION = 1

ORACLE_CELL_LIMIT = 10_000_000


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DataSection:
    source: str = "synth"             # synth | csv
    path: Optional[str] = None        # csv source file
    seed: int = 0
    n_categories: int = 2
    n_days: int = 28
    profile: data_mod.GeneratorProfile = field(default_factory=data_mod.GeneratorProfile)

    def __post_init__(self):
        if self.source not in ("synth", "csv"):
            raise ConfigError(f"data.source must be 'synth' or 'csv', got {self.source!r}")
        if self.source == "csv" and not self.path:
            raise ConfigError("data.source 'csv' requires data.path")


@dataclass(frozen=True)
class TrainSection:
    window_len: int = 7
    split_frac: float = 0.75
    include_day_of_week: bool = True
    hidden_dim: int = 16
    epochs: int = 200
    learning_rate: float = 0.3
    gradient_clip: Optional[float] = 5.0
    seed: int = 0


@dataclass(frozen=True)
class PsoSection:
    n_particles: int = 30
    max_iters: int = 200
    w: float = 0.7
    c1: float = 1.5
    c2: float = 1.5
    seed: int = 0


@dataclass(frozen=True)
class CostSection:
    profit_margin: float = 1.2
    variable_cost: Optional[float] = None  # None derives it from the weighted loss rate

    def __post_init__(self):
        if self.profit_margin < 0:
            raise ConfigError(f"costs.profit_margin must be >= 0, got {self.profit_margin}")


@dataclass(frozen=True)
class ConstraintSection:
    band_frac: tuple[float, float] = pricing.DEFAULT_BAND_FRAC
    price_bands: dict = field(default_factory=dict)     # explicit per-category overrides
    inventory_caps: dict = field(default_factory=dict)
    spoilage_source: str = "forecast"
    penalty_coefficient: float = pricing.DEFAULT_PENALTY_COEFFICIENT

    def __post_init__(self):
        if not 0 < self.band_frac[0] < self.band_frac[1]:
            raise ConfigError(f"constraints.band_frac must satisfy 0 < lo < hi, got {self.band_frac}")
        if self.spoilage_source not in ("forecast", "historical"):
            raise ConfigError(
                f"constraints.spoilage_source must be 'forecast' or 'historical', "
                f"got {self.spoilage_source!r}")


@dataclass(frozen=True)
class PipelineConfig:
    data: DataSection = field(default_factory=DataSection)
    train: TrainSection = field(default_factory=TrainSection)
    pso: PsoSection = field(default_factory=PsoSection)
    costs: CostSection = field(default_factory=CostSection)
    constraints: ConstraintSection = field(default_factory=ConstraintSection)
    horizon: int = 7
    feedback_days: Optional[int] = None  # None = train on the full history

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.feedback_days is not None and self.feedback_days < self.train.window_len + 2:
            raise ConfigError(
                f"feedback_days {self.feedback_days} cannot cover even one "
                f"train and one test window of length {self.train.window_len}")


def profile_to_doc(p: data_mod.GeneratorProfile) -> dict:
    doc = asdict(p)
    doc["start_date"] = p.start_date.isoformat()
    if p.price_band is not None:
        doc["price_band"] = list(p.price_band)
    return doc


def profile_from_doc(doc: dict) -> data_mod.GeneratorProfile:
    known = {f.name for f in fields(data_mod.GeneratorProfile)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown generator profile keys: {', '.join(sorted(unknown))}")
    kwargs = dict(doc)
    if "start_date" in kwargs:
        kwargs["start_date"] = datetime.date.fromisoformat(kwargs["start_date"])
    if kwargs.get("price_band") is not None:
        kwargs["price_band"] = tuple(kwargs["price_band"])
    return data_mod.GeneratorProfile(**kwargs)


def _section_from_doc(cls, doc: dict, name: str):
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown {name} config keys: {', '.join(sorted(unknown))}")
    return cls(**doc)


def config_to_doc(cfg: PipelineConfig) -> dict:
    data_doc = asdict(cfg.data)
    data_doc["profile"] = profile_to_doc(cfg.data.profile)
    cons_doc = asdict(cfg.constraints)
    cons_doc["band_frac"] = list(cfg.constraints.band_frac)
    cons_doc["price_bands"] = {c: list(b) for c, b in cfg.constraints.price_bands.items()}
    return {
        "schema_version": SCHEMA_VERSION,
        "data": data_doc,
        "train": asdict(cfg.train),
        "pso": asdict(cfg.pso),
        "costs": asdict(cfg.costs),
        "constraints": cons_doc,
        "horizon": cfg.horizon,
        "feedback_days": cfg.feedback_days,
    }


def config_from_doc(doc: dict) -> PipelineConfig:
    known = {"schema_version", "data", "train", "pso", "costs", "constraints",
             "horizon", "feedback_days"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    data_doc = dict(doc.get("data", {}))
    profile = profile_from_doc(data_doc.pop("profile", {}))
    cons_doc = dict(doc.get("constraints", {}))
    if "band_frac" in cons_doc:
        cons_doc["band_frac"] = tuple(cons_doc["band_frac"])
    if "price_bands" in cons_doc:
        cons_doc["price_bands"] = {c: tuple(b) for c, b in cons_doc["price_bands"].items()}
    data_sec = _section_from_doc(DataSection, {**data_doc, "profile": profile}, "data")
    return PipelineConfig(
        data=data_sec,
        train=_section_from_doc(TrainSection, doc.get("train", {}), "train"),
        pso=_section_from_doc(PsoSection, doc.get("pso", {}), "pso"),
        costs=_section_from_doc(CostSection, doc.get("costs", {}), "costs"),
        constraints=_section_from_doc(ConstraintSection, cons_doc, "constraints"),
        horizon=doc.get("horizon", 7),
        feedback_days=doc.get("feedback_days"),
    )


def load_config(path: Path | str) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    try:
        cfg = config_from_doc(doc)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    # a relative CSV path is relative to the config file, so run-directory
    # snapshots (data.path = "dataset.csv") replay from their own copy
    if cfg.data.source == "csv" and cfg.data.path and not Path(cfg.data.path).is_absolute():
        cfg = replace(cfg, data=replace(cfg.data, path=str(path.parent / cfg.data.path)))
    return cfg


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Run directories and artifacts
# ---------------------------------------------------------------------------


@dataclass
class RunArtifact:
    run_id: str
    run_dir: Path
    created_at: str
    config: PipelineConfig
    dataset: data_mod.Dataset
    bundles: dict[str, fc.ForecastBundle]
    demand: dict[str, pricing.DemandModel]
    costs: dict[str, pricing.CostModel]
    plan: pricing.Plan
    report: pricing.ProfitReport
    baseline_plan: pricing.Plan
    baseline_report: pricing.ProfitReport
    swarm_result: swarm.SwarmResult
    parent_run_id: Optional[str] = None
    override: Optional[dict] = None


def create_run_dir(run_root: Path | str, run_id: Optional[str] = None) -> tuple[str, Path]:
    root = Path(run_root)
    root.mkdir(parents=True, exist_ok=True)
    if run_id is None:
        stamp = datetime.datetime.now(datetime.timezone.utc).strftime("%Y%m%dT%H%M%S")
        n = 0
        while True:
            run_id = f"run-{stamp}-{n:03d}"
            if not (root / run_id).exists():
                break
            n += 1
    run_dir = root / run_id
    if run_dir.exists():
        raise DataError(f"run directory already exists: {run_dir}")
    run_dir.mkdir(parents=True)
    return run_id, run_dir


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def stage_data(cfg: PipelineConfig, run_dir: Path) -> data_mod.Dataset:
    """Ingest or synthesize, then snapshot dataset and config into the run."""
    try:
        if cfg.data.source == "csv":
            ds = data_mod.ingest_csv(cfg.data.path)
        else:
            ds = data_mod.synthesize(cfg.data.seed, cfg.data.n_categories,
                                     cfg.data.n_days, cfg.data.profile)
        _check_category_references(cfg, ds)
        _write_json(run_dir / "config.json", config_to_doc(cfg))
        ds.write_csv(run_dir / "dataset.csv")
        return ds
    except PipelineStageError:
        raise
    except (FreshplanError, ValueError) as exc:
        raise PipelineStageError("data", exc) from exc


def _check_category_references(cfg: PipelineConfig, ds: data_mod.Dataset) -> None:
    known = set(ds.categories)
    for section, mapping in (("price_bands", cfg.constraints.price_bands),
                             ("inventory_caps", cfg.constraints.inventory_caps)):
        bad = sorted(set(mapping) - known)
        if bad:
            raise ConfigError(
                f"constraints.{section} references unknown categories: {', '.join(bad)}")


def _training_view(cfg: PipelineConfig, ds: data_mod.Dataset) -> data_mod.Dataset:
    """The trailing feedback window of the history, or everything."""
    if cfg.feedback_days is None or ds.n_days <= cfg.feedback_days:
        return ds
    cut = ds.span[1] - datetime.timedelta(days=cfg.feedback_days - 1)
    return data_mod.Dataset.from_records([r for r in ds.records if r.date >= cut])


def stage_train(cfg: PipelineConfig, ds: data_mod.Dataset,
                run_dir: Path) -> dict[str, fc.TrainResult]:
    """Train one model per category; persist weights and loss curves."""
    try:
        view = _training_view(cfg, ds)
        tc = fc.TrainConfig(
            hidden_dim=cfg.train.hidden_dim, epochs=cfg.train.epochs,
            learning_rate=cfg.train.learning_rate,
            gradient_clip=cfg.train.gradient_clip, seed=cfg.train.seed,
        )
        models_dir = run_dir / "models"
        training_dir = run_dir / "training"
        models_dir.mkdir(exist_ok=True)
        training_dir.mkdir(exist_ok=True)
        results: dict[str, fc.TrainResult] = {}
        for cat in ds.categories:
            train_w, _ = data_mod.make_windows(
                view, cat, cfg.train.window_len, cfg.train.split_frac,
                cfg.train.include_day_of_week)
            result = fc.train(train_w, tc)
            results[cat] = result
            np.savez(models_dir / f"{cat}.npz",
                     **{name: arr for name, arr in
                        zip(fc.PARAM_FIELDS, result.params.arrays())})
            fc.write_loss_csv(result.losses, training_dir / f"{cat}_loss.csv")
        return results
    except PipelineStageError:
        raise
    except (FreshplanError, ValueError) as exc:
        raise PipelineStageError("train", exc) from exc


def load_models(run_dir: Path) -> dict[str, fc.LstmParams]:
    models_dir = Path(run_dir) / "models"
    if not models_dir.is_dir():
        raise DataError(f"no trained models in {run_dir}; run the train stage first")
    out: dict[str, fc.LstmParams] = {}
    for path in sorted(models_dir.glob("*.npz")):
        with np.load(path) as f:
            out[path.stem] = fc.LstmParams(**{k: f[k] for k in f.files})
    if not out:
        raise DataError(f"no trained models in {run_dir}; run the train stage first")
    return out


def stage_forecast(cfg: PipelineConfig, ds: data_mod.Dataset, run_dir: Path,
                   models: Optional[dict[str, fc.LstmParams]] = None,
                   train_results: Optional[dict[str, fc.TrainResult]] = None,
                   ) -> dict[str, fc.ForecastBundle]:
    """Seven-day bundles per category, evaluated on the held-out windows."""
    try:
        if models is None:
            models = (
                {c: r.params for c, r in train_results.items()}
                if train_results is not None else load_models(run_dir)
            )
        view = _training_view(cfg, ds)
        fdir = run_dir / "forecast"
        fdir.mkdir(exist_ok=True)
        bundles: dict[str, fc.ForecastBundle] = {}
        for cat in ds.categories:
            if cat not in models:
                raise DataError(f"no trained model for category {cat} in {run_dir}")
            train_w, test_w = data_mod.make_windows(
                view, cat, cfg.train.window_len, cfg.train.split_frac,
                cfg.train.include_day_of_week)
            scaling = train_w[0].scaling
            params = models[cat]
            metrics_by_var = fc.one_step_eval(params, test_w, scaling)
            if train_results is not None and cat in train_results:
                final_loss = train_results[cat].losses[-1]
            else:
                final_loss = fc.loss_and_grads(params, train_w)[0]
            bundle = fc.forecast_week(
                params, view, cat, scaling, cfg.train.window_len,
                metrics_by_var, final_loss, horizon=cfg.horizon,
                include_day_of_week=cfg.train.include_day_of_week)
            bundles[cat] = bundle
            _write_json(fdir / f"{cat}.json", fc.bundle_to_doc(bundle))
        return bundles
    except PipelineStageError:
        raise
    except (FreshplanError, ValueError) as exc:
        raise PipelineStageError("forecast", exc) from exc


def load_bundles(run_dir: Path) -> dict[str, fc.ForecastBundle]:
    fdir = Path(run_dir) / "forecast"
    if not fdir.is_dir():
        raise DataError(f"no forecasts in {run_dir}; run the forecast stage first")
    out = {p.stem: fc.bundle_from_doc(_read_json(p)) for p in sorted(fdir.glob("*.json"))}
    if not out:
        raise DataError(f"no forecasts in {run_dir}; run the forecast stage first")
    return out


@dataclass
class OptimizeInputs:
    """Everything the optimizer scores against, resolvable from disk."""
    layout: pricing.PlanLayout
    demand: dict[str, pricing.DemandModel]
    costs: dict[str, pricing.CostModel]
    spoilage: dict[str, object]
    cons: pricing.Constraints
    penalty_coefficient: float


def build_optimize_inputs(cfg: PipelineConfig, ds: data_mod.Dataset,
                          bundles: dict[str, fc.ForecastBundle]) -> OptimizeInputs:
    demand: dict[str, pricing.DemandModel] = {}
    costs: dict[str, pricing.CostModel] = {}
    spoilage: dict[str, object] = {}
    mean_prices: dict[str, float] = {}
    view = _training_view(cfg, ds)
    for cat in ds.categories:
        series = view.category_series(cat)
        demand[cat] = pricing.fit_demand(
            [(r.unit_price, r.volume) for r in series], category=cat)
        costs[cat] = pricing.derive_cost_model(
            cat, series, cfg.costs.profit_margin, cfg.costs.variable_cost)
        mean_prices[cat] = float(np.mean([r.unit_price for r in series]))
        if cfg.constraints.spoilage_source == "forecast":
            if cat not in bundles:
                raise DataError(f"spoilage_source is 'forecast' but no bundle for {cat}")
            spoilage[cat] = list(bundles[cat].spoilage)
        else:
            spoilage[cat] = pricing.weighted_loss_rate(
                [(r.volume, r.spoilage_rate) for r in series])
    bands = pricing.default_price_bands(mean_prices, cfg.constraints.band_frac)
    bands.update({c: tuple(b) for c, b in cfg.constraints.price_bands.items()})
    cons = pricing.Constraints(
        price_bands=bands,
        inventory_caps=dict(cfg.constraints.inventory_caps),
        spoilage_source=cfg.constraints.spoilage_source,
    )
    layout = pricing.PlanLayout(categories=tuple(ds.categories), horizon=cfg.horizon)
    return OptimizeInputs(layout=layout, demand=demand, costs=costs,
                          spoilage=spoilage, cons=cons,
                          penalty_coefficient=cfg.constraints.penalty_coefficient)


def _optimize_bounds(inputs: OptimizeInputs) -> list[tuple[float, float]]:
    """Per-dimension search box: the price band, and [0, peak demand] for
    quantities (demand is maximal at the band's low edge; cap binds if lower)."""
    bounds: list[tuple[float, float]] = []
    for ci, cat in enumerate(inputs.layout.categories):
        lo, hi = inputs.cons.price_bands[cat]
        caps = inputs.cons.caps_for(cat, inputs.layout.horizon)
        peak = pricing.expected_sales(inputs.demand[cat], lo)
        for di in range(inputs.layout.horizon):
            q_hi = peak if caps is None else min(peak, float(caps[di]))
            bounds.append((lo, hi))
            bounds.append((0.0, max(q_hi, 1.0)))
    return bounds


def models_doc(inputs: OptimizeInputs) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "categories": list(inputs.layout.categories),
        "horizon": inputs.layout.horizon,
        "demand": {
            c: {"slope": m.slope, "intercept": m.intercept,
                "r_squared": m.r_squared, "n_points": m.n_points}
            for c, m in inputs.demand.items()
        },
        "costs": {
            c: {"fixed_cost": m.fixed_cost, "variable_cost": m.variable_cost,
                "profit_margin": m.profit_margin}
            for c, m in inputs.costs.items()
        },
        "spoilage": {c: s for c, s in inputs.spoilage.items()},
        "price_bands": {c: list(b) for c, b in inputs.cons.price_bands.items()},
        "inventory_caps": {
            c: (list(v) if isinstance(v, (list, tuple, np.ndarray)) else v)
            for c, v in inputs.cons.inventory_caps.items()
        },
        "spoilage_source": inputs.cons.spoilage_source,
        "penalty_coefficient": inputs.penalty_coefficient,
    }


def inputs_from_models_doc(doc: dict) -> OptimizeInputs:
    layout = pricing.PlanLayout(categories=tuple(doc["categories"]), horizon=doc["horizon"])
    demand = {c: pricing.DemandModel(category=c, **m) for c, m in doc["demand"].items()}
    costs = {c: pricing.CostModel(category=c, **m) for c, m in doc["costs"].items()}
    cons = pricing.Constraints(
        price_bands={c: tuple(b) for c, b in doc["price_bands"].items()},
        inventory_caps=dict(doc["inventory_caps"]),
        spoilage_source=doc["spoilage_source"],
    )
    return OptimizeInputs(layout=layout, demand=demand, costs=costs,
                          spoilage=dict(doc["spoilage"]), cons=cons,
                          penalty_coefficient=doc["penalty_coefficient"])


@dataclass
class OptimizeOutcome:
    plan: pricing.Plan
    report: pricing.ProfitReport
    baseline_plan: pricing.Plan
    baseline_report: pricing.ProfitReport
    swarm_result: swarm.SwarmResult


def optimize_plan(inputs: OptimizeInputs, pso: PsoSection,
                  on_iteration: Optional[Callable[[int, float], None]] = None,
                  ) -> OptimizeOutcome:
    """PSO over plan vectors; the cost-plus baseline is a profit floor.

    The baseline is deliberately kept out of the swarm: its quantities sit
    exactly on expected sales, a ridge where nearly every uncoordinated
    perturbation scores worse, so seeding it as gbest collapses the swarm
    onto it and search stalls. Instead the swarm explores freely and the
    final plan is whichever of gbest and baseline scores higher.
    """
    def fitness(x: np.ndarray) -> float:
        plan = pricing.plan_from_vector(x, inputs.layout)
        return pricing.plan_profit(plan, inputs.demand, inputs.costs,
                                   inputs.spoilage, inputs.cons,
                                   inputs.penalty_coefficient).fitness

    baseline = pricing.cost_plus_baseline(inputs.layout, inputs.demand,
                                          inputs.costs, inputs.cons)
    baseline_report = pricing.plan_profit(baseline, inputs.demand, inputs.costs,
                                          inputs.spoilage, inputs.cons,
                                          inputs.penalty_coefficient)
    cfg = swarm.SwarmConfig(
        bounds=tuple(_optimize_bounds(inputs)),
        n_particles=pso.n_particles, w=pso.w, c1=pso.c1, c2=pso.c2,
        max_iters=pso.max_iters, seed=pso.seed, target="maximize",
    )
    result = swarm.optimize(cfg, fitness, on_iteration=on_iteration)
    best = pricing.plan_from_vector(result.gbest_pos, inputs.layout)
    report = pricing.plan_profit(best, inputs.demand, inputs.costs,
                                 inputs.spoilage, inputs.cons,
                                 inputs.penalty_coefficient)
    if baseline_report.fitness > report.fitness:
        best, report = baseline, baseline_report
    best.projected_profit = report.raw_profit
    best.constraint_report = report.slacks
    baseline.projected_profit = baseline_report.raw_profit
    baseline.constraint_report = baseline_report.slacks
    return OptimizeOutcome(plan=best, report=report, baseline_plan=baseline,
                           baseline_report=baseline_report, swarm_result=result)


def stage_optimize(cfg: PipelineConfig, ds: data_mod.Dataset, run_dir: Path,
                   bundles: Optional[dict[str, fc.ForecastBundle]] = None,
                   on_iteration: Optional[Callable[[int, float], None]] = None,
                   ) -> tuple[OptimizeInputs, OptimizeOutcome]:
    try:
        if bundles is None:
            bundles = load_bundles(run_dir)
        inputs = build_optimize_inputs(cfg, ds, bundles)
        outcome = optimize_plan(inputs, cfg.pso, on_iteration=on_iteration)
        _write_json(run_dir / "models.json", models_doc(inputs))
        _write_json(run_dir / "plan.json",
                    pricing.plan_to_doc(outcome.plan, outcome.report))
        swarm.write_history_csv(outcome.swarm_result, run_dir / "swarm_history.csv")
        return inputs, outcome
    except PipelineStageError:
        raise
    except (FreshplanError, ValueError) as exc:
        raise PipelineStageError("optimize", exc) from exc


def write_meta(run_dir: Path, run_id: str, created_at: str, ds: data_mod.Dataset,
               outcome: OptimizeOutcome, parent_run_id: Optional[str],
               override: Optional[dict]) -> None:
    _write_json(run_dir / "meta.json", {
        "schema_version": SCHEMA_VERSION,
        "run_id": run_id,
        "created_at": created_at,
        "parent_run_id": parent_run_id,
        "override": override,
        "categories": list(ds.categories),
        "span": [ds.span[0].isoformat(), ds.span[1].isoformat()],
        "baseline_raw_profit": outcome.baseline_report.raw_profit,
        "optimized_raw_profit": outcome.report.raw_profit,
        "optimized_fitness": outcome.report.fitness,
        "feasible": outcome.report.feasible,
        "iterations_run": outcome.swarm_result.iterations_run,
    })


def run_pipeline(cfg: PipelineConfig, run_root: Path | str = "runs",
                 run_id: Optional[str] = None,
                 parent_run_id: Optional[str] = None,
                 override: Optional[dict] = None,
                 dataset: Optional[data_mod.Dataset] = None,
                 on_iteration: Optional[Callable[[int, float], None]] = None,
                 ) -> RunArtifact:
    """All four steps end to end; every stage error names its stage."""
    run_id, run_dir = create_run_dir(run_root, run_id)
    created_at = datetime.datetime.now(datetime.timezone.utc).isoformat()
    if dataset is None:
        ds = stage_data(cfg, run_dir)
    else:
        ds = dataset
        try:
            _check_category_references(cfg, ds)
        except (FreshplanError, ValueError) as exc:
            raise PipelineStageError("data", exc) from exc
        _write_json(run_dir / "config.json", config_to_doc(cfg))
        ds.write_csv(run_dir / "dataset.csv")
    train_results = stage_train(cfg, ds, run_dir)
    bundles = stage_forecast(cfg, ds, run_dir, train_results=train_results)
    inputs, outcome = stage_optimize(cfg, ds, run_dir, bundles,
                                     on_iteration=on_iteration)
    write_meta(run_dir, run_id, created_at, ds, outcome, parent_run_id, override)
    return RunArtifact(
        run_id=run_id, run_dir=run_dir, created_at=created_at, config=cfg,
        dataset=ds, bundles=bundles, demand=inputs.demand, costs=inputs.costs,
        plan=outcome.plan, report=outcome.report,
        baseline_plan=outcome.baseline_plan, baseline_report=outcome.baseline_report,
        swarm_result=outcome.swarm_result,
        parent_run_id=parent_run_id, override=override,
    )


# ---------------------------------------------------------------------------
# Feedback loop
# ---------------------------------------------------------------------------


def feedback_update(run_dir: Path | str, new_records: Sequence[data_mod.SalesRecord],
                    run_root: Path | str = "runs",
                    run_id: Optional[str] = None) -> RunArtifact:
    """Extend a run's history contiguously and re-run train/forecast/optimize.

    The new artifact records the base run as its parent.
    """
    run_dir = Path(run_dir)
    if not new_records:
        raise DataError("empty update: no new records supplied")
    for required in ("meta.json", "config.json", "dataset.csv"):
        if not (run_dir / required).exists():
            raise DataError(f"base run {run_dir} is incomplete: missing {required}")
    base_meta = _read_json(run_dir / "meta.json")
    cfg = load_config(run_dir / "config.json")
    ds = data_mod.ingest_csv(run_dir / "dataset.csv")

    first_new = min(r.date for r in new_records)
    expected = ds.span[1] + datetime.timedelta(days=1)
    if first_new != expected:
        raise DataError(
            f"feedback records must start at {expected.isoformat()} "
            f"(day after the current span), got {first_new.isoformat()}")
    merged = data_mod.Dataset.from_records(list(ds.records) + list(new_records))

    # 'dataset.csv' resolves against the run directory's own snapshot, so
    # the persisted config replays the merged history, not the parent's.
    cfg = replace(cfg, data=replace(cfg.data, source="csv", path="dataset.csv"))
    return run_pipeline(cfg, run_root=run_root, run_id=run_id,
                        parent_run_id=base_meta["run_id"], dataset=merged)


# ---------------------------------------------------------------------------
# Scenario re-optimization (manager levers over a completed run)
# ---------------------------------------------------------------------------


def apply_override(inputs: OptimizeInputs, pso: PsoSection,
                   override: dict) -> tuple[OptimizeInputs, PsoSection]:
    """Rebuild optimize inputs with manager levers applied.

    Recognized keys: price_bands, profit_margin, inventory_caps,
    iterations, particles. Validation of value shapes happens in the
    pricing constructors.
    """
    known = {"price_bands", "profit_margin", "inventory_caps", "iterations", "particles"}
    unknown = set(override) - known
    if unknown:
        raise ConfigError(f"unknown override keys: {', '.join(sorted(unknown))}")
    for cat in override.get("price_bands", {}):
        if cat not in inputs.layout.categories:
            raise ConfigError(f"override price band for unknown category {cat}")
    for cat in override.get("inventory_caps", {}):
        if cat not in inputs.layout.categories:
            raise ConfigError(f"override inventory cap for unknown category {cat}")

    bands = dict(inputs.cons.price_bands)
    bands.update({c: tuple(b) for c, b in override.get("price_bands", {}).items()})
    caps = dict(inputs.cons.inventory_caps)
    caps.update(override.get("inventory_caps", {}))
    cons = pricing.Constraints(price_bands=bands, inventory_caps=caps,
                               spoilage_source=inputs.cons.spoilage_source)

    costs = inputs.costs
    margin = override.get("profit_margin")
    if margin is not None:
        if margin < 0:
            raise ConfigError(f"profit_margin must be >= 0, got {margin}")
        costs = {c: replace(m, profit_margin=float(margin)) for c, m in costs.items()}

    new_inputs = OptimizeInputs(layout=inputs.layout, demand=inputs.demand,
                                costs=costs, spoilage=inputs.spoilage, cons=cons,
                                penalty_coefficient=inputs.penalty_coefficient)
    if override.get("iterations") is not None:
        pso = replace(pso, max_iters=int(override["iterations"]))
    if override.get("particles") is not None:
        pso = replace(pso, n_particles=int(override["particles"]))
    return new_inputs, pso


def run_scenario(base_run_dir: Path | str, override: dict,
                 run_root: Path | str = "runs", run_id: Optional[str] = None,
                 on_iteration: Optional[Callable[[int, float], None]] = None,
                 ) -> tuple[str, Path]:
    """Re-optimize a completed run under manager levers.

    Reuses the base run's forecasts and demand models (no retraining);
    an empty override reproduces the base plan exactly because the swarm
    seed and inputs are unchanged.
    """
    base = Path(base_run_dir)
    for required in ("meta.json", "models.json", "config.json", "dataset.csv"):
        if not (base / required).exists():
            raise DataError(f"base run {base} is incomplete: missing {required}")
    base_meta = _read_json(base / "meta.json")
    cfg = load_config(base / "config.json")
    inputs = inputs_from_models_doc(_read_json(base / "models.json"))
    try:
        inputs, pso = apply_override(inputs, cfg.pso, override)
    except (FreshplanError, ValueError) as exc:
        raise PipelineStageError("scenario", exc) from exc

    run_id, run_dir = create_run_dir(run_root, run_id)
    created_at = datetime.datetime.now(datetime.timezone.utc).isoformat()
    try:
        outcome = optimize_plan(inputs, pso, on_iteration=on_iteration)
        _write_json(run_dir / "config.json", config_to_doc(cfg))
        shutil.copy(base / "dataset.csv", run_dir / "dataset.csv")
        if (base / "forecast").is_dir():
            shutil.copytree(base / "forecast", run_dir / "forecast")
        _write_json(run_dir / "models.json", models_doc(inputs))
        _write_json(run_dir / "plan.json",
                    pricing.plan_to_doc(outcome.plan, outcome.report))
        swarm.write_history_csv(outcome.swarm_result, run_dir / "swarm_history.csv")
        ds = data_mod.ingest_csv(run_dir / "dataset.csv")
        write_meta(run_dir, run_id, created_at, ds, outcome,
                   parent_run_id=base_meta["run_id"], override=override)
    except PipelineStageError:
        raise
    except (FreshplanError, ValueError) as exc:
        raise PipelineStageError("scenario", exc) from exc
    return run_id, run_dir


# ---------------------------------------------------------------------------
# Grid oracle
# ---------------------------------------------------------------------------


def oracle_best_plan(demand: dict[str, pricing.DemandModel],
                     costs: dict[str, pricing.CostModel],
                     spoilage: dict[str, object],
                     cons: pricing.Constraints,
                     grid: int = 200,
                     horizon: int = 7) -> tuple[pricing.Plan, float]:
    """Exact optimum over per-cell price grids.

    Profit is separable per (category, day) and linear in quantity with
    slope price*(1-spoilage) - wholesale, so the best quantity at a price
    is expected sales (clamped under the cap) when that margin is
    positive and zero when it is negative. Searching each cell's price
    grid with that quantity rule yields the exact grid optimum.
    Enforced instance limit: cells x grid <= 10^7.
    """
    if grid < 2:
        raise ConfigError(f"grid resolution must be >= 2, got {grid}")
    categories = tuple(sorted(demand))
    layout = pricing.PlanLayout(categories=categories, horizon=horizon)
    n_evals = len(categories) * horizon * grid
    if n_evals > ORACLE_CELL_LIMIT:
        raise GridTooLargeError(
            f"oracle instance needs {n_evals} evaluations, limit is {ORACLE_CELL_LIMIT}")

    prices_out = np.zeros((len(categories), horizon))
    qtys_out = np.zeros_like(prices_out)
    total = 0.0
    for ci, cat in enumerate(categories):
        dm = demand[cat]
        wholesale = costs[cat].fixed_cost
        lo, hi = cons.price_bands[cat]
        caps = cons.caps_for(cat, horizon)
        spoil = spoilage.get(cat, 0.0)
        spoil_days = (np.asarray(spoil, dtype=np.float64)
                      if isinstance(spoil, (list, tuple, np.ndarray))
                      else np.full(horizon, float(spoil)))
        grid_prices = np.linspace(lo, hi, grid)
        expected = np.maximum(0.0, dm.slope * grid_prices + dm.intercept)
        for di in range(horizon):
            qty = expected if caps is None else np.minimum(expected, caps[di])
            margin = grid_prices * (1.0 - spoil_days[di]) - wholesale
            qty = np.where(margin > 0.0, qty, 0.0)
            profit = margin * qty
            k = int(np.argmax(profit))
            prices_out[ci, di] = grid_prices[k]
            qtys_out[ci, di] = qty[k]
            total += float(profit[k])

    plan = pricing.Plan(layout=layout, prices=prices_out, quantities=qtys_out)
    plan.projected_profit = total
    return plan, total
