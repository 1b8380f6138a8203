"""Particle swarm optimizer with pluggable fitness and convergence history.

Velocity update per particle and dimension:

    v' = w*v + c1*r1*(pbest - x) + c2*r2*(gbest - x)
    x' = x + v'

with r1, r2 fresh U(0,1) draws per particle per dimension. Each particle
owns a pre-split random substream, so evaluating fitness in parallel can
never reorder random-stream consumption. Positions are kept inside the
bounds by clamping and zeroing the violating velocity component.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, FitnessError

DEFAULT_W = 0.7
DEFAULT_C1 = 1.5
DEFAULT_C2 = 1.5
DEFAULT_N_PARTICLES = 30

FitnessFn = Callable[[np.ndarray], float]


@dataclass(frozen=True)
class SwarmConfig:
    bounds: tuple[tuple[float, float], ...]
    n_particles: int = DEFAULT_N_PARTICLES
    w: float = DEFAULT_W
    c1: float = DEFAULT_C1
    c2: float = DEFAULT_C2
    v_max: Optional[tuple[float, ...]] = None  # default 0.5 * (hi - lo)
    max_iters: int = 200
    seed: int = 0
    target: str = "minimize"
    early_stop: bool = False
    early_stop_tol: float = 1e-8
    early_stop_window: int = 50

    def __post_init__(self):
        if self.n_particles < 2:
            raise ConfigError(f"n_particles must be >= 2, got {self.n_particles}")
        if not self.bounds:
            raise ConfigError("bounds must be non-empty")
        for d, (lo, hi) in enumerate(self.bounds):
            if not lo < hi:
                raise ConfigError(f"bounds[{d}]: lo must be < hi, got ({lo}, {hi})")
        if not 0.0 <= self.w <= 1.0:
            raise ConfigError(f"w must be in [0, 1], got {self.w}")
        if self.c1 < 0 or self.c2 < 0:
            raise ConfigError(f"c1 and c2 must be >= 0, got ({self.c1}, {self.c2})")
        if self.max_iters < 0:
            raise ConfigError(f"max_iters must be >= 0, got {self.max_iters}")
        if self.target not in ("minimize", "maximize"):
            raise ConfigError(f"target must be 'minimize' or 'maximize', got {self.target!r}")
        if self.v_max is not None and len(self.v_max) != len(self.bounds):
            raise ConfigError("v_max must have one entry per dimension")

    @property
    def n_dims(self) -> int:
        return len(self.bounds)

    def velocity_cap(self) -> np.ndarray:
        if self.v_max is not None:
            return np.asarray(self.v_max, dtype=np.float64)
        b = np.asarray(self.bounds, dtype=np.float64)
        return 0.5 * (b[:, 1] - b[:, 0])


@dataclass
class SwarmState:
    cfg: SwarmConfig
    fitness: FitnessFn
    positions: np.ndarray  # (n_particles, n_dims)
    velocities: np.ndarray
    pbest_pos: np.ndarray
    pbest_fit: np.ndarray  # (n_particles,)
    gbest_pos: np.ndarray
    gbest_fit: float
    history: list[float]  # gbest_fit, index 0 = after init
    iteration: int
    rngs: list[np.random.Generator]
    frozen_events: list[tuple[int, int]] = field(default_factory=list)  # (iteration, particle)


@dataclass
class SwarmResult:
    gbest_pos: np.ndarray
    gbest_fit: float
    history: list[float]
    iterations_run: int
    frozen_events: list[tuple[int, int]] = field(default_factory=list)


def _better(cfg: SwarmConfig, a: float, b: float) -> bool:
    """True if fitness a beats fitness b in the optimization direction."""
    return a < b if cfg.target == "minimize" else a > b


def velocity_update(
    w: float, c1: float, c2: float,
    x: np.ndarray, v: np.ndarray,
    pbest: np.ndarray, gbest: np.ndarray,
    r1: np.ndarray, r2: np.ndarray,
) -> np.ndarray:
    """The bare velocity equation; exposed so it can be driven with fixed r1, r2."""
    return w * v + c1 * r1 * (pbest - x) + c2 * r2 * (gbest - x)


def init_swarm(cfg: SwarmConfig, fitness: FitnessFn, x0: Optional[Sequence[np.ndarray]] = None) -> SwarmState:
    """Seeded uniform initialization inside the bounds.

    ``x0`` optionally pins the first len(x0) particles to given positions
    (clamped into bounds); useful for seeding a known-good plan.
    """
    b = np.asarray(cfg.bounds, dtype=np.float64)
    lo, hi = b[:, 0], b[:, 1]
    vcap = cfg.velocity_cap()
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(cfg.n_particles)]

    positions = np.empty((cfg.n_particles, cfg.n_dims))
    velocities = np.empty_like(positions)
    for i, rng in enumerate(rngs):
        positions[i] = lo + rng.random(cfg.n_dims) * (hi - lo)
        velocities[i] = -vcap + rng.random(cfg.n_dims) * (2.0 * vcap)
    if x0 is not None:
        for i, x in enumerate(x0[: cfg.n_particles]):
            positions[i] = np.clip(np.asarray(x, dtype=np.float64), lo, hi)

    fits = np.empty(cfg.n_particles)
    for i in range(cfg.n_particles):
        f = float(fitness(positions[i]))
        if math.isnan(f):
            raise FitnessError(f"fitness is NaN at initial position {positions[i].tolist()}")
        fits[i] = f

    best = int(np.argmin(fits) if cfg.target == "minimize" else np.argmax(fits))
    return SwarmState(
        cfg=cfg, fitness=fitness,
        positions=positions, velocities=velocities,
        pbest_pos=positions.copy(), pbest_fit=fits.copy(),
        gbest_pos=positions[best].copy(), gbest_fit=float(fits[best]),
        history=[float(fits[best])], iteration=0, rngs=rngs,
    )


def step(state: SwarmState) -> SwarmState:
    """One synchronous iteration: move every particle, then refresh bests.

    A particle whose new position evaluates to NaN is frozen for the
    iteration (position and velocity revert) and the event is logged.
    """
    cfg = state.cfg
    b = np.asarray(cfg.bounds, dtype=np.float64)
    lo, hi = b[:, 0], b[:, 1]
    vcap = cfg.velocity_cap()
    state.iteration += 1

    for i in range(cfg.n_particles):
        rng = state.rngs[i]
        r1 = rng.random(cfg.n_dims)
        r2 = rng.random(cfg.n_dims)
        v = velocity_update(
            cfg.w, cfg.c1, cfg.c2,
            state.positions[i], state.velocities[i],
            state.pbest_pos[i], state.gbest_pos, r1, r2,
        )
        v = np.clip(v, -vcap, vcap)
        x = state.positions[i] + v
        below, above = x < lo, x > hi
        x = np.where(below, lo, np.where(above, hi, x))
        v = np.where(below | above, 0.0, v)

        f = float(state.fitness(x))
        if math.isnan(f):
            state.frozen_events.append((state.iteration, i))
            continue
        state.positions[i] = x
        state.velocities[i] = v
        if _better(cfg, f, float(state.pbest_fit[i])):
            state.pbest_fit[i] = f
            state.pbest_pos[i] = x.copy()

    best = int(np.argmin(state.pbest_fit) if cfg.target == "minimize" else np.argmax(state.pbest_fit))
    if _better(cfg, float(state.pbest_fit[best]), state.gbest_fit):
        state.gbest_fit = float(state.pbest_fit[best])
        state.gbest_pos = state.pbest_pos[best].copy()
    state.history.append(state.gbest_fit)
    return state


def optimize(
    cfg: SwarmConfig,
    fitness: FitnessFn,
    x0: Optional[Sequence[np.ndarray]] = None,
    on_iteration: Optional[Callable[[int, float], None]] = None,
) -> SwarmResult:
    """Run max_iters steps (optional early stop on stagnant gbest)."""
    state = init_swarm(cfg, fitness, x0=x0)
    stagnant = 0
    for k in range(cfg.max_iters):
        prev = state.gbest_fit
        step(state)
        if on_iteration is not None:
            on_iteration(k + 1, state.gbest_fit)
        if cfg.early_stop:
            stagnant = stagnant + 1 if abs(prev - state.gbest_fit) < cfg.early_stop_tol else 0
            if stagnant >= cfg.early_stop_window:
                break
    return SwarmResult(
        gbest_pos=state.gbest_pos.copy(),
        gbest_fit=state.gbest_fit,
        history=list(state.history),
        iterations_run=state.iteration,
        frozen_events=list(state.frozen_events),
    )


def write_history_csv(result: SwarmResult, path: Path | str) -> None:
    """Convergence history as (iteration, gbest_fit); iteration 0 is the
    post-initialization best."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("# schema_version=1\n")
        w = csv.writer(f)
        w.writerow(["iteration", "gbest_fit"])
        for i, fit in enumerate(result.history):
            w.writerow([i, repr(float(fit))])
