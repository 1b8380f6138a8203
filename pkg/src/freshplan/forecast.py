"""Attention-enhanced LSTM forecaster, implemented directly in numpy.

One LSTM layer consumes a window of daily feature rows; an additive
attention head scores every hidden state, softmax-normalizes the scores
and pools the states into a context vector; a linear readout maps the
context to next-day (volume, price, spoilage), all in normalized units.

Gate equations, with z_t = [h_{t-1}, x_t] (hidden state first):

    f_t = sigmoid(W_f z_t + b_f)        forget
    i_t = sigmoid(W_i z_t + b_i)        input
    g_t = tanh(W_c z_t + b_c)           candidate
    c_t = f_t * c_{t-1} + i_t * g_t
    o_t = sigmoid(W_o z_t + b_o)        output
    h_t = o_t * tanh(c_t)

Attention:  s_t = w_a . h_t + b_a,  alpha = softmax(s),  v = sum alpha_t h_t.
Readout:    y = W_y v + b_y.

Training is full-batch gradient descent on mean squared error, with
analytic backpropagation through the attention softmax and the unrolled
recurrence. Weights start at U(-0.5, 0.5) / sqrt(input_dim + hidden_dim).
"""

from __future__ import annotations

import csv
import datetime
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .data import Dataset, FeatureScaling, WindowedSeries, CORE_FEATURES
from .errors import ConfigError, DivergenceError, ShapeError

OUTPUT_DIM = len(CORE_FEATURES)

_one_day = datetime.timedelta(days=1)

# Field order doubles as the seeded-initialization draw order.
PARAM_FIELDS = ("W_f", "W_i", "W_c", "W_o", "b_f", "b_i", "b_c", "b_o",
                "w_a", "b_a", "W_y", "b_y")

WindowLike = Union[WindowedSeries, np.ndarray]


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign so neither branch exponentiates a large positive value.
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - np.max(x))
    return e / np.sum(e)


@dataclass
class LstmParams:
    W_f: np.ndarray
    W_i: np.ndarray
    W_c: np.ndarray
    W_o: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_c: np.ndarray
    b_o: np.ndarray
    w_a: np.ndarray  # (hidden,)
    b_a: np.ndarray  # (1,) so the scalar is finite-difference friendly
    W_y: np.ndarray  # (output, hidden)
    b_y: np.ndarray  # (output,)

    @property
    def hidden_dim(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_f.shape[1] - self.W_f.shape[0]

    @property
    def output_dim(self) -> int:
        return self.W_y.shape[0]

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, output_dim: int = OUTPUT_DIM,
             seed: int = 0) -> "LstmParams":
        if input_dim < 1 or hidden_dim < 1 or output_dim < 1:
            raise ConfigError("input_dim, hidden_dim and output_dim must be >= 1")
        rng = np.random.default_rng(seed)
        scale = 0.5 / math.sqrt(input_dim + hidden_dim)
        z = hidden_dim + input_dim
        shapes = {
            "W_f": (hidden_dim, z), "W_i": (hidden_dim, z),
            "W_c": (hidden_dim, z), "W_o": (hidden_dim, z),
            "b_f": (hidden_dim,), "b_i": (hidden_dim,),
            "b_c": (hidden_dim,), "b_o": (hidden_dim,),
            "w_a": (hidden_dim,), "b_a": (1,),
            "W_y": (output_dim, hidden_dim), "b_y": (output_dim,),
        }
        vals = {name: rng.uniform(-scale, scale, size=shapes[name]) for name in PARAM_FIELDS}
        return cls(**vals)

    def zeros_like(self) -> "LstmParams":
        return LstmParams(**{f.name: np.zeros_like(getattr(self, f.name)) for f in fields(self)})

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in PARAM_FIELDS]


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zero(cls, hidden_dim: int) -> "LstmState":
        return cls(h=np.zeros(hidden_dim), c=np.zeros(hidden_dim))


@dataclass
class GateActivations:
    z: np.ndarray       # concatenated [h_prev, x]
    f: np.ndarray
    i: np.ndarray
    g: np.ndarray       # candidate values
    o: np.ndarray
    tanh_c: np.ndarray


def lstm_step(p: LstmParams, x: np.ndarray,
              state: LstmState) -> tuple[LstmState, GateActivations]:
    """One gated update; returns the new state and every gate activation."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.input_dim,):
        raise ShapeError(f"expected input of shape ({p.input_dim},), got {x.shape}")
    if state.h.shape != (p.hidden_dim,) or state.c.shape != (p.hidden_dim,):
        raise ShapeError(f"state dims {state.h.shape}/{state.c.shape} do not match hidden_dim {p.hidden_dim}")
    z = np.concatenate([state.h, x])
    f = sigmoid(p.W_f @ z + p.b_f)
    i = sigmoid(p.W_i @ z + p.b_i)
    g = np.tanh(p.W_c @ z + p.b_c)
    c = f * state.c + i * g
    o = sigmoid(p.W_o @ z + p.b_o)
    tc = np.tanh(c)
    return LstmState(h=o * tc, c=c), GateActivations(z=z, f=f, i=i, g=g, o=o, tanh_c=tc)


def attention_pool(hidden_seq: np.ndarray, w_a: np.ndarray,
                   b_a: float) -> tuple[np.ndarray, np.ndarray]:
    """Pooled context and softmax weights for a (T, hidden) state stack."""
    hidden_seq = np.asarray(hidden_seq, dtype=np.float64)
    if hidden_seq.ndim != 2 or hidden_seq.shape[0] < 1:
        raise ShapeError(f"expected a nonempty (T, hidden) stack, got {hidden_seq.shape}")
    weights = softmax(hidden_seq @ w_a + b_a)
    return weights @ hidden_seq, weights


@dataclass
class ForwardTrace:
    """Everything the backward pass needs, for one window."""
    xs: np.ndarray        # (T, input_dim)
    zs: np.ndarray        # (T, hidden+input)
    f: np.ndarray         # (T, hidden)
    i: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray
    alphas: np.ndarray    # (T,)
    context: np.ndarray   # (hidden,)
    pred: np.ndarray      # (output,)


def _window_inputs(window: WindowLike) -> np.ndarray:
    return window.inputs if isinstance(window, WindowedSeries) else np.asarray(window, dtype=np.float64)


def forward_trace(p: LstmParams, window: WindowLike) -> ForwardTrace:
    inputs = _window_inputs(window)
    if inputs.ndim != 2 or inputs.shape[1] != p.input_dim:
        raise ShapeError(f"expected inputs of shape (T, {p.input_dim}), got {inputs.shape}")
    T, H = inputs.shape[0], p.hidden_dim
    zs = np.empty((T, H + p.input_dim))
    f = np.empty((T, H)); i = np.empty((T, H)); g = np.empty((T, H))
    o = np.empty((T, H)); c = np.empty((T, H)); tc = np.empty((T, H))
    hs = np.empty((T, H))
    state = LstmState.zero(H)
    for t in range(T):
        state, gates = lstm_step(p, inputs[t], state)
        zs[t] = gates.z; f[t] = gates.f; i[t] = gates.i; g[t] = gates.g
        o[t] = gates.o; c[t] = state.c; tc[t] = gates.tanh_c
        hs[t] = state.h
    context, alphas = attention_pool(hs, p.w_a, float(p.b_a[0]))
    pred = p.W_y @ context + p.b_y
    return ForwardTrace(xs=inputs, zs=zs, f=f, i=i, g=g, o=o, c=c, tanh_c=tc,
                        h=hs, alphas=alphas, context=context, pred=pred)


def forward(p: LstmParams, window: WindowLike) -> np.ndarray:
    """Window in, next-step prediction out (normalized units)."""
    return forward_trace(p, window).pred


def _backward_trace(p: LstmParams, trace: ForwardTrace, d_pred: np.ndarray) -> LstmParams:
    """Gradients of a scalar loss wrt every parameter, given dL/dpred."""
    T, H = trace.h.shape
    grads = p.zeros_like()

    grads.W_y += np.outer(d_pred, trace.context)
    grads.b_y += d_pred
    dv = p.W_y.T @ d_pred

    # Through the softmax: ds = alpha * (dalpha - sum_u alpha_u dalpha_u).
    dalpha = trace.h @ dv
    ds = trace.alphas * (dalpha - float(trace.alphas @ dalpha))
    grads.w_a += ds @ trace.h
    grads.b_a += np.array([np.sum(ds)])
    dh_attn = np.outer(trace.alphas, dv) + np.outer(ds, p.w_a)

    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        dh = dh_attn[t] + dh_next
        do = dh * trace.tanh_c[t]
        dc = dc_next + dh * trace.o[t] * (1.0 - trace.tanh_c[t] ** 2)
        c_prev = trace.c[t - 1] if t > 0 else np.zeros(H)
        df = dc * c_prev
        di = dc * trace.g[t]
        dg = dc * trace.i[t]
        dc_next = dc * trace.f[t]

        da_f = df * trace.f[t] * (1.0 - trace.f[t])
        da_i = di * trace.i[t] * (1.0 - trace.i[t])
        da_g = dg * (1.0 - trace.g[t] ** 2)
        da_o = do * trace.o[t] * (1.0 - trace.o[t])

        z = trace.zs[t]
        grads.W_f += np.outer(da_f, z); grads.b_f += da_f
        grads.W_i += np.outer(da_i, z); grads.b_i += da_i
        grads.W_c += np.outer(da_g, z); grads.b_c += da_g
        grads.W_o += np.outer(da_o, z); grads.b_o += da_o

        dz = p.W_f.T @ da_f + p.W_i.T @ da_i + p.W_c.T @ da_g + p.W_o.T @ da_o
        dh_next = dz[:H]
    return grads


def backward(p: LstmParams, window: WindowLike, target: np.ndarray) -> LstmParams:
    """Exact gradients of the squared-error loss sum((pred - target)^2)."""
    trace = forward_trace(p, window)
    err = trace.pred - np.asarray(target, dtype=np.float64)
    return _backward_trace(p, trace, 2.0 * err)


def window_loss(p: LstmParams, window: WindowLike, target: np.ndarray) -> float:
    err = forward_trace(p, window).pred - np.asarray(target, dtype=np.float64)
    return float(err @ err)


def loss_and_grads(p: LstmParams, windows: Sequence[WindowedSeries]) -> tuple[float, LstmParams]:
    """Mean over windows of the per-window sum of squared errors."""
    if not windows:
        raise ConfigError("need at least one window")
    total = 0.0
    grads = p.zeros_like()
    for w in windows:
        trace = forward_trace(p, w.inputs)
        err = trace.pred - w.target
        total += float(err @ err)
        g = _backward_trace(p, trace, 2.0 * err)
        for acc, gi in zip(grads.arrays(), g.arrays()):
            acc += gi
    n = float(len(windows))
    for acc in grads.arrays():
        acc /= n
    return total / n, grads


def clip_gradients(grads: LstmParams, max_norm: float) -> float:
    """Scale all gradients in place so the global norm is at most max_norm."""
    norm = math.sqrt(sum(float(np.sum(a * a)) for a in grads.arrays()))
    if norm > max_norm > 0:
        scale = max_norm / norm
        for a in grads.arrays():
            a *= scale
    return norm


@dataclass(frozen=True)
class TrainConfig:
    hidden_dim: int = 16
    epochs: int = 200
    learning_rate: float = 0.3
    gradient_clip: Optional[float] = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.hidden_dim < 1:
            raise ConfigError(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        # zero is allowed: it makes training an exact no-op, handy for tests
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.gradient_clip is not None and self.gradient_clip <= 0:
            raise ConfigError(f"gradient_clip must be > 0 or None, got {self.gradient_clip}")


@dataclass
class TrainResult:
    params: LstmParams
    losses: list[float]  # one entry per epoch, measured before that epoch's update


def train(windows: Sequence[WindowedSeries], cfg: TrainConfig = TrainConfig()) -> TrainResult:
    if not windows:
        raise ConfigError("cannot train on an empty window list")
    input_dim = windows[0].inputs.shape[1]
    params = LstmParams.init(input_dim, cfg.hidden_dim, OUTPUT_DIM, seed=cfg.seed)
    losses: list[float] = []
    for epoch in range(cfg.epochs):
        loss, grads = loss_and_grads(params, windows)
        if not math.isfinite(loss):
            raise DivergenceError(epoch)
        losses.append(loss)
        if cfg.gradient_clip is not None:
            clip_gradients(grads, cfg.gradient_clip)
        for arr, g in zip(params.arrays(), grads.arrays()):
            arr -= cfg.learning_rate * g
    return TrainResult(params=params, losses=losses)


def write_loss_csv(losses: Sequence[float], path: Path | str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("# schema_version=1\n")
        w = csv.writer(f)
        w.writerow(["epoch", "loss"])
        for e, loss in enumerate(losses):
            w.writerow([e, repr(float(loss))])


# ---------------------------------------------------------------------------
# Evaluation and week-ahead forecasting
# ---------------------------------------------------------------------------


def metrics(pred: Sequence[float], actual: Sequence[float]) -> tuple[float, float, Optional[float]]:
    """(MAE, RMSE, R2). R2 is None when the actual series is constant,
    and is deliberately not clamped: a fit worse than the mean goes negative."""
    pred = np.asarray(pred, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if pred.shape != actual.shape:
        raise ShapeError(f"shape mismatch: {pred.shape} vs {actual.shape}")
    if pred.ndim != 1 or pred.size < 2:
        raise ShapeError(f"metrics need two 1-d series of length >= 2, got shape {pred.shape}")
    err = pred - actual
    mae = float(np.mean(np.abs(err)))
    rmse = math.sqrt(float(np.mean(err ** 2)))
    ss_tot = float(np.sum((actual - actual.mean()) ** 2))
    r2 = 1.0 - float(np.sum(err ** 2)) / ss_tot if ss_tot > 0 else None
    return mae, rmse, r2


def one_step_eval(p: LstmParams, windows: Sequence[WindowedSeries],
                  scaling: FeatureScaling) -> dict[str, dict[str, Optional[float]]]:
    """Denormalized one-step metrics per core variable over the given windows."""
    if len(windows) < 2:
        raise ConfigError("evaluation needs at least 2 windows")
    preds = np.stack([scaling.denormalize(forward(p, w.inputs)) for w in windows])
    actuals = np.stack([scaling.denormalize(w.target) for w in windows])
    out: dict[str, dict[str, Optional[float]]] = {}
    for j, name in enumerate(CORE_FEATURES):
        mae, rmse, r2 = metrics(preds[:, j], actuals[:, j])
        out[name] = {"mae": mae, "rmse": rmse, "r2": r2}
    return out


@dataclass
class ForecastBundle:
    category: str
    start_date: str          # ISO date of the first forecast day
    horizon: int
    volume: list[float]
    price: list[float]
    spoilage: list[float]
    attention: list[list[float]]  # per forecast step, one weight per window position
    n_clamped: int
    metrics: dict[str, dict[str, Optional[float]]]
    final_train_loss: float


def forecast_week(p: LstmParams, ds: Dataset, category: str, scaling: FeatureScaling,
                  window_len: int, metrics_by_var: dict[str, dict[str, Optional[float]]],
                  final_train_loss: float, horizon: int = 7,
                  include_day_of_week: bool = True) -> ForecastBundle:
    """Iterative multi-step forecast: each prediction is clamped to [0, 1]
    in normalized units and fed back as the next day's core features, then
    denormalized and clamped to physical ranges (volume >= 0, spoilage in
    [0, 1]) for emission. Clamp events are counted, never silent."""
    rows = ds.category_series(category)
    if len(rows) < window_len:
        raise ConfigError(f"need at least {window_len} observations, got {len(rows)}")
    days = [r.date for r in rows]
    core = np.array([[r.volume, r.unit_price, r.spoilage_rate] for r in rows[-window_len:]])
    norm = np.stack([scaling.normalize(row) for row in core])
    recent = days[-window_len:]

    def feature_row(core_row: np.ndarray, day: datetime.date) -> np.ndarray:
        if not include_day_of_week:
            return core_row
        dow = np.zeros(7)
        dow[day.weekday()] = 1.0
        return np.concatenate([core_row, dow])

    window = [feature_row(norm[k], recent[k]) for k in range(window_len)]

    volume: list[float] = []
    price: list[float] = []
    spoilage: list[float] = []
    attention: list[list[float]] = []
    n_clamped = 0
    last = days[-1]
    for s in range(horizon):
        trace = forward_trace(p, np.stack(window))
        attention.append([float(a) for a in trace.alphas])
        raw = trace.pred
        clipped = np.clip(raw, 0.0, 1.0)
        n_clamped += int(np.sum((raw < 0.0) | (raw > 1.0)))
        denorm = scaling.denormalize(clipped)
        vol = float(denorm[0])
        spl = float(denorm[2])
        if vol < 0.0:
            vol = 0.0
            n_clamped += 1
        if not 0.0 <= spl <= 1.0:
            spl = min(max(spl, 0.0), 1.0)
            n_clamped += 1
        volume.append(vol)
        price.append(float(denorm[1]))
        spoilage.append(spl)
        day = last + _one_day * (s + 1)
        window = window[1:] + [feature_row(clipped, day)]

    return ForecastBundle(
        category=category,
        start_date=(last + _one_day).isoformat(),
        horizon=horizon,
        volume=volume, price=price, spoilage=spoilage,
        attention=attention, n_clamped=n_clamped,
        metrics=metrics_by_var, final_train_loss=final_train_loss,
    )


def bundle_to_doc(b: ForecastBundle) -> dict:
    return {
        "schema_version": 1,
        "category": b.category,
        "start_date": b.start_date,
        "horizon": b.horizon,
        "days": [
            {"date": (datetime.date.fromisoformat(b.start_date) + _one_day * s).isoformat(),
             "volume": b.volume[s], "price": b.price[s], "spoilage": b.spoilage[s]}
            for s in range(b.horizon)
        ],
        "attention": b.attention,
        "n_clamped": b.n_clamped,
        "metrics": b.metrics,
        "final_train_loss": b.final_train_loss,
    }


def bundle_from_doc(doc: dict) -> ForecastBundle:
    days = doc["days"]
    return ForecastBundle(
        category=doc["category"],
        start_date=doc["start_date"],
        horizon=doc["horizon"],
        volume=[d["volume"] for d in days],
        price=[d["price"] for d in days],
        spoilage=[d["spoilage"] for d in days],
        attention=[list(a) for a in doc["attention"]],
        n_clamped=doc["n_clamped"],
        metrics=doc["metrics"],
        final_train_loss=doc["final_train_loss"],
    )
