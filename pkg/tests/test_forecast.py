"""Recurrent forecaster tests: gates, attention, gradients, training."""

import math

import numpy as np
import pytest

from freshplan import data
from freshplan import forecast as fc
from freshplan.errors import ConfigError, DivergenceError, ShapeError


def _zero_params(input_dim=2, hidden_dim=3, output_dim=3):
    p = fc.LstmParams.init(input_dim, hidden_dim, output_dim, seed=0)
    return p.zeros_like()


def _sigma(x):
    return 1.0 / (1.0 + math.exp(-x))


class TestLstmStep:
    def test_zero_params_gate_values(self):
        p = _zero_params()
        state, gates = fc.lstm_step(p, np.zeros(2), fc.LstmState.zero(3))
        np.testing.assert_allclose(gates.f, 0.5)
        np.testing.assert_allclose(gates.i, 0.5)
        np.testing.assert_allclose(gates.o, 0.5)
        np.testing.assert_allclose(gates.g, 0.0)
        np.testing.assert_allclose(state.h, 0.0)
        np.testing.assert_allclose(state.c, 0.0)

    def test_cell_state_update_rule(self):
        # c' = f*c + i*g must hold against the returned gates
        rng = np.random.default_rng(1)
        for _ in range(50):
            p = fc.LstmParams.init(2, 3, seed=int(rng.integers(0, 10**6)))
            prev = fc.LstmState(h=rng.normal(size=3), c=rng.normal(size=3))
            x = rng.normal(size=2)
            state, gates = fc.lstm_step(p, x, prev)
            np.testing.assert_allclose(state.c, gates.f * prev.c + gates.i * gates.g,
                                       atol=1e-12)
            np.testing.assert_allclose(state.h, gates.o * np.tanh(state.c), atol=1e-12)

    def test_gates_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            p = fc.LstmParams.init(2, 2, seed=int(rng.integers(0, 10**6)))
            state, gates = fc.lstm_step(p, rng.normal(size=2),
                                        fc.LstmState(h=rng.normal(size=2), c=rng.normal(size=2)))
            for g in (gates.f, gates.i, gates.o):
                assert np.all(g > 0) and np.all(g < 1)

    def test_shape_errors(self):
        p = fc.LstmParams.init(2, 3, seed=0)
        with pytest.raises(ShapeError):
            fc.lstm_step(p, np.zeros(5), fc.LstmState.zero(3))
        with pytest.raises(ShapeError):
            fc.lstm_step(p, np.zeros(2), fc.LstmState.zero(4))


class TestAttentionPool:
    def test_identical_states_uniform_weights(self):
        h = np.tile([0.3, -0.2], (5, 1))
        _, w = fc.attention_pool(h, np.array([1.0, 2.0]), 0.5)
        np.testing.assert_allclose(w, 0.2, atol=1e-12)

    def test_single_step_identity(self):
        h = np.array([[0.7, -0.1]])
        ctx, w = fc.attention_pool(h, np.array([0.4, 0.6]), 0.0)
        np.testing.assert_allclose(w, [1.0])
        np.testing.assert_allclose(ctx, h[0])

    def test_hand_softmax_quarter_three_quarters(self):
        # scores ln 1 and ln 3 -> weights 1/4 and 3/4
        h = np.array([[0.0], [math.log(3.0)]])
        ctx, w = fc.attention_pool(h, np.array([1.0]), 0.0)
        np.testing.assert_allclose(w, [0.25, 0.75], atol=1e-12)
        np.testing.assert_allclose(ctx, [0.75 * math.log(3.0)], atol=1e-12)

    def test_weights_sum_to_one(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            T, H = int(rng.integers(1, 9)), int(rng.integers(1, 5))
            h = rng.normal(size=(T, H)) * 10
            _, w = fc.attention_pool(h, rng.normal(size=H), float(rng.normal()))
            assert abs(float(np.sum(w)) - 1.0) <= 1e-9
            assert np.all(w > 0)

    def test_large_scores_stable(self):
        h = np.array([[1000.0], [999.0]])
        _, w = fc.attention_pool(h, np.array([1.0]), 0.0)
        assert np.all(np.isfinite(w))
        assert w[0] > w[1]

    def test_empty_rejected(self):
        with pytest.raises(ShapeError):
            fc.attention_pool(np.zeros((0, 3)), np.zeros(3), 0.0)


class TestForward:
    def test_zero_params_predict_bias(self):
        p = _zero_params(input_dim=4, hidden_dim=2)
        p.b_y[:] = [1.5, -2.0, 0.25]
        pred = fc.forward(p, np.zeros((6, 4)))
        np.testing.assert_allclose(pred, [1.5, -2.0, 0.25], atol=1e-12)

    def test_length_one_window_is_head_of_h1(self):
        p = fc.LstmParams.init(3, 4, seed=7)
        x = np.array([[0.2, -0.5, 0.9]])
        state, _ = fc.lstm_step(p, x[0], fc.LstmState.zero(4))
        np.testing.assert_allclose(fc.forward(p, x), p.W_y @ state.h + p.b_y, atol=1e-12)

    def test_hand_scalar_trace(self):
        # 1-dim network, window of 2, worked end to end with scalar arithmetic
        p = fc.LstmParams(
            W_f=np.array([[0.1, 0.2]]), W_i=np.array([[-0.3, 0.4]]),
            W_c=np.array([[0.5, -0.2]]), W_o=np.array([[0.3, 0.1]]),
            b_f=np.array([0.05]), b_i=np.array([-0.1]),
            b_c=np.array([0.2]), b_o=np.array([0.0]),
            w_a=np.array([0.7]), b_a=np.array([0.1]),
            W_y=np.array([[1.2]]), b_y=np.array([-0.3]),
        )
        x1, x2 = 0.6, -0.4
        f1 = _sigma(0.2 * x1 + 0.05)
        i1 = _sigma(0.4 * x1 - 0.1)
        g1 = math.tanh(-0.2 * x1 + 0.2)
        c1 = i1 * g1
        o1 = _sigma(0.1 * x1)
        h1 = o1 * math.tanh(c1)
        f2 = _sigma(0.1 * h1 + 0.2 * x2 + 0.05)
        i2 = _sigma(-0.3 * h1 + 0.4 * x2 - 0.1)
        g2 = math.tanh(0.5 * h1 - 0.2 * x2 + 0.2)
        c2 = f2 * c1 + i2 * g2
        o2 = _sigma(0.3 * h1 + 0.1 * x2)
        h2 = o2 * math.tanh(c2)
        s1, s2 = 0.7 * h1 + 0.1, 0.7 * h2 + 0.1
        e1, e2 = math.exp(s1 - max(s1, s2)), math.exp(s2 - max(s1, s2))
        a1, a2 = e1 / (e1 + e2), e2 / (e1 + e2)
        expected = 1.2 * (a1 * h1 + a2 * h2) - 0.3
        pred = fc.forward(p, np.array([[x1], [x2]]))
        assert pred[0] == pytest.approx(expected, abs=1e-12)


class TestBackward:
    def test_matches_finite_differences_small_case(self):
        rng = np.random.default_rng(11)
        p = fc.LstmParams.init(3, 4, seed=5)
        window = rng.normal(size=(5, 3))
        target = rng.normal(size=3)
        grads = fc.backward(p, window, target)
        eps = 1e-5
        for name in fc.PARAM_FIELDS:
            arr, ga = getattr(p, name), getattr(grads, name)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                keep = arr[idx]
                arr[idx] = keep + eps
                up = fc.window_loss(p, window, target)
                arr[idx] = keep - eps
                dn = fc.window_loss(p, window, target)
                arr[idx] = keep
                num = (up - dn) / (2 * eps)
                rel = abs(ga[idx] - num) / (abs(ga[idx]) + abs(num) + 1e-4)
                assert rel <= 1e-4, f"{name}[{idx}]: {ga[idx]} vs {num}"

    def test_zero_residual_zero_gradients(self):
        p = _zero_params(input_dim=2, hidden_dim=3)
        # prediction is exactly b_y = 0, so target 0 gives zero loss
        grads = fc.backward(p, np.zeros((4, 2)), np.zeros(3))
        for a in grads.arrays():
            assert np.max(np.abs(a)) <= 1e-10

    def test_duplicated_window_leaves_batch_gradient_unchanged(self):
        rng = np.random.default_rng(13)
        ds = data.synthesize(n_categories=1, n_days=16, seed=1)
        train, _ = data.make_windows(ds, "cat01", window_len=7, split_frac=0.75)
        w = train[0]
        p = fc.LstmParams.init(w.inputs.shape[1], 4, seed=3)
        l1, g1 = fc.loss_and_grads(p, [w])
        l2, g2 = fc.loss_and_grads(p, [w, w])
        assert l1 == pytest.approx(l2, abs=1e-12)
        for a, b in zip(g1.arrays(), g2.arrays()):
            np.testing.assert_allclose(a, b, atol=1e-12)


class TestTrain:
    def _constant_windows(self, n=8, L=5):
        rng = np.random.default_rng(4)
        return [(rng.normal(size=(L, 2)), np.full(3, 0.4)) for _ in range(n)]

    def test_constant_target_fits_under_1e3(self):
        ds = data.Dataset.from_records(
            [data.SalesRecord(date=__import__("datetime").date(2023, 7, 1)
                              + __import__("datetime").timedelta(days=d),
                              category="cat01", unit_price=5.0, volume=5.0,
                              wholesale_cost=3.0, spoilage_rate=0.5)
             for d in range(20)])
        train, _ = data.make_windows(ds, "cat01", window_len=7, split_frac=0.5,
                                     include_day_of_week=False)
        res = fc.train(train, fc.TrainConfig(hidden_dim=4, epochs=500,
                                             learning_rate=0.3, seed=0))
        final_mse = res.losses[-1] / 3  # per-output mean
        assert final_mse < 1e-3

    def test_same_seed_identical_params(self):
        ds = data.synthesize(n_categories=1, n_days=20, seed=6)
        train, _ = data.make_windows(ds, "cat01", window_len=7, split_frac=0.75)
        cfg = fc.TrainConfig(hidden_dim=4, epochs=10, learning_rate=0.1, seed=42)
        a, b = fc.train(train, cfg), fc.train(train, cfg)
        for x, y in zip(a.params.arrays(), b.params.arrays()):
            assert np.array_equal(x, y)
        assert a.losses == b.losses

    def test_zero_learning_rate_is_identity(self):
        ds = data.synthesize(n_categories=1, n_days=20, seed=6)
        train, _ = data.make_windows(ds, "cat01", window_len=7, split_frac=0.75)
        res = fc.train(train, fc.TrainConfig(hidden_dim=4, epochs=5,
                                             learning_rate=0.0, seed=9))
        init = fc.LstmParams.init(train[0].inputs.shape[1], 4, seed=9)
        for x, y in zip(res.params.arrays(), init.arrays()):
            assert np.array_equal(x, y)

    def test_loss_decreases_on_learnable_data(self):
        ds = data.synthesize(n_categories=1, n_days=30, seed=2)
        train, _ = data.make_windows(ds, "cat01", window_len=7, split_frac=0.75)
        res = fc.train(train, fc.TrainConfig(hidden_dim=8, epochs=50,
                                             learning_rate=0.3, seed=0))
        assert res.losses[-1] < res.losses[0]

    def test_divergence_names_epoch(self):
        ds = data.synthesize(n_categories=1, n_days=20, seed=3)
        train, _ = data.make_windows(ds, "cat01", window_len=7, split_frac=0.75)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(DivergenceError, match="epoch"):
                fc.train(train, fc.TrainConfig(hidden_dim=4, epochs=200,
                                               learning_rate=1e9, gradient_clip=None,
                                               seed=0))

    def test_gradient_clip_bounds_global_norm(self):
        rng = np.random.default_rng(8)
        p = fc.LstmParams.init(2, 3, seed=1)
        g = fc.backward(p, rng.normal(size=(4, 2)) * 50, rng.normal(size=3) * 50)
        fc.clip_gradients(g, 5.0)
        norm = math.sqrt(sum(float(np.sum(a * a)) for a in g.arrays()))
        assert norm <= 5.0 + 1e-9

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            fc.TrainConfig(epochs=0)
        with pytest.raises(ConfigError):
            fc.TrainConfig(learning_rate=-0.1)
        with pytest.raises(ConfigError):
            fc.TrainConfig(hidden_dim=0)
        with pytest.raises(ConfigError):
            fc.TrainConfig(gradient_clip=0.0)


class TestMetrics:
    def test_perfect_fit(self):
        assert fc.metrics([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == (0.0, 0.0, 1.0)

    def test_hand_values(self):
        mae, rmse, r2 = fc.metrics([2.0, 2.0], [0.0, 2.0])
        assert mae == pytest.approx(1.0, abs=1e-12)
        assert rmse == pytest.approx(math.sqrt(2.0), abs=1e-12)
        # SS_res = 4, SS_tot = 2: a fit worse than the mean goes negative
        assert r2 == pytest.approx(-1.0, abs=1e-12)

    def test_mean_prediction_gives_zero_r2(self):
        actual = [1.0, 3.0, 5.0, 7.0]
        pred = [4.0] * 4
        _, _, r2 = fc.metrics(pred, actual)
        assert r2 == pytest.approx(0.0, abs=1e-12)

    def test_constant_actual_r2_undefined(self):
        mae, rmse, r2 = fc.metrics([1.0, 2.0], [3.0, 3.0])
        assert r2 is None
        assert mae == pytest.approx(1.5)

    def test_errors(self):
        with pytest.raises(ShapeError):
            fc.metrics([1.0], [1.0])
        with pytest.raises(ShapeError):
            fc.metrics([1.0, 2.0], [1.0, 2.0, 3.0])


class TestForecastWeek:
    def _trained(self, days=40, epochs=60, seed=0):
        ds = data.synthesize(n_categories=1, n_days=days, seed=seed)
        train, test = data.make_windows(ds, "cat01", window_len=7, split_frac=0.75)
        res = fc.train(train, fc.TrainConfig(hidden_dim=8, epochs=epochs,
                                             learning_rate=0.3, seed=0))
        ev = fc.one_step_eval(res.params, test, test[0].scaling)
        return ds, res, ev, train[0].scaling

    def test_bundle_shape_and_attention(self):
        ds, res, ev, scaling = self._trained()
        b = fc.forecast_week(res.params, ds, "cat01", scaling, 7, ev,
                             res.losses[-1])
        assert b.horizon == 7
        assert len(b.volume) == len(b.price) == len(b.spoilage) == 7
        assert len(b.attention) == 7 and all(len(a) == 7 for a in b.attention)
        for a in b.attention:
            assert abs(sum(a) - 1.0) <= 1e-9
        assert all(v >= 0 for v in b.volume)
        assert all(0.0 <= s <= 1.0 for s in b.spoilage)
        assert b.start_date == (ds.span[1] + __import__("datetime").timedelta(days=1)).isoformat()

    def test_doc_round_trip(self):
        ds, res, ev, scaling = self._trained()
        b = fc.forecast_week(res.params, ds, "cat01", scaling, 7, ev, res.losses[-1])
        back = fc.bundle_from_doc(fc.bundle_to_doc(b))
        assert back == b

    def test_noise_free_series_is_learnable(self):
        prof = data.GeneratorProfile(noise=0.0)
        ds = data.synthesize(n_categories=1, n_days=60, seed=5, profile=prof)
        train, test = data.make_windows(ds, "cat01", window_len=7, split_frac=0.75)
        res = fc.train(train, fc.TrainConfig(hidden_dim=8, epochs=300,
                                             learning_rate=0.5, seed=0))
        ev = fc.one_step_eval(res.params, test, test[0].scaling)
        assert ev["volume"]["r2"] >= 0.9

    def test_insufficient_history_rejected(self):
        ds, res, ev, scaling = self._trained()
        with pytest.raises(ConfigError):
            fc.forecast_week(res.params, ds, "cat01", scaling, 100, ev, 0.0)

    def test_eval_needs_two_windows(self):
        ds, res, ev, scaling = self._trained()
        with pytest.raises(ConfigError):
            fc.one_step_eval(res.params, [], scaling)


class TestParamsInit:
    def test_draw_order_and_shapes(self):
        p = fc.LstmParams.init(3, 4, output_dim=3, seed=0)
        assert p.input_dim == 3 and p.hidden_dim == 4 and p.output_dim == 3
        assert p.W_f.shape == (4, 7) and p.b_f.shape == (4,)
        assert p.w_a.shape == (4,) and p.b_a.shape == (1,)
        assert p.W_y.shape == (3, 4) and p.b_y.shape == (3,)

    def test_init_scale_bound(self):
        p = fc.LstmParams.init(3, 4, seed=1)
        bound = 0.5 / math.sqrt(3 + 4)
        for a in p.arrays():
            assert np.max(np.abs(a)) <= bound

    def test_same_seed_same_params(self):
        a = fc.LstmParams.init(2, 5, seed=3)
        b = fc.LstmParams.init(2, 5, seed=3)
        for x, y in zip(a.arrays(), b.arrays()):
            assert np.array_equal(x, y)


def test_loss_csv_format(tmp_path):
    p = tmp_path / "loss.csv"
    fc.write_loss_csv([1.5, 0.25], p)
    lines = p.read_text(encoding="utf-8").strip().splitlines()
    assert lines[0] == "# schema_version=1"
    assert lines[1] == "epoch,loss"
    assert lines[2] == "0,1.5"
