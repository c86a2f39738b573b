import math

import numpy as np
import pytest

from flightdae.errors import ContractError, NumericError
from flightdae.nn import (
    AdamState,
    BiLstm,
    Dense,
    LstmLayer,
    adam_update,
    bilstm_forward,
    lstm_forward,
    lstm_step,
    merge_grads,
    mse_loss,
    sigmoid,
)

# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


def scalar_lstm(wx, wh, b, sequence):
    """Step-by-step scalar LSTM, plain Python floats (independent oracle)."""
    hid = wh.shape[0]
    in_dim = wx.shape[0]
    h = [0.0] * hid
    c = [0.0] * hid
    outputs = []
    for x in sequence:
        a = [
            b[j]
            + sum(x[k] * wx[k][j] for k in range(in_dim))
            + sum(h[k] * wh[k][j] for k in range(hid))
            for j in range(4 * hid)
        ]
        i = [1.0 / (1.0 + math.exp(-a[j])) for j in range(hid)]
        f = [1.0 / (1.0 + math.exp(-a[hid + j])) for j in range(hid)]
        o = [1.0 / (1.0 + math.exp(-a[2 * hid + j])) for j in range(hid)]
        g = [math.tanh(a[3 * hid + j]) for j in range(hid)]
        c = [f[j] * c[j] + i[j] * g[j] for j in range(hid)]
        h = [o[j] * math.tanh(c[j]) for j in range(hid)]
        outputs.append(list(h))
    return np.array(outputs)


def numerical_grad(loss_fn, param, eps=1e-5):
    """Central finite differences over every entry of `param` (in place)."""
    grad = np.zeros_like(param)
    it = np.nditer(param, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = param[idx]
        param[idx] = orig + eps
        f_plus = loss_fn()
        param[idx] = orig - eps
        f_minus = loss_fn()
        param[idx] = orig
        grad[idx] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def assert_grads_match(analytic, numeric, rtol=1e-4, floor=1e-8):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    rel = np.abs(analytic - numeric) / denom
    assert rel.max() < rtol, f"max relative gradient error {rel.max():.2e}"


# ---------------------------------------------------------------------------
# LSTM step and sequences
# ---------------------------------------------------------------------------


class TestLstmStep:
    def zero_params(self, d=2, h=2):
        return np.zeros((d, 4 * h)), np.zeros((h, 4 * h)), np.zeros(4 * h)

    def test_zero_params_zero_cell(self):
        wx, wh, b = self.zero_params()
        h, c = lstm_step(wx, wh, b, np.zeros((1, 2)), np.zeros((1, 2)), np.zeros((1, 2)))
        np.testing.assert_array_equal(h, 0.0)
        np.testing.assert_array_equal(c, 0.0)

    def test_zero_params_unit_cell(self):
        # every gate is sigmoid(0)=0.5 and the candidate tanh(0)=0, so
        # c = 0.5 * 1 and h = 0.5 * tanh(0.5)
        wx, wh, b = self.zero_params(d=1, h=1)
        h, c = lstm_step(wx, wh, b, np.zeros((1, 1)), np.zeros((1, 1)), np.ones((1, 1)))
        assert c[0, 0] == pytest.approx(0.5, abs=1e-15)
        assert h[0, 0] == pytest.approx(0.5 * math.tanh(0.5), abs=1e-15)

    def test_matches_scalar_oracle(self, rng):
        layer = LstmLayer(2, 3, rng)
        x = rng.standard_normal((1, 2))
        h, c = lstm_step(layer.wx, layer.wh, layer.b, x, np.zeros((1, 3)), np.zeros((1, 3)))
        want = scalar_lstm(layer.wx, layer.wh, layer.b, x)
        np.testing.assert_allclose(h[0], want[0], atol=1e-12)

    def test_nan_input_raises(self):
        wx, wh, b = self.zero_params()
        bad = np.array([[np.nan, 0.0]])
        with pytest.raises(NumericError):
            lstm_step(wx, wh, b, bad, np.zeros((1, 2)), np.zeros((1, 2)))


class TestLstmForward:
    def test_length_one_equals_single_step(self, rng):
        layer = LstmLayer(3, 4, rng)
        seq = rng.standard_normal((1, 3))
        h = lstm_forward(layer, seq)
        h1, _ = lstm_step(layer.wx, layer.wh, layer.b, seq, np.zeros((1, 4)), np.zeros((1, 4)))
        np.testing.assert_allclose(h[0], h1[0], atol=1e-14)

    def test_five_steps_match_scalar_oracle(self, rng):
        layer = LstmLayer(2, 3, rng)
        seq = rng.standard_normal((5, 2))
        got = lstm_forward(layer, seq)
        want = scalar_lstm(layer.wx, layer.wh, layer.b, seq)
        np.testing.assert_allclose(got, want, atol=1e-12)

    def test_hidden_states_bounded(self, rng):
        layer = LstmLayer(2, 8, rng)
        seq = rng.standard_normal((50, 2)) * 10.0
        h = lstm_forward(layer, seq)
        assert np.abs(h).max() <= 1.0

    def test_deterministic(self, rng):
        layer = LstmLayer(2, 4, rng)
        seq = rng.standard_normal((7, 2))
        np.testing.assert_array_equal(lstm_forward(layer, seq), lstm_forward(layer, seq))


class TestBiLstm:
    def test_palindrome_symmetry(self, rng):
        bi = BiLstm(2, 3, rng)
        bi.bwd = bi.fwd  # same parameters both directions
        half = rng.standard_normal((4, 2))
        seq = np.concatenate([half, half[::-1]], axis=0)  # palindrome
        out = bilstm_forward(bi, seq)
        fwd_states, bwd_states = out[:, :3], out[:, 3:]
        np.testing.assert_allclose(bwd_states, fwd_states[::-1], atol=1e-12)

    def test_concat_layout(self, rng):
        bi = BiLstm(2, 3, rng)
        seq = rng.standard_normal((5, 2))
        out = bilstm_forward(bi, seq)
        np.testing.assert_allclose(out[:, :3], lstm_forward(bi.fwd, seq), atol=1e-14)
        np.testing.assert_allclose(
            out[:, 3:], lstm_forward(bi.bwd, seq[::-1].copy())[::-1], atol=1e-14
        )


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------


class TestMseLoss:
    def test_equal_inputs(self, rng):
        x = rng.standard_normal((4, 5))
        loss, grad = mse_loss(x, x.copy())
        assert loss == 0.0
        np.testing.assert_array_equal(grad, 0.0)

    def test_constant_difference(self):
        x = np.zeros((3, 7))
        loss, _ = mse_loss(x, x + 0.5)
        assert loss == pytest.approx(0.25)

    def test_matches_direct_summation(self, rng):
        x = rng.standard_normal((6, 4))
        y = rng.standard_normal((6, 4))
        loss, grad = mse_loss(x, y)
        want = sum((y[i, j] - x[i, j]) ** 2 for i in range(6) for j in range(4)) / 24.0
        assert loss == pytest.approx(want, rel=1e-12)
        fd = numerical_grad(lambda: mse_loss(x, y)[0], y)
        assert_grads_match(grad, fd)

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            mse_loss(np.zeros((2, 2)), np.zeros((2, 3)))


# ---------------------------------------------------------------------------
# Gradient checks (central finite differences)
# ---------------------------------------------------------------------------


class TestGradients:
    def test_dense(self, rng):
        layer = Dense(3, 2, rng)
        x = rng.standard_normal((5, 3))
        target = rng.standard_normal((5, 2))

        def loss_fn():
            y, _ = layer.forward(x)
            return mse_loss(target, y)[0]

        y, cache = layer.forward(x)
        _, dy = mse_loss(target, y)
        _, grads = layer.backward(dy, cache)
        for name, param in layer.named_params().items():
            assert_grads_match(grads[name], numerical_grad(loss_fn, param))

    def test_lstm(self, rng):
        layer = LstmLayer(2, 4, rng)
        x = rng.standard_normal((3, 6, 2))
        target = rng.standard_normal((3, 6, 4))

        def loss_fn():
            h, _ = layer.forward(x)
            return mse_loss(target, h)[0]

        h, cache = layer.forward(x)
        _, dh = mse_loss(target, h)
        dx, grads = layer.backward(dh, cache)
        for name, param in layer.named_params().items():
            assert_grads_match(grads[name], numerical_grad(loss_fn, param))
        # input gradient too
        assert_grads_match(dx, numerical_grad(lambda: loss_fn(), x))

    def test_bilstm(self, rng):
        bi = BiLstm(2, 4, rng)
        x = rng.standard_normal((3, 6, 2))
        target = rng.standard_normal((3, 6, 8))

        def loss_fn():
            h, _ = bi.forward(x)
            return mse_loss(target, h)[0]

        h, cache = bi.forward(x)
        _, dh = mse_loss(target, h)
        dx, grads = bi.backward(dh, cache)
        for name, param in bi.named_params().items():
            assert_grads_match(grads[name], numerical_grad(loss_fn, param))
        assert_grads_match(dx, numerical_grad(loss_fn, x))

    def test_zero_upstream_gives_zero_grads(self, rng):
        layer = LstmLayer(2, 3, rng)
        x = rng.standard_normal((2, 4, 2))
        h, cache = layer.forward(x)
        dx, grads = layer.backward(np.zeros_like(h), cache)
        np.testing.assert_array_equal(dx, 0.0)
        for g in grads.values():
            np.testing.assert_array_equal(g, 0.0)

    def test_gradient_linearity_in_loss_scale(self, rng):
        layer = LstmLayer(2, 3, rng)
        x = rng.standard_normal((2, 4, 2))
        h, cache = layer.forward(x)
        dh = rng.standard_normal(h.shape)
        _, g1 = layer.backward(dh, cache)
        _, g2 = layer.backward(2.0 * dh, cache)
        for name in g1:
            np.testing.assert_allclose(g2[name], 2.0 * g1[name], rtol=1e-12)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


class TestAdam:
    def test_first_step_is_lr_times_sign(self, rng):
        params = {"w": rng.standard_normal(10)}
        before = params["w"].copy()
        grads = {"w": rng.standard_normal(10)}
        state = AdamState.for_params(params)
        adam_update(params, grads, state, lr=1e-3, eps=1e-12)
        delta = params["w"] - before
        np.testing.assert_allclose(delta, -1e-3 * np.sign(grads["w"]), atol=1e-9)

    def test_zero_gradient_keeps_params(self, rng):
        params = {"w": rng.standard_normal(5)}
        before = params["w"].copy()
        state = AdamState.for_params(params)
        adam_update(params, {"w": np.zeros(5)}, state)
        np.testing.assert_array_equal(params["w"], before)

    def test_missing_gradient_entry_skipped(self, rng):
        params = {"w": rng.standard_normal(5), "b": rng.standard_normal(3)}
        before_b = params["b"].copy()
        state = AdamState.for_params(params)
        adam_update(params, {"w": np.ones(5)}, state)
        np.testing.assert_array_equal(params["b"], before_b)

    def test_quadratic_descent(self):
        # minimize f(w) = (w - 3)^2 from w = 0
        params = {"w": np.array([0.0])}
        state = AdamState.for_params(params)
        losses = []
        for _ in range(100):
            g = 2.0 * (params["w"] - 3.0)
            losses.append(float((params["w"][0] - 3.0) ** 2))
            adam_update(params, {"w": g}, state, lr=0.05)
        assert losses[-1] < losses[10] < losses[0]
        assert all(b <= a + 1e-12 for a, b in zip(losses[10:], losses[11:]))

    def test_nonfinite_gradient_raises(self, rng):
        params = {"w": rng.standard_normal(3)}
        state = AdamState.for_params(params)
        with pytest.raises(NumericError):
            adam_update(params, {"w": np.array([1.0, np.inf, 0.0])}, state)


class TestHelpers:
    def test_sigmoid_extremes(self):
        x = np.array([-1000.0, 0.0, 1000.0])
        np.testing.assert_allclose(sigmoid(x), [0.0, 0.5, 1.0], atol=1e-15)

    def test_merge_grads_sums(self):
        total = {}
        merge_grads(total, {"a": np.ones(3)})
        merge_grads(total, {"a": np.ones(3), "b": np.full(2, 5.0)})
        np.testing.assert_array_equal(total["a"], 2.0)
        np.testing.assert_array_equal(total["b"], 5.0)

    def test_seeded_init_reproducible(self):
        a = LstmLayer(3, 4, np.random.default_rng(7))
        b = LstmLayer(3, 4, np.random.default_rng(7))
        np.testing.assert_array_equal(a.wx, b.wx)
        np.testing.assert_array_equal(a.wh, b.wh)

    def test_forget_gate_bias_is_one(self, rng):
        layer = LstmLayer(3, 4, rng)
        np.testing.assert_array_equal(layer.b[4:8], 1.0)
        assert layer.b[:4].max() == 0.0 and layer.b[8:].max() == 0.0
