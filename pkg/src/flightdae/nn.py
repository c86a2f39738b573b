"""Minimal recurrent neural-network core (numpy only).

Layers keep their parameters as numpy arrays and expose

    forward(x)            -> (output, cache)
    backward(dout, cache) -> (dinput, {param name: gradient})
    named_params()        -> {param name: array reference}

Gradients are hand-derived (exact backpropagation through time over the
full window, no truncation) and verified against central finite differences
in the test suite. float64 is the default; float32 can be selected for
faster production training.

Gate layout inside the fused LSTM weight matrices is [input, forget,
output, candidate] along the last axis, so the three sigmoid gates form one
contiguous block and the whole step needs a single tanh evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, NumericError


def _check_finite(name: str, *arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.isfinite(a).all():
            raise NumericError(f"non-finite values in {name}")


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Logistic sigmoid via tanh: stable for any input magnitude."""
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                   shape: tuple[int, ...], dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Dense:
    """Affine layer y = x @ w + b, applied to the last axis."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 dtype=np.float64):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.w = glorot_uniform(rng, in_dim, out_dim, (in_dim, out_dim), dtype)
        self.b = np.zeros(out_dim, dtype=dtype)

    def forward(self, x: np.ndarray):
        return x @ self.w + self.b, (x,)

    def backward(self, dout: np.ndarray, cache):
        (x,) = cache
        x2 = x.reshape(-1, self.in_dim)
        d2 = dout.reshape(-1, self.out_dim)
        dx = (d2 @ self.w.T).reshape(x.shape)
        return dx, {"w": x2.T @ d2, "b": d2.sum(axis=0)}

    def named_params(self) -> dict[str, np.ndarray]:
        return {"w": self.w, "b": self.b}


def lstm_step(wx: np.ndarray, wh: np.ndarray, b: np.ndarray,
              x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray):
    """One LSTM recurrence; returns (h, c).

    Standard gating: i, f, o = sigmoid(affine); candidate g = tanh(affine);
    c = f*c_prev + i*g; h = o*tanh(c).

    Raises:
        NumericError: non-finite inputs or outputs.
    """
    _check_finite("lstm_step inputs", x_t, h_prev, c_prev)
    hidden = wh.shape[0]
    a = x_t @ wx + h_prev @ wh + b
    i = sigmoid(a[..., :hidden])
    f = sigmoid(a[..., hidden:2 * hidden])
    o = sigmoid(a[..., 2 * hidden:3 * hidden])
    g = np.tanh(a[..., 3 * hidden:])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    _check_finite("lstm_step outputs", h, c)
    return h, c


class LstmLayer:
    """Single LSTM layer unrolled over time; input (N, T, D) -> (N, T, H)."""

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator,
                 dtype=np.float64):
        self.in_dim = in_dim
        self.hidden = hidden
        self.wx = glorot_uniform(rng, in_dim, hidden, (in_dim, 4 * hidden), dtype)
        # Plain scaled-uniform recurrent init; forget-gate bias +1 keeps
        # early memory flowing.
        self.wh = rng.uniform(-1.0, 1.0, size=(hidden, 4 * hidden)).astype(dtype) / np.sqrt(hidden)
        self.b = np.zeros(4 * hidden, dtype=dtype)
        self.b[hidden:2 * hidden] = 1.0

    def forward(self, x: np.ndarray):
        _check_finite("lstm input", x)
        n, t, _ = x.shape
        hid = self.hidden
        dtype = x.dtype
        gates_x = x @ self.wx + self.b  # (N, T, 4H), one big GEMM
        h = np.zeros((n, t, hid), dtype=dtype)
        gate_s = np.empty((n, t, 4 * hid), dtype=dtype)  # i, f, o sigmoids + g tanh
        tanh_c = np.empty((n, t, hid), dtype=dtype)
        c_prev_s = np.empty((n, t, hid), dtype=dtype)
        h_t = np.zeros((n, hid), dtype=dtype)
        c_t = np.zeros((n, hid), dtype=dtype)
        for step in range(t):
            a = gates_x[:, step] + h_t @ self.wh
            # one fused tanh: sigmoid(z) = 0.5*(1 + tanh(z/2)) on the i/f/o block
            a[:, :3 * hid] *= 0.5
            np.tanh(a, out=a)
            a[:, :3 * hid] *= 0.5
            a[:, :3 * hid] += 0.5
            i = a[:, :hid]
            f = a[:, hid:2 * hid]
            g = a[:, 3 * hid:]
            c_prev_s[:, step] = c_t
            c_t = f * c_t + i * g
            tc = np.tanh(c_t)
            h_t = a[:, 2 * hid:3 * hid] * tc
            gate_s[:, step] = a
            tanh_c[:, step] = tc
            h[:, step] = h_t
        _check_finite("lstm output", h)
        cache = (x, h, gate_s, tanh_c, c_prev_s)
        return h, cache

    def backward(self, dh_out: np.ndarray, cache):
        """BPTT. dh_out is the upstream gradient for every hidden state."""
        x, h, gate_s, tanh_c, c_prev_s = cache
        n, t, hid = dh_out.shape
        dgates = np.empty((n, t, 4 * hid), dtype=x.dtype)
        dh_rec = np.zeros((n, hid), dtype=x.dtype)
        dc_next = np.zeros((n, hid), dtype=x.dtype)
        for step in range(t - 1, -1, -1):
            gates = gate_s[:, step]
            i = gates[:, :hid]
            f = gates[:, hid:2 * hid]
            o = gates[:, 2 * hid:3 * hid]
            g = gates[:, 3 * hid:]
            tc = tanh_c[:, step]
            dh_t = dh_out[:, step] + dh_rec
            dc = dc_next + dh_t * o * (1.0 - tc * tc)
            dgates[:, step, :hid] = dc * g * i * (1.0 - i)
            dgates[:, step, hid:2 * hid] = dc * c_prev_s[:, step] * f * (1.0 - f)
            dgates[:, step, 2 * hid:3 * hid] = dh_t * tc * o * (1.0 - o)
            dgates[:, step, 3 * hid:] = dc * i * (1.0 - g * g)
            dh_rec = dgates[:, step] @ self.wh.T
            dc_next = dc * f
        dg_flat = dgates.reshape(n * t, 4 * hid)
        x_flat = x.reshape(n * t, self.in_dim)
        # h_prev per step: zeros then h[:, :-1]
        h_prev_flat = np.concatenate(
            [np.zeros((n, 1, hid), dtype=x.dtype), h[:, :-1]], axis=1
        ).reshape(n * t, hid)
        dx = (dg_flat @ self.wx.T).reshape(x.shape)
        grads = {
            "wx": x_flat.T @ dg_flat,
            "wh": h_prev_flat.T @ dg_flat,
            "b": dg_flat.sum(axis=0),
        }
        return dx, grads

    def named_params(self) -> dict[str, np.ndarray]:
        return {"wx": self.wx, "wh": self.wh, "b": self.b}


class BiLstm:
    """Bidirectional wrapper: concatenates forward- and backward-time states.

    Output feature order is [forward H | backward H] per step; the backward
    pass runs over the time-reversed sequence and is reversed back, so step
    t sees both the close past and the close future.
    """

    def __init__(self, in_dim: int, hidden: int, rng: np.random.Generator,
                 dtype=np.float64):
        self.hidden = hidden
        self.fwd = LstmLayer(in_dim, hidden, rng, dtype)
        self.bwd = LstmLayer(in_dim, hidden, rng, dtype)

    def forward(self, x: np.ndarray):
        h_f, cache_f = self.fwd.forward(x)
        x_rev = np.ascontiguousarray(x[:, ::-1])
        h_b_rev, cache_b = self.bwd.forward(x_rev)
        h_b = h_b_rev[:, ::-1]
        return np.concatenate([h_f, h_b], axis=2), (cache_f, cache_b)

    def backward(self, dout: np.ndarray, cache):
        cache_f, cache_b = cache
        hid = self.hidden
        dx_f, grads_f = self.fwd.backward(np.ascontiguousarray(dout[..., :hid]), cache_f)
        dx_b_rev, grads_b = self.bwd.backward(
            np.ascontiguousarray(dout[:, ::-1, hid:]), cache_b
        )
        dx = dx_f + dx_b_rev[:, ::-1]
        grads = {f"fwd.{k}": v for k, v in grads_f.items()}
        grads.update({f"bwd.{k}": v for k, v in grads_b.items()})
        return dx, grads

    def named_params(self) -> dict[str, np.ndarray]:
        params = {f"fwd.{k}": v for k, v in self.fwd.named_params().items()}
        params.update({f"bwd.{k}": v for k, v in self.bwd.named_params().items()})
        return params


def lstm_forward(layer: LstmLayer, sequence: np.ndarray) -> np.ndarray:
    """Hidden states (T, H) for a single unbatched sequence (T, D)."""
    h, _ = layer.forward(sequence[None])
    return h[0]


def bilstm_forward(bi: BiLstm, sequence: np.ndarray) -> np.ndarray:
    """Hidden states (T, 2H) for a single unbatched sequence (T, D)."""
    h, _ = bi.forward(sequence[None])
    return h[0]


def mse_loss(x: np.ndarray, x_hat: np.ndarray):
    """Mean squared error over all elements, and its gradient wrt x_hat.

    Raises:
        ContractError: shape mismatch.
    """
    if x.shape != x_hat.shape:
        raise ContractError(f"mse shapes differ: {x.shape} vs {x_hat.shape}")
    diff = x_hat - x
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment estimates per parameter plus the step counter."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            step=0,
        )


def adam_update(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One Adam step with bias correction. Updates params/state in place.

    Parameters without a gradient entry are left untouched (e.g. decoders
    whose mini-batch was empty).

    Raises:
        NumericError: a gradient is non-finite.
    """
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    for key, g in grads.items():
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for {key}")
        p = params[key]
        m = state.m[key]
        v = state.v[key]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def merge_grads(total: dict[str, np.ndarray], part: dict[str, np.ndarray]) -> None:
    """Accumulate `part` into `total` (sum reduction), in place."""
    for key, g in part.items():
        if key in total:
            total[key] += g
        else:
            total[key] = g.copy()
