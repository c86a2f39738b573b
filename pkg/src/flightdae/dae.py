"""Multi-decoder recurrent auto-encoder with per-decoder thresholds.

One shared Bi-LSTM encoder compresses each window into a latent vector;
one decoder per discriminant value (flight phase) reconstructs it. Batches
are sorted into per-phase mini-batches, encoded and decoded, then restored
to their original order, so gradients from every decoder flow into the
shared encoder while each decoder specializes on its own phase.

A single-decoder configuration (``discriminate=False``) yields the plain
sequence-to-sequence auto-encoder used as a baseline; it shares all of the
training, calibration and detection machinery below.

Anomaly score: mean squared reconstruction error of the standardized window
(higher = more anomalous), thresholded at tau = mean + 3*std of the training
scores routed to the same decoder. The alternate ``eq1`` variant scores
1 - MSE instead; it is kept only for comparison, with the same strict
``score > tau`` verdict rule, and inverts the meaning of the threshold.
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import (
    NUM_FEATURES,
    FeatureWindow,
    Standardizer,
    apply_standardizer,
    fit_standardizer,
    restore_order,
    sort_into_minibatches,
)
from .errors import CalibrationError, ContractError, TrainingDivergedError
from .nn import AdamState, BiLstm, Dense, LstmLayer, adam_update, merge_grads, mse_loss
from .phase import PHASES, Phase

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
SINGLE_DECODER_KEY = "ALL"


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters."""

    window_len: int = 30
    n_features: int = NUM_FEATURES
    encoder_hidden: int = 32  # Bi-LSTM units per direction
    latent_dim: int = 10
    decoder_hidden: int = 32
    discriminate: bool = True  # one decoder per phase vs a single decoder
    score_variant: str = "mse"  # "mse" | "eq1"
    dtype: str = "float64"

    def np_dtype(self):
        return np.dtype(self.dtype)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters."""

    epochs: int = 50
    batch_size: int = 256
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 5  # epochs without val improvement before stopping
    val_fraction: float = 0.1  # used only when no val windows are provided
    seed: int = 0


@dataclass
class TrainResult:
    train_losses: list[float]
    val_losses: list[float]
    best_epoch: int
    epochs_run: int


@dataclass(frozen=True)
class AnomalyVerdict:
    """Per-window detection outcome; flagged <=> score > threshold."""

    flight_id: str
    start_timestamp: float
    phase: Phase
    score: float
    threshold_used: float
    flagged: bool


class Encoder:
    """Bi-LSTM over the window, flattened time-major, projected to the latent."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        dtype = cfg.np_dtype()
        self.cfg = cfg
        self.rnn = BiLstm(cfg.n_features, cfg.encoder_hidden, rng, dtype)
        self.to_latent = Dense(cfg.window_len * 2 * cfg.encoder_hidden, cfg.latent_dim, rng, dtype)

    def forward(self, x: np.ndarray):
        h, rnn_cache = self.rnn.forward(x)
        flat = h.reshape(x.shape[0], -1)
        z, dense_cache = self.to_latent.forward(flat)
        return z, (rnn_cache, dense_cache, h.shape)

    def backward(self, dz: np.ndarray, cache):
        rnn_cache, dense_cache, h_shape = cache
        dflat, dense_grads = self.to_latent.backward(dz, dense_cache)
        dx, rnn_grads = self.rnn.backward(dflat.reshape(h_shape), rnn_cache)
        grads = {f"rnn.{k}": v for k, v in rnn_grads.items()}
        grads.update({f"to_latent.{k}": v for k, v in dense_grads.items()})
        return dx, grads

    def named_params(self):
        params = {f"rnn.{k}": v for k, v in self.rnn.named_params().items()}
        params.update({f"to_latent.{k}": v for k, v in self.to_latent.named_params().items()})
        return params


class Decoder:
    """Expands the latent, repeats it across time, LSTM, per-step projection."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        dtype = cfg.np_dtype()
        self.cfg = cfg
        self.expand = Dense(cfg.latent_dim, cfg.decoder_hidden, rng, dtype)
        self.rnn = LstmLayer(cfg.decoder_hidden, cfg.decoder_hidden, rng, dtype)
        self.proj = Dense(cfg.decoder_hidden, cfg.n_features, rng, dtype)

    def forward(self, z: np.ndarray):
        e, expand_cache = self.expand.forward(z)
        seq = np.repeat(e[:, None, :], self.cfg.window_len, axis=1)
        h, rnn_cache = self.rnn.forward(seq)
        x_hat, proj_cache = self.proj.forward(h)
        return x_hat, (expand_cache, rnn_cache, proj_cache)

    def backward(self, dx_hat: np.ndarray, cache):
        expand_cache, rnn_cache, proj_cache = cache
        dh, proj_grads = self.proj.backward(dx_hat, proj_cache)
        dseq, rnn_grads = self.rnn.backward(dh, rnn_cache)
        de = dseq.sum(axis=1)  # the latent expansion feeds every time step
        dz, expand_grads = self.expand.backward(de, expand_cache)
        grads = {f"expand.{k}": v for k, v in expand_grads.items()}
        grads.update({f"rnn.{k}": v for k, v in rnn_grads.items()})
        grads.update({f"proj.{k}": v for k, v in proj_grads.items()})
        return dz, grads

    def named_params(self):
        params = {f"expand.{k}": v for k, v in self.expand.named_params().items()}
        params.update({f"rnn.{k}": v for k, v in self.rnn.named_params().items()})
        params.update({f"proj.{k}": v for k, v in self.proj.named_params().items()})
        return params


class DaeModel:
    """Encoder + per-phase decoders + standardizer + per-decoder thresholds."""

    def __init__(self, config: ModelConfig | None = None, seed: int = 0):
        self.config = config or ModelConfig()
        rng = np.random.default_rng(seed)
        self.encoder = Encoder(self.config, rng)
        keys = [p.value for p in PHASES] if self.config.discriminate else [SINGLE_DECODER_KEY]
        self.decoders = {key: Decoder(self.config, rng) for key in keys}
        self.standardizer: Standardizer | None = None
        self.thresholds: dict[str, float] = {}
        self.adam_state: AdamState | None = None
        self.seed = seed

    # -- routing ------------------------------------------------------------

    def route_key(self, window: FeatureWindow) -> str:
        key = window.phase.value if self.config.discriminate else SINGLE_DECODER_KEY
        if key not in self.decoders:
            raise ContractError(f"no decoder for phase tag {key!r}")
        return key

    def _group(self, windows: Sequence[FeatureWindow]):
        """Per-decoder mini-batches plus the permutation record."""
        if self.config.discriminate:
            groups, record = sort_into_minibatches(windows)
            return (
                {p.value: ws for p, ws in groups.items()},
                {p.value: idx for p, idx in record.items()},
            )
        return (
            {SINGLE_DECODER_KEY: list(windows)},
            {SINGLE_DECODER_KEY: list(range(len(windows)))},
        )

    # -- forward ------------------------------------------------------------

    def forward(self, windows: Sequence[FeatureWindow]) -> np.ndarray:
        """Reconstruct standardized windows; output order = input order."""
        for w in windows:
            self.route_key(w)
        groups, record = self._group(windows)
        outputs: dict[str, list[np.ndarray]] = {}
        for key, ws in groups.items():
            if not ws:
                outputs[key] = []
                continue
            x = np.stack([w.values for w in ws]).astype(self.config.np_dtype())
            z, _ = self.encoder.forward(x)
            x_hat, _ = self.decoders[key].forward(z)
            outputs[key] = list(x_hat)
        restored = restore_order(outputs, record)
        return np.stack(restored) if restored else np.zeros((0, self.config.window_len, self.config.n_features))

    # -- parameters ----------------------------------------------------------

    def named_params(self) -> dict[str, np.ndarray]:
        params = {f"encoder.{k}": v for k, v in self.encoder.named_params().items()}
        for key, dec in self.decoders.items():
            params.update({f"decoder.{key}.{k}": v for k, v in dec.named_params().items()})
        return params

    # -- scoring ------------------------------------------------------------

    def score_values(self, values: np.ndarray, reconstruction: np.ndarray) -> float:
        return anomaly_score(values, reconstruction, self.config.score_variant)


def anomaly_score(window: np.ndarray, reconstruction: np.ndarray, variant: str = "mse") -> float:
    """Per-window anomaly score from a standardized window and its output.

    ``mse``: mean squared reconstruction error (default; higher = worse).
    ``eq1``: mean of (1 - squared error), a similarity-like alternate kept
    for comparison.
    """
    if window.shape != reconstruction.shape:
        raise ContractError(f"shape mismatch {window.shape} vs {reconstruction.shape}")
    mse = float(np.mean((window - reconstruction) ** 2))
    if variant == "mse":
        return mse
    if variant == "eq1":
        return 1.0 - mse
    raise ContractError(f"unknown score variant {variant!r}")


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _batch_loss_and_grads(model: DaeModel, x_by_key: dict[str, np.ndarray]):
    """Forward+backward over one (already grouped) batch.

    The loss is the mean squared error over every element of the batch, so
    each mini-batch's gradient is scaled by its share of the elements; all
    decoder gradients merge into the shared encoder.
    """
    total_elems = sum(x.size for x in x_by_key.values())
    loss_sum = 0.0
    grads: dict[str, np.ndarray] = {}
    for key, x in x_by_key.items():
        if x.shape[0] == 0:
            continue
        z, enc_cache = model.encoder.forward(x)
        x_hat, dec_cache = model.decoders[key].forward(z)
        diff = x_hat - x
        loss_sum += float(np.sum(diff * diff))
        dx_hat = 2.0 * diff / total_elems
        dz, dec_grads = model.decoders[key].backward(dx_hat, dec_cache)
        _, enc_grads = model.encoder.backward(dz, enc_cache)
        merge_grads(grads, {f"decoder.{key}.{k}": v for k, v in dec_grads.items()})
        merge_grads(grads, {f"encoder.{k}": v for k, v in enc_grads.items()})
    return loss_sum / total_elems, grads


def _stack_standardized(model: DaeModel, windows: Sequence[FeatureWindow]):
    std_windows = apply_standardizer(model.standardizer, windows)
    x = np.stack([w.values for w in std_windows]).astype(model.config.np_dtype())
    keys = np.array([model.route_key(w) for w in windows])
    return x, keys


def _mean_loss(model: DaeModel, x: np.ndarray, keys: np.ndarray, batch_size: int) -> float:
    loss_sum = 0.0
    for start in range(0, len(x), batch_size):
        xb = x[start:start + batch_size]
        kb = keys[start:start + batch_size]
        for key in dict.fromkeys(kb.tolist()):
            sel = xb[kb == key]
            z, _ = model.encoder.forward(sel)
            x_hat, _ = model.decoders[key].forward(z)
            loss_sum += float(np.sum((x_hat - sel) ** 2))
    return loss_sum / x.size if x.size else float("nan")


def train(
    model: DaeModel,
    windows: Sequence[FeatureWindow],
    config: TrainConfig | None = None,
    val_windows: Sequence[FeatureWindow] | None = None,
) -> TrainResult:
    """Fit the model on presumed-normal windows; returns per-epoch losses.

    Fits the standardizer on the training windows when the model does not
    have one yet. When no validation windows are given, a val_fraction split
    by flight keeps held-out flights out of training. Early stopping after
    `patience` epochs without validation improvement; the best-epoch weights
    are restored at the end.

    Raises:
        TrainingDivergedError: the loss became non-finite.
    """
    cfg = config or TrainConfig()
    if not windows:
        raise ContractError("no training windows")

    if val_windows is None:
        windows, val_windows = _split_by_flight(windows, cfg.val_fraction, cfg.seed)

    if model.standardizer is None:
        model.standardizer = fit_standardizer(windows)

    x_train, keys_train = _stack_standardized(model, windows)
    x_val, keys_val = (
        _stack_standardized(model, val_windows) if val_windows else (None, None)
    )

    params = model.named_params()
    adam = AdamState.for_params(params)
    rng = np.random.default_rng(cfg.seed)

    best_val = float("inf")
    best_epoch = -1
    best_params: dict[str, np.ndarray] | None = None
    train_losses: list[float] = []
    val_losses: list[float] = []

    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(x_train))
        epoch_sq_sum = 0.0
        for start in range(0, len(perm), cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            xb = x_train[idx]
            kb = keys_train[idx]
            x_by_key = {key: xb[kb == key] for key in dict.fromkeys(kb.tolist())}
            loss, grads = _batch_loss_and_grads(model, x_by_key)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            epoch_sq_sum += loss * xb.size
            adam_update(params, grads, adam, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
        train_loss = epoch_sq_sum / x_train.size
        val_loss = (
            _mean_loss(model, x_val, keys_val, cfg.batch_size)
            if x_val is not None
            else train_loss
        )
        train_losses.append(train_loss)
        val_losses.append(val_loss)
        logger.info("epoch %d: train %.6f val %.6f", epoch, train_loss, val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = {k: p.copy() for k, p in params.items()}
        elif epoch - best_epoch >= cfg.patience:
            logger.info("early stop at epoch %d (best %d)", epoch, best_epoch)
            break

    if best_params is not None:
        for k, p in params.items():
            p[...] = best_params[k]
    model.adam_state = adam
    return TrainResult(train_losses, val_losses, best_epoch, len(train_losses))


def _split_by_flight(windows: Sequence[FeatureWindow], val_fraction: float, seed: int):
    """Deterministic per-flight validation split."""
    if val_fraction <= 0.0:
        return list(windows), []
    flights = sorted({w.flight_id for w in windows})
    rng = np.random.default_rng(seed)
    rng.shuffle(flights)
    n_val = max(1, int(round(len(flights) * val_fraction))) if len(flights) > 1 else 0
    val_ids = set(flights[:n_val])
    train_ws = [w for w in windows if w.flight_id not in val_ids]
    val_ws = [w for w in windows if w.flight_id in val_ids]
    if not train_ws:  # degenerate corpus: train on everything
        return list(windows), []
    return train_ws, val_ws


# ---------------------------------------------------------------------------
# Scoring / calibration / detection
# ---------------------------------------------------------------------------


def score_windows(
    model: DaeModel, windows: Sequence[FeatureWindow], batch_size: int = 256
) -> np.ndarray:
    """Anomaly score per window (original order). Standardizes internally."""
    if model.standardizer is None:
        raise ContractError("model has no standardizer; train first")
    if not windows:
        return np.zeros(0)
    x, keys = _stack_standardized(model, windows)
    scores = np.empty(len(windows))
    variant = model.config.score_variant
    for start in range(0, len(x), batch_size):
        xb = x[start:start + batch_size]
        kb = keys[start:start + batch_size]
        for key in dict.fromkeys(kb.tolist()):
            sel = kb == key
            z, _ = model.encoder.forward(xb[sel])
            x_hat, _ = model.decoders[key].forward(z)
            per_window = np.mean((x_hat - xb[sel]) ** 2, axis=(1, 2))
            if variant == "eq1":
                per_window = 1.0 - per_window
            scores[start + np.flatnonzero(sel)] = per_window
    return scores


MIN_CALIBRATION_WINDOWS = 30


def calibrate_thresholds(
    model: DaeModel, windows: Sequence[FeatureWindow]
) -> dict[str, float]:
    """Per-decoder tau = mean + 3*std of the training-window scores.

    Raises:
        CalibrationError: some decoder received fewer than 30 windows.
    """
    scores = score_windows(model, windows)
    keys = [model.route_key(w) for w in windows]
    thresholds: dict[str, float] = {}
    for key in model.decoders:
        key_scores = np.array([s for s, k in zip(scores, keys) if k == key])
        if len(key_scores) < MIN_CALIBRATION_WINDOWS:
            raise CalibrationError(
                f"decoder {key!r}: only {len(key_scores)} training windows "
                f"(need >= {MIN_CALIBRATION_WINDOWS})"
            )
        thresholds[key] = float(key_scores.mean() + 3.0 * key_scores.std())
    model.thresholds = thresholds
    return thresholds


def detect(model: DaeModel, windows: Sequence[FeatureWindow]) -> list[AnomalyVerdict]:
    """Score every window and compare against its decoder's threshold.

    Verdict order equals record order; flagged uses strict score > tau.

    Raises:
        ContractError: the model has not been calibrated.
    """
    if not model.thresholds:
        raise ContractError("model has no thresholds; calibrate first")
    scores = score_windows(model, windows)
    verdicts = []
    for w, score in zip(windows, scores):
        key = model.route_key(w)
        tau = model.thresholds[key]
        verdicts.append(
            AnomalyVerdict(
                flight_id=w.flight_id,
                start_timestamp=w.start_timestamp,
                phase=Phase(w.phase),
                score=float(score),
                threshold_used=tau,
                flagged=bool(score > tau),
            )
        )
    return verdicts


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------


def save_model(model: DaeModel, path: str | Path) -> None:
    """Write a versioned .npz checkpoint (params, optimizer, standardizer)."""
    path = Path(path)
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": {
            "window_len": model.config.window_len,
            "n_features": model.config.n_features,
            "encoder_hidden": model.config.encoder_hidden,
            "latent_dim": model.config.latent_dim,
            "decoder_hidden": model.config.decoder_hidden,
            "discriminate": model.config.discriminate,
            "score_variant": model.config.score_variant,
            "dtype": model.config.dtype,
        },
        "seed": model.seed,
        "thresholds": model.thresholds,
        "standardizer": model.standardizer.to_dict() if model.standardizer else None,
    }
    arrays = {f"param/{k}": v for k, v in model.named_params().items()}
    adam = model.adam_state
    if adam is not None:
        arrays.update({f"adam.m/{k}": v for k, v in adam.m.items()})
        arrays.update({f"adam.v/{k}": v for k, v in adam.v.items()})
        arrays["adam.step"] = np.array(adam.step)
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_model(path: str | Path) -> DaeModel:
    """Rebuild a model (and its optimizer state, if present) from a checkpoint."""
    with np.load(Path(path)) as data:
        meta = json.loads(bytes(data["meta"]))
        if meta["version"] != CHECKPOINT_VERSION:
            raise ContractError(f"unsupported checkpoint version {meta['version']}")
        model = DaeModel(ModelConfig(**meta["config"]), seed=meta["seed"])
        params = model.named_params()
        for key, p in params.items():
            p[...] = data[f"param/{key}"]
        if meta["standardizer"] is not None:
            model.standardizer = Standardizer.from_dict(meta["standardizer"])
        model.thresholds = {k: float(v) for k, v in meta["thresholds"].items()}
        if "adam.step" in data:
            adam = AdamState(
                m={k: data[f"adam.m/{k}"] for k in params},
                v={k: data[f"adam.v/{k}"] for k in params},
                step=int(data["adam.step"]),
            )
            model.adam_state = adam
    return model
