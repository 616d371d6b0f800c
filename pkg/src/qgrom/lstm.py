"""From-scratch stacked LSTM for modal-coefficient sequences: minibatch ADAM
training with exact BPTT gradients, and closed-loop recursive rollout.

Windows are stateless: hidden and cell states are zeroed at the start of each
sample. Gate packing order along the 4H axis is [input, forget, candidate,
output].
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Iterator, Optional

import numpy as np

from qgrom.galerkin import COEFF_DIVERGENCE_LIMIT, RomTrajectory


class DegenerateScaleError(ValueError):
    def __init__(self, mode: int):
        super().__init__(f"mode {mode} has a constant training series; cannot scale")
        self.mode = mode


@dataclass
class Scaler:
    """Per-mode affine map sending the training min/max to [-1, +1]."""

    lo: np.ndarray
    hi: np.ndarray

    def transform(self, a: np.ndarray) -> np.ndarray:
        return 2.0 * (a - self.lo) / (self.hi - self.lo) - 1.0

    def inverse(self, s: np.ndarray) -> np.ndarray:
        return self.lo + 0.5 * (s + 1.0) * (self.hi - self.lo)


def fit_scaler(series: np.ndarray) -> Scaler:
    """Fit per-mode min/max over a (R, N) coefficient series."""
    lo = series.min(axis=1)
    hi = series.max(axis=1)
    for k in range(len(lo)):
        if not hi[k] > lo[k]:
            raise DegenerateScaleError(k)
    return Scaler(lo=lo[:, None], hi=hi[:, None])


def make_windows(a: np.ndarray, sigma: int) -> tuple[np.ndarray, np.ndarray]:
    """Slice a (R, N) series into (N-sigma) lookback windows.

    Returns inputs (N-sigma, sigma, R) and next-state targets (N-sigma, R).
    """
    if sigma < 1:
        raise ValueError("sigma must be >= 1")
    r, n = a.shape
    if n <= sigma:
        raise ValueError(f"need more than sigma={sigma} states, got {n}")
    m = n - sigma
    inputs = np.empty((m, sigma, r))
    for s in range(sigma):
        inputs[:, s, :] = a[:, s : s + m].T
    targets = a[:, sigma:].T.copy()
    return inputs, targets


@dataclass
class LstmLayerParams:
    wx: np.ndarray    # (4H, in_dim)
    wh: np.ndarray    # (4H, H)
    b: np.ndarray     # (4H,)

    @property
    def hidden(self) -> int:
        return self.wh.shape[1]


@dataclass
class AdamState:
    m: dict = dc_field(default_factory=dict)
    v: dict = dc_field(default_factory=dict)
    t: int = 0


@dataclass
class TrainConfig:
    epochs: int = 500
    batch_size: int = 16
    validation_fraction: float = 0.2
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True
    n_layers: int = 6
    hidden: int = 40

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in (0, 1)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class LstmModel:
    layers: list[LstmLayerParams]
    w_out: np.ndarray     # (R, H)
    b_out: np.ndarray     # (R,)
    scaler: Optional[Scaler]
    sigma: int
    r: int
    seed: int
    adam: AdamState = dc_field(default_factory=AdamState)

    @property
    def hidden(self) -> int:
        return self.layers[0].hidden


def init_model(
    r: int, sigma: int, seed: int, n_layers: int = 6, hidden: int = 40
) -> LstmModel:
    """Glorot-uniform weights, zero biases, forget-gate bias offset +1."""
    rng = np.random.default_rng(seed)
    layers = []
    in_dim = r
    for _ in range(n_layers):
        wx = rng.uniform(-1.0, 1.0, (4 * hidden, in_dim)) * np.sqrt(6.0 / (in_dim + hidden))
        wh = rng.uniform(-1.0, 1.0, (4 * hidden, hidden)) * np.sqrt(6.0 / (2 * hidden))
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 1.0
        layers.append(LstmLayerParams(wx=wx, wh=wh, b=b))
        in_dim = hidden
    w_out = rng.uniform(-1.0, 1.0, (r, hidden)) * np.sqrt(6.0 / (hidden + r))
    b_out = np.zeros(r)
    return LstmModel(
        layers=layers, w_out=w_out, b_out=b_out, scaler=None, sigma=sigma, r=r, seed=seed
    )


def param_items(model: LstmModel) -> Iterator[tuple[str, np.ndarray]]:
    for idx, layer in enumerate(model.layers):
        yield f"wx{idx}", layer.wx
        yield f"wh{idx}", layer.wh
        yield f"b{idx}", layer.b
    yield "w_out", model.w_out
    yield "b_out", model.b_out


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def cell_forward(
    x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray, params: LstmLayerParams
) -> tuple[np.ndarray, np.ndarray]:
    """Single gated cell update. Accepts (in,) vectors or (B, in) batches."""
    h, c, _ = _cell_forward_full(
        np.atleast_2d(x_t), np.atleast_2d(h_prev), np.atleast_2d(c_prev), params
    )
    if x_t.ndim == 1:
        return h[0], c[0]
    return h, c


def _cell_forward_full(x, h_prev, c_prev, params):
    hid = params.hidden
    z = x @ params.wx.T + h_prev @ params.wh.T + params.b
    i = _sigmoid(z[:, :hid])
    f = _sigmoid(z[:, hid : 2 * hid])
    g = np.tanh(z[:, 2 * hid : 3 * hid])
    o = _sigmoid(z[:, 3 * hid :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (i, f, g, o, c_prev, tc)


def _forward_batch(x: np.ndarray, model: LstmModel, want_cache: bool = False):
    """Unroll the stacked network over a (B, sigma, R) batch.

    Returns predictions (B, R) and, when requested, the per-layer/per-step
    cache needed for BPTT.
    """
    b_sz, sigma, _ = x.shape
    cache = []
    seq = x
    h_last = None
    for params in model.layers:
        hid = params.hidden
        h = np.zeros((b_sz, hid))
        c = np.zeros((b_sz, hid))
        h_seq = np.empty((b_sz, sigma, hid))
        layer_cache = []
        for t in range(sigma):
            x_t = seq[:, t, :]
            h_new, c_new, gates = _cell_forward_full(x_t, h, c, params)
            if want_cache:
                layer_cache.append((x_t, h, gates))
            h, c = h_new, c_new
            h_seq[:, t, :] = h
        if want_cache:
            cache.append(layer_cache)
        seq = h_seq
        h_last = h
    pred = h_last @ model.w_out.T + model.b_out
    if want_cache:
        return pred, cache
    return pred


def network_forward(window: np.ndarray, model: LstmModel) -> np.ndarray:
    """Predict the next coefficient state from one (sigma, R) window."""
    window = np.asarray(window, dtype=np.float64)
    if window.shape != (model.sigma, model.r):
        raise ValueError(f"expected window shape {(model.sigma, model.r)}, got {window.shape}")
    return _forward_batch(window[None], model)[0]


def loss_and_gradients(
    batch: tuple[np.ndarray, np.ndarray], model: LstmModel
) -> tuple[float, dict]:
    """MSE over the batch (normalized space) and exact BPTT gradients."""
    x, y = batch
    if len(x) == 0:
        raise ValueError("empty batch")
    b_sz, sigma, _ = x.shape
    pred, cache = _forward_batch(x, model, want_cache=True)
    err = pred - y
    mse = float(np.mean(err**2))

    grads = {name: np.zeros_like(arr) for name, arr in param_items(model)}
    d_pred = 2.0 * err / err.size
    top_h_last = _last_hidden_from_cache(cache[-1])
    grads["w_out"] = d_pred.T @ top_h_last
    grads["b_out"] = d_pred.sum(axis=0)

    # gradient w.r.t. each layer's hidden output sequence
    d_hseq = np.zeros((b_sz, sigma, model.layers[-1].hidden))
    d_hseq[:, sigma - 1, :] = d_pred @ model.w_out

    for idx in range(len(model.layers) - 1, -1, -1):
        params = model.layers[idx]
        layer_cache = cache[idx]
        hid = params.hidden
        d_wx = np.zeros_like(params.wx)
        d_wh = np.zeros_like(params.wh)
        d_b = np.zeros_like(params.b)
        d_xseq = np.zeros((b_sz, sigma, params.wx.shape[1]))
        dh_carry = np.zeros((b_sz, hid))
        dc_carry = np.zeros((b_sz, hid))
        for t in range(sigma - 1, -1, -1):
            x_t, h_prev, (i, f, g, o, c_prev, tc) = layer_cache[t]
            dh = d_hseq[:, t, :] + dh_carry
            do = dh * tc
            dc = dh * o * (1.0 - tc**2) + dc_carry
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dc_carry = dc * f
            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g**2),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            d_wx += dz.T @ x_t
            d_wh += dz.T @ h_prev
            d_b += dz.sum(axis=0)
            d_xseq[:, t, :] = dz @ params.wx
            dh_carry = dz @ params.wh
        grads[f"wx{idx}"] = d_wx
        grads[f"wh{idx}"] = d_wh
        grads[f"b{idx}"] = d_b
        d_hseq = d_xseq
    return mse, grads


def _last_hidden_from_cache(layer_cache):
    _, _, (_, _, _, o, _, tc) = layer_cache[-1]
    return o * tc


def adam_step(model: LstmModel, grads: dict, cfg: TrainConfig) -> LstmModel:
    """Bias-corrected ADAM update, in place."""
    state = model.adam
    state.t += 1
    b1, b2 = cfg.beta1, cfg.beta2
    corr1 = 1.0 - b1**state.t
    corr2 = 1.0 - b2**state.t
    for name, param in param_items(model):
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(param)
            state.v[name] = np.zeros_like(param)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g**2
        param -= cfg.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + cfg.eps)
    return model


def train(
    a_train: np.ndarray, sigma: int, cfg: TrainConfig
) -> tuple[LstmModel, dict]:
    """Fit scaler, window the series, hold out the time-ordered tail for
    validation, and run minibatch ADAM. Deterministic given cfg.seed.

    Returns the model and a history dict with per-epoch train/val losses.
    """
    a_train = np.asarray(a_train, dtype=np.float64)
    r = a_train.shape[0]
    scaler = fit_scaler(a_train)
    scaled = scaler.transform(a_train)
    inputs, targets = make_windows(scaled, sigma)
    m = len(inputs)
    n_val = int(round(cfg.validation_fraction * m))
    n_fit = m - n_val
    if n_fit < 1:
        raise ValueError("not enough samples left after validation split")
    fit_x, fit_y = inputs[:n_fit], targets[:n_fit]
    val_x, val_y = inputs[n_fit:], targets[n_fit:]

    model = init_model(r, sigma, cfg.seed, n_layers=cfg.n_layers, hidden=cfg.hidden)
    model.scaler = scaler
    rng = np.random.default_rng(cfg.seed)
    history = {"train": [], "val": []}
    for _ in range(cfg.epochs):
        order = rng.permutation(n_fit) if cfg.shuffle else np.arange(n_fit)
        sq_sum = 0.0
        for start in range(0, n_fit, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            mse, grads = loss_and_gradients((fit_x[idx], fit_y[idx]), model)
            adam_step(model, grads, cfg)
            sq_sum += mse * len(idx)
        history["train"].append(sq_sum / n_fit)
        if n_val > 0:
            val_pred = _forward_batch(val_x, model)
            history["val"].append(float(np.mean((val_pred - val_y) ** 2)))
        else:
            history["val"].append(float("nan"))
    return model, history


def predict_recursive(
    model: LstmModel,
    seed_states: np.ndarray,
    n_steps: int,
    t0: float = 0.0,
    step: float = 1.0,
) -> RomTrajectory:
    """Closed-loop rollout: predict, shift the window, repeat.

    `seed_states` is the (sigma, R) block of true initial states; t0 is the
    time of its first row. The trajectory holds only the n_steps predicted
    states, never re-reading ground truth.
    """
    seed_states = np.asarray(seed_states, dtype=np.float64)
    if seed_states.shape != (model.sigma, model.r):
        raise ValueError(
            f"expected seed shape {(model.sigma, model.r)}, got {seed_states.shape}"
        )
    window = model.scaler.transform(seed_states.T).T.copy()
    preds = np.empty((n_steps, model.r))
    for k in range(n_steps):
        nxt = _forward_batch(window[None], model)[0]
        preds[k] = nxt
        window = np.vstack([window[1:], nxt])
        if np.max(np.abs(nxt)) > COEFF_DIVERGENCE_LIMIT:
            preds = preds[: k + 1]
            break
    a = model.scaler.inverse(preds.T)
    times = t0 + step * (model.sigma + np.arange(a.shape[1]))
    diverged_at = None
    if a.shape[1] < n_steps:
        diverged_at = float(times[-1]) if len(times) else t0
    return RomTrajectory(times=times, a=a, provenance="lstm", diverged_at=diverged_at)
