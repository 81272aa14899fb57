"""Learnable flow map with memory, trained on burst datasets.

The network advances the QoI one recording step at a time: it reads the
last memory_steps+1 QoI states (flattened oldest-first, plus any
explicit parameters), and emits the next state.  Training minimizes the
multi-step recurrent loss: each burst's first window seeds a rollout of
rollout_steps predictions, each fed back into the sliding window, and
the squared mismatch is averaged over rollout steps and batch.

All numerics are plain numpy.  Gradients are exact reverse-mode
differentiation through the entire rollout (no truncation): the reverse
sweep walks the rollout backwards, splitting each window gradient into
the part that entered through the network input and the part that slid
over from the following window.  The reduction order is fixed, so
training is bit-reproducible for a given seed and data order.

Hidden layers are tanh, the output layer linear.  QoI values are
z-scored per component inside the model (norm_mean, norm_scale); the
loss is computed in that normalized space so components of very
different magnitudes contribute comparably.  Explicit parameters are
appended to the input unscaled.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .core import BurstDataset, FlowMapModel, validate_dataset
from .errors import ConfigurationError, DataError, DivergenceError

__all__ = [
    "TrainConfig",
    "init_model",
    "fit_normalization",
    "forward",
    "rollout_k",
    "loss_multi_step",
    "backward",
    "AdamState",
    "adam_step",
    "cyclic_lr",
    "train",
    "save_model",
    "load_model",
]

_MODEL_VERSION = 1
_U64 = struct.Struct("<Q")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters.

    The cyclic learning-rate schedule sweeps between lr_base and lr_max
    as a triangular wave of half-period lr_half_cycle iterations, with
    the swing shrunk by lr_decay every iteration.  Defaults mirror a
    production-scale recipe (batch 64, 3000 epochs, base 1e-7, max 1e-3,
    decay 0.999997); desk-scale runs override epochs and decay.

    window_noise > 0 adds zero-mean Gaussian noise of that standard
    deviation (normalized units) to each batch's seed window while the
    rollout targets stay clean.  Long closed-loop rollouts need it when
    hidden parameters leave a neutral direction along the data manifold:
    training only on exact data gives the map no reason to pull
    slightly-off states back, and rollouts can wander into unseen
    territory.  The loss reported with noise on is the denoising
    objective, not the clean loss.

    average_tail > 0 returns the average of the end-of-epoch weights
    over the final average_tail epochs instead of the last iterate
    (tail averaging).  Long rollouts integrate the small state-dependent
    wiggle the optimizer leaves around its minimum; averaging iterates
    while the cyclic schedule is still exploring cancels much of that
    wiggle without extra epochs.  Zero keeps the final iterate.
    """

    rollout_steps: int = 10
    batch_size: int = 64
    epochs: int = 3000
    lr_base: float = 1e-7
    lr_max: float = 1e-3
    lr_decay: float = 0.999997
    lr_half_cycle: int = 2000
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    window_noise: float = 0.0
    average_tail: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.rollout_steps < 1:
            raise ConfigurationError(f"rollout_steps must be >= 1, got {self.rollout_steps}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be >= 0, got {self.epochs}")
        if not (0 < self.lr_base <= self.lr_max and np.isfinite(self.lr_max)):
            raise ConfigurationError(
                f"need 0 < lr_base <= lr_max, got {self.lr_base}, {self.lr_max}"
            )
        if not 0 < self.lr_decay <= 1:
            raise ConfigurationError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if self.lr_half_cycle < 1:
            raise ConfigurationError(
                f"lr_half_cycle must be >= 1, got {self.lr_half_cycle}"
            )
        for name in ("adam_beta1", "adam_beta2"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise ConfigurationError(f"{name} must be in [0, 1), got {v}")
        if not self.adam_eps > 0:
            raise ConfigurationError(f"adam_eps must be > 0, got {self.adam_eps}")
        if not (np.isfinite(self.window_noise) and self.window_noise >= 0):
            raise ConfigurationError(
                f"window_noise must be >= 0, got {self.window_noise}"
            )
        if self.average_tail < 0:
            raise ConfigurationError(
                f"average_tail must be >= 0, got {self.average_tail}"
            )
        if not (0 <= self.seed < 2**64):
            raise ConfigurationError(f"seed must be a u64, got {self.seed}")


def init_model(
    qoi_dim: int,
    param_dim: int,
    memory_steps: int,
    hidden_widths,
    seed: int,
) -> FlowMapModel:
    """Fresh model: Glorot-uniform weights, zero biases, identity
    normalization (fit later from training data)."""
    hidden = tuple(int(w) for w in hidden_widths)
    if len(hidden) == 0:
        raise ConfigurationError("at least one hidden layer width required")
    if any(w < 1 for w in hidden):
        raise ConfigurationError(f"hidden widths must be >= 1, got {hidden}")
    widths = ((memory_steps + 1) * qoi_dim + param_dim,) + hidden + (qoi_dim,)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return FlowMapModel(
        qoi_dim=qoi_dim,
        param_dim=param_dim,
        memory_steps=memory_steps,
        layer_widths=widths,
        weights=tuple(weights),
        biases=tuple(biases),
        norm_mean=np.zeros(qoi_dim),
        norm_scale=np.ones(qoi_dim),
    )


def fit_normalization(model: FlowMapModel, dataset: BurstDataset) -> FlowMapModel:
    """Model with per-component mean/std taken over every dataset entry.
    Components with zero spread keep unit scale."""
    if dataset.qoi_dim != model.qoi_dim:
        raise ConfigurationError(
            f"dataset qoi_dim {dataset.qoi_dim} != model qoi_dim {model.qoi_dim}"
        )
    flat = np.concatenate([b.entries for b in dataset.bursts], axis=0)
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    scale = np.where(std > 0, std, 1.0)
    return FlowMapModel(
        qoi_dim=model.qoi_dim,
        param_dim=model.param_dim,
        memory_steps=model.memory_steps,
        layer_widths=model.layer_widths,
        weights=model.weights,
        biases=model.biases,
        norm_mean=mean,
        norm_scale=scale,
    )


def _mlp_forward(weights, biases, x):
    """x (B, widths[0]) -> (output (B, widths[-1]), per-layer activations
    [x, h_1, ..., h_{L-1}])."""
    acts = [x]
    h = x
    for w, b in zip(weights[:-1], biases[:-1]):
        h = np.tanh(h @ w.T + b)
        acts.append(h)
    return h @ weights[-1].T + biases[-1], acts


def _mlp_backward(weights, acts, gout, gw, gb):
    """Accumulate parameter gradients for one network application and
    return the gradient w.r.t. its input.  gout is dL/d(output)."""
    delta = gout
    for layer in range(len(weights) - 1, 0, -1):
        gw[layer] += delta.T @ acts[layer]
        gb[layer] += delta.sum(axis=0)
        delta = (delta @ weights[layer]) * (1.0 - acts[layer] ** 2)
    gw[0] += delta.T @ acts[0]
    gb[0] += delta.sum(axis=0)
    return delta @ weights[0]


def _rollout_norm(weights, biases, zwin, params, k, qoi_dim, check_finite=True):
    """Roll the map k steps in normalized space.

    zwin (B, window_len*qoi_dim) flattened oldest-first; params (B, p).
    Returns predictions (B, k, qoi_dim) and, for the backward sweep, the
    per-step activation caches and window snapshots.
    """
    batch = zwin.shape[0]
    preds = np.empty((batch, k, qoi_dim))
    caches = []
    flat = zwin
    for step in range(k):
        x = np.concatenate([flat, params], axis=1) if params.shape[1] else flat
        out, acts = _mlp_forward(weights, biases, x)
        if check_finite and not np.all(np.isfinite(out)):
            raise DivergenceError(f"rollout diverged at step {step + 1} of {k}")
        preds[:, step] = out
        caches.append(acts)
        flat = np.concatenate([flat[:, qoi_dim:], out], axis=1)
    return preds, caches


def _normalize(model: FlowMapModel, values: np.ndarray) -> np.ndarray:
    return (values - model.norm_mean) / model.norm_scale


def _denormalize(model: FlowMapModel, values: np.ndarray) -> np.ndarray:
    return values * model.norm_scale + model.norm_mean


def _check_window(model: FlowMapModel, window) -> np.ndarray:
    w = np.asarray(window, dtype=np.float64)
    need = (model.window_len, model.qoi_dim)
    if w.shape != need:
        raise ConfigurationError(
            f"initial window must have shape {need} "
            f"(memory_steps+1 states, oldest first), got {w.shape}"
        )
    if not np.all(np.isfinite(w)):
        raise ConfigurationError("initial window contains non-finite values")
    return w


def _check_params(model: FlowMapModel, params) -> np.ndarray:
    p = np.asarray(params, dtype=np.float64).reshape(-1)
    if p.shape[0] != model.param_dim:
        raise ConfigurationError(
            f"expected {model.param_dim} explicit parameters, got {p.shape[0]}"
        )
    return p


def rollout_k(model: FlowMapModel, window, params=(), k: int = 1) -> np.ndarray:
    """Iterate the flow map k steps from an initial window, feeding each
    prediction back into the sliding memory; returns the k predicted QoI
    states (denormalized).  The first j outputs equal a k=j call exactly."""
    if k < 1:
        raise ConfigurationError(f"k must be >= 1, got {k}")
    w = _check_window(model, window)
    p = _check_params(model, params)
    zwin = _normalize(model, w).reshape(1, -1)
    preds, _ = _rollout_norm(
        model.weights, model.biases, zwin, p.reshape(1, -1), k, model.qoi_dim
    )
    return _denormalize(model, preds[0])


def forward(model: FlowMapModel, window, params=()) -> np.ndarray:
    """One application of the flow map: the next QoI state."""
    return rollout_k(model, window, params, k=1)[0]


def _stack_bursts(model: FlowMapModel, bursts) -> tuple[np.ndarray, np.ndarray, int]:
    """Validate a batch of bursts against the model and stack them into
    (B, n_l, qoi_dim) entries and (B, param_dim) parameters."""
    bursts = list(bursts)
    if not bursts:
        raise DataError("empty burst batch")
    lengths = {len(b) for b in bursts}
    if len(lengths) != 1:
        raise DataError(f"burst length mismatch within batch: {sorted(lengths)}")
    n_l = lengths.pop()
    rollout_steps = n_l - model.window_len
    if rollout_steps < 1:
        raise DataError(
            f"bursts of length {n_l} leave no rollout targets beyond the "
            f"{model.window_len}-step window"
        )
    for i, b in enumerate(bursts):
        if b.qoi_dim != model.qoi_dim:
            raise DataError(f"burst {i}: qoi_dim {b.qoi_dim} != model {model.qoi_dim}")
        if b.params.shape[0] != model.param_dim:
            raise DataError(
                f"burst {i}: {b.params.shape[0]} params != model {model.param_dim}"
            )
    entries = np.stack([b.entries for b in bursts])
    params = np.stack([b.params for b in bursts])
    return entries, params, rollout_steps


def _loss_and_grads(model, entries, params, rollout_steps, want_grads, noise=None):
    """Multi-step loss (normalized space) and, optionally, exact
    gradients through the whole rollout.

    entries (B, window_len+rollout_steps, qoi_dim) raw QoI values.
    noise, when given, perturbs the normalized seed window only; the
    targets stay clean, so the map is trained to fall back onto the
    data manifold (closed-loop stabilization).
    """
    n_v = model.qoi_dim
    batch = entries.shape[0]
    z = _normalize(model, entries)
    zwin = z[:, : model.window_len].reshape(batch, -1)
    if noise is not None:
        zwin = zwin + noise
    ztgt = z[:, model.window_len :]
    preds, caches = _rollout_norm(
        model.weights, model.biases, zwin, params, rollout_steps, n_v
    )
    total = 0.0
    for k in range(rollout_steps):
        diff = preds[:, k] - ztgt[:, k]
        total += float(np.mean(np.sum(diff * diff, axis=1)))
    total /= rollout_steps
    if not want_grads:
        return total, None

    weights, biases = model.weights, model.biases
    gw = [np.zeros_like(w) for w in weights]
    gb = [np.zeros_like(b) for b in biases]
    width = zwin.shape[1]
    coef = 2.0 / (batch * rollout_steps)
    # dL/d(window entering step k); starts at zero past the last step.
    gwin = np.zeros((batch, width))
    for k in range(rollout_steps - 1, -1, -1):
        gout = coef * (preds[:, k] - ztgt[:, k])
        # prediction k is also the newest slot of the next step's window
        gout = gout + gwin[:, width - n_v :]
        gx = _mlp_backward(weights, caches[k], gout, gw, gb)
        prev = gx[:, :width].copy()
        # the rest of the next window slid over from this one
        prev[:, n_v:] += gwin[:, : width - n_v]
        gwin = prev
    grads = []
    for gwl, gbl in zip(gw, gb):
        grads.append(gwl)
        grads.append(gbl)
    return total, grads


def loss_multi_step(model: FlowMapModel, bursts) -> float:
    """Mean over rollout steps of the batch-mean squared error (summed
    over QoI components) between the rollout and the burst tails, in
    normalized QoI space.  With one rollout step this is exactly the
    one-step loss."""
    entries, params, rollout_steps = _stack_bursts(model, bursts)
    loss, _ = _loss_and_grads(model, entries, params, rollout_steps, want_grads=False)
    return loss


def backward(model: FlowMapModel, bursts) -> list[np.ndarray]:
    """Gradient of loss_multi_step w.r.t. every weight and bias, in
    model.parameters() order, via exact backpropagation through the
    rollout."""
    entries, params, rollout_steps = _stack_bursts(model, bursts)
    _, grads = _loss_and_grads(model, entries, params, rollout_steps, want_grads=True)
    return grads


@dataclass
class AdamState:
    """Adam first/second moment accumulators for one parameter list."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int
    beta1: float
    beta2: float
    eps: float

    @staticmethod
    def create(params, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return AdamState(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            t=0,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def adam_step(state: AdamState, params, grads, lr: float) -> list[np.ndarray]:
    """One bias-corrected Adam update; returns the new parameter values
    and advances the state in place."""
    if len(grads) != len(state.m) or len(params) != len(state.m):
        raise ConfigurationError("optimizer state does not match parameter count")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    mhat_fix = 1.0 - b1**state.t
    vhat_fix = 1.0 - b2**state.t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        mhat = state.m[i] / mhat_fix
        vhat = state.v[i] / vhat_fix
        out.append(p - lr * mhat / (np.sqrt(vhat) + state.eps))
    return out


def cyclic_lr(iteration: int, cfg: TrainConfig) -> float:
    """Decaying triangular learning-rate wave: starts at lr_base, peaks
    at lr_max after lr_half_cycle iterations, returns to lr_base after
    two, with the swing scaled by lr_decay**iteration throughout."""
    if iteration < 0:
        raise ConfigurationError(f"iteration must be >= 0, got {iteration}")
    phase = (iteration / cfg.lr_half_cycle) % 2.0
    tri = 1.0 - abs(phase - 1.0)
    return cfg.lr_base + (cfg.lr_max - cfg.lr_base) * tri * cfg.lr_decay**iteration


def train(
    model: FlowMapModel, dataset: BurstDataset, cfg: TrainConfig
) -> tuple[FlowMapModel, list[float]]:
    """Fit the flow map to a burst dataset.

    Normalization is fit from the dataset first.  Each epoch shuffles the
    burst order with a seeded generator and sweeps minibatches, applying
    one Adam step per batch at the cyclic learning rate.  Returns the
    trained model and the mean batch loss per epoch.  With epochs=0 only
    the normalization is fit.  Training may use fewer rollout steps than
    the dataset provides (the burst tails are truncated); more is an
    error.  With average_tail > 0 the returned weights are the mean of
    the end-of-epoch iterates over the final average_tail epochs.
    """
    if (
        dataset.qoi_dim != model.qoi_dim
        or dataset.param_dim != model.param_dim
        or dataset.memory_steps != model.memory_steps
    ):
        raise ConfigurationError(
            f"dataset dims (qoi {dataset.qoi_dim}, params {dataset.param_dim}, "
            f"memory {dataset.memory_steps}) do not match model "
            f"(qoi {model.qoi_dim}, params {model.param_dim}, "
            f"memory {model.memory_steps})"
        )
    if cfg.rollout_steps > dataset.rollout_steps:
        raise ConfigurationError(
            f"config rollout_steps {cfg.rollout_steps} exceeds the "
            f"{dataset.rollout_steps} provided by the dataset"
        )
    problems = validate_dataset(dataset)
    if problems:
        raise DataError("dataset inconsistent:\n  " + "\n  ".join(problems))

    model = fit_normalization(model, dataset)
    history: list[float] = []
    if cfg.epochs == 0:
        return model, history

    entries, param_arr = dataset.stacked()
    keep = model.window_len + cfg.rollout_steps
    entries = entries[:, :keep]
    n_data = entries.shape[0]
    params = [np.array(p) for p in model.parameters()]
    weights_n = len(model.weights)
    opt = AdamState.create(params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    iteration = 0
    current = model
    tail_from = cfg.epochs - min(cfg.average_tail, cfg.epochs)
    tail_sums = None
    tail_count = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_data)
        batch_losses = []
        for start in range(0, n_data, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            noise = None
            if cfg.window_noise > 0:
                noise = rng.normal(
                    0.0,
                    cfg.window_noise,
                    size=(idx.shape[0], model.window_len * model.qoi_dim),
                )
            loss, grads = _loss_and_grads(
                current, entries[idx], param_arr[idx], cfg.rollout_steps, True, noise
            )
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"training diverged: non-finite loss at epoch {epoch}, "
                    f"batch {start // cfg.batch_size}, lr {cyclic_lr(iteration, cfg):.6e}"
                )
            lr = cyclic_lr(iteration, cfg)
            params = adam_step(opt, params, grads, lr)
            iteration += 1
            batch_losses.append(loss)
            current = FlowMapModel(
                qoi_dim=model.qoi_dim,
                param_dim=model.param_dim,
                memory_steps=model.memory_steps,
                layer_widths=model.layer_widths,
                weights=tuple(params[2 * i] for i in range(weights_n)),
                biases=tuple(params[2 * i + 1] for i in range(weights_n)),
                norm_mean=model.norm_mean,
                norm_scale=model.norm_scale,
            )
        history.append(float(np.mean(batch_losses)))
        if cfg.average_tail > 0 and epoch >= tail_from:
            if tail_sums is None:
                tail_sums = [p.copy() for p in params]
            else:
                for acc, p in zip(tail_sums, params):
                    acc += p
            tail_count += 1
    if tail_count > 0:
        params = [acc / tail_count for acc in tail_sums]
        current = FlowMapModel(
            qoi_dim=model.qoi_dim,
            param_dim=model.param_dim,
            memory_steps=model.memory_steps,
            layer_widths=model.layer_widths,
            weights=tuple(params[2 * i] for i in range(weights_n)),
            biases=tuple(params[2 * i + 1] for i in range(weights_n)),
            norm_mean=model.norm_mean,
            norm_scale=model.norm_scale,
        )
    return current, history


def save_model(model: FlowMapModel, path) -> None:
    """Write a model file: u64 header length, JSON header (version, dims,
    layer widths, activation tag, normalization), then all weights and
    biases as little-endian f64, row-major, biases after each matrix."""
    header = {
        "version": _MODEL_VERSION,
        "qoi_dim": model.qoi_dim,
        "param_dim": model.param_dim,
        "memory_steps": model.memory_steps,
        "layer_widths": list(model.layer_widths),
        "activation": "tanh",
        "norm_mean": [float(v) for v in model.norm_mean],
        "norm_scale": [float(v) for v in model.norm_scale],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_U64.pack(len(blob)))
        f.write(blob)
        for w, b in zip(model.weights, model.biases):
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path) -> FlowMapModel:
    """Read a model file; round trips are bit-exact."""
    with open(path, "rb") as f:
        head = f.read(_U64.size)
        if len(head) != _U64.size:
            raise DataError(f"{path}: truncated file: missing header length")
        (hlen,) = _U64.unpack(head)
        blob = f.read(hlen)
        if len(blob) != hlen:
            raise DataError(
                f"{path}: truncated file: header declares {hlen} bytes, "
                f"found {len(blob)}"
            )
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise DataError(f"{path}: corrupt model header: {e}") from e
        version = header.get("version")
        if version != _MODEL_VERSION:
            raise DataError(
                f"{path}: unsupported model format version {version} "
                f"(supported: {_MODEL_VERSION})"
            )
        if header.get("activation") != "tanh":
            raise DataError(
                f"{path}: unsupported activation {header.get('activation')!r}"
            )
        try:
            widths = tuple(int(w) for w in header["layer_widths"])
            qoi_dim = int(header["qoi_dim"])
            param_dim = int(header["param_dim"])
            memory_steps = int(header["memory_steps"])
            norm_mean = np.asarray(header["norm_mean"], dtype=np.float64)
            norm_scale = np.asarray(header["norm_scale"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as e:
            raise DataError(f"{path}: corrupt model header: {e}") from e
        payload = f.read()
    expected = sum(
        (o * i + o) * 8 for i, o in zip(widths[:-1], widths[1:])
    )
    if len(payload) != expected:
        raise DataError(
            f"{path}: size inconsistency: widths {widths} need {expected} "
            f"payload bytes, found {len(payload)}"
        )
    vals = np.frombuffer(payload, dtype="<f8")
    weights, biases = [], []
    pos = 0
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        weights.append(vals[pos : pos + fan_out * fan_in].reshape(fan_out, fan_in))
        pos += fan_out * fan_in
        biases.append(vals[pos : pos + fan_out])
        pos += fan_out
    try:
        return FlowMapModel(
            qoi_dim=qoi_dim,
            param_dim=param_dim,
            memory_steps=memory_steps,
            layer_widths=widths,
            weights=tuple(weights),
            biases=tuple(biases),
            norm_mean=norm_mean,
            norm_scale=norm_scale,
        )
    except ConfigurationError as e:
        raise DataError(f"{path}: model header inconsistent with payload: {e}") from e
