"""Residual MLP with optional spectral normalization, trained by plain SGD.

Architecture: an input layer h0 = relu(x W_in + b_in), then ``num_blocks``
residual blocks h <- h + relu(h W_k + b_k), then a linear classifier on the
final hidden state. The final hidden activations are the feature embedding
consumed by the density field.

Spectral normalization caps each weight matrix's largest singular value at
``sn_coeff`` using power iteration with persistent vectors: after every SGD
step each weight is rescaled by min(1, coeff / sigma_hat). Combined with the
residual form this bounds the feature map's Lipschitz constant by
coeff * (1 + coeff)^num_blocks.

Everything is float64 numpy; training is single-threaded over minibatches and
bit-deterministic for a fixed config and seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .datasets import LabeledDataset2D

# Relative slack used when tightening sigma toward the coefficient at epoch
# boundaries; keeps sigma_hat <= coeff + 1e-3 for coeff of order one.
_SN_TIGHTEN_TOL = 1e-4


class TrainingDivergedError(RuntimeError):
    """Raised when the loss becomes non-finite (learning rate too high)."""


class CheckpointError(Exception):
    """Raised for unreadable, wrong-magic, or wrong-version checkpoints."""


@dataclass
class PowerIterState:
    """Persistent power-iteration vector for one weight matrix."""

    u: np.ndarray  # unit vector of length weight.shape[1]


@dataclass
class TrainConfig:
    epochs: int = 300
    learning_rate: float = 0.05
    momentum: float = 0.9
    batch_size: int = 128
    seed: int = 0
    sn_enabled: bool = True
    sn_coeff: float = 1.0
    sn_power_iters: int = 1
    hidden_dim: int = 128
    num_blocks: int = 4

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.momentum < 0:
            raise ValueError("momentum must be nonnegative")
        if self.sn_coeff <= 0 or self.sn_power_iters < 1:
            raise ValueError("sn_coeff must be positive and sn_power_iters >= 1")


@dataclass
class SnMlp:
    """Model parameters plus spectral-normalization state.

    ``weights[0]`` maps input -> hidden, ``weights[1:-1]`` are the residual
    block matrices, ``weights[-1]`` is the classifier. Orientation is
    (in, out): forward multiplies x @ W.
    """

    input_dim: int
    hidden_dim: int
    num_blocks: int
    num_classes: int
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    sn_enabled: bool
    sn_coeff: float
    sn_power_iters: int
    power_u: list[PowerIterState] = dataclass_field(default_factory=list)

    @property
    def num_layers(self) -> int:
        return self.num_blocks + 2


def init_model(input_dim: int, num_classes: int, hidden_dim: int = 128,
               num_blocks: int = 4, sn_enabled: bool = True, sn_coeff: float = 1.0,
               sn_power_iters: int = 1, seed: int = 0) -> SnMlp:
    """Seeded scaled-uniform fan-in initialization (U(-1/sqrt(fan_in), ..))."""
    if min(input_dim, hidden_dim, num_blocks, num_classes) < 1:
        raise ValueError("architecture dimensions must be positive")
    rng = np.random.default_rng(seed)
    dims = [(input_dim, hidden_dim)]
    dims += [(hidden_dim, hidden_dim)] * num_blocks
    dims += [(hidden_dim, num_classes)]
    weights, biases, states = [], [], []
    for fan_in, fan_out in dims:
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
        u = rng.normal(size=fan_out)
        states.append(PowerIterState(u=u / np.linalg.norm(u)))
    model = SnMlp(input_dim=input_dim, hidden_dim=hidden_dim, num_blocks=num_blocks,
                  num_classes=num_classes, weights=weights, biases=biases,
                  sn_enabled=sn_enabled, sn_coeff=sn_coeff,
                  sn_power_iters=sn_power_iters, power_u=states)
    if sn_enabled:
        _tighten_sn(model)
    return model


def power_iteration_sigma(weight: np.ndarray, state: PowerIterState,
                          iters: int) -> float:
    """Estimate the largest singular value; updates the state vector in place."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    u = state.u
    v = None
    for _ in range(iters):
        v = weight @ u
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return 0.0
        v /= nv
        u = weight.T @ v
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return 0.0
        u /= nu
    state.u = u
    return float(v @ (weight @ u))


def spectral_normalize(weight: np.ndarray, state: PowerIterState, iters: int,
                       coeff: float) -> np.ndarray:
    """Return weight * min(1, coeff / sigma_hat); zero matrices pass through.

    Layers already inside the budget are untouched, so this is a soft cap,
    not a rescale to exactly coeff.
    """
    if coeff <= 0:
        raise ValueError("coeff must be positive")
    sigma = power_iteration_sigma(weight, state, iters)
    if sigma <= coeff:  # includes the sigma == 0 guard
        return weight.copy()
    return weight * (coeff / sigma)


def _tighten_sn(model: SnMlp, iters: int = 4, max_rounds: int = 50) -> None:
    """Renormalize until sigma_hat <= coeff * (1 + tol) for every weight.

    A single power iteration per step can lag the weights it normalizes;
    repeating the estimate/rescale cycle converges because each rescale
    divides by the current best estimate.
    """
    coeff = model.sn_coeff
    for i, w in enumerate(model.weights):
        st = model.power_u[i]
        for _ in range(max_rounds):
            sigma = power_iteration_sigma(w, st, iters)
            if sigma <= coeff * (1.0 + _SN_TIGHTEN_TOL):
                break
            w = w * (coeff / sigma)
        model.weights[i] = w


def _check_input(model: SnMlp, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValueError(
            f"input must be (B, {model.input_dim}), got shape {np.shape(x)}")
    return x


def _forward_cached(model: SnMlp, x: np.ndarray):
    """Forward pass keeping pre-activations and hidden states for backprop."""
    pre = []
    hidden = []
    a = x @ model.weights[0] + model.biases[0]
    pre.append(a)
    h = np.maximum(a, 0.0)
    hidden.append(h)
    for k in range(1, model.num_blocks + 1):
        a = h @ model.weights[k] + model.biases[k]
        pre.append(a)
        h = h + np.maximum(a, 0.0)
        hidden.append(h)
    logits = h @ model.weights[-1] + model.biases[-1]
    return pre, hidden, logits


def forward(model: SnMlp, x) -> tuple[np.ndarray, np.ndarray]:
    """Map inputs to (features, logits).

    Features are the activations entering the classifier; logits are the
    linear classifier output on them.
    """
    x = _check_input(model, x)
    _, hidden, logits = _forward_cached(model, x)
    return hidden[-1], logits


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def mean_loss(model: SnMlp, x, y) -> float:
    """Mean softmax cross-entropy of the model on (x, y)."""
    x = _check_input(model, x)
    y = np.asarray(y, dtype=np.int64)
    _, logits = forward(model, x)
    logp = _log_softmax(logits)
    return float(-logp[np.arange(x.shape[0]), y].mean())


def loss_and_grads(model: SnMlp, x, y):
    """Mean cross-entropy loss and its gradients w.r.t. every parameter.

    Returns (loss, grad_weights, grad_biases) with lists aligned to
    model.weights / model.biases.
    """
    x = _check_input(model, x)
    y = np.asarray(y, dtype=np.int64)
    n = x.shape[0]
    pre, hidden, logits = _forward_cached(model, x)
    logp = _log_softmax(logits)
    loss = float(-logp[np.arange(n), y].mean())

    dlogits = np.exp(logp)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    grad_w = [np.empty(0)] * model.num_layers
    grad_b = [np.empty(0)] * model.num_layers
    grad_w[-1] = hidden[-1].T @ dlogits
    grad_b[-1] = dlogits.sum(axis=0)
    dh = dlogits @ model.weights[-1].T
    for k in range(model.num_blocks, 0, -1):
        da = dh * (pre[k] > 0.0)
        grad_w[k] = hidden[k - 1].T @ da
        grad_b[k] = da.sum(axis=0)
        dh = dh + da @ model.weights[k].T
    da = dh * (pre[0] > 0.0)
    grad_w[0] = x.T @ da
    grad_b[0] = da.sum(axis=0)
    return loss, grad_w, grad_b


def train(dataset: LabeledDataset2D, config: TrainConfig,
          epoch_callback: Optional[Callable[[int, SnMlp, float], None]] = None
          ) -> tuple[SnMlp, list[float]]:
    """Minibatch SGD with momentum on softmax cross-entropy.

    Spectral normalization (when enabled) is re-applied to every weight
    matrix after each optimizer step and tightened at epoch boundaries.
    Returns the trained model and the per-epoch mean training loss.
    ``epoch_callback(epoch, model, mean_loss)`` runs after each epoch.
    """
    if dataset.n < 1:
        raise ValueError("dataset must be nonempty")
    if dataset.labels.max() >= dataset.num_classes:
        raise ValueError("labels inconsistent with num_classes")
    x = dataset.points
    y = dataset.labels
    model = init_model(input_dim=x.shape[1], num_classes=dataset.num_classes,
                       hidden_dim=config.hidden_dim, num_blocks=config.num_blocks,
                       sn_enabled=config.sn_enabled, sn_coeff=config.sn_coeff,
                       sn_power_iters=config.sn_power_iters, seed=config.seed)
    shuffle_rng = np.random.default_rng(config.seed + 1)
    vel_w = [np.zeros_like(w) for w in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    lr, mom = config.learning_rate, config.momentum
    loss_curve: list[float] = []
    for epoch in range(config.epochs):
        perm = shuffle_rng.permutation(dataset.n)
        loss_sum = 0.0
        for start in range(0, dataset.n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):
                loss, gw, gb = loss_and_grads(model, x[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}; "
                    "the learning rate is likely too high")
            loss_sum += loss * idx.size
            for i in range(model.num_layers):
                vel_w[i] = mom * vel_w[i] + gw[i]
                vel_b[i] = mom * vel_b[i] + gb[i]
                model.weights[i] = model.weights[i] - lr * vel_w[i]
                model.biases[i] = model.biases[i] - lr * vel_b[i]
                if model.sn_enabled:
                    model.weights[i] = spectral_normalize(
                        model.weights[i], model.power_u[i],
                        model.sn_power_iters, model.sn_coeff)
        if model.sn_enabled:
            _tighten_sn(model)
        epoch_loss = loss_sum / dataset.n
        loss_curve.append(epoch_loss)
        if epoch_callback is not None:
            epoch_callback(epoch, model, epoch_loss)
    return model, loss_curve


def lipschitz_probe(model: SnMlp, x_pairs) -> float:
    """Max observed ||f(x1) - f(x2)|| / ||x1 - x2|| over the given pairs."""
    pairs = np.asarray(x_pairs, dtype=np.float64)
    if pairs.ndim != 3 or pairs.shape[1] != 2 or pairs.shape[2] != model.input_dim:
        raise ValueError(
            f"x_pairs must be (P, 2, {model.input_dim}), got {pairs.shape}")
    a, b = pairs[:, 0, :], pairs[:, 1, :]
    dx = np.linalg.norm(a - b, axis=1)
    if np.any(dx == 0.0):
        raise ValueError("pairs must contain distinct points")
    fa, _ = forward(model, a)
    fb, _ = forward(model, b)
    return float((np.linalg.norm(fa - fb, axis=1) / dx).max())


def spectral_norms(model: SnMlp, iters: int = 50) -> list[float]:
    """Power-iteration sigma_hat for each weight matrix (read-only probe)."""
    out = []
    for w, st in zip(model.weights, model.power_u):
        probe = PowerIterState(u=st.u.copy())
        out.append(power_iteration_sigma(w, probe, iters))
    return out


CKPT_MAGIC = b"SNML"
CKPT_VERSION = 1


def _model_arrays(model: SnMlp) -> list[np.ndarray]:
    arrays = []
    for w, b in zip(model.weights, model.biases):
        arrays.append(w)
        arrays.append(b[None, :])
    for st in model.power_u:
        arrays.append(st.u[None, :])
    return arrays


def save_checkpoint(model: SnMlp, path) -> None:
    """Little-endian binary checkpoint: magic, version, architecture, arrays."""
    head = struct.pack(
        "<4sIIIIIIId", CKPT_MAGIC, CKPT_VERSION, model.input_dim, model.hidden_dim,
        model.num_blocks, model.num_classes, int(model.sn_enabled),
        model.sn_power_iters, model.sn_coeff)
    chunks = [head]
    for arr in _model_arrays(model):
        chunks.append(struct.pack("<QQ", arr.shape[0], arr.shape[1]))
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> SnMlp:
    """Read a checkpoint, rejecting wrong magic, version, or layout."""
    raw = Path(path).read_bytes()
    head_size = struct.calcsize("<4sIIIIIIId")
    if len(raw) < head_size:
        raise CheckpointError(f"{path}: truncated header")
    (magic, version, input_dim, hidden_dim, num_blocks, num_classes,
     sn_enabled, sn_power_iters, sn_coeff) = struct.unpack_from("<4sIIIIIIId", raw)
    if magic != CKPT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    offset = head_size
    arrays = []
    while offset < len(raw):
        if offset + 16 > len(raw):
            raise CheckpointError(f"{path}: truncated array header")
        rows, cols = struct.unpack_from("<QQ", raw, offset)
        offset += 16
        nbytes = rows * cols * 8
        if offset + nbytes > len(raw):
            raise CheckpointError(f"{path}: truncated array payload")
        arrays.append(np.frombuffer(raw, dtype="<f8", count=rows * cols,
                                    offset=offset).reshape(rows, cols).copy())
        offset += nbytes
    num_layers = num_blocks + 2
    if len(arrays) != 3 * num_layers:
        raise CheckpointError(
            f"{path}: expected {3 * num_layers} arrays, found {len(arrays)}")
    weights = [arrays[2 * i] for i in range(num_layers)]
    biases = [arrays[2 * i + 1].ravel() for i in range(num_layers)]
    states = [PowerIterState(u=arrays[2 * num_layers + i].ravel())
              for i in range(num_layers)]
    model = SnMlp(input_dim=input_dim, hidden_dim=hidden_dim, num_blocks=num_blocks,
                  num_classes=num_classes, weights=weights, biases=biases,
                  sn_enabled=bool(sn_enabled), sn_coeff=sn_coeff,
                  sn_power_iters=sn_power_iters, power_u=states)
    expected_shapes = [(input_dim, hidden_dim)]
    expected_shapes += [(hidden_dim, hidden_dim)] * num_blocks
    expected_shapes += [(hidden_dim, num_classes)]
    for w, shape in zip(weights, expected_shapes):
        if w.shape != shape:
            raise CheckpointError(f"{path}: weight shape {w.shape} != {shape}")
    return model
