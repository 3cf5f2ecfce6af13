"""Minimal feedforward network in numpy: dense + batch-norm layers, sigmoid
cross-entropy, backpropagation and Adam.

Everything runs in float64. Dense weights are stored (out, in) and applied
as ``x @ W.T + b``.
"""

import copy
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, ParameterError, StateError
from .features import feature_width
from .modem import get_scheme
from .numerics import SeededRng

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
CLAMP_EPS = 1e-12
INFER_BLOCK = 256
ACTIVATIONS = ("relu", "sigmoid", "none")
_SIGMOID_LO = np.finfo(np.float64).tiny
_SIGMOID_HI = np.nextafter(1.0, 0.0)


def sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    # keep outputs strictly inside (0, 1) even when exp saturates
    return np.clip(out, _SIGMOID_LO, _SIGMOID_HI, out=out)


class Dense:
    kind = "dense"

    def __init__(self, weights, biases, activation="relu"):
        if activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {activation!r}")
        self.weights = np.ascontiguousarray(weights, dtype=np.float64)
        self.biases = np.ascontiguousarray(biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ParameterError(
                f"inconsistent dense shapes {self.weights.shape} / {self.biases.shape}")
        self.activation = activation

    @property
    def in_width(self):
        return self.weights.shape[1]

    @property
    def out_width(self):
        return self.weights.shape[0]

    def params(self):
        return {"weights": self.weights, "biases": self.biases}

    def forward(self, x, train=False):
        z = x @ self.weights.T + self.biases
        if self.activation == "relu":
            a = np.maximum(z, 0.0)
        elif self.activation == "sigmoid":
            a = sigmoid(z)
        else:
            a = z
        return a, ((x, z) if train else None)

    def backward(self, dout, cache, pre_activation=False):
        """Gradient step through the layer.

        ``dout`` is dL/da, or dL/dz when ``pre_activation`` is set (used for
        the fused sigmoid + cross-entropy output).
        """
        x, z = cache
        if pre_activation or self.activation == "none":
            dz = dout
        elif self.activation == "relu":
            dz = dout * (z > 0)
        else:
            s = sigmoid(z)
            dz = dout * s * (1.0 - s)
        grads = {"weights": dz.T @ x, "biases": dz.sum(axis=0)}
        return dz @ self.weights, grads


class BatchNorm:
    kind = "batchnorm"

    def __init__(self, features, epsilon=1e-5, momentum=0.99, gamma=None, beta=None,
                 running_mean=None, running_var=None):
        if epsilon <= 0 or not 0 < momentum < 1:
            raise ParameterError("batch norm needs epsilon > 0 and momentum in (0, 1)")
        self.epsilon = float(epsilon)
        self.momentum = float(momentum)
        self.gamma = np.ones(features) if gamma is None else np.array(gamma, dtype=np.float64)
        self.beta = np.zeros(features) if beta is None else np.array(beta, dtype=np.float64)
        self.running_mean = (np.zeros(features) if running_mean is None
                             else np.array(running_mean, dtype=np.float64))
        self.running_var = (np.ones(features) if running_var is None
                            else np.array(running_var, dtype=np.float64))
        shapes = {a.shape for a in (self.gamma, self.beta, self.running_mean, self.running_var)}
        if shapes != {(features,)}:
            raise ParameterError("batch norm vectors must all have length `features`")
        if np.any(self.running_var < 0):
            raise ParameterError("running variance must be non-negative")

    @property
    def in_width(self):
        return self.gamma.shape[0]

    out_width = in_width

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def forward(self, x, train=False):
        if train:
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            m = self.momentum
            self.running_mean *= m
            self.running_mean += (1 - m) * mean
            self.running_var *= m
            self.running_var += (1 - m) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        x_norm = (x - mean) * inv_std
        out = self.gamma * x_norm + self.beta
        return out, ((x_norm, inv_std) if train else None)

    def backward(self, dout, cache):
        x_norm, inv_std = cache
        n = dout.shape[0]
        grads = {"gamma": np.sum(dout * x_norm, axis=0), "beta": dout.sum(axis=0)}
        dx_norm = dout * self.gamma
        dx = (inv_std / n) * (
            n * dx_norm - dx_norm.sum(axis=0) - x_norm * np.sum(dx_norm * x_norm, axis=0)
        )
        return dx, grads


@dataclass
class NetworkModel:
    layers: list
    n_t: int = None
    n_r: int = None
    scheme: str = None

    def __post_init__(self):
        if not self.layers:
            raise ParameterError("a network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_width != nxt.in_width:
                raise ParameterError(
                    f"layer widths do not chain: {prev.out_width} -> {nxt.in_width}")
        last = self.layers[-1]
        if not isinstance(last, Dense) or last.activation != "sigmoid":
            raise ParameterError("the output layer must be a sigmoid dense layer")

    @property
    def input_width(self):
        return self.layers[0].in_width

    @property
    def output_width(self):
        return self.layers[-1].out_width

    def n_parameters(self, include_running=True):
        total = 0
        for layer in self.layers:
            total += sum(p.size for p in layer.params().values())
            if include_running and isinstance(layer, BatchNorm):
                total += layer.running_mean.size + layer.running_var.size
        return total


@dataclass
class ForwardCache:
    layer_caches: list
    output: np.ndarray


def forward(model, batch, mode="infer"):
    """Run the stack. Returns ``(output, cache)``; ``cache`` is None in infer mode.

    Train mode normalizes with batch statistics, updates the running
    statistics and needs at least 2 rows.
    """
    if mode not in ("train", "infer"):
        raise ParameterError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_width:
        raise ParameterError(f"batch shape {x.shape} does not match input width {model.input_width}")
    train = mode == "train"
    if train and x.shape[0] < 2:
        raise ParameterError("train mode needs a batch of at least 2 rows")
    if not train:
        return _infer_blocks(model, x), None
    caches = []
    for layer in model.layers:
        x, c = layer.forward(x, train=True)
        caches.append(c)
    return x, ForwardCache(caches, x)


def _infer_blocks(model, x):
    # BLAS results for a row can depend on the number of rows in the call;
    # fixed-size padded blocks make each output row a function of its input row only
    n = len(x)
    out = np.empty((n, model.output_width))
    block = np.zeros((INFER_BLOCK, x.shape[1]))
    for start in range(0, n, INFER_BLOCK):
        rows = x[start:start + INFER_BLOCK]
        if len(rows) == INFER_BLOCK:
            h = rows
        else:
            block[:len(rows)] = rows
            block[len(rows):] = 0.0
            h = block
        for layer in model.layers:
            h, _ = layer.forward(h, train=False)
        out[start:start + len(rows)] = h[:len(rows)]
    return out


def predict(model, batch, batch_size=16384):
    """Infer-mode outputs, evaluated in chunks to bound memory."""
    batch = np.asarray(batch, dtype=np.float64)
    if len(batch) <= batch_size:
        return forward(model, batch, "infer")[0]
    return np.concatenate([forward(model, batch[i:i + batch_size], "infer")[0]
                           for i in range(0, len(batch), batch_size)])


def cross_entropy_loss(pred, target):
    """Mean binary cross-entropy, predictions clamped to [1e-12, 1 - 1e-12]."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ParameterError(f"shape mismatch {pred.shape} vs {target.shape}")
    p = np.clip(pred, CLAMP_EPS, 1.0 - CLAMP_EPS)
    ce = target * np.log(p) + (1.0 - target) * np.log1p(-p)
    return float(max(-ce.mean(), 0.0))


def backward(model, cache, target):
    """Gradients of the cross-entropy loss for each layer's parameters.

    Returns a list aligned with ``model.layers`` of ``{name: grad}`` dicts.
    The output layer uses dL/dz = (pred - target) / (B K).
    """
    if cache is None or not isinstance(cache, ForwardCache):
        raise StateError("backward needs the cache from a train-mode forward pass")
    target = np.asarray(target, dtype=np.float64)
    if target.shape != cache.output.shape:
        raise ParameterError(f"target shape {target.shape} != output {cache.output.shape}")
    grads = [None] * len(model.layers)
    d = (cache.output - target) / target.size
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        if isinstance(layer, Dense):
            d, grads[i] = layer.backward(d, cache.layer_caches[i],
                                         pre_activation=(i == len(model.layers) - 1))
        else:
            d, grads[i] = layer.backward(d, cache.layer_caches[i])
    return grads


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    t: int = 0
    first_moment: list = None
    second_moment: list = None


def adam_step(state, params, grads):
    """One bias-corrected Adam update, applied in place.

    ``params`` and ``grads`` are parallel lists of ``{name: array}`` dicts.
    """
    if len(params) != len(grads):
        raise ParameterError("params and grads must have the same length")
    if state.first_moment is None:
        state.first_moment = [{k: np.zeros_like(v) for k, v in p.items()} for p in params]
        state.second_moment = [{k: np.zeros_like(v) for k, v in p.items()} for p in params]
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.keys() != g.keys():
            raise ParameterError("parameter and gradient names differ")
        for k in p:
            if p[k].shape != g[k].shape:
                raise ParameterError(f"shape mismatch for {k}: {p[k].shape} vs {g[k].shape}")
            m[k] *= state.beta1
            m[k] += (1.0 - state.beta1) * g[k]
            v[k] *= state.beta2
            v[k] += (1.0 - state.beta2) * g[k] ** 2
            p[k] -= state.lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + state.eps_hat)
    return params, state


@dataclass
class TrainingConfig:
    batch_size: int = 256
    max_epochs: int = 100
    lr: float = 1e-3
    early_stop_patience: int = 10
    seed: int = 0
    training_snr_db: float = 8.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8

    def __post_init__(self):
        for name in ("batch_size", "max_epochs", "early_stop_patience"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be positive")
        if self.batch_size < 2:
            raise ParameterError("batch_size must be at least 2 for batch norm")
        if self.lr <= 0:
            raise ParameterError("lr must be positive")


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = None

    @property
    def best_val_loss(self):
        return min(self.val_loss) if self.val_loss else math.nan

    def to_csv(self):
        lines = ["epoch,train_loss,val_loss"]
        for i, (tr, va) in enumerate(zip(self.train_loss, self.val_loss), start=1):
            lines.append(f"{i},{tr!r},{va!r}")
        return "\n".join(lines) + "\n"


def _unpack(dataset):
    if hasattr(dataset, "features"):
        x, y = dataset.features, dataset.bits
    else:
        x, y = dataset
    return np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)


def evaluate_loss(model, dataset, batch_size=16384):
    x, y = _unpack(dataset)
    return cross_entropy_loss(predict(model, x, batch_size), y)


def train(model, train_set, val_set, config=None):
    """Mini-batch Adam with per-epoch shuffling and early stopping.

    The returned model carries the parameters (and running statistics) of
    the epoch with the lowest validation loss. The input model is left as
    it was at the last epoch.
    """
    config = config or TrainingConfig()
    x, y = _unpack(train_set)
    vx, vy = _unpack(val_set)
    if len(x) == 0 or len(vx) == 0:
        raise ParameterError("training and validation sets must be non-empty")
    if x.shape[1] != model.input_width or vx.shape[1] != model.input_width:
        raise ParameterError(
            f"dataset width {x.shape[1]} does not match model input {model.input_width}")
    if len(x) < 2:
        raise ParameterError("need at least 2 training samples")

    rng = SeededRng(config.seed)
    state = AdamState(config.lr, config.beta1, config.beta2, config.eps_hat)
    params = [layer.params() for layer in model.layers]
    history = History()
    best_model, best_loss, stale = None, math.inf, 0

    for epoch in range(config.max_epochs):
        order = rng.permutation(len(x))
        total, seen = 0.0, 0
        for start in range(0, len(x), config.batch_size):
            idx = order[start:start + config.batch_size]
            if len(idx) < 2:
                continue
            out, cache = forward(model, x[idx], "train")
            total += cross_entropy_loss(out, y[idx]) * len(idx)
            seen += len(idx)
            adam_step(state, params, backward(model, cache, y[idx]))
        history.train_loss.append(total / seen)
        val = evaluate_loss(model, (vx, vy))
        history.val_loss.append(val)
        log.info("epoch %d: train %.6f val %.6f", epoch + 1, history.train_loss[-1], val)
        if val < best_loss:
            best_loss, best_model, stale = val, copy.deepcopy(model), 0
            history.best_epoch = epoch + 1
        else:
            stale += 1
            if stale >= config.early_stop_patience:
                break
    return best_model, history


def _uniform(rng, shape, limit):
    return (2.0 * rng.uniform(shape) - 1.0) * limit


def build_mlp(input_width, hidden, output_width, batchnorm_after=(0,), seed=0,
              bn_epsilon=1e-5, bn_momentum=0.99, **meta):
    """Dense ReLU stack with a sigmoid output.

    ReLU layers use He-uniform init, the sigmoid layer Xavier-uniform;
    biases start at zero. A batch-norm layer follows each hidden layer
    whose index is in ``batchnorm_after``.
    """
    rng = SeededRng(seed)
    layers = []
    width = input_width
    for i, h in enumerate(hidden):
        w = _uniform(rng, (h, width), math.sqrt(6.0 / width))
        layers.append(Dense(w, np.zeros(h), "relu"))
        if i in batchnorm_after:
            layers.append(BatchNorm(h, bn_epsilon, bn_momentum))
        width = h
    w = _uniform(rng, (output_width, width), math.sqrt(6.0 / (width + output_width)))
    layers.append(Dense(w, np.zeros(output_width), "sigmoid"))
    return NetworkModel(layers, **meta)


DNN_HIDDEN = (512, 256, 128, 64)


def build_dnn(n_t, n_r, scheme, seed=0):
    """The 512-BN-256-128-64 ReLU detector with an M*N_t-way sigmoid output."""
    scheme = get_scheme(scheme)
    if n_t < 1 or n_r < 1 or int(n_t) != n_t or int(n_r) != n_r:
        raise ParameterError(f"unsupported dimensions n_t={n_t}, n_r={n_r}")
    return build_mlp(feature_width(n_t, n_r), DNN_HIDDEN, scheme.bits_per_symbol * n_t,
                     batchnorm_after=(0,), seed=seed, n_t=int(n_t), n_r=int(n_r),
                     scheme=scheme.name)


# -- serialization ----------------------------------------------------------

def model_to_dict(model):
    layers = []
    for layer in model.layers:
        if isinstance(layer, Dense):
            layers.append({
                "type": "dense", "in": layer.in_width, "out": layer.out_width,
                "activation": layer.activation,
                "weights": layer.weights.ravel().tolist(),
                "biases": layer.biases.tolist(),
            })
        else:
            layers.append({
                "type": "batchnorm", "features": layer.in_width,
                "epsilon": layer.epsilon, "momentum": layer.momentum,
                "gamma": layer.gamma.tolist(), "beta": layer.beta.tolist(),
                "running_mean": layer.running_mean.tolist(),
                "running_var": layer.running_var.tolist(),
            })
    return {
        "format_version": FORMAT_VERSION,
        "n_t": model.n_t, "n_r": model.n_r, "scheme": model.scheme,
        "input_width": model.input_width, "output_width": model.output_width,
        "layers": layers,
    }


def _vector(spec, key, n):
    v = np.array(spec[key], dtype=np.float64)
    if v.shape != (n,) or not np.all(np.isfinite(v)):
        raise FormatError(f"layer field {key!r} must hold {n} finite numbers")
    return v


def model_from_dict(doc):
    try:
        if doc.get("format_version") != FORMAT_VERSION:
            raise FormatError(f"unsupported model format version {doc.get('format_version')!r}")
        layers = []
        for spec in doc["layers"]:
            if spec["type"] == "dense":
                n_in, n_out = int(spec["in"]), int(spec["out"])
                w = _vector(spec, "weights", n_in * n_out).reshape(n_out, n_in)
                layers.append(Dense(w, _vector(spec, "biases", n_out), spec["activation"]))
            elif spec["type"] == "batchnorm":
                n = int(spec["features"])
                layers.append(BatchNorm(
                    n, spec["epsilon"], spec["momentum"],
                    *(_vector(spec, k, n) for k in ("gamma", "beta", "running_mean", "running_var"))))
            else:
                raise FormatError(f"unknown layer type {spec['type']!r}")
        model = NetworkModel(layers, doc.get("n_t"), doc.get("n_r"), doc.get("scheme"))
    except FormatError:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise FormatError(f"malformed model document: {exc}") from exc
    if model.input_width != doc["input_width"]:
        raise FormatError("header input_width disagrees with the first layer")
    return model


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)
        fh.write("\n")


def load_model(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a valid model file ({exc})") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: expected a JSON object")
    return model_from_dict(doc)
