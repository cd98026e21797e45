"""
A small numpy multilayer perceptron for fingerprint classification.

Sigmoid hidden layers, inverted dropout, softmax output heads, categorical
cross-entropy and mini-batch updates (Adam by default, plain SGD on request).
A model carries a shared trunk of hidden layers plus one or more named output
heads, so the same code serves single-device training, output-layer
fine-tuning and multitask training.
"""

from __future__ import annotations

import copy
import json
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from .domain import Dataset, Grid

FORMAT_NAME = "hetloc-mlp"
FORMAT_VERSION = 1
DEFAULT_HEAD = "default"

URBAN_LAYERS = (25, 256, 128, 64, 20)
RURAL_LAYERS = (16, 256, 128, 64, 675)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MlpConfig:
    layer_sizes: tuple[int, ...] = URBAN_LAYERS
    learning_rate: float = 0.005
    batch_size: int = 40
    dropout_rate: float = 0.10
    epochs: int = 500
    hidden_activation: str = "sigmoid"
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3:
            raise ConfigError("need input, at least one hidden and an output layer")
        if any(s < 1 for s in sizes):
            raise ConfigError(f"layer sizes must be positive: {sizes}")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError("dropout_rate must be in [0, 1)")
        if self.hidden_activation != "sigmoid":
            raise ConfigError("only sigmoid hidden activations are supported")
        if self.batch_size < 1 or self.learning_rate <= 0 or self.epochs < 0:
            raise ConfigError("batch_size, learning_rate and epochs must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")

    @property
    def input_width(self) -> int:
        return self.layer_sizes[0]

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return self.layer_sizes[1:-1]

    @property
    def output_width(self) -> int:
        return self.layer_sizes[-1]


@dataclass
class Head:
    W: np.ndarray
    b: np.ndarray
    trainable: bool = True

    @property
    def K(self) -> int:
        return self.W.shape[1]


@dataclass
class MlpModel:
    """Trunk of sigmoid layers plus named softmax heads.

    ``input_shift``/``input_scale`` standardise features before the first
    layer; they are fixed preprocessing, not trained parameters.
    """

    config: MlpConfig
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    heads: dict[str, Head]
    trainable: list[bool]
    input_shift: np.ndarray = None
    input_scale: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        d = self.config.input_width
        if self.input_shift is None:
            self.input_shift = np.zeros(d)
        if self.input_scale is None:
            self.input_scale = np.ones(d)

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def last_hidden(self) -> int:
        return self.weights[-1].shape[1]

    def head(self, name: str) -> Head:
        try:
            return self.heads[name]
        except KeyError:
            raise KeyError(f"no head {name!r}; registered heads: "
                           f"{sorted(self.heads)}") from None

    def add_head(self, name: str, K: int | None = None, seed: int | None = None,
                 copy_from: str | None = None) -> Head:
        if copy_from is not None:
            src = self.head(copy_from)
            h = Head(src.W.copy(), src.b.copy())
        else:
            K = self.config.output_width if K is None else K
            seed = self.config.seed if seed is None else seed
            rng = np.random.default_rng(
                np.random.SeedSequence(seed, spawn_key=(2, zlib.crc32(name.encode()))))
            h = Head(_glorot(rng, self.last_hidden, K), np.zeros(K))
        self.heads[name] = h
        return h

    def freeze_trunk(self):
        self.trainable = [False] * self.depth

    def set_trainable(self, flag: bool, heads: bool = True):
        self.trainable = [flag] * self.depth
        if heads:
            for h in self.heads.values():
                h.trainable = flag

    def fit_input_scaling(self, X, heard_only: bool = False):
        """Standardise each input column with statistics from ``X``.

        With ``heard_only`` the mean and spread come from nonzero entries, so
        the unheard sentinel does not swamp the spread of real readings.
        """
        X = np.asarray(X, dtype=float)
        if heard_only:
            heard = X != 0
            n = heard.sum(axis=0)
            safe = np.maximum(n, 1)
            mean = np.where(n > 0, (X * heard).sum(axis=0) / safe, 0.0)
            var = np.where(n > 0, (((X - mean) * heard) ** 2).sum(axis=0) / safe, 0.0)
        else:
            mean, var = X.mean(axis=0), X.var(axis=0)
        sd = np.sqrt(var)
        self.input_shift = mean
        self.input_scale = np.where(sd > 1e-9, sd, 1.0)

    def copy(self) -> MlpModel:
        return copy.deepcopy(self)

    def parameters(self):
        """Yield (name, array) for every trainable-capable parameter array."""
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            yield f"hidden{l}.W", W
            yield f"hidden{l}.b", b
        for name, h in self.heads.items():
            yield f"head:{name}.W", h.W
            yield f"head:{name}.b", h.b


def _glorot(rng, fan_in, fan_out):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


def init_model(config: MlpConfig) -> MlpModel:
    """Glorot-uniform weights, zero biases, one ``default`` head."""
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0,)))
    sizes = config.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-2], sizes[1:-1]):
        weights.append(_glorot(rng, fan_in, fan_out))
        biases.append(np.zeros(fan_out))
    head = Head(_glorot(rng, sizes[-2], sizes[-1]), np.zeros(sizes[-1]))
    return MlpModel(config, weights, biases, {DEFAULT_HEAD: head},
                    [True] * len(weights))


def sigmoid(z):
    # split branches keep exp() from overflowing
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs, labels) -> float:
    p = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(p, 1e-12)).mean())


def forward(model: MlpModel, x, head: str = DEFAULT_HEAD, train_mode: bool = False,
            rng: np.random.Generator | None = None, dropout_rate: float | None = None):
    """Class probabilities for a vector or an (n, d) batch.

    Returns ``(probs, cache)``; ``cache`` feeds :func:`backward`. In train mode
    hidden activations go through inverted dropout, which needs ``rng``.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.shape[1] != model.config.input_width:
        raise ValueError(f"input width {X.shape[1]} != model input "
                         f"{model.config.input_width}")
    h = model.head(head)
    p = model.config.dropout_rate if dropout_rate is None else dropout_rate
    a = (X - model.input_shift) / model.input_scale
    acts, sigs, masks = [a], [], []
    for W, b in zip(model.weights, model.biases):
        a = sigmoid(a @ W + b)
        sigs.append(a)
        mask = None
        if train_mode and p > 0:
            if rng is None:
                raise ValueError("train_mode dropout needs an rng")
            mask = (rng.random(a.shape) >= p) / (1.0 - p)
            a = a * mask
        acts.append(a)
        masks.append(mask)
    probs = softmax(a @ h.W + h.b)
    cache = {"acts": acts, "sigs": sigs, "masks": masks, "head": head, "probs": probs}
    return (probs[0] if single else probs), cache


def backward(model: MlpModel, cache, labels):
    """Gradients of mean cross-entropy w.r.t. every parameter on the path.

    Returns ``(trunk_grads, head_grad)`` with trunk_grads a list of (dW, db).
    """
    acts, masks, probs = cache["acts"], cache["masks"], cache["probs"]
    labels = np.atleast_1d(np.asarray(labels))
    n = probs.shape[0]
    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n
    h = model.heads[cache["head"]]
    head_grad = (acts[-1].T @ delta, delta.sum(axis=0))
    da = delta @ h.W.T
    grads = [None] * model.depth
    for l in range(model.depth - 1, -1, -1):
        s = cache["sigs"][l]
        if masks[l] is not None:
            da = da * masks[l]
        dz = da * s * (1.0 - s)
        grads[l] = (acts[l].T @ dz, dz.sum(axis=0))
        if l:
            da = dz @ model.weights[l].T
    return grads, head_grad


class _Sgd:
    def __init__(self, lr):
        self.lr = lr

    def step(self, key, param, grad):
        param -= self.lr * grad


class _Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.state = {}

    def step(self, key, param, grad):
        m, v, t = self.state.get(key, (np.zeros_like(param), np.zeros_like(param), 0))
        t += 1
        m = self.b1 * m + (1 - self.b1) * grad
        v = self.b2 * v + (1 - self.b2) * grad * grad
        self.state[key] = (m, v, t)
        mhat = m / (1 - self.b1 ** t)
        vhat = v / (1 - self.b2 ** t)
        param -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


OPTIMIZERS = {"sgd": _Sgd, "adam": _Adam}


def train_rng(model: MlpModel, stream: int = 1) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(model.config.seed, spawn_key=(1, stream)))


def fit_tasks(model: MlpModel, tasks, *, epochs: int | None = None,
              learning_rate: float | None = None, batch_size: int | None = None,
              rng: np.random.Generator | None = None, dropout: bool = True,
              shuffle: bool = True, on_step=None) -> list[float]:
    """Round-robin mini-batch training over one or more (head, X, y) tasks.

    Each step takes the next batch of the next task in rotation and updates the
    trainable trunk layers plus that task's head. An epoch ends once every
    task has been consumed fully at least once; tasks that run out earlier
    reshuffle and keep contributing. With a single task this is ordinary
    mini-batch training. Returns the mean loss of each epoch.

    Every task draws its shuffles and dropout masks from its own copy of the
    starting generator, so tasks of equal size see the same batch order.
    ``on_step(model, head)`` is called after every update.
    """
    cfg = model.config
    epochs = cfg.epochs if epochs is None else epochs
    lr = cfg.learning_rate if learning_rate is None else learning_rate
    bs = cfg.batch_size if batch_size is None else batch_size
    rng = train_rng(model) if rng is None else rng
    p = cfg.dropout_rate if dropout else 0.0
    opt = OPTIMIZERS[cfg.optimizer](lr)
    tasks = [(h, np.asarray(X, dtype=float), np.asarray(y, dtype=np.int64))
             for h, X, y in tasks]
    for h, X, y in tasks:
        if len(y) == 0:
            raise ValueError(f"task {h!r} has no samples")
        model.head(h)

    rngs = [copy.deepcopy(rng) for _ in tasks]

    def order(t):
        n = len(tasks[t][2])
        return rngs[t].permutation(n) if shuffle else np.arange(n)

    history = []
    for _ in range(epochs):
        perms = [order(t) for t in range(len(tasks))]
        cursors = [0] * len(tasks)
        done = [False] * len(tasks)
        total, count = 0.0, 0
        t = 0
        while not all(done):
            head, X, y = tasks[t]
            if cursors[t] >= len(y):
                perms[t] = order(t)
                cursors[t] = 0
            idx = perms[t][cursors[t]:cursors[t] + bs]
            cursors[t] += len(idx)
            if cursors[t] >= len(y):
                done[t] = True
            probs, cache = forward(model, X[idx], head, train_mode=p > 0, rng=rngs[t],
                                   dropout_rate=p)
            total += cross_entropy(probs, y[idx]) * len(idx)
            count += len(idx)
            grads, (gW, gb) = backward(model, cache, y[idx])
            for l, (dW, db) in enumerate(grads):
                if model.trainable[l]:
                    opt.step(("W", l), model.weights[l], dW)
                    opt.step(("b", l), model.biases[l], db)
            hd = model.heads[head]
            if hd.trainable:
                opt.step(("hW", head), hd.W, gW)
                opt.step(("hb", head), hd.b, gb)
            if on_step is not None:
                on_step(model, head)
            t = (t + 1) % len(tasks)
        history.append(total / count)
    return history


def train(model: MlpModel, data: Dataset, head: str = DEFAULT_HEAD, **kwargs) -> list[float]:
    """Train ``head`` (and the trainable trunk) on ``data``; per-epoch mean loss."""
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    if data.width != model.config.input_width:
        raise ValueError(f"dataset width {data.width} != model input "
                         f"{model.config.input_width}")
    if data.labels.max() >= model.head(head).K:
        raise ValueError("labels exceed the head's output width")
    return fit_tasks(model, [(head, data.X, data.labels)], **kwargs)


def loss_at(model: MlpModel, x, label, head: str = DEFAULT_HEAD) -> float:
    probs, _ = forward(model, np.atleast_2d(x), head)
    return cross_entropy(probs, np.atleast_1d(label))


def gradient_check(model: MlpModel, x, label, head: str = DEFAULT_HEAD,
                   n_params: int = 100, eps: float = 1e-5, seed: int = 0) -> float:
    """Largest relative gap between backprop and central differences.

    Checks ``n_params`` randomly chosen scalar parameters (all of them if the
    model is smaller). Dropout is off throughout.
    """
    X = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_1d(label)
    _, cache = forward(model, X, head)
    grads, head_grad = backward(model, cache, y)
    pairs = []
    for l in range(model.depth):
        pairs.append((model.weights[l], grads[l][0]))
        pairs.append((model.biases[l], grads[l][1]))
    h = model.heads[head]
    pairs += [(h.W, head_grad[0]), (h.b, head_grad[1])]
    sizes = np.array([p.size for p, _ in pairs])
    total = sizes.sum()
    rng = np.random.default_rng(seed)
    picks = (np.arange(total) if total <= n_params
             else rng.choice(total, size=n_params, replace=False))
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for flat in picks:
        a = np.searchsorted(offsets, flat, side="right") - 1
        param, grad = pairs[a]
        i = np.unravel_index(flat - offsets[a], param.shape)
        old = param[i]
        param[i] = old + eps
        up = loss_at(model, X, y, head)
        param[i] = old - eps
        down = loss_at(model, X, y, head)
        param[i] = old
        numeric = (up - down) / (2 * eps)
        analytic = grad[i]
        err = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
        worst = max(worst, err)
    return worst


def predict_proba(model: MlpModel, X, head: str = DEFAULT_HEAD) -> np.ndarray:
    return forward(model, X, head)[0]


def decode_locations(probs, grid: Grid, strategy: str = "argmax") -> np.ndarray:
    """Turn (n, K) class probabilities into (n, 2) positions."""
    probs = np.atleast_2d(probs)
    if probs.shape[1] != grid.K:
        raise ValueError(f"head width {probs.shape[1]} != grid K {grid.K}")
    centers = grid.centers()
    if strategy == "argmax":
        return centers[np.argmax(probs, axis=1)]
    if strategy == "center_of_mass":
        return (probs @ centers) / probs.sum(axis=1, keepdims=True)
    raise ValueError(f"unknown strategy {strategy!r}")


def predict_location(model: MlpModel, x, head: str, grid: Grid,
                     strategy: str = "argmax") -> tuple[float, float]:
    loc = decode_locations(predict_proba(model, np.atleast_2d(x), head), grid, strategy)[0]
    return float(loc[0]), float(loc[1])


def predict_locations(model: MlpModel, X, head: str, grid: Grid,
                      strategy: str = "argmax") -> np.ndarray:
    return decode_locations(predict_proba(model, X, head), grid, strategy)


# persistence ---------------------------------------------------------------

def _arr(a):
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _unarr(d):
    return np.asarray(d["data"], dtype=float).reshape(d["shape"])


def model_to_dict(model: MlpModel) -> dict:
    cfg = asdict(model.config)
    cfg["layer_sizes"] = list(cfg["layer_sizes"])
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "config": cfg,
        "input_shift": _arr(model.input_shift),
        "input_scale": _arr(model.input_scale),
        "trunk": [{"W": _arr(W), "b": _arr(b), "trainable": t}
                  for W, b, t in zip(model.weights, model.biases, model.trainable)],
        "heads": {name: {"W": _arr(h.W), "b": _arr(h.b), "trainable": h.trainable}
                  for name, h in model.heads.items()},
        "meta": model.meta,
    }


def model_from_dict(d: dict) -> MlpModel:
    if d.get("format") != FORMAT_NAME:
        raise ValueError(f"not a {FORMAT_NAME} document")
    if d.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d.get('version')}")
    cfg = dict(d["config"])
    cfg["layer_sizes"] = tuple(cfg["layer_sizes"])
    config = MlpConfig(**cfg)
    trunk = d["trunk"]
    model = MlpModel(
        config,
        [_unarr(t["W"]) for t in trunk],
        [_unarr(t["b"]) for t in trunk],
        {name: Head(_unarr(h["W"]), _unarr(h["b"]), h["trainable"])
         for name, h in d["heads"].items()},
        [t["trainable"] for t in trunk],
        _unarr(d["input_shift"]),
        _unarr(d["input_scale"]),
        d.get("meta", {}),
    )
    expect = list(config.layer_sizes[:-1])
    got = [model.weights[0].shape[0]] + [W.shape[1] for W in model.weights]
    if got != expect:
        raise ValueError(f"trunk shapes {got} do not match config {expect}")
    return model


def save_model(model: MlpModel, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path) -> MlpModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
