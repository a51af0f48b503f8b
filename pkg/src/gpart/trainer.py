"""Tanh MLP with hand-written reverse mode, AdamW, and the coordinate loop.

The network is a stack of bias-free dense layers: row-vector inputs,
h <- tanh(h @ W) for every layer but the last, which emits logits for a
mean softmax cross-entropy loss. Weights live in the flat space defined
by network_manifest, so adapters can perturb them without knowing the
architecture.

finetune never touches the base vector w0: every step rebuilds
w = w0 + delta implicitly, computes the exact weight-space gradient,
pulls it back to coordinates through the adapter, and updates the
coordinates alone with decoupled-decay AdamW under a warmup schedule.
The best coordinates by dev accuracy (first best wins ties) are what the
adapter holds afterwards. Given fixed seeds the whole loop is
deterministic.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import adapters, weightspace
from .errors import CompatibilityError, NumericError, ValidationError

MEAN_SEPARATION = 6.0  # min pairwise class-mean distance, in cluster-std units


@dataclass(frozen=True)
class NetworkConfig:
    layer_dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if len(dims) < 2:
            raise ValidationError(f"need at least input and output dims, got {dims}")
        if any(d < 1 for d in dims):
            raise ValidationError(f"layer dims must be positive, got {dims}")

    @property
    def features(self):
        return self.layer_dims[0]

    @property
    def classes(self):
        return self.layer_dims[-1]


@lru_cache(maxsize=None)
def _manifest_for(dims, include_head):
    shapes = [(f"layer{k}", dims[k], dims[k + 1]) for k in range(len(dims) - 1)]
    if not include_head:
        shapes = shapes[:-1]
    if not shapes:
        raise ValidationError("excluding the head leaves nothing to adapt")
    return weightspace.build_manifest(shapes)


def network_manifest(config, include_head=True):
    return _manifest_for(config.layer_dims, bool(include_head))


def init_weights(config, seed):
    rng = np.random.default_rng(seed)
    mats = []
    for k in range(len(config.layer_dims) - 1):
        fan_in = config.layer_dims[k]
        scale = 1.0 / math.sqrt(fan_in)
        mats.append(rng.normal(0.0, scale, size=(fan_in, config.layer_dims[k + 1])))
    return weightspace.flatten(network_manifest(config), mats)


@dataclass(frozen=True)
class TaskData:
    x_train: np.ndarray
    y_train: np.ndarray
    x_dev: np.ndarray
    y_dev: np.ndarray


def _unit(v):
    return v / np.linalg.norm(v)


def _rotate(x, u, v, angle):
    """Rotate rows of x by angle inside the plane spanned by u, v.

    Built from rank-one updates, so angle 0 returns x exactly."""
    cu = x @ u
    cv = x @ v
    c, s = math.cos(angle), math.sin(angle)
    return x + np.outer(cu * (c - 1.0) - cv * s, u) + np.outer(cu * s + cv * (c - 1.0), v)


def shift_planes(rng, features):
    """Disjoint orthonormal 2-planes covering the feature space."""
    basis, _ = np.linalg.qr(rng.normal(size=(features, features)))
    return [(basis[:, 2 * k], basis[:, 2 * k + 1]) for k in range(features // 2)]


def make_task(seed, samples, features, classes, shift_angle):
    """Two tasks from one seed: Gaussian clusters, then a fresh draw from
    the same clusters with every input rotated by shift_angle inside each
    of floor(features/2) disjoint random planes. The planes span the whole
    space, so a radian-scale angle displaces every cluster mean by an
    amount comparable to its norm."""
    samples, features, classes = int(samples), int(features), int(classes)
    if classes < 2:
        raise ValidationError(f"need at least 2 classes, got {classes}")
    if samples < classes:
        raise ValidationError(f"need at least one sample per class, got {samples}")
    if features < 2:
        raise ValidationError(f"need at least 2 features for a rotation plane, got {features}")
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(classes, features))
    gaps = [np.linalg.norm(means[i] - means[j])
            for i in range(classes) for j in range(i + 1, classes)]
    means *= MEAN_SEPARATION / min(gaps)
    planes = shift_planes(rng, features)

    def draw(count):
        labels = np.resize(np.arange(classes), count)
        labels = labels[rng.permutation(count)]
        inputs = means[labels] + rng.normal(size=(count, features))
        return inputs, labels

    def split(inputs, labels):
        n_train = min(samples - 1, max(1, int(round(samples * 0.8))))
        return TaskData(inputs[:n_train], labels[:n_train], inputs[n_train:], labels[n_train:])

    x_pre, y_pre = draw(samples)
    x_fin, y_fin = draw(samples)
    for u, v in planes:
        x_fin = _rotate(x_fin, u, v, float(shift_angle))
    return split(x_pre, y_pre), split(x_fin, y_fin)


def _forward(config, w, x):
    mats = weightspace.unflatten(network_manifest(config), w)
    acts = [np.asarray(x, dtype=np.float64)]
    for mat in mats[:-1]:
        acts.append(np.tanh(acts[-1] @ mat))
    logits = acts[-1] @ mats[-1]
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite activations in forward pass")
    return mats, acts, logits


def _cross_entropy(logits, labels):
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1)
    log_probs = shifted - np.log(total)[:, None]
    loss = -log_probs[np.arange(len(labels)), labels].mean()
    return float(loss), exp / total[:, None]


def loss_and_grad(config, w, x, y):
    """Mean softmax cross-entropy over the batch and its exact flat gradient."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if len(x) == 0:
        raise ValidationError("empty batch")
    mats, acts, logits = _forward(config, w, x)
    loss, probs = _cross_entropy(logits, y)
    if not math.isfinite(loss):
        raise NumericError("non-finite loss")
    g = probs
    g[np.arange(len(y)), y] -= 1.0
    g /= len(y)
    grads = [None] * len(mats)
    for k in range(len(mats) - 1, -1, -1):
        grads[k] = acts[k].T @ g
        if k > 0:
            g = (g @ mats[k].T) * (1.0 - acts[k] ** 2)
    return loss, weightspace.flatten(network_manifest(config), grads)


def evaluate(config, w, x, y):
    """Full-batch loss and accuracy, forward only."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    _, _, logits = _forward(config, w, x)
    loss, _ = _cross_entropy(logits, y)
    if not math.isfinite(loss):
        raise NumericError("non-finite loss")
    accuracy = float((logits.argmax(axis=1) == y).mean())
    return loss, accuracy


@dataclass
class OptimizerState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0


def make_optimizer(dim, lr, weight_decay, beta1=0.9, beta2=0.999, eps=1e-8):
    return OptimizerState(np.zeros(dim), np.zeros(dim), 0, lr, beta1, beta2, eps, weight_decay)


def adamw_step(state, params, grad):
    """One bias-corrected Adam step, then decoupled decay on the result."""
    grad = np.asarray(grad, dtype=np.float64)
    state.step_count += 1
    t = state.step_count
    state.first_moment *= state.beta1
    state.first_moment += (1.0 - state.beta1) * grad
    state.second_moment *= state.beta2
    state.second_moment += (1.0 - state.beta2) * (grad * grad)
    m_hat = state.first_moment / (1.0 - state.beta1**t)
    v_hat = state.second_moment / (1.0 - state.beta2**t)
    params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    params -= state.lr * state.weight_decay * params
    return params


def lr_schedule(kind, base_lr, total_steps, warmup_ratio=0.06):
    """Per-step learning rate, 1-indexed: linear warmup, then decay to zero."""
    if kind not in ("linear", "cosine"):
        raise ValidationError(f"schedule must be linear or cosine, got {kind!r}")
    if total_steps < 1:
        raise ValidationError(f"schedule needs at least one step, got {total_steps}")
    warmup = min(total_steps, max(1, math.ceil(warmup_ratio * total_steps)))

    def lr_at(step):
        if step <= warmup:
            return base_lr * step / warmup
        progress = (step - warmup) / (total_steps - warmup)
        if kind == "linear":
            return base_lr * (1.0 - progress)
        return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))

    return lr_at


@dataclass
class TrainRecord:
    train_loss: list = field(default_factory=list)
    dev_loss: list = field(default_factory=list)
    dev_acc: list = field(default_factory=list)
    best_epoch: int = 0  # 1-indexed; 0 means no epoch was evaluated
    best_dev_acc: float = float("nan")

    def __len__(self):
        return len(self.train_loss)

    def to_csv(self):
        lines = ["epoch,train_loss,dev_loss,dev_acc"]
        rows = zip(self.train_loss, self.dev_loss, self.dev_acc)
        for epoch, (tl, dl, da) in enumerate(rows, start=1):
            lines.append(f"{epoch},{tl:.10g},{dl:.10g},{da:.10g}")
        return "\n".join(lines) + "\n"


def _check_adapted(adapter, full):
    """The adapted manifest must be a leading prefix of the full network."""
    sub = adapter.manifest
    if sub.layers != full.layers[: len(sub.layers)]:
        raise CompatibilityError("adapter manifest is not a prefix of the network manifest")
    return sub.total


def apply_delta(adapter, w0, full, theta=None):
    """w0 + delta, with the delta embedded at the adapted prefix."""
    adapted = _check_adapted(adapter, full)
    w = np.array(w0, dtype=np.float64, copy=True)
    w[:adapted] += adapter.delta() if theta is None else adapter.delta_at(theta)
    return w


def finetune(adapter, w0, config, task, epochs, batch_size, lr, weight_decay, seed,
             schedule="linear", warmup_ratio=0.06):
    """Train the adapter coordinates on task; returns (adapter, record).

    The adapter ends up holding its dev-selected best coordinates. w0 is
    read, never written.
    """
    w0 = np.asarray(w0, dtype=np.float64)
    full = network_manifest(config)
    if w0.shape != (full.total,):
        raise ValidationError(f"w0 has shape {w0.shape}, network total is {full.total}")
    adapted = _check_adapted(adapter, full)
    epochs = int(epochs)
    batch_size = int(batch_size)
    if epochs < 0:
        raise ValidationError(f"epochs must be non-negative, got {epochs}")
    if batch_size < 1:
        raise ValidationError(f"batch size must be positive, got {batch_size}")
    record = TrainRecord()
    if epochs == 0:
        return adapter, record
    n = len(task.y_train)
    steps_per_epoch = math.ceil(n / batch_size)
    lr_at = lr_schedule(schedule, lr, epochs * steps_per_epoch, warmup_ratio)
    state = make_optimizer(adapter.count_trainable(), lr, weight_decay)
    rng = np.random.default_rng(seed)
    best_theta = adapter.theta.copy()
    best_acc = -1.0
    best_epoch = 0
    step = 0
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        for lo in range(0, n, batch_size):
            idx = order[lo : lo + batch_size]
            w = w0.copy()
            w[:adapted] += adapter.delta()
            try:
                loss, grad_w = loss_and_grad(config, w, task.x_train[idx], task.y_train[idx])
            except NumericError as exc:
                raise NumericError(f"{exc} (epoch {epoch}, batch {lo // batch_size})") from None
            grad_theta = adapter.pullback_grad(grad_w[:adapted])
            step += 1
            state.lr = lr_at(step)
            adapter.theta = adamw_step(state, adapter.theta, grad_theta)
            loss_sum += loss * len(idx)
        w = w0.copy()
        w[:adapted] += adapter.delta()
        try:
            dev_loss, dev_acc = evaluate(config, w, task.x_dev, task.y_dev)
        except NumericError as exc:
            raise NumericError(f"{exc} (epoch {epoch}, dev evaluation)") from None
        record.train_loss.append(loss_sum / n)
        record.dev_loss.append(dev_loss)
        record.dev_acc.append(dev_acc)
        if dev_acc > best_acc:
            best_acc = dev_acc
            best_epoch = epoch
            best_theta = adapter.theta.copy()
    adapter.theta = best_theta
    record.best_epoch = best_epoch
    record.best_dev_acc = best_acc
    return adapter, record


def pretrain(config, task, epochs, batch_size, lr, weight_decay, init_seed, train_seed,
             schedule="linear", warmup_ratio=0.06):
    """Full fine-tuning from seeded random init; returns (weights, record)."""
    w_init = init_weights(config, init_seed)
    adapter = adapters.FullFTAdapter(network_manifest(config))
    adapter, record = finetune(adapter, w_init, config, task, epochs, batch_size, lr,
                               weight_decay, train_seed, schedule, warmup_ratio)
    return w_init + adapter.delta(), record
