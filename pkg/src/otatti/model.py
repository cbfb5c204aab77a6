"""Small tanh MLP classifier stored as one flat parameter vector.

Every weight matrix and every bias vector is its own named segment of the
flat vector, so an update can be decomposed layer by layer for inspection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ShapeError

LOSS_KINDS = ("normal", "euclidean", "cosine")


@dataclass(frozen=True)
class LayerSegment:
    name: str
    start: int
    length: int
    shape: tuple[int, ...]

    @property
    def stop(self) -> int:
        return self.start + self.length


@dataclass(frozen=True)
class ModelDims:
    input_dim: int
    hidden: tuple[int, ...]
    num_classes: int

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.num_classes)


@dataclass
class FlatModel:
    params: np.ndarray
    layer_map: tuple[LayerSegment, ...]
    dims: ModelDims

    @property
    def size(self) -> int:
        return int(self.params.shape[0])

    def with_params(self, params: np.ndarray) -> "FlatModel":
        return FlatModel(np.asarray(params, dtype=np.float64), self.layer_map, self.dims)

    def predict(self, features: np.ndarray) -> np.ndarray:
        logits = _forward(self, np.asarray(features, dtype=np.float64))[-1]
        return np.argmax(logits, axis=1)


@dataclass
class UpdateDelta:
    delta: np.ndarray
    client_id: int
    round: int


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    local_epochs: int = 2
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.local_epochs < 0:
            raise ConfigurationError("local_epochs must be >= 0")


@dataclass(frozen=True)
class LossSpec:
    """Training objective ``(1 - alpha) * CE + alpha * metric(w, anchor)``.

    ``kind="normal"`` is plain cross-entropy; ``alpha`` and ``anchor`` are
    ignored. ``euclidean`` uses ``||w - anchor||_2`` and ``cosine`` uses
    ``1 - cos(anchor, w)``.
    """

    kind: str = "normal"
    alpha: float = 0.0
    anchor: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in LOSS_KINDS:
            raise ConfigurationError(f"unknown loss kind {self.kind!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError("alpha must lie in [0, 1]")
        if self.kind != "normal" and self.alpha > 0 and self.anchor is None:
            raise ConfigurationError(f"{self.kind} loss needs an anchor model")


def build_layer_map(dims: ModelDims) -> tuple[LayerSegment, ...]:
    segments = []
    start = 0
    widths = dims.widths
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:]), start=1):
        segments.append(LayerSegment(f"fc{i}.weight", start, fan_in * fan_out, (fan_in, fan_out)))
        start += fan_in * fan_out
        segments.append(LayerSegment(f"fc{i}.bias", start, fan_out, (fan_out,)))
        start += fan_out
    return tuple(segments)


def init_model(dims: ModelDims | Sequence, seed: int) -> FlatModel:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation, one draw stream per seed.

    ``dims`` may be a :class:`ModelDims` or a tuple ``(input, [hidden...], classes)``.
    """
    if not isinstance(dims, ModelDims):
        input_dim, hidden, num_classes = dims
        dims = ModelDims(int(input_dim), tuple(int(h) for h in hidden), int(num_classes))
    if any(w <= 0 for w in dims.widths):
        raise ConfigurationError(f"all layer widths must be positive, got {dims.widths}")
    if dims.num_classes < 2:
        raise ConfigurationError("need at least two classes")
    layer_map = build_layer_map(dims)
    rng = np.random.default_rng(seed)
    params = np.empty(layer_map[-1].stop)
    for seg in layer_map:
        fan_in = seg.shape[0] if len(seg.shape) == 2 else layer_fan_in(layer_map, seg)
        bound = 1.0 / np.sqrt(fan_in)
        params[seg.start:seg.stop] = rng.uniform(-bound, bound, size=seg.length)
    return FlatModel(params, layer_map, dims)


def layer_fan_in(layer_map: Sequence[LayerSegment], bias: LayerSegment) -> int:
    weight = next(s for s in layer_map if s.name == bias.name.replace(".bias", ".weight"))
    return weight.shape[0]


def _weights(model: FlatModel, params: np.ndarray | None = None):
    p = model.params if params is None else params
    segs = model.layer_map
    return [
        (p[w.start:w.stop].reshape(w.shape), p[b.start:b.stop])
        for w, b in zip(segs[0::2], segs[1::2])
    ]


def _forward(model: FlatModel, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    layers = _weights(model)
    h = x
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        h = z if i == len(layers) - 1 else np.tanh(z)
        acts.append(h)
    return acts


def _check_batch(model: FlatModel, x: np.ndarray, y: np.ndarray) -> None:
    if x.ndim != 2 or x.shape[1] != model.dims.input_dim:
        raise ShapeError(
            f"batch feature width {x.shape[-1] if x.ndim else None} != model input {model.dims.input_dim}"
        )
    if x.shape[0] == 0 or x.shape[0] != y.shape[0]:
        raise ShapeError("batch must be nonempty with one label per row")


def cross_entropy_grad(model: FlatModel, x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    acts = _forward(model, x)
    logits = acts[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    n = x.shape[0]
    rows = np.arange(n)
    loss = float(np.mean(logz - shifted[rows, y]))

    probs = np.exp(shifted - logz[:, None])
    probs[rows, y] -= 1.0
    dz = probs / n
    grad = np.empty_like(model.params)
    segs = model.layer_map
    layers = _weights(model)
    for i in range(len(layers) - 1, -1, -1):
        wseg, bseg = segs[2 * i], segs[2 * i + 1]
        grad[wseg.start:wseg.stop] = (acts[i].T @ dz).ravel()
        grad[bseg.start:bseg.stop] = dz.sum(axis=0)
        if i > 0:
            dz = (dz @ layers[i][0].T) * (1.0 - acts[i] ** 2)
    return loss, grad


def metric_term(params: np.ndarray, kind: str, anchor: np.ndarray) -> tuple[float, np.ndarray]:
    """Value and gradient of the stealth term for the augmented losses."""
    if kind == "euclidean":
        diff = params - anchor
        dist = float(np.linalg.norm(diff))
        if dist == 0.0:
            return 0.0, np.zeros_like(params)
        return dist, diff / dist
    if kind == "cosine":
        na = float(np.linalg.norm(anchor))
        nw = float(np.linalg.norm(params))
        if na == 0.0 or nw == 0.0:
            return 1.0, np.zeros_like(params)
        cos = float(anchor @ params) / (na * nw)
        grad = -(anchor / (na * nw) - cos * params / (nw * nw))
        return 1.0 - cos, grad
    raise ConfigurationError(f"no metric term for loss kind {kind!r}")


def forward_loss_grad(
    model: FlatModel, batch: tuple[np.ndarray, np.ndarray], loss_spec: LossSpec = LossSpec()
) -> tuple[float, np.ndarray]:
    x = np.asarray(batch[0], dtype=np.float64)
    y = np.asarray(batch[1], dtype=np.int64)
    _check_batch(model, x, y)
    ce, grad = cross_entropy_grad(model, x, y)
    if loss_spec.kind == "normal" or loss_spec.alpha == 0.0:
        return ce, grad
    a = loss_spec.alpha
    anchor = np.asarray(loss_spec.anchor, dtype=np.float64)
    if anchor.shape != model.params.shape:
        raise ShapeError("anchor length does not match the model")
    m, mgrad = metric_term(model.params, loss_spec.kind, anchor)
    return (1.0 - a) * ce + a * m, (1.0 - a) * grad + a * mgrad


def local_train(
    model: FlatModel,
    dataset,
    train_config: TrainConfig,
    loss_spec: LossSpec = LossSpec(),
    *,
    grad_mask: np.ndarray | None = None,
    client_id: int = -1,
    round: int = 0,
) -> tuple[FlatModel, UpdateDelta]:
    """Mini-batch SGD from ``model`` on ``dataset``.

    ``grad_mask`` (boolean, length S) keeps only the flagged gradient
    coordinates at every step; the others never move.
    """
    x = np.asarray(dataset.features, dtype=np.float64)
    y = np.asarray(dataset.labels, dtype=np.int64)
    if x.shape[0] == 0:
        raise ConfigurationError("cannot train on an empty dataset")
    rng = np.random.default_rng(train_config.seed)
    start = model.params.copy()
    current = model.with_params(start.copy())
    n = x.shape[0]
    bs = train_config.batch_size
    lr = train_config.learning_rate
    for _ in range(train_config.local_epochs):
        order = rng.permutation(n)
        for lo in range(0, n, bs):
            idx = order[lo:lo + bs]
            _, grad = forward_loss_grad(current, (x[idx], y[idx]), loss_spec)
            if grad_mask is not None:
                grad = grad * grad_mask
            current.params -= lr * grad
    if not np.all(np.isfinite(current.params)):
        raise FloatingPointError("training diverged (non-finite parameters)")
    return current, UpdateDelta(current.params - start, client_id, round)


def slice_layers(delta: np.ndarray, layer_map: Sequence[LayerSegment]) -> list[np.ndarray]:
    delta = np.asarray(delta)
    total = sum(seg.length for seg in layer_map)
    if delta.shape[0] != total:
        raise ShapeError(f"delta length {delta.shape[0]} != layer map total {total}")
    expected = 0
    for seg in layer_map:
        if seg.start != expected:
            raise ShapeError(f"layer {seg.name} does not start where the previous one ended")
        expected = seg.stop
    return [delta[seg.start:seg.stop] for seg in layer_map]


def whole_model_map(size: int) -> tuple[LayerSegment, ...]:
    """A single-segment map treating the whole vector as one layer."""
    return (LayerSegment("model", 0, size, (size,)),)
