"""Executable semantics of the split-training protocol on a toy dense network.

The whole model is a chain of dense layers (relu hidden, softmax output)
split at a cut index into a device part and a server part. Devices in one
cluster run forward passes in parallel; the server trains on their
row-concatenated cut activations, returns the cut-gradient rows, devices
finish backward locally, and the cluster's device parts are averaged before
the model moves to the next cluster. The same machinery drives the
sequential, federated, and centralized reference modes.

Gradient normalization: the server side descends the mean loss over the
concatenated rows; each device descends the mean loss over its own rows.
These coincide for single-device clusters, make an empty-server cut
identical to federated local training, and make a cluster of identical
devices behave like one device with a cluster-sized server batch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError

# stream tags for deriving independent substreams from one master seed
_TAG_DATA, _TAG_PARTITION, _TAG_MODEL, _TAG_BATCH, _TAG_TEST = 1, 2, 3, 4, 5


@dataclass
class DenseLayer:
    w: np.ndarray  # (n_in, n_out)
    b: np.ndarray  # (n_out,)
    activation: str  # "relu" | "softmax"

    def copy(self) -> "DenseLayer":
        return DenseLayer(w=self.w.copy(), b=self.b.copy(), activation=self.activation)


@dataclass
class SplitModel:
    """Dense chain split at ``cut``: layers[:cut] on device, rest on server."""

    layers: list[DenseLayer]
    cut: int

    def __post_init__(self):
        if not 1 <= self.cut <= len(self.layers):
            raise ConfigError(f"cut {self.cut} outside 1..{len(self.layers)}")

    @property
    def device_part(self) -> list[DenseLayer]:
        return self.layers[: self.cut]

    @property
    def server_part(self) -> list[DenseLayer]:
        return self.layers[self.cut :]

    def copy(self) -> "SplitModel":
        return SplitModel(layers=[l.copy() for l in self.layers], cut=self.cut)

    def n_params(self) -> int:
        return sum(l.w.size + l.b.size for l in self.layers)


def build_model(layer_dims: Sequence[int], cut: int, seed) -> SplitModel:
    """Seeded He-style init; the final layer is the softmax output."""
    rng = np.random.default_rng(seed)
    layers = []
    for i in range(len(layer_dims) - 1):
        n_in, n_out = layer_dims[i], layer_dims[i + 1]
        activation = "softmax" if i == len(layer_dims) - 2 else "relu"
        layers.append(
            DenseLayer(
                w=rng.standard_normal((n_in, n_out)) / np.sqrt(n_in),
                b=np.zeros(n_out),
                activation=activation,
            )
        )
    return SplitModel(layers=layers, cut=cut)


def _layer_forward(layer: DenseLayer, a: np.ndarray) -> np.ndarray:
    z = a @ layer.w + layer.b
    if layer.activation == "relu":
        return np.maximum(z, 0.0)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward_cache(layers: Sequence[DenseLayer], x: np.ndarray) -> list[np.ndarray]:
    """Activations [input, a1, ..., aL]."""
    acts = [x]
    for layer in layers:
        acts.append(_layer_forward(layer, acts[-1]))
    return acts


def forward_device(device_part: Sequence[DenseLayer], batch_inputs: np.ndarray) -> np.ndarray:
    """Device-side forward pass; returns the cut activations (smashed data)."""
    if batch_inputs.ndim != 2 or batch_inputs.shape[1] != device_part[0].w.shape[0]:
        raise ValueError(
            f"batch of shape {batch_inputs.shape} does not match input width {device_part[0].w.shape[0]}"
        )
    return _forward_cache(device_part, batch_inputs)[-1]


def forward_server_concat(server_part: Sequence[DenseLayer], smashed_list: Sequence[np.ndarray]) -> np.ndarray:
    """Concatenate per-device cut activations (device order) and run the server part."""
    widths = {s.shape[1] for s in smashed_list}
    if len(widths) != 1:
        raise ValueError(f"smashed blocks disagree on width: {sorted(widths)}")
    stacked = np.vstack(smashed_list)
    if not server_part:
        return stacked
    if stacked.shape[1] != server_part[0].w.shape[0]:
        raise ValueError(
            f"smashed width {stacked.shape[1]} does not match server input {server_part[0].w.shape[0]}"
        )
    return _forward_cache(server_part, stacked)[-1]


def nll_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log-likelihood of the true classes."""
    p = np.maximum(probs[np.arange(len(labels)), labels], 1e-300)
    return float(-np.mean(np.log(p)))


def _backward_from_output(layers, acts, delta_z_last):
    """Backprop a stack given the gradient w.r.t. the last pre-activation.

    Returns per-layer (dW, db) and the gradient w.r.t. the stack input
    (post-activation of whatever feeds this stack).
    """
    grads = [None] * len(layers)
    delta_z = delta_z_last
    for i in reversed(range(len(layers))):
        a_prev = acts[i]
        grads[i] = (a_prev.T @ delta_z, delta_z.sum(axis=0))
        delta_a = delta_z @ layers[i].w.T
        if i > 0:
            delta_z = delta_a * (acts[i] > 0)
        else:
            delta_z = delta_a
    return grads, delta_z


def _one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def backward_split(model: SplitModel, device_batches, labels_list):
    """Full split backward pass from fresh forward state.

    Returns (server_grads, smashed_grads, device_grads_list). Smashed-grad
    rows arrive at each device already scaled for its own-batch mean, so a
    device applies them directly.
    """
    k_m = len(device_batches)
    device_caches = [_forward_cache(model.device_part, x) for x in device_batches]
    smashed_list = [c[-1] for c in device_caches]
    labels = np.concatenate([np.asarray(y) for y in labels_list])
    n_classes = model.layers[-1].w.shape[1]

    if model.server_part:
        server_cache = _forward_cache(model.server_part, np.vstack(smashed_list))
        probs = server_cache[-1]
        delta_z = (probs - _one_hot(labels, n_classes)) / len(labels)
        server_grads, delta_input = _backward_from_output(model.server_part, server_cache, delta_z)
        row_starts = np.cumsum([0] + [len(x) for x in device_batches])
        smashed_grads = [
            delta_input[row_starts[k] : row_starts[k + 1]] * k_m for k in range(k_m)
        ]
        device_deltas = [g * (s > 0) for g, s in zip(smashed_grads, smashed_list)]
    else:
        server_grads = []
        smashed_grads = []
        device_deltas = []
        for k in range(k_m):
            yk = np.asarray(labels_list[k])
            delta = (smashed_list[k] - _one_hot(yk, n_classes)) / len(yk)
            smashed_grads.append(delta)
            device_deltas.append(delta)

    device_grads = [
        _backward_from_output(model.device_part, device_caches[k], device_deltas[k])[0]
        for k in range(k_m)
    ]
    return server_grads, smashed_grads, device_grads


def _apply_grads(layers, grads, lr: float) -> None:
    for layer, (gw, gb) in zip(layers, grads):
        layer.w -= lr * gw
        layer.b -= lr * gb


def fedavg(models: Sequence[Sequence[DenseLayer]], weights: Sequence[float]) -> list[DenseLayer]:
    """Parameter-wise weighted average; weights are local sample counts."""
    if any(w <= 0 for w in weights):
        raise ValueError("aggregation weights must be positive")
    ref = models[0]
    for other in models[1:]:
        if len(other) != len(ref) or any(
            a.w.shape != b.w.shape or a.activation != b.activation for a, b in zip(other, ref)
        ):
            raise ValueError("aggregated models must share one architecture")
    total = float(sum(weights))
    out = []
    for i, layer in enumerate(ref):
        w = sum(m[i].w * (wt / total) for m, wt in zip(models, weights))
        b = sum(m[i].b * (wt / total) for m, wt in zip(models, weights))
        out.append(DenseLayer(w=w, b=b, activation=layer.activation))
    return out


@dataclass(frozen=True)
class TrainerConfig:
    """Hyperparameters and synthetic-task shape for the toy trainer."""

    eta_d: float = 0.05
    eta_e: float = 0.25
    batch: int = 16
    local_epochs: int = 1
    rounds: int = 60
    seed: int = 0
    n_devices: int = 30
    cluster_capacity: int = 5
    n_classes: int = 10
    dims: int = 20
    samples_per_device: int = 180
    classes_per_device: int = 3
    hidden: tuple[int, ...] = (16, 16)
    cut: int = 1
    test_samples: int = 1000
    class_separation: float = 2.0

    def __post_init__(self):
        if self.eta_d <= 0 or self.eta_e <= 0:
            raise ConfigError("learning rates must be > 0")
        if self.batch < 1:
            raise ConfigError("trainer.batch must be >= 1")
        if self.samples_per_device < self.batch:
            raise ConfigError("each device needs at least one full minibatch of samples")
        if not 1 <= self.classes_per_device <= self.n_classes:
            raise ConfigError("trainer.classes_per_device must be in 1..n_classes")
        n_layers = len(self.hidden) + 1
        if not 1 <= self.cut <= n_layers:
            raise ConfigError(f"trainer.cut must be in 1..{n_layers}")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.dims, *self.hidden, self.n_classes)


@dataclass(frozen=True)
class Partition:
    x: np.ndarray
    y: np.ndarray
    indices: np.ndarray  # positions in the pooled dataset, for disjointness checks


def make_synthetic_dataset(cfg: TrainerConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Gaussian-mixture classification task; returns (X, y, X_test, y_test).

    The train pool is sized so any non-IID partition of the configured shape
    can be drawn from it.
    """
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _TAG_DATA]))
    means = cfg.class_separation * rng.standard_normal((cfg.n_classes, cfg.dims))
    per_class = cfg.n_devices * (-(-cfg.samples_per_device // cfg.classes_per_device))
    xs, ys = [], []
    for c in range(cfg.n_classes):
        xs.append(means[c] + rng.standard_normal((per_class, cfg.dims)))
        ys.append(np.full(per_class, c, dtype=np.int64))
    x = np.vstack(xs)
    y = np.concatenate(ys)

    test_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, _TAG_TEST]))
    labels = test_rng.integers(cfg.n_classes, size=cfg.test_samples)
    x_test = means[labels] + test_rng.standard_normal((cfg.test_samples, cfg.dims))
    return x, y, x_test, labels


def partition_non_iid(
    dataset: tuple[np.ndarray, np.ndarray],
    n_devices: int,
    classes_per_device: int,
    samples_per_device: int,
    seed,
) -> list[Partition]:
    """Disjoint per-device shards restricted to a few randomly chosen classes."""
    x, y = dataset
    rng = np.random.default_rng(seed)
    n_classes = int(y.max()) + 1
    if classes_per_device > n_classes:
        raise ConfigError("classes_per_device exceeds the number of classes present")
    by_class = {c: list(rng.permutation(np.flatnonzero(y == c))) for c in range(n_classes)}

    base = samples_per_device // classes_per_device
    extra = samples_per_device % classes_per_device
    partitions = []
    for _ in range(n_devices):
        chosen = rng.choice(n_classes, size=classes_per_device, replace=False)
        take = []
        for slot, c in enumerate(chosen):
            want = base + (1 if slot < extra else 0)
            pool = by_class[int(c)]
            if len(pool) < want:
                raise ConfigError(
                    f"class {int(c)} has {len(pool)} samples left, device needs {want}"
                )
            take.extend(pool[:want])
            del pool[:want]
        idx = np.array(take, dtype=np.int64)
        partitions.append(Partition(x=x[idx], y=y[idx], indices=idx))
    return partitions


class MinibatchStream:
    """Uniform without-replacement batches; reshuffles when exhausted."""

    def __init__(self, n_samples: int, batch: int, rng):
        if n_samples < batch:
            raise ConfigError(f"{n_samples} samples cannot fill a batch of {batch}")
        self.n = n_samples
        self.batch = batch
        self.rng = rng
        self._perm = rng.permutation(n_samples)
        self._pos = 0

    def next_indices(self) -> np.ndarray:
        if self._pos + self.batch > self.n:
            self._perm = self.rng.permutation(self.n)
            self._pos = 0
        out = self._perm[self._pos : self._pos + self.batch]
        self._pos += self.batch
        return out


def device_streams(cfg: TrainerConfig, sizes: Sequence[int]) -> list[MinibatchStream]:
    """One seeded stream per device, shared across schemes for fair comparisons."""
    return [
        MinibatchStream(sizes[k], cfg.batch, np.random.default_rng(np.random.SeedSequence([cfg.seed, _TAG_BATCH, k])))
        for k in range(len(sizes))
    ]


def _epoch_step(model: SplitModel, members, partitions, streams, cfg: TrainerConfig, device_parts) -> float:
    """One local epoch for a cluster: parallel device steps + one server step."""
    batches, labels = [], []
    for k in members:
        idx = streams[k].next_indices()
        batches.append(partitions[k].x[idx])
        labels.append(partitions[k].y[idx])

    caches = [_forward_cache(device_parts[j], batches[j]) for j in range(len(members))]
    smashed = [c[-1] for c in caches]
    y_all = np.concatenate(labels)
    n_classes = cfg.n_classes

    if model.server_part:
        server_cache = _forward_cache(model.server_part, np.vstack(smashed))
        probs = server_cache[-1]
        loss = nll_loss(probs, y_all)
        delta_z = (probs - _one_hot(y_all, n_classes)) / len(y_all)
        server_grads, delta_input = _backward_from_output(model.server_part, server_cache, delta_z)
        row_starts = np.cumsum([0] + [len(b) for b in batches])
        device_deltas = [
            delta_input[row_starts[j] : row_starts[j + 1]] * len(members) * (smashed[j] > 0)
            for j in range(len(members))
        ]
        _apply_grads(model.server_part, server_grads, cfg.eta_e)
    else:
        probs = np.vstack(smashed)
        loss = nll_loss(probs, y_all)
        device_deltas = [
            (smashed[j] - _one_hot(np.asarray(labels[j]), n_classes)) / len(labels[j])
            for j in range(len(members))
        ]

    for j in range(len(members)):
        grads, _ = _backward_from_output(device_parts[j], caches[j], device_deltas[j])
        _apply_grads(device_parts[j], grads, cfg.eta_d)
    return loss


def run_cpsl_round(
    model: SplitModel,
    assignment: Sequence[Sequence[int]],
    partitions: Sequence[Partition],
    cfg: TrainerConfig,
    streams: Sequence[MinibatchStream],
) -> SplitModel:
    """One round: clusters in order, L parallel local epochs each, then
    sample-count-weighted aggregation and handoff to the next cluster."""
    clusters = getattr(assignment, "clusters", assignment)
    for members in clusters:
        device_parts = [[l.copy() for l in model.device_part] for _ in members]
        for _ in range(cfg.local_epochs):
            _epoch_step(model, members, partitions, streams, cfg, device_parts)
        weights = [len(partitions[k].y) for k in members]
        averaged = fedavg(device_parts, weights)
        model.layers[: model.cut] = averaged
    return model


def run_fl_round(
    model: SplitModel,
    partitions: Sequence[Partition],
    cfg: TrainerConfig,
    streams: Sequence[MinibatchStream],
) -> SplitModel:
    """Federated reference: parallel local training of the whole chain, then
    one global aggregation. Layer learning rates mirror the split."""
    n = len(partitions)
    local_models = [[l.copy() for l in model.layers] for _ in range(n)]
    for k in range(n):
        for _ in range(cfg.local_epochs):
            idx = streams[k].next_indices()
            xb, yb = partitions[k].x[idx], partitions[k].y[idx]
            cache = _forward_cache(local_models[k], xb)
            delta_z = (cache[-1] - _one_hot(yb, cfg.n_classes)) / len(yb)
            grads, _ = _backward_from_output(local_models[k], cache, delta_z)
            _apply_grads(local_models[k][: model.cut], grads[: model.cut], cfg.eta_d)
            _apply_grads(local_models[k][model.cut :], grads[model.cut :], cfg.eta_e)
    weights = [len(p.y) for p in partitions]
    model.layers[:] = fedavg(local_models, weights)
    return model


@dataclass
class TrainMetrics:
    scheme: str
    loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    test_acc: list[float] = field(default_factory=list)
    elapsed_s: list[float] = field(default_factory=list)

    def rows(self) -> list[dict]:
        out = []
        for i in range(len(self.loss)):
            out.append(
                {
                    "round": i + 1,
                    "loss": self.loss[i],
                    "train_acc": self.train_acc[i],
                    "test_acc": self.test_acc[i],
                    "simulated_elapsed_s": self.elapsed_s[i] if self.elapsed_s else "",
                }
            )
        return out


def predict_proba(layers: Sequence[DenseLayer], x: np.ndarray) -> np.ndarray:
    return _forward_cache(layers, x)[-1]


def accuracy(layers: Sequence[DenseLayer], x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(np.argmax(predict_proba(layers, x), axis=1) == y))


SCHEMES = ("cpsl", "sl", "fl", "cl")


def run_training(scheme: str, cfg: TrainerConfig, round_latency_s: float | None = None) -> TrainMetrics:
    """Train for ``cfg.rounds`` rounds under one scheme on seeded non-IID data.

    All schemes share the dataset, the non-IID partition, the model init,
    and the per-device batch streams; only the training protocol differs.
    The sequential scheme is the cluster scheme with singleton clusters; the
    centralized scheme is one virtual device owning the pooled data.
    """
    scheme = scheme.lower()
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")

    x, y, x_test, y_test = make_synthetic_dataset(cfg)
    partitions = partition_non_iid(
        (x, y),
        cfg.n_devices,
        cfg.classes_per_device,
        cfg.samples_per_device,
        np.random.SeedSequence([cfg.seed, _TAG_PARTITION]),
    )
    model = build_model(cfg.layer_dims, cfg.cut, np.random.SeedSequence([cfg.seed, _TAG_MODEL]))

    if scheme == "cl":
        pooled_idx = np.concatenate([p.indices for p in partitions])
        partitions = [Partition(x=x[pooled_idx], y=y[pooled_idx], indices=pooled_idx)]
        assignment = [(0,)]
        streams = device_streams(cfg, [len(pooled_idx)])
    elif scheme == "sl":
        assignment = [(k,) for k in range(cfg.n_devices)]
        streams = device_streams(cfg, [len(p.y) for p in partitions])
    elif scheme == "cpsl":
        from .clustering import chunked_assignment

        assignment = chunked_assignment(range(cfg.n_devices), cfg.cluster_capacity).clusters
        streams = device_streams(cfg, [len(p.y) for p in partitions])
    else:
        assignment = None
        streams = device_streams(cfg, [len(p.y) for p in partitions])

    train_x = np.vstack([p.x for p in partitions])
    train_y = np.concatenate([p.y for p in partitions])

    metrics = TrainMetrics(scheme=scheme)
    elapsed = 0.0
    for _ in range(cfg.rounds):
        if scheme == "fl":
            run_fl_round(model, partitions, cfg, streams)
        else:
            run_cpsl_round(model, assignment, partitions, cfg, streams)
        metrics.loss.append(nll_loss(predict_proba(model.layers, train_x), train_y))
        metrics.train_acc.append(accuracy(model.layers, train_x, train_y))
        metrics.test_acc.append(accuracy(model.layers, x_test, y_test))
        if round_latency_s is not None:
            elapsed += round_latency_s
            metrics.elapsed_s.append(elapsed)
    return metrics


def save_model_json(model: SplitModel, path) -> None:
    """Flat parameter dump: layer-major, row-major weights then biases."""
    values = []
    for layer in model.layers:
        values.extend(layer.w.ravel().tolist())
        values.extend(layer.b.tolist())
    payload = {
        "layout": "layer-major, row-major weights then biases",
        "dims": [model.layers[0].w.shape[0]] + [l.w.shape[1] for l in model.layers],
        "cut": model.cut,
        "activations": [l.activation for l in model.layers],
        "values": values,
    }
    Path(path).write_text(json.dumps(payload))


def load_model_json(path) -> SplitModel:
    payload = json.loads(Path(path).read_text())
    dims = payload["dims"]
    values = np.asarray(payload["values"], dtype=float)
    layers = []
    pos = 0
    for i in range(len(dims) - 1):
        n_in, n_out = dims[i], dims[i + 1]
        w = values[pos : pos + n_in * n_out].reshape(n_in, n_out)
        pos += n_in * n_out
        b = values[pos : pos + n_out]
        pos += n_out
        layers.append(DenseLayer(w=w.copy(), b=b.copy(), activation=payload["activations"][i]))
    if pos != len(values):
        raise ConfigError("parameter dump length does not match the declared dims")
    return SplitModel(layers=layers, cut=payload["cut"])
