"""Optimizer, adaptive pruning of the first denoising conv, training and evaluation loops."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from threadpoolctl import threadpool_limits

from .data import DatasetContainer
from .errors import ContractViolation
from .model import LSRNet
from .ops import cross_entropy
from .tensor import Tensor, no_grad

log = logging.getLogger(__name__)

__all__ = [
    "TrainConfig",
    "AdamW",
    "adamw_step",
    "PruneEvent",
    "adaptive_prune",
    "prune_smallest",
    "Metrics",
    "EvalResult",
    "train",
    "evaluate",
    "predict",
    "bench_inference",
    "BenchResult",
    "cross_entropy",
]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    # SNR of the training data; pruning arms only when this is negative
    snr_db: float | None = None
    prune_fraction: float = 0.1
    prune_on: str = "val"

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ContractViolation("learning_rate must be positive")
        if not 0.0 <= self.prune_fraction < 1.0:
            raise ContractViolation("prune_fraction must be in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ContractViolation("epochs and batch_size must be positive")
        if self.prune_on not in ("val", "train"):
            raise ContractViolation("prune_on must be 'val' or 'train'")

    @property
    def pruning_armed(self) -> bool:
        return self.snr_db is not None and self.snr_db < 0 and self.prune_fraction > 0


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray


def adamw_step(
    params: list[Tensor],
    grads: list[np.ndarray | None],
    state: dict[int, AdamState],
    step: int,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> None:
    """One AdamW update, in place. ``step`` is 1-based; ``state`` is keyed by parameter index.

    The Adam move is applied first, then the decoupled decay
    ``p -= lr * weight_decay * p`` on the moved value.
    """
    if len(params) != len(grads):
        raise ContractViolation("one gradient per parameter required")
    b1, b2 = betas
    c1 = 1.0 - b1**step
    c2 = 1.0 - b2**step
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.shape:
            raise ContractViolation(f"gradient shape {g.shape} != parameter shape {p.shape}")
        s = state.get(i)
        if s is None:
            s = state[i] = AdamState(np.zeros_like(p.data), np.zeros_like(p.data))
        s.m *= b1
        s.m += (1.0 - b1) * g
        s.v *= b2
        s.v += (1.0 - b2) * g * g
        update = (s.m / c1) / (np.sqrt(s.v / c2) + eps)
        data = p.data - lr * update
        data -= lr * weight_decay * data
        p.data = data


class AdamW:
    def __init__(self, params: list[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 1e-5) -> None:
        self.params = list(params)
        self.lr, self.betas, self.eps, self.weight_decay = lr, betas, eps, weight_decay
        self.state: dict[int, AdamState] = {}
        self.steps = 0

    def step(self) -> None:
        self.steps += 1
        adamw_step(
            self.params, [p.grad for p in self.params], self.state, self.steps,
            self.lr, self.betas, self.eps, self.weight_decay,
        )

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


@dataclass(frozen=True)
class PruneEvent:
    epoch: int
    zeroed: int
    trigger: float


def prune_smallest(weight: Tensor, fraction: float) -> int:
    """Zero the ``ceil(fraction * n)`` smallest-magnitude entries (ties: lowest flat index)."""
    flat = weight.data.reshape(-1).copy()
    k = math.ceil(fraction * flat.size)
    if k == 0:
        return 0
    order = np.argsort(np.abs(flat), kind="stable")
    flat[order[:k]] = 0.0
    weight.data = flat.reshape(weight.shape)
    return k


def adaptive_prune(
    model: LSRNet,
    p: float,
    best_val_loss: float | None,
    current_val_loss: float,
    epoch: int = 0,
) -> PruneEvent | None:
    """Prune the first denoising conv kernel once when the loss improves on the best so far."""
    if p <= 0 or best_val_loss is None or not current_val_loss < best_val_loss:
        return None
    zeroed = prune_smallest(model.cd1_kernel, p)
    return PruneEvent(epoch, zeroed, float(current_val_loss))


@dataclass
class EvalResult:
    loss: float
    accuracy: float
    per_class_accuracy: list[float]
    confusion: np.ndarray

    def table(self) -> str:
        k = self.confusion.shape[0]
        lines = [f"accuracy: {100 * self.accuracy:.2f}%  loss: {self.loss:.4f}", "class  accuracy  support"]
        for c in range(k):
            lines.append(f"{c:>5}  {100 * self.per_class_accuracy[c]:>7.2f}%  {int(self.confusion[c].sum()):>7}")
        lines.append("confusion (rows=true, cols=predicted):")
        lines += ["  " + " ".join(f"{int(v):>6}" for v in row) for row in self.confusion]
        return "\n".join(lines)


@dataclass
class Metrics:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = 0
    test: EvalResult | None = None


def _batch(d: DatasetContainer, index: np.ndarray) -> Tensor:
    return Tensor(d.samples[index].astype(np.float64)[:, None, :])


def predict(model: LSRNet, d: DatasetContainer, batch_size: int = 256) -> np.ndarray:
    """Class probabilities for every segment, eval mode, index-ordered."""
    model.eval()
    out = []
    with no_grad():
        for start in range(0, len(d), batch_size):
            idx = np.arange(start, min(start + batch_size, len(d)))
            out.append(model(_batch(d, idx)).data)
    return np.concatenate(out) if out else np.zeros((0, model.cfg.classes))


def evaluate(model: LSRNet, d: DatasetContainer, batch_size: int = 256) -> EvalResult:
    _check_compatible(model, d)
    probs = predict(model, d, batch_size)
    labels = d.labels.astype(np.int64)
    k = model.cfg.classes
    pred = probs.argmax(axis=1)
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (labels, pred), 1)
    support = confusion.sum(axis=1)
    per_class = [float(confusion[c, c] / support[c]) if support[c] else 0.0 for c in range(k)]
    accuracy = float(np.trace(confusion) / len(d)) if len(d) else 0.0
    picked = np.maximum(probs[np.arange(len(d)), labels], np.finfo(np.float64).tiny)
    loss = float(-np.log(picked).mean()) if len(d) else 0.0
    return EvalResult(loss, accuracy, per_class, confusion)


def _check_compatible(model: LSRNet, d: DatasetContainer) -> None:
    if d.segment_length != model.cfg.input_length:
        raise ContractViolation(
            f"segment length {d.segment_length} != model input length {model.cfg.input_length}"
        )
    if d.class_count != model.cfg.classes:
        raise ContractViolation(f"dataset has {d.class_count} classes, model {model.cfg.classes}")


def train(
    model: LSRNet,
    train_set: DatasetContainer,
    val_set: DatasetContainer,
    cfg: TrainConfig,
    on_prune: Callable[[PruneEvent, LSRNet], None] | None = None,
) -> tuple[LSRNet, Metrics, list[PruneEvent]]:
    """Mini-batch AdamW training with best-validation-loss weight selection.

    After each epoch's validation pass, if pruning is armed and the
    monitored loss beats its best so far, the first denoising conv is
    pruned once (no persistent mask). ``on_prune`` sees the model right
    after each event, before any further optimizer step.
    """
    _check_compatible(model, train_set)
    _check_compatible(model, val_set)
    if len(train_set) == 0 or len(val_set) == 0:
        raise ContractViolation("training and validation sets must be non-empty")

    rng = np.random.default_rng([cfg.seed, 1])
    opt = AdamW(model.parameters(), cfg.learning_rate, cfg.betas, cfg.eps, cfg.weight_decay)
    metrics = Metrics()
    events: list[PruneEvent] = []
    best_val = math.inf
    best_state = model.state_dict()
    best_monitored: float | None = None
    labels = train_set.labels.astype(np.int64)

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        model.train()
        order = rng.permutation(len(train_set))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            opt.zero_grad()
            loss = cross_entropy(model(_batch(train_set, idx)), labels[idx])
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        train_loss = total / len(order)
        val = evaluate(model, val_set)
        metrics.train_loss.append(train_loss)
        metrics.val_loss.append(val.loss)
        metrics.val_accuracy.append(val.accuracy)

        if val.loss < best_val:
            best_val = val.loss
            best_state = model.state_dict()
            metrics.best_epoch = epoch

        monitored = val.loss if cfg.prune_on == "val" else train_loss
        if cfg.pruning_armed:
            event = adaptive_prune(model, cfg.prune_fraction, best_monitored, monitored, epoch)
            if event is not None:
                events.append(event)
                if on_prune is not None:
                    on_prune(event, model)
        best_monitored = monitored if best_monitored is None else min(best_monitored, monitored)

        log.info(
            "epoch %d train_loss=%.4f val_loss=%.4f val_acc=%.4f (%.1fs)",
            epoch, train_loss, val.loss, val.accuracy, time.perf_counter() - t0,
        )

    model.load_state_dict(best_state)
    model.eval()
    return model, metrics, events


@dataclass
class BenchResult:
    mean_ms: float
    std_ms: float
    samples_ms: list[float]


def bench_inference(model: LSRNet, input_length: int | None = None, repeats: int = 128, warmup: int = 8,
                    seed: int = 0) -> BenchResult:
    """Single-thread latency of one-segment eval-mode forwards."""
    n = model.cfg.input_length if input_length is None else input_length
    if repeats < 1 or warmup < 0:
        raise ContractViolation("repeats must be positive and warmup non-negative")
    x = Tensor(np.random.default_rng(seed).standard_normal((1, 1, n)))
    model.eval()
    samples = []
    with threadpool_limits(limits=1), no_grad():
        for _ in range(warmup):
            model(x)
        for _ in range(repeats):
            t0 = time.perf_counter()
            model(x)
            samples.append((time.perf_counter() - t0) * 1000.0)
    arr = np.array(samples)
    return BenchResult(float(arr.mean()), float(arr.std()), samples)
