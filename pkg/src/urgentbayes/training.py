"""Mini-batch training with adaptive moment estimation.

The loop is deterministic given (seed, data, config): batch order comes
from a per-epoch child stream and per-step stochasticity (dropout masks,
latent draws) from a per-step child stream, so repeating a run
reproduces every parameter bitwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Parameter, RngStream, backward
from .corpus import LabeledExample
from .encoder import MODEL_KINDS, BaseClassifier, HyperParams
from .errors import (
    ConfigurationError,
    DataError,
    DivergenceError,
    NonFiniteError,
    UsageError,
)
from .mcd import McdClassifier, McdConfig
from .metrics import MetricsReport, build_report
from .vi import ViClassifier, ViConfig

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 20
    seed: int = 0
    model_kind: str = "base"
    optimizer: str = "adaptive_moment"
    gradient_clip_norm: float | None = 5.0

    def validate(self) -> None:
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be a positive integer")
        if self.epochs < 0:
            raise ConfigurationError("epochs must not be negative")
        if self.model_kind not in MODEL_KINDS:
            raise ConfigurationError(
                f"model_kind must be one of {MODEL_KINDS}, got {self.model_kind!r}"
            )
        if self.optimizer != "adaptive_moment":
            raise ConfigurationError(
                f"unsupported optimizer {self.optimizer!r}"
            )
        if self.gradient_clip_norm is not None and not self.gradient_clip_norm > 0:
            raise ConfigurationError("gradient_clip_norm must be positive or none")


class AdaptiveMomentState:
    """First/second moment accumulators, one pair per parameter."""

    def __init__(self, params: list[Parameter]):
        self.step_count = 0
        self.first = [np.zeros_like(p.data) for p in params]
        self.second = [np.zeros_like(p.data) for p in params]


def adaptive_moment_step(
    params: list[Parameter],
    state: AdaptiveMomentState,
    learning_rate: float,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    epsilon: float = ADAM_EPSILON,
) -> None:
    """One bias-corrected adaptive moment update, in place."""
    if len(params) != len(state.first):
        raise UsageError("optimizer state does not match parameter list")
    state.step_count += 1
    t = state.step_count
    for p, m, v in zip(params, state.first, state.second):
        g = p.grad
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p.data -= learning_rate * m_hat / (np.sqrt(v_hat) + epsilon)


def clip_gradient_norm(params: list[Parameter], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm.

    Returns the pre-clip norm.
    """
    total = 0.0
    for p in params:
        total += float(np.sum(p.grad * p.grad))
    norm = math.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for p in params:
            p.grad *= scale
    return norm


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    parts: dict[str, float] = field(default_factory=dict)


@dataclass
class TrainResult:
    loss_trace: list[EpochRecord]
    n_steps: int


def _stack(examples: list[LabeledExample]):
    ids = np.stack([ex.token_ids for ex in examples])
    lengths = np.array([ex.true_length for ex in examples], dtype=np.int64)
    labels = np.array([ex.label for ex in examples], dtype=np.int64)
    return ids, lengths, labels


def train(
    model: BaseClassifier,
    examples: list[LabeledExample],
    cfg: TrainConfig,
) -> TrainResult:
    cfg.validate()
    if not examples:
        raise DataError("training split is empty")
    labels_present = {ex.label for ex in examples}
    if labels_present != {0, 1}:
        raise DataError(
            f"training split must contain both classes, found labels {sorted(labels_present)}"
        )

    ids, lengths, labels = _stack(examples)
    params = model.parameters()
    state = AdaptiveMomentState(params)
    root = RngStream(cfg.seed)
    n = len(examples)

    trace: list[EpochRecord] = []
    global_step = 0
    for epoch in range(cfg.epochs):
        order = root.child("shuffle", epoch).generator().permutation(n)
        batch_losses: list[float] = []
        part_sums: dict[str, float] = {}
        for start in range(0, n, cfg.batch_size):
            pick = order[start : start + cfg.batch_size]
            step_rng = root.child("step", global_step)
            try:
                loss, parts = model.batch_loss_parts(
                    ids[pick], lengths[pick], labels[pick], rng=step_rng, train=True
                )
                loss_value = loss.item()
                if not math.isfinite(loss_value):
                    raise NonFiniteError("loss is not finite")
                for p in params:
                    p.zero_grad()
                backward(loss)
            except NonFiniteError as exc:
                raise DivergenceError(
                    f"training diverged at epoch {epoch}, step {global_step}: {exc}"
                ) from exc
            if cfg.gradient_clip_norm is not None:
                clip_gradient_norm(params, cfg.gradient_clip_norm)
            adaptive_moment_step(params, state, cfg.learning_rate)
            batch_losses.append(loss_value)
            for k, v in parts.items():
                part_sums[k] = part_sums.get(k, 0.0) + v
            global_step += 1
        n_batches = len(batch_losses)
        trace.append(
            EpochRecord(
                epoch=epoch,
                loss=sum(batch_losses) / n_batches,
                parts={k: s / n_batches for k, s in part_sums.items()},
            )
        )
    return TrainResult(loss_trace=trace, n_steps=global_step)


def build_model(
    hp: HyperParams,
    embedding_matrix: np.ndarray,
    model_kind: str,
    seed: int,
    mcd_cfg: McdConfig | None = None,
    vi_cfg: ViConfig | None = None,
) -> BaseClassifier:
    """Construct a classifier of the requested kind.

    Equal seeds give bitwise-equal shared parameters across kinds, which
    is what makes paired model comparisons meaningful.
    """
    rng = RngStream(seed)
    if model_kind == "base":
        return BaseClassifier(hp, embedding_matrix, rng)
    if model_kind == "mcd":
        return McdClassifier(hp, embedding_matrix, rng, mcd_cfg)
    if model_kind == "vi":
        if vi_cfg is None:
            vi_cfg = ViConfig(z_dim=hp.z_dim)
        return ViClassifier(hp, embedding_matrix, rng, vi_cfg)
    raise ConfigurationError(f"unknown model kind {model_kind!r}")


def evaluate(
    model: BaseClassifier,
    examples: list[LabeledExample],
    rng: RngStream | None = None,
) -> MetricsReport:
    """Score a test split: deterministic pass for the base model,
    sampled predictive distributions for the Bayesian variants."""
    if not examples:
        raise UsageError("test split is empty")
    ids, lengths, labels = _stack(examples)
    dists = model.predict_batch(ids, lengths, rng)
    predictions = [d.predicted_label for d in dists]
    entropies = [d.entropy for d in dists]
    return build_report(labels, predictions, entropies)


def train_accuracy(model: BaseClassifier, examples: list[LabeledExample]) -> float:
    """Fraction of examples the deterministic forward labels correctly."""
    if not examples:
        raise UsageError("no examples")
    ids, lengths, labels = _stack(examples)
    logits = model.infer_logits(ids, lengths)
    predictions = np.argmax(logits, axis=1)
    ties = logits[:, 0] == logits[:, 1]
    predictions[ties] = 0
    return float(np.mean(predictions == labels))
