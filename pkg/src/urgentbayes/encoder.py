"""The deterministic classifier: embedding lookup, a two-layer LSTM,
dot-product attention over the top layer's states, and an affine
prediction head on (context ⊕ final state).

Two forward implementations live here.  The graph one records onto the
autodiff tape and is used for training and gradient checks.  The plain
numpy one (`infer_logits`) mirrors the same arithmetic without tape
overhead and is what every prediction path uses; keeping the formulas
textually parallel is what makes the zero-dropout Bayesian variant agree
with the deterministic model bit for bit.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Parameter,
    Tensor,
    affine,
    concat,
    cross_entropy_from_logits,
    gather_rows,
    matmul,
    sigmoid,
    softmax_stable,
    tanh_op,
    transpose,
)
from .errors import ConfigurationError, DataError, ShapeError, UsageError
from .metrics import predictive_entropy

log = logging.getLogger(__name__)

ATTENTION_MODES = ("softmax", "ratio")
MODEL_KINDS = ("base", "mcd", "vi")

# dropout placement indices shared with the Monte Carlo variant
AFTER_LAYER_1 = 0
AFTER_LAYER_2 = 1
PREDICTION_INPUT = 2


@dataclass
class HyperParams:
    """Architecture sizes; training settings live in TrainConfig."""

    max_len: int = 128
    embed_dim: int = 300
    hidden_dim: int = 128
    num_layers: int = 2
    num_classes: int = 2
    attention_mode: str = "softmax"
    z_dim: int = 16

    def validate(self):
        for name in ("max_len", "embed_dim", "hidden_dim", "z_dim"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.num_layers != 2:
            raise ConfigurationError("the architecture is fixed at two recurrent layers")
        if self.num_classes != 2:
            raise ConfigurationError("the task is binary; num_classes must be 2")
        if self.attention_mode not in ATTENTION_MODES:
            raise ConfigurationError(
                f"attention_mode must be one of {ATTENTION_MODES}, got {self.attention_mode!r}"
            )


@dataclass
class LstmLayerParams:
    """Gate order in the fused matrices: input, forget, candidate, output."""

    input_weights: Parameter     # (input_dim, 4*hidden)
    recurrent_weights: Parameter  # (hidden, 4*hidden)
    bias: Parameter              # (4*hidden,)

    @property
    def hidden_dim(self):
        return self.recurrent_weights.data.shape[0]

    def parameters(self):
        return [self.input_weights, self.recurrent_weights, self.bias]


def _uniform_init(rng, shape, fan_in):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.generator().uniform(-bound, bound, size=shape)


def init_lstm_layer(input_dim, hidden_dim, rng, name):
    wx = _uniform_init(rng.child("input"), (input_dim, 4 * hidden_dim), input_dim)
    wh = _uniform_init(rng.child("recurrent"), (hidden_dim, 4 * hidden_dim), hidden_dim)
    bias = np.zeros(4 * hidden_dim)
    bias[hidden_dim : 2 * hidden_dim] = 1.0  # forget gate starts open
    return LstmLayerParams(
        Parameter(wx, f"{name}.input_weights"),
        Parameter(wh, f"{name}.recurrent_weights"),
        Parameter(bias, f"{name}.bias"),
    )


def lstm_step(params, h_prev, c_prev, x):
    """One cell update over a batch of rows: returns (h, c)."""
    hd = params.hidden_dim
    pre = affine(x, params.input_weights, params.bias) + matmul(h_prev, params.recurrent_weights)
    i = sigmoid(pre[:, 0 * hd : 1 * hd])
    f = sigmoid(pre[:, 1 * hd : 2 * hd])
    g = tanh_op(pre[:, 2 * hd : 3 * hd])
    o = sigmoid(pre[:, 3 * hd : 4 * hd])
    c = f * c_prev + i * g
    h = o * tanh_op(c)
    return h, c


def embed_sequence(example, table):
    """Rows of the embedding table for the example's token ids.

    Accepts a Parameter/Tensor table (gradient flows into used rows) or a
    plain EmbeddingTable."""
    tensor = table if isinstance(table, Tensor) else Tensor(table.matrix)
    return gather_rows(tensor, example.token_ids)


@dataclass
class EncoderState:
    """Graph-side outputs of encoding one example.

    `states` holds only the rows for real tokens; `mask` marks which of
    the padded positions those are."""

    states: Tensor                 # (true_length, hidden)
    final_state: Tensor            # (1, hidden), state at the last real token
    mask: np.ndarray               # (max_len,) bool
    true_length: int
    attention: Tensor = None       # (true_length, 1) once computed
    context: Tensor = None         # (1, hidden) once computed
    attention_degenerate: bool = False

    def padded_states(self):
        """(max_len, hidden) array with zero rows beyond the valid window."""
        out = np.zeros((self.mask.shape[0], self.states.data.shape[1]))
        out[: self.true_length] = self.states.data
        return out

    def attention_padded(self):
        """(max_len,) weights with exact zeros at padded positions."""
        if self.attention is None:
            raise UsageError("attention weights not computed yet")
        out = np.zeros(self.mask.shape[0])
        out[: self.true_length] = self.attention.data[:, 0]
        return out


def _ratio_weights_graph(scores):
    """Literal sum-normalization of raw dot products; falls back to
    uniform weights when the denominator vanishes."""
    denom = scores.sum()
    if abs(denom.item()) < 1e-12:
        n = scores.data.shape[0]
        log.warning(
            "degenerate attention: score sum %.3e below 1e-12, using uniform weights",
            denom.item(),
        )
        return Tensor(np.full((n, 1), 1.0 / n)), True
    return scores / denom, False


def attention_scores(state, mode="softmax"):
    """Weights over the valid positions from dot products with the final
    state; stores them on the state and returns them."""
    if mode not in ATTENTION_MODES:
        raise ConfigurationError(f"unknown attention mode {mode!r}")
    scores = matmul(state.states, transpose(state.final_state))  # (L, 1)
    if mode == "softmax":
        weights = softmax_stable(scores, axis=0)
        state.attention_degenerate = False
    else:
        weights, state.attention_degenerate = _ratio_weights_graph(scores)
    state.attention = weights
    return weights


def context_vector(state):
    """Attention-weighted sum of the valid states: (1, hidden)."""
    if state.attention is None:
        raise UsageError("compute attention_scores before the context vector")
    ctx = matmul(transpose(state.attention), state.states)
    state.context = ctx
    return ctx


def predict_logits(state, head_weight, head_bias):
    """Affine head on (context ⊕ final state)."""
    if state.context is None:
        raise UsageError("compute the context vector before predicting")
    return affine(concat([state.context, state.final_state], axis=1), head_weight, head_bias)


def _np_sigmoid(x):
    t = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))


@dataclass
class PredictiveDistribution:
    """Aggregate of one-or-more stochastic forward passes on one example."""

    mean_probs: np.ndarray        # (2,)
    mean_logits: np.ndarray       # (2,)
    per_sample_logits: np.ndarray  # (M, 2)
    entropy: float
    predicted_label: int


def aggregate_logit_samples(per_sample_logits):
    """Average logits over samples (compensated summation, so the result
    is independent of sample order), then softmax, entropy, argmax.

    Ties at argmax resolve to label 0."""
    samples = np.asarray(per_sample_logits, dtype=np.float64)
    if samples.ndim != 2:
        raise ShapeError("expected an (M, num_classes) array of logits")
    m = samples.shape[0]
    if (samples == samples[0]).all():
        # the exact mean of identical rows is the row itself; fsum/m would
        # round twice and can land 1 ulp off
        mean_logits = samples[0].copy()
    else:
        mean_logits = np.array([math.fsum(samples[:, j]) / m for j in range(samples.shape[1])])
    shifted = mean_logits - mean_logits.max()
    e = np.exp(shifted)
    mean_probs = e / e.sum()
    return PredictiveDistribution(
        mean_probs=mean_probs,
        mean_logits=mean_logits,
        per_sample_logits=samples,
        entropy=predictive_entropy(mean_probs),
        predicted_label=int(np.argmax(mean_probs)),
    )


class BaseClassifier:
    """Deterministic model; also the chassis the Bayesian variants extend.

    Dropout hooks are present but inert here: `_placement_masks` returns
    None, so every mask branch is skipped and the forward is exactly the
    plain deterministic computation."""

    kind = "base"

    def __init__(self, hp, embedding_matrix, rng):
        hp.validate()
        matrix = np.asarray(embedding_matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != hp.embed_dim:
            raise ShapeError(
                f"embedding matrix shape {matrix.shape} does not match embed_dim {hp.embed_dim}"
            )
        self.hp = hp
        init = rng.child("init")
        h = hp.hidden_dim
        self.embedding = Parameter(matrix.copy(), "embedding")
        self.layer1 = init_lstm_layer(hp.embed_dim, h, init.child("layer1"), "layer1")
        self.layer2 = init_lstm_layer(h, h, init.child("layer2"), "layer2")
        self.head_weight = Parameter(
            _uniform_init(init.child("head"), (2 * h, hp.num_classes), 2 * h), "head.weight"
        )
        self.head_bias = Parameter(np.zeros(hp.num_classes), "head.bias")

    def parameters(self):
        return (
            [self.embedding]
            + self.layer1.parameters()
            + self.layer2.parameters()
            + [self.head_weight, self.head_bias]
        )

    # -- dropout hooks (overridden by the Monte Carlo variant) ----------

    def _placement_masks(self, n_rows, rng, train):
        """Scaled keep-masks per placement index, or None for no dropout."""
        return None

    # -- graph forward (training / gradient checks) ---------------------

    def encode_example(self, example):
        """Single-example graph encoding through attention; for tests and
        the per-example helpers above."""
        state = self._encode_rows(
            example.token_ids[None, :], np.array([example.true_length]), masks=None
        )[0]
        attention_scores(state, self.hp.attention_mode)
        context_vector(state)
        return state

    def _encode_rows(self, ids, lengths, masks):
        """Runs the recurrent stack over a batch; returns one EncoderState
        per example (attention not yet applied)."""
        ids = np.asarray(ids)
        lengths = np.asarray(lengths)
        n = ids.shape[0]
        if (lengths < 1).any():
            raise DataError("cannot encode an empty sequence (true_length = 0)")
        if ids.shape[1] < lengths.max():
            raise ShapeError("token id rows shorter than stated true lengths")
        h = self.hp.hidden_dim
        steps = int(lengths.max())
        h1 = c1 = h2 = c2 = Tensor(np.zeros((n, h)))
        states_by_time = []
        for t in range(steps):
            x_t = gather_rows(self.embedding, ids[:, t])
            h1, c1 = lstm_step(self.layer1, h1, c1, x_t)
            fed = h1 if masks is None else h1 * masks[AFTER_LAYER_1]
            h2, c2 = lstm_step(self.layer2, h2, c2, fed)
            visible = h2 if masks is None else h2 * masks[AFTER_LAYER_2]
            states_by_time.append(visible)
        out = []
        for i in range(n):
            length = int(lengths[i])
            rows = [states_by_time[t][i : i + 1] for t in range(length)]
            states_i = rows[0] if length == 1 else concat(rows, axis=0)
            mask = np.zeros(ids.shape[1], dtype=bool)
            mask[:length] = True
            out.append(
                EncoderState(
                    states=states_i,
                    final_state=states_by_time[length - 1][i : i + 1],
                    mask=mask,
                    true_length=length,
                )
            )
        return out

    def batch_states(self, ids, lengths, masks=None):
        """Graph states with attention applied; returns (states, finals,
        contexts) where finals and contexts are (n, hidden) tensors."""
        states = self._encode_rows(ids, lengths, masks)
        for st in states:
            attention_scores(st, self.hp.attention_mode)
            context_vector(st)
        finals = concat([st.final_state for st in states], axis=0) if len(states) > 1 else states[0].final_state
        contexts = concat([st.context for st in states], axis=0) if len(states) > 1 else states[0].context
        return states, finals, contexts

    def batch_logits(self, ids, lengths, masks=None):
        _, finals, contexts = self.batch_states(ids, lengths, masks)
        pred_in = concat([contexts, finals], axis=1)
        if masks is not None:
            pred_in = pred_in * masks[PREDICTION_INPUT]
        return affine(pred_in, self.head_weight, self.head_bias)

    def batch_loss(self, ids, lengths, labels, rng=None, train=True):
        masks = self._placement_masks(len(labels), rng, train)
        return cross_entropy_from_logits(self.batch_logits(ids, lengths, masks), labels)

    def batch_loss_parts(self, ids, lengths, labels, rng=None, train=True):
        """Loss tensor plus named scalar components for the loss trace."""
        loss = self.batch_loss(ids, lengths, labels, rng, train)
        return loss, {"cross_entropy": loss.item()}

    # -- numpy forward (prediction) --------------------------------------

    def infer_states(self, ids, lengths, masks=None):
        """Tape-free mirror of the graph encoder, same arithmetic and
        order: returns (finals, contexts), each (n, hidden)."""
        ids = np.asarray(ids)
        lengths = np.asarray(lengths)
        n = ids.shape[0]
        if (lengths < 1).any():
            raise DataError("cannot encode an empty sequence (true_length = 0)")
        h = self.hp.hidden_dim
        steps = int(lengths.max())
        emb = self.embedding.data
        wx1, wh1, b1 = (p.data for p in self.layer1.parameters())
        wx2, wh2, b2 = (p.data for p in self.layer2.parameters())
        h1 = c1 = h2 = c2 = np.zeros((n, h))
        states = np.empty((steps, n, h))
        for t in range(steps):
            x_t = emb[ids[:, t]]
            pre1 = (x_t @ wx1 + b1) + (h1 @ wh1)
            i1, f1 = _np_sigmoid(pre1[:, :h]), _np_sigmoid(pre1[:, h : 2 * h])
            g1, o1 = np.tanh(pre1[:, 2 * h : 3 * h]), _np_sigmoid(pre1[:, 3 * h :])
            c1 = f1 * c1 + i1 * g1
            h1 = o1 * np.tanh(c1)
            fed = h1 if masks is None else h1 * masks[AFTER_LAYER_1]
            pre2 = (fed @ wx2 + b2) + (h2 @ wh2)
            i2, f2 = _np_sigmoid(pre2[:, :h]), _np_sigmoid(pre2[:, h : 2 * h])
            g2, o2 = np.tanh(pre2[:, 2 * h : 3 * h]), _np_sigmoid(pre2[:, 3 * h :])
            c2 = f2 * c2 + i2 * g2
            h2 = o2 * np.tanh(c2)
            states[t] = h2 if masks is None else h2 * masks[AFTER_LAYER_2]
        finals = np.empty((n, h))
        contexts = np.empty((n, h))
        for i in range(n):
            length = int(lengths[i])
            valid = states[:length, i, :]              # (L, h)
            final = states[length - 1, i : i + 1, :]   # (1, h)
            scores = valid @ final.T                   # (L, 1)
            weights = self._np_attention(scores)
            finals[i] = final[0]
            contexts[i] = (weights.T @ valid)[0]
        return finals, contexts

    def infer_logits(self, ids, lengths, masks=None):
        finals, contexts = self.infer_states(ids, lengths, masks)
        pred_in = np.concatenate([contexts, finals], axis=1)
        if masks is not None:
            pred_in = pred_in * masks[PREDICTION_INPUT]
        return pred_in @ self.head_weight.data + self.head_bias.data

    def _np_attention(self, scores):
        if self.hp.attention_mode == "softmax":
            e = np.exp(scores - scores.max(axis=0, keepdims=True))
            return e / e.sum(axis=0, keepdims=True)
        denom = scores.sum()
        if abs(denom) < 1e-12:
            log.warning(
                "degenerate attention: score sum %.3e below 1e-12, using uniform weights",
                denom,
            )
            return np.full_like(scores, 1.0 / scores.shape[0])
        return scores / denom

    # -- prediction -------------------------------------------------------

    def predict_batch(self, ids, lengths, rng=None):
        """One deterministic pass; the sample trace has a single row."""
        logits = self.infer_logits(ids, lengths)
        return [aggregate_logit_samples(logits[i : i + 1]) for i in range(len(logits))]
