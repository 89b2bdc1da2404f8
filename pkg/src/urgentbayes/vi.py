"""Variational-inference variant: an approximate posterior q(z|x, y)
and a conditional prior p(z|x) over a latent code z, both diagonal
Gaussians computed from the encoder's final state.  Training minimizes
reconstruction cross-entropy (through a reparameterized sample from q)
plus the closed-form KL between q and p; prediction samples z from the
prior only, so labels never influence test-time output."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Parameter,
    Tensor,
    affine,
    clip,
    concat,
    cross_entropy_from_logits,
    exp,
    tanh_op,
)
from .encoder import BaseClassifier, aggregate_logit_samples, _uniform_init
from .errors import ConfigurationError, ShapeError, UsageError

LOG_SIGMA_BOUND = 8.0


@dataclass
class ViConfig:
    z_dim: int = 16
    m_train: int = 1
    m_test: int = 20
    kl_weight: float = 1.0

    def validate(self):
        if self.z_dim < 1:
            raise ConfigurationError(f"z_dim must be positive, got {self.z_dim}")
        if self.m_train < 1 or self.m_test < 1:
            raise ConfigurationError("sample counts must be >= 1")
        if self.kl_weight < 0:
            raise ConfigurationError(f"kl_weight must be >= 0, got {self.kl_weight}")


@dataclass
class GaussianDiag:
    """Diagonal Gaussian in log-sigma parameterization; rows are examples."""

    mu: Tensor          # (n, z_dim)
    log_sigma: Tensor   # (n, z_dim), clamped to +-LOG_SIGMA_BOUND upstream


@dataclass
class ViHeads:
    label_weight: Parameter      # (1, z_dim): embeds the scalar label
    label_bias: Parameter        # (z_dim,)
    post_hidden_weight: Parameter   # (hidden + z_dim, hidden)
    post_hidden_bias: Parameter     # (hidden,)
    prior_hidden_weight: Parameter  # (hidden, hidden)
    prior_hidden_bias: Parameter    # (hidden,)
    post_mu_weight: Parameter       # (hidden, z_dim)
    post_mu_bias: Parameter
    post_log_sigma_weight: Parameter
    post_log_sigma_bias: Parameter
    prior_mu_weight: Parameter
    prior_mu_bias: Parameter
    prior_log_sigma_weight: Parameter
    prior_log_sigma_bias: Parameter
    recon_weight: Parameter      # (z_dim + 2*hidden, 2)
    recon_bias: Parameter        # (2,)

    def parameters(self):
        return [
            self.label_weight, self.label_bias,
            self.post_hidden_weight, self.post_hidden_bias,
            self.prior_hidden_weight, self.prior_hidden_bias,
            self.post_mu_weight, self.post_mu_bias,
            self.post_log_sigma_weight, self.post_log_sigma_bias,
            self.prior_mu_weight, self.prior_mu_bias,
            self.prior_log_sigma_weight, self.prior_log_sigma_bias,
            self.recon_weight, self.recon_bias,
        ]


def init_vi_heads(hidden_dim, z_dim, rng):
    h, z = hidden_dim, z_dim

    def make(child, shape, fan_in, name):
        return Parameter(_uniform_init(rng.child(child), shape, fan_in), f"heads.{name}")

    def zero(shape, name):
        return Parameter(np.zeros(shape), f"heads.{name}")

    return ViHeads(
        label_weight=make("label", (1, z), 1, "label.weight"),
        label_bias=zero(z, "label.bias"),
        post_hidden_weight=make("post_hidden", (h + z, h), h + z, "post_hidden.weight"),
        post_hidden_bias=zero(h, "post_hidden.bias"),
        prior_hidden_weight=make("prior_hidden", (h, h), h, "prior_hidden.weight"),
        prior_hidden_bias=zero(h, "prior_hidden.bias"),
        post_mu_weight=make("post_mu", (h, z), h, "post_mu.weight"),
        post_mu_bias=zero(z, "post_mu.bias"),
        post_log_sigma_weight=make("post_log_sigma", (h, z), h, "post_log_sigma.weight"),
        post_log_sigma_bias=zero(z, "post_log_sigma.bias"),
        prior_mu_weight=make("prior_mu", (h, z), h, "prior_mu.weight"),
        prior_mu_bias=zero(z, "prior_mu.bias"),
        prior_log_sigma_weight=make("prior_log_sigma", (h, z), h, "prior_log_sigma.weight"),
        prior_log_sigma_bias=zero(z, "prior_log_sigma.bias"),
        recon_weight=make("recon", (z + 2 * h, 2), z + 2 * h, "recon.weight"),
        recon_bias=zero(2, "recon.bias"),
    )


def posterior_params(finals, labels, heads):
    """q(z | x, y): condition on the final state and the embedded label."""
    labels = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    y_emb = affine(Tensor(labels), heads.label_weight, heads.label_bias)
    hidden = tanh_op(
        affine(concat([finals, y_emb], axis=1), heads.post_hidden_weight, heads.post_hidden_bias)
    )
    mu = affine(hidden, heads.post_mu_weight, heads.post_mu_bias)
    log_sigma = clip(
        affine(hidden, heads.post_log_sigma_weight, heads.post_log_sigma_bias),
        -LOG_SIGMA_BOUND,
        LOG_SIGMA_BOUND,
    )
    return GaussianDiag(mu, log_sigma)


def prior_params(finals, heads):
    """p(z | x): no label path, by construction."""
    hidden = tanh_op(affine(finals, heads.prior_hidden_weight, heads.prior_hidden_bias))
    mu = affine(hidden, heads.prior_mu_weight, heads.prior_mu_bias)
    log_sigma = clip(
        affine(hidden, heads.prior_log_sigma_weight, heads.prior_log_sigma_bias),
        -LOG_SIGMA_BOUND,
        LOG_SIGMA_BOUND,
    )
    return GaussianDiag(mu, log_sigma)


def reparameterize(g, eps):
    """z = mu + sigma * eps; differentiable in mu and log_sigma."""
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != g.mu.data.shape:
        raise ShapeError(f"eps shape {eps.shape} does not match mu shape {g.mu.data.shape}")
    return g.mu + exp(g.log_sigma) * eps


def kl_diag_gaussians(q, p):
    """Closed-form KL(q ‖ p) per row:
    sum_j [ log(sigma_p/sigma_q) + (sigma_q^2 + (mu_q - mu_p)^2) / (2 sigma_p^2) - 1/2 ]."""
    d_mu = q.mu - p.mu
    inv_var_p = exp(p.log_sigma * (-2.0))
    terms = (
        (p.log_sigma - q.log_sigma)
        + (exp(q.log_sigma * 2.0) + d_mu * d_mu) * inv_var_p * 0.5
        - 0.5
    )
    return terms.sum(axis=1)


def reconstruction_logits(z, state, heads):
    """Affine head on (z ⊕ final state ⊕ context) for one encoded example."""
    if state.context is None:
        raise UsageError("encoder state is missing the context vector")
    return _recon_logits(z, state.final_state, state.context, heads)


def _recon_logits(z, finals, contexts, heads):
    return affine(concat([z, finals, contexts], axis=1), heads.recon_weight, heads.recon_bias)


def _elbo_parts(finals, contexts, labels, heads, cfg, rng):
    """Shared ELBO computation; returns (loss, reconstruction, kl) tensors."""
    labels = np.asarray(labels)
    n = labels.shape[0]
    q = posterior_params(finals, labels, heads)
    p = prior_params(finals, heads)
    kl = kl_diag_gaussians(q, p).mean()
    recon = None
    for m in range(cfg.m_train):
        eps = rng.child("eps", m).generator().standard_normal((n, cfg.z_dim))
        z = reparameterize(q, eps)
        ce = cross_entropy_from_logits(_recon_logits(z, finals, contexts, heads), labels)
        recon = ce if recon is None else recon + ce
    recon = recon * (1.0 / cfg.m_train)
    return recon + kl * cfg.kl_weight, recon, kl


def elbo_loss(state, label, heads, cfg, rng):
    """Negative ELBO for one encoded example (training objective)."""
    if state.context is None:
        raise UsageError("encoder state is missing the context vector")
    loss, _, _ = _elbo_parts(
        state.final_state, state.context, np.array([label]), heads, cfg, rng
    )
    return loss


class ViClassifier(BaseClassifier):
    kind = "vi"

    def __init__(self, hp, embedding_matrix, rng, cfg=None):
        super().__init__(hp, embedding_matrix, rng)
        cfg = cfg if cfg is not None else ViConfig(z_dim=hp.z_dim)
        cfg.validate()
        if cfg.z_dim != hp.z_dim:
            raise ConfigurationError(
                f"latent size disagreement: heads built for {hp.z_dim}, config says {cfg.z_dim}"
            )
        self.cfg = cfg
        self.heads = init_vi_heads(hp.hidden_dim, hp.z_dim, rng.child("init", "heads"))

    def parameters(self):
        return super().parameters() + self.heads.parameters()

    def batch_loss_parts(self, ids, lengths, labels, rng=None, train=True):
        if rng is None:
            raise UsageError("a random stream is required to sample the latent code")
        _, finals, contexts = self.batch_states(ids, lengths)
        loss, recon, kl = _elbo_parts(finals, contexts, labels, self.heads, self.cfg, rng)
        return loss, {"reconstruction": recon.item(), "kl": kl.item()}

    def batch_loss(self, ids, lengths, labels, rng=None, train=True):
        return self.batch_loss_parts(ids, lengths, labels, rng, train)[0]

    # -- prediction (numpy mirror of the prior + reconstruction heads) ---

    def _np_prior(self, finals):
        hidden = np.tanh(
            finals @ self.heads.prior_hidden_weight.data + self.heads.prior_hidden_bias.data
        )
        mu = hidden @ self.heads.prior_mu_weight.data + self.heads.prior_mu_bias.data
        log_sigma = np.clip(
            hidden @ self.heads.prior_log_sigma_weight.data + self.heads.prior_log_sigma_bias.data,
            -LOG_SIGMA_BOUND,
            LOG_SIGMA_BOUND,
        )
        return mu, log_sigma

    def infer_logits(self, ids, lengths, masks=None):
        """Deterministic forward: the latent code pinned at the prior mean."""
        if masks is not None:
            raise UsageError("the variational path has no dropout placements")
        finals, contexts = self.infer_states(ids, lengths)
        mu, _ = self._np_prior(finals)
        pred_in = np.concatenate([mu, finals, contexts], axis=1)
        return pred_in @ self.heads.recon_weight.data + self.heads.recon_bias.data

    def predict_batch(self, ids, lengths, rng=None):
        """Sample m_test latent codes from the conditional prior; labels
        play no part anywhere in this path."""
        if rng is None:
            raise UsageError("a random stream is required to sample the latent code")
        finals, contexts = self.infer_states(ids, lengths)
        mu, log_sigma = self._np_prior(finals)
        sigma = np.exp(log_sigma)
        n = finals.shape[0]
        m = self.cfg.m_test
        samples = np.empty((m, n, self.hp.num_classes))
        for k in range(m):
            eps = rng.child("eps", k).generator().standard_normal(mu.shape)
            z = mu + sigma * eps
            pred_in = np.concatenate([z, finals, contexts], axis=1)
            samples[k] = pred_in @ self.heads.recon_weight.data + self.heads.recon_bias.data
        return [aggregate_logit_samples(samples[:, i, :]) for i in range(n)]


def vi_predict(example, model, rng):
    """Single-example prediction; reads token ids and length only."""
    return model.predict_batch(
        example.token_ids[None, :], np.array([example.true_length]), rng
    )[0]
