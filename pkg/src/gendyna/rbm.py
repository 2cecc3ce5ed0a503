"""Restricted Boltzmann Machine with binary hiddens and binary or Gaussian
visibles, trained by contrastive divergence.

Every conditional works on a single vector or on a batch (rows = examples).
Small instances expose exact free-energy / likelihood oracles.
"""

from dataclasses import dataclass
import itertools

import numpy as np

from .numeric import Rng, sigmoid

BINARY = "binary"
GAUSSIAN = "gaussian"

ENUMERATION_CAP = 20  # n_visible + n_hidden bound for exact oracles


@dataclass
class RbmParams:
    weights: np.ndarray          # (n_visible, n_hidden)
    v_bias: np.ndarray           # (n_visible,)
    h_bias: np.ndarray           # (n_hidden,)
    visible_family: str = BINARY

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.v_bias = np.asarray(self.v_bias, dtype=np.float64)
        self.h_bias = np.asarray(self.h_bias, dtype=np.float64)
        if self.weights.shape != (self.v_bias.shape[0], self.h_bias.shape[0]):
            raise ValueError("inconsistent RBM parameter shapes")
        if self.visible_family not in (BINARY, GAUSSIAN):
            raise ValueError(f"unknown visible family {self.visible_family!r}")
        if self.n_hidden < 1 or self.n_visible < 1:
            raise ValueError("RBM needs at least one visible and one hidden unit")
        for a in (self.weights, self.v_bias, self.h_bias):
            if not np.all(np.isfinite(a)):
                raise ValueError("non-finite RBM parameters")

    @property
    def n_visible(self):
        return self.weights.shape[0]

    @property
    def n_hidden(self):
        return self.weights.shape[1]

    def copy(self):
        return RbmParams(self.weights.copy(), self.v_bias.copy(),
                         self.h_bias.copy(), self.visible_family)


@dataclass
class CdConfig:
    k: int = 1
    learning_rate: float = 0.1
    momentum: float = 0.0
    epochs: int = 1
    minibatch_size: int = 1
    deterministic_activations: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("CD step count k must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.minibatch_size < 1:
            raise ValueError("minibatch size must be >= 1")


@dataclass
class Velocity:
    """Momentum accumulator shaped like the RBM parameters."""
    dw: np.ndarray
    dvb: np.ndarray
    dhb: np.ndarray

    @staticmethod
    def zeros(rbm: RbmParams) -> "Velocity":
        return Velocity(np.zeros_like(rbm.weights),
                        np.zeros_like(rbm.v_bias),
                        np.zeros_like(rbm.h_bias))


def init_rbm(n_visible, n_hidden, rng: Rng, visible_family=BINARY,
             weight_scale=0.01) -> RbmParams:
    """Small-Gaussian weights, zero biases."""
    w = rng.gaussian(0.0, weight_scale, size=(n_visible, n_hidden))
    return RbmParams(w, np.zeros(n_visible), np.zeros(n_hidden), visible_family)


def _check_visible(rbm, v):
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != rbm.n_visible:
        raise ValueError(f"expected {rbm.n_visible} visible units, got {v.shape[-1]}")
    return v


def _check_hidden(rbm, h):
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != rbm.n_hidden:
        raise ValueError(f"expected {rbm.n_hidden} hidden units, got {h.shape[-1]}")
    return h


def prop_up(rbm: RbmParams, v):
    """P(h_j = 1 | v), elementwise over a vector or batch."""
    v = _check_visible(rbm, v)
    return sigmoid(v @ rbm.weights + rbm.h_bias)


def prop_down(rbm: RbmParams, h):
    """P(v_i = 1 | h) for binary visibles, conditional mean for Gaussian."""
    h = _check_hidden(rbm, h)
    act = h @ rbm.weights.T + rbm.v_bias
    if rbm.visible_family == BINARY:
        return sigmoid(act)
    return act


def sample_hidden(rbm, v, rng: Rng):
    return rng.bernoulli(prop_up(rbm, v))


def sample_visible(rbm, h, rng: Rng):
    mean = prop_down(rbm, h)
    if rbm.visible_family == BINARY:
        return rng.bernoulli(mean)
    return rng.gaussian(mean, 1.0, size=np.shape(mean))


def gibbs_step(rbm: RbmParams, v, rng: Rng):
    """One block-Gibbs sweep: h ~ P(h|v), then v' ~ P(v|h)."""
    h = sample_hidden(rbm, v, rng)
    v_next = sample_visible(rbm, h, rng)
    return h, v_next


def cd_update(rbm: RbmParams, batch, cfg: CdConfig, velocity: Velocity,
              rng: Rng):
    """One contrastive-divergence parameter update on a minibatch.

    Positive phase uses hidden probabilities; the negative phase runs
    cfg.k Gibbs steps from the data (sampled states, final hidden
    inference by probabilities). Returns (new_params, new_velocity).
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.size == 0:
        raise ValueError("empty minibatch")
    _check_visible(rbm, batch)
    n = batch.shape[0]

    h0 = prop_up(rbm, batch)
    vk = batch
    if cfg.deterministic_activations:
        for _ in range(cfg.k):
            hk = prop_up(rbm, vk)
            vk = prop_down(rbm, hk)
    else:
        for _ in range(cfg.k):
            hk_state = rng.bernoulli(prop_up(rbm, vk))
            vk = sample_visible(rbm, hk_state, rng)
    hk = prop_up(rbm, vk)

    lr = cfg.learning_rate
    gw = (batch.T @ h0 - vk.T @ hk) / n
    gvb = (batch.sum(axis=0) - vk.sum(axis=0)) / n
    ghb = (h0.sum(axis=0) - hk.sum(axis=0)) / n

    dw = cfg.momentum * velocity.dw + lr * gw
    dvb = cfg.momentum * velocity.dvb + lr * gvb
    dhb = cfg.momentum * velocity.dhb + lr * ghb

    new = RbmParams(rbm.weights + dw, rbm.v_bias + dvb, rbm.h_bias + dhb,
                    rbm.visible_family)
    return new, Velocity(dw, dvb, dhb)


def train_rbm(data, n_hidden, cfg: CdConfig, rng: Rng, visible_family=BINARY,
              rbm: RbmParams = None, checkpoint_every=0, checkpoint_fn=None):
    """Train an RBM with CD over cfg.epochs sweeps of seeded-shuffled,
    contiguous minibatches. Optionally calls checkpoint_fn(epoch, rbm)."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.size == 0:
        raise ValueError("empty training data")
    if rbm is None:
        rbm = init_rbm(data.shape[1], n_hidden, rng, visible_family)
    velocity = Velocity.zeros(rbm)
    order = rng.permutation(data.shape[0])
    shuffled = data[order]
    if checkpoint_fn is not None:
        checkpoint_fn(0, rbm)
    for epoch in range(cfg.epochs):
        for start in range(0, shuffled.shape[0], cfg.minibatch_size):
            rbm, velocity = cd_update(rbm, shuffled[start:start + cfg.minibatch_size],
                                      cfg, velocity, rng)
        if checkpoint_fn is not None and checkpoint_every > 0 \
                and (epoch + 1) % checkpoint_every == 0:
            checkpoint_fn(epoch + 1, rbm)
    return rbm


def free_energy(rbm: RbmParams, v):
    """F(v) = -v.v_bias - sum_j softplus(h_bias_j + (v W)_j); binary only."""
    if rbm.visible_family != BINARY:
        raise ValueError("free_energy supports the binary visible family only")
    v = _check_visible(rbm, v)
    act = v @ rbm.weights + rbm.h_bias
    return -(v @ rbm.v_bias) - np.logaddexp(0.0, act).sum(axis=-1)


def all_binary_vectors(n):
    """All 2^n binary vectors as a (2^n, n) array; lexicographic order."""
    return np.array(list(itertools.product((0.0, 1.0), repeat=n)),
                    dtype=np.float64).reshape(2**n, n)


def log_partition(rbm: RbmParams):
    """log Z by enumerating all visible configurations (binary, small only)."""
    if rbm.visible_family != BINARY:
        raise ValueError("exact oracle supports binary visibles only")
    if rbm.n_visible + rbm.n_hidden > ENUMERATION_CAP:
        raise ValueError("instance too large for exact enumeration")
    configs = all_binary_vectors(rbm.n_visible)
    return float(logsumexp(-free_energy(rbm, configs)))


def exact_log_likelihood(rbm: RbmParams, data):
    """Mean log P(v) over data via exhaustive enumeration of Z."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    log_z = log_partition(rbm)
    return float(np.mean(-free_energy(rbm, data)) - log_z)


def exact_log_likelihood_gradient(rbm: RbmParams, data):
    """Exact (enumerated) mean log-likelihood gradient w.r.t. (W, v_bias, h_bias)."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if rbm.visible_family != BINARY:
        raise ValueError("exact oracle supports binary visibles only")
    if rbm.n_visible + rbm.n_hidden > ENUMERATION_CAP:
        raise ValueError("instance too large for exact enumeration")
    configs = all_binary_vectors(rbm.n_visible)
    log_p = -free_energy(rbm, configs)
    p = np.exp(log_p - logsumexp(log_p))
    h_data = prop_up(rbm, data)
    h_model = prop_up(rbm, configs)
    gw = data.T @ h_data / data.shape[0] - configs.T @ (p[:, None] * h_model)
    gvb = data.mean(axis=0) - p @ configs
    ghb = h_data.mean(axis=0) - p @ h_model
    return gw, gvb, ghb


def logsumexp(x):
    x = np.asarray(x, dtype=np.float64)
    m = np.max(x)
    return m + np.log(np.sum(np.exp(x - m)))
