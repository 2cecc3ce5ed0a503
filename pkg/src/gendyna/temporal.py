"""Per-action temporal RBM over concatenated latent pairs (h_t, h_next).

Next-state inference clamps the first half of the visible layer to the
current code and Gibbs-samples the rest; composing with the stack's
encode/decode gives next-observation prediction and K-step rollouts.
"""

from dataclasses import dataclass

import numpy as np

from .numeric import Rng
from .rbm import BINARY, CdConfig, RbmParams, prop_down, prop_up, train_rbm
from .dbn import DbnStack, decode, encode


@dataclass
class TemporalModel:
    action: int
    rbm: RbmParams                 # n_visible == 2*H, binary family
    gibbs_steps_sampling: int = 50
    binarize_by_sampling: bool = True
    return_probabilities: bool = True

    def __post_init__(self):
        if self.rbm.n_visible % 2 != 0:
            raise ValueError("temporal RBM needs an even visible count")
        if self.rbm.visible_family != BINARY:
            raise ValueError("temporal RBM visibles must be binary")

    @property
    def latent_size(self):
        return self.rbm.n_visible // 2


def pairs_to_data(pairs):
    """Concatenate (h_t, h_next) pairs into 2H-dimensional training vectors."""
    if len(pairs) == 0:
        raise ValueError("empty pair list")
    h = np.atleast_2d(np.asarray([p[0] for p in pairs], dtype=np.float64))
    h2 = np.atleast_2d(np.asarray([p[1] for p in pairs], dtype=np.float64))
    if h.shape != h2.shape:
        raise ValueError("inconsistent latent pair dimensions")
    return np.concatenate([h, h2], axis=1)


def train_temporal(pairs, n_hidden, cfg: CdConfig, rng: Rng, action=0,
                   gibbs_steps_sampling=50, checkpoint_every=0,
                   checkpoint_fn=None) -> TemporalModel:
    """Train the pair RBM with contrastive divergence on concatenated codes."""
    data = pairs_to_data(pairs)
    wrapped = None
    if checkpoint_fn is not None:
        def wrapped(epoch, rbm):
            checkpoint_fn(epoch, TemporalModel(action, rbm, gibbs_steps_sampling))
    rbm = train_rbm(data, n_hidden, cfg, rng, visible_family=BINARY,
                    checkpoint_every=checkpoint_every, checkpoint_fn=wrapped)
    return TemporalModel(action, rbm, gibbs_steps_sampling)


def sample_next(model: TemporalModel, h_t, rng: Rng, return_probabilities=None):
    """Sample h_next given h_t by clamped block Gibbs.

    The first H visible units stay fixed to the binarized h_t for the whole
    chain; only the second half and the hiddens are resampled. Accepts a
    single code (H,) or a batch (n, H). Returns final-step activation
    probabilities by default, sampled bits otherwise.
    """
    if return_probabilities is None:
        return_probabilities = model.return_probabilities
    h_t = np.asarray(h_t, dtype=np.float64)
    single = h_t.ndim == 1
    h_t = np.atleast_2d(h_t)
    H = model.latent_size
    if h_t.shape[1] != H:
        raise ValueError(f"expected latent size {H}, got {h_t.shape[1]}")

    if model.binarize_by_sampling:
        clamped = rng.bernoulli(h_t)
    else:
        clamped = (h_t >= 0.5).astype(np.float64)
    free = rng.bernoulli(0.5, size=h_t.shape)
    hid = None
    for _ in range(model.gibbs_steps_sampling):
        v = np.concatenate([clamped, free], axis=1)
        hid = rng.bernoulli(prop_up(model.rbm, v))
        v_prob = prop_down(model.rbm, hid)
        free = rng.bernoulli(v_prob[:, H:])
    if return_probabilities:
        out = prop_down(model.rbm, hid)[:, H:]
    else:
        out = free
    return out[0] if single else out


def exact_next_conditional(model: TemporalModel, h_t):
    """Enumerated P(h_next | h_t) over all 2^H configurations (oracle)."""
    from .rbm import all_binary_vectors, free_energy
    H = model.latent_size
    if H + H + model.rbm.n_hidden > 24:
        raise ValueError("instance too large for exact enumeration")
    h_t = (np.asarray(h_t, dtype=np.float64) >= 0.5).astype(np.float64)
    configs = all_binary_vectors(H)
    joint = np.concatenate([np.tile(h_t, (configs.shape[0], 1)), configs], axis=1)
    log_w = -free_energy(model.rbm, joint)
    log_w -= log_w.max()
    w = np.exp(log_w)
    return w / w.sum()


def predict_next_observation(stack: DbnStack, model: TemporalModel, s_t,
                             rng: Rng):
    """decode(sample_next(encode(s_t))); accepts a vector or a batch."""
    return decode(stack, sample_next(model, encode(stack, s_t), rng))


def sample_trajectory(stack: DbnStack, models: dict, s_0, actions, K: int,
                      rng: Rng, policy=None):
    """K simulated observations rooted at the real observation s_0.

    actions: a list of action ids, or None with policy(obs, rng) -> action.
    Each prediction feeds back as the next step's input.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    obs = np.asarray(s_0, dtype=np.float64)
    out = []
    for k in range(K):
        if actions is not None:
            a = actions[k]
        else:
            a = policy(obs, rng)
        if a not in models:
            raise KeyError(f"no temporal model for action {a}")
        obs = predict_next_observation(stack, models[a], obs, rng)
        out.append(obs)
    return out
