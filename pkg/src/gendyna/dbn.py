"""Greedy layer-wise deep belief stack: encode/decode passes, backprop
fine-tuning with untied decoder weights, reconstruction error, and a
supervised MLP classifier head."""

from dataclasses import dataclass

import numpy as np

from .numeric import Rng, sigmoid
from .rbm import (BINARY, GAUSSIAN, CdConfig, RbmParams, prop_down, prop_up,
                  train_rbm)


@dataclass
class DbnStack:
    layers: list                 # RbmParams, bottom first; chained dims
    fine_tuned: bool = False
    decoder: list = None         # per layer: [weights (n_hidden, n_visible), bias]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("stack needs at least one layer")
        for lo, hi in zip(self.layers, self.layers[1:]):
            if lo.n_hidden != hi.n_visible:
                raise ValueError("layer dimensions do not chain")
        if self.fine_tuned and self.decoder is None:
            raise ValueError("fine_tuned stack requires decoder weights")

    @property
    def n_visible(self):
        return self.layers[0].n_visible

    @property
    def n_top(self):
        return self.layers[-1].n_hidden

    def copy(self):
        dec = None
        if self.decoder is not None:
            dec = [[w.copy(), b.copy()] for w, b in self.decoder]
        return DbnStack([l.copy() for l in self.layers], self.fine_tuned, dec)


def greedy_train(data, hidden_sizes, configs, rng: Rng,
                 bottom_family=BINARY) -> DbnStack:
    """Train layer 0 on the raw data, each later layer on the previous
    layer's activation probabilities."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.size == 0:
        raise ValueError("empty training data")
    if isinstance(configs, CdConfig):
        configs = [configs] * len(hidden_sizes)
    if len(configs) != len(hidden_sizes):
        raise ValueError("schedule length must match layer count")
    layers = []
    inputs = data
    for i, (n_hidden, cfg) in enumerate(zip(hidden_sizes, configs)):
        family = bottom_family if i == 0 else BINARY
        layer = train_rbm(inputs, n_hidden, cfg, rng, visible_family=family)
        layers.append(layer)
        inputs = prop_up(layer, inputs)
    return DbnStack(layers)


def encode(stack: DbnStack, v):
    """Deterministic upward pass of probabilities; vector or batch."""
    x = np.asarray(v, dtype=np.float64)
    for layer in stack.layers:
        x = prop_up(layer, x)
    return x


def decode(stack: DbnStack, h):
    """Downward pass of probabilities/means; untied weights when fine-tuned."""
    x = np.asarray(h, dtype=np.float64)
    if stack.fine_tuned:
        for (w, b), layer in zip(reversed(stack.decoder), reversed(stack.layers)):
            act = x @ w + b
            x = act if layer.visible_family == GAUSSIAN else sigmoid(act)
    else:
        for layer in reversed(stack.layers):
            x = prop_down(layer, x)
    return x


def _unroll(stack: DbnStack):
    """Parameter list [enc(W,b) bottom-up..., dec(W,b) bottom-up...]."""
    enc = [[l.weights, l.h_bias] for l in stack.layers]
    if stack.decoder is None:
        dec = [[l.weights.T.copy(), l.v_bias.copy()] for l in stack.layers]
    else:
        dec = stack.decoder
    return enc, dec


def _autoencoder_forward(stack, enc, dec, x):
    """Forward pass returning per-layer activations (encoder then decoder)."""
    acts = [x]
    for w, b in enc:
        acts.append(sigmoid(acts[-1] @ w + b))
    for i in range(len(dec) - 1, -1, -1):
        w, b = dec[i]
        pre = acts[-1] @ w + b
        if i == 0 and stack.layers[0].visible_family == GAUSSIAN:
            acts.append(pre)
        else:
            acts.append(sigmoid(pre))
    return acts


def autoencoder_loss_and_grads(stack: DbnStack, data):
    """Mean squared reconstruction loss 0.5*mean((x_hat-x)^2) and its
    gradients w.r.t. the untied encoder/decoder parameters."""
    enc, dec = _unroll(stack)
    x = np.atleast_2d(np.asarray(data, dtype=np.float64))
    n = x.shape[0]
    acts = _autoencoder_forward(stack, enc, dec, x)
    x_hat = acts[-1]
    loss = 0.5 * float(np.mean((x_hat - x) ** 2))
    scale = 1.0 / (n * x.shape[1])

    grads_enc = [None] * len(enc)
    grads_dec = [None] * len(dec)
    delta = (x_hat - x) * scale
    if stack.layers[0].visible_family != GAUSSIAN:
        delta = delta * x_hat * (1.0 - x_hat)
    # decoder layers were applied top-down: dec[L-1] ... dec[0]
    L = len(enc)
    for i in range(0, L):
        inp = acts[2 * L - 1 - i]      # input to decoder layer i
        w, _ = dec[i]
        grads_dec[i] = [inp.T @ delta, delta.sum(axis=0)]
        if i < L - 1:
            delta = (delta @ w.T) * inp * (1.0 - inp)
    # hand off from bottom decoder input (= top encoder output)
    w, _ = dec[L - 1]
    top = acts[L]
    delta = (delta @ w.T) * top * (1.0 - top)
    for i in range(L - 1, -1, -1):
        inp = acts[i]
        w, _ = enc[i]
        grads_enc[i] = [inp.T @ delta, delta.sum(axis=0)]
        if i > 0:
            delta = (delta @ w.T) * inp * (1.0 - inp)
    return loss, grads_enc, grads_dec


def fine_tune(stack: DbnStack, data, lr, sweeps, rng: Rng = None) -> DbnStack:
    """Unroll into an untied autoencoder and descend the reconstruction MSE.

    Full-batch gradient descent; raises on a non-finite loss, naming the
    offending sweep.
    """
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.size == 0:
        raise ValueError("empty training data")
    out = stack.copy()
    enc, dec = _unroll(out)
    out = DbnStack([RbmParams(w, l.v_bias.copy(), b, l.visible_family)
                    for (w, b), l in zip(enc, out.layers)],
                   fine_tuned=True, decoder=dec)
    for sweep in range(sweeps):
        loss, g_enc, g_dec = autoencoder_loss_and_grads(out, data)
        if not np.isfinite(loss):
            raise FloatingPointError(f"fine-tune diverged at sweep {sweep}")
        for layer, (gw, gb) in zip(out.layers, g_enc):
            layer.weights -= lr * gw
            layer.h_bias -= lr * gb
        for (w, b), (gw, gb) in zip(out.decoder, g_dec):
            w -= lr * gw
            b -= lr * gb
    return out


def reconstruction_error(stack: DbnStack, data) -> float:
    """Mean per-pixel absolute error of decode(encode(v)) as a fraction of
    the per-pixel value range."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.size == 0:
        raise ValueError("empty data")
    recon = decode(stack, encode(stack, data))
    value_range = float(data.max() - data.min())
    if value_range <= 0.0:
        value_range = 1.0
    return float(np.mean(np.abs(recon - data))) / value_range


@dataclass
class ClassifierHead:
    """MLP with sigmoid hiddens and a softmax output layer."""
    weights: list
    biases: list

    @property
    def layer_sizes(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_classes(self):
        return self.weights[-1].shape[1]

    def copy(self):
        return ClassifierHead([w.copy() for w in self.weights],
                              [b.copy() for b in self.biases])


def init_classifier(layer_sizes, rng: Rng, weight_scale=0.1) -> ClassifierHead:
    weights = [rng.gaussian(0.0, weight_scale, size=(a, b))
               for a, b in zip(layer_sizes, layer_sizes[1:])]
    biases = [np.zeros(b) for b in layer_sizes[1:]]
    return ClassifierHead(weights, biases)


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def classifier_forward(head: ClassifierHead, x):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    acts = [x]
    for w, b in zip(head.weights[:-1], head.biases[:-1]):
        acts.append(sigmoid(acts[-1] @ w + b))
    acts.append(_softmax(acts[-1] @ head.weights[-1] + head.biases[-1]))
    return acts


def classifier_loss_and_grads(head: ClassifierHead, inputs, labels):
    """Mean cross-entropy and gradients."""
    labels = np.asarray(labels, dtype=np.int64)
    acts = classifier_forward(head, inputs)
    probs = acts[-1]
    n = probs.shape[0]
    if np.any(labels < 0) or np.any(labels >= head.n_classes):
        raise ValueError("label out of range")
    loss = -float(np.mean(np.log(probs[np.arange(n), labels] + 1e-300)))
    delta = probs.copy()
    delta[np.arange(n), labels] -= 1.0
    delta /= n
    grads = []
    for i in range(len(head.weights) - 1, -1, -1):
        inp = acts[i]
        grads.append([inp.T @ delta, delta.sum(axis=0)])
        if i > 0:
            delta = (delta @ head.weights[i].T) * inp * (1.0 - inp)
    grads.reverse()
    return loss, grads


def train_classifier(head: ClassifierHead, inputs, labels, lr, momentum,
                     sweeps, rng: Rng = None) -> ClassifierHead:
    """Full-batch cross-entropy SGD with momentum."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    if inputs.shape[0] != labels.shape[0]:
        raise ValueError("inputs/labels length mismatch")
    out = head.copy()
    vel = [[np.zeros_like(w), np.zeros_like(b)]
           for w, b in zip(out.weights, out.biases)]
    for _ in range(sweeps):
        _, grads = classifier_loss_and_grads(out, inputs, labels)
        for (w, b), (gw, gb), v in zip(zip(out.weights, out.biases), grads, vel):
            v[0] = momentum * v[0] - lr * gw
            v[1] = momentum * v[1] - lr * gb
            w += v[0]
            b += v[1]
    return out


def classify(head: ClassifierHead, v) -> int:
    """Argmax class, lowest index on ties."""
    probs = classifier_forward(head, v)[-1][0]
    return int(np.argmax(probs))
