"""Linear expectation world model: per-action F predicting E[phi(s_next)]
and per-action b predicting expected reward."""

from dataclasses import dataclass

import numpy as np


@dataclass
class LinearExpectationModel:
    f: dict    # action -> (d, d) matrix, phi_next_pred = F @ phi
    b: dict    # action -> (d,) vector, reward_pred = b . phi

    @property
    def dim(self):
        return next(iter(self.f.values())).shape[0]

    @property
    def actions(self):
        return sorted(self.f)


def train_linear(transitions, lr, sweeps) -> LinearExpectationModel:
    """In-order SGD over (phi_t, action, reward, phi_next) transitions:
    F += lr*(phi_next - F phi) phi^T, b += lr*(r - b.phi) phi."""
    if len(transitions) == 0:
        raise ValueError("no transitions")
    d = len(np.asarray(transitions[0][0]))
    actions = sorted({t[1] for t in transitions})
    f = {a: np.zeros((d, d)) for a in actions}
    b = {a: np.zeros(d) for a in actions}
    for _ in range(sweeps):
        for phi, a, r, phi_next in transitions:
            phi = np.asarray(phi, dtype=np.float64)
            phi_next = np.asarray(phi_next, dtype=np.float64)
            if phi.shape != (d,) or phi_next.shape != (d,):
                raise ValueError("inconsistent feature dimensions")
            fa = f[a]
            fa += lr * np.outer(phi_next - fa @ phi, phi)
            b[a] += lr * (r - b[a] @ phi) * phi
    return LinearExpectationModel(f, b)


def predict_linear(model: LinearExpectationModel, phi, action):
    """(expected next feature vector, expected reward)."""
    if action not in model.f:
        raise KeyError(f"unknown action {action}")
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape != (model.dim,):
        raise ValueError("feature dimension mismatch")
    return model.f[action] @ phi, float(model.b[action] @ phi)


def linear_rollout(model: LinearExpectationModel, phi_0, actions, K: int):
    """K predicted feature vectors, expectations fed forward; deterministic."""
    if K < 1:
        raise ValueError("K must be >= 1")
    phi = np.asarray(phi_0, dtype=np.float64)
    out = []
    for k in range(K):
        phi, _ = predict_linear(model, phi, actions[k])
        out.append(phi)
    return out
