"""TD(0) policy evaluation, SARSA control with epsilon-greedy exploration,
and the Dyna loop over generative, linear, or oracle world models."""

from dataclasses import dataclass

import numpy as np

from .numeric import Rng
from .envs import ObservationMap, TabularMdp, observe, step
from .linear_model import LinearExpectationModel, predict_linear
from .temporal import predict_next_observation


@dataclass
class AgentConfig:
    alpha: float = 0.001
    alpha_sim: float = 0.001
    alpha_sim_decay: float = 0.95
    alpha_sim_floor: float = 0.0001
    gamma: float = 0.9
    epsilon: float = 0.9
    epsilon_decay: float = 0.9
    epsilon_floor: float = 0.05
    k_sim: int = 0                     # simulated steps per real step
    max_episode_steps: int = 500

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        for d in (self.alpha_sim_decay, self.epsilon_decay):
            if not 0.0 < d <= 1.0:
                raise ValueError("decay factors must lie in (0, 1]")
        if self.alpha <= 0 or self.alpha_sim <= 0:
            raise ValueError("learning rates must be positive")


def td0_update_tabular(v, s, r, s_next, alpha, gamma, done):
    """V(s) += alpha * (r + gamma*V(s_next)*(1-done) - V(s)), in place."""
    if not 0 <= s < len(v) or not 0 <= s_next < len(v):
        raise ValueError("invalid state id")
    target = r + (0.0 if done else gamma * v[s_next])
    v[s] += alpha * (target - v[s])
    return v


def td0_update_linear(theta, phi_s, r, phi_next, alpha, gamma, done):
    """theta += alpha * (r + gamma*theta.phi_next*(1-done) - theta.phi_s) * phi_s."""
    theta = np.asarray(theta, dtype=np.float64)
    phi_s = np.asarray(phi_s, dtype=np.float64)
    phi_next = np.asarray(phi_next, dtype=np.float64)
    if theta.shape != phi_s.shape or theta.shape != phi_next.shape:
        raise ValueError("feature dimension mismatch")
    target = r + (0.0 if done else gamma * float(theta @ phi_next))
    theta += alpha * (target - float(theta @ phi_s)) * phi_s
    return theta


def epsilon_greedy(q_values, epsilon, rng: Rng):
    """Uniform action with probability epsilon, else argmax (lowest-index ties)."""
    q_values = np.asarray(q_values, dtype=np.float64)
    if q_values.size == 0:
        raise ValueError("empty action set")
    if float(rng.uniform()) < epsilon:
        return int(rng.integers(0, q_values.size))
    return int(np.argmax(q_values))


def sarsa_update(thetas, phi_s, a, r, phi_next, a_next, alpha, gamma, done):
    """One on-policy SARSA update on the selected action's parameters."""
    if not 0 <= a < thetas.shape[0] or not 0 <= a_next < thetas.shape[0]:
        raise ValueError("invalid action id")
    target = r + (0.0 if done else gamma * float(thetas[a_next] @ phi_next))
    thetas[a] += alpha * (target - float(thetas[a] @ phi_s)) * phi_s
    return thetas


class OracleWorldModel:
    """Simulates with the true MDP kernel and reward table."""

    def __init__(self, env: TabularMdp, omap: ObservationMap):
        self.env = env
        self.omap = omap
        self._s = env.start_state

    def reset(self, s, obs):
        self._s = s

    def sim_step(self, a, rng: Rng):
        s_next, reward, done = step(self.env, self._s, a, rng)
        self._s = s_next
        return observe(self.omap, s_next, rng), reward, done


class GenerativeWorldModel:
    """Simulates in observation space with the DBN stack, per-action
    temporal models, and the logistic reward model."""

    def __init__(self, stack, temporal_models: dict, reward_model):
        self.stack = stack
        self.models = temporal_models
        self.reward_model = reward_model
        self._obs = None

    def reset(self, s, obs):
        self._obs = np.asarray(obs, dtype=np.float64)

    def sim_step(self, a, rng: Rng):
        if a not in self.models:
            raise KeyError(f"no temporal model for action {a}")
        obs = predict_next_observation(self.stack, self.models[a], self._obs, rng)
        self._obs = obs
        reward = float(self.reward_model.predict(obs))
        return obs, reward, reward >= 0.5


class LinearWorldModel:
    """Simulates with expectation rollouts; reward from the b head."""

    def __init__(self, model: LinearExpectationModel):
        self.model = model
        self._phi = None

    def reset(self, s, obs):
        self._phi = np.asarray(obs, dtype=np.float64)

    def sim_step(self, a, rng: Rng):
        phi, reward = predict_linear(self.model, self._phi, a)
        self._phi = phi
        return phi, reward, reward >= 0.5


def run_dyna(env: TabularMdp, omap: ObservationMap, world_model,
             cfg: AgentConfig, episodes, rng: Rng):
    """Episodic SARSA; after each real step, a rooted cfg.k_sim-step
    simulated trajectory feeds extra SARSA updates at the simulation
    learning rate. Returns (curve, thetas) where curve is a (episodes, 4)
    array of (cumulative real steps, episode length, undiscounted return,
    discounted return). With k_sim=0 or no model this is plain SARSA.
    """
    d = omap.n_pixels
    thetas = np.zeros((env.n_actions, d))
    eps = cfg.epsilon
    alpha_sim = cfg.alpha_sim
    curve = np.zeros((episodes, 4))
    total_steps = 0
    simulate = world_model is not None and cfg.k_sim > 0
    for ep in range(episodes):
        s = env.start_state
        obs = observe(omap, s, rng)
        a = epsilon_greedy(thetas @ obs, eps, rng)
        undisc = 0.0
        disc = 0.0
        for t in range(cfg.max_episode_steps):
            s_next, r, done = step(env, s, a, rng)
            obs_next = observe(omap, s_next, rng)
            a_next = epsilon_greedy(thetas @ obs_next, eps, rng)
            sarsa_update(thetas, obs, a, r, obs_next, a_next,
                         cfg.alpha, cfg.gamma, done)
            undisc += r
            disc += (cfg.gamma ** t) * r
            total_steps += 1
            if simulate:
                sim_obs = obs_next
                sim_a = epsilon_greedy(thetas @ sim_obs, eps, rng)
                world_model.reset(s_next, sim_obs)
                for _ in range(cfg.k_sim):
                    sim_next, sim_r, sim_done = world_model.sim_step(sim_a, rng)
                    sim_a_next = epsilon_greedy(thetas @ sim_next, eps, rng)
                    sarsa_update(thetas, sim_obs, sim_a, sim_r, sim_next,
                                 sim_a_next, alpha_sim, cfg.gamma, sim_done)
                    if sim_done:
                        break
                    sim_obs, sim_a = sim_next, sim_a_next
            if done:
                break
            s, obs, a = s_next, obs_next, a_next
        curve[ep] = (total_steps, t + 1, undisc, disc)
        eps = max(cfg.epsilon_floor, eps * cfg.epsilon_decay)
        alpha_sim = max(cfg.alpha_sim_floor, alpha_sim * cfg.alpha_sim_decay)
    return curve, thetas


def run_model_free(env, omap, cfg: AgentConfig, episodes, rng: Rng):
    """Baseline episodic SARSA with no simulated experience."""
    return run_dyna(env, omap, None, cfg, episodes, rng)


def extract_policy(thetas, omap: ObservationMap):
    """Greedy action per state on its canonical observation."""
    n = len(omap.pools)
    return np.array([int(np.argmax(thetas @ omap.canonical(s)))
                     for s in range(n)], dtype=np.int64)


def run_td_tabular(env: TabularMdp, n_updates, alpha, rng: Rng,
                   world_model=None, k_sim=0, labeler=None, alpha_sim=None,
                   observer=None, checkpoint_every=0, checkpoint_fn=None):
    """Tabular TD(0) policy evaluation under the uniform-random policy.

    With a world model, each real step adds a rooted k_sim-step simulated
    trajectory of TD updates; observer(state) supplies the root image,
    simulated observations are mapped to state ids by the labeler, and
    simulated rewards come from the env's reward table.
    """
    v = np.zeros(env.n_states)
    s = env.start_state
    if alpha_sim is None:
        alpha_sim = alpha
    for i in range(n_updates):
        a = int(rng.integers(0, env.n_actions)) if env.n_actions > 1 else 0
        s_next, r, done = step(env, s, a, rng)
        td0_update_tabular(v, s, r, s_next, alpha, env.gamma, done)
        if world_model is not None and k_sim > 0:
            root = observer(s_next) if observer is not None else None
            world_model.reset(s_next, root)
            sim_s = s_next
            for _ in range(k_sim):
                sim_obs, _, _ = world_model.sim_step(a, rng)
                sim_next = labeler(sim_obs)
                sim_r = float(env.r[sim_next])
                td0_update_tabular(v, sim_s, sim_r, sim_next, alpha_sim,
                                   env.gamma, sim_next in env.terminal)
                sim_s = sim_next
        s = env.start_state if done else s_next
        if checkpoint_fn is not None and checkpoint_every > 0 \
                and (i + 1) % checkpoint_every == 0:
            checkpoint_fn(i + 1, v.copy())
    return v


def run_td_linear(env: TabularMdp, omap: ObservationMap, n_updates, alpha,
                  rng: Rng, checkpoint_every=0, checkpoint_fn=None):
    """Linear-FA TD(0) on pixel features under the uniform-random policy."""
    theta = np.zeros(omap.n_pixels)
    s = env.start_state
    obs = observe(omap, s, rng)
    for i in range(n_updates):
        a = int(rng.integers(0, env.n_actions)) if env.n_actions > 1 else 0
        s_next, r, done = step(env, s, a, rng)
        obs_next = observe(omap, s_next, rng)
        td0_update_linear(theta, obs, r, obs_next, alpha, env.gamma, done)
        if done:
            s = env.start_state
            obs = observe(omap, s, rng)
        else:
            s, obs = s_next, obs_next
        if checkpoint_fn is not None and checkpoint_every > 0 \
                and (i + 1) % checkpoint_every == 0:
            checkpoint_fn(i + 1, theta.copy())
    return theta


def state_values_from_linear(theta, omap: ObservationMap):
    """Per-state value estimate: average of theta.obs over the state pool."""
    return np.array([float(np.mean(omap.pools[s] @ theta))
                     for s in range(len(omap.pools))])
