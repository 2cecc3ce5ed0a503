"""Ground-truth tabular MDPs with image observations: the cyclic digit
chain, the object-grid navigation map, synthetic glyph observations, and a
logistic reward model."""

from dataclasses import dataclass

import numpy as np

from .numeric import Rng, sigmoid

ROW_SUM_TOL = 1e-12


@dataclass
class TabularMdp:
    p: np.ndarray                  # (n_actions, n_states, n_states)
    r: np.ndarray                  # (n_states,), reward on arrival
    gamma: float
    start_state: int = 0
    terminal: frozenset = frozenset()

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64)
        self.r = np.asarray(self.r, dtype=np.float64)
        self.terminal = frozenset(self.terminal)
        if self.p.ndim != 3 or self.p.shape[1] != self.p.shape[2]:
            raise ValueError("transition tensor must be (A, S, S)")
        if not np.allclose(self.p.sum(axis=2), 1.0, atol=ROW_SUM_TOL):
            raise ValueError("kernel rows must sum to 1")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("discount must lie in (0, 1)")
        for t in self.terminal:
            if not np.all(self.p[:, t, t] == 1.0):
                raise ValueError("terminal states must self-loop")

    @property
    def n_states(self):
        return self.p.shape[1]

    @property
    def n_actions(self):
        return self.p.shape[0]

    @property
    def actions(self):
        return list(range(self.n_actions))


@dataclass
class ObservationMap:
    pools: list                    # per state: array (pool_size, n_pixels)
    image_shape: tuple
    pixel_family: str = "binary"
    templates: np.ndarray = None   # (n_classes, n_pixels) canonical images
    state_class: np.ndarray = None # state id -> class id (identity if None)

    def __post_init__(self):
        dims = {p.shape[1] for p in self.pools}
        if len(dims) != 1:
            raise ValueError("all observation images must share dimensions")
        if any(p.shape[0] == 0 for p in self.pools):
            raise ValueError("every state needs a nonempty image pool")
        if self.state_class is None:
            self.state_class = np.arange(len(self.pools))

    @property
    def n_pixels(self):
        return self.pools[0].shape[1]

    def canonical(self, s):
        """A deterministic representative image for state s."""
        return self.templates[self.state_class[s]]


@dataclass
class Transition:
    s: int
    observation: np.ndarray
    action: int
    reward: float
    s_next: int
    observation_next: np.ndarray
    done: bool


def build_chain_env(n_states, p_advance, reward_state, gamma) -> TabularMdp:
    """Cyclic chain with a single implicit action: advance with p_advance,
    stay otherwise; +1 reward on arrival at reward_state."""
    if n_states < 2:
        raise ValueError("chain needs at least 2 states")
    if not 0.0 < p_advance <= 1.0:
        raise ValueError("p_advance must lie in (0, 1]")
    p = np.zeros((1, n_states, n_states))
    for s in range(n_states):
        p[0, s, (s + 1) % n_states] += p_advance
        p[0, s, s] += 1.0 - p_advance
    r = np.zeros(n_states)
    r[reward_state] = 1.0
    return TabularMdp(p, r, gamma, start_state=0)


def build_grid_env(rows, cols, p_success, reward_states, gamma) -> TabularMdp:
    """Episodic grid with actions up/down/left/right (0-3). Moves succeed
    with p_success, else stay; off-map moves stay deterministically;
    reward states are terminal; start at the top-left corner."""
    n = rows * cols
    if n < 2:
        raise ValueError("grid needs at least 2 states")
    reward_states = frozenset(int(s) for s in reward_states)
    if 0 in reward_states:
        raise ValueError("reward state equals start state")
    moves = [(-1, 0), (1, 0), (0, -1), (0, 1)]  # up, down, left, right
    p = np.zeros((4, n, n))
    for s in range(n):
        row, col = divmod(s, cols)
        for a, (dr, dc) in enumerate(moves):
            if s in reward_states:
                p[a, s, s] = 1.0
                continue
            r2, c2 = row + dr, col + dc
            if not (0 <= r2 < rows and 0 <= c2 < cols):
                p[a, s, s] = 1.0
            else:
                p[a, s, r2 * cols + c2] += p_success
                p[a, s, s] += 1.0 - p_success
    r = np.zeros(n)
    r[list(reward_states)] = 1.0
    return TabularMdp(p, r, gamma, start_state=0, terminal=reward_states)


def step(env: TabularMdp, s, a, rng: Rng):
    """Sample (s_next, reward, done); terminal states absorb with reward 0."""
    if not 0 <= s < env.n_states or not 0 <= a < env.n_actions:
        raise ValueError("invalid state or action id")
    if s in env.terminal:
        return s, 0.0, True
    row = env.p[a, s]
    u = float(rng.uniform())
    s_next = int(np.searchsorted(np.cumsum(row), u, side="right"))
    s_next = min(s_next, env.n_states - 1)
    return s_next, float(env.r[s_next]), s_next in env.terminal


def observe(omap: ObservationMap, s, rng: Rng):
    """Uniform draw from the state's image pool."""
    if not 0 <= s < len(omap.pools):
        raise ValueError("invalid state id")
    pool = omap.pools[s]
    if pool.shape[0] == 1:
        return pool[0]
    return pool[int(rng.integers(0, pool.shape[0]))]


def _make_templates(n_classes, n_pixels):
    """Deterministic per-class binary glyphs with pairwise Hamming
    separation >= 25% of pixels; derived from fixed per-class seeds."""
    templates = []
    for c in range(n_classes):
        for attempt in range(200):
            g = np.random.Generator(np.random.PCG64(1_000_003 * (c + 1) + attempt))
            cand = (g.random(n_pixels) < 0.5).astype(np.float64)
            if all(np.sum(cand != t) >= 0.25 * n_pixels for t in templates):
                templates.append(cand)
                break
        else:
            raise ValueError("too many classes for distinct templates")
    return np.array(templates)


def make_synthetic_observations(n_classes, image_side, variants_per_class,
                                noise, rng: Rng) -> ObservationMap:
    """Synthetic stand-in for the image datasets: one distinct binary glyph
    per class plus per-pixel flip-noise variants."""
    if image_side < 4:
        raise ValueError("image_side must be >= 4")
    if not 0.0 <= noise <= 1.0:
        raise ValueError("noise must be a probability")
    n_pixels = image_side * image_side
    templates = _make_templates(n_classes, n_pixels)
    pools = []
    for c in range(n_classes):
        variants = np.tile(templates[c], (variants_per_class, 1))
        if noise > 0.0:
            flips = rng.bernoulli(noise, size=variants.shape)
            variants = np.abs(variants - flips)
        pools.append(variants)
    return ObservationMap(pools, (image_side, image_side), "binary",
                          templates=templates)


def collect_transitions(env: TabularMdp, omap: ObservationMap, policy,
                        n_steps, rng: Rng):
    """Roll n_steps of experience under the policy (None = uniform random),
    restarting at start_state when an episode terminates."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    out = []
    s = env.start_state
    obs = observe(omap, s, rng)
    for _ in range(n_steps):
        if policy is None:
            a = int(rng.integers(0, env.n_actions))
        else:
            a = policy(s, obs, rng)
        s_next, reward, done = step(env, s, a, rng)
        obs_next = observe(omap, s_next, rng)
        out.append(Transition(s, obs, a, reward, s_next, obs_next, done))
        if done:
            s = env.start_state
            obs = observe(omap, s, rng)
        else:
            s, obs = s_next, obs_next
    return out


@dataclass
class RewardModel:
    """Logistic regression from observations to {0,1} rewards."""
    w: np.ndarray
    w0: float

    def predict_proba(self, x):
        x = np.asarray(x, dtype=np.float64)
        return sigmoid(x @ self.w + self.w0)

    def predict(self, x):
        """Binary reward emission, thresholded at 0.5."""
        p = self.predict_proba(x)
        return (np.asarray(p) >= 0.5).astype(np.float64)


def reward_model_loss_and_grad(model: RewardModel, observations, rewards):
    """Mean logistic cross-entropy and its gradient (oracle-checkable)."""
    x = np.atleast_2d(np.asarray(observations, dtype=np.float64))
    y = np.asarray(rewards, dtype=np.float64)
    p = model.predict_proba(x)
    loss = -float(np.mean(y * np.log(p + 1e-300) + (1 - y) * np.log(1 - p + 1e-300)))
    delta = (p - y) / x.shape[0]
    return loss, delta @ x, float(delta.sum())


def train_reward_model(observations, rewards, lr, iterations) -> RewardModel:
    """Zero-initialized logistic regression trained by full-batch gradient
    descent on the cross-entropy."""
    x = np.atleast_2d(np.asarray(observations, dtype=np.float64))
    y = np.asarray(rewards, dtype=np.float64)
    if x.shape[0] != y.shape[0]:
        raise ValueError("observations/rewards length mismatch")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise ValueError("rewards must lie in {0, 1}")
    model = RewardModel(np.zeros(x.shape[1]), 0.0)
    for _ in range(iterations):
        _, gw, g0 = reward_model_loss_and_grad(model, x, y)
        model.w -= lr * gw
        model.w0 -= lr * g0
    return model
