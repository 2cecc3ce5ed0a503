"""Ground-truth analytics: exact Bellman solutions, total-variation scores
for learned kernels, k-step simulator drift, value error, nearest-class
decoding, and curve aggregation."""

from dataclasses import dataclass

import numpy as np

from .numeric import Rng
from .envs import ObservationMap, TabularMdp
from .dbn import decode, encode
from .linear_model import linear_rollout
from .temporal import sample_next


@dataclass
class KernelEstimate:
    counts: np.ndarray     # (n_actions, n_states, n_states) sample counts

    @property
    def rows(self):
        totals = self.counts.sum(axis=2, keepdims=True)
        safe = np.where(totals > 0, totals, 1.0)
        return self.counts / safe

    @property
    def row_counts(self):
        return self.counts.sum(axis=2)


def solve_exact_values(env: TabularMdp, policy=None):
    """V^pi by direct linear solve; terminal states fixed at 0.

    policy: (n_states, n_actions) distribution; None = uniform random.
    Rewards follow the arrived-state convention r = R[s_next].
    """
    n = env.n_states
    if policy is None:
        policy = np.full((n, env.n_actions), 1.0 / env.n_actions)
    policy = np.asarray(policy, dtype=np.float64)
    p_pi = np.einsum("sa,ast->st", policy, env.p)
    a = np.eye(n) - env.gamma * p_pi
    b = p_pi @ env.r
    for t in env.terminal:
        a[t] = 0.0
        a[t, t] = 1.0
        b[t] = 0.0
    # non-terminal rows must not bootstrap through terminal values (they
    # are fixed at 0), which the terminal rows of a already encode
    return np.linalg.solve(a, b)


def solve_optimal(env: TabularMdp, tol=1e-10, max_iters=100000):
    """Value iteration to sup-norm residual <= tol; greedy policy with
    lowest-index tie-break."""
    n = env.n_states
    nonterm = np.array([0.0 if s in env.terminal else 1.0 for s in range(n)])
    v = np.zeros(n)
    for _ in range(max_iters):
        q = env.p @ (env.r + env.gamma * v * nonterm)   # (A, S)
        v_new = q.max(axis=0) * nonterm
        if np.max(np.abs(v_new - v)) <= tol:
            v = v_new
            break
        v = v_new
    q = env.p @ (env.r + env.gamma * v * nonterm)
    policy = np.argmax(q.T, axis=1)
    return v, policy


def total_variation(p, q):
    """0.5 * sum |p_i - q_i| for two distributions of equal length."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("distribution length mismatch")
    for d in (p, q):
        if abs(float(d.sum()) - 1.0) > 1e-9 or np.any(d < -1e-12):
            raise ValueError("inputs must be probability distributions")
    return 0.5 * float(np.abs(p - q).sum())


def nearest_class(decoded, class_templates):
    """Argmin Euclidean distance to a template; lowest index on ties."""
    templates = np.asarray(class_templates, dtype=np.float64)
    if templates.size == 0:
        raise ValueError("empty template list")
    decoded = np.asarray(decoded, dtype=np.float64)
    if decoded.shape[-1] != templates.shape[1]:
        raise ValueError("dimension mismatch")
    single = decoded.ndim == 1
    d2 = ((np.atleast_2d(decoded)[:, None, :] - templates[None]) ** 2).sum(axis=2)
    ids = np.argmin(d2, axis=1)
    return int(ids[0]) if single else ids


def _predict_batch(stack, model, observations, rng: Rng):
    """Batched predict_next_observation for one action model."""
    return decode(stack, sample_next(model, encode(stack, observations), rng))


def empirical_kernel(stack, temporal_models: dict, omap: ObservationMap,
                     env: TabularMdp, samples_per_state, rng: Rng) -> KernelEstimate:
    """Sampled one-step transition kernel of the generative model: root at
    each non-terminal state's canonical image, classify predictions by
    nearest class."""
    n = env.n_states
    counts = np.zeros((env.n_actions, n, n))
    for s in range(n):
        if s in env.terminal:
            continue
        batch = np.tile(omap.canonical(s), (samples_per_state, 1))
        for a in env.actions:
            preds = _predict_batch(stack, temporal_models[a], batch, rng)
            ids = nearest_class(preds, omap.templates)
            np.add.at(counts[a, s], ids, 1.0)
    return KernelEstimate(counts)


def kernel_tv(estimate: KernelEstimate, env: TabularMdp) -> float:
    """Mean TV between estimated and true kernel rows over sampled
    (state, action) pairs."""
    rows = estimate.rows
    if rows.shape != env.p.shape:
        raise ValueError("kernel shape mismatch")
    tvs = []
    for a in env.actions:
        for s in range(env.n_states):
            if estimate.row_counts[a, s] > 0:
                tvs.append(total_variation(rows[a, s], env.p[a, s]))
    return float(np.mean(tvs))


def single_action_kernel_tv(stack, model, omap: ObservationMap,
                            env: TabularMdp, action, samples_per_state,
                            rng: Rng) -> float:
    """Mean row TV for one action's temporal model (training checkpoints)."""
    tvs = []
    for s in range(env.n_states):
        if s in env.terminal:
            continue
        batch = np.tile(omap.canonical(s), (samples_per_state, 1))
        ids = nearest_class(_predict_batch(stack, model, batch, rng),
                            omap.templates)
        row = np.bincount(ids, minlength=env.n_states) / samples_per_state
        tvs.append(total_variation(row, env.p[action, s]))
    return float(np.mean(tvs))


def kernel_tv_per_action(estimate: KernelEstimate, env: TabularMdp):
    rows = estimate.rows
    out = np.zeros(env.n_actions)
    for a in env.actions:
        tvs = [total_variation(rows[a, s], env.p[a, s])
               for s in range(env.n_states) if estimate.row_counts[a, s] > 0]
        out[a] = float(np.mean(tvs))
    return out


def kstep_tv(stack, temporal_models: dict, env: TabularMdp,
             omap: ObservationMap, k_max, trajectories, rng: Rng):
    """TV between the simulator's empirical k-step state distribution and
    the exact k-step kernel, per k, averaged over non-terminal roots.

    Simulated actions follow the uniform-random policy; the exact k-step
    truth is the matching power of the policy-averaged kernel.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    n = env.n_states
    p_pi = env.p.mean(axis=0)
    roots = [s for s in range(n) if s not in env.terminal]
    counts = np.zeros((k_max, len(roots), n))
    for ri, s in enumerate(roots):
        obs = np.tile(omap.canonical(s), (trajectories, 1))
        for k in range(k_max):
            actions = rng.integers(0, env.n_actions, size=trajectories) \
                if env.n_actions > 1 else np.zeros(trajectories, dtype=np.int64)
            nxt = np.empty_like(obs)
            for a in np.unique(actions):
                sel = actions == a
                nxt[sel] = _predict_batch(stack, temporal_models[int(a)],
                                          obs[sel], rng)
            obs = nxt
            ids = nearest_class(obs, omap.templates)
            np.add.at(counts[k, ri], ids, 1.0)
    curve = np.zeros(k_max)
    truth = np.eye(n)
    for k in range(k_max):
        truth = truth @ p_pi
        tvs = [total_variation(counts[k, ri] / trajectories, truth[s])
               for ri, s in enumerate(roots)]
        curve[k] = float(np.mean(tvs))
    return curve


def value_error(estimates, truth) -> float:
    """Mean absolute difference between value estimates and true values."""
    estimates = np.asarray(estimates, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if estimates.shape != truth.shape:
        raise ValueError("length mismatch")
    return float(np.mean(np.abs(estimates - truth)))


def average_curves(curves):
    """Pointwise mean and standard error over equal-length curves."""
    if len(curves) == 0:
        raise ValueError("no curves")
    stacked = np.asarray(curves, dtype=np.float64)
    mean = stacked.mean(axis=0)
    if stacked.shape[0] > 1:
        stderr = stacked.std(axis=0, ddof=1) / np.sqrt(stacked.shape[0])
    else:
        stderr = np.zeros_like(mean)
    return mean, stderr


def steps_to_return_threshold(curve, threshold, window=10):
    """First cumulative real-step count at which the trailing-window mean
    discounted episode return reaches the threshold; inf if never."""
    disc = curve[:, 3]
    steps = curve[:, 0]
    for i in range(window - 1, len(disc)):
        if disc[i - window + 1:i + 1].mean() >= threshold:
            return float(steps[i])
    return float("inf")


def recognition_radius(class_templates) -> float:
    """Half the minimum pairwise Euclidean distance between templates:
    a frame farther than this from every template sits outside all
    nearest-class decision-boundary balls and is not recognizable as
    any single class."""
    templates = np.asarray(class_templates, dtype=np.float64)
    if templates.shape[0] < 2:
        raise ValueError("need at least two templates")
    d2 = ((templates[:, None, :] - templates[None]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    return 0.5 * float(np.sqrt(d2.min()))


def rollout_class_accuracy(frames, action_seq, env: TabularMdp, root,
                           class_templates, radius=None):
    """Fraction of rollout steps that are both recognizable and
    consistent: the frame lies within `radius` of its nearest template
    (default: the templates' recognition radius) and the implied class
    transition has nonzero probability under the true kernel (step 0
    checked against the root class)."""
    templates = np.asarray(class_templates, dtype=np.float64)
    if radius is None:
        radius = recognition_radius(templates)
    prev = root
    hits = 0
    for a, obs in zip(action_seq, frames):
        obs = np.asarray(obs, dtype=np.float64)
        c = nearest_class(obs, templates)
        if (np.linalg.norm(obs - templates[c]) <= radius
                and env.p[a, prev, c] > 0.0):
            hits += 1
        prev = c
    return hits / len(action_seq)


def compare_rollout_quality(stack, temporal_models, linear, env, omap,
                            k, rng: Rng):
    """Mean rollout class accuracy for generative vs. linear rollouts,
    over all non-terminal roots with shared random action sequences."""
    from .temporal import sample_trajectory
    radius = recognition_radius(omap.templates)
    gen_acc, lin_acc = [], []
    for s in range(env.n_states):
        if s in env.terminal:
            continue
        actions = [int(rng.integers(0, env.n_actions)) for _ in range(k)]
        root_obs = omap.canonical(s)
        gen_traj = sample_trajectory(stack, temporal_models, root_obs,
                                     actions, k, rng)
        lin_traj = linear_rollout(linear, root_obs, actions, k)
        gen_acc.append(rollout_class_accuracy(
            gen_traj, actions, env, s, omap.templates, radius))
        lin_acc.append(rollout_class_accuracy(
            lin_traj, actions, env, s, omap.templates, radius))
    return float(np.mean(gen_acc)), float(np.mean(lin_acc))
