"""Experiment runner: seeded, config-driven pipeline stages.

Subcommands: gen-data, train-model, run, eval. Every stage is a pure
function of (config, seed, input files); reruns are bitwise identical.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import agents, dbn, envs, evaluation, linear_model, persist, rbm, temporal
from .config import ExperimentConfig
from .numeric import Rng


class StageError(Exception):
    def __init__(self, category, message):
        super().__init__(message)
        self.category = category


def build_world(cfg: ExperimentConfig, seed):
    """Deterministically construct the env and observation map."""
    kind = cfg.get("env", "kind")
    gamma = cfg.get("env", "gamma")
    if kind == "chain":
        env = envs.build_chain_env(cfg.get("env", "n_states"),
                                   cfg.get("env", "p_advance"),
                                   cfg.get("env", "reward_state"), gamma)
    elif kind == "grid":
        reward_states = [int(x) for x in cfg.get("env", "reward_states").split(",")]
        env = envs.build_grid_env(cfg.get("env", "rows"), cfg.get("env", "cols"),
                                  cfg.get("env", "p_success"), reward_states, gamma)
    else:
        raise StageError("config-error", f"unknown env kind {kind!r}")

    source = cfg.get("observations", "source")
    if source == "synthetic":
        omap = envs.make_synthetic_observations(
            env.n_states, cfg.get("observations", "image_side"),
            cfg.get("observations", "variants_per_class"),
            cfg.get("observations", "noise"), Rng(seed ^ 0x5EED))
    elif source == "idx":
        path = cfg.get("observations", "idx_path")
        if not os.path.exists(path):
            raise StageError("io-error", f"IDX file not found: {path}")
        images, _ = persist.load_idx(path)
        per = max(1, images.shape[0] // env.n_states)
        pools = [images[s * per:(s + 1) * per] for s in range(env.n_states)]
        templates = np.array([p.mean(axis=0) for p in pools])
        omap = envs.ObservationMap(pools, (cfg.get("observations", "image_side"),) * 2,
                                   "binary", templates=templates)
    else:
        raise StageError("config-error", f"unknown observation source {source!r}")
    return env, omap


def _stage_dir(cfg, stage):
    path = os.path.join(cfg.get("run", "out_dir"), stage)
    os.makedirs(path, exist_ok=True)
    return path


def _finish_stage(cfg, stage, out):
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump({"stage": stage, "config_hash": cfg.hash(),
                   "seed": cfg.get("run", "seed")}, fh, sort_keys=True)
        fh.write("\n")
    cfg.save(os.path.join(out, "config.ini"))


def _dataset_path(cfg):
    return os.path.join(cfg.get("run", "out_dir"), "gen-data", "dataset.gdyn")


def _model_path(cfg, name):
    return os.path.join(cfg.get("run", "out_dir"), "train-model", name)


def _require(path, stage):
    if not os.path.exists(path):
        raise StageError("missing-archive",
                         f"{path} not found; run the {stage} stage first")
    return path


def cmd_gen_data(cfg: ExperimentConfig):
    seed = cfg.get("run", "seed")
    out = _stage_dir(cfg, "gen-data")
    env, omap = build_world(cfg, seed)
    rng = Rng(seed)
    transitions = envs.collect_transitions(env, omap, None,
                                           cfg.get("run", "n_steps"), rng)
    arrays = {
        "states": np.array([t.s for t in transitions], dtype=np.float64),
        "actions": np.array([t.action for t in transitions], dtype=np.float64),
        "rewards": np.array([t.reward for t in transitions]),
        "next_states": np.array([t.s_next for t in transitions], dtype=np.float64),
        "dones": np.array([float(t.done) for t in transitions]),
        "obs": np.array([t.observation for t in transitions]),
        "obs_next": np.array([t.observation_next for t in transitions]),
        "templates": omap.templates,
    }
    persist.save_archive(os.path.join(out, "dataset.gdyn"), persist.KIND_DATASET,
                         {"n_steps": len(transitions), "seed": seed}, arrays)
    _finish_stage(cfg, "gen-data", out)
    return out


def _load_dataset(cfg):
    path = _require(_dataset_path(cfg), "gen-data")
    _, header, arrays = persist.load_archive(path, persist.KIND_DATASET)
    return header, arrays


def _cd_config(cfg, epochs, prefix="cd"):
    return rbm.CdConfig(
        k=cfg.get("model", "cd_k" if prefix == "cd" else "temporal_cd_k"),
        learning_rate=cfg.get("model", f"{prefix}_lr"),
        momentum=cfg.get("model", "cd_momentum" if prefix == "cd"
                         else "temporal_momentum"),
        epochs=epochs,
        minibatch_size=cfg.get("model", "minibatch_size" if prefix == "cd"
                               else "temporal_minibatch"),
        deterministic_activations=cfg.get("model", "deterministic_activations"))


def cmd_train_model(cfg: ExperimentConfig):
    seed = cfg.get("run", "seed")
    out = _stage_dir(cfg, "train-model")
    env, omap = build_world(cfg, seed)
    _, data = _load_dataset(cfg)
    rng = Rng(seed + 1)

    layer_sizes = cfg.int_list("model", "layer_sizes")
    epochs = cfg.int_list("model", "epochs_per_layer")
    if len(epochs) != len(layer_sizes):
        raise StageError("config-error",
                         "epochs_per_layer must match layer_sizes length")
    train_obs = np.concatenate([data["obs"], data["obs_next"][-1:]], axis=0)
    configs = [_cd_config(cfg, e) for e in epochs]
    try:
        stack = dbn.greedy_train(train_obs, layer_sizes, configs, rng)
        stack = dbn.fine_tune(stack, train_obs, cfg.get("model", "fine_tune_lr"),
                              cfg.get("model", "fine_tune_sweeps"))
    except FloatingPointError as exc:
        raise StageError("divergence", str(exc))
    persist.save_model(os.path.join(out, "stack.gdyn"), stack,
                       {"seed": seed, "config_hash": cfg.hash()})

    # temporal models per action, with kernel-TV checkpoints
    h = dbn.encode(stack, data["obs"])
    h_next = dbn.encode(stack, data["obs_next"])
    actions = data["actions"].astype(int)
    tv_rows = []
    eval_rng = Rng(seed + 2)
    models = {}
    t_epochs = cfg.get("model", "temporal_epochs")
    t_cfg = _cd_config(cfg, t_epochs, prefix="temporal")
    for a in env.actions:
        sel = actions == a
        pairs = list(zip(h[sel], h_next[sel]))
        if not pairs:
            raise StageError("config-error", f"no transitions for action {a}")

        def checkpoint(epoch, model, _a=a):
            tv = evaluation.single_action_kernel_tv(
                stack, model, omap, env, _a,
                cfg.get("eval", "samples_per_state"), eval_rng)
            tv_rows.append((_a, epoch, tv))

        models[a] = temporal.train_temporal(
            pairs, cfg.get("model", "temporal_hidden"), t_cfg, rng, action=a,
            gibbs_steps_sampling=cfg.get("model", "gibbs_steps_sampling"),
            checkpoint_every=cfg.get("model", "checkpoint_every"),
            checkpoint_fn=checkpoint)
        # final checkpoint regardless of divisibility
        checkpoint(t_epochs, models[a])
    persist.save_model(os.path.join(out, "temporal.gdyn"), models,
                       {"seed": seed, "config_hash": cfg.hash()})
    persist.write_csv(os.path.join(out, "kernel_tv.csv"),
                      ["action", "epoch", "kernel_tv"], tv_rows)

    linear = linear_model.train_linear(
        list(zip(data["obs"], actions, data["rewards"], data["obs_next"])),
        cfg.get("model", "linear_lr"), cfg.get("model", "linear_sweeps"))
    persist.save_model(os.path.join(out, "linear.gdyn"), linear)

    reward = envs.train_reward_model(data["obs_next"], data["rewards"],
                                     cfg.get("model", "reward_lr"),
                                     cfg.get("model", "reward_iterations"))
    persist.save_model(os.path.join(out, "reward.gdyn"), reward)
    _finish_stage(cfg, "train-model", out)
    return out


def _load_models(cfg):
    stack = persist.load_model(_require(_model_path(cfg, "stack.gdyn"),
                                        "train-model"), persist.KIND_DBN)
    models = persist.load_model(_require(_model_path(cfg, "temporal.gdyn"),
                                         "train-model"), persist.KIND_TEMPORAL_SET)
    linear = persist.load_model(_require(_model_path(cfg, "linear.gdyn"),
                                         "train-model"), persist.KIND_LINEAR)
    reward = persist.load_model(_require(_model_path(cfg, "reward.gdyn"),
                                         "train-model"), persist.KIND_REWARD)
    gibbs = cfg.get("model", "gibbs_steps_sampling")
    for m in models.values():
        m.gibbs_steps_sampling = gibbs
    return stack, models, linear, reward


def _agent_config(cfg):
    return agents.AgentConfig(
        alpha=cfg.get("agent", "alpha"), alpha_sim=cfg.get("agent", "alpha_sim"),
        alpha_sim_decay=cfg.get("agent", "alpha_sim_decay"),
        alpha_sim_floor=cfg.get("agent", "alpha_sim_floor"),
        gamma=cfg.get("env", "gamma"), epsilon=cfg.get("agent", "epsilon"),
        epsilon_decay=cfg.get("agent", "epsilon_decay"),
        epsilon_floor=cfg.get("agent", "epsilon_floor"),
        k_sim=cfg.get("agent", "k_sim"),
        max_episode_steps=cfg.get("agent", "max_episode_steps"))


def _make_world_model(agent_kind, cfg, env, omap):
    if agent_kind == "model-free":
        return None
    if agent_kind == "dyna-oracle":
        return agents.OracleWorldModel(env, omap)
    if agent_kind == "dyna-generative":
        stack, models, _, reward = _load_models(cfg)
        return agents.GenerativeWorldModel(stack, models, reward)
    if agent_kind == "dyna-linear":
        _, _, linear, _ = _load_models(cfg)
        return agents.LinearWorldModel(linear)
    raise StageError("config-error", f"unknown agent kind {agent_kind!r}")


def cmd_run(cfg: ExperimentConfig, agent_kind):
    seed = cfg.get("run", "seed")
    out = _stage_dir(cfg, f"run-{agent_kind}")
    env, omap = build_world(cfg, seed)
    if env.n_actions == 1:
        return _run_value_estimation(cfg, agent_kind, out, env, omap)
    acfg = _agent_config(cfg)
    if agent_kind == "model-free":
        acfg.k_sim = 0
    episodes = cfg.get("agent", "episodes")
    curves = []
    header = ["real_steps", "episode_len", "return", "discounted_return"]
    for run in range(cfg.get("agent", "runs")):
        model = _make_world_model(agent_kind, cfg, env, omap)
        curve, thetas = agents.run_dyna(env, omap, model, acfg, episodes,
                                        Rng(seed + 1000 * run))
        curves.append(curve)
        persist.write_csv(os.path.join(out, f"run{run}.csv"), header,
                          curve.tolist())
        if run == 0:
            policy = agents.extract_policy(thetas, omap)
            persist.write_csv(os.path.join(out, "policy.csv"),
                              ["state", "action"], list(enumerate(policy.tolist())))
    mean, stderr = evaluation.average_curves(curves)
    rows = [list(m) + [se] for m, se in zip(mean.tolist(), stderr[:, 3].tolist())]
    persist.write_csv(os.path.join(out, "mean_curve.csv"),
                      header + ["stderr_discounted"], rows)
    _finish_stage(cfg, f"run-{agent_kind}", out)
    return out


def _run_value_estimation(cfg, agent_kind, out, env, omap):
    """Single-action (chain) runs estimate values instead of a policy."""
    seed = cfg.get("run", "seed")
    truth = evaluation.solve_exact_values(env)
    n_updates = cfg.get("agent", "td_updates")
    every = max(1, n_updates // cfg.get("eval", "td_checkpoints"))
    rows = []

    def checkpoint(i, v):
        rows.append((i, evaluation.value_error(v, truth)))

    world_model, labeler, observer, k_sim = None, None, None, 0
    if agent_kind == "dyna-generative":
        stack, models, _, reward = _load_models(cfg)
        world_model = agents.GenerativeWorldModel(stack, models, reward)
        labeler = lambda obs: evaluation.nearest_class(obs, omap.templates)
        observer = omap.canonical
        k_sim = cfg.get("agent", "k_sim")
    elif agent_kind != "model-free":
        raise StageError("config-error",
                         f"agent {agent_kind!r} unsupported on the chain domain")
    v = agents.run_td_tabular(env, n_updates, cfg.get("agent", "td_alpha"),
                              Rng(seed + 3), world_model=world_model,
                              k_sim=k_sim, labeler=labeler, observer=observer,
                              checkpoint_every=every, checkpoint_fn=checkpoint)
    persist.write_csv(os.path.join(out, "value_error.csv"),
                      ["updates", "value_error"], rows)
    persist.write_csv(os.path.join(out, "values.csv"), ["state", "value", "truth"],
                      [(s, float(v[s]), float(truth[s]))
                       for s in range(env.n_states)])
    _finish_stage(cfg, f"run-{agent_kind}", out)
    return out


def cmd_eval(cfg: ExperimentConfig):
    seed = cfg.get("run", "seed")
    out = _stage_dir(cfg, "eval")
    env, omap = build_world(cfg, seed)
    stack, models, linear, _ = _load_models(cfg)
    rng = Rng(seed + 4)

    estimate = evaluation.empirical_kernel(stack, models, omap, env,
                                           cfg.get("eval", "samples_per_state"), rng)
    per_action = evaluation.kernel_tv_per_action(estimate, env)
    persist.write_csv(os.path.join(out, "kernel_tv.csv"),
                      ["action", "kernel_tv"],
                      list(enumerate(per_action.tolist())) +
                      [("mean", evaluation.kernel_tv(estimate, env))])

    curve = evaluation.kstep_tv(stack, models, env, omap,
                                cfg.get("eval", "k_max"),
                                cfg.get("eval", "trajectories"), rng)
    persist.write_csv(os.path.join(out, "kstep_tv.csv"), ["k", "tv"],
                      list(enumerate(curve.tolist(), start=1)))

    walk_rows = []
    for w in range(cfg.get("eval", "n_walks")):
        k = cfg.get("eval", "walk_length")
        actions = [int(rng.integers(0, env.n_actions)) for _ in range(k)]
        traj = temporal.sample_trajectory(stack, models,
                                          omap.canonical(env.start_state),
                                          actions, k, rng)
        classes = [evaluation.nearest_class(o, omap.templates) for o in traj]
        walk_rows.append([w] + classes)
    persist.write_csv(os.path.join(out, "sample_walks.csv"),
                      ["walk"] + [f"step{i+1}" for i in
                                  range(cfg.get("eval", "walk_length"))],
                      walk_rows)

    gen_acc, lin_acc = evaluation.compare_rollout_quality(
        stack, models, linear, env, omap, cfg.get("eval", "walk_length"), rng)
    persist.write_csv(os.path.join(out, "rollout_quality.csv"),
                      ["model", "class_consistency"],
                      [("generative", gen_acc), ("linear", lin_acc)])
    _finish_stage(cfg, "eval", out)
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(prog="gendyna",
                                     description="Generative-model Dyna experiments")
    parser.add_argument("--config", help="path to an INI experiment config")
    parser.add_argument("--preset", help="named preset (desk-chain, desk-grid, "
                                         "paper-chain, paper-grid)")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--workers", type=int, default=1,
                        help="worker count (results are worker-invariant)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data")
    sub.add_parser("train-model")
    run_p = sub.add_parser("run")
    run_p.add_argument("--agent", default="model-free",
                       choices=["model-free", "dyna-generative", "dyna-linear",
                                "dyna-oracle"])
    sub.add_parser("eval")
    args = parser.parse_args(argv)

    try:
        if args.config:
            cfg = ExperimentConfig.load(args.config)
        elif args.preset:
            cfg = ExperimentConfig.preset(args.preset)
        else:
            raise StageError("config-error", "need --config or --preset")
        if args.seed is not None:
            cfg.set("run", "seed", args.seed)
        if args.out is not None:
            cfg.set("run", "out_dir", args.out)

        if args.command == "gen-data":
            cmd_gen_data(cfg)
        elif args.command == "train-model":
            cmd_train_model(cfg)
        elif args.command == "run":
            cmd_run(cfg, args.agent)
        elif args.command == "eval":
            cmd_eval(cfg)
    except StageError as exc:
        print(f"{exc.category}: {exc}", file=sys.stderr)
        return 1
    except (OSError, KeyError, ValueError) as exc:
        print(f"internal-error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
