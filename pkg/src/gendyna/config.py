"""Experiment configuration: a flat INI file with typed sections, plus the
named presets. Values round-trip through save/load without loss."""

import configparser
import hashlib
import json

# (section, key) -> python type; bool values stored as "true"/"false"
SCHEMA = {
    ("env", "kind"): str,                   # chain | grid
    ("env", "n_states"): int,
    ("env", "p_advance"): float,
    ("env", "reward_state"): int,
    ("env", "rows"): int,
    ("env", "cols"): int,
    ("env", "p_success"): float,
    ("env", "reward_states"): str,          # comma-separated state ids
    ("env", "gamma"): float,
    ("observations", "source"): str,        # synthetic | idx
    ("observations", "image_side"): int,
    ("observations", "variants_per_class"): int,
    ("observations", "noise"): float,
    ("observations", "idx_path"): str,
    ("model", "layer_sizes"): str,          # comma-separated hidden sizes
    ("model", "cd_k"): int,
    ("model", "cd_lr"): float,
    ("model", "cd_momentum"): float,
    ("model", "epochs_per_layer"): str,     # comma-separated counts
    ("model", "minibatch_size"): int,
    ("model", "deterministic_activations"): bool,
    ("model", "fine_tune_lr"): float,
    ("model", "fine_tune_sweeps"): int,
    ("model", "temporal_hidden"): int,
    ("model", "temporal_epochs"): int,
    ("model", "temporal_cd_k"): int,
    ("model", "temporal_lr"): float,
    ("model", "temporal_momentum"): float,
    ("model", "temporal_minibatch"): int,
    ("model", "gibbs_steps_sampling"): int,
    ("model", "checkpoint_every"): int,
    ("model", "linear_lr"): float,
    ("model", "linear_sweeps"): int,
    ("model", "reward_lr"): float,
    ("model", "reward_iterations"): int,
    ("agent", "alpha"): float,
    ("agent", "alpha_sim"): float,
    ("agent", "alpha_sim_decay"): float,
    ("agent", "alpha_sim_floor"): float,
    ("agent", "epsilon"): float,
    ("agent", "epsilon_decay"): float,
    ("agent", "epsilon_floor"): float,
    ("agent", "k_sim"): int,
    ("agent", "episodes"): int,
    ("agent", "runs"): int,
    ("agent", "max_episode_steps"): int,
    ("agent", "td_updates"): int,
    ("agent", "td_alpha"): float,
    ("eval", "samples_per_state"): int,
    ("eval", "k_max"): int,
    ("eval", "trajectories"): int,
    ("eval", "n_walks"): int,
    ("eval", "walk_length"): int,
    ("eval", "td_checkpoints"): int,
    ("run", "n_steps"): int,
    ("run", "seed"): int,
    ("run", "out_dir"): str,
}

DEFAULTS = {
    "env": {"kind": "chain", "n_states": 6, "p_advance": 0.8,
            "reward_state": 5, "rows": 4, "cols": 6, "p_success": 0.9,
            "reward_states": "23", "gamma": 0.9},
    "observations": {"source": "synthetic", "image_side": 8,
                     "variants_per_class": 3, "noise": 0.02, "idx_path": ""},
    "model": {"layer_sizes": "16,12,8", "cd_k": 5, "cd_lr": 0.1,
              "cd_momentum": 0.5, "epochs_per_layer": "100,100,100",
              "minibatch_size": 25, "deterministic_activations": False,
              "fine_tune_lr": 0.5, "fine_tune_sweeps": 200,
              "temporal_hidden": 64, "temporal_epochs": 1000,
              "temporal_cd_k": 10, "temporal_lr": 0.02,
              "temporal_momentum": 0.9, "temporal_minibatch": 80,
              "gibbs_steps_sampling": 500, "checkpoint_every": 100,
              "linear_lr": 0.001, "linear_sweeps": 5,
              "reward_lr": 0.05, "reward_iterations": 2000},
    "agent": {"alpha": 0.001, "alpha_sim": 0.002, "alpha_sim_decay": 0.95,
              "alpha_sim_floor": 0.0001, "epsilon": 0.9,
              "epsilon_decay": 0.9, "epsilon_floor": 0.05, "k_sim": 10,
              "episodes": 400, "runs": 5, "max_episode_steps": 200,
              "td_updates": 400000, "td_alpha": 0.02},
    "eval": {"samples_per_state": 20, "k_max": 20, "trajectories": 200,
             "n_walks": 3, "walk_length": 10, "td_checkpoints": 10},
    "run": {"n_steps": 800, "seed": 1, "out_dir": "out"},
}

PRESETS = {
    # desk scale: full pipeline in minutes on one core
    "desk-chain": {},
    "desk-grid": {
        "env": {"kind": "grid", "rows": 4, "cols": 6, "p_success": 0.9,
                "reward_states": "23", "gamma": 0.9},
        "observations": {"variants_per_class": 1, "noise": 0.0},
        "model": {"layer_sizes": "24,10", "cd_k": 2,
                  "epochs_per_layer": "80,80", "temporal_epochs": 800,
                  "temporal_minibatch": 40, "checkpoint_every": 100},
        "agent": {"alpha": 0.001, "alpha_sim": 0.002, "k_sim": 10,
                  "episodes": 400},
        "run": {"n_steps": 3000},
    },
    # paper-faithful hyperparameters; far outside CI budgets
    "paper-chain": {
        "observations": {"source": "idx", "image_side": 28,
                         "variants_per_class": 100},
        "model": {"layer_sizes": "500,500,200,100", "cd_k": 10,
                  "cd_lr": 0.005, "cd_momentum": 0.9,
                  "epochs_per_layer": "2000,1000,3000,5000",
                  "minibatch_size": 50, "fine_tune_lr": 0.01,
                  "fine_tune_sweeps": 20000, "temporal_hidden": 1000,
                  "temporal_epochs": 3000, "temporal_cd_k": 20,
                  "temporal_lr": 0.005, "temporal_momentum": 0.9,
                  "temporal_minibatch": 100, "gibbs_steps_sampling": 5000},
        "agent": {"alpha": 0.01, "td_alpha": 0.02, "td_updates": 400000,
                  "k_sim": 5},
        "run": {"n_steps": 1000},
    },
    "paper-grid": {
        "env": {"kind": "grid", "rows": 5, "cols": 18, "p_success": 0.9,
                "reward_states": "35", "gamma": 0.9},
        "observations": {"image_side": 32, "variants_per_class": 1,
                         "noise": 0.0},
        "model": {"layer_sizes": "2000,1000,200,100", "cd_k": 5,
                  "cd_lr": 0.001, "cd_momentum": 0.9,
                  "epochs_per_layer": "40000,20000,20000,200000",
                  "minibatch_size": 90, "deterministic_activations": True,
                  "temporal_hidden": 500, "temporal_epochs": 2000,
                  "temporal_cd_k": 5, "temporal_lr": 0.005,
                  "temporal_minibatch": 3600, "gibbs_steps_sampling": 5000,
                  "checkpoint_every": 150, "reward_lr": 0.0001,
                  "reward_iterations": 100000},
        "agent": {"alpha": 0.001, "alpha_sim": 0.001, "k_sim": 50,
                  "episodes": 300, "runs": 10},
        "run": {"n_steps": 7200},
    },
}


class ExperimentConfig:
    def __init__(self, values=None):
        self.values = {s: dict(v) for s, v in DEFAULTS.items()}
        for section, entries in (values or {}).items():
            for key, val in entries.items():
                if (section, key) not in SCHEMA:
                    raise KeyError(f"unknown config field [{section}] {key}")
                self.values[section][key] = SCHEMA[(section, key)](val)

    def get(self, section, key):
        return self.values[section][key]

    def set(self, section, key, value):
        if (section, key) not in SCHEMA:
            raise KeyError(f"unknown config field [{section}] {key}")
        self.values[section][key] = SCHEMA[(section, key)](value)

    def int_list(self, section, key):
        raw = self.values[section][key].strip()
        return [int(x) for x in raw.split(",")] if raw else []

    def hash(self):
        # out_dir identifies where results land, not what the experiment is
        values = {s: {k: v for k, v in entries.items()
                      if (s, k) != ("run", "out_dir")}
                  for s, entries in self.values.items()}
        blob = json.dumps(values, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def save(self, path):
        cp = configparser.ConfigParser()
        for section, entries in self.values.items():
            cp[section] = {}
            for key, val in entries.items():
                if isinstance(val, bool):
                    cp[section][key] = "true" if val else "false"
                elif isinstance(val, float):
                    cp[section][key] = f"{val:.17g}"
                else:
                    cp[section][key] = str(val)
        with open(path, "w", encoding="utf-8") as fh:
            cp.write(fh)

    @classmethod
    def load(cls, path):
        cp = configparser.ConfigParser()
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
        values = {}
        for section in cp.sections():
            values[section] = {}
            for key, raw in cp[section].items():
                typ = SCHEMA.get((section, key))
                if typ is None:
                    raise KeyError(f"unknown config field [{section}] {key}")
                if typ is bool:
                    values[section][key] = raw.strip().lower() == "true"
                else:
                    values[section][key] = typ(raw)
        return cls(values)

    @classmethod
    def preset(cls, name):
        if name not in PRESETS:
            raise KeyError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
        return cls(PRESETS[name])
