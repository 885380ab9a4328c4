"""Run configuration: documented keys, range validation, seed fan-out.

Configs load from a flat JSON object; unknown keys are rejected so typos
fail loudly. Environment variables prefixed ``EXREC_`` override file values
(e.g. ``EXREC_SEED=7``), and explicit CLI flags override both.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, fields

from .errors import ConfigError

ENV_PREFIX = "EXREC_"


def _positive(name, value):
    if value <= 0:
        raise ConfigError(f"{name} must be positive, got {value}")


def _non_negative(name, value):
    if value < 0:
        raise ConfigError(f"{name} must be non-negative, got {value}")


def _unit_open(name, value):
    if not 0.0 < value < 1.0:
        raise ConfigError(f"{name} must lie in (0, 1), got {value}")


@dataclass
class RunConfig:
    # data
    dataset_name: str = "synthetic"
    data_source: str = "synthetic"  # "synthetic" | "tsv"
    input_path: str = ""
    split_scheme: str = "ratio"  # "ratio" | "last_session_per_user"
    min_session_len: int = 2
    min_item_freq: int = 1
    max_item_freq: int | None = 100
    synth_catalog_size: int = 50
    synth_sessions: int = 200
    synth_min_len: int = 5
    synth_max_len: int = 10
    synth_p_trigger: float = 0.9
    synth_noise: float = 0.3
    # recommenders
    recommender: str = "markov"  # "markov" | "neural"
    k: int = 10
    report_ks: tuple[int, ...] = (5, 10, 20)
    embed_dim: int = 32
    recency_decay: float = 0.8
    markov_alpha: float = 0.1
    rec_learning_rate: float = 0.1
    rec_epochs: int = 3
    rec_batch_size: int = 32
    # explainer
    gamma: float = 0.95
    policy_learning_rate: float = 0.001
    policy_hidden_dim: int | None = None
    max_episodes: int | None = None
    policy_batch_size: int = 32
    reward_window: int = 100
    reward_tol: float = 0.0
    param_tol: float = 0.0
    baseline_enabled: bool = True
    # oracle and baselines
    oracle_max_len: int = 20
    keep_prob: float = 0.5
    # fine-tuning
    lambda_weight: float = 0.5
    temperature: float = 1.0
    finetune_learning_rate: float = 0.05
    finetune_epochs: int = 3
    finetune_batch_size: int = 32
    ablation_mode: str = "both"
    # run control
    seed: int = 0
    workers: int | None = None

    def validate(self) -> "RunConfig":
        if self.data_source not in ("synthetic", "tsv"):
            raise ConfigError(f"data_source must be synthetic or tsv, got {self.data_source!r}")
        if self.data_source == "tsv" and not self.input_path:
            raise ConfigError("input_path is required when data_source is tsv")
        if self.split_scheme not in ("ratio", "last_session_per_user"):
            raise ConfigError(f"unknown split_scheme {self.split_scheme!r}")
        if self.recommender not in ("markov", "neural"):
            raise ConfigError(f"recommender must be markov or neural, got {self.recommender!r}")
        if self.min_session_len < 2:
            raise ConfigError(f"min_session_len must be >= 2, got {self.min_session_len}")
        _positive("min_item_freq", self.min_item_freq)
        if self.max_item_freq is not None:
            if self.max_item_freq < self.min_item_freq:
                raise ConfigError("max_item_freq must be >= min_item_freq")
        _positive("synth_catalog_size", self.synth_catalog_size)
        _positive("synth_sessions", self.synth_sessions)
        if not 2 <= self.synth_min_len <= self.synth_max_len:
            raise ConfigError("need 2 <= synth_min_len <= synth_max_len")
        if not 0.5 < self.synth_p_trigger <= 1.0:
            raise ConfigError(f"synth_p_trigger must lie in (0.5, 1], got {self.synth_p_trigger}")
        if not 0.0 <= self.synth_noise <= 1.0:
            raise ConfigError(f"synth_noise must lie in [0, 1], got {self.synth_noise}")
        _positive("k", self.k)
        if not self.report_ks:
            raise ConfigError("report_ks must be non-empty")
        for rk in self.report_ks:
            _positive("report_ks entry", rk)
        _positive("embed_dim", self.embed_dim)
        if not 0.0 < self.recency_decay <= 1.0:
            raise ConfigError(f"recency_decay must lie in (0, 1], got {self.recency_decay}")
        _non_negative("markov_alpha", self.markov_alpha)
        _positive("rec_learning_rate", self.rec_learning_rate)
        _non_negative("rec_epochs", self.rec_epochs)
        _positive("rec_batch_size", self.rec_batch_size)
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")
        _positive("policy_learning_rate", self.policy_learning_rate)
        if self.policy_hidden_dim is not None:
            _positive("policy_hidden_dim", self.policy_hidden_dim)
        if self.max_episodes is not None:
            _non_negative("max_episodes", self.max_episodes)
        _positive("policy_batch_size", self.policy_batch_size)
        _positive("reward_window", self.reward_window)
        _non_negative("reward_tol", self.reward_tol)
        _non_negative("param_tol", self.param_tol)
        _positive("oracle_max_len", self.oracle_max_len)
        _unit_open("keep_prob", self.keep_prob)
        _non_negative("lambda_weight", self.lambda_weight)
        _positive("temperature", self.temperature)
        _positive("finetune_learning_rate", self.finetune_learning_rate)
        _non_negative("finetune_epochs", self.finetune_epochs)
        if self.finetune_batch_size < 2:
            raise ConfigError(f"finetune_batch_size must be >= 2, got {self.finetune_batch_size}")
        if self.ablation_mode not in ("both", "pos_only", "neg_only"):
            raise ConfigError(f"unknown ablation_mode {self.ablation_mode!r}")
        if self.workers is not None:
            _positive("workers", self.workers)
        return self

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = list(value) if isinstance(value, tuple) else value
        return out


def _coerce(name: str, raw: str, current):
    if name in ("max_item_freq", "policy_hidden_dim", "max_episodes", "workers"):
        return None if raw.lower() in ("none", "null", "") else int(raw)
    if isinstance(current, bool):
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"cannot parse boolean {name}={raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        return tuple(int(x) for x in raw.split(","))
    return raw


def load_config(path=None, overrides: dict | None = None, env: dict | None = None) -> RunConfig:
    """Build a validated config from file, environment, and explicit overrides."""
    cfg = RunConfig()
    known = {f.name for f in fields(cfg)}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
        for name, value in data.items():
            if isinstance(value, list):
                value = tuple(value)
            setattr(cfg, name, value)
    env = os.environ if env is None else env
    for name in known:
        raw = env.get(ENV_PREFIX + name.upper())
        if raw is not None:
            setattr(cfg, name, _coerce(name, raw, getattr(cfg, name)))
    for name, value in (overrides or {}).items():
        if name not in known:
            raise ConfigError(f"unknown config override {name!r}")
        if value is not None:
            setattr(cfg, name, value)
    return cfg.validate()


def echo_config(cfg: RunConfig, path) -> None:
    """Write the fully resolved config next to a stage's outputs."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def derive_seed(seed: int, stage: str) -> int:
    """Per-stage seed: the global seed hashed with the stage name."""
    digest = hashlib.sha256(f"{seed}/{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % (2**63)
