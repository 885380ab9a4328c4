"""Stochastic include/exclude policy and its REINFORCE trainer.

The policy scores the two actions with a 2-row matrix applied to the
preprocessed state and squashes the score difference through a sigmoid to
get the include probability. Training samples actions from that Bernoulli;
inference thresholds it at 0.5 (strictly greater means include). Updates
follow the score-function estimator on discounted returns, optionally
centered by the batch-mean baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .base import ParamsMixin
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .core import ExplanationRecord, Mask, Session
from .env import ExplainEnv, ExplainTask, make_task, preprocess, state_dim
from .recommenders import RecommenderBase
from .validation import as_rng

Params = dict[str, np.ndarray]


@dataclass
class Episode:
    """One rollout: raw observations, the actions taken, per-step rewards."""

    features: list[np.ndarray]
    actions: list[int]
    rewards: list[float]


@dataclass
class TrainerConfig:
    gamma: float = 0.95
    learning_rate: float = 1e-3
    max_episodes: int | None = None
    batch_size: int = 32
    reward_window: int = 100
    reward_tol: float = 0.0
    param_tol: float = 0.0
    baseline_enabled: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.reward_window < 1:
            raise ValueError(f"reward_window must be >= 1, got {self.reward_window}")
        if self.reward_tol < 0 or self.param_tol < 0:
            raise ValueError("tolerances must be non-negative")


def init_policy_params(embed_dim: int, hidden_dim: int, rng: np.random.Generator) -> Params:
    """Seeded initialization of the preprocessor and action-score weights.

    The action rows start at small noise rather than zero: with identical
    rows, the preprocessor would receive no gradient at all (its gradient is
    proportional to the row difference), so learning could never start.
    """
    dim = state_dim(embed_dim)
    return {
        "state_w": rng.normal(0.0, 1.0 / np.sqrt(dim), size=(hidden_dim, dim)),
        "state_b": np.zeros(hidden_dim, dtype=np.float64),
        "action_w": rng.normal(0.0, 0.1, size=(2, hidden_dim)),
    }


def action_prob(params: Params, state_vector: np.ndarray) -> float:
    """Probability of the include action given a preprocessed state."""
    if not np.all(np.isfinite(state_vector)):
        raise FloatingPointError("state vector contains non-finite values")
    z = params["action_w"] @ state_vector
    return float(1.0 / (1.0 + np.exp(-(z[1] - z[0]))))


def select_action(
    params: Params,
    state_vector: np.ndarray,
    mode: str = "greedy",
    rng: np.random.Generator | None = None,
) -> int:
    """Greedy thresholds strictly above 0.5; sample draws from the Bernoulli."""
    p = action_prob(params, state_vector)
    if mode == "greedy":
        return 1 if p > 0.5 else 0
    if mode == "sample":
        if rng is None:
            raise ValueError("sample mode needs an rng")
        return 1 if rng.random() < p else 0
    raise ValueError(f"unknown mode {mode!r}")


def discounted_returns(rewards: list[float], gamma: float) -> list[float]:
    """G_t = sum_{k>=t} gamma^(k-t) r_k, computed right to left."""
    if not rewards:
        raise ValueError("rewards must be non-empty")
    out = [0.0] * len(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def policy_objective_and_grads(
    params: Params, episodes: list[Episode], step_weights: list[list[float]]
) -> tuple[float, Params]:
    """Weighted log-likelihood of the taken actions, with analytic gradients.

    The objective is mean_episodes sum_t w_t * log pi(a_t | x_t), the
    REINFORCE surrogate once ``step_weights`` holds the (possibly baselined)
    returns. Gradients flow through the action scores and the ReLU
    preprocessor.
    """
    grads = {name: np.zeros_like(value) for name, value in params.items()}
    total = 0.0
    scale = 1.0 / len(episodes)
    w_diff = params["action_w"][1] - params["action_w"][0]
    for episode, weights in zip(episodes, step_weights):
        for x, a, w in zip(episode.features, episode.actions, weights):
            pre = params["state_w"] @ x + params["state_b"]
            h = np.maximum(pre, 0.0)
            z = params["action_w"] @ h
            u = z[1] - z[0]
            p = 1.0 / (1.0 + np.exp(-u))
            total += scale * w * (np.log(p) if a == 1 else np.log1p(-p))
            du = scale * w * (a - p)
            grads["action_w"][1] += du * h
            grads["action_w"][0] -= du * h
            dpre = du * w_diff * (pre > 0.0)
            grads["state_w"] += np.outer(dpre, x)
            grads["state_b"] += dpre
    return total, grads


def reinforce_update(
    params: Params, episodes: list[Episode], config: TrainerConfig
) -> tuple[Params, float]:
    """One gradient-ascent step on a batch of sampled episodes.

    Returns the updated parameters and the reported loss, the negated
    batch-mean discounted return from the episode starts.
    """
    if not episodes:
        raise ValueError("reinforce_update needs a non-empty episode batch")
    returns = [discounted_returns(e.rewards, config.gamma) for e in episodes]
    baseline = 0.0
    if config.baseline_enabled:
        flat = [g for ep in returns for g in ep]
        baseline = float(np.mean(flat))
    weights = [[g - baseline for g in ep] for ep in returns]
    _, grads = policy_objective_and_grads(params, episodes, weights)
    updated = {name: value + config.learning_rate * grads[name] for name, value in params.items()}
    loss = -float(np.mean([ep[0] for ep in returns]))
    return updated, loss


def rollout(env: ExplainEnv, params: Params, mode: str, rng=None) -> tuple[Episode, object]:
    """Run one episode to termination; returns the episode and its breakdown."""
    state = env.reset()
    features: list[np.ndarray] = []
    actions: list[int] = []
    breakdown = None
    while not state.terminal:
        features.append(state.features)
        a = select_action(params, state.state_vector, mode=mode, rng=rng)
        actions.append(a)
        state, breakdown = env.step(state, a)
    rewards = [0.0] * (len(actions) - 1) + [breakdown.total]
    return Episode(features, actions, rewards), breakdown


@dataclass
class TrainLogRow:
    episode: int
    mean_reward: float
    r_fe_rate: float
    r_cfe_rate: float
    mean_complexity: float
    loss: float


def train_explainer(
    sessions: list[Session],
    recommender: RecommenderBase,
    k: int,
    config: TrainerConfig,
    hidden_dim: int | None = None,
    params: Params | None = None,
) -> tuple[Params, list[TrainLogRow]]:
    """Train the mask policy over the sessions' explanation tasks.

    Episodes run in seeded shuffled order, batched for each update. Training
    stops at the episode budget, when the moving-average reward settles
    within ``reward_tol``, or when an update moves the parameters less than
    ``param_tol`` in L2 norm (zero tolerances disable those two checks).
    """
    tasks = [make_task(s, recommender, k) for s in sessions if len(s) >= 2]
    if not tasks:
        raise ValueError("no sessions of length >= 2 to train on")
    rng = np.random.default_rng(config.seed)
    if params is None:
        if hidden_dim is None:
            hidden_dim = recommender.embed_dim
        params = init_policy_params(recommender.embed_dim, hidden_dim, rng)
    envs = [ExplainEnv(t, params) for t in tasks]
    max_episodes = config.max_episodes
    if max_episodes is None:
        max_episodes = 50 * len(tasks)

    log: list[TrainLogRow] = []
    window: list[tuple[float, float, float, float]] = []
    episode_count = 0
    last_loss = 0.0
    prev_window_mean: float | None = None
    done = max_episodes == 0
    while not done:
        order = rng.permutation(len(envs))
        for start in range(0, len(order), config.batch_size):
            batch_idx = order[start : start + config.batch_size]
            episodes: list[Episode] = []
            for i in batch_idx:
                envs[i].params = params
                episode, breakdown = rollout(envs[i], params, "sample", rng)
                episodes.append(episode)
                episode_count += 1
                window.append(
                    (
                        breakdown.total,
                        breakdown.r_fe,
                        breakdown.r_cfe,
                        float(sum(episode.actions)),
                    )
                )
                if len(window) > config.reward_window:
                    window.pop(0)
                if episode_count >= max_episodes:
                    break
            new_params, last_loss = reinforce_update(params, episodes, config)
            stats = np.mean(window, axis=0)
            log.append(
                TrainLogRow(
                    episode=episode_count,
                    mean_reward=float(stats[0]),
                    r_fe_rate=float(stats[1]),
                    r_cfe_rate=float(stats[2]),
                    mean_complexity=float(stats[3]),
                    loss=last_loss,
                )
            )
            delta = np.sqrt(
                sum(float(np.sum((new_params[n] - params[n]) ** 2)) for n in params)
            )
            params = new_params
            if episode_count >= max_episodes:
                done = True
            if config.param_tol > 0 and delta < config.param_tol:
                done = True
            if config.reward_tol > 0 and len(window) >= config.reward_window:
                wmean = float(stats[0])
                if prev_window_mean is not None and abs(wmean - prev_window_mean) < config.reward_tol:
                    done = True
                prev_window_mean = wmean
            if done:
                break
    return params, log


def explain_task(params: Params, task: ExplainTask, record_trace: bool = False) -> ExplanationRecord:
    """Greedy rollout of the trained policy on one task."""
    from .env import build_record

    env = ExplainEnv(task, params)
    state = env.reset()
    actions: list[int] = []
    trace: list[tuple[int, int, float]] = []
    while not state.terminal:
        a = select_action(params, state.state_vector, mode="greedy")
        t = state.t
        state, breakdown = env.step(state, a)
        actions.append(a)
        trace.append((t, a, 0.0 if breakdown is None else breakdown.total))
    mask = Mask(tuple(actions))
    return build_record(task, mask, trace=tuple(trace) if record_trace else None)


class ReinforceExplainer(ParamsMixin):
    """Estimator wrapper: fit a mask policy against a frozen recommender.

    Follows the fit/predict pattern: hyperparameters at construction,
    ``fit(sessions)`` trains the policy, ``explain(session)`` runs the greedy
    rollout and returns a verdict-carrying record. The wrapped recommender is
    treated as read-only throughout.
    """

    def __init__(
        self,
        recommender: RecommenderBase,
        k: int = 10,
        hidden_dim: int | None = None,
        gamma: float = 0.95,
        learning_rate: float = 1e-3,
        max_episodes: int | None = None,
        batch_size: int = 32,
        reward_window: int = 100,
        reward_tol: float = 0.0,
        param_tol: float = 0.0,
        baseline_enabled: bool = True,
        record_trace: bool = False,
        seed: int = 0,
    ):
        self.recommender = recommender
        self.k = k
        self.hidden_dim = hidden_dim
        self.gamma = gamma
        self.learning_rate = learning_rate
        self.max_episodes = max_episodes
        self.batch_size = batch_size
        self.reward_window = reward_window
        self.reward_tol = reward_tol
        self.param_tol = param_tol
        self.baseline_enabled = baseline_enabled
        self.record_trace = record_trace
        self.seed = seed

    def _config(self) -> TrainerConfig:
        return TrainerConfig(
            gamma=self.gamma,
            learning_rate=self.learning_rate,
            max_episodes=self.max_episodes,
            batch_size=self.batch_size,
            reward_window=self.reward_window,
            reward_tol=self.reward_tol,
            param_tol=self.param_tol,
            baseline_enabled=self.baseline_enabled,
            seed=self.seed,
        )

    def fit(self, sessions: list[Session]):
        self.params_, self.log_ = train_explainer(
            sessions,
            self.recommender,
            self.k,
            self._config(),
            hidden_dim=self.hidden_dim,
        )
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise RuntimeError("this ReinforceExplainer is not fitted yet; call fit first")

    def make_task(self, session: Session) -> ExplainTask:
        return make_task(session, self.recommender, self.k)

    def explain(self, session: Session) -> ExplanationRecord:
        self._check_fitted()
        return explain_task(self.params_, self.make_task(session), self.record_trace)

    def explain_all(self, sessions: list[Session], workers: int | None = None) -> list[ExplanationRecord]:
        """Explain many sessions; rollouts are read-only so order is preserved
        and results do not depend on the worker count."""
        self._check_fitted()
        if workers is not None and workers > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(self.explain, sessions))
        return [self.explain(s) for s in sessions]


def save_policy(params: Params, embed_dim: int, path) -> None:
    save_checkpoint(
        path,
        Checkpoint(
            catalog_size=0,
            dim=embed_dim,
            decay=0.0,
            alpha=0.0,
            tensors=dict(params),
        ),
    )


def load_policy(path) -> tuple[Params, int]:
    ckpt = load_checkpoint(path)
    params = {name: t.astype(np.float64) for name, t in ckpt.tensors.items()}
    return params, ckpt.dim
