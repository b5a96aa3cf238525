"""Multi-critic actor-critic training loop.

Each update collects an N-step rollout (optionally hot-wired to one repeated
random action during the early phase), pushes every reward through the
past-reward pipeline to form a second, long-term reward stream, computes
discounted returns for both streams, and descends the combined
policy/two-critic loss. Ablation modes drop the second critic, the hot-wire
mechanism, or the flip step of the pipeline.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import neural
from .envs import ENV_GAMMA, Env, make_env
from .neural import (
    PolicyValueParams,
    TrainingDivergedError,
    accumulate_backward,
    apply_gradients,
    forward,
    init_params,
    zeros_like_params,
)
from .vwr import RewardHistory, VwrConfig, vwr

MODES = ("a2mc", "a2c_baseline", "a2mc_no_hotwire", "a2mc_no_flip")

# Modes in which the hot-wire mechanism is armed.
_HOTWIRE_MODES = frozenset({"a2mc", "a2mc_no_flip"})

LOG_COLUMNS = (
    "timestep",
    "episode",
    "episode_return",
    "mean_return_100",
    "r_vwr_mean",
    "sigma_delta_mean",
    "policy_loss",
    "value_loss_short",
    "value_loss_long",
    "entropy",
    "hotwire_active",
)

REWARD_COLUMNS = ("timestep", "reward", "r_vwr", "terminal")


@dataclass
class TrainConfig:
    """Everything that affects a training run.

    ``gamma=None`` resolves to the per-environment default at train time.
    ``hotwire_fraction`` bounds the eligibility phase to that initial share
    of the total budget; within it, a rollout is hot-wired with probability
    ``epsilon_hotwire`` whenever no nonzero reward was seen in the trailing
    ``hotwire_window`` steps.
    """

    env: str = "sparse-chain"
    env_args: dict = field(default_factory=dict)
    mode: str = "a2mc"
    gamma: float | None = None
    n_steps: int = 20
    total_timesteps: int = 200_000
    epsilon_hotwire: float = 0.20
    hotwire_fraction: float = 1.0 / 40.0
    hotwire_window: int = 1000
    vwr: VwrConfig = field(default_factory=VwrConfig)
    step_size: float = 0.2
    momentum: float = 0.0
    entropy_coef: float = 0.01
    grad_clip: float = 0.5
    value_coef_short: float = 1.0
    value_coef_long: float = 1.0
    hidden_dim: int = 64
    seed: int = 0
    reward_clip: float | None = None
    history_reset: str = "per_episode"  # or "persistent"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.history_reset not in ("per_episode", "persistent"):
            raise ValueError(f"bad history_reset {self.history_reset!r}")
        if self.n_steps < 1:
            raise ValueError("n_steps must be positive")
        if not (0.0 <= self.epsilon_hotwire <= 1.0):
            raise ValueError("epsilon_hotwire must be in [0, 1]")
        if not (0.0 < self.hotwire_fraction <= 1.0):
            raise ValueError("hotwire_fraction must be in (0, 1]")
        if self.gamma is not None and not (0.0 <= self.gamma < 1.0):
            raise ValueError("gamma must be in [0, 1)")

    def resolved(self, env_name: str | None = None) -> "TrainConfig":
        """Copy with the environment pinned and gamma made concrete."""
        env = env_name or self.env
        gamma = self.gamma if self.gamma is not None else ENV_GAMMA[env]
        return dataclasses.replace(self, env=env, gamma=gamma)


def effective_vwr_config(cfg: TrainConfig) -> VwrConfig:
    """Pipeline config actually used at runtime; the no-flip mode drops the flip."""
    if cfg.mode == "a2mc_no_flip":
        return dataclasses.replace(cfg.vwr, use_flip=False)
    return cfg.vwr


@dataclass
class RolloutBatch:
    """One N-step trajectory slice plus bootstrap values for both critics."""

    states: np.ndarray        # (N, state_dim)
    actions: np.ndarray       # (N,)
    env_rewards: np.ndarray   # (N,) training-visible (possibly clipped)
    vwr_rewards: np.ndarray   # (N,)
    terminals: np.ndarray     # (N,) bool
    bootstrap_short: float
    bootstrap_long: float
    hotwired: bool


def maybe_hotwire(rng: np.random.Generator, timestep: int, cfg: TrainConfig,
                  reward_seen_recently: bool, num_actions: int) -> int | None:
    """Decide whether the upcoming rollout repeats one random action.

    Fires with probability ``epsilon_hotwire``, and only while the agent is
    both inside the initial ``hotwire_fraction`` of the budget and starved
    of rewards. Returns the action to repeat, or None for policy actions.
    """
    if timestep >= cfg.hotwire_fraction * cfg.total_timesteps:
        return None
    if reward_seen_recently:
        return None
    if rng.random() >= cfg.epsilon_hotwire:
        return None
    return int(rng.integers(num_actions))


def _nstep_returns(rewards, terminals, bootstrap, gamma):
    """Backward recursion R <- r_i + gamma * R, restarted at terminals."""
    n = rewards.shape[0]
    out = np.empty(n)
    acc = bootstrap
    for i in range(n - 1, -1, -1):
        acc = rewards[i] if terminals[i] else rewards[i] + gamma * acc
        out[i] = acc
    return out


def compute_returns(batch: RolloutBatch, cfg: TrainConfig):
    """Discounted returns for both reward streams.

    The baseline mode has no long-term critic; its long returns are zeros
    and the vwr reward stream is never touched.
    """
    gamma = cfg.gamma
    if gamma is None:
        raise ValueError("config must be resolved (gamma set) before computing returns")
    short = _nstep_returns(batch.env_rewards, batch.terminals, batch.bootstrap_short, gamma)
    if cfg.mode == "a2c_baseline":
        return short, np.zeros_like(short)
    long = _nstep_returns(batch.vwr_rewards, batch.terminals, batch.bootstrap_long, gamma)
    return short, long


def _sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, rng.random(), side="right"))
    return min(idx, probs.shape[0] - 1)


class Trainer:
    """Owns the mutable loop state: env, params, reward history, RNG streams.

    Three independent streams are derived from the seed (parameter init,
    action sampling, hot-wire decisions) so ablation modes consuming fewer
    draws stay aligned on the rest.
    """

    def __init__(self, env: Env, cfg: TrainConfig):
        cfg = cfg.resolved(env.spec.name)
        self.env = env
        self.cfg = cfg
        self.vwr_cfg = effective_vwr_config(cfg)
        ss = np.random.SeedSequence(cfg.seed)
        init_ss, action_ss, hotwire_ss = ss.spawn(3)
        self.rng_action = np.random.default_rng(action_ss)
        self.rng_hotwire = np.random.default_rng(hotwire_ss)
        self.params = init_params(env.spec.state_dim, env.spec.num_actions,
                                  cfg.hidden_dim, np.random.default_rng(init_ss))
        self.velocity = zeros_like_params(self.params) if cfg.momentum > 0 else None
        self.history = RewardHistory(cfg.vwr.window)
        self.state = env.reset(seed=cfg.seed)
        self.t = 0
        self.episodes_done = 0
        self.episode_returns: list[float] = []
        self._ep_return = 0.0
        self._last_reward_step: int | None = None
        # per-step streams for the rewards file / replay audit
        self.step_rewards: list[float] = []
        self.step_vwr: list[float] = []
        self.step_terminals: list[bool] = []
        self._last_sigma_mean = 0.0

    def reward_seen_recently(self) -> bool:
        return (
            self._last_reward_step is not None
            and self.t - self._last_reward_step < self.cfg.hotwire_window
        )

    def collect_rollout(self) -> tuple[RolloutBatch, list[neural.ForwardCache]]:
        """Run N env steps, feeding the reward pipeline at every step."""
        cfg = self.cfg
        env = self.env
        n = cfg.n_steps
        hot_action = None
        if cfg.mode in _HOTWIRE_MODES and cfg.epsilon_hotwire > 0:
            hot_action = maybe_hotwire(self.rng_hotwire, self.t, cfg,
                                       self.reward_seen_recently(),
                                       env.spec.num_actions)

        states = np.empty((n, env.spec.state_dim))
        actions = np.empty(n, dtype=np.int64)
        env_rewards = np.empty(n)
        vwr_rewards = np.empty(n)
        terminals = np.zeros(n, dtype=bool)
        caches = []
        sigma_sum = 0.0

        for k in range(n):
            cache = forward(self.params, self.state)
            caches.append(cache)
            action = hot_action if hot_action is not None else _sample_action(
                cache.probs, self.rng_action)
            res = env.step(action)
            reward = res.reward
            if cfg.reward_clip is not None:
                reward = float(np.clip(reward, -cfg.reward_clip, cfg.reward_clip))
            self.history.push(reward)
            breakdown = vwr(self.history, self.vwr_cfg)

            states[k] = self.state
            actions[k] = action
            env_rewards[k] = reward
            vwr_rewards[k] = breakdown.r_vwr
            terminals[k] = res.terminal
            sigma_sum += breakdown.sigma_delta

            self.t += 1
            if reward != 0.0:
                self._last_reward_step = self.t
            self.step_rewards.append(reward)
            self.step_vwr.append(breakdown.r_vwr)
            self.step_terminals.append(res.terminal)
            self._ep_return += res.reward

            if res.terminal:
                self.episodes_done += 1
                self.episode_returns.append(self._ep_return)
                self._ep_return = 0.0
                self.state = env.reset()
                if cfg.history_reset == "per_episode":
                    self.history.reset()
            else:
                self.state = res.next_state

        if terminals[-1]:
            bootstrap_short = 0.0
            bootstrap_long = 0.0
        else:
            tail = forward(self.params, self.state)
            bootstrap_short = tail.v_short
            bootstrap_long = tail.v_long

        self._last_sigma_mean = sigma_sum / n
        batch = RolloutBatch(states, actions, env_rewards, vwr_rewards, terminals,
                             bootstrap_short, bootstrap_long, hot_action is not None)
        return batch, caches


def update(params: PolicyValueParams, batch: RolloutBatch, returns_short, returns_long,
           cfg: TrainConfig, velocity: PolicyValueParams | None = None,
           caches=None) -> dict:
    """One descent step on the batch; returns scalar loss diagnostics.

    Per step the policy gradient is weighted by the advantage summed over
    the active critics; gradients are averaged over the batch, globally
    clipped, then applied. In baseline mode the long-term head is left
    untouched.
    """
    n = batch.actions.shape[0]
    baseline = cfg.mode == "a2c_baseline"
    grads = zeros_like_params(params)
    scale = 1.0 / n
    policy_loss = 0.0
    value_loss_short = 0.0
    value_loss_long = 0.0
    entropy_total = 0.0
    advantage_total = 0.0
    for i in range(n):
        cache = caches[i] if caches is not None else forward(params, batch.states[i])
        action = int(batch.actions[i])
        td_short = returns_short[i] - cache.v_short
        td_long = 0.0 if baseline else returns_long[i] - cache.v_long
        advantage = td_short + td_long
        accumulate_backward(
            params, grads, cache, advantage,
            cfg.value_coef_short * td_short,
            0.0 if baseline else cfg.value_coef_long * td_long,
            cfg.entropy_coef, action, scale,
        )
        probs = cache.probs
        safe = probs[probs > 0]
        entropy_total += float(-(safe * np.log(safe)).sum())
        policy_loss += -math.log(max(probs[action], 1e-300)) * advantage
        value_loss_short += td_short * td_short
        value_loss_long += td_long * td_long
        advantage_total += advantage

    diagnostics = {
        "policy_loss": policy_loss / n,
        "value_loss_short": value_loss_short / n,
        "value_loss_long": value_loss_long / n,
        "entropy": entropy_total / n,
        "mean_advantage": advantage_total / n,
    }
    if not all(math.isfinite(v) for v in diagnostics.values()):
        raise TrainingDivergedError(
            f"non-finite loss diagnostics {diagnostics}; parameter norms: {params.norms()}"
        )
    apply_gradients(params, grads, cfg.step_size, cfg.grad_clip, velocity, cfg.momentum)
    return diagnostics


@dataclass
class UpdateRecord:
    timestep: int
    episode: int
    episode_return: float
    mean_return_100: float
    r_vwr_mean: float
    sigma_delta_mean: float
    policy_loss: float
    value_loss_short: float
    value_loss_long: float
    entropy: float
    hotwire_active: bool


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".6g")


@dataclass
class TrainingLog:
    """Everything a run produced: per-update records, per-step streams,
    completed-episode returns and the final parameters."""

    env_name: str
    cfg: TrainConfig
    records: list = field(default_factory=list)
    step_rewards: list = field(default_factory=list)
    step_vwr: list = field(default_factory=list)
    step_terminals: list = field(default_factory=list)
    episode_returns: list = field(default_factory=list)
    params: PolicyValueParams | None = None

    def final_score(self) -> float:
        """Mean episode return over the last (up to) 100 completed episodes."""
        if not self.episode_returns:
            return 0.0
        return float(np.mean(self.episode_returns[-100:]))

    def write_log_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(LOG_COLUMNS) + "\n")
            for rec in self.records:
                fh.write(",".join(_fmt(getattr(rec, col)) for col in LOG_COLUMNS) + "\n")

    def write_rewards_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(REWARD_COLUMNS) + "\n")
            for i, (r, rv, term) in enumerate(
                zip(self.step_rewards, self.step_vwr, self.step_terminals), start=1
            ):
                fh.write(f"{i},{_fmt(r)},{_fmt(rv)},{int(term)}\n")


def train(env_name: str | None, cfg: TrainConfig) -> TrainingLog:
    """Run the full training loop; deterministic given (seed, cfg, env)."""
    cfg = cfg.resolved(env_name)
    env = make_env(cfg.env, **cfg.env_args)
    trainer = Trainer(env, cfg)
    cfg = trainer.cfg
    log = TrainingLog(env_name=cfg.env, cfg=cfg)

    while trainer.t < cfg.total_timesteps:
        batch, caches = trainer.collect_rollout()
        returns_short, returns_long = compute_returns(batch, cfg)
        diag = update(trainer.params, batch, returns_short, returns_long, cfg,
                      trainer.velocity, caches)
        recent = trainer.episode_returns[-100:]
        log.records.append(UpdateRecord(
            timestep=trainer.t,
            episode=trainer.episodes_done,
            episode_return=trainer.episode_returns[-1] if trainer.episode_returns else 0.0,
            mean_return_100=float(np.mean(recent)) if recent else 0.0,
            r_vwr_mean=float(batch.vwr_rewards.mean()),
            sigma_delta_mean=trainer._last_sigma_mean,
            policy_loss=diag["policy_loss"],
            value_loss_short=diag["value_loss_short"],
            value_loss_long=diag["value_loss_long"],
            entropy=diag["entropy"],
            hotwire_active=batch.hotwired,
        ))

    log.step_rewards = trainer.step_rewards
    log.step_vwr = trainer.step_vwr
    log.step_terminals = trainer.step_terminals
    log.episode_returns = trainer.episode_returns
    log.params = trainer.params
    return log


def replay_vwr_stream(log: TrainingLog) -> np.ndarray:
    """Recompute the long-term reward stream from the logged rewards.

    Used by the audit that checks the logged stream equals a fresh pipeline
    evaluation; honors the run's history-reset policy and flip ablation.
    """
    cfg = log.cfg
    vwr_cfg = effective_vwr_config(cfg)
    history = RewardHistory(cfg.vwr.window)
    out = np.empty(len(log.step_rewards))
    for i, (r, term) in enumerate(zip(log.step_rewards, log.step_terminals)):
        history.push(r)
        out[i] = vwr(history, vwr_cfg).r_vwr
        if term and cfg.history_reset == "per_episode":
            history.reset()
    return out
