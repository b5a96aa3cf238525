"""Built-in toy environments spanning three reward regimes.

* ``SparseChain``  -- 1-D corridor, a single +1 at the far end; the minimal
  sparse-reward testbed.
* ``GridWorld``    -- 5x5 grid with a goal reward and a small per-step
  penalty (a mildly shaped discrete task).
* ``PoleBalance``  -- classic cart-pole with +1 per step alive; dense
  rewards over a continuous state.

All have discrete actions, deterministic physics and seeded randomness:
(seed, action sequence) fully determines the trajectory. Instances are
stateful and single-owner; run one per rollout worker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class EnvStateError(RuntimeError):
    """Stepping a terminal or unreset environment."""


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    num_actions: int
    max_episode_steps: int


@dataclass(frozen=True)
class StepResult:
    next_state: np.ndarray
    reward: float
    terminal: bool
    episode_step: int


class Env:
    """Common stepping/validation shell; subclasses implement the physics."""

    spec: EnvSpec

    def __init__(self):
        self._rng = np.random.default_rng(0)
        self._episode_step = 0
        self._needs_reset = True

    def reset(self, seed: int | None = None) -> np.ndarray:
        """Start a new episode; reseeds the env stream when `seed` is given."""
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self._episode_step = 0
        self._needs_reset = False
        return self._reset_state()

    def step(self, action: int) -> StepResult:
        if self._needs_reset:
            raise EnvStateError(f"{self.spec.name}: reset() required before step()")
        action = int(action)
        if not (0 <= action < self.spec.num_actions):
            raise ValueError(
                f"{self.spec.name}: action {action} outside [0, {self.spec.num_actions})"
            )
        self._episode_step += 1
        state, reward, terminal = self._transition(action)
        if self._episode_step >= self.spec.max_episode_steps:
            terminal = True
        if terminal:
            self._needs_reset = True
        return StepResult(state, reward, terminal, self._episode_step)

    def _reset_state(self) -> np.ndarray:
        raise NotImplementedError

    def _transition(self, action: int):
        raise NotImplementedError


class SparseChain(Env):
    """Corridor of `length` cells; +1 only on reaching the last cell.

    Actions: 0 moves left (staying put at cell 0), 1 moves right. The state
    is a one-hot of the current cell. Reaching the end terminates the
    episode.
    """

    def __init__(self, length: int = 10, max_episode_steps: int | None = None):
        super().__init__()
        length = int(length)
        if length < 2:
            raise ValueError(f"chain length must be >= 2, got {length}")
        if max_episode_steps is None:
            max_episode_steps = 4 * length
        self.length = length
        self.spec = EnvSpec("sparse-chain", length, 2, int(max_episode_steps))
        self._pos = 0

    def _one_hot(self):
        state = np.zeros(self.length)
        state[self._pos] = 1.0
        return state

    def _reset_state(self):
        self._pos = 0
        return self._one_hot()

    def _transition(self, action):
        self._pos = max(self._pos - 1, 0) if action == 0 else self._pos + 1
        if self._pos >= self.length - 1:
            self._pos = self.length - 1
            return self._one_hot(), 1.0, True
        return self._one_hot(), 0.0, False


class GridWorld(Env):
    """Square grid, start top-left, goal bottom-right, walls block.

    Actions 0..3 = up/down/left/right. The goal pays +1 and terminates;
    every other step costs 0.01, giving a mildly negative reward stream.
    """

    STEP_PENALTY = -0.01
    MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))

    def __init__(self, size: int = 5, max_episode_steps: int = 100):
        super().__init__()
        size = int(size)
        if size < 2:
            raise ValueError(f"grid size must be >= 2, got {size}")
        self.size = size
        self.spec = EnvSpec("gridworld", size * size, 4, int(max_episode_steps))
        self._row = 0
        self._col = 0

    def _one_hot(self):
        state = np.zeros(self.size * self.size)
        state[self._row * self.size + self._col] = 1.0
        return state

    def _reset_state(self):
        self._row, self._col = 0, 0
        return self._one_hot()

    def _transition(self, action):
        dr, dc = self.MOVES[action]
        self._row = min(max(self._row + dr, 0), self.size - 1)
        self._col = min(max(self._col + dc, 0), self.size - 1)
        at_goal = self._row == self.size - 1 and self._col == self.size - 1
        if at_goal:
            return self._one_hot(), 1.0, True
        return self._one_hot(), self.STEP_PENALTY, False


class PoleBalance(Env):
    """Cart-pole with Euler integration; +1 per step until the pole falls.

    State is (cart position, cart velocity, pole angle, pole angular
    velocity), initialized uniformly in [-0.05, 0.05]. The episode ends when
    |position| > 2.4, |angle| > 12 degrees, or the step cap is hit.
    """

    GRAVITY = 9.8
    CART_MASS = 1.0
    POLE_MASS = 0.1
    POLE_HALF_LENGTH = 0.5
    FORCE_MAG = 10.0
    DT = 0.02
    ANGLE_LIMIT = 12.0 * math.pi / 180.0
    POSITION_LIMIT = 2.4

    def __init__(self, max_episode_steps: int = 200):
        super().__init__()
        self.spec = EnvSpec("pole-balance", 4, 2, int(max_episode_steps))
        self._state = np.zeros(4)

    def _reset_state(self):
        self._state = self._rng.uniform(-0.05, 0.05, 4)
        return self._state.copy()

    def _transition(self, action):
        x, x_dot, theta, theta_dot = self._state
        force = self.FORCE_MAG if action == 1 else -self.FORCE_MAG
        total_mass = self.CART_MASS + self.POLE_MASS
        pole_ml = self.POLE_MASS * self.POLE_HALF_LENGTH
        cos_t = math.cos(theta)
        sin_t = math.sin(theta)
        temp = (force + pole_ml * theta_dot ** 2 * sin_t) / total_mass
        theta_acc = (self.GRAVITY * sin_t - cos_t * temp) / (
            self.POLE_HALF_LENGTH * (4.0 / 3.0 - self.POLE_MASS * cos_t ** 2 / total_mass)
        )
        x_acc = temp - pole_ml * theta_acc * cos_t / total_mass
        x += self.DT * x_dot
        x_dot += self.DT * x_acc
        theta += self.DT * theta_dot
        theta_dot += self.DT * theta_acc
        self._state = np.array([x, x_dot, theta, theta_dot])
        fell = abs(x) > self.POSITION_LIMIT or abs(theta) > self.ANGLE_LIMIT
        return self._state.copy(), 1.0, fell


ENV_NAMES = ("sparse-chain", "gridworld", "pole-balance")

# Per-environment default discount factors. Pole balancing uses a shorter
# horizon: its dense +1 stream otherwise inflates both critics' targets and
# destabilizes the long-term head.
ENV_GAMMA = {"sparse-chain": 0.98, "gridworld": 0.98, "pole-balance": 0.95}

_ENV_BUILDERS = {
    "sparse-chain": SparseChain,
    "gridworld": GridWorld,
    "pole-balance": PoleBalance,
}


def make_env(name: str, **kwargs) -> Env:
    """Build an environment by CLI name, forwarding keyword arguments."""
    try:
        builder = _ENV_BUILDERS[name]
    except KeyError:
        raise ValueError(
            f"unknown environment {name!r}; valid names: {', '.join(ENV_NAMES)}"
        ) from None
    return builder(**kwargs)
