"""Actor-critic reinforcement learning with a variability-weighted
characterization of past rewards as a second, long-term reward signal.

Subpackage map:

* :mod:`vwrrl.vwr` -- pure reward-window math (pipeline + sparseness).
* :mod:`vwrrl.envs` -- built-in toy environments (sparse chain, gridworld,
  pole balance).
* :mod:`vwrrl.neural` -- shared-trunk MLP with a policy head and two value
  heads, hand-derived gradients.
* :mod:`vwrrl.agent` -- the multi-critic training loop with hot-wire
  exploration, plus ablation modes.
* :mod:`vwrrl.cli` -- the ``vwrrl`` command line (train / compare / sweep /
  sparseness).
* :mod:`vwrrl.bench` -- compiled-vs-python kernel benchmark
  (``python -m vwrrl.bench``).
"""

from ._kernels import BACKEND
from .vwr import (
    NonpositiveTerminalError,
    RewardHistory,
    VwrBreakdown,
    VwrConfig,
    ZeroedReason,
    sparseness,
    vwr,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "NonpositiveTerminalError",
    "RewardHistory",
    "VwrBreakdown",
    "VwrConfig",
    "ZeroedReason",
    "sparseness",
    "vwr",
    "__version__",
]
