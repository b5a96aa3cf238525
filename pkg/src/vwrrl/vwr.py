"""Variability-weighted characterization of recent rewards.

Turns the last T environment rewards into a single scalar that is high when
the newest reward is high AND the recent reward stream was stable, and zero
when the stream was too volatile or the implied total return is nonpositive.
Also provides the l1/l2 sparseness statistic used to characterize reward
streams. Everything here is pure and deterministic; no state, no I/O.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _kernels


class NonpositiveTerminalError(ValueError):
    """Raised when a log total return is requested for a nonpositive endpoint."""


def _as_finite_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class VwrConfig:
    """Reward-window parameters: window length T, volatility cap and exponent.

    ``std_mode`` selects population ("population") or sample ("sample")
    standard deviation for the volatility estimate; population is the
    default and is computed over all T+1 entries of the reward differential,
    including the two endpoints that are zero by construction.
    ``use_flip`` keeps the newest-first reordering step enabled; disabling it
    exists for the ablation that measures the reordering's effect.
    """

    window: int = 20
    sigma_max: float = 1.0
    tau: float = 2.0
    std_mode: str = "population"
    use_flip: bool = True

    def __post_init__(self):
        if self.window < 2:
            raise ValueError(f"window must be >= 2, got {self.window}")
        if not (self.sigma_max > 0):
            raise ValueError(f"sigma_max must be positive, got {self.sigma_max}")
        if not (self.tau > 0):
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.std_mode not in ("population", "sample"):
            raise ValueError(f"std_mode must be 'population' or 'sample', got {self.std_mode!r}")


class ZeroedReason(Enum):
    """Why the weighted reward was forced to zero (or NONE if it was not)."""

    NONE = "none"
    VOLATILITY_EXCEEDED = "volatility_exceeded"
    NONPOSITIVE_TERMINAL = "nonpositive_terminal"


_REASONS = {
    _kernels.REASON_NONE: ZeroedReason.NONE,
    _kernels.REASON_VOLATILITY: ZeroedReason.VOLATILITY_EXCEEDED,
    _kernels.REASON_NONPOSITIVE: ZeroedReason.NONPOSITIVE_TERMINAL,
}


@dataclass(frozen=True)
class VwrBreakdown:
    """Full intermediate record of one weighted-reward evaluation."""

    r_vwr: float
    r_high: float
    sigma_delta: float
    omega: float
    processed: np.ndarray
    reference: np.ndarray
    zeroed_reason: ZeroedReason


class RewardHistory:
    """Fixed-capacity chronological buffer of the most recent rewards.

    Zero-filled on creation so the pipeline is defined from the first step;
    pushing evicts the oldest entry. Single-owner, not thread-safe.
    """

    __slots__ = ("capacity", "_buf", "_head")

    def __init__(self, capacity: int):
        if capacity < 2:
            raise ValueError(f"capacity must be >= 2, got {capacity}")
        self.capacity = capacity
        self._buf = np.zeros(capacity)
        self._head = 0  # index of the oldest entry

    def push(self, reward: float) -> None:
        if not np.isfinite(reward):
            raise ValueError(f"reward must be finite, got {reward}")
        self._buf[self._head] = reward
        self._head = (self._head + 1) % self.capacity

    def reset(self) -> None:
        self._buf[:] = 0.0
        self._head = 0

    def values(self) -> np.ndarray:
        """Rewards oldest-first; always exactly `capacity` entries."""
        return np.roll(self._buf, -self._head)

    def __len__(self) -> int:
        return self.capacity


def first_difference(history: RewardHistory) -> np.ndarray:
    """Step-to-step reward changes; the oldest entry keeps its raw value."""
    values = history.values()
    out = np.empty_like(values)
    out[0] = values[0]
    np.subtract(values[1:], values[:-1], out=out[1:])
    return out


def flip(diffs) -> np.ndarray:
    """Reverse a difference sequence so the newest change comes first."""
    diffs = _as_finite_array(diffs, "diffs")
    return diffs[::-1].copy()


def cumulative_normalize(flipped) -> np.ndarray:
    """Prepend a unit head and return the cumulative sum scaled by 1/(T+1)."""
    flipped = _as_finite_array(flipped, "flipped")
    t = flipped.shape[0]
    out = np.empty(t + 1)
    out[0] = 1.0 / (t + 1)
    np.cumsum(flipped, out=out[1:])
    out[1:] += 1.0
    out[1:] *= 1.0 / (t + 1)
    return out


def log_total_return(processed) -> float:
    """Percent per-step growth rate implied by the processed sequence endpoints."""
    processed = _as_finite_array(processed, "processed")
    t = processed.shape[0] - 1
    if t < 1:
        raise ValueError("processed must have at least two entries")
    if processed[0] <= 0:
        raise ValueError(f"processed head must be positive, got {processed[0]}")
    if processed[t] <= 0:
        raise NonpositiveTerminalError(
            f"log total return undefined for nonpositive terminal {processed[t]}"
        )
    return 100.0 * (float(processed[t] / processed[0]) ** (1.0 / t) - 1.0)


def zero_variability_reference(processed) -> np.ndarray:
    """Geometric interpolation between the processed endpoints.

    The reference is what a perfectly smooth reward stream with the same
    start and end would have produced; it shares both endpoints with the
    input and is strictly monotone whenever the endpoints differ.
    """
    processed = _as_finite_array(processed, "processed")
    t = processed.shape[0] - 1
    if processed[0] <= 0:
        raise ValueError(f"processed head must be positive, got {processed[0]}")
    if processed[t] <= 0:
        raise NonpositiveTerminalError(
            f"zero-variability reference undefined for nonpositive terminal {processed[t]}"
        )
    rate = np.log(processed[t] / processed[0]) / t
    return processed[0] * np.exp(rate * np.arange(t + 1))


def reward_differential(processed, reference) -> np.ndarray:
    """Relative deviation of the processed sequence from its smooth reference."""
    processed = _as_finite_array(processed, "processed")
    reference = _as_finite_array(reference, "reference")
    if processed.shape != reference.shape:
        raise ValueError("processed and reference must have equal length")
    if np.any(reference <= 0):
        raise ValueError("reference entries must all be positive")
    return processed / reference - 1.0


def variability_weight(sigma_delta: float, cfg: VwrConfig) -> float:
    """Stability weight in (-inf, 1]: 1 at zero volatility, 0 at the cap."""
    if not np.isfinite(sigma_delta) or sigma_delta < 0:
        raise ValueError(f"sigma_delta must be finite and nonnegative, got {sigma_delta}")
    return 1.0 - (sigma_delta / cfg.sigma_max) ** cfg.tau


def vwr(history: RewardHistory, cfg: VwrConfig) -> VwrBreakdown:
    """Variability-weighted reward of the current window, with intermediates.

    Total function: every finite history yields a breakdown. Degenerate
    windows (nonpositive implied total return, volatility at or above the
    cap) give ``r_vwr == 0`` with the reason tagged instead of raising.
    For the nonpositive-terminal case the smooth reference is undefined, so
    the breakdown reports a constant reference at the head value and zero
    volatility statistics.
    """
    if history.capacity != cfg.window:
        raise ValueError(
            f"history capacity {history.capacity} does not match window {cfg.window}"
        )
    values = history.values()
    if not np.all(np.isfinite(values)):
        raise ValueError("history contains non-finite entries")
    t = cfg.window
    processed = np.empty(t + 1)
    reference = np.empty(t + 1)
    r_vwr, r_high, sigma_delta, omega, reason = _kernels.vwr_pipeline(
        values,
        cfg.sigma_max,
        cfg.tau,
        cfg.std_mode == "sample",
        cfg.use_flip,
        processed,
        reference,
    )
    return VwrBreakdown(
        r_vwr=r_vwr,
        r_high=r_high,
        sigma_delta=sigma_delta,
        omega=omega,
        processed=processed,
        reference=reference,
        zeroed_reason=_REASONS[reason],
    )


def sparseness(rewards) -> float:
    """Normalized l1/l2 sparseness of a reward sequence, in [0, 1].

    1 means maximally sparse (mass concentrated in one entry; the all-zero
    stream is treated as maximally sparse too), 0 means a constant stream.
    """
    rewards = _as_finite_array(rewards, "rewards")
    n = rewards.shape[0]
    if n < 2:
        raise ValueError(f"sparseness needs at least two entries, got {n}")
    l2 = float(np.linalg.norm(rewards))
    if l2 == 0.0:
        return 1.0
    l1 = float(np.abs(rewards).sum())
    root_n = np.sqrt(n)
    return float((root_n - l1 / l2) / (root_n - 1.0))
