"""Shared-trunk MLP: one tanh hidden layer, a softmax policy head and two
scalar value heads (short-term and long-term critics).

Gradients are derived by hand (see ``backward``); there is deliberately no
autodiff dependency. The forward/backward inner loops dispatch to the
compiled kernels when available.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels


class TrainingDivergedError(RuntimeError):
    """Raised when parameters, gradients or losses go non-finite."""


PARAM_FIELDS = (
    "trunk_w",
    "trunk_b",
    "policy_w",
    "policy_b",
    "value_short_w",
    "value_short_b",
    "value_long_w",
    "value_long_b",
)


@dataclass
class PolicyValueParams:
    """Parameters of the trunk and the three heads; also used for gradients."""

    trunk_w: np.ndarray       # (hidden, state_dim)
    trunk_b: np.ndarray       # (hidden,)
    policy_w: np.ndarray      # (num_actions, hidden)
    policy_b: np.ndarray      # (num_actions,)
    value_short_w: np.ndarray  # (hidden,)
    value_short_b: np.ndarray  # (1,)
    value_long_w: np.ndarray   # (hidden,)
    value_long_b: np.ndarray   # (1,)

    @property
    def state_dim(self) -> int:
        return self.trunk_w.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.trunk_w.shape[0]

    @property
    def num_actions(self) -> int:
        return self.policy_w.shape[0]

    def arrays(self):
        return [getattr(self, name) for name in PARAM_FIELDS]

    def check_finite(self, context: str) -> None:
        bad = [name for name in PARAM_FIELDS if not np.all(np.isfinite(getattr(self, name)))]
        if bad:
            raise TrainingDivergedError(
                f"non-finite values in {', '.join(bad)} during {context}; "
                f"norms: {self.norms()}"
            )

    def norms(self) -> dict:
        return {name: float(np.linalg.norm(getattr(self, name))) for name in PARAM_FIELDS}


def init_params(state_dim: int, num_actions: int, hidden_dim: int,
                rng: np.random.Generator) -> PolicyValueParams:
    """Uniform initialization scaled by 1/sqrt(fan_in) per layer."""
    def uniform(shape, fan_in):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, shape)

    return PolicyValueParams(
        trunk_w=uniform((hidden_dim, state_dim), state_dim),
        trunk_b=uniform(hidden_dim, state_dim),
        policy_w=uniform((num_actions, hidden_dim), hidden_dim),
        policy_b=uniform(num_actions, hidden_dim),
        value_short_w=uniform(hidden_dim, hidden_dim),
        value_short_b=uniform(1, hidden_dim),
        value_long_w=uniform(hidden_dim, hidden_dim),
        value_long_b=uniform(1, hidden_dim),
    )


def zeros_like_params(params: PolicyValueParams) -> PolicyValueParams:
    return PolicyValueParams(*[np.zeros_like(a) for a in params.arrays()])


def copy_params(params: PolicyValueParams) -> PolicyValueParams:
    return PolicyValueParams(*[a.copy() for a in params.arrays()])


@dataclass
class ForwardCache:
    """Everything the backward pass needs from one forward evaluation."""

    state: np.ndarray
    trunk_pre: np.ndarray
    trunk_out: np.ndarray
    logits: np.ndarray
    probs: np.ndarray
    v_short: float
    v_long: float


def forward(params: PolicyValueParams, state) -> ForwardCache:
    """Evaluate policy probabilities and both value heads for one state."""
    state = np.ascontiguousarray(state, dtype=np.float64)
    if state.shape != (params.state_dim,):
        raise ValueError(
            f"state shape {state.shape} does not match network input ({params.state_dim},)"
        )
    h = params.hidden_dim
    a = params.num_actions
    pre = np.empty(h)
    hid = np.empty(h)
    logits = np.empty(a)
    probs = np.empty(a)
    v_short, v_long = _kernels.mlp_forward(
        params.trunk_w, params.trunk_b, params.policy_w, params.policy_b,
        params.value_short_w, params.value_short_b,
        params.value_long_w, params.value_long_b,
        state, pre, hid, logits, probs,
    )
    return ForwardCache(state, pre, hid, logits, probs, v_short, v_long)


def accumulate_backward(params: PolicyValueParams, grads: PolicyValueParams,
                        cache: ForwardCache, advantage_sum: float,
                        td_short: float, td_long: float, entropy_coef: float,
                        action_taken: int, scale: float = 1.0) -> None:
    """Add one step's gradient (times `scale`) into `grads` in place."""
    _kernels.mlp_backward_accum(
        cache.state, cache.trunk_out, cache.probs, action_taken,
        advantage_sum, td_short, td_long, entropy_coef,
        params.policy_w, params.value_short_w, params.value_long_w,
        grads.trunk_w, grads.trunk_b, grads.policy_w, grads.policy_b,
        grads.value_short_w, grads.value_short_b,
        grads.value_long_w, grads.value_long_b,
        scale,
    )


def backward(params: PolicyValueParams, cache: ForwardCache, advantage_sum: float,
             td_short: float, td_long: float, entropy_coef: float,
             action_taken: int) -> PolicyValueParams:
    """Gradient of the per-step loss with respect to every parameter.

    The loss is ``-log pi(a) * advantage_sum + td_short**2 + td_long**2
    - entropy_coef * H(pi)`` where `advantage_sum` and the return targets
    behind the TD residuals are constants: no gradient flows through them.
    Each value head's gradient reaches only its own weights (plus the shared
    trunk); the policy gradient never touches the value heads.
    """
    if not (0 <= action_taken < params.num_actions):
        raise ValueError(f"action {action_taken} out of range")
    grads = zeros_like_params(params)
    accumulate_backward(params, grads, cache, advantage_sum, td_short, td_long,
                        entropy_coef, action_taken, scale=1.0)
    return grads


def global_norm(grads: PolicyValueParams) -> float:
    return float(np.sqrt(sum(float(np.sum(a * a)) for a in grads.arrays())))


def apply_gradients(params: PolicyValueParams, grads: PolicyValueParams,
                    step_size: float, grad_clip: float | None = None,
                    velocity: PolicyValueParams | None = None,
                    momentum: float = 0.0) -> PolicyValueParams:
    """One descent step: params <- params - step_size * clip(grads).

    `grad_clip` is a global-norm threshold (None disables clipping). With a
    `velocity` buffer and momentum > 0 this becomes classic momentum SGD on
    the clipped gradient.
    """
    for name in PARAM_FIELDS:
        if not np.all(np.isfinite(getattr(grads, name))):
            raise TrainingDivergedError(
                f"non-finite gradient in {name}; gradient norms: {grads.norms()}"
            )
    scale = 1.0
    if grad_clip is not None:
        norm = global_norm(grads)
        if norm > grad_clip:
            scale = grad_clip / norm
    if velocity is not None and momentum > 0.0:
        for name in PARAM_FIELDS:
            v = getattr(velocity, name)
            v *= momentum
            v += scale * getattr(grads, name)
            arr = getattr(params, name)
            arr -= step_size * v
    else:
        for name in PARAM_FIELDS:
            arr = getattr(params, name)
            arr -= step_size * scale * getattr(grads, name)
    params.check_finite("apply_gradients")
    return params


CHECKPOINT_MAGIC = "vwrrl-params 1"


def save_params(params: PolicyValueParams, path) -> None:
    """Write a checkpoint in the documented text format.

    Line 1 is the magic ``vwrrl-params 1``. Each tensor follows as a header
    line ``<name> <dim0> [dim1]`` and one line of %.17g values per row
    (1-d tensors are a single row). %.17g round-trips float64 exactly.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CHECKPOINT_MAGIC + "\n")
        for name in PARAM_FIELDS:
            arr = getattr(params, name)
            dims = " ".join(str(d) for d in arr.shape)
            fh.write(f"{name} {dims}\n")
            rows = arr.reshape(1, -1) if arr.ndim == 1 else arr
            for row in rows:
                fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def load_params(path) -> PolicyValueParams:
    """Read a checkpoint written by :func:`save_params`."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a vwrrl parameter checkpoint")
    fields = {}
    i = 1
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        parts = lines[i].split()
        name, shape = parts[0], tuple(int(d) for d in parts[1:])
        i += 1
        n_rows = shape[0] if len(shape) == 2 else 1
        data = [np.array(lines[i + r].split(), dtype=np.float64) for r in range(n_rows)]
        i += n_rows
        fields[name] = np.vstack(data).reshape(shape)
    missing = [name for name in PARAM_FIELDS if name not in fields]
    if missing:
        raise ValueError(f"checkpoint missing tensors: {missing}")
    return PolicyValueParams(**{name: fields[name] for name in PARAM_FIELDS})
