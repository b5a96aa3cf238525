"""Hot-path kernels with a compiled/pure-python split.

The per-step work of training (the past-reward pipeline and the tiny MLP
forward/backward) dominates runtime, so both exist twice: once as Cython in
``_core.pyx`` and once as numpy below. The backend is picked once at import:

* ``VWRRL_BACKEND=auto`` (default): compiled extension if importable,
  numpy fallback otherwise.
* ``VWRRL_BACKEND=python``: force the numpy fallback.
* ``VWRRL_BACKEND=compiled``: require the extension, fail loudly if absent.

Both backends implement the same math; ``python -m vwrrl.bench`` compares
their throughput and agreement.
"""

from __future__ import annotations

import math
import os

import numpy as np

REASON_NONE = 0
REASON_VOLATILITY = 1
REASON_NONPOSITIVE = 2


def _py_vwr_pipeline(values, sigma_max, tau, sample_std, use_flip, processed, reference):
    """Past-reward pipeline on a full window of rewards.

    Fills `processed` and `reference` (both length T+1, caller-allocated)
    and returns ``(r_vwr, r_high, sigma_delta, omega, reason_code)``.
    """
    t = values.shape[0]
    inv = 1.0 / (t + 1)

    diffs = np.empty(t)
    diffs[0] = values[0]
    np.subtract(values[1:], values[:-1], out=diffs[1:])
    flipped = diffs[::-1] if use_flip else diffs

    processed[0] = inv
    np.cumsum(flipped, out=processed[1:])
    processed[1:] += 1.0
    processed[1:] *= inv

    r0 = processed[0]
    rt = processed[t]
    if rt <= 0.0:
        # Degenerate window: the log total return is undefined, everything
        # volatility-related is reported as zero and the reward is zeroed.
        reference[:] = r0
        return 0.0, 0.0, 0.0, 0.0, REASON_NONPOSITIVE

    rate = math.log(rt / r0) / t
    np.multiply(np.arange(t + 1, dtype=np.float64), rate, out=reference)
    np.exp(reference, out=reference)
    reference *= r0

    delta = processed / reference - 1.0
    sigma = float(np.std(delta, ddof=1 if sample_std else 0))
    omega = 1.0 - (sigma / sigma_max) ** tau
    r_high = 100.0 * (math.exp(rate) - 1.0)

    if sigma >= sigma_max:
        return 0.0, r_high, sigma, omega, REASON_VOLATILITY
    return r_high * omega, r_high, sigma, omega, REASON_NONE


def _py_mlp_forward(trunk_w, trunk_b, policy_w, policy_b, vs_w, vs_b, vl_w, vl_b,
                    state, pre, hid, logits, probs):
    """Shared-trunk forward pass; fills the caller-allocated buffers."""
    np.dot(trunk_w, state, out=pre)
    pre += trunk_b
    np.tanh(pre, out=hid)
    np.dot(policy_w, hid, out=logits)
    logits += policy_b
    np.subtract(logits, logits.max(), out=probs)
    np.exp(probs, out=probs)
    probs /= probs.sum()
    v_short = float(vs_w @ hid) + vs_b[0]
    v_long = float(vl_w @ hid) + vl_b[0]
    return v_short, v_long


def _py_mlp_backward_accum(state, hid, probs, action, advantage, td_short, td_long,
                           entropy_coef, policy_w, vs_w, vl_w,
                           g_trunk_w, g_trunk_b, g_policy_w, g_policy_b,
                           g_vs_w, g_vs_b, g_vl_w, g_vl_b, scale):
    """Accumulate one step's scaled gradient into the g_* buffers.

    Gradient of ``-log pi(a) * advantage + td_short^2 + td_long^2
    - entropy_coef * H(pi)`` with the advantage and return targets held
    constant.
    """
    safe = np.maximum(probs, 1e-300)
    plogp = probs * np.log(safe)
    entropy = -plogp.sum()
    # d/dlogits of the policy and entropy terms.
    dz = advantage * probs
    dz[action] -= advantage
    if entropy_coef != 0.0:
        dz += entropy_coef * (plogp + probs * entropy)
    dv_s = -2.0 * td_short
    dv_l = -2.0 * td_long

    g_policy_w += np.multiply.outer(dz, hid) * scale
    g_policy_b += dz * scale
    g_vs_w += (scale * dv_s) * hid
    g_vs_b += scale * dv_s
    g_vl_w += (scale * dv_l) * hid
    g_vl_b += scale * dv_l

    dh = policy_w.T @ dz + dv_s * vs_w + dv_l * vl_w
    dpre = dh * (1.0 - hid * hid)
    g_trunk_w += np.multiply.outer(dpre, state) * scale
    g_trunk_b += dpre * scale


_requested = os.environ.get("VWRRL_BACKEND", "auto").lower()
if _requested not in ("auto", "compiled", "python"):
    raise ValueError(
        f"VWRRL_BACKEND={_requested!r} not understood (use auto, compiled or python)"
    )

_ext = None
if _requested in ("auto", "compiled"):
    try:
        from . import _core as _ext
    except ImportError:
        if _requested == "compiled":
            raise ImportError(
                "VWRRL_BACKEND=compiled but the vwrrl._core extension is not "
                "built; run `python setup.py build_ext --inplace`"
            ) from None

if _ext is not None:
    BACKEND = "compiled"
    vwr_pipeline = _ext.vwr_pipeline
    mlp_forward = _ext.mlp_forward
    mlp_backward_accum = _ext.mlp_backward_accum
else:
    BACKEND = "python"
    vwr_pipeline = _py_vwr_pipeline
    mlp_forward = _py_mlp_forward
    mlp_backward_accum = _py_mlp_backward_accum
