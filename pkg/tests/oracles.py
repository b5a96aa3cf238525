"""Independent reference computations used by the test suite.

Everything here is written from scratch against the math, not against the
library: plain python loops, Fractions for exact arithmetic, and numeric
differentiation. Tests compare library output to these.
"""

import math
from fractions import Fraction

import numpy as np

from vwrrl import neural


def pipeline_oracle(values, sigma_max=1.0, tau=2.0, sample_std=False, use_flip=True):
    """Straight-line re-statement of the reward pipeline in plain floats."""
    T = len(values)
    d = [values[0]] + [values[k] - values[k - 1] for k in range(1, T)]
    f = list(reversed(d)) if use_flip else list(d)
    cum = [1.0]
    for x in f:
        cum.append(cum[-1] + x)
    processed = [c / (T + 1) for c in cum]
    R0, RT = processed[0], processed[T]
    if RT <= 0:
        return {"r_vwr": 0.0, "reason": "nonpositive_terminal", "processed": processed}
    rtil = math.log(RT / R0) / T
    reference = [R0 * math.exp(n * rtil) for n in range(T + 1)]
    delta = [(p - z) / z for p, z in zip(processed, reference)]
    mean = sum(delta) / len(delta)
    denom = (len(delta) - 1) if sample_std else len(delta)
    sigma = math.sqrt(sum((x - mean) ** 2 for x in delta) / denom)
    r_high = 100.0 * (math.exp(rtil) - 1.0)
    omega = 1.0 - (sigma / sigma_max) ** tau
    if sigma >= sigma_max:
        return {"r_vwr": 0.0, "r_high": r_high, "sigma": sigma, "omega": omega,
                "reason": "volatility_exceeded"}
    return {"r_vwr": r_high * omega, "r_high": r_high, "sigma": sigma, "omega": omega,
            "processed": processed, "reference": reference, "reason": "none"}


def loss_value(params, state, action, advantage, ret_short, ret_long, entropy_coef):
    """The scalar loss whose gradient `neural.backward` claims to return.

    `advantage` and the two return targets are constants; only the network
    output depends on the parameters.
    """
    cache = neural.forward(params, state)
    probs = cache.probs
    entropy = -sum(p * math.log(p) for p in probs if p > 0)
    return (
        -math.log(probs[action]) * advantage
        + (ret_short - cache.v_short) ** 2
        + (ret_long - cache.v_long) ** 2
        - entropy_coef * entropy
    )


def finite_difference_grads(params, state, action, advantage, ret_short, ret_long,
                            entropy_coef, h=1e-5):
    """Central finite differences of `loss_value` over every parameter entry."""
    grads = neural.zeros_like_params(params)
    for name in neural.PARAM_FIELDS:
        arr = getattr(params, name)
        out = getattr(grads, name)
        flat = arr.reshape(-1)
        flat_out = out.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = loss_value(params, state, action, advantage, ret_short, ret_long,
                            entropy_coef)
            flat[i] = orig - h
            lo = loss_value(params, state, action, advantage, ret_short, ret_long,
                            entropy_coef)
            flat[i] = orig
            flat_out[i] = (hi - lo) / (2 * h)
    return grads


def max_relative_error(analytic, numeric, floor=1e-5):
    """Elementwise relative error with a small-denominator floor."""
    worst = 0.0
    for name in neural.PARAM_FIELDS:
        a = getattr(analytic, name).reshape(-1)
        n = getattr(numeric, name).reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def direct_nstep_returns_exact(rewards, terminals, bootstrap, gamma):
    """Discounted n-step sums evaluated directly, in exact rational arithmetic.

    For each start index t the sum runs over future steps up to and including
    the first terminal; if no terminal intervenes, the discounted bootstrap
    value is added. Returns a list of Fractions.
    """
    n = len(rewards)
    g = Fraction(gamma)
    out = []
    for t in range(n):
        total = Fraction(0)
        power = Fraction(1)
        truncated = False
        for k in range(t, n):
            total += power * Fraction(rewards[k])
            if terminals[k]:
                truncated = True
                break
            power *= g
        if not truncated:
            # power is now gamma**(n - t), the bootstrap discount.
            total += power * Fraction(bootstrap)
        out.append(total)
    return out


def recursive_nstep_returns_exact(rewards, terminals, bootstrap, gamma):
    """The backward recursion in exact rational arithmetic."""
    n = len(rewards)
    g = Fraction(gamma)
    acc = Fraction(bootstrap)
    out = [Fraction(0)] * n
    for i in reversed(range(n)):
        if terminals[i]:
            acc = Fraction(rewards[i])
        else:
            acc = Fraction(rewards[i]) + g * acc
        out[i] = acc
    return out
