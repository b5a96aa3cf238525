"""Microbenchmark of the hot kernels: compiled extension vs numpy fallback.

Run as ``python -m vwrrl.bench``. Kernels are timed in-process (both
implementations are importable side by side); optional end-to-end training
throughput runs in subprocesses because the backend is fixed at import time.
"""

from __future__ import annotations

import argparse
import subprocess
import sys
import time

import numpy as np

from . import _kernels


def _time_call(fn, args, repeat):
    best = float("inf")
    for _ in range(5):
        t0 = time.perf_counter()
        for _ in range(repeat):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / repeat)
    return best


def _vwr_args(t=20):
    rng = np.random.default_rng(0)
    values = rng.uniform(-0.9, 3.0, t)
    return (values, 1.0, 2.0, False, True, np.empty(t + 1), np.empty(t + 1))


def _forward_args(s=8, h=64, a=4):
    rng = np.random.default_rng(1)
    return (
        rng.normal(size=(h, s)), rng.normal(size=h),
        rng.normal(size=(a, h)), rng.normal(size=a),
        rng.normal(size=h), rng.normal(size=1),
        rng.normal(size=h), rng.normal(size=1),
        rng.normal(size=s), np.empty(h), np.empty(h), np.empty(a), np.empty(a),
    )


def _backward_args(s=8, h=64, a=4):
    rng = np.random.default_rng(2)
    probs = rng.dirichlet(np.ones(a))
    return (
        rng.normal(size=s), np.tanh(rng.normal(size=h)), probs, 1,
        0.7, 0.3, -0.2, 0.01,
        rng.normal(size=(a, h)), rng.normal(size=h), rng.normal(size=h),
        np.zeros((h, s)), np.zeros(h), np.zeros((a, h)), np.zeros(a),
        np.zeros(h), np.zeros(1), np.zeros(h), np.zeros(1), 0.05,
    )


def bench_kernels(repeat: int) -> list[tuple[str, float, float | None]]:
    """Per-call seconds for (python, compiled) on each kernel."""
    try:
        from . import _core
    except ImportError:
        _core = None
    cases = [
        ("vwr_pipeline(T=20)", _kernels._py_vwr_pipeline, "vwr_pipeline", _vwr_args()),
        ("mlp_forward(8->64->4)", _kernels._py_mlp_forward, "mlp_forward", _forward_args()),
        ("mlp_backward(8->64->4)", _kernels._py_mlp_backward_accum,
         "mlp_backward_accum", _backward_args()),
    ]
    rows = []
    for label, py_fn, core_name, args in cases:
        py_t = _time_call(py_fn, args, repeat)
        core_t = _time_call(getattr(_core, core_name), args, repeat) if _core else None
        rows.append((label, py_t, core_t))
    return rows


def bench_training(steps: int) -> dict[str, float]:
    """End-to-end steps/second per backend, measured in subprocesses."""
    snippet = (
        "import time; from vwrrl.agent import TrainConfig, train; "
        f"cfg = TrainConfig(env='sparse-chain', env_args={{'length': 8}}, "
        f"total_timesteps={steps}, seed=0); "
        "t0 = time.perf_counter(); train(None, cfg); "
        f"print({steps} / (time.perf_counter() - t0))"
    )
    out = {}
    for backend in ("python", "compiled"):
        proc = subprocess.run(
            [sys.executable, "-c", snippet],
            capture_output=True, text=True,
            env={**__import__("os").environ, "VWRRL_BACKEND": backend},
        )
        if proc.returncode == 0:
            out[backend] = float(proc.stdout.strip())
        else:
            out[backend] = float("nan")
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="vwrrl.bench", description=__doc__)
    parser.add_argument("--repeat", type=int, default=20_000,
                        help="calls per kernel timing loop")
    parser.add_argument("--train-steps", type=int, default=30_000,
                        help="steps for the end-to-end comparison (0 skips it)")
    args = parser.parse_args(argv)

    print(f"active backend: {_kernels.BACKEND}")
    print(f"{'kernel':<24} {'python':>12} {'compiled':>12} {'speedup':>9}")
    for label, py_t, core_t in bench_kernels(args.repeat):
        if core_t is None:
            print(f"{label:<24} {py_t * 1e6:>10.2f}us {'n/a':>12} {'n/a':>9}")
        else:
            print(f"{label:<24} {py_t * 1e6:>10.2f}us {core_t * 1e6:>10.2f}us "
                  f"{py_t / core_t:>8.1f}x")

    if args.train_steps > 0:
        rates = bench_training(args.train_steps)
        print(f"\nend-to-end training ({args.train_steps} steps, sparse-chain):")
        for backend, rate in rates.items():
            print(f"  {backend:<9} {rate:>10.0f} steps/s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
