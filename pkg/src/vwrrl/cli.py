"""The ``vwrrl`` command line.

Subcommands: ``train`` (single runs and seed batteries), ``compare``
(ablation table across completed runs), ``sweep`` (hyper-parameter grid) and
``sparseness`` (reward-stream sparseness report). Exit codes: 0 success,
1 usage error, 2 runtime failure. The default output directory is ``runs``
unless overridden by --out or the VWRRL_OUT environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .agent import MODES
from .envs import ENV_NAMES
from .harness import (
    SweepSpec,
    UsageError,
    cast_config_value,
    compare_runs,
    format_comparison,
    parse_config_file,
    resolve_config,
    run_battery,
    run_sweep,
    run_training,
    sparseness_report,
    write_comparison_csv,
)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; the documented usage-error code is 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


# (flag dest, config path) pairs shared by train and sweep.
_CONFIG_FLAGS = (
    ("env", "env"),
    ("mode", "mode"),
    ("timesteps", "total_timesteps"),
    ("seed", "seed"),
    ("gamma", "gamma"),
    ("n_steps", "n_steps"),
    ("vwr_t", "vwr.window"),
    ("sigma_max", "vwr.sigma_max"),
    ("tau", "vwr.tau"),
    ("epsilon", "epsilon_hotwire"),
    ("hotwire_fraction", "hotwire_fraction"),
    ("hotwire_window", "hotwire_window"),
    ("history_reset", "history_reset"),
    ("reward_clip", "reward_clip"),
    ("lr", "step_size"),
    ("entropy_coef", "entropy_coef"),
    ("grad_clip", "grad_clip"),
    ("hidden_dim", "hidden_dim"),
)


def _add_config_flags(parser):
    parser.add_argument("--env", choices=ENV_NAMES, help="environment name")
    parser.add_argument("--env-arg", action="append", default=[], metavar="KEY=VALUE",
                        help="environment constructor argument (repeatable)")
    parser.add_argument("--mode", choices=MODES, help="training mode / ablation")
    parser.add_argument("--timesteps", type=int, help="total env steps to train")
    parser.add_argument("--seed", type=int, help="run seed")
    parser.add_argument("--gamma", type=float, help="discount factor")
    parser.add_argument("--n-steps", type=int, help="rollout length N")
    parser.add_argument("--vwr-t", type=int, help="reward history window T")
    parser.add_argument("--sigma-max", type=float, help="volatility cap")
    parser.add_argument("--tau", type=float, help="volatility penalty exponent")
    parser.add_argument("--epsilon", type=float, help="hot-wire probability")
    parser.add_argument("--hotwire-fraction", type=float,
                        help="initial fraction of the budget with hot-wiring armed")
    parser.add_argument("--hotwire-window", type=int,
                        help="trailing steps scanned for nonzero rewards")
    parser.add_argument("--history-reset", choices=("per_episode", "persistent"),
                        help="reward-history policy at episode end")
    parser.add_argument("--reward-clip", type=float, help="symmetric reward clip")
    parser.add_argument("--lr", type=float, help="optimizer step size")
    parser.add_argument("--entropy-coef", type=float, help="entropy bonus weight")
    parser.add_argument("--grad-clip", type=float, help="global gradient norm cap")
    parser.add_argument("--hidden-dim", type=int, help="hidden layer width")
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--out", help="output directory (default: $VWRRL_OUT or ./runs)")


def _flag_entries(args) -> dict:
    entries = {}
    for dest, path in _CONFIG_FLAGS:
        value = getattr(args, dest)
        if value is not None:
            entries[path] = value
    for item in args.env_arg:
        if "=" not in item:
            raise UsageError(f"--env-arg expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        entries[f"env_args.{key}"] = cast_config_value(f"env_args.{key}", raw)
    return entries


def _resolve_out_dir(args) -> Path:
    out = args.out or os.environ.get("VWRRL_OUT") or "runs"
    return Path(out)


def _build_config(args):
    file_entries = parse_config_file(args.config) if args.config else None
    return resolve_config(file_entries, _flag_entries(args))


def _parse_seed_list(raw: str) -> list[int]:
    try:
        seeds = [int(s) for s in raw.split(",") if s.strip() != ""]
    except ValueError:
        raise UsageError(f"--seeds expects comma-separated integers, got {raw!r}") from None
    if not seeds:
        raise UsageError("--seeds list is empty")
    return seeds


def cmd_train(args) -> int:
    cfg = _build_config(args)
    out_dir = _resolve_out_dir(args)
    if args.seeds:
        seeds = _parse_seed_list(args.seeds)
        run_dirs = run_battery(cfg, seeds, out_dir, plot=args.plot)
        for d in run_dirs:
            print(d)
    else:
        run_dir, log = run_training(cfg, out_dir, plot=args.plot)
        print(run_dir)
        print(f"final score (mean return, last 100 episodes): {log.final_score():.6g}")
    return 0


def cmd_compare(args) -> int:
    rows = compare_runs(args.run_dirs, baseline_mode=args.baseline)
    print(format_comparison(rows, args.baseline))
    if args.out:
        write_comparison_csv(rows, args.out, args.baseline)
        print(f"wrote {args.out}")
    return 0


def cmd_sweep(args) -> int:
    if not args.param:
        raise UsageError("sweep needs at least one --param PATH=V1,V2,...")
    base = _build_config(args)
    params = []
    for item in args.param:
        if "=" not in item:
            raise UsageError(f"--param expects PATH=V1,V2,..., got {item!r}")
        path, raw = item.split("=", 1)
        path = path.strip()
        values = [cast_config_value(path, v.strip()) for v in raw.split(",")]
        if not values:
            raise UsageError(f"--param {path} has no values")
        params.append((path, values))
    seeds = _parse_seed_list(args.seeds) if args.seeds else [base.seed]
    spec = SweepSpec(params=params, seeds=seeds, base=base)
    out_dir = _resolve_out_dir(args)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_csv = out_dir / "sweep.csv"
    rows = run_sweep(spec, out_csv, jobs=args.jobs)
    failed = sum(1 for r in rows if r["status"] != "ok")
    print(f"{len(rows)} cells x {len(seeds)} seeds -> {out_csv}"
          + (f" ({failed} cells failed)" if failed else ""))
    return 0


def cmd_sparseness(args) -> int:
    phi = sparseness_report(args.log, args.horizon)
    print(f"{phi:.6g}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="vwrrl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run training (one seed or a battery)")
    _add_config_flags(p_train)
    p_train.add_argument("--seeds", help="comma-separated seed battery (overrides --seed)")
    p_train.add_argument("--plot", action="store_true", help="emit an SVG learning curve")
    p_train.set_defaults(func=cmd_train)

    p_cmp = sub.add_parser("compare", help="compare completed runs against a baseline mode")
    p_cmp.add_argument("run_dirs", nargs="+", metavar="RUN_DIR")
    p_cmp.add_argument("--baseline", default="a2c_baseline",
                       help="mode used as the margin reference")
    p_cmp.add_argument("--out", help="also write the table as CSV")
    p_cmp.set_defaults(func=cmd_compare)

    p_sweep = sub.add_parser("sweep", help="hyper-parameter grid over config paths")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--param", action="append", default=[],
                         metavar="PATH=V1,V2,...",
                         help="grid axis over a config path (repeatable)")
    p_sweep.add_argument("--seeds", help="comma-separated seeds per cell")
    p_sweep.add_argument("--jobs", type=int, default=1,
                         help="parallel worker processes for cells")
    p_sweep.set_defaults(func=cmd_sweep)

    p_sparse = sub.add_parser("sparseness", help="reward-stream sparseness of a run")
    p_sparse.add_argument("--log", required=True,
                          help="run directory or rewards CSV path")
    p_sparse.add_argument("--horizon", type=int, required=True,
                          help="number of leading steps to score")
    p_sparse.set_defaults(func=cmd_sparseness)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse --help (0) or usage error (1)
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ValueError) as exc:
        # bad flag values, bad env arguments, bad config entries
        print(f"vwrrl: error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as exc:  # runtime failure
        print(f"vwrrl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
