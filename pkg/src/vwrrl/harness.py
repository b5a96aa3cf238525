"""Run orchestration behind the CLI: artifact emission, run manifests,
ablation comparison, grid sweeps and sparseness reports.

Every training run writes three files into its own directory: ``log.csv``
(one row per update), ``rewards.csv`` (one row per env step) and
``manifest.json`` describing exactly what produced them. Manifests are plain
JSON so they stay readable without this tool.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .agent import TrainConfig, TrainingLog, train
from .vwr import VwrConfig, sparseness


class UsageError(ValueError):
    """Bad arguments or inputs; maps to exit code 1 at the CLI."""


VERSION_STRING = f"vwrrl-{__version__}"

LOG_FILENAME = "log.csv"
REWARDS_FILENAME = "rewards.csv"
MANIFEST_FILENAME = "manifest.json"
PLOT_FILENAME = "curve.svg"

# Field casts shared by the config-file parser and the sweep runner.
_CONFIG_CASTS = {
    "env": str,
    "mode": str,
    "gamma": float,
    "n_steps": int,
    "total_timesteps": int,
    "epsilon_hotwire": float,
    "hotwire_fraction": float,
    "hotwire_window": int,
    "step_size": float,
    "momentum": float,
    "entropy_coef": float,
    "grad_clip": float,
    "value_coef_short": float,
    "value_coef_long": float,
    "hidden_dim": int,
    "seed": int,
    "reward_clip": float,
    "history_reset": str,
    "vwr.window": int,
    "vwr.sigma_max": float,
    "vwr.tau": float,
    "vwr.std_mode": str,
    "vwr.use_flip": lambda s: s in ("1", "true", "True", "yes"),
}

_OPTIONAL_FIELDS = ("gamma", "reward_clip")


def cast_config_value(path: str, raw: str):
    """Cast a textual config value for a dotted field path."""
    if path.startswith("env_args."):
        return _cast_env_arg(raw)
    if path not in _CONFIG_CASTS:
        raise UsageError(f"unknown config key {path!r}")
    if path in _OPTIONAL_FIELDS and raw.lower() in ("none", ""):
        return None
    try:
        return _CONFIG_CASTS[path](raw)
    except ValueError:
        raise UsageError(f"bad value {raw!r} for config key {path!r}") from None


def _cast_env_arg(raw: str):
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            continue
    return raw


def config_to_dict(cfg: TrainConfig) -> dict:
    """Flat JSON-friendly view of a config; inverse of config_from_dict."""
    out = {}
    for f in dataclasses.fields(TrainConfig):
        value = getattr(cfg, f.name)
        if f.name == "vwr":
            out["vwr"] = dataclasses.asdict(value)
        else:
            out[f.name] = value
    return out


def config_from_dict(data: dict) -> TrainConfig:
    kwargs = dict(data)
    kwargs["vwr"] = VwrConfig(**kwargs["vwr"])
    kwargs["env_args"] = dict(kwargs.get("env_args", {}))
    return TrainConfig(**kwargs)


def apply_config_entry(data: dict, path: str, value) -> None:
    """Set a dotted path (e.g. ``vwr.window``) inside a config dict."""
    if path.startswith("env_args."):
        data["env_args"][path.split(".", 1)[1]] = value
    elif path.startswith("vwr."):
        data["vwr"][path.split(".", 1)[1]] = value
    elif path in data:
        data[path] = value
    else:
        raise UsageError(f"unknown config key {path!r}")


def parse_config_file(path) -> dict:
    """Flat UTF-8 key=value file (one entry per line, # comments)."""
    entries = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        entries[key.strip()] = cast_config_value(key.strip(), raw.strip())
    return entries


def resolve_config(file_entries: dict | None = None,
                   flag_entries: dict | None = None) -> TrainConfig:
    """Defaults < config file < explicit CLI flags."""
    data = config_to_dict(TrainConfig())
    for entries in (file_entries or {}, flag_entries or {}):
        for path, value in entries.items():
            apply_config_entry(data, path, value)
    try:
        return config_from_dict(data)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


@dataclass
class RunManifest:
    """What produced a run directory: resolved config, env, outputs, timing."""

    run_id: str
    version: str
    backend: str
    env: dict
    config: dict
    duration_seconds: float
    outputs: dict = field(default_factory=dict)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(dataclasses.asdict(self), indent=2,
                                         sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path) -> "RunManifest":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read manifest {path}: {exc}") from None
        return cls(**data)

    def resolved_config(self) -> TrainConfig:
        return config_from_dict(self.config)


def run_id_for(cfg: TrainConfig) -> str:
    return f"{cfg.env}-{cfg.mode}-seed{cfg.seed}"


def run_training(cfg: TrainConfig, out_root, plot: bool = False) -> tuple[Path, TrainingLog]:
    """Execute one run and write its artifacts under ``out_root/<run_id>``."""
    cfg = cfg.resolved()
    run_dir = Path(out_root) / run_id_for(cfg)
    run_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    log = train(None, cfg)
    duration = time.perf_counter() - t0
    log.write_log_csv(run_dir / LOG_FILENAME)
    log.write_rewards_csv(run_dir / REWARDS_FILENAME)
    outputs = {"log_csv": LOG_FILENAME, "rewards_csv": REWARDS_FILENAME}
    if plot:
        plot_learning_curves([run_dir / LOG_FILENAME], run_dir / PLOT_FILENAME,
                             title=run_id_for(cfg))
        outputs["plot_svg"] = PLOT_FILENAME
    env_spec = _env_spec_dict(cfg)
    manifest = RunManifest(
        run_id=run_id_for(cfg),
        version=VERSION_STRING,
        backend=_kernels.BACKEND,
        env=env_spec,
        config=config_to_dict(cfg),
        duration_seconds=duration,
        outputs=outputs,
    )
    manifest.write(run_dir / MANIFEST_FILENAME)
    return run_dir, log


def _env_spec_dict(cfg: TrainConfig) -> dict:
    from .envs import make_env

    spec = make_env(cfg.env, **cfg.env_args).spec
    return {
        "name": spec.name,
        "state_dim": spec.state_dim,
        "num_actions": spec.num_actions,
        "max_episode_steps": spec.max_episode_steps,
    }


def run_battery(cfg: TrainConfig, seeds, out_root, plot: bool = False) -> list[Path]:
    """Run the same config across seeds; optionally emit an aggregate plot."""
    run_dirs = []
    for seed in seeds:
        run_dirs.append(run_training(dataclasses.replace(cfg, seed=seed), out_root)[0])
    if plot:
        out_root = Path(out_root)
        battery_id = f"{cfg.env}-{cfg.mode}-battery"
        plot_path = out_root / f"{battery_id}.svg"
        plot_learning_curves([d / LOG_FILENAME for d in run_dirs], plot_path,
                             title=battery_id)
        battery_manifest = RunManifest(
            run_id=battery_id,
            version=VERSION_STRING,
            backend=_kernels.BACKEND,
            env=_env_spec_dict(cfg),
            config=config_to_dict(cfg.resolved()),
            duration_seconds=0.0,
            outputs={"plot_svg": plot_path.name,
                     "runs": [d.name for d in run_dirs]},
        )
        battery_manifest.write(out_root / f"{battery_id}.json")
    return run_dirs


def read_log_csv(path) -> dict:
    """Columns of a run log as float arrays keyed by header name."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise UsageError(f"cannot read log {path}: {exc}") from None
    if not rows:
        raise UsageError(f"log {path} has no records")
    return {key: np.array([float(r[key]) for r in rows]) for key in rows[0]}


def final_score_from_log(path) -> float:
    """Final score of a run: last logged mean return over 100 episodes."""
    return float(read_log_csv(path)["mean_return_100"][-1])


@dataclass
class ComparisonRow:
    mode: str
    n_runs: int
    mean_final: float
    std_final: float
    margin_pct: float
    flag: str


def compare_runs(run_dirs, baseline_mode: str = "a2c_baseline") -> list[ComparisonRow]:
    """Per-mode final-score table with relative margins against a baseline.

    A margin beyond +/-10% is flagged win/lose, otherwise fair. All runs
    must come from the same environment (name and arguments).
    """
    if len(run_dirs) < 2:
        raise UsageError("compare needs at least two completed runs")
    runs = []
    for d in run_dirs:
        d = Path(d)
        manifest = RunManifest.read(d / MANIFEST_FILENAME)
        score = final_score_from_log(d / manifest.outputs["log_csv"])
        runs.append((manifest, score))
    env_keys = {
        (m.config["env"], tuple(sorted(m.config["env_args"].items())))
        for m, _ in runs
    }
    if len(env_keys) > 1:
        raise UsageError(f"runs mix different environments: {sorted(env_keys)}")
    by_mode: dict[str, list[float]] = {}
    for manifest, score in runs:
        by_mode.setdefault(manifest.config["mode"], []).append(score)
    if baseline_mode not in by_mode:
        raise UsageError(
            f"baseline mode {baseline_mode!r} not among runs {sorted(by_mode)}"
        )
    base_mean = float(np.mean(by_mode[baseline_mode]))
    rows = []
    for mode in sorted(by_mode):
        scores = by_mode[mode]
        mean = float(np.mean(scores))
        if mean == base_mean:
            margin = 0.0
        elif base_mean == 0.0:
            margin = math.inf if mean > 0 else -math.inf
        else:
            margin = 100.0 * (mean - base_mean) / abs(base_mean)
        flag = "win" if margin > 10.0 else "lose" if margin < -10.0 else "fair"
        rows.append(ComparisonRow(mode, len(scores), mean,
                                  float(np.std(scores)), margin, flag))
    return rows


def format_comparison(rows, baseline_mode: str) -> str:
    lines = [f"{'mode':<18} {'runs':>4} {'mean_final':>12} {'std':>10} "
             f"{'margin_vs_' + baseline_mode:>24} {'flag':>6}"]
    for row in rows:
        lines.append(
            f"{row.mode:<18} {row.n_runs:>4} {row.mean_final:>12.6g} "
            f"{row.std_final:>10.6g} {row.margin_pct:>23.6g}% {row.flag:>6}"
        )
    return "\n".join(lines)


def write_comparison_csv(rows, path, baseline_mode: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("mode,n_runs,mean_final,std_final,margin_pct,flag,baseline\n")
        for r in rows:
            fh.write(f"{r.mode},{r.n_runs},{r.mean_final:.6g},{r.std_final:.6g},"
                     f"{r.margin_pct:.6g},{r.flag},{baseline_mode}\n")


@dataclass
class SweepSpec:
    """Cartesian grid over dotted config paths, repeated across seeds."""

    params: list  # list of (path, [values]) pairs
    seeds: list
    base: TrainConfig

    def cells(self) -> list[dict]:
        paths = [p for p, _ in self.params]
        grids = [values for _, values in self.params]
        cells = [dict(zip(paths, combo)) for combo in itertools.product(*grids)]
        return cells

    def total_runs(self) -> int:
        return len(self.cells()) * len(self.seeds)


def _run_sweep_cell(args):
    """One (cell, seed) run; returns (cell_key, seed, score_or_None, error)."""
    base_dict, cell, seed = args
    data = json.loads(base_dict)
    for path, value in cell.items():
        apply_config_entry(data, path, value)
    data["seed"] = seed
    try:
        cfg = config_from_dict(data)
        log = train(None, cfg)
        return cell, seed, log.final_score(), ""
    except Exception as exc:  # a failed cell is recorded, the sweep continues
        return cell, seed, None, f"{type(exc).__name__}: {exc}"


def run_sweep(spec: SweepSpec, out_csv, jobs: int = 1) -> list[dict]:
    """Run every cell x seed, then write one aggregate row per cell.

    Output rows are sorted canonically (by path name, then values), so the
    file is identical no matter the execution or flag order.
    """
    cells = spec.cells()
    if not cells:
        raise UsageError("sweep grid is empty; pass at least one --param")
    base_dict = json.dumps(config_to_dict(spec.base))
    tasks = [(base_dict, cell, seed) for cell in cells for seed in spec.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_sweep_cell, tasks))
    else:
        results = [_run_sweep_cell(t) for t in tasks]

    by_cell: dict[tuple, dict] = {}
    for cell, seed, score, error in results:
        key = tuple(sorted(cell.items()))
        slot = by_cell.setdefault(key, {"cell": cell, "scores": [], "errors": []})
        if error:
            slot["errors"].append(f"seed {seed}: {error}")
        else:
            slot["scores"].append(score)

    paths = sorted({p for p, _ in spec.params})
    rows = []
    for key in sorted(by_cell, key=lambda k: tuple(str(v) for _, v in k)):
        slot = by_cell[key]
        scores = slot["scores"]
        row = {path: slot["cell"][path] for path in paths}
        row["n_seeds"] = len(scores)
        row["mean_final_return"] = float(np.mean(scores)) if scores else ""
        row["std_final_return"] = float(np.std(scores)) if scores else ""
        row["status"] = "ok" if not slot["errors"] else "failed"
        row["error"] = "; ".join(slot["errors"])
        rows.append(row)

    columns = paths + ["n_seeds", "mean_final_return", "std_final_return",
                       "status", "error"]
    with open(out_csv, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            rendered = []
            for col in columns:
                value = row[col]
                if isinstance(value, float):
                    rendered.append(f"{value:.6g}")
                else:
                    rendered.append(str(value))
            fh.write(",".join(rendered) + "\n")
    return rows


def sparseness_report(log_path, horizon: int) -> float:
    """Sparseness of the per-step reward stream over the first `horizon` steps.

    `log_path` may be a run directory or a rewards CSV file.
    """
    path = Path(log_path)
    if path.is_dir():
        manifest = RunManifest.read(path / MANIFEST_FILENAME)
        path = path / manifest.outputs["rewards_csv"]
    if horizon < 2:
        raise UsageError("horizon must be at least 2")
    rewards = []
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                rewards.append(float(row["reward"]))
                if len(rewards) == horizon:
                    break
    except OSError as exc:
        raise UsageError(f"cannot read rewards log {path}: {exc}") from None
    except (KeyError, TypeError):
        raise UsageError(f"{path} is not a rewards CSV (missing reward column)") from None
    if len(rewards) < horizon:
        raise UsageError(
            f"log covers {len(rewards)} steps, fewer than horizon {horizon}"
        )
    return sparseness(rewards)


def plot_learning_curves(log_paths, out_path, title: str = "") -> None:
    """SVG learning curve; multiple logs get a mean +/- std band across seeds."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise UsageError(
            "plotting requires matplotlib (pip install vwrrl[plot])"
        ) from None
    logs = [read_log_csv(p) for p in log_paths]
    n = min(len(log["timestep"]) for log in logs)
    steps = logs[0]["timestep"][:n]
    curves = np.vstack([log["mean_return_100"][:n] for log in logs])
    mean = curves.mean(axis=0)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(steps, mean, label=f"mean of {len(logs)} run(s)")
    if len(logs) > 1:
        std = curves.std(axis=0)
        ax.fill_between(steps, mean - std, mean + std, alpha=0.3,
                        label="+/- std across seeds")
    ax.set_xlabel("timestep")
    ax.set_ylabel("mean return (last 100 episodes)")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)
