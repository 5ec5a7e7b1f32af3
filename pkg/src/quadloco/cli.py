"""Command-line front end: train, eval, analyze, replay.

Every command resolves a full configuration (defaults, then an optional
config file, then flags), writes the resolved key-value text and a
reproduction manifest into a fresh timestamped run directory, and puts
all of its outputs there. Plot-ready outputs are plain CSV. Exit codes:
0 success, 2 invalid or missing configuration or input, 3 incompatible
checkpoint, 1 runtime fault.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import os
import sys

import numpy as np

from . import __version__, config as cfgmod
from .config import ConfigError, RunConfig
from .perception import STATE_CHANNELS, build_descriptor, descriptor_distance
from .rl import (
    CheckpointError,
    TrainerFault,
    evaluate,
    load_checkpoint,
    train,
)
from .rl.envs import StrideEnv
from .sim import SimulationFault, TRACE_COLUMNS
from .signals import (
    BandSpec,
    TimeSeries,
    band_filter,
    fft_forward,
    ifft_inverse,
)

OUTPUT_ROOT_ENV = "QUADLOCO_RUNS"

_EVAL_SUMMARY_COLUMNS = (
    "episodes", "success_rate", "success_ci_lo", "success_ci_hi",
    "mean_strides", "mean_time_s", "mean_reward", "reward_ci_lo",
    "reward_ci_hi", "fall_rate",
)

_DESCRIPTOR_COLUMNS = (
    "window_idx", "channel", "amp1", "amp2", "freq1_hz", "freq2_hz",
    "phase1_rad", "phase2_rad", "offset", "degenerate", "descriptor_distance",
)


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def _write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


# -- configuration plumbing ---------------------------------------------------


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="config file of dotted key = value lines")
    p.add_argument("--set", dest="sets", action="append", default=[],
                   metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--terrain", choices=cfgmod.TERRAIN_KIND_CHOICES,
                   help="shorthand for terrain.kind")
    p.add_argument("--slope-deg", type=float, help="shorthand for terrain.slope_deg")
    p.add_argument("--step-height-mm", type=float,
                   help="shorthand for terrain.step_height_m, in millimeters")
    p.add_argument("--seed", type=int, help="shorthand for run.seed")
    p.add_argument("--out-root", help="directory that receives run directories")
    p.add_argument("--label", default="", help="suffix for the run directory name")


def _resolve_config(args) -> RunConfig:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.defaults()
    pairs: list[tuple[str, str]] = []
    if args.terrain is not None:
        pairs.append(("terrain.kind", args.terrain))
    if args.slope_deg is not None:
        pairs.append(("terrain.slope_deg", repr(args.slope_deg)))
    if args.step_height_mm is not None:
        pairs.append(("terrain.step_height_m", repr(args.step_height_mm / 1000.0)))
    if args.seed is not None:
        pairs.append(("run.seed", str(args.seed)))
    if args.out_root is not None:
        pairs.append(("run.out_root", args.out_root))
    for item in args.sets:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set needs KEY=VALUE, got {item!r}")
        pairs.append((key.strip(), value.strip()))
    if getattr(args, "timesteps", None) is not None:
        pairs.append(("trainer.total_timesteps", str(args.timesteps)))
    return cfg.with_overrides(pairs)


def _make_run_dir(cfg: RunConfig, command: str, label: str) -> str:
    root = cfg["run.out_root"] or os.environ.get(OUTPUT_ROOT_ENV, "runs")
    stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%d-%H%M%S")
    base = f"{stamp}-{command}-{cfg['terrain.kind']}-seed{cfg['run.seed']}"
    if label:
        base += f"-{label}"
    os.makedirs(root, exist_ok=True)
    path = os.path.join(root, base)
    for bump in range(1000):
        candidate = path if bump == 0 else f"{path}-{bump + 1}"
        try:
            os.makedirs(candidate, exist_ok=False)
            return candidate
        except FileExistsError:
            continue
    raise RuntimeError(f"cannot allocate a fresh run directory under {root}")


def _write_run_metadata(run_dir: str, cfg: RunConfig, command: str) -> None:
    with open(os.path.join(run_dir, "resolved.cfg"), "w", encoding="utf-8") as fh:
        fh.write(cfgmod.resolved_text(cfg))
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg["run.seed"],
        "config_sha256": cfgmod.config_hash(cfg),
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    with open(os.path.join(run_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _build_env(cfg: RunConfig) -> StrideEnv:
    terrain = cfgmod.build_terrain(cfg)
    task = cfgmod.build_task(cfg, terrain)
    return StrideEnv(
        terrain,
        task,
        cfgmod.build_sim_config(cfg),
        cfgmod.build_gait_config(cfg),
        cfgmod.build_reward_config(cfg, task),
    )


# -- train --------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    trainer_cfg = cfgmod.build_trainer_config(cfg)
    _build_env(cfg)  # validate the whole pipeline before creating outputs
    run_dir = _make_run_dir(cfg, "train", args.label)
    _write_run_metadata(run_dir, cfg, "train")
    print(f"run directory: {run_dir}")

    def progress(row):
        if row["update_idx"] % 10 == 0 or row["update_idx"] == 1:
            print(
                f"  update {row['update_idx']:>4} "
                f"timesteps {row['timesteps']:>7} "
                f"mean episode reward {row['mean_ep_reward']:8.3f} "
                f"fall rate {row['fall_rate']:.2f}"
            )

    try:
        result = train(
            lambda task: _build_env(cfg),
            None,
            trainer_cfg,
            curve_path=os.path.join(run_dir, "curve.csv"),
            checkpoint_path=os.path.join(run_dir, "policy.ckpt"),
            progress=progress,
        )
    except TrainerFault as fault:
        replay = getattr(fault, "replay", None)
        if replay is not None:
            fault_path = os.path.join(run_dir, "fault_replay.json")
            with open(fault_path, "w", encoding="utf-8") as fh:
                json.dump(replay, fh)
                fh.write("\n")
            print(f"fault replay written to {fault_path}", file=sys.stderr)
        print(f"error: {fault}", file=sys.stderr)
        return 1
    _write_csv(
        os.path.join(run_dir, "episodes.csv"),
        ("episode_idx", "seed", "outcome", "strides", "total_reward"),
        (
            (i, ep.seed, ep.outcome, ep.strides, ep.total_reward)
            for i, ep in enumerate(result.episodes)
        ),
    )
    n_ep = len(result.episodes)
    succ = sum(1 for e in result.episodes if e.outcome == "success")
    print(
        f"trained {result.timesteps} timesteps over {n_ep} episodes "
        f"({succ} successes); outputs in {run_dir}"
    )
    return 0


# -- eval ---------------------------------------------------------------------


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    env = _build_env(cfg)
    try:
        params, normalizer = load_checkpoint(args.checkpoint)
    except OSError as exc:
        raise ConfigError(f"cannot read checkpoint {args.checkpoint}: {exc}") from None
    if params.obs_dim != env.obs_dim or params.act_dim != env.act_dim:
        raise CheckpointError(
            f"checkpoint drives a {params.obs_dim}->{params.act_dim} policy, "
            f"this pipeline needs {env.obs_dim}->{env.act_dim}"
        )
    run_dir = _make_run_dir(cfg, "eval", args.label)
    _write_run_metadata(run_dir, cfg, "eval")
    result = evaluate(env, params, normalizer,
                      episodes=args.episodes, seed=cfg["run.seed"])
    _write_csv(
        os.path.join(run_dir, "eval_episodes.csv"),
        ("episode_idx", "outcome", "strides", "time_s", "total_reward"),
        ((i,) + rec for i, rec in enumerate(result.records)),
    )
    summary = (
        result.episodes, result.success_rate,
        result.success_ci[0], result.success_ci[1],
        result.mean_strides, result.mean_time_s, result.mean_reward,
        result.reward_ci[0], result.reward_ci[1], result.fall_rate,
    )
    _write_csv(os.path.join(run_dir, "eval_summary.csv"),
               _EVAL_SUMMARY_COLUMNS, [summary])
    print("  ".join(_EVAL_SUMMARY_COLUMNS))
    print("  ".join(_fmt(v) for v in summary))
    print(f"outputs in {run_dir}")
    return 0


# -- analyze ------------------------------------------------------------------


def _read_trace(path) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Read an IMU trace: either the full simulator trace or a single
    t_seconds,value channel. Returns (channel arrays, time column)."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ConfigError(f"cannot read trace {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ConfigError(f"{path}: empty file")
        header = [c.strip() for c in header]
        if header == list(TRACE_COLUMNS):
            names = TRACE_COLUMNS
        elif header[:2] == ["t_seconds", "value"]:
            names = ("t_seconds", "value")
        else:
            raise ConfigError(
                f"{path}: header row is not a simulator trace "
                f"({','.join(TRACE_COLUMNS)}) or a t_seconds,value series"
            )
        columns: list[list[float]] = [[] for _ in names]
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(names):
                raise ConfigError(
                    f"{path}: row {lineno} has {len(row)} columns, "
                    f"expected {len(names)}"
                )
            for j, cell in enumerate(row):
                try:
                    columns[j].append(float(cell))
                except ValueError:
                    raise ConfigError(
                        f"{path}: row {lineno}, column {names[j]}: "
                        f"not a number: {cell!r}"
                    ) from None
    data = {name: np.asarray(col) for name, col in zip(names, columns)}
    times = data.pop(names[0])
    if times.size < 8:
        raise ConfigError(f"{path}: only {times.size} rows, need >= 8")
    dt = np.diff(times)
    if np.any(dt <= 0) or np.max(np.abs(dt - dt[0])) > 1e-6 * dt[0]:
        raise ConfigError(f"{path}: time column is not uniformly spaced")
    return data, times


def _parse_band(text: str) -> BandSpec:
    lo, sep, hi = text.partition(":")
    if not sep:
        raise ConfigError(f"--band needs LO:HI in Hz, got {text!r}")
    try:
        return BandSpec(float(lo), float(hi))
    except ValueError as exc:
        raise ConfigError(f"--band: {exc}") from None


def cmd_analyze(args) -> int:
    band = _parse_band(args.band)
    if args.stride_freq <= 0:
        raise ConfigError(f"--stride-freq must be positive, got {args.stride_freq}")
    data, times = _read_trace(args.trace)
    sample_rate = 1.0 / float(times[1] - times[0])
    win = round(sample_rate / args.stride_freq)
    if win < 8:
        raise ConfigError(
            f"window of {win} samples is too short to analyze; lower "
            f"--stride-freq or record at a higher sample rate"
        )
    n_windows = times.size // win
    if n_windows == 0:
        raise ConfigError(
            f"trace has {times.size} samples, shorter than one "
            f"{win}-sample stride window"
        )
    channels = (
        list(STATE_CHANNELS) if "value" not in data else ["value"]
    )

    cfg = _resolve_config(args)
    run_dir = _make_run_dir(cfg, "analyze", args.label)
    _write_run_metadata(run_dir, cfg, "analyze")

    desc_rows = []
    for name in channels:
        series = data[name]
        prev = None
        recon_rows = []
        for w in range(n_windows):
            sl = slice(w * win, (w + 1) * win)
            window = TimeSeries(series[sl], sample_rate, window_index=w)
            spectrum = band_filter(fft_forward(window), band)
            desc = build_descriptor(window, band)
            dist = "" if prev is None else descriptor_distance(prev, desc)
            prev = desc
            desc_rows.append(
                (w, name, desc.amp1, desc.amp2, desc.freq1_hz, desc.freq2_hz,
                 desc.phase1_rad, desc.phase2_rad, desc.offset,
                 int(desc.degenerate), dist)
            )
            filtered = ifft_inverse(spectrum).samples
            t_rel = window.times
            pair = desc.offset + (
                desc.amp1 * np.sin(2.0 * np.pi * desc.freq1_hz * t_rel
                                   + desc.phase1_rad)
                + desc.amp2 * np.sin(2.0 * np.pi * desc.freq2_hz * t_rel
                                     + desc.phase2_rad)
            )
            for j in range(win):
                recon_rows.append(
                    (times[sl][j], series[sl][j], filtered[j], pair[j])
                )
        _write_csv(
            os.path.join(run_dir, f"reconstruction_{name}.csv"),
            ("t_seconds", "raw", "filtered", "two_sinusoid"),
            recon_rows,
        )
    _write_csv(os.path.join(run_dir, "descriptors.csv"),
               _DESCRIPTOR_COLUMNS, desc_rows)
    print(
        f"analyzed {n_windows} windows x {len(channels)} channels "
        f"({win} samples per window); outputs in {run_dir}"
    )
    return 0


# -- replay -------------------------------------------------------------------


def _read_actions(path) -> tuple[int | None, np.ndarray]:
    """Action log: the fault-replay JSON (seed plus actions) or a plain
    CSV of 12 normalized action columns per stride."""
    try:
        with open(path, encoding="utf-8") as fh:
            head = fh.read(1)
            fh.seek(0)
            if head == "{":
                payload = json.load(fh)
                actions = np.asarray(payload["actions"], dtype=float)
                seed = payload.get("episode_seed")
            else:
                reader = csv.reader(fh)
                rows = [r for r in reader if r]
                if rows and not _is_float_row(rows[0]):
                    rows = rows[1:]  # header line
                actions = np.asarray([[float(c) for c in r] for r in rows])
                seed = None
    except OSError as exc:
        raise ConfigError(f"cannot read action log {path}: {exc}") from None
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise ConfigError(f"malformed action log {path}: {exc}") from None
    if actions.ndim != 2 or actions.shape[1] != 12 or actions.shape[0] == 0:
        raise ConfigError(
            f"action log {path} must be N x 12, got shape {actions.shape}"
        )
    return seed, actions


def _is_float_row(row: list[str]) -> bool:
    try:
        [float(c) for c in row]
        return True
    except ValueError:
        return False


def cmd_replay(args) -> int:
    log_seed, actions = _read_actions(args.actions)
    cfg = _resolve_config(args)
    seed = args.seed if args.seed is not None else log_seed
    if seed is None:
        raise ConfigError("no episode seed: pass --seed or use a fault-replay log")
    env = _build_env(cfg)
    env.sim.trace_enabled = True
    run_dir = _make_run_dir(cfg, "replay", args.label)
    _write_run_metadata(run_dir, cfg, "replay")

    env.reset(int(seed))
    reward_rows = []
    outcome = "running"
    for i, action in enumerate(actions):
        try:
            _, r, done, info = env.step(action)
        except SimulationFault as exc:
            print(f"simulation fault at stride {i}: {exc}", file=sys.stderr)
            return 1
        parts = info["reward_parts"]
        reward_rows.append(
            (i, parts["sub_x"], parts["sub_y"], parts["sub_z"],
             parts["loss_heading"], parts["loss_lateral"], r,
             info["outcome"])
        )
        outcome = info["outcome"]
        if done:
            break
    _write_csv(
        os.path.join(run_dir, "rewards.csv"),
        ("stride_idx", "sub_x", "sub_y", "sub_z", "loss_heading",
         "loss_lateral", "total", "outcome"),
        reward_rows,
    )
    _write_csv(os.path.join(run_dir, "trace.csv"), TRACE_COLUMNS,
               env.sim.trace_rows)
    print(
        f"replayed {len(reward_rows)} strides from seed {seed}: {outcome}; "
        f"outputs in {run_dir}"
    )
    return 0


# -- entry point ----------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quadloco",
        description="Train, evaluate, and inspect stride-level quadruped "
                    "locomotion policies.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a policy, write curve and checkpoint")
    _add_config_args(p_train)
    p_train.add_argument("--timesteps", type=int,
                         help="shorthand for trainer.total_timesteps")
    p_train.set_defaults(fn=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint over seeded episodes")
    _add_config_args(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--episodes", type=int, default=100)
    p_eval.set_defaults(fn=cmd_eval)

    p_an = sub.add_parser("analyze", help="descriptor and reconstruction CSVs from a trace")
    _add_config_args(p_an)
    p_an.add_argument("trace", help="simulator trace CSV or t_seconds,value series")
    p_an.add_argument("--band", default="0.1:10.0", help="retained band, LO:HI Hz")
    p_an.add_argument("--stride-freq", type=float, default=1.0,
                      help="stride rate that defines the window length, Hz")
    p_an.set_defaults(fn=cmd_analyze)

    p_rep = sub.add_parser("replay", help="re-run a logged episode from seed and actions")
    _add_config_args(p_rep)
    p_rep.add_argument("--actions", required=True,
                       help="fault-replay JSON or CSV of 12 action columns")
    p_rep.set_defaults(fn=cmd_replay)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (TrainerFault, SimulationFault) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
