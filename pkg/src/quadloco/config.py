"""Flat, typed run configuration with dotted keys.

One file format drives every command: lines of ``section.key = value``
with ``#`` comments. Every key is registered with a type and a default,
unknown keys and malformed values are rejected with the offending key
and line, and the fully resolved mapping can be serialized back out
canonically so a run directory always carries the exact configuration
that produced it. Override flags map 1:1 onto keys.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass

from .gait import GaitConfig, LegGeometry
from .reward import RewardConfig, TARGET_COURSE_SPEED, TaskSpec, task_for_terrain
from .rl.update import TrainerConfig
from .sim import SimConfig, Terrain, make_terrain

TASK_KIND_CHOICES = ("auto", "ramp_run", "stair_run", "spiral_climb")
TERRAIN_KIND_CHOICES = ("flat", "ramp", "stairs", "spiral_stairs")

# value kinds a key may declare; "floats" is a comma-separated tuple,
# "optfloat" admits the literal none
_KINDS = ("int", "float", "bool", "str", "floats", "optfloat")


class ConfigError(ValueError):
    """Invalid configuration input: unknown key, bad value, bad file."""


@dataclass(frozen=True)
class KeySpec:
    name: str
    kind: str
    default: object
    choices: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"bad kind {self.kind!r} for key {self.name}")


def _scalar_kind(value) -> str:
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    raise TypeError(f"no flat-config kind for {type(value).__name__}")


def _dataclass_keys(prefix: str, cls, skip=(), kind_overrides=None) -> list[KeySpec]:
    """One KeySpec per scalar field of a config dataclass, so the
    registry cannot drift from the dataclass defaults."""
    out = []
    overrides = kind_overrides or {}
    for f in dataclasses.fields(cls):
        if f.name in skip:
            continue
        if f.default is dataclasses.MISSING:
            continue
        name = f"{prefix}.{f.name}"
        if f.name in overrides:
            out.append(KeySpec(name, overrides[f.name], f.default))
        elif isinstance(f.default, tuple):
            out.append(KeySpec(name, "floats", tuple(float(v) for v in f.default)))
        else:
            out.append(KeySpec(name, _scalar_kind(f.default), f.default))
    return out


def _build_registry() -> dict[str, KeySpec]:
    base_reward = RewardConfig()
    keys: list[KeySpec] = [
        KeySpec("run.seed", "int", 0),
        KeySpec("run.out_root", "str", ""),
        KeySpec("terrain.kind", "str", "flat", TERRAIN_KIND_CHOICES),
        KeySpec("terrain.slope_deg", "float", 7.0),
        KeySpec("terrain.step_height_m", "float", 0.010),
        KeySpec("terrain.step_depth_m", "float", 0.05),
        KeySpec("terrain.inner_radius_m", "float", 0.45),
        KeySpec("terrain.step_angle_rad", "float", 2.0 * math.pi / 24.0),
        KeySpec("task.kind", "str", "auto", TASK_KIND_CHOICES),
        KeySpec("task.course_speed", "float", TARGET_COURSE_SPEED),
    ]
    keys += _dataclass_keys("sim", SimConfig)
    keys += _dataclass_keys("gait", GaitConfig, skip=("leg",))
    keys += _dataclass_keys("gait.leg", LegGeometry)
    keys += _dataclass_keys(
        "reward", RewardConfig,
        skip=("axis_x", "axis_y", "axis_z"),
        kind_overrides={"beta_lat": "optfloat"},
    )
    for axis in ("x", "y", "z"):
        p = base_reward.axis(axis)
        keys += [
            KeySpec(f"reward.axis_{axis}.k", "float", p.k),
            KeySpec(f"reward.axis_{axis}.alpha", "float", p.alpha),
            KeySpec(f"reward.axis_{axis}.gamma", "float", p.gamma),
        ]
    keys += _dataclass_keys(
        "trainer", TrainerConfig,
        skip=("seed",),
        kind_overrides={"target_kl": "optfloat"},
    )
    registry = {}
    for k in keys:
        if k.name in registry:
            raise RuntimeError(f"duplicate registry key {k.name}")
        registry[k.name] = k
    return registry


REGISTRY: dict[str, KeySpec] = _build_registry()


def parse_value(spec: KeySpec, text: str):
    """Parse one value per the key's declared kind."""
    text = text.strip()
    try:
        if spec.kind == "int":
            return int(text)
        if spec.kind == "float":
            v = float(text)
            if not math.isfinite(v):
                raise ValueError("not finite")
            return v
        if spec.kind == "bool":
            low = text.lower()
            if low in ("true", "false"):
                return low == "true"
            raise ValueError("expected true or false")
        if spec.kind == "str":
            if spec.choices and text not in spec.choices:
                raise ValueError(f"expected one of {', '.join(spec.choices)}")
            return text
        if spec.kind == "floats":
            parts = [p for p in text.split(",") if p.strip()]
            vals = tuple(float(p) for p in parts)
            want = len(spec.default)
            if len(vals) != want:
                raise ValueError(f"expected {want} comma-separated floats")
            if not all(math.isfinite(v) for v in vals):
                raise ValueError("not finite")
            return vals
        if spec.kind == "optfloat":
            if text.lower() == "none":
                return None
            v = float(text)
            if not math.isfinite(v):
                raise ValueError("not finite")
            return v
    except ValueError as exc:
        raise ConfigError(f"{spec.name}: {exc} (got {text!r})") from None
    raise AssertionError(spec.kind)


def format_value(spec: KeySpec, value) -> str:
    if value is None:
        return "none"
    if spec.kind == "bool":
        return "true" if value else "false"
    if spec.kind == "floats":
        return ",".join(repr(float(v)) for v in value)
    if spec.kind == "float" or spec.kind == "optfloat":
        return repr(float(value))
    return str(value)


@dataclass
class RunConfig:
    """A complete, validated assignment of every registered key."""

    values: dict[str, object]

    def __getitem__(self, key: str):
        return self.values[key]

    def with_overrides(self, pairs: list[tuple[str, str]]) -> "RunConfig":
        """New config with ``key=value`` text overrides applied in order."""
        merged = dict(self.values)
        for key, text in pairs:
            spec = REGISTRY.get(key)
            if spec is None:
                raise ConfigError(f"unknown key {key!r}")
            merged[key] = parse_value(spec, text)
        return RunConfig(merged)


def defaults() -> RunConfig:
    return RunConfig({name: spec.default for name, spec in REGISTRY.items()})


def parse_config_text(text: str, source: str = "<config>") -> list[tuple[str, str]]:
    """Extract (key, raw value) pairs; duplicates and junk are errors."""
    pairs: list[tuple[str, str]] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in REGISTRY:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        pairs.append((key, value.strip()))
    return pairs


def load(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return defaults().with_overrides(parse_config_text(text, str(path)))


def resolved_text(cfg: RunConfig) -> str:
    """Canonical serialization: every key, sorted, one per line.

    Feeding this text back through :func:`load` reproduces the same
    config, and its hash identifies the run.
    """
    lines = []
    last_section = None
    for name in sorted(REGISTRY):
        section = name.split(".", 1)[0]
        if section != last_section:
            if last_section is not None:
                lines.append("")
            last_section = section
        lines.append(f"{name} = {format_value(REGISTRY[name], cfg.values[name])}".rstrip())
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(resolved_text(cfg).encode()).hexdigest()


# -- object builders ---------------------------------------------------------

_TERRAIN_PARAMS = {
    "flat": (),
    "ramp": ("slope_deg",),
    "stairs": ("step_height_m", "step_depth_m"),
    "spiral_stairs": ("step_height_m", "inner_radius_m", "step_angle_rad"),
}


def _section(cfg: RunConfig, prefix: str) -> dict[str, object]:
    plen = len(prefix) + 1
    return {
        name[plen:]: cfg.values[name]
        for name in REGISTRY
        if name.startswith(prefix + ".") and "." not in name[plen:]
    }


def build_terrain(cfg: RunConfig) -> Terrain:
    kind = cfg["terrain.kind"]
    params = {p: cfg[f"terrain.{p}"] for p in _TERRAIN_PARAMS[kind]}
    try:
        return make_terrain(kind, **params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_sim_config(cfg: RunConfig) -> SimConfig:
    try:
        return SimConfig(**_section(cfg, "sim"))
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from None


def build_gait_config(cfg: RunConfig) -> GaitConfig:
    leg_kw = dict(_section(cfg, "gait.leg"))
    try:
        leg = LegGeometry(**leg_kw)
        kw = _section(cfg, "gait")
        kw["phase_lags"] = tuple(kw["phase_lags"])
        return GaitConfig(leg=leg, **kw)
    except ValueError as exc:
        raise ConfigError(f"gait: {exc}") from None


def build_task(cfg: RunConfig, terrain: Terrain) -> TaskSpec:
    speed = cfg["task.course_speed"]
    if speed <= 0:
        raise ConfigError(f"task.course_speed must be positive, got {speed}")
    try:
        task = task_for_terrain(terrain, speed)
    except ValueError as exc:
        raise ConfigError(f"task: {exc}") from None
    # a non-auto kind asserts what the terrain implies rather than
    # replacing it; a mismatch is a config mistake, not a request
    want = cfg["task.kind"]
    if want != "auto" and want != task.kind:
        raise ConfigError(
            f"task.kind {want!r} does not fit terrain {terrain.kind!r}, "
            f"which runs as {task.kind!r} (use auto or {task.kind!r})"
        )
    return task


def build_reward_config(cfg: RunConfig, task: TaskSpec) -> RewardConfig:
    if cfg["reward.omega_f"] != cfg["sim.omega_fall"]:
        raise ConfigError(
            "reward.omega_f must equal sim.omega_fall "
            f"({cfg['reward.omega_f']} vs {cfg['sim.omega_fall']})"
        )
    axes = {}
    task_cfg = task.reward_config()
    for name in ("x", "y", "z"):
        axes[f"axis_{name}"] = dataclasses.replace(
            task_cfg.axis(name),
            k=cfg[f"reward.axis_{name}.k"],
            alpha=cfg[f"reward.axis_{name}.alpha"],
            gamma=cfg[f"reward.axis_{name}.gamma"],
        )
    try:
        return RewardConfig(
            fall_penalty=cfg["reward.fall_penalty"],
            omega_f=cfg["reward.omega_f"],
            theta_u=cfg["reward.theta_u"],
            k_lat=cfg["reward.k_lat"],
            alpha_lat=cfg["reward.alpha_lat"],
            delta=cfg["reward.delta"],
            beta_lat=cfg["reward.beta_lat"],
            **axes,
        )
    except ValueError as exc:
        raise ConfigError(f"reward: {exc}") from None


def build_trainer_config(cfg: RunConfig) -> TrainerConfig:
    try:
        return TrainerConfig(seed=cfg["run.seed"], **_section(cfg, "trainer"))
    except ValueError as exc:
        raise ConfigError(f"trainer: {exc}") from None
