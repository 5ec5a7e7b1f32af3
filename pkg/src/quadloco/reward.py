"""Per-stride reward: sigmoid-shaped task terms plus stability losses.

Each task cares about a subset of the per-stride motion axes. A
required axis earns a bounded, strictly increasing sigmoid reward in
its sensed rate; unused axes contribute exactly zero. Two losses
discourage weaving (heading changes past a threshold) and corridor
drift (lateral displacement), and a sensed angular-rate spike past the
fall threshold ends the episode with a flat penalty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .sim import StrideTelemetry, Terrain

TASK_KINDS = ("ramp_run", "stair_run", "spiral_climb")

# course speed a well-tuned gait can hold; axis targets derive from it
TARGET_COURSE_SPEED = 0.12


def sigmoid(t: float) -> float:
    """Overflow-safe logistic function."""
    if t >= 0.0:
        return 1.0 / (1.0 + math.exp(-t))
    e = math.exp(t)
    return e / (1.0 + e)


@dataclass(frozen=True)
class AxisParams:
    """Shape of one axis sub-reward: k * (sigmoid(alpha*(s+beta)) - gamma)."""

    k: float = 1.0
    alpha: float = 10.0
    beta: float = 0.0
    gamma: float = 0.5
    required: bool = True

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError(f"k must be positive, got {self.k}")
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")


@dataclass(frozen=True)
class RewardConfig:
    fall_penalty: float = -10.0
    omega_f: float = 3.0
    axis_x: AxisParams = field(default_factory=lambda: AxisParams(required=False))
    axis_y: AxisParams = field(default_factory=AxisParams)
    axis_z: AxisParams = field(default_factory=lambda: AxisParams(alpha=50.0))
    theta_u: float = 0.3
    k_lat: float = 1.0
    alpha_lat: float = 2.0
    delta: float = 0.01
    beta_lat: float | None = None

    def __post_init__(self):
        if self.fall_penalty >= 0:
            raise ValueError("fall_penalty must be negative")
        if self.omega_f <= 0:
            raise ValueError("omega_f must be positive")
        if self.theta_u < 0:
            raise ValueError("theta_u must be >= 0")
        if self.k_lat <= 0 or self.alpha_lat <= 0:
            raise ValueError("lateral loss needs k > 0 and alpha > 0")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.beta_lat is None:
            # zero the lateral loss at zero displacement
            object.__setattr__(self, "beta_lat", self.k_lat * self.delta**self.alpha_lat)

    def axis(self, name: str) -> AxisParams:
        return {"x": self.axis_x, "y": self.axis_y, "z": self.axis_z}[name]


@dataclass(frozen=True)
class StrideMeasurement:
    """Sensed per-stride quantities the reward consumes."""

    s_x: float
    s_y: float
    s_z: float
    omega_d: float
    heading_change_rad: float
    lateral_disp_m: float

    def __post_init__(self):
        for name in ("s_x", "s_y", "s_z", "omega_d", "heading_change_rad", "lateral_disp_m"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise ValueError(f"{name} must be a finite real, got {v!r}")
        if self.heading_change_rad < 0:
            raise ValueError("heading_change_rad must be >= 0")


@dataclass(frozen=True)
class TaskSpec:
    """Which motion axes a course rewards, and at what target rates.

    ``required`` names the axes that earn reward; target rates set the
    sigmoid midpoints so half-target effort scores zero.
    """

    kind: str
    required: tuple[str, ...]
    target_x: float = 0.0
    target_y: float = 0.0
    target_z: float = 0.0

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}, expected one of {TASK_KINDS}")
        if not self.required:
            raise ValueError("a task must require at least one axis")
        bad = set(self.required) - {"x", "y", "z"}
        if bad:
            raise ValueError(f"unknown axes {sorted(bad)}")

    def reward_config(self, **overrides) -> RewardConfig:
        """Build the reward config this task implies.

        Per-axis beta is minus half the target rate; required flags
        follow the task. Keyword overrides replace whole fields.
        """
        targets = {"x": self.target_x, "y": self.target_y, "z": self.target_z}
        base = RewardConfig()
        axes = {}
        for name in ("x", "y", "z"):
            axes[f"axis_{name}"] = replace(
                base.axis(name),
                beta=-0.5 * targets[name],
                required=name in self.required,
            )
        axes.update(overrides)
        return RewardConfig(**axes)

    def measurement(self, telemetry: StrideTelemetry) -> StrideMeasurement:
        """Extract the sensed measurement for this task from one stride."""
        return StrideMeasurement(
            s_x=telemetry.yaw_rate,
            s_y=telemetry.forward_velocity,
            s_z=telemetry.vertical_velocity,
            omega_d=telemetry.peak_fall_axis_rate,
            heading_change_rad=telemetry.heading_change_rad,
            lateral_disp_m=telemetry.lateral_offset_m,
        )


def task_for_terrain(terrain: Terrain, course_speed: float = TARGET_COURSE_SPEED) -> TaskSpec:
    """Task preset for a terrain: forward plus climb on straight
    courses, turn rate plus climb on the spiral. Flat ground is a stair
    run with a zero climb target."""
    if terrain.kind == "flat":
        return TaskSpec("stair_run", ("y", "z"), target_y=course_speed, target_z=0.0)
    if terrain.kind == "ramp":
        grade = math.tan(math.radians(terrain.params["slope_deg"]))
        return TaskSpec("ramp_run", ("y", "z"),
                        target_y=course_speed, target_z=grade * course_speed)
    if terrain.kind == "stairs":
        grade = terrain.params["step_height_m"] / terrain.params["step_depth_m"]
        return TaskSpec("stair_run", ("y", "z"),
                        target_y=course_speed, target_z=grade * course_speed)
    if terrain.kind == "spiral_stairs":
        r = terrain.centerline_radius_m
        climb = terrain.params["step_height_m"] / (r * terrain.params["step_angle_rad"])
        return TaskSpec("spiral_climb", ("x", "z"),
                        target_x=course_speed / r, target_z=climb * course_speed)
    raise ValueError(f"no task preset for terrain kind {terrain.kind!r}")


def sub_reward(s: float, params: AxisParams) -> float:
    """Bounded shaped reward for one axis; zero when the axis is unused."""
    if not params.required:
        return 0.0
    return params.k * (sigmoid(params.alpha * (s + params.beta)) - params.gamma)


def sub_reward_grad(s: float, params: AxisParams) -> float:
    """Analytic d(sub_reward)/ds.

    Uses sigma(t) * sigma(-t) rather than sigma * (1 - sigma): the
    subtraction cancels catastrophically in the saturated tails.
    """
    if not params.required:
        return 0.0
    t = params.alpha * (s + params.beta)
    return params.k * params.alpha * sigmoid(t) * sigmoid(-t)


def loss_heading(theta_d: float, theta_u: float) -> float:
    """Flat penalty once the stride-to-stride heading turns more than
    theta_u; exactly theta_u is still free."""
    if theta_d < 0:
        raise ValueError(f"theta_d must be >= 0, got {theta_d}")
    return -1.0 if theta_d > theta_u else 0.0


def loss_lateral(l_x: float, cfg: RewardConfig) -> float:
    """Smooth corridor-drift penalty, zero at zero displacement."""
    return -cfg.k_lat * (abs(l_x) + cfg.delta) ** cfg.alpha_lat + cfg.beta_lat


def reward_parts(
    m: StrideMeasurement, task: TaskSpec, cfg: RewardConfig
) -> dict[str, float]:
    """Per-term decomposition, the shape the episode log records.

    An axis contributes only when the task requires it and the config
    leaves it enabled.
    """
    if abs(m.omega_d) > cfg.omega_f:
        return {
            "sub_x": 0.0, "sub_y": 0.0, "sub_z": 0.0,
            "loss_heading": 0.0, "loss_lateral": 0.0,
            "total": cfg.fall_penalty, "terminal": True,
        }
    parts = {}
    svals = {"x": m.s_x, "y": m.s_y, "z": m.s_z}
    for name in ("x", "y", "z"):
        p = cfg.axis(name)
        if name not in task.required:
            p = replace(p, required=False)
        parts[f"sub_{name}"] = sub_reward(svals[name], p)
    parts["loss_heading"] = loss_heading(m.heading_change_rad, cfg.theta_u)
    parts["loss_lateral"] = loss_lateral(m.lateral_disp_m, cfg)
    parts["total"] = (
        parts["sub_x"] + parts["sub_y"] + parts["sub_z"]
        + parts["loss_heading"] + parts["loss_lateral"]
    )
    parts["terminal"] = False
    return parts


def total_reward(
    m: StrideMeasurement, task: TaskSpec, cfg: RewardConfig
) -> tuple[float, bool]:
    """Stride reward and whether it ends the episode (a fall)."""
    parts = reward_parts(m, task, cfg)
    return parts["total"], parts["terminal"]
