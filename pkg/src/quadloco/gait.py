"""Polar gait generation and the two-link leg decoder.

An action assigns each limb a polar point (rho, theta) in the leg's
sagittal plane (theta measured from straight down, positive toward +x)
plus a stride frequency. The sole follows a closed cycle built from that
point: a straight stance chord of length rho through the point,
perpendicular to the hip radius, swept front to back during the first
half of the cycle, then a half-ellipse swing of fixed clearance bulging
toward the hip that returns the foot to the chord's front end.

Joint angles come from planar two-link inverse kinematics. The sagittal
frame is x forward, z up, origin at the hip; the hip angle is measured
from the +x axis, so a straight leg pointing at the ground reads -pi/2,
and the knee angle is the interior fold (0 = straight), always folded
the same way.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

TROT_PHASE_LAGS = (0.0, 0.5, 0.5, 0.0)
LIMB_NAMES = ("front_left", "front_right", "back_left", "back_right")
STANCE_FRACTION = 0.5


@dataclass(frozen=True)
class LegGeometry:
    """Two-link planar leg. ``annulus_margin_m`` keeps IK away from the
    straight and fully-folded singularities; it must stay at or below
    rho_min minus swing clearance so every in-box trajectory is
    reachable."""

    upper_len_m: float = 0.04
    lower_len_m: float = 0.04
    annulus_margin_m: float = 0.001
    hip_limits_rad: tuple[float, float] = (-4.5, -0.9)
    knee_limits_rad: tuple[float, float] = (0.0, 3.12)

    @property
    def reach_min_m(self) -> float:
        return abs(self.upper_len_m - self.lower_len_m) + self.annulus_margin_m

    @property
    def reach_max_m(self) -> float:
        return self.upper_len_m + self.lower_len_m - self.annulus_margin_m


@dataclass(frozen=True)
class GaitConfig:
    """Action boxes and trajectory shape parameters."""

    rho_min_m: float = 0.01
    rho_max_m: float = 0.06
    theta_min_rad: float = -0.6
    theta_max_rad: float = 0.6
    freq_min_hz: float = 0.5
    freq_max_hz: float = 2.0
    waypoint_count: int = 32
    clearance_m: float = 0.008
    neutral_freq_hz: float = 1.0
    phase_lags: tuple[float, float, float, float] = TROT_PHASE_LAGS
    leg: LegGeometry = field(default_factory=LegGeometry)

    def __post_init__(self):
        if not (0.0 < self.rho_min_m < self.rho_max_m):
            raise ValueError("need 0 < rho_min < rho_max")
        if self.theta_min_rad >= self.theta_max_rad:
            raise ValueError("need theta_min < theta_max")
        if not (0.0 < self.freq_min_hz < self.freq_max_hz):
            raise ValueError("need 0 < freq_min < freq_max")
        if self.waypoint_count < 8:
            raise ValueError("waypoint_count must be >= 8")
        if self.clearance_m <= 0:
            raise ValueError("clearance must be positive")
        if self.rho_min_m - self.clearance_m < self.leg.annulus_margin_m:
            raise ValueError(
                "swing apex of the smallest stride would leave the reachable "
                "annulus: need rho_min - clearance >= annulus margin"
            )


@dataclass(frozen=True)
class Action:
    """Per-limb stride parameters: radial extent, angular placement,
    frequency. Limb order is front-left, front-right, back-left,
    back-right."""

    rho: np.ndarray
    theta: np.ndarray
    stride_freq: np.ndarray

    def __post_init__(self):
        for name in ("rho", "theta", "stride_freq"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if arr.shape != (4,):
                raise ValueError(f"{name} must have shape (4,), got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.rho, self.theta, self.stride_freq])

    @staticmethod
    def from_vector(v) -> "Action":
        v = np.asarray(v, dtype=float)
        if v.shape != (12,):
            raise ValueError(f"action vector must have shape (12,), got {v.shape}")
        return Action(v[0:4], v[4:8], v[8:12])

    def in_box(self, cfg: GaitConfig) -> bool:
        return bool(
            np.all((self.rho >= cfg.rho_min_m) & (self.rho <= cfg.rho_max_m))
            and np.all((self.theta >= cfg.theta_min_rad) & (self.theta <= cfg.theta_max_rad))
            and np.all((self.stride_freq >= cfg.freq_min_hz) & (self.stride_freq <= cfg.freq_max_hz))
        )


@dataclass(frozen=True)
class SoleTrajectory:
    """Closed sole cycle for one limb, sampled at uniform phases.

    Waypoints run from phase 0 to phase 1 inclusive; the last waypoint
    duplicates the first so the cycle closes exactly.
    """

    limb_id: int
    waypoints: np.ndarray
    phase_offsets: np.ndarray

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=float)
        ph = np.asarray(self.phase_offsets, dtype=float)
        object.__setattr__(self, "waypoints", wp)
        object.__setattr__(self, "phase_offsets", ph)
        if not 0 <= self.limb_id <= 3:
            raise ValueError(f"limb_id must be 0..3, got {self.limb_id}")
        if wp.ndim != 2 or wp.shape[1] != 2 or wp.shape[0] < 3:
            raise ValueError(f"waypoints must be (n>=3, 2), got {wp.shape}")
        if ph.shape != (wp.shape[0],):
            raise ValueError("phase_offsets must match waypoint count")
        if ph[0] != 0.0 or ph[-1] != 1.0 or np.any(np.diff(ph) <= 0):
            raise ValueError("phases must increase strictly from 0 to 1")
        gap = float(np.hypot(*(wp[-1] - wp[0])))
        if gap > 1e-9:
            raise ValueError(f"trajectory not closed: end gap {gap:.3g} m")

    def at_phase(self, phase: float) -> np.ndarray:
        """Linear interpolation along the cycle at a phase in [0, 1)."""
        p = phase % 1.0
        x = np.interp(p, self.phase_offsets, self.waypoints[:, 0])
        z = np.interp(p, self.phase_offsets, self.waypoints[:, 1])
        return np.array([x, z])


@dataclass(frozen=True)
class JointCommand:
    hip_rad: float
    knee_rad: float
    timestamp_s: float


def neutral_action(cfg: GaitConfig) -> Action:
    """Box-center stance at the nominal 1 Hz stride."""
    rho = 0.5 * (cfg.rho_min_m + cfg.rho_max_m)
    theta = 0.5 * (cfg.theta_min_rad + cfg.theta_max_rad)
    return Action(
        np.full(4, rho), np.full(4, theta), np.full(4, cfg.neutral_freq_hz)
    )


def clamp_action(raw, cfg: GaitConfig) -> Action:
    """Clamp a raw 12-vector into the action boxes (idempotent)."""
    v = np.asarray(raw, dtype=float)
    if v.shape != (12,):
        raise ValueError(f"raw action must have shape (12,), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("raw action contains non-finite values")
    return Action(
        np.clip(v[0:4], cfg.rho_min_m, cfg.rho_max_m),
        np.clip(v[4:8], cfg.theta_min_rad, cfg.theta_max_rad),
        np.clip(v[8:12], cfg.freq_min_hz, cfg.freq_max_hz),
    )


def denormalize_action(raw, cfg: GaitConfig) -> Action:
    """Map a normalized 12-vector onto the action boxes.

    -1 lands on the lower box edge, +1 on the upper, 0 on the center;
    values outside [-1, 1] saturate at the edges. Layout matches
    Action.as_vector: four stance lengths, four stance angles, four
    stride frequencies.
    """
    v = np.asarray(raw, dtype=float)
    if v.shape != (12,):
        raise ValueError(f"normalized action must have shape (12,), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("normalized action contains non-finite values")
    u = 0.5 * (np.clip(v, -1.0, 1.0) + 1.0)
    return Action(
        cfg.rho_min_m + u[0:4] * (cfg.rho_max_m - cfg.rho_min_m),
        cfg.theta_min_rad + u[4:8] * (cfg.theta_max_rad - cfg.theta_min_rad),
        cfg.freq_min_hz + u[8:12] * (cfg.freq_max_hz - cfg.freq_min_hz),
    )


def _cycle_point(rho: float, theta: float, clearance: float, phase: float) -> tuple[float, float]:
    """Exact sole position at one phase of the cycle.

    Stance (first half): the foot sweeps the chord of length rho through
    the polar point, front to back, at constant speed. Swing (second
    half): half-ellipse back to the front, bulging toward the hip.
    """
    # radial unit vector to the polar point and the chord tangent
    rx, rz = math.sin(theta), -math.cos(theta)
    tx, tz = math.cos(theta), math.sin(theta)
    px, pz = rho * rx, rho * rz
    if phase <= STANCE_FRACTION:
        s = phase / STANCE_FRACTION  # 0 front -> 1 back
        c = (0.5 - s) * rho
        return px + c * tx, pz + c * tz
    u = (phase - STANCE_FRACTION) / (1.0 - STANCE_FRACTION)  # 0 back -> 1 front
    c = -0.5 * rho * math.cos(math.pi * u)
    lift = clearance * math.sin(math.pi * u)
    return px + c * tx - lift * rx, pz + c * tz - lift * rz


def action_to_trajectory(a: Action, limb_id: int, cfg: GaitConfig) -> SoleTrajectory:
    """Build the closed sole cycle for one limb of an in-box action."""
    if not 0 <= limb_id <= 3:
        raise ValueError(f"limb_id must be 0..3, got {limb_id}")
    if not a.in_box(cfg):
        raise ValueError("action outside its configured boxes")
    rho = float(a.rho[limb_id])
    theta = float(a.theta[limb_id])
    n = cfg.waypoint_count
    phases = np.arange(n + 1) / n
    pts = np.array(
        [_cycle_point(rho, theta, cfg.clearance_m, p) for p in phases]
    )
    lo, hi = cfg.leg.reach_min_m, cfg.leg.reach_max_m
    radii = np.hypot(pts[:, 0], pts[:, 1])
    bad = np.nonzero((radii < lo) | (radii > hi))[0]
    if bad.size:
        k = int(bad[0])
        raise ValueError(
            f"limb {limb_id} ({LIMB_NAMES[limb_id]}): waypoint "
            f"({pts[k, 0]:.4f}, {pts[k, 1]:.4f}) at radius {radii[k]:.4f} m "
            f"leaves the reachable annulus [{lo:.4f}, {hi:.4f}]"
        )
    return SoleTrajectory(limb_id=limb_id, waypoints=pts, phase_offsets=phases)


def ik_decode(p, leg: LegGeometry) -> tuple[float, float]:
    """Planar two-link inverse kinematics for one sole point.

    Returns (hip, knee) with the knee always folded the same way, so
    forward kinematics of the result reproduces p exactly.
    """
    x, z = float(p[0]), float(p[1])
    r = math.hypot(x, z)
    if not (leg.reach_min_m <= r <= leg.reach_max_m):
        raise ValueError(
            f"point ({x:.4f}, {z:.4f}) at radius {r:.4f} m is outside the "
            f"reachable annulus [{leg.reach_min_m:.4f}, {leg.reach_max_m:.4f}]"
        )
    l1, l2 = leg.upper_len_m, leg.lower_len_m
    d = (r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    knee = math.acos(max(-1.0, min(1.0, d)))
    hip = math.atan2(z, x) - math.atan2(l2 * math.sin(knee), l1 + l2 * math.cos(knee))
    return hip, knee


def fk(hip: float, knee: float, leg: LegGeometry) -> tuple[float, float]:
    """Forward kinematics matching :func:`ik_decode` conventions."""
    x = leg.upper_len_m * math.cos(hip) + leg.lower_len_m * math.cos(hip + knee)
    z = leg.upper_len_m * math.sin(hip) + leg.lower_len_m * math.sin(hip + knee)
    return x, z


def joint_command(p, leg: LegGeometry, timestamp_s: float = 0.0) -> JointCommand:
    hip, knee = ik_decode(p, leg)
    h_lo, h_hi = leg.hip_limits_rad
    k_lo, k_hi = leg.knee_limits_rad
    if not (h_lo <= hip <= h_hi and k_lo <= knee <= k_hi):
        raise ValueError(
            f"decoded angles (hip={hip:.3f}, knee={knee:.3f}) violate joint "
            f"limits hip [{h_lo}, {h_hi}], knee [{k_lo}, {k_hi}]"
        )
    return JointCommand(hip_rad=hip, knee_rad=knee, timestamp_s=timestamp_s)


def gait_phase_scheduler(a: Action, t: float, cfg: GaitConfig) -> np.ndarray:
    """Sole targets for all four limbs at absolute time t.

    Limb i runs at its own frequency with its configured phase lag; a
    trot puts diagonal pairs half a cycle apart.
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    out = np.empty((4, 2))
    for i in range(4):
        traj = action_to_trajectory(a, i, cfg)
        phase = (t * float(a.stride_freq[i]) + cfg.phase_lags[i]) % 1.0
        out[i] = traj.at_phase(phase)
    return out


class GaitEngine:
    """Phase-continuous scheduler owned by one simulator instance.

    Phases accumulate with whatever frequencies the current action
    carries, so swapping actions mid-run never jumps a limb's phase.
    """

    def __init__(self, cfg: GaitConfig):
        self.cfg = cfg
        self.phases = np.asarray(cfg.phase_lags, dtype=float) % 1.0
        self._action: Action | None = None
        self._trajectories: list[SoleTrajectory] = []

    @property
    def action(self) -> Action:
        if self._action is None:
            raise RuntimeError("no action set")
        return self._action

    def set_action(self, a: Action) -> None:
        self._trajectories = [action_to_trajectory(a, i, self.cfg) for i in range(4)]
        self._action = a

    def reset(self) -> None:
        self.phases = np.asarray(self.cfg.phase_lags, dtype=float) % 1.0

    def advance(self, dt: float) -> np.ndarray:
        """Step phases by dt seconds and return the 4 sole targets."""
        if dt < 0:
            raise ValueError("dt must be >= 0")
        self.phases = (self.phases + dt * self.action.stride_freq) % 1.0
        return self.targets()

    def targets(self) -> np.ndarray:
        out = np.empty((4, 2))
        for i in range(4):
            out[i] = self._trajectories[i].at_phase(float(self.phases[i]))
        return out

    def in_stance(self) -> np.ndarray:
        """Boolean per limb: currently in the stance half of its cycle."""
        return self.phases <= STANCE_FRACTION


def write_trajectory_csv(traj: SoleTrajectory, path) -> None:
    """Write one sole cycle as phase,x_m,z_m rows for plotting."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phase", "x_m", "z_m"])
        for ph, (x, z) in zip(traj.phase_offsets, traj.waypoints):
            writer.writerow([repr(float(ph)), repr(float(x)), repr(float(z))])
