"""Desk-scale quadruped simulator.

Kinematics-first body model with heuristic contact, not rigid-body
physics. Stance feet anchor to the terrain; the body pose chases the
least-squares rigid fit to those anchors (planar position and yaw),
height and tilt follow the plane the anchors imply, and every foot
plant whose vertical mismatch is nonzero kicks the tilt rates in
proportion. Those kicks are what the IMU sees on rough terrain, so step
height maps directly to sensed angular-rate spikes and fall risk, while
steady gaits on flat ground stay calm.

Conventions: world z up, straight courses run along +y, spiral courses
counterclockwise. Body frame: x lateral (right), y forward, z up; yaw 0
faces +y. The monitored fall axis defaults to body x, the fore-aft
tipping rate while climbing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gait import Action, GaitConfig, action_to_trajectory, neutral_action
from .signals import TimeSeries

GRAVITY = 9.81
TWO_PI = 2.0 * math.pi

# body dims (m): length along y, width along x, height
BODY_LENGTH = 0.375
BODY_WIDTH = 0.096
BODY_HEIGHT = 0.082

# hip anchor offsets in the body frame, limb order FL, FR, BL, BR
HIP_OFFSETS = (
    (-BODY_WIDTH / 2, +BODY_LENGTH / 2, 0.0),
    (+BODY_WIDTH / 2, +BODY_LENGTH / 2, 0.0),
    (-BODY_WIDTH / 2, -BODY_LENGTH / 2, 0.0),
    (+BODY_WIDTH / 2, -BODY_LENGTH / 2, 0.0),
)

# stride-periodic IMU perturbation: per axis, (weight, phase) pairs for
# the fundamental and second harmonic of the limb-0 gait phase
_GYRO_SHAPE = ((1.0, 0.35, 0.0, 1.1), (0.6, 0.3, 1.3, 2.3), (0.4, 0.25, 2.1, 0.4))
_ACC_SHAPE = ((0.5, 0.2, 0.9, 2.0), (1.0, 0.4, 0.3, 1.6), (0.8, 0.5, 1.8, 0.7))

TERRAIN_KINDS = ("flat", "ramp", "stairs", "spiral_stairs")


@dataclass(frozen=True)
class Terrain:
    """Heightfield plus course metadata.

    Straight courses (flat/ramp/stairs) run along +y with the start zone
    centered on the origin. The spiral course is an annulus around the
    origin walked counterclockwise; its start zone straddles the
    centerline at polar angle 0, and the stair seam sits behind the
    start so a full success run never crosses it.
    """

    kind: str
    params: dict
    start_zone: tuple[float, float, float, float]  # x_lo, x_hi, y_lo, y_hi
    centerline_radius_m: float = 0.0  # spiral only

    @property
    def is_spiral(self) -> bool:
        return self.kind == "spiral_stairs"

    def height(self, x: float, y: float) -> float:
        k = self.kind
        if k == "flat":
            return 0.0
        p = self.params
        if k == "ramp":
            slope, y0, run = p["_slope"], p["_y0"], p["_run"]
            if y <= y0:
                return 0.0
            if y <= y0 + run:
                return slope * (y - y0)
            if y <= y0 + 2 * run:
                return slope * (2 * run - (y - y0))
            return 0.0
        if k == "stairs":
            y0 = p["_y0"]
            if y <= y0:
                return 0.0
            idx = int((y - y0) / p["step_depth_m"])
            return p["step_height_m"] * min(idx, p["_count"])
        # spiral_stairs: purely angular staircase; the central column is
        # not geometry, the corridor terminal keeps the body off it
        w = (math.atan2(y, x) + p["_seam"]) % TWO_PI
        idx = math.floor((w - p["_onset"]) / p["step_angle_rad"])
        return p["step_height_m"] * min(max(idx, 0), p["_count"])

    def height_at(self, xs, ys) -> np.ndarray:
        """Vectorized convenience wrapper for analysis code."""
        return np.array([self.height(float(x), float(y)) for x, y in zip(xs, ys)])


def _check_range(kind: str, name: str, value, lo: float, hi: float) -> float:
    v = float(value)
    if not (lo <= v <= hi):
        raise ValueError(f"{kind}: {name}={value} outside [{lo}, {hi}]")
    return v


def make_terrain(kind: str, **params) -> Terrain:
    """Build a terrain preset.

    flat: no parameters.
    ramp: slope_deg in [5, 10]; flat approach, incline, matching
      decline, flat runout.
    stairs: step_height_m in [0.005, 0.015], step_depth_m in
      [0.02, 0.5]; risers ascend in +y from y = 0.25.
    spiral_stairs: step_height_m in [0.005, 0.015] (default 0.015),
      inner_radius_m in [0.3, 1.5], step_angle_rad in [0.05, 0.8].
    """
    straight_zone = (-0.25, 0.25, -0.1, 0.1)
    if kind == "flat":
        if params:
            raise ValueError(f"flat: unexpected parameters {sorted(params)}")
        return Terrain("flat", {}, straight_zone)
    if kind == "ramp":
        extra = set(params) - {"slope_deg"}
        if extra:
            raise ValueError(f"ramp: unexpected parameters {sorted(extra)}")
        slope_deg = _check_range("ramp", "slope_deg", params.get("slope_deg", 7.0), 5.0, 10.0)
        p = {
            "slope_deg": slope_deg,
            "_slope": math.tan(math.radians(slope_deg)),
            "_y0": 0.75,
            "_run": 0.75,
        }
        return Terrain("ramp", p, straight_zone)
    if kind == "stairs":
        extra = set(params) - {"step_height_m", "step_depth_m"}
        if extra:
            raise ValueError(f"stairs: unexpected parameters {sorted(extra)}")
        h = _check_range("stairs", "step_height_m", params.get("step_height_m", 0.010), 0.005, 0.015)
        d = _check_range("stairs", "step_depth_m", params.get("step_depth_m", 0.05), 0.02, 0.5)
        p = {"step_height_m": h, "step_depth_m": d, "_y0": 0.25, "_count": 60}
        return Terrain("stairs", p, straight_zone)
    if kind == "spiral_stairs":
        extra = set(params) - {"step_height_m", "inner_radius_m", "step_angle_rad"}
        if extra:
            raise ValueError(f"spiral_stairs: unexpected parameters {sorted(extra)}")
        h = _check_range(
            "spiral_stairs", "step_height_m", params.get("step_height_m", 0.015), 0.005, 0.015
        )
        inner = _check_range(
            "spiral_stairs", "inner_radius_m", params.get("inner_radius_m", 0.45), 0.3, 1.5
        )
        ang = _check_range(
            "spiral_stairs", "step_angle_rad", params.get("step_angle_rad", TWO_PI / 24), 0.05, 0.8
        )
        r_mid = inner + 0.3
        seam = 0.9  # rad behind the start, out of reach of a 3 m climb
        onset = seam + 0.45  # first riser just past the start zone
        count = int((TWO_PI - onset - 0.1) // ang)
        p = {
            "step_height_m": h,
            "inner_radius_m": inner,
            "step_angle_rad": ang,
            "_seam": seam,
            "_onset": onset,
            "_count": count,
        }
        zone = (r_mid - 0.1, r_mid + 0.1, -0.25, 0.25)
        return Terrain("spiral_stairs", p, zone, centerline_radius_m=r_mid)
    raise ValueError(f"unknown terrain kind {kind!r}, expected one of {TERRAIN_KINDS}")


@dataclass(frozen=True)
class SimConfig:
    """Noise, contact, smoothing, and episode-termination parameters."""

    sample_rate_hz: float = 100.0
    sigma_gyro: float = 0.05
    sigma_acc: float = 0.2
    perturb_gyro: float = 0.3
    perturb_acc: float = 0.5
    smooth_pos: float = 0.35
    smooth_yaw: float = 0.3
    smooth_tilt: float = 0.25
    impact_gain: float = 250.0
    impact_decay: float = 0.7
    impact_cap_m: float = 0.05
    omega_fall: float = 3.0
    fall_axis: int = 0
    corridor_halfwidth_m: float = 0.3
    success_distance_m: float = 3.0
    stride_budget: int = 60
    contact_tol_m: float = 0.02
    tilt_ridge: float = 1e-4

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        for name in ("smooth_pos", "smooth_yaw", "smooth_tilt"):
            if not 0 < getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in (0, 1]")
        if not 0 <= self.impact_decay < 1:
            raise ValueError("impact_decay must be in [0, 1)")
        if self.omega_fall <= 0:
            raise ValueError("omega_fall must be positive")
        if self.fall_axis not in (0, 1, 2):
            raise ValueError("fall_axis must be 0, 1, or 2")
        if self.sigma_gyro < 0 or self.sigma_acc < 0:
            raise ValueError("noise sigmas must be >= 0")


@dataclass(frozen=True)
class RobotBody:
    """Pose snapshot of the simulated body."""

    position: np.ndarray
    rpy: np.ndarray
    linear_velocity: np.ndarray
    angular_velocity: np.ndarray
    hip_offsets: np.ndarray = field(default_factory=lambda: np.array(HIP_OFFSETS))
    dims: tuple[float, float, float] = (BODY_LENGTH, BODY_WIDTH, BODY_HEIGHT)

    def __post_init__(self):
        for name in ("position", "rpy", "linear_velocity", "angular_velocity"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if arr.shape != (3,) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be 3 finite reals")


@dataclass(frozen=True)
class ImuSample:
    acc: np.ndarray
    gyro: np.ndarray
    t_s: float


@dataclass(frozen=True)
class ImuWindow:
    """One stride of IMU samples as channel arrays."""

    acc: np.ndarray
    gyro: np.ndarray
    t_s: np.ndarray
    sample_rate_hz: float

    def __len__(self) -> int:
        return self.t_s.size

    def samples(self):
        for i in range(self.t_s.size):
            yield ImuSample(self.acc[i], self.gyro[i], float(self.t_s[i]))

    def channel(self, name: str, window_index: int = 0) -> TimeSeries:
        kind, _, axis = name.partition("_")
        idx = {"x": 0, "y": 1, "z": 2}[axis]
        data = {"gyro": self.gyro, "acc": self.acc}[kind]
        return TimeSeries(data[:, idx].copy(), self.sample_rate_hz, window_index)


@dataclass
class EpisodeStatus:
    outcome: str = "running"
    strides_used: int = 0
    distance_m: float = 0.0
    elapsed_s: float = 0.0

    TERMINAL = ("success", "fall", "stride_budget_exceeded", "off_course")

    def finish(self, outcome: str) -> None:
        if self.outcome != "running":
            raise RuntimeError(
                f"episode already terminal ({self.outcome}), cannot move to {outcome}"
            )
        if outcome not in self.TERMINAL:
            raise ValueError(f"unknown terminal outcome {outcome!r}")
        self.outcome = outcome


@dataclass(frozen=True)
class StrideTelemetry:
    """Ground-truth per-stride quantities the reward layer consumes."""

    forward_velocity: float
    lateral_offset_m: float
    vertical_velocity: float
    yaw_rate: float
    heading_change_rad: float
    peak_fall_axis_rate: float
    displacement: np.ndarray


def synthesize_imu(
    positions: np.ndarray,
    rpys: np.ndarray,
    stride_phase: np.ndarray,
    t0_s: float,
    cfg: SimConfig,
    rng: np.random.Generator,
) -> ImuWindow:
    """Turn a pose track into noisy IMU samples.

    ``positions``/``rpys`` carry two lead-in rows before the window so
    rates and accelerations are defined from the first sample. Gyro is
    the finite-difference body-frame angular rate; acc is the specific
    force (linear acceleration minus gravity) rotated into the body
    frame under a small-tilt approximation. Both get white noise plus a
    two-harmonic gait-phase perturbation, the stride-periodic signature
    a walking body imprints on its sensors.
    """
    stride_phase = np.asarray(stride_phase, dtype=float)
    n = stride_phase.size
    if n < 2:
        raise ValueError("need at least 2 samples per window")
    if positions.shape != (n + 2, 3) or rpys.shape != (n + 2, 3):
        raise ValueError(
            f"need {n + 2} poses (2 lead-in rows) for {n} samples, "
            f"got {positions.shape} and {rpys.shape}"
        )
    dt = 1.0 / cfg.sample_rate_hz

    vel = np.diff(positions, axis=0) / dt  # n+1 rows
    acc_world = np.diff(vel, axis=0) / dt  # n rows
    ang_rate = np.diff(rpys, axis=0)[1:] / dt  # n rows

    spec_world = acc_world - np.array([0.0, 0.0, -GRAVITY])
    tx, ty, yaw = rpys[2:, 0], rpys[2:, 1], rpys[2:, 2]
    cy, sy = np.cos(yaw), np.sin(yaw)
    # undo yaw, then the small-tilt correction (I - [tilt]x)
    fx = cy * spec_world[:, 0] + sy * spec_world[:, 1]
    fy = -sy * spec_world[:, 0] + cy * spec_world[:, 1]
    fz = spec_world[:, 2]
    acc_body = np.stack([fx - ty * fz, fy + tx * fz, fz + ty * fx - tx * fy], axis=1)

    noise = rng.normal(0.0, 1.0, (n, 6))
    ph1 = TWO_PI * stride_phase
    ph2 = 2.0 * ph1
    gyro = ang_rate
    for a in range(3):
        w1, w2, p1, p2 = _GYRO_SHAPE[a]
        gyro[:, a] += cfg.perturb_gyro * (w1 * np.sin(ph1 + p1) + w2 * np.sin(ph2 + p2))
        gyro[:, a] += cfg.sigma_gyro * noise[:, a]
        w1, w2, p1, p2 = _ACC_SHAPE[a]
        acc_body[:, a] += cfg.perturb_acc * (w1 * np.sin(ph1 + p1) + w2 * np.sin(ph2 + p2))
        acc_body[:, a] += cfg.sigma_acc * noise[:, 3 + a]

    t = t0_s + np.arange(n) * dt
    return ImuWindow(acc=acc_body, gyro=gyro, t_s=t, sample_rate_hz=cfg.sample_rate_hz)


class SimulationFault(RuntimeError):
    """Non-finite simulator state: a bug signal, not an episode outcome."""


class QuadSim:
    """One robot on one terrain. Owns its RNG, gait phases, and episode
    state; any number of instances run in parallel with independent
    seeds."""

    def __init__(
        self,
        terrain: Terrain,
        sim_cfg: SimConfig | None = None,
        gait_cfg: GaitConfig | None = None,
    ):
        self.terrain = terrain
        self.cfg = sim_cfg or SimConfig()
        self.gait_cfg = gait_cfg or GaitConfig()
        self.rng: np.random.Generator | None = None
        self.status = EpisodeStatus()
        self.trace_enabled = False
        self.trace_rows: list[list[float]] = []
        neutral = neutral_action(self.gait_cfg)
        self.standing_clearance_m = float(neutral.rho[0] * math.cos(neutral.theta[0]))
        self._cached_action: Action | None = None

    # -- episode lifecycle --------------------------------------------------

    def reset(self, seed: int) -> tuple[RobotBody, ImuWindow]:
        """Seeded placement in the start zone, then one neutral priming
        stride that yields the first observation window. The priming
        stride does not count against the stride budget."""
        self.rng = np.random.default_rng(seed)
        x_lo, x_hi, y_lo, y_hi = self.terrain.start_zone
        x = float(self.rng.uniform(x_lo, x_hi))
        y = float(self.rng.uniform(y_lo, y_hi))
        z = self.terrain.height(x, y) + self.standing_clearance_m
        self.spawn_position = (x, y, z)
        self._t = 0.0
        self._x, self._y, self._z = x, y, z
        if self.terrain.is_spiral:
            self._yaw = math.atan2(y, x)
            self._course_angle = self._yaw
            self._start_angle = self._yaw
        else:
            self._yaw = 0.0
            self._course_angle = 0.0
            self._start_angle = 0.0
        self._tilt_x = 0.0
        self._tilt_y = 0.0
        self._imp_x = 0.0
        self._imp_y = 0.0
        self._prev_pos = [(x, y, z), (x, y, z)]
        self._prev_rpy = [(0.0, 0.0, self._yaw), (0.0, 0.0, self._yaw)]
        self._prev_heading: float | None = None
        self._start_xy = (x, y)
        self.status = EpisodeStatus()
        self.trace_rows = []
        self._phases = list(self.gait_cfg.phase_lags)
        self._cached_action = None
        neutral = neutral_action(self.gait_cfg)
        self._load_action(neutral)
        self._anchors: list[list[float] | None] = [None] * 4
        self._frozen: list[tuple[float, float] | None] = [None] * 4
        for i in range(4):
            if self._phases[i] < 0.5:
                tx, tz = self._sole_target(i, self._phases[i])
                self._anchor_limb(i, tx, tz, impact=False)
        window, telem = self._run_window(neutral)
        self._last_telemetry = telem
        return self.body_snapshot(), window

    def step_stride(self, action: Action) -> tuple[RobotBody, ImuWindow, EpisodeStatus]:
        """Advance one mean stride period and report what happened."""
        if self.rng is None:
            raise RuntimeError("call reset() before stepping")
        if self.status.outcome != "running":
            raise RuntimeError(f"episode is over ({self.status.outcome})")
        window, telem = self._run_window(action)
        self._last_telemetry = telem
        self.status.strides_used += 1
        self.status.elapsed_s = self._t
        self.status.distance_m = self._course_distance()
        if abs(telem.peak_fall_axis_rate) > self.cfg.omega_fall:
            self.status.finish("fall")
        elif abs(telem.lateral_offset_m) > self.cfg.corridor_halfwidth_m:
            self.status.finish("off_course")
        elif self.status.distance_m >= self.cfg.success_distance_m:
            self.status.finish("success")
        elif self.status.strides_used >= self.cfg.stride_budget:
            self.status.finish("stride_budget_exceeded")
        return self.body_snapshot(), window, self.status

    def body_snapshot(self) -> RobotBody:
        dt = 1.0 / self.cfg.sample_rate_hz
        p1, p0 = np.array(self._prev_pos[-1]), np.array(self._prev_pos[-2])
        r1, r0 = np.array(self._prev_rpy[-1]), np.array(self._prev_rpy[-2])
        return RobotBody(
            position=np.array([self._x, self._y, self._z]),
            rpy=np.array([self._tilt_x, self._tilt_y, self._yaw]),
            linear_velocity=(p1 - p0) / dt,
            angular_velocity=(r1 - r0) / dt,
        )

    @property
    def last_telemetry(self) -> StrideTelemetry:
        return self._last_telemetry

    # -- internals ----------------------------------------------------------

    def _load_action(self, action: Action) -> None:
        """Precompute plain-float sole tables; phases carry over."""
        if self._cached_action is not None and np.array_equal(
            self._cached_action.as_vector(), action.as_vector()
        ):
            return
        tables = []
        for i in range(4):
            traj = action_to_trajectory(action, i, self.gait_cfg)
            tables.append((traj.waypoints[:, 0].tolist(), traj.waypoints[:, 1].tolist()))
        self._tables = tables
        self._freqs = [float(f) for f in action.stride_freq]
        self._n_way = self.gait_cfg.waypoint_count
        self._cached_action = action

    def _sole_target(self, limb: int, phase: float) -> tuple[float, float]:
        xs, zs = self._tables[limb]
        u = phase * self._n_way
        k = int(u)
        fr = u - k
        return xs[k] + (xs[k + 1] - xs[k]) * fr, zs[k] + (zs[k + 1] - zs[k]) * fr

    def _course_distance(self) -> float:
        if self.terrain.is_spiral:
            return (self._course_angle - self._start_angle) * self.terrain.centerline_radius_m
        return self._y - self._start_xy[1]

    def _lateral_offset(self) -> float:
        if self.terrain.is_spiral:
            return math.hypot(self._x, self._y) - self.terrain.centerline_radius_m
        return self._x

    def _foot_world(self, limb: int, tx: float, tz: float) -> tuple[float, float, float]:
        hx, hy, _ = HIP_OFFSETS[limb]
        bx, by = hx, hy + tx
        c, s = math.cos(self._yaw), math.sin(self._yaw)
        # small-tilt height of a body-frame point: pitched bodies reach
        # the slope, so foot placement follows the terrain once the
        # tilt matches its gradient
        bz = tz + self._tilt_x * by - self._tilt_y * bx
        return self._x + c * bx - s * by, self._y + s * bx + c * by, self._z + bz

    def _anchor_limb(self, limb: int, tx: float, tz: float, impact: bool) -> None:
        wx, wy, wz = self._foot_world(limb, tx, tz)
        ground = self.terrain.height(wx, wy)
        if impact:
            mismatch = ground - wz
            mismatch = max(-self.cfg.impact_cap_m, min(self.cfg.impact_cap_m, mismatch))
            if abs(mismatch) > 1e-6:
                hx, hy, _ = HIP_OFFSETS[limb]
                lever = math.hypot(hx, hy)
                kick = self.cfg.impact_gain * mismatch
                self._imp_x += kick * (hy / lever)
                self._imp_y += kick * (hx / lever)
        self._anchors[limb] = [wx, wy, ground]
        self._frozen[limb] = None

    def _run_window(self, action: Action) -> tuple[ImuWindow, StrideTelemetry]:
        cfg = self.cfg
        self._load_action(action)
        period = float(np.mean(1.0 / action.stride_freq))
        n = max(2, int(round(period * cfg.sample_rate_hz)))
        dt = 1.0 / cfg.sample_rate_hz

        pos_hist = list(self._prev_pos)
        rpy_hist = list(self._prev_rpy)
        phase_hist = []
        start_pos = (self._x, self._y, self._z)
        start_yaw = self._yaw
        win_start_angle = self._course_angle
        terrain_height = self.terrain.height
        anchors = self._anchors
        frozen = self._frozen
        phases = self._phases
        freqs = self._freqs
        a_pos, a_yaw, a_tilt = cfg.smooth_pos, cfg.smooth_yaw, cfg.smooth_tilt
        decay = cfg.impact_decay
        spiral = self.terrain.is_spiral

        for _ in range(n):
            targets = []
            for i in range(4):
                old = phases[i]
                ph = (old + freqs[i] * dt) % 1.0
                phases[i] = ph
                tx, tz = self._sole_target(i, ph)
                targets.append((tx, tz))
                if anchors[i] is not None and old <= 0.5 < ph:
                    # stance ended: lift the foot
                    anchors[i] = None
                    frozen[i] = None
                if ph < old:
                    # phase wrapped: stance begins
                    if anchors[i] is None:
                        self._anchor_limb(i, tx, tz, impact=True)
                elif anchors[i] is not None and frozen[i] is not None and ph < 0.5:
                    # a stub-held foot keeps its frozen target until the
                    # stance sweep catches up with where it planted, so
                    # an early plant never yanks the body backward
                    if tx <= frozen[i][0]:
                        frozen[i] = None
                elif anchors[i] is None and ph > 0.625:
                    # past a quarter of the swing the foot has real
                    # clearance; contact before that is liftoff jitter
                    wx, wy, wz = self._foot_world(i, tx, tz)
                    if wz < terrain_height(wx, wy):
                        # stub: swing foot hit the terrain early
                        self._anchor_limb(i, tx, tz, impact=True)
                        frozen[i] = (tx, tz)

            # rigid fit of anchored body-frame targets to world anchors
            bs, ws, zs, azs = [], [], [], []
            for i in range(4):
                anc = anchors[i]
                if anc is None:
                    continue
                tx, tz = frozen[i] if frozen[i] is not None else targets[i]
                hx, hy, _ = HIP_OFFSETS[i]
                by = hy + tx
                bs.append((hx, by))
                ws.append((anc[0], anc[1]))
                # body height each anchor implies, tilt-corrected
                zs.append(anc[2] - tz - (self._tilt_x * by - self._tilt_y * hx))
                azs.append(anc[2])
            k = len(bs)
            if k >= 2:
                bxm = sum(b[0] for b in bs) / k
                bym = sum(b[1] for b in bs) / k
                wxm = sum(w[0] for w in ws) / k
                wym = sum(w[1] for w in ws) / k
                num = den = 0.0
                for (bx, by), (wx, wy) in zip(bs, ws):
                    cbx, cby = bx - bxm, by - bym
                    cwx, cwy = wx - wxm, wy - wym
                    num += cbx * cwy - cby * cwx
                    den += cbx * cwx + cby * cwy
                yaw_t = math.atan2(num, den) if (num != 0.0 or den != 0.0) else self._yaw
                c, s = math.cos(yaw_t), math.sin(yaw_t)
                x_t = wxm - (c * bxm - s * bym)
                y_t = wym - (s * bxm + c * bym)
                z_t = sum(zs) / k
                # tilt target from the raw plane of the anchor points;
                # the ridge keeps the two-anchor trot fit well-posed
                azm = sum(azs) / k
                sxx = syy = sxy = sxz = syz = 0.0
                for (wx, wy), az in zip(ws, azs):
                    dx, dy, dz = wx - wxm, wy - wym, az - azm
                    sxx += dx * dx
                    syy += dy * dy
                    sxy += dx * dy
                    sxz += dx * dz
                    syz += dy * dz
                lam = cfg.tilt_ridge
                det = (sxx + lam) * (syy + lam) - sxy * sxy
                gx = ((syy + lam) * sxz - sxy * syz) / det
                gy = ((sxx + lam) * syz - sxy * sxz) / det
                # world-frame terrain gradient to body tilts: forward
                # slope pitches about body x, lateral slope rolls about
                # body y (right side uphill means negative roll)
                tilt_x_t = math.atan(-s * gx + c * gy)
                tilt_y_t = -math.atan(c * gx + s * gy)
            else:
                yaw_t, x_t, y_t, z_t = self._yaw, self._x, self._y, self._z
                tilt_x_t, tilt_y_t = self._tilt_x, self._tilt_y

            self._x += a_pos * (x_t - self._x)
            self._y += a_pos * (y_t - self._y)
            self._z += a_pos * (z_t - self._z)
            dyaw = (yaw_t - self._yaw + math.pi) % TWO_PI - math.pi
            self._yaw += a_yaw * dyaw
            self._tilt_x += a_tilt * (tilt_x_t - self._tilt_x) + self._imp_x * dt
            self._tilt_y += a_tilt * (tilt_y_t - self._tilt_y) + self._imp_y * dt
            self._imp_x *= decay
            self._imp_y *= decay

            floor = terrain_height(self._x, self._y) - cfg.contact_tol_m
            if self._z < floor:
                self._z = floor

            if spiral:
                ang = math.atan2(self._y, self._x)
                d = (ang - self._course_angle + math.pi) % TWO_PI - math.pi
                self._course_angle += d

            if not (
                math.isfinite(self._x) and math.isfinite(self._y)
                and math.isfinite(self._z) and math.isfinite(self._yaw)
                and math.isfinite(self._tilt_x) and math.isfinite(self._tilt_y)
            ):
                raise SimulationFault(
                    f"non-finite body state at t={self._t:.3f}s: "
                    f"pos=({self._x}, {self._y}, {self._z}) "
                    f"yaw={self._yaw} tilt=({self._tilt_x}, {self._tilt_y})"
                )

            self._t += dt
            pos_hist.append((self._x, self._y, self._z))
            rpy_hist.append((self._tilt_x, self._tilt_y, self._yaw))
            phase_hist.append(phases[0])

        positions = np.array(pos_hist)
        rpys = np.array(rpy_hist)
        window = synthesize_imu(
            positions, rpys, np.array(phase_hist), self._t - n * dt, cfg, self.rng
        )
        self._prev_pos = [pos_hist[-2], pos_hist[-1]]
        self._prev_rpy = [rpy_hist[-2], rpy_hist[-1]]

        gyro_axis = window.gyro[:, cfg.fall_axis]
        peak = float(gyro_axis[int(np.argmax(np.abs(gyro_axis)))])

        if self.trace_enabled:
            for j in range(n):
                self.trace_rows.append(
                    [self._t - (n - j) * dt]
                    + list(pos_hist[j + 2]) + list(rpy_hist[j + 2])
                    + list(window.acc[j]) + list(window.gyro[j])
                )

        dx = self._x - start_pos[0]
        dy = self._y - start_pos[1]
        dz = self._z - start_pos[2]
        duration = n * dt
        if spiral:
            forward_v = (self._course_angle - win_start_angle) * self.terrain.centerline_radius_m / duration
        else:
            forward_v = dy / duration
        if dx * dx + dy * dy > 1e-12:
            heading = math.atan2(dy, dx)
            if self._prev_heading is None:
                heading_change = 0.0
            else:
                heading_change = abs((heading - self._prev_heading + math.pi) % TWO_PI - math.pi)
            self._prev_heading = heading
        else:
            heading_change = 0.0
        telem = StrideTelemetry(
            forward_velocity=forward_v,
            lateral_offset_m=self._lateral_offset(),
            vertical_velocity=dz / duration,
            yaw_rate=((self._yaw - start_yaw + math.pi) % TWO_PI - math.pi) / duration,
            heading_change_rad=heading_change,
            peak_fall_axis_rate=peak,
            displacement=np.array([dx, dy, dz]),
        )
        return window, telem


TRACE_COLUMNS = (
    "t_s", "pos_x", "pos_y", "pos_z", "tilt_x", "tilt_y", "yaw",
    "acc_x", "acc_y", "acc_z", "gyro_x", "gyro_y", "gyro_z",
)
