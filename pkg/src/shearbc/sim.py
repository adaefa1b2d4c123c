"""Planar (y, z) rigid-body simulation of the gripper/box system.

The robot end-effector rigidly grasps a box; a human agent applies
spring-damper forces to the box. Embodiments range from the near-zero
stiffness demo configuration to joint-position and gantry-style tracking
where external forces cannot move the robot at all.
"""

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .seeding import derive_rng

GRAVITY = 9.81
WORKSPACE_HALF = 0.5
PHYSICS_DT = 0.01
CONTROL_DT = 0.3

EMBODIMENT_KINDS = ("malleable", "ji-medium", "ji-stiff", "jp", "gantry")


@dataclass
class PlanarState:
    """End-effector/box pose, velocity and the controller goal, meters."""

    pose: np.ndarray
    vel: np.ndarray
    goal: np.ndarray

    @staticmethod
    def at(y, z):
        return PlanarState(pose=np.array([y, z], dtype=np.float64),
                           vel=np.zeros(2), goal=np.array([y, z], dtype=np.float64))

    def copy(self):
        return PlanarState(self.pose.copy(), self.vel.copy(), self.goal.copy())


@dataclass
class ImpedanceParams:
    """Diagonal task-space inertia / damping / stiffness."""

    m: tuple = (4.0, 4.0)      # kg
    b: tuple = (40.0, 40.0)    # N s/m
    k: tuple = (0.0, 0.0)      # N/m

    def __post_init__(self):
        if min(self.m) <= 0 or min(self.b) <= 0:
            raise ValueError("inertia and damping diagonals must be positive")
        if min(self.k) < 0:
            raise ValueError("stiffness diagonal must be non-negative")

    def arrays(self):
        return (np.asarray(self.m, dtype=np.float64),
                np.asarray(self.b, dtype=np.float64),
                np.asarray(self.k, dtype=np.float64))


@dataclass
class EmbodimentConfig:
    kind: str
    impedance: ImpedanceParams | None = None
    track_rate: float = 0.0          # m/s command tracking limit (jp, gantry)
    track_accel: float = 0.0         # m/s^2 limit for jp-style tracking
    step_quantum: float = 0.0        # m lattice pitch (gantry)
    proprioception: bool = True

    def is_impedance(self):
        return self.kind in ("malleable", "ji-medium", "ji-stiff")


def make_embodiment(kind):
    """Preset embodiments; stiffness ordering ji-stiff > ji-medium holds
    elementwise and jp/gantry track commands exactly up to rate limits."""
    if kind == "malleable":
        return EmbodimentConfig(kind, ImpedanceParams(m=(4.0, 4.0), b=(40.0, 40.0), k=(0.0, 0.0)))
    if kind == "ji-medium":
        return EmbodimentConfig(kind, ImpedanceParams(m=(4.0, 4.0), b=(80.0, 80.0), k=(150.0, 150.0)))
    if kind == "ji-stiff":
        return EmbodimentConfig(kind, ImpedanceParams(m=(4.0, 4.0), b=(80.0, 80.0), k=(600.0, 600.0)))
    if kind == "jp":
        return EmbodimentConfig(kind, None, track_rate=0.6, track_accel=6.0)
    if kind == "gantry":
        return EmbodimentConfig(kind, None, track_rate=0.05, step_quantum=5e-4,
                                proprioception=False)
    raise ValueError(f"unknown embodiment kind {kind!r}; valid: {EMBODIMENT_KINDS}")


def step_impedance(state, params, f_ext, dt):
    """One semi-implicit Euler step of M dv + B v + K (x - x_d) = f_ext."""
    m, b, k = params.arrays()
    acc = (f_ext + k * (state.goal - state.pose) - b * state.vel) / m
    vel = state.vel + acc * dt
    pose = state.pose + vel * dt
    return PlanarState(pose=pose, vel=vel, goal=state.goal.copy())


def malleable_goal_update(state, z_g):
    """Continuous goal chase with a vertical gravity-compensation offset."""
    out = state.copy()
    out.goal = state.pose + np.array([0.0, z_g])
    return out


@dataclass
class GraspState:
    """Quasi-static grasp: tangential load vs. friction-cone budget."""

    grip: float = 8.0      # normal force, N
    mu: float = 1.5
    f_g: np.ndarray = field(default_factory=lambda: np.zeros(2))
    slipped: bool = False

    def limit(self):
        return self.mu * self.grip


def grasp_update(grasp, f_human, accel, box_mass, f_support=None):
    """Tangential force the grasp must transmit; latches slip past the
    friction limit. f_g = m a + m g z_hat - f_human - f_support."""
    f_sup = np.zeros(2) if f_support is None else np.asarray(f_support, dtype=np.float64)
    f_g = box_mass * np.asarray(accel, dtype=np.float64) \
        + np.array([0.0, box_mass * GRAVITY]) - np.asarray(f_human, dtype=np.float64) - f_sup
    slipped = grasp.slipped or (float(np.linalg.norm(f_g)) > grasp.limit())
    return GraspState(grip=grasp.grip, mu=grasp.mu, f_g=f_g, slipped=slipped)


# ---------------------------------------------------------------------------
# human agents

def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


class HumanAgent:
    """Scripted or live hand applying a spring-damper force to the box.

    maneuver: seeded waypoint spline roaming the workspace with dwells.
    place: staged approach to a stack target, then settle and hold.
    live: hand target injected through a latest-wins mailbox.
    """

    def __init__(self, mode, seed=0, k_hand=50.0, b_hand=10.0,
                 start=(0.0, 0.0), target=(0.2, -0.15), speed=0.10,
                 slip_aware=False, slip_margin=0.8, grasp_limit=None,
                 roam_half=0.3, duration=3600.0):
        if mode not in ("maneuver", "place", "live"):
            raise ValueError(f"unknown human mode {mode!r}")
        self.mode = mode
        self.k_hand = k_hand
        self.b_hand = b_hand
        self.slip_aware = slip_aware
        self.slip_margin = slip_margin
        self.grasp_limit = grasp_limit
        self.target = np.asarray(target, dtype=np.float64)
        self.live_target = None
        self.live_engaged = False
        self.no_client = False
        self._segments = []
        if mode == "maneuver":
            self._build_roam(seed, np.asarray(start, float), roam_half, speed, duration)
        elif mode == "place":
            self._build_place(np.asarray(start, float), self.target, speed)

    def _build_roam(self, seed, start, half, speed, duration):
        rng = derive_rng(seed, "human", "roam")
        t, p = 0.0, start.copy()
        # initial dwell: the human engages the grasped box before pulling,
        # which also spans the policy's observation warm-up
        self._segments.append((0.0, 1.5, p.copy(), p.copy()))
        t = 1.5
        while t < duration + 10.0:
            nxt = rng.uniform(-half, half, size=2)
            seg_speed = speed * float(rng.uniform(0.5, 1.3))
            seg_t = max(float(np.linalg.norm(nxt - p)) / seg_speed, 0.4)
            self._segments.append((t, t + seg_t, p.copy(), nxt.copy()))
            t += seg_t
            p = nxt
            dwell = float(rng.uniform(0.3, 1.0))
            self._segments.append((t, t + dwell, p.copy(), p.copy()))
            t += dwell

    def _build_place(self, start, target, speed):
        above = target + np.array([0.0, 0.08])
        self._segments.append((0.0, 1.5, start.copy(), start.copy()))
        t, p = 1.5, start.copy()
        for nxt, pause in ((above, 0.4), (target, 1.0)):
            seg_t = max(float(np.linalg.norm(nxt - p)) / speed, 0.4)
            self._segments.append((t, t + seg_t, p.copy(), nxt.copy()))
            t += seg_t
            self._segments.append((t, t + pause, nxt.copy(), nxt.copy()))
            t += pause
            p = nxt
        self._hold_from = t

    def hand_target(self, t):
        if self.mode == "live":
            return None if self.live_target is None else self.live_target.copy()
        for t0, t1, p0, p1 in self._segments:
            if t < t1:
                return p0 + (p1 - p0) * _smoothstep((t - t0) / max(t1 - t0, 1e-9))
        return self._segments[-1][3].copy()

    def force(self, t, box_pose, box_vel):
        """Spring-damper hand force on the box at time t."""
        hand = self.hand_target(t)
        if hand is None:
            self.no_client = True
            return np.zeros(2)
        f = self.k_hand * (hand - box_pose) - self.b_hand * box_vel
        if self.slip_aware and self.grasp_limit is not None:
            cap = max(self.slip_margin * self.grasp_limit - 4.0, 1.0)
            mag = float(np.linalg.norm(f))
            if mag > cap:
                f *= cap / mag
        return f

    def set_live_target(self, y, z):
        self.live_target = np.array([y, z], dtype=np.float64)
        self.live_engaged = True

    def release(self):
        self.live_target = None
        self.live_engaged = False


# ---------------------------------------------------------------------------
# the composed world

@dataclass
class WorldConfig:
    box_mass: float = 0.4
    grip_force: float = 8.0
    mu: float = 2.75
    z_g: float = 0.13               # malleable gravity factor, m
    gc_stiffness: float | None = None   # N/m; default box_mass*g/z_g
    start: tuple = (0.0, 0.0)
    target: tuple = (0.2, -0.15)
    # stack contact is compliant: the grasped box can tilt/skid on the
    # target box, so grinding builds force gently rather than as a wall
    support_stiffness: float = 400.0
    support_damping: float = 30.0
    support_halfwidth: float = 0.05
    physics_dt: float = PHYSICS_DT
    control_dt: float = CONTROL_DT

    def resolved_gc(self):
        if self.gc_stiffness is not None:
            return self.gc_stiffness
        return self.box_mass * GRAVITY / self.z_g


@dataclass
class TickObs:
    tick: int
    t: float
    pose: np.ndarray
    cmd: np.ndarray
    f_meas: np.ndarray
    f_human: np.ndarray
    shear: np.ndarray
    raw: np.ndarray | None
    grasp_force: np.ndarray
    slipped: bool
    supported: bool


class World:
    """Owns the physics loop, the grasp, the human and the tactile bridge.

    controller, when present, receives each TickObs and may return a new
    commanded pose. sensors is a TactileBridge-like object providing
    capture_reference(f_g, grip) and measure(f_g, grip) -> (shear, raw).
    """

    def __init__(self, embodiment, human, sensors, config=None, seed=0,
                 controller=None, scenario="maneuver", record_raw=True):
        self.embodiment = embodiment
        self.human = human
        self.sensors = sensors
        self.cfg = config or WorldConfig()
        self.seed = seed
        self.controller = controller
        self.scenario = scenario
        self.record_raw = record_raw

        self.state = PlanarState.at(*self.cfg.start)
        if embodiment.kind == "gantry":
            q = embodiment.step_quantum
            self.state.pose = np.round(self.state.pose / q) * q
        self.cmd = self.state.pose.copy()
        self.grasp = GraspState(grip=self.cfg.grip_force, mu=self.cfg.mu)
        self._fg_window = []            # 50 ms quasi-static filter for slip
        self._pose_window = []          # 1 s rest detector for placement
        self.t = 0.0
        self.tick_index = 0
        self.supported = False
        self.bound_violation = False
        self.status = "running"
        self.completion_t = None
        self._settle_timer = 0.0
        self._substeps = int(round(self.cfg.control_dt / self.cfg.physics_dt))

        f_g0 = np.array([0.0, self.cfg.box_mass * GRAVITY])
        self.grasp.f_g = f_g0
        if self.sensors is not None:
            self.sensors.capture_reference(f_g0, self.cfg.grip_force)

    # -- forces --------------------------------------------------------

    def _support_force(self, pose, vel):
        """One-sided stack contact under the target (place scenario)."""
        if self.scenario != "place":
            return np.zeros(2), False
        ty, tz = self.cfg.target
        aligned = abs(pose[0] - ty) <= self.cfg.support_halfwidth
        pen = tz - pose[1]
        if aligned and pen > 0:
            fz = self.cfg.support_stiffness * pen - self.cfg.support_damping * vel[1]
            return np.array([0.0, max(fz, 0.0)]), True
        return np.zeros(2), False

    def _step_physics(self):
        cfg = self.cfg
        dt = cfg.physics_dt
        pose, vel = self.state.pose, self.state.vel
        f_h = self.human.force(self.t, pose, vel) if not self.grasp.slipped else np.zeros(2)
        f_sup, self.supported = self._support_force(pose, vel)
        grav = np.array([0.0, -cfg.box_mass * GRAVITY])

        if self.embodiment.is_impedance():
            m, b, k = self.embodiment.impedance.arrays()
            if self.embodiment.kind == "malleable":
                self.state = malleable_goal_update(self.state, cfg.z_g)
                f_gc = np.array([0.0, cfg.resolved_gc() * cfg.z_g])
            else:
                self.state.goal = self.cmd.copy()
                f_gc = np.array([0.0, cfg.box_mass * GRAVITY])
            f_ext = f_h + f_sup + grav + f_gc
            total = ImpedanceParams(m=tuple(m + cfg.box_mass), b=tuple(b), k=tuple(k))
            new = step_impedance(self.state, total, f_ext, dt)
            accel = (new.vel - vel) / dt
            self.state = new
        else:
            new_pose = pose.copy()
            rate = self.embodiment.track_rate
            if self.embodiment.kind == "gantry":
                q = self.embodiment.step_quantum
                quanta = max(1, int(round(rate * dt / q)))
                tgt = np.round(self.cmd / q).astype(np.int64)
                cur = np.round(pose / q).astype(np.int64)
                step = np.clip(tgt - cur, -quanta, quanta)
                new_pose = (cur + step).astype(np.float64) * q
                new_vel = (new_pose - pose) / dt
            else:
                # acceleration-limited tracking with braking distance
                amax = self.embodiment.track_accel
                err = self.cmd - pose
                v_des = np.sign(err) * np.minimum(rate, np.sqrt(2.0 * amax * np.abs(err)))
                new_vel = vel + np.clip(v_des - vel, -amax * dt, amax * dt)
                new_pose = pose + new_vel * dt
            accel = (new_vel - vel) / dt
            self.state = PlanarState(pose=new_pose, vel=new_vel, goal=self.cmd.copy())

        hw = WORKSPACE_HALF
        clipped = np.clip(self.state.pose, -hw, hw)
        if not np.array_equal(clipped, self.state.pose):
            self.bound_violation = True
            self.state.vel = np.where(clipped == self.state.pose, self.state.vel, 0.0)
            self.state.pose = clipped

        # gel compliance and static friction low-pass impulsive loads: the
        # latched slip decision uses a 50 ms moving average of the
        # instantaneous transmitted force, not single-substep spikes
        inst = grasp_update(self.grasp, f_h, accel, cfg.box_mass, f_support=f_sup)
        self._fg_window.append(inst.f_g)
        del self._fg_window[:-5]
        f_g_qs = np.mean(self._fg_window, axis=0)
        slipped = self.grasp.slipped or float(np.linalg.norm(f_g_qs)) > self.grasp.limit()
        self.grasp = GraspState(grip=self.grasp.grip, mu=self.grasp.mu,
                                f_g=f_g_qs, slipped=slipped)
        self.t += dt
        self._last_f_human = f_h
        self._last_f_sup = f_sup
        self._last_accel = accel

    def _check_completion(self):
        """The box "rests" at the target when its 1 s mean pose stays within
        tolerance; command micro-dither does not count as motion."""
        if self.scenario != "place" or self.completion_t is not None:
            return
        self._pose_window.append(self.state.pose.copy())
        del self._pose_window[: -int(1.0 / self.cfg.physics_dt)]
        mean_pose = np.mean(self._pose_window, axis=0)
        err = float(np.linalg.norm(mean_pose - np.asarray(self.cfg.target)))
        if err <= 0.01 and len(self._pose_window) >= 50:
            self._settle_timer += self.cfg.physics_dt
            if self._settle_timer >= 0.5:
                self.completion_t = self.t
        else:
            self._settle_timer = 0.0

    def sample_tick(self):
        """Sample sensors at the control boundary and drive the controller."""
        f_meas = self._last_f_human - self.cfg.box_mass * self._last_accel
        shear, raw = (None, None)
        if self.sensors is not None:
            shear, raw = self.sensors.measure(self.grasp.f_g, self.cfg.grip_force)
        obs = TickObs(
            tick=self.tick_index, t=self.t, pose=self.state.pose.copy(),
            cmd=self.cmd.copy(), f_meas=np.asarray(f_meas, dtype=np.float64),
            f_human=self._last_f_human.copy(), shear=shear,
            raw=raw if self.record_raw else None,
            grasp_force=self.grasp.f_g.copy(), slipped=self.grasp.slipped,
            supported=self.supported)
        self.tick_index += 1

        if self.controller is not None and not self.grasp.slipped:
            new_cmd = self.controller.tick(obs)
            if new_cmd is not None:
                self.cmd = np.clip(np.asarray(new_cmd, dtype=np.float64),
                                   -WORKSPACE_HALF, WORKSPACE_HALF)
        elif self.embodiment.kind == "malleable":
            self.cmd = self.state.pose.copy()
        return obs

    def run_tick(self):
        """Advance one control period and return the sampled observation."""
        for _ in range(self._substeps):
            self._step_physics()
            self._check_completion()
            if self.grasp.slipped:
                self.status = "slip"
                break
        return self.sample_tick()

    def run(self, duration, stop_after_completion=2.0):
        """Run for duration seconds of sim time (or until slip/completion).

        Returns the list of TickObs sampled every control period.
        """
        ticks = []
        n = int(math.floor(duration / self.cfg.control_dt)) + 1
        for _ in range(n):
            ticks.append(self.run_tick())
            if self.grasp.slipped:
                break
            if (self.completion_t is not None
                    and self.t - self.completion_t >= stop_after_completion):
                self.status = "success"
                break
        if self.status == "running":
            if self.scenario == "place":
                self.status = "success" if self.completion_t is not None else "timeout"
            else:
                self.status = "done"
        return ticks
