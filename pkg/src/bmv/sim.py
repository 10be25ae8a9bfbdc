"""Closed-loop scenario simulator.

A scenario bundles the formation, the gains, and a piecewise-constant leader
schedule.  Assembly front-loads every validation step: bearings are read off
the reference formation, rigidity and localizability are checked, the
schedule is resolved segment by segment against the target formation it will
steer, and the initial state is fixed.  The run itself is a classical
fixed-step fourth-order Runge-Kutta loop that never steps across a segment
boundary, so leader paths are integrated exactly and two runs of the same
scenario agree bit for bit.
"""

from __future__ import annotations

import logging
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .controller import Gains
from .errors import (
    DimensionMismatch,
    NotLocalizable,
    NotRigid,
    ScheduleGap,
    WindowTooShort,
)
from .formation import (
    BearingSpec,
    Configuration,
    FormationGraph,
    bearing_function,
    ensure_compatible,
)
from .laplacian import (
    BearingLaplacian,
    LocalizabilityResult,
    bearing_laplacian,
    check_localizable,
    target_follower_positions,
)
from .maneuver import ManeuverCommand, combined_command, scale
from .rigidity import RigidityReport, rigidity_report

logger = logging.getLogger(__name__)

DEFAULT_DT = 1e-3
DEFAULT_GAINS = Gains(k_p=1.0, k_i=0.5)

# Followers start this fraction of the formation scale away from target
# when no initial configuration is given.
PERTURBATION_FRACTION = 0.1

# Commanded shrinking may not take the target scale below this.
SCALE_FLOOR = 1e-3

# Slack when comparing schedule boundary times.
TIME_TOL = 1e-9


@dataclass(frozen=True)
class Segment:
    """One piece of the leader schedule, active on [t_start, t_end)."""

    t_start: float
    t_end: float
    v_c: np.ndarray
    scale_rate: float = 0.0

    def __post_init__(self) -> None:
        v = np.array(self.v_c, dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("segment velocity contains non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "v_c", v)
        object.__setattr__(self, "t_start", float(self.t_start))
        object.__setattr__(self, "t_end", float(self.t_end))
        object.__setattr__(self, "scale_rate", float(self.scale_rate))
        if not self.t_end > self.t_start:
            raise ValueError(
                f"segment must end after it starts, got [{self.t_start}, {self.t_end}]"
            )


@dataclass(frozen=True)
class Scenario:
    """Everything needed to reproduce one simulation run."""

    graph: FormationGraph
    reference_config: Configuration
    schedule: tuple[Segment, ...]
    duration: float
    gains: Gains = DEFAULT_GAINS
    initial_config: Configuration | None = None
    dt: float = DEFAULT_DT
    seed: int = 0

    def __post_init__(self) -> None:
        ensure_compatible(self.graph, self.reference_config)
        if self.initial_config is not None:
            ensure_compatible(self.graph, self.initial_config)
        if not self.duration > 0.0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        if not 0.0 < self.dt:
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "schedule", tuple(self.schedule))
        if not self.schedule:
            raise ScheduleGap("schedule is empty")
        for seg in self.schedule:
            if seg.v_c.size != self.graph.d:
                raise DimensionMismatch(
                    f"segment velocity has length {seg.v_c.size}, "
                    f"expected {self.graph.d}"
                )


@dataclass(frozen=True)
class ResolvedSegment:
    """A schedule segment bound to the target formation it steers."""

    t_start: float
    t_end: float
    command: ManeuverCommand
    leader_velocity: np.ndarray
    target_start: Configuration
    predicted_scale_rate: float


@dataclass(frozen=True)
class SimContext:
    """Validated scenario with everything precomputed for stepping."""

    scenario: Scenario
    bearing_spec: BearingSpec
    laplacian: BearingLaplacian
    rigidity: RigidityReport
    localizability: LocalizabilityResult
    segments: tuple[ResolvedSegment, ...]
    initial_positions: np.ndarray = field(repr=False)

    @property
    def graph(self) -> FormationGraph:
        return self.scenario.graph


@dataclass(frozen=True)
class Trajectory:
    """Time series of one run.  All arrays share the leading time axis."""

    d: int
    n: int
    n_leaders: int
    times: np.ndarray
    positions: np.ndarray
    xi: np.ndarray
    bearing_error: np.ndarray
    tracking_error: np.ndarray
    centroid: np.ndarray
    scale: np.ndarray

    def __post_init__(self) -> None:
        for name in (
            "times",
            "positions",
            "xi",
            "bearing_error",
            "tracking_error",
            "centroid",
            "scale",
        ):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def configuration(self, k: int) -> Configuration:
        return Configuration.from_stacked(self.positions[k], self.d)


@dataclass(frozen=True)
class ExponentialFit:
    """Least-squares line through log(values): values ~ exp(intercept + rate*t)."""

    rate: float
    intercept: float
    r_squared: float

    @property
    def reliable(self) -> bool:
        return self.r_squared >= 0.9


def _validate_schedule(scenario: Scenario) -> None:
    segments = scenario.schedule
    cursor = 0.0
    for seg in segments:
        if seg.t_start > cursor + TIME_TOL:
            raise ScheduleGap(
                f"schedule leaves [{cursor}, {seg.t_start}] uncovered"
            )
        if seg.t_start < cursor - TIME_TOL:
            raise ScheduleGap(
                f"segments overlap near t={seg.t_start} (previous ends at {cursor})"
            )
        cursor = seg.t_end
    if cursor < scenario.duration - TIME_TOL:
        raise ScheduleGap(
            f"schedule ends at {cursor} but the run lasts {scenario.duration}"
        )


def _target_configuration(
    lap: BearingLaplacian, leader_stack: np.ndarray, d: int
) -> Configuration:
    followers = target_follower_positions(lap, leader_stack)
    pts = np.concatenate([leader_stack, followers]).reshape(-1, d)
    return Configuration(pts)


def assemble(scenario: Scenario, force: bool = False) -> SimContext:
    """Validate a scenario and precompute everything a run needs.

    Raises NotRigid or NotLocalizable when the reference formation fails the
    structural requirements, and ScheduleGap when the schedule does not tile
    [0, duration].  ``force`` downgrades the first two to warnings for
    deliberately broken experiments.
    """
    graph = scenario.graph
    ref = scenario.reference_config
    spec = BearingSpec.from_configuration(graph, ref)
    rigidity = rigidity_report(graph, ref)
    lap = bearing_laplacian(graph, spec)
    localizability = check_localizable(lap)

    if not rigidity.is_infinitesimally_bearing_rigid:
        message = (
            f"reference formation is not infinitesimally bearing rigid "
            f"(rank {rigidity.rank}, need {rigidity.required_rank})"
        )
        if not force:
            raise NotRigid(message)
        logger.warning("%s; continuing because force=True", message)
    if not localizability.localizable:
        message = (
            f"follower block is not positive definite "
            f"(min eigenvalue {localizability.min_eigenvalue:.3e})"
        )
        if not force:
            raise NotLocalizable(message)
        logger.warning("%s; continuing because force=True", message)

    _validate_schedule(scenario)

    d = graph.d
    n_l = graph.n_leaders
    if scenario.initial_config is not None:
        leader_stack = scenario.initial_config.points[:n_l].reshape(-1).copy()
    else:
        leader_stack = ref.points[:n_l].reshape(-1).copy()

    can_solve = localizability.localizable
    segments = []
    for seg in scenario.schedule:
        if can_solve:
            target = _target_configuration(lap, leader_stack, d)
        else:
            # Forced run on a non-localizable formation: fall back
            # to the reference shape so commands stay well defined.
            target = ref
        command = combined_command(seg.v_c, target, n_l, seg.scale_rate)
        velocity = command.leader_velocity_stack()
        rate = command.expected_scale_rate
        span = max(0.0, min(seg.t_end, scenario.duration) - max(seg.t_start, 0.0))
        s_start = scale(target)
        s_end = s_start + rate * span
        if min(s_start, s_end) < SCALE_FLOOR:
            raise ValueError(
                f"segment [{seg.t_start}, {seg.t_end}] would shrink the target "
                f"scale to {min(s_start, s_end):.3e}, below the floor {SCALE_FLOOR}"
            )
        segments.append(
            ResolvedSegment(
                t_start=seg.t_start,
                t_end=seg.t_end,
                command=command,
                leader_velocity=velocity,
                target_start=target,
                predicted_scale_rate=rate,
            )
        )
        leader_stack = leader_stack + velocity * span

    target0 = segments[0].target_start
    if scenario.initial_config is not None:
        initial = scenario.initial_config.stacked.copy()
    else:
        rng = np.random.default_rng(scenario.seed)
        amplitude = PERTURBATION_FRACTION * scale(target0)
        points = target0.points.copy()
        points[n_l:] += rng.uniform(
            -amplitude, amplitude, size=(graph.n_followers, d)
        )
        initial = points.reshape(-1)

    logger.info(
        "assembled scenario: n=%d d=%d m=%d rank=%d/%d lambda_min=%.3e",
        graph.n,
        d,
        graph.m,
        rigidity.rank,
        rigidity.required_rank,
        localizability.min_eigenvalue,
    )
    return SimContext(
        scenario=scenario,
        bearing_spec=spec,
        laplacian=lap,
        rigidity=rigidity,
        localizability=localizability,
        segments=tuple(segments),
        initial_positions=initial,
    )


def _segment_rhs(lap: BearingLaplacian, gains: Gains, leader_velocity: np.ndarray):
    L_ff = lap.L_ff
    L_fl = lap.L_fl
    split = lap.d * lap.n_leaders
    k_p, k_i = gains.k_p, gains.k_i

    def rhs(p: np.ndarray, xi: np.ndarray):
        drive = L_ff @ p[split:] + L_fl @ p[:split]
        dp = np.concatenate([leader_velocity, -k_p * drive - k_i * xi])
        return dp, drive

    return rhs


def _rk4(rhs, p: np.ndarray, xi: np.ndarray, h: float):
    k1p, k1x = rhs(p, xi)
    k2p, k2x = rhs(p + 0.5 * h * k1p, xi + 0.5 * h * k1x)
    k3p, k3x = rhs(p + 0.5 * h * k2p, xi + 0.5 * h * k2x)
    k4p, k4x = rhs(p + h * k3p, xi + h * k3x)
    sixth = h / 6.0
    return (
        p + sixth * (k1p + 2.0 * (k2p + k3p) + k4p),
        xi + sixth * (k1x + 2.0 * (k2x + k3x) + k4x),
    )


def _active_segment(ctx: SimContext, t: float) -> ResolvedSegment:
    starts = [seg.t_start for seg in ctx.segments]
    idx = bisect_right(starts, t + TIME_TOL) - 1
    if idx < 0 or t > ctx.segments[-1].t_end + TIME_TOL:
        raise ValueError(f"t={t} lies outside the schedule")
    return ctx.segments[idx]


def step(
    ctx: SimContext, state: tuple[np.ndarray, np.ndarray], t: float, dt: float
) -> tuple[np.ndarray, np.ndarray]:
    """One Runge-Kutta step from time t.  ``state`` is (positions, xi), stacked.

    Segments are half-open on the right, so a step starting exactly at a
    boundary uses the incoming segment's command.
    """
    p = np.asarray(state[0], dtype=float).reshape(-1)
    xi = np.asarray(state[1], dtype=float).reshape(-1)
    seg = _active_segment(ctx, t)
    rhs = _segment_rhs(ctx.laplacian, ctx.scenario.gains, seg.leader_velocity)
    return _rk4(rhs, p, xi, dt)


def run(ctx: SimContext) -> Trajectory:
    """Integrate the whole schedule and record metrics at every step.

    The step size is the scenario dt, shortened at each segment boundary so
    the integrator lands on it exactly.  Metrics are sampled at t=0 and after
    every step: total bearing mismatch, distance of the followers from their
    current targets, and the formation's centroid and scale.
    """
    scenario = ctx.scenario
    graph = scenario.graph
    lap = ctx.laplacian
    spec_vectors = ctx.bearing_spec.vectors
    d, n = graph.d, graph.n
    split = d * graph.n_leaders
    dt = scenario.dt
    can_track = ctx.localizability.localizable

    p = ctx.initial_positions.copy()
    xi = np.zeros(d * graph.n_followers)

    times = [0.0]
    positions = [p.copy()]
    xis = [xi.copy()]
    bearing_errors = []
    tracking_errors = []
    centroids = []
    scales = []

    def record_metrics(p_now: np.ndarray) -> None:
        pts = p_now.reshape(n, d)
        cfg = Configuration(pts)
        stacked_bearings = bearing_function(graph, cfg).reshape(graph.m, d)
        bearing_errors.append(
            float(np.linalg.norm(stacked_bearings - spec_vectors, axis=1).sum())
        )
        if graph.n_followers == 0:
            tracking_errors.append(0.0)
        elif can_track:
            target_f = target_follower_positions(lap, p_now[:split])
            tracking_errors.append(float(np.linalg.norm(p_now[split:] - target_f)))
        else:
            # Forced run without a unique target: the metric is undefined.
            tracking_errors.append(float("nan"))
        mean = pts.mean(axis=0)
        centroids.append(mean)
        offsets = pts - mean
        scales.append(float(np.sqrt(np.mean(np.sum(offsets * offsets, axis=1)))))

    record_metrics(p)

    for seg in ctx.segments:
        t0 = max(seg.t_start, 0.0)
        t1 = min(seg.t_end, scenario.duration)
        if t1 <= t0 + TIME_TOL:
            continue
        rhs = _segment_rhs(lap, scenario.gains, seg.leader_velocity)
        t = t0
        while t < t1 - TIME_TOL:
            h = min(dt, t1 - t)
            p, xi = _rk4(rhs, p, xi, h)
            t = t + h
            if t1 - t < TIME_TOL * max(1.0, dt):
                t = t1
            times.append(t)
            positions.append(p.copy())
            xis.append(xi.copy())
            record_metrics(p)
        if t1 >= scenario.duration - TIME_TOL:
            break

    return Trajectory(
        d=d,
        n=n,
        n_leaders=graph.n_leaders,
        times=np.array(times),
        positions=np.array(positions),
        xi=np.array(xis),
        bearing_error=np.array(bearing_errors),
        tracking_error=np.array(tracking_errors),
        centroid=np.array(centroids),
        scale=np.array(scales),
    )


def exponential_fit(times, values) -> ExponentialFit:
    """Fit values ~ exp(intercept + rate*t) by least squares on the logs.

    The caller chooses the window; every value in it must be positive.  A
    series that is not actually decaying shows up as a poor r_squared, not
    as an error.
    """
    t = np.asarray(times, dtype=float).reshape(-1)
    v = np.asarray(values, dtype=float).reshape(-1)
    if t.size != v.size:
        raise DimensionMismatch(
            f"times and values have different lengths ({t.size} vs {v.size})"
        )
    if t.size < 3:
        raise WindowTooShort(f"need at least 3 samples to fit, got {t.size}")
    if np.any(v <= 0.0):
        raise ValueError("values must be positive over the fit window")
    logs = np.log(v)
    rate, intercept = np.polyfit(t, logs, 1)
    predicted = intercept + rate * t
    ss_res = float(np.sum((logs - predicted) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    if ss_tot == 0.0:
        r_squared = 1.0 if ss_res == 0.0 else 0.0
    else:
        r_squared = 1.0 - ss_res / ss_tot
    return ExponentialFit(rate=float(rate), intercept=float(intercept), r_squared=r_squared)
