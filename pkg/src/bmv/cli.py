"""Command-line front end: scenario files in, result bundles out.

Scenario files are JSON; agents carry arbitrary string ids which are mapped
to internal indices (leaders first, file order preserved within each role).
``run`` writes a result bundle: trajectory.csv with full-precision values and
summary.json with the structural checks, the closed-loop spectrum, and final
metrics.  Exit codes: 0 success, 1 a validation check failed, 2 the input
could not be read or parsed.

Set BMV_LOG=DEBUG (or INFO, ...) for diagnostics on stderr.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import logging
import math
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .controller import (
    Gains,
    effective_closed_loop_matrix,
    verify_hurwitz,
)
from .errors import (
    DegenerateVector,
    DimensionMismatch,
    NotLocalizable,
    NotRigid,
    ParseError,
    ScheduleGap,
    WindowTooShort,
)
from .formation import Configuration, FormationGraph
from .laplacian import bearing_laplacian, check_localizable
from .maneuver import scale
from .rigidity import rigidity_report
from .sim import (
    DEFAULT_DT,
    DEFAULT_GAINS,
    Scenario,
    Segment,
    SimContext,
    Trajectory,
    assemble,
    exponential_fit,
    run,
)

logger = logging.getLogger(__name__)

AXES = "xyz"

# Errors from simulation assembly that mean "the scenario failed validation".
VALIDATION_ERRORS = (NotRigid, NotLocalizable, ScheduleGap, DegenerateVector,
                     DimensionMismatch, ValueError)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INPUT = 2


@dataclasses.dataclass(frozen=True)
class LoadedScenario:
    """A scenario plus the agent labels it was written with."""

    scenario: Scenario
    labels: tuple[str, ...]


# ---------------------------------------------------------------------------
# parsing

def _fail(origin: str, field: str, problem: str) -> ParseError:
    return ParseError(f"{origin}: {field}: {problem}")


def _as_number(value, origin: str, field: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _fail(origin, field, f"expected a number, got {value!r}")
    return float(value)


def _as_vector(value, d: int, origin: str, field: str) -> list[float]:
    if not isinstance(value, list) or len(value) != d:
        raise _fail(origin, field, f"expected a list of {d} numbers, got {value!r}")
    return [_as_number(x, origin, f"{field}[{k}]") for k, x in enumerate(value)]


def parse_scenario(doc, origin: str = "scenario") -> LoadedScenario:
    """Build a Scenario from a decoded JSON document.

    Raises ParseError with a field path on any malformed input.
    """
    if not isinstance(doc, dict):
        raise _fail(origin, "document", "expected a JSON object at top level")
    known = {
        "dimension", "agents", "reference_positions", "edges", "gains",
        "schedule", "dt", "duration", "seed",
    }
    for key in doc:
        if key not in known:
            raise _fail(origin, key, "unknown field")

    if "dimension" not in doc:
        raise _fail(origin, "dimension", "missing")
    d = doc["dimension"]
    if isinstance(d, bool) or not isinstance(d, int) or d < 2:
        raise _fail(origin, "dimension", f"expected an integer >= 2, got {d!r}")

    agents = doc.get("agents")
    if not isinstance(agents, list) or not agents:
        raise _fail(origin, "agents", "expected a non-empty list")
    leaders: list[tuple[str, list[float] | None]] = []
    followers: list[tuple[str, list[float] | None]] = []
    seen_ids: set[str] = set()
    for k, entry in enumerate(agents):
        where = f"agents[{k}]"
        if not isinstance(entry, dict):
            raise _fail(origin, where, f"expected an object, got {entry!r}")
        agent_id = entry.get("id")
        if not isinstance(agent_id, str) or not agent_id:
            raise _fail(origin, f"{where}.id", f"expected a non-empty string, got {agent_id!r}")
        if agent_id in seen_ids:
            raise _fail(origin, f"{where}.id", f"duplicate agent id {agent_id!r}")
        seen_ids.add(agent_id)
        role = entry.get("role")
        if role not in ("leader", "follower"):
            raise _fail(origin, f"{where}.role", f"expected 'leader' or 'follower', got {role!r}")
        initial = entry.get("initial")
        if initial is not None:
            initial = _as_vector(initial, d, origin, f"{where}.initial")
        extra = set(entry) - {"id", "role", "initial"}
        if extra:
            raise _fail(origin, f"{where}.{extra.pop()}", "unknown field")
        (leaders if role == "leader" else followers).append((agent_id, initial))
    if not leaders:
        raise _fail(origin, "agents", "at least one leader is required")
    ordered = leaders + followers
    labels = tuple(agent_id for agent_id, _ in ordered)
    index_of = {agent_id: k for k, (agent_id, _) in enumerate(ordered)}

    refs = doc.get("reference_positions")
    if not isinstance(refs, dict):
        raise _fail(origin, "reference_positions", "expected an object keyed by agent id")
    for agent_id in refs:
        if agent_id not in index_of:
            raise _fail(origin, f"reference_positions.{agent_id}", "unknown agent id")
    reference_rows = []
    for agent_id in labels:
        if agent_id not in refs:
            raise _fail(origin, f"reference_positions.{agent_id}", "missing")
        reference_rows.append(
            _as_vector(refs[agent_id], d, origin, f"reference_positions.{agent_id}")
        )

    raw_edges = doc.get("edges")
    if not isinstance(raw_edges, list) or not raw_edges:
        raise _fail(origin, "edges", "expected a non-empty list of id pairs")
    edges = []
    for k, pair in enumerate(raw_edges):
        where = f"edges[{k}]"
        if not isinstance(pair, list) or len(pair) != 2:
            raise _fail(origin, where, f"expected a pair of agent ids, got {pair!r}")
        try:
            edges.append((index_of[pair[0]], index_of[pair[1]]))
        except (KeyError, TypeError):
            raise _fail(origin, where, f"unknown agent id in {pair!r}") from None

    gains = DEFAULT_GAINS
    if "gains" in doc:
        raw_gains = doc["gains"]
        if not isinstance(raw_gains, dict) or set(raw_gains) - {"kp", "ki"}:
            raise _fail(origin, "gains", f"expected an object with kp/ki, got {raw_gains!r}")
        kp = _as_number(raw_gains.get("kp", DEFAULT_GAINS.k_p), origin, "gains.kp")
        ki = _as_number(raw_gains.get("ki", DEFAULT_GAINS.k_i), origin, "gains.ki")
        try:
            gains = Gains(k_p=kp, k_i=ki)
        except ValueError as exc:
            raise _fail(origin, "gains", str(exc)) from None

    raw_schedule = doc.get("schedule")
    if not isinstance(raw_schedule, list) or not raw_schedule:
        raise _fail(origin, "schedule", "expected a non-empty list of segments")
    segments = []
    for k, entry in enumerate(raw_schedule):
        where = f"schedule[{k}]"
        if not isinstance(entry, dict):
            raise _fail(origin, where, f"expected an object, got {entry!r}")
        extra = set(entry) - {"t0", "t1", "vc", "scale_rate"}
        if extra:
            raise _fail(origin, f"{where}.{extra.pop()}", "unknown field")
        if "t0" not in entry or "t1" not in entry:
            raise _fail(origin, where, "t0 and t1 are required")
        t0 = _as_number(entry["t0"], origin, f"{where}.t0")
        t1 = _as_number(entry["t1"], origin, f"{where}.t1")
        vc = entry.get("vc", [0.0] * d)
        vc = _as_vector(vc, d, origin, f"{where}.vc")
        rate = _as_number(entry.get("scale_rate", 0.0), origin, f"{where}.scale_rate")
        try:
            segments.append(Segment(t_start=t0, t_end=t1, v_c=vc, scale_rate=rate))
        except ValueError as exc:
            raise _fail(origin, where, str(exc)) from None

    if "duration" not in doc:
        raise _fail(origin, "duration", "missing")
    duration = _as_number(doc["duration"], origin, "duration")
    dt = _as_number(doc.get("dt", DEFAULT_DT), origin, "dt")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise _fail(origin, "seed", f"expected an integer, got {seed!r}")

    with_initial = [entry for entry in ordered if entry[1] is not None]
    if with_initial and len(with_initial) != len(ordered):
        raise _fail(
            origin, "agents",
            "either every agent specifies 'initial' or none does",
        )
    initial_config = None
    if with_initial:
        initial_config = Configuration(np.array([pos for _, pos in ordered]))

    try:
        graph = FormationGraph(
            n=len(ordered), d=d, edges=tuple(edges), n_leaders=len(leaders)
        )
        scenario = Scenario(
            graph=graph,
            reference_config=Configuration(np.array(reference_rows)),
            schedule=tuple(segments),
            duration=duration,
            gains=gains,
            initial_config=initial_config,
            dt=dt,
            seed=seed,
        )
    except ScheduleGap:
        raise
    except (ValueError, DimensionMismatch) as exc:
        raise _fail(origin, "scenario", str(exc)) from None
    return LoadedScenario(scenario=scenario, labels=labels)


def load_scenario(path) -> LoadedScenario:
    """Read and parse a scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: cannot read: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    return parse_scenario(doc, origin=str(path))


def scenario_document(loaded: LoadedScenario) -> dict:
    """Serialize back to the JSON document shape; inverse of parse_scenario."""
    scenario = loaded.scenario
    labels = loaded.labels
    n_l = scenario.graph.n_leaders
    agents = []
    for k, label in enumerate(labels):
        entry: dict = {"id": label, "role": "leader" if k < n_l else "follower"}
        if scenario.initial_config is not None:
            entry["initial"] = list(scenario.initial_config.points[k])
        agents.append(entry)
    return {
        "dimension": scenario.graph.d,
        "agents": agents,
        "reference_positions": {
            label: list(scenario.reference_config.points[k])
            for k, label in enumerate(labels)
        },
        "edges": [[labels[i], labels[j]] for i, j in scenario.graph.edges],
        "gains": {"kp": scenario.gains.k_p, "ki": scenario.gains.k_i},
        "schedule": [
            {
                "t0": seg.t_start,
                "t1": seg.t_end,
                "vc": list(seg.v_c),
                "scale_rate": seg.scale_rate,
            }
            for seg in scenario.schedule
        ],
        "dt": scenario.dt,
        "duration": scenario.duration,
        "seed": scenario.seed,
    }


def bundled_scenario_path(name: str) -> Path:
    """Filesystem path of a scenario shipped with the package."""
    if not name.endswith(".json"):
        name = name + ".json"
    candidate = resources.files("bmv") / "scenarios" / name
    return Path(str(candidate))


# ---------------------------------------------------------------------------
# result bundle

def _finite(value: float) -> float | None:
    value = float(value)
    return value if math.isfinite(value) else None


def write_trajectory_csv(
    path: Path, traj: Trajectory, labels: tuple[str, ...], decimate: int = 1
) -> None:
    """Full-precision CSV; repr of each float guarantees exact round-trips."""
    axes = AXES[: traj.d]
    header = ["t"]
    header += [f"{label}_{axis}" for label in labels for axis in axes]
    header += ["bearing_error", "tracking_error"]
    header += [f"centroid_{axis}" for axis in axes]
    header += ["scale"]
    lines = [",".join(header)]
    for k in range(0, traj.times.size, decimate):
        row = [repr(float(traj.times[k]))]
        row += [repr(float(v)) for v in traj.positions[k]]
        row.append(repr(float(traj.bearing_error[k])))
        row.append(repr(float(traj.tracking_error[k])))
        row += [repr(float(v)) for v in traj.centroid[k]]
        row.append(repr(float(traj.scale[k])))
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def write_xi_csv(
    path: Path, traj: Trajectory, labels: tuple[str, ...], decimate: int = 1
) -> None:
    axes = AXES[: traj.d]
    header = ["t"] + [
        f"{label}_{axis}" for label in labels[traj.n_leaders :] for axis in axes
    ]
    lines = [",".join(header)]
    for k in range(0, traj.times.size, decimate):
        row = [repr(float(traj.times[k]))]
        row += [repr(float(v)) for v in traj.xi[k]]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def build_summary(ctx: SimContext, traj: Trajectory) -> dict:
    scenario = ctx.scenario
    graph = scenario.graph
    report = verify_hurwitz(
        effective_closed_loop_matrix(ctx.laplacian.L_ff, scenario.gains)
    )
    horizon = None
    if report.max_real_part < 0.0 and math.isfinite(report.max_real_part):
        horizon = 12.0 / abs(report.max_real_part)

    fit = None
    last = ctx.segments[-1]
    window = (traj.times >= max(last.t_start, 0.0)) & (traj.tracking_error > 1e-13)
    if int(window.sum()) >= 3:
        try:
            fitted = exponential_fit(traj.times[window], traj.tracking_error[window])
            fit = {"rate": fitted.rate, "r_squared": fitted.r_squared}
        except (WindowTooShort, ValueError):
            fit = None

    return {
        "agents": {
            "n": graph.n,
            "d": graph.d,
            "leaders": graph.n_leaders,
            "followers": graph.n_followers,
            "edges": graph.m,
        },
        "gains": {"kp": scenario.gains.k_p, "ki": scenario.gains.k_i},
        "integration": {
            "dt": scenario.dt,
            "duration": scenario.duration,
            "seed": scenario.seed,
            "samples": int(traj.times.size),
        },
        "rigidity": {
            "rank": ctx.rigidity.rank,
            "required_rank": ctx.rigidity.required_rank,
            "rigid": ctx.rigidity.is_infinitesimally_bearing_rigid,
            "null_space_dim": ctx.rigidity.null_space_dim,
            "singular_values": [float(s) for s in ctx.rigidity.singular_values],
        },
        "localizability": {
            "localizable": ctx.localizability.localizable,
            "lambda_min_ff": _finite(ctx.localizability.min_eigenvalue),
        },
        "spectrum": {
            "eigenvalues": [[float(e.real), float(e.imag)] for e in report.eigenvalues],
            "max_real_part": _finite(report.max_real_part),
            "is_hurwitz": report.is_hurwitz,
            "convergence_horizon": horizon,
        },
        "final": {
            "time": float(traj.times[-1]),
            "bearing_error": _finite(traj.bearing_error[-1]),
            "tracking_error": _finite(traj.tracking_error[-1]),
            "centroid": [float(v) for v in traj.centroid[-1]],
            "scale": float(traj.scale[-1]),
        },
        "decay_fit": fit,
        "segments": [
            {
                "t_start": seg.t_start,
                "t_end": seg.t_end,
                "v_c": [float(v) for v in seg.command.v_c],
                "predicted_scale_rate": seg.predicted_scale_rate,
                "target_scale_at_start": scale(seg.target_start),
            }
            for seg in ctx.segments
        ],
    }


def write_bundle(
    outdir: Path,
    ctx: SimContext,
    traj: Trajectory,
    labels: tuple[str, ...],
    decimate: int = 1,
    dump_xi: bool = False,
) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(outdir / "trajectory.csv", traj, labels, decimate)
    summary = build_summary(ctx, traj)
    (outdir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )
    if dump_xi:
        write_xi_csv(outdir / "xi.csv", traj, labels, decimate)


# ---------------------------------------------------------------------------
# commands

def _apply_overrides(loaded: LoadedScenario, args) -> LoadedScenario:
    scenario = loaded.scenario
    updates = {}
    if getattr(args, "dt", None) is not None:
        updates["dt"] = args.dt
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if updates:
        scenario = dataclasses.replace(scenario, **updates)
    return LoadedScenario(scenario=scenario, labels=loaded.labels)


def cmd_check(args) -> int:
    loaded = load_scenario(args.scenario)
    scenario = loaded.scenario
    report = rigidity_report(scenario.graph, scenario.reference_config)
    from .formation import BearingSpec

    spec = BearingSpec.from_configuration(scenario.graph, scenario.reference_config)
    loc = check_localizable(bearing_laplacian(scenario.graph, spec))
    lam = loc.min_eigenvalue
    print(f"rank            = {report.rank}")
    print(f"required_rank   = {report.required_rank}")
    print(f"rigid           = {'yes' if report.is_infinitesimally_bearing_rigid else 'no'}")
    print(f"lambda_min_ff   = {lam:.6e}" if math.isfinite(lam) else "lambda_min_ff   = inf")
    print(f"localizable     = {'yes' if loc.localizable else 'no'}")
    rigid_word = "RIGID" if report.is_infinitesimally_bearing_rigid else "NOT RIGID"
    loc_word = "LOCALIZABLE" if loc.localizable else "NOT LOCALIZABLE"
    print(f"verdict: {rigid_word}, {loc_word}")
    ok = report.is_infinitesimally_bearing_rigid and loc.localizable
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_run(args) -> int:
    loaded = _apply_overrides(load_scenario(args.scenario), args)
    ctx = assemble(loaded.scenario, force=args.force)
    traj = run(ctx)
    outdir = Path(args.out) if args.out else Path(Path(args.scenario).stem + "_out")
    write_bundle(
        outdir, ctx, traj, loaded.labels,
        decimate=args.decimate, dump_xi=args.dump_xi,
    )
    print(f"bearing_error  = {traj.bearing_error[-1]:.6e}")
    print(f"tracking_error = {traj.tracking_error[-1]:.6e}")
    print(f"wrote {outdir / 'trajectory.csv'} and {outdir / 'summary.json'}")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    loaded = _apply_overrides(load_scenario(args.scenario), args)
    ctx = assemble(loaded.scenario, force=args.force)
    report = verify_hurwitz(
        effective_closed_loop_matrix(ctx.laplacian.L_ff, ctx.scenario.gains)
    )
    horizon = None
    if report.max_real_part < 0.0 and math.isfinite(report.max_real_part):
        horizon = 12.0 / abs(report.max_real_part)
    doc = {
        "eigenvalues": [[float(e.real), float(e.imag)] for e in report.eigenvalues],
        "max_real_part": _finite(report.max_real_part),
        "is_hurwitz": report.is_hurwitz,
        "convergence_horizon": horizon,
    }
    print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


def _batch_one(task) -> tuple[str, int, str]:
    """Run one scenario in a worker; returns (name, exit code, message)."""
    path, outdir, dt, seed, decimate, force = task
    try:
        loaded = load_scenario(path)
        scenario = loaded.scenario
        updates = {}
        if dt is not None:
            updates["dt"] = dt
        if seed is not None:
            updates["seed"] = seed
        if updates:
            scenario = dataclasses.replace(scenario, **updates)
        ctx = assemble(scenario, force=force)
        traj = run(ctx)
        write_bundle(Path(outdir), ctx, traj, loaded.labels, decimate=decimate)
        return (
            str(path),
            EXIT_OK,
            f"bearing_error={traj.bearing_error[-1]:.3e}",
        )
    except ParseError as exc:
        return str(path), EXIT_INPUT, str(exc)
    except VALIDATION_ERRORS as exc:
        return str(path), EXIT_VALIDATION, str(exc)


def cmd_batch(args) -> int:
    out_root = Path(args.out)
    tasks = []
    names = set()
    for raw in args.scenarios:
        stem = Path(raw).stem
        name = stem
        k = 1
        while name in names:
            k += 1
            name = f"{stem}_{k}"
        names.add(name)
        tasks.append(
            (raw, str(out_root / name), args.dt, args.seed, args.decimate, args.force)
        )
    if args.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_batch_one, tasks))
    else:
        results = [_batch_one(task) for task in tasks]
    worst = EXIT_OK
    for name, code, message in results:
        status = "ok" if code == EXIT_OK else "FAILED"
        print(f"{status:6s} {name}: {message}")
        worst = max(worst, code)
    return worst


# ---------------------------------------------------------------------------
# wiring

def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bmv",
        description="Bearing-constrained formation maneuver simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--dt", type=float, default=None, help="override the scenario step size")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--force", action="store_true",
                       help="run even if rigidity or localizability checks fail")

    p_check = sub.add_parser("check", help="validate a scenario's formation structure")
    p_check.add_argument("scenario", help="scenario JSON file")
    p_check.set_defaults(func=cmd_check)

    p_run = sub.add_parser("run", help="simulate a scenario and write a result bundle")
    p_run.add_argument("scenario", help="scenario JSON file")
    p_run.add_argument("--out", default=None, help="output directory (default: <scenario>_out)")
    p_run.add_argument("--decimate", type=_positive_int, default=1,
                       help="write every Nth sample to the CSV")
    p_run.add_argument("--dump-xi", action="store_true",
                       help="also write the integral states to xi.csv")
    add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_spec = sub.add_parser("spectrum", help="print the closed-loop spectrum as JSON")
    p_spec.add_argument("scenario", help="scenario JSON file")
    add_common(p_spec)
    p_spec.set_defaults(func=cmd_spectrum)

    p_batch = sub.add_parser("batch", help="run several scenarios, one worker each")
    p_batch.add_argument("scenarios", nargs="+", help="scenario JSON files")
    p_batch.add_argument("--out", default="bmv_batch_out", help="output root directory")
    p_batch.add_argument("--workers", type=_positive_int, default=1, help="parallel workers")
    p_batch.add_argument("--decimate", type=_positive_int, default=1,
                         help="write every Nth sample to the CSVs")
    add_common(p_batch)
    p_batch.set_defaults(func=cmd_batch)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("BMV_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def script_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    script_main()
