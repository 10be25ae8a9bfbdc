"""Distributed PI control law for the followers.

Each follower steers against the projection of its relative positions onto
the complements of the desired bearings, plus an integral term that absorbs
constant leader velocities.  The same law is available agent by agent (what
a robot would run) and in stacked matrix form (what the analysis uses); the
two are algebraically identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .errors import (
    DimensionMismatch,
    EigenSolveFailure,
    UnknownNeighbor,
)
from .formation import (
    BearingSpec,
    Configuration,
    FormationGraph,
    desired_bearing,
    ensure_aligned,
)
from .laplacian import BearingLaplacian

# An eigenvalue real part above -TAU_HURWITZ disqualifies the matrix.
TAU_HURWITZ = 1e-10


@dataclass(frozen=True)
class Gains:
    """Proportional and integral gains.

    k_p must be positive.  k_i may be zero, which degenerates to the
    proportional-only law (no disturbance rejection).
    """

    k_p: float
    k_i: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.k_p) and self.k_p > 0.0):
            raise ValueError(f"k_p must be positive, got {self.k_p!r}")
        if not (np.isfinite(self.k_i) and self.k_i >= 0.0):
            raise ValueError(f"k_i must be non-negative, got {self.k_i!r}")


@dataclass(frozen=True)
class ControllerState:
    """Stacked integral state of all followers, zero at start-up."""

    xi: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.xi, dtype=float).reshape(-1)
        arr.setflags(write=False)
        object.__setattr__(self, "xi", arr)

    @classmethod
    def zeros(cls, n_followers: int, d: int) -> "ControllerState":
        return cls(np.zeros(n_followers * d))


class HurwitzReport(NamedTuple):
    is_hurwitz: bool
    max_real_part: float
    eigenvalues: np.ndarray


def follower_velocity(
    graph: FormationGraph,
    spec: BearingSpec,
    index: int,
    rel_positions: Mapping[int, np.ndarray] | Iterable[tuple[int, np.ndarray]],
    xi_i,
    gains: Gains,
) -> tuple[np.ndarray, np.ndarray]:
    """Control law of one follower from purely local data.

    ``rel_positions`` maps each neighbor j to p_i - p_j.  It must cover the
    follower's neighbor set exactly.  Returns the commanded velocity and the
    integral-state rate, both d-vectors.
    """
    ensure_aligned(graph, spec)
    if graph.is_leader(index) or not 0 <= index < graph.n:
        raise ValueError(f"agent {index} is not a follower")
    rel = dict(rel_positions)
    expected = set(graph.neighbors(index))
    if set(rel) != expected:
        raise UnknownNeighbor(
            f"relative positions cover agents {sorted(rel)} "
            f"but agent {index} has neighbors {sorted(expected)}"
        )
    xi = np.asarray(xi_i, dtype=float).reshape(-1)
    if xi.size != graph.d:
        raise DimensionMismatch(f"xi_i must have length {graph.d}, got {xi.size}")
    drive = np.zeros(graph.d)
    for j, r in rel.items():
        r = np.asarray(r, dtype=float).reshape(-1)
        if r.size != graph.d:
            raise DimensionMismatch(
                f"relative position to agent {j} has length {r.size}, "
                f"expected {graph.d}"
            )
        g = desired_bearing(graph, spec, index, j)
        drive += r - g * (g @ r)
    return -gains.k_p * drive - gains.k_i * xi, drive


def stacked_dynamics(
    lap: BearingLaplacian,
    positions,
    xi,
    gains: Gains,
    leader_velocity,
) -> tuple[np.ndarray, np.ndarray]:
    """Right-hand side of the closed loop in stacked form.

    Leaders move at ``leader_velocity`` (stacked, length d*n_leaders);
    followers run the PI law.  Returns (dp, dxi) with dp covering all agents
    and dxi the followers.
    """
    p = positions.stacked if isinstance(positions, Configuration) else positions
    p = np.asarray(p, dtype=float).reshape(-1)
    x = xi.xi if isinstance(xi, ControllerState) else xi
    x = np.asarray(x, dtype=float).reshape(-1)
    v_l = np.asarray(leader_velocity, dtype=float).reshape(-1)
    split = lap.d * lap.n_leaders
    n_f_coords = lap.d * lap.n_followers
    if p.size != split + n_f_coords:
        raise DimensionMismatch(
            f"expected {split + n_f_coords} stacked coordinates, got {p.size}"
        )
    if x.size != n_f_coords:
        raise DimensionMismatch(
            f"expected {n_f_coords} integral coordinates, got {x.size}"
        )
    if v_l.size != split:
        raise DimensionMismatch(
            f"expected {split} stacked leader velocities, got {v_l.size}"
        )
    drive = lap.L_ff @ p[split:] + lap.L_fl @ p[:split]
    dp = np.concatenate([v_l, -gains.k_p * drive - gains.k_i * x])
    return dp, drive


def closed_loop_matrix(L_ff: np.ndarray, gains: Gains) -> np.ndarray:
    """Error-dynamics matrix [[-k_p*L_ff, -k_i*I], [L_ff, 0]].

    The identity block is sized like L_ff itself, i.e. one slot per stacked
    follower coordinate.
    """
    M = np.asarray(L_ff, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"L_ff must be square, got shape {M.shape}")
    k = M.shape[0]
    A = np.zeros((2 * k, 2 * k))
    A[:k, :k] = -gains.k_p * M
    A[:k, k:] = -gains.k_i * np.eye(k)
    A[k:, :k] = M
    return A


def effective_closed_loop_matrix(L_ff: np.ndarray, gains: Gains) -> np.ndarray:
    """Matrix whose spectrum governs convergence.

    With k_i = 0 the integral state decouples completely, so the meaningful
    part is just -k_p*L_ff; otherwise it is the full PI error matrix.
    """
    if gains.k_i == 0.0:
        return -gains.k_p * np.asarray(L_ff, dtype=float)
    return closed_loop_matrix(L_ff, gains)


def verify_hurwitz(A: np.ndarray) -> HurwitzReport:
    """Spectrum of A and whether every eigenvalue sits strictly left of 0."""
    M = np.asarray(A, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"matrix must be square, got shape {M.shape}")
    if M.shape[0] == 0:
        return HurwitzReport(True, -np.inf, np.zeros(0, dtype=complex))
    try:
        eigs = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise EigenSolveFailure(str(exc)) from exc
    order = np.lexsort((eigs.imag, eigs.real))
    eigs = eigs[order]
    max_real = float(eigs.real.max())
    return HurwitzReport(max_real < -TAU_HURWITZ, max_real, eigs)
