"""Bearing rigidity analysis.

The rigidity matrix is the Jacobian of the stacked bearing map with respect
to the stacked positions.  A formation is infinitesimally bearing rigid when
that Jacobian's null space contains nothing beyond the always-present trivial
motions: rigid translations and uniform scaling about the centroid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVector
from .formation import Configuration, FormationGraph, ensure_compatible

# Relative singular-value cutoff for the numerical rank.
TAU_RANK = 1e-9


@dataclass(frozen=True)
class RigidityReport:
    rank: int
    required_rank: int
    is_infinitesimally_bearing_rigid: bool
    null_space_dim: int
    singular_values: np.ndarray

    def __post_init__(self) -> None:
        sv = np.array(self.singular_values, dtype=float)
        sv.setflags(write=False)
        object.__setattr__(self, "singular_values", sv)


def bearing_rigidity_matrix(graph: FormationGraph, config: Configuration) -> np.ndarray:
    """Jacobian of the stacked bearing map, shape (d*m, d*n).

    Row block k carries P_g / |e_k| for edge k = (i, j): negated in column
    block i, as-is in column block j, zero elsewhere.
    """
    ensure_compatible(graph, config)
    d, n, m = graph.d, graph.n, graph.m
    R = np.zeros((d * m, d * n))
    eye = np.eye(d)
    for k, (i, j) in enumerate(graph.edges):
        diff = config.points[j] - config.points[i]
        dist = np.linalg.norm(diff)
        if dist <= 1e-12:
            raise DegenerateVector(
                f"agents {i} and {j} are collocated (edge {k})"
            )
        g = diff / dist
        block = (eye - np.outer(g, g)) / dist
        rows = slice(d * k, d * (k + 1))
        R[rows, d * i : d * (i + 1)] = -block
        R[rows, d * j : d * (j + 1)] = block
    return R


def rigidity_report(
    graph: FormationGraph, config: Configuration, rank_tol: float = TAU_RANK
) -> RigidityReport:
    """Numerical rank test of the rigidity matrix.

    Singular values below ``rank_tol`` times the largest do not count toward
    the rank.  Rigidity requires rank d*n - d - 1.
    """
    R = bearing_rigidity_matrix(graph, config)
    if R.size:
        sv = np.linalg.svd(R, compute_uv=False)
    else:
        sv = np.zeros(0)
    if sv.size and sv[0] > 0.0:
        rank = int(np.sum(sv > rank_tol * sv[0]))
    else:
        rank = 0
    required = graph.d * graph.n - graph.d - 1
    return RigidityReport(
        rank=rank,
        required_rank=required,
        is_infinitesimally_bearing_rigid=(rank == required),
        null_space_dim=graph.d * graph.n - rank,
        singular_values=sv,
    )


def trivial_motion_basis(config: Configuration) -> np.ndarray:
    """Orthonormal-free basis of the always-present null directions.

    Rows 0..d-1 are the normalized coordinate translations; the last row is
    the normalized scaling direction p - 1_n (x) centroid.  Shape (d+1, d*n).
    """
    n, d = config.n, config.d
    basis = np.zeros((d + 1, d * n))
    for axis in range(d):
        basis[axis, axis::d] = 1.0 / np.sqrt(n)
    offsets = config.points - config.points.mean(axis=0)
    radial = offsets.reshape(-1)
    norm = np.linalg.norm(radial)
    if norm <= 1e-12:
        raise DegenerateVector("all agents sit at the centroid")
    basis[d] = radial / norm
    return basis
