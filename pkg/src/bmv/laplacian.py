"""Matrix-weighted graph Laplacian built from desired bearings.

Each edge contributes the projector onto the orthogonal complement of its
desired bearing.  Configurations that satisfy every bearing constraint are
exactly the null space of this Laplacian, which is what makes the follower
block useful: when it is positive definite the followers' target positions
are the unique solution of a linear system driven by the leader positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DimensionMismatch, NotLocalizable
from .formation import BearingSpec, FormationGraph, ensure_aligned

# Relative eigenvalue cutoff for calling the follower block positive definite.
TAU_PD = 1e-9

# The follower solve must reproduce the right-hand side this well.
SOLVE_RESIDUAL_TOL = 1e-9


class LocalizabilityResult(NamedTuple):
    localizable: bool
    min_eigenvalue: float


@dataclass(frozen=True)
class BearingLaplacian:
    """Bearing Laplacian with its leader/follower partition.

    ``matrix`` is the full (d*n, d*n) array, agents ordered leaders first.
    The four named blocks are read-only views.
    """

    matrix: np.ndarray
    d: int
    n_leaders: int
    n_followers: int

    def __post_init__(self) -> None:
        mat = np.array(self.matrix, dtype=float)
        dn = self.d * (self.n_leaders + self.n_followers)
        if mat.shape != (dn, dn):
            raise DimensionMismatch(
                f"Laplacian shape {mat.shape} does not match {dn} stacked coordinates"
            )
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def n(self) -> int:
        return self.n_leaders + self.n_followers

    @property
    def _split(self) -> int:
        return self.d * self.n_leaders

    @property
    def L_ll(self) -> np.ndarray:
        s = self._split
        return self.matrix[:s, :s]

    @property
    def L_lf(self) -> np.ndarray:
        s = self._split
        return self.matrix[:s, s:]

    @property
    def L_fl(self) -> np.ndarray:
        s = self._split
        return self.matrix[s:, :s]

    @property
    def L_ff(self) -> np.ndarray:
        s = self._split
        return self.matrix[s:, s:]

    @cached_property
    def localizability(self) -> LocalizabilityResult:
        """Positive definiteness of the follower block.

        With no followers the block is empty and the formation is vacuously
        localizable; the minimum eigenvalue is reported as +inf.
        """
        if self.n_followers == 0:
            return LocalizabilityResult(True, math.inf)
        eigs = np.linalg.eigvalsh(self.L_ff)
        lam_min = float(eigs[0])
        lam_max = float(eigs[-1])
        return LocalizabilityResult(lam_min > TAU_PD * max(lam_max, 0.0), lam_min)

    @cached_property
    def _ff_factor(self):
        return cho_factor(self.L_ff, lower=True)


def bearing_laplacian(graph: FormationGraph, spec: BearingSpec) -> BearingLaplacian:
    """Assemble the Laplacian from a graph and its desired bearings.

    The diagonal block of agent i sums the projectors of its incident edges;
    the off-diagonal block of an edge carries the negated projector.  The
    result is symmetric positive semidefinite by construction.
    """
    ensure_aligned(graph, spec)
    d, n = graph.d, graph.n
    L = np.zeros((d * n, d * n))
    eye = np.eye(d)
    for k, (i, j) in enumerate(graph.edges):
        g = spec.vectors[k]
        proj = eye - np.outer(g, g)
        bi = slice(d * i, d * (i + 1))
        bj = slice(d * j, d * (j + 1))
        L[bi, bi] += proj
        L[bj, bj] += proj
        L[bi, bj] -= proj
        L[bj, bi] -= proj
    return BearingLaplacian(
        matrix=L, d=d, n_leaders=graph.n_leaders, n_followers=graph.n_followers
    )


def check_localizable(lap: BearingLaplacian) -> LocalizabilityResult:
    """Whether followers are uniquely determined by leaders and bearings."""
    return lap.localizability


def target_follower_positions(lap: BearingLaplacian, leader_positions) -> np.ndarray:
    """Solve the follower block for the positions the bearings demand.

    ``leader_positions`` is the stacked leader vector (length d*n_leaders);
    the result is the stacked follower vector.  Uses a Cholesky factorization
    of the follower block and verifies the residual instead of forming an
    inverse.
    """
    p_l = np.asarray(leader_positions, dtype=float).reshape(-1)
    if p_l.size != lap.d * lap.n_leaders:
        raise DimensionMismatch(
            f"expected {lap.d * lap.n_leaders} stacked leader coordinates, "
            f"got {p_l.size}"
        )
    if lap.n_followers == 0:
        return np.zeros(0)
    loc = lap.localizability
    if not loc.localizable:
        raise NotLocalizable(
            f"follower block is singular (min eigenvalue {loc.min_eigenvalue:.3e})"
        )
    rhs = -(lap.L_fl @ p_l)
    x = cho_solve(lap._ff_factor, rhs)
    residual = np.linalg.norm(lap.L_ff @ x + lap.L_fl @ p_l)
    if residual >= SOLVE_RESIDUAL_TOL * (1.0 + np.linalg.norm(p_l)):
        raise ArithmeticError(
            f"follower solve residual {residual:.3e} exceeds tolerance"
        )
    return x
