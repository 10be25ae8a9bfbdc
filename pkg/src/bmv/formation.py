"""Core geometry for bearing-constrained formations.

A formation is an interaction graph plus a configuration of agent positions.
The quantities everything else is built from live here: unit bearing vectors
along edges, the orthogonal projector that turns a bearing into a constraint,
and the stacked bearing map of a whole formation.

All types are immutable; operations are pure functions on them.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DegenerateVector, DimensionMismatch, UnknownNeighbor

# Below this separation two agents count as collocated and bearings are undefined.
EPS_DEGENERATE = 1e-12

# Maximum deviation from unit length tolerated in a desired bearing.
UNIT_TOL = 1e-12


@dataclass(frozen=True)
class FormationGraph:
    """Undirected interaction graph with a leader/follower split.

    Agents are indexed 0..n-1 and the first ``n_leaders`` of them are the
    leaders.  Edges are stored with a fixed orientation (tail = smaller
    index) so that every stacked quantity built from the edge list is
    deterministic regardless of how the edges were written down.
    """

    n: int
    d: int
    edges: tuple[tuple[int, int], ...]
    n_leaders: int

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"need at least 2 agents, got n={self.n}")
        if int(self.d) != self.d or self.d < 2:
            raise ValueError(f"ambient dimension must be >= 2, got d={self.d}")
        if not 1 <= self.n_leaders <= self.n:
            raise ValueError(
                f"leader count must lie in 1..{self.n}, got {self.n_leaders}"
            )
        normalized = []
        seen = set()
        for edge in self.edges:
            i, j = int(edge[0]), int(edge[1])
            if i == j:
                raise ValueError(f"self-loop at vertex {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) references a missing vertex")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            normalized.append(key)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "n_leaders", int(self.n_leaders))
        object.__setattr__(self, "edges", tuple(normalized))

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def n_followers(self) -> int:
        return self.n - self.n_leaders

    def is_leader(self, i: int) -> bool:
        return 0 <= i < self.n_leaders

    @cached_property
    def edge_array(self) -> np.ndarray:
        """Edge endpoints as an (m, 2) integer array, read-only."""
        arr = np.asarray(self.edges, dtype=np.intp).reshape(self.m, 2)
        arr.setflags(write=False)
        return arr

    @cached_property
    def _neighbor_map(self) -> dict[int, tuple[int, ...]]:
        nbrs: dict[int, list[int]] = {i: [] for i in range(self.n)}
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return {i: tuple(sorted(v)) for i, v in nbrs.items()}

    @cached_property
    def _edge_slots(self) -> dict[tuple[int, int], int]:
        return {edge: k for k, edge in enumerate(self.edges)}

    def neighbors(self, i: int) -> tuple[int, ...]:
        if not 0 <= i < self.n:
            raise ValueError(f"no vertex {i}")
        return self._neighbor_map[i]

    def edge_index(self, i: int, j: int) -> int:
        """Position of the undirected edge {i, j} in the edge list."""
        try:
            return self._edge_slots[(min(i, j), max(i, j))]
        except KeyError:
            raise UnknownNeighbor(f"no edge between agents {i} and {j}") from None


@dataclass(frozen=True)
class Configuration:
    """Agent positions; row i of ``points`` is the position of agent i."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise DimensionMismatch(
                f"positions must form an (n, d) array, got shape {pts.shape}"
            )
        if not np.all(np.isfinite(pts)):
            raise ValueError("positions contain non-finite entries")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_stacked(cls, stacked, d: int) -> "Configuration":
        vec = np.asarray(stacked, dtype=float).reshape(-1)
        if d < 1 or vec.size % d != 0:
            raise DimensionMismatch(
                f"stacked length {vec.size} is not a multiple of d={d}"
            )
        return cls(vec.reshape(-1, d))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def stacked(self) -> np.ndarray:
        """Positions as one vector, agent by agent."""
        return self.points.reshape(-1)

    def point(self, i: int) -> np.ndarray:
        return self.points[i]


@dataclass(frozen=True)
class BearingSpec:
    """Desired unit bearing per edge, aligned with a graph's edge order.

    Row k is the target bearing of edge k, pointing from the edge's tail
    (smaller agent index) to its head.
    """

    vectors: np.ndarray

    def __post_init__(self) -> None:
        vecs = np.array(self.vectors, dtype=float)
        if vecs.ndim != 2:
            raise DimensionMismatch(
                f"bearings must form an (m, d) array, got shape {vecs.shape}"
            )
        if not np.all(np.isfinite(vecs)):
            raise ValueError("bearings contain non-finite entries")
        lengths = np.linalg.norm(vecs, axis=1)
        bad = np.nonzero(np.abs(lengths - 1.0) > UNIT_TOL)[0]
        if bad.size:
            raise ValueError(
                f"bearing {bad[0]} has length {lengths[bad[0]]!r}, expected unit"
            )
        vecs.setflags(write=False)
        object.__setattr__(self, "vectors", vecs)

    @classmethod
    def from_configuration(cls, graph: FormationGraph, config: Configuration) -> "BearingSpec":
        """Read the bearings off an existing configuration."""
        return cls(bearing_function(graph, config).reshape(graph.m, graph.d))

    @property
    def m(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]


def ensure_compatible(graph: FormationGraph, config: Configuration) -> None:
    """Raise DimensionMismatch unless graph and configuration agree on n and d."""
    if config.n != graph.n:
        raise DimensionMismatch(
            f"graph has {graph.n} agents but configuration has {config.n}"
        )
    if config.d != graph.d:
        raise DimensionMismatch(
            f"graph is {graph.d}-dimensional but configuration is {config.d}-dimensional"
        )


def ensure_aligned(graph: FormationGraph, spec: BearingSpec) -> None:
    """Raise DimensionMismatch unless the bearing spec matches the edge list."""
    if spec.m != graph.m:
        raise DimensionMismatch(
            f"graph has {graph.m} edges but bearing spec has {spec.m}"
        )
    if spec.d != graph.d:
        raise DimensionMismatch(
            f"graph is {graph.d}-dimensional but bearing spec is {spec.d}-dimensional"
        )


def orthogonal_projector(x) -> np.ndarray:
    """Projector onto the orthogonal complement of a nonzero vector.

    P = I - (x/|x|)(x/|x|)^T.  P is symmetric, idempotent, positive
    semidefinite, and its null space is exactly span{x}.
    """
    vec = np.asarray(x, dtype=float).reshape(-1)
    norm = np.linalg.norm(vec)
    if norm <= EPS_DEGENERATE:
        raise DegenerateVector(f"cannot project along a zero vector (|x|={norm!r})")
    g = vec / norm
    return np.eye(vec.size) - np.outer(g, g)


def bearing(p_i, p_j) -> np.ndarray:
    """Unit vector pointing from position p_i toward position p_j."""
    a = np.asarray(p_i, dtype=float).reshape(-1)
    b = np.asarray(p_j, dtype=float).reshape(-1)
    if a.size != b.size:
        raise DimensionMismatch(f"positions have sizes {a.size} and {b.size}")
    diff = b - a
    norm = np.linalg.norm(diff)
    if norm <= EPS_DEGENERATE:
        raise DegenerateVector(f"agents are collocated (separation {norm!r})")
    return diff / norm


def bearing_function(graph: FormationGraph, config: Configuration) -> np.ndarray:
    """Stacked bearings of every edge, in edge order.

    Returns a vector of length d*m; entries d*k..d*(k+1) hold the bearing of
    edge k from its tail to its head.
    """
    ensure_compatible(graph, config)
    if graph.m == 0:
        return np.zeros(0)
    ends = graph.edge_array
    diffs = config.points[ends[:, 1]] - config.points[ends[:, 0]]
    norms = np.linalg.norm(diffs, axis=1)
    short = np.nonzero(norms <= EPS_DEGENERATE)[0]
    if short.size:
        k = int(short[0])
        raise DegenerateVector(
            f"agents {graph.edges[k][0]} and {graph.edges[k][1]} are collocated "
            f"(edge {k})"
        )
    return (diffs / norms[:, None]).reshape(-1)


def desired_bearing(graph: FormationGraph, spec: BearingSpec, i: int, j: int) -> np.ndarray:
    """Target bearing from agent i to agent j, with the right sign."""
    ensure_aligned(graph, spec)
    k = graph.edge_index(i, j)
    vec = spec.vectors[k]
    return vec.copy() if i < j else -vec
