"""Graph signals, sparse observations, cluster partitions and the primal
objective pieces built from them.

A graph signal is a plain float array of length ``node_count``; position
i - 1 holds the value at node i.  Observed labels are stored sparsely as
a sorted node-id array plus an aligned label array.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .graph import EmpiricalGraph

__all__ = [
    "GraphSignal",
    "Observations",
    "Partition",
    "tv",
    "piecewise_constant",
    "boundary_edges",
    "boundary_mask",
    "empirical_error",
    "primal_objective",
]

# Signals are bare arrays; the alias documents intent in signatures.
GraphSignal = np.ndarray


@dataclass(frozen=True, eq=False)
class Observations:
    """Labels known on a sampling set: sorted node ids plus values."""

    nodes: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=np.int64)
        labels = np.asarray(self.labels, dtype=np.float64)
        if nodes.ndim != 1 or labels.ndim != 1 or nodes.size != labels.size:
            raise ValueError("observations need aligned 1-d node and label arrays")
        if nodes.size == 0:
            raise ValueError("sampling set must be non-empty")
        if nodes.min() < 1:
            raise ValueError("node ids must be >= 1")
        order = np.argsort(nodes, kind="stable")
        nodes = nodes[order]
        labels = labels[order]
        if np.any(nodes[1:] == nodes[:-1]):
            raise ValueError("duplicate node id in sampling set")
        if not np.all(np.isfinite(labels)):
            raise ValueError("labels must be finite")
        nodes.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "Observations":
        pairs = list(pairs)
        return cls(
            nodes=np.asarray([p[0] for p in pairs], dtype=np.int64),
            labels=np.asarray([p[1] for p in pairs], dtype=np.float64),
        )

    @classmethod
    def from_dict(cls, mapping: Mapping[int, float]) -> "Observations":
        return cls.from_pairs(sorted(mapping.items()))

    @property
    def indices(self) -> np.ndarray:
        """0-based positions of the sampled nodes."""
        return self.nodes - 1

    @property
    def count(self) -> int:
        return int(self.nodes.size)

    def validate_for(self, g: EmpiricalGraph) -> None:
        if self.nodes[-1] > g.node_count:
            raise ValueError(
                f"sampled node {int(self.nodes[-1])} exceeds node count {g.node_count}"
            )

    def unsampled_mask(self, node_count: int) -> np.ndarray:
        mask = np.ones(node_count, dtype=bool)
        mask[self.indices] = False
        return mask


@dataclass(frozen=True, eq=False)
class Partition:
    """Disjoint clusters covering nodes 1..node_count, in a fixed order."""

    clusters: tuple[frozenset[int], ...]
    node_count: int

    def __post_init__(self) -> None:
        clusters = tuple(frozenset(c) for c in self.clusters)
        object.__setattr__(self, "clusters", clusters)
        if not clusters:
            raise ValueError("partition needs at least one cluster")
        seen: set[int] = set()
        for k, cluster in enumerate(clusters):
            if not cluster:
                raise ValueError(f"cluster {k + 1} is empty")
            if seen & cluster:
                raise ValueError(f"cluster {k + 1} overlaps an earlier cluster")
            seen |= cluster
        expected = set(range(1, self.node_count + 1))
        if seen != expected:
            missing = sorted(expected - seen)
            extra = sorted(seen - expected)
            raise ValueError(
                f"clusters must cover 1..{self.node_count} exactly"
                f" (missing {missing}, extraneous {extra})"
            )

    @property
    def cluster_count(self) -> int:
        return len(self.clusters)

    @cached_property
    def cluster_index(self) -> np.ndarray:
        """0-based cluster position per node position."""
        idx = np.empty(self.node_count, dtype=np.int64)
        for k, cluster in enumerate(self.clusters):
            for i in cluster:
                idx[i - 1] = k
        idx.setflags(write=False)
        return idx


def tv(g: EmpiricalGraph, x: GraphSignal) -> float:
    """Weighted total variation: sum over edges of W_e * |x_head - x_tail|."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (g.node_count,):
        raise ValueError(f"signal has shape {x.shape}, expected ({g.node_count},)")
    if g.edge_count == 0:
        return 0.0
    return float(np.sum(g.weights * np.abs(x[g._head_idx] - x[g._tail_idx])))


def piecewise_constant(p: Partition, coeffs: Sequence[float]) -> GraphSignal:
    """Signal equal to coeffs[k] on every node of cluster k."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (p.cluster_count,):
        raise ValueError(
            f"expected {p.cluster_count} coefficients, got {coeffs.shape}"
        )
    if not np.all(np.isfinite(coeffs)):
        raise ValueError("coefficients must be finite")
    return coeffs[p.cluster_index]


def boundary_mask(g: EmpiricalGraph, p: Partition) -> np.ndarray:
    """Boolean edge mask, True where the endpoints lie in different clusters."""
    if p.node_count != g.node_count:
        raise ValueError(
            f"partition covers {p.node_count} nodes, graph has {g.node_count}"
        )
    ci = p.cluster_index
    return ci[g._head_idx] != ci[g._tail_idx]


def boundary_edges(g: EmpiricalGraph, p: Partition) -> set[tuple[int, int]]:
    """Edges joining two different clusters, as (head, tail) pairs."""
    mask = boundary_mask(g, p)
    return {
        (int(h), int(t))
        for h, t in zip(g.heads[mask], g.tails[mask])
    }


def empirical_error(obs: Observations, x: GraphSignal) -> float:
    """Half the squared error against the observed labels."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < int(obs.nodes[-1]):
        raise ValueError(
            f"signal of length {x.size} cannot cover sampled node {int(obs.nodes[-1])}"
        )
    diff = x[obs.indices] - obs.labels
    return float(0.5 * np.dot(diff, diff))


def primal_objective(
    g: EmpiricalGraph, obs: Observations, x: GraphSignal, lam: float
) -> float:
    """Empirical error plus lam times total variation; lam must be positive."""
    if not (lam > 0.0):
        raise ValueError(f"regularization parameter must be positive, got {lam}")
    return empirical_error(obs, x) + lam * tv(g, x)
