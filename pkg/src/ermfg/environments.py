"""Congestion games on directed graphs, including the five-node resource allocation example."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .model import CoupledReward, GameSpec, ParameterError, Policy, Space, Theta, TransitionKernel

RHO_FLOOR = 0.01


@dataclass(frozen=True)
class DirectedGraph:
    """Directed graph on nodes ``0..node_count-1``; ``self_loops`` adds ``(s, s)`` for every node."""

    node_count: int
    edges: frozenset[tuple[int, int]]
    self_loops: bool = True
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        edges = {(int(a), int(b)) for a, b in self.edges}
        for a, b in edges:
            if not (0 <= a < self.node_count and 0 <= b < self.node_count):
                raise ParameterError(f"edge ({a}, {b}) references a missing node")
        if self.self_loops:
            edges |= {(s, s) for s in range(self.node_count)}
        object.__setattr__(self, "edges", frozenset(edges))
        for s in range(self.node_count):
            if not self.successors(s):
                raise ParameterError(f"node {s} has no outgoing edge")

    def successors(self, s: int) -> list[int]:
        """Out-neighbours of ``s``: the self-loop first (if any), then ascending."""
        succ = sorted(b for a, b in self.edges if a == s)
        if s in succ:
            succ.remove(s)
            succ.insert(0, s)
        return succ

    @property
    def max_out_degree(self) -> int:
        return max(len(self.successors(s)) for s in range(self.node_count))


@dataclass(frozen=True)
class CongestionRewardSpec:
    """Terminal bonus per node minus a congestion penalty for sharing the node.

    Encodes ``L_H(s, a, s') = bonus(s) - weight * 1[s' = s]`` and ``L_t = 0``
    for ``t < H``; the terminal transform is ``theta_terminal``.
    """

    terminal_bonus: Mapping[int, float] = field(default_factory=dict)
    congestion_weight: float = 1.0
    theta_terminal: Theta = field(default_factory=Theta.square)


def action_targets(graph: DirectedGraph) -> np.ndarray:
    """``targets[s, a]`` = node reached by action ``a``; padding actions repeat the self-loop."""
    A = graph.max_out_degree
    targets = np.empty((graph.node_count, A), dtype=int)
    for s in range(graph.node_count):
        succ = graph.successors(s)
        if len(succ) < A and succ[0] != s:
            raise ParameterError(f"node {s} needs a self-loop to pad its action set to {A}")
        targets[s] = succ + [s] * (A - len(succ))
    return targets


def build_graph_game(
    graph: DirectedGraph,
    rewards: CongestionRewardSpec,
    horizon: int,
    mu0: Sequence[float],
) -> GameSpec:
    """Deterministic-move game: action ``a`` at ``s`` walks the ``a``-th out-edge of ``s``."""
    S = graph.node_count
    for node in rewards.terminal_bonus:
        if not 0 <= int(node) < S:
            raise ParameterError(f"bonus references missing node {node}")
    targets = action_targets(graph)
    A = targets.shape[1]
    T = np.zeros((S, A, S))
    T[np.arange(S)[:, None], np.arange(A)[None, :], targets] = 1.0

    bonus = np.zeros(S)
    for node, value in rewards.terminal_bonus.items():
        bonus[int(node)] = value
    L = np.zeros((horizon + 1, S, A, S))
    L[horizon] = bonus[:, None, None] - rewards.congestion_weight * np.eye(S)[:, None, :]
    theta = [Theta.identity()] * horizon + [rewards.theta_terminal]
    labels = graph.labels
    return GameSpec(
        states=Space(S, labels),
        actions=Space(A),
        horizon=horizon,
        kernel=TransitionKernel(T),
        reward=CoupledReward(L, tuple(theta)),
        mu0=np.asarray(mu0, dtype=np.float64),
    )


def graph_reference_policy(
    graph: DirectedGraph,
    horizon: int,
    preferences: Mapping[tuple[int, int], float] | None = None,
    floor: float = RHO_FLOOR,
) -> Policy:
    """Time-invariant reference policy over out-edges.

    ``preferences[(s, s')]`` pins the probability of moving ``s -> s'``; at a
    node with pinned edges the unpinned real edges share the leftover mass
    (the self-loop absorbing it when it is the only one left). Nodes without
    pins are uniform over their real out-edges. Every action, including the
    padding ones, is then floored at ``floor`` and each row renormalized.
    """
    preferences = dict(preferences or {})
    targets = action_targets(graph)
    S, A = targets.shape
    row = np.zeros((S, A))
    for s in range(S):
        succ = graph.successors(s)
        pinned = {b: p for (a, b), p in preferences.items() if a == s}
        for b in pinned:
            if b not in succ:
                raise ParameterError(f"preference on missing edge ({s}, {b})")
        free = [b for b in succ if b not in pinned]
        left = max(0.0, 1.0 - sum(pinned.values()))
        for i, b in enumerate(succ):
            if b in pinned:
                row[s, i] = pinned[b]
            elif free:
                row[s, i] = left / len(free) if pinned else 1.0 / len(succ)
    row = np.maximum(row, floor)
    row /= row.sum(axis=1, keepdims=True)
    return Policy(np.broadcast_to(row, (horizon + 1, S, A)).copy())


# Nodes are 0-based internally; labels carry the 1-based names used in plots and configs.
RESOURCE_NODES = 5
RESOURCE_EDGES = ((0, 1), (1, 2), (1, 3), (3, 4))
RESOURCE_BONUS = {2: 1.5, 3: 1.0}
RESOURCE_PREFERENCES = {(1, 2): 0.5, (1, 3): 0.5, (3, 4): 0.01}
DEFAULT_HORIZON = 5


def resource_allocation_graph() -> DirectedGraph:
    labels = tuple(f"node{i + 1}" for i in range(RESOURCE_NODES))
    return DirectedGraph(RESOURCE_NODES, frozenset(RESOURCE_EDGES), True, labels)


def default_resource_allocation(
    horizon: int = DEFAULT_HORIZON,
    mu0: Sequence[float] | None = None,
) -> tuple[GameSpec, Policy]:
    """Five-node resource allocation game and its coordinator reference policy.

    Edges 1->2, 2->3, 2->4, 4->5 plus self-loops; node 3 pays 1.5 and node 4
    pays 1 at the horizon, minus the fraction of the population sharing the
    node, squared. The reference policy splits node 2 evenly between nodes 3
    and 4 and keeps node 4 from leaking to node 5.
    """
    if horizon < 2:
        raise ParameterError("horizon must be >= 2 so nodes 3 and 4 are reachable")
    if mu0 is None:
        mu0 = np.eye(RESOURCE_NODES)[0]
    graph = resource_allocation_graph()
    rewards = CongestionRewardSpec(RESOURCE_BONUS, 1.0, Theta.square())
    spec = build_graph_game(graph, rewards, horizon, mu0)
    rho = graph_reference_policy(graph, horizon, RESOURCE_PREFERENCES)
    return spec, rho
