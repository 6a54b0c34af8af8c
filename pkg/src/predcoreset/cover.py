"""Capacitated set cover over one prediction window.

Choose the fewest predicted points so that every target lies within ``delta1``
of a chosen point and no chosen point represents more than ``kappa`` targets.
The exact solver enumerates selections by increasing size and checks each one
with an integral max-flow on a source / targets / candidates / sink network.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .geometry import row_distances

__all__ = [
    "CoverInstance",
    "CoverSolution",
    "FlowNetwork",
    "ExactLimitExceeded",
    "build_flow_network",
    "feasibility_maxflow",
    "solve_exact",
    "solve_greedy_msc",
    "solve_greedy_repaired",
    "solve",
    "validate_solution",
    "DEFAULT_EXACT_LIMIT",
]

DEFAULT_EXACT_LIMIT = 20


class ExactLimitExceeded(ValueError):
    pass


@dataclass
class CoverInstance:
    candidates: np.ndarray  # (n, d) predicted points
    targets: list[int]  # indices into candidates that need a representative
    delta1: float
    kappa: float = math.inf
    within: np.ndarray = field(init=False, repr=False)  # (n, n) bool, inclusive radius

    def __post_init__(self):
        self.candidates = np.atleast_2d(np.asarray(self.candidates, dtype=float))
        n = self.candidates.shape[0]
        self.targets = sorted(int(t) for t in self.targets)
        if len(set(self.targets)) != len(self.targets) or any(t < 0 or t >= n for t in self.targets):
            raise ValueError("targets must be distinct candidate indices")
        if not (self.delta1 >= 0):
            raise ValueError("delta1 must be >= 0")
        if not (self.kappa == math.inf or (float(self.kappa).is_integer() and self.kappa >= 1)):
            raise ValueError("kappa must be a positive integer or inf")
        self.within = np.stack([row_distances(self.candidates, p) <= self.delta1 for p in self.candidates]) \
            if n else np.zeros((0, 0), dtype=bool)

    @property
    def n(self) -> int:
        return self.candidates.shape[0]

    def capacity(self) -> int:
        """Integral sink-arc capacity for a selected candidate."""
        return len(self.targets) if math.isinf(self.kappa) else int(self.kappa)


@dataclass
class CoverSolution:
    selected: list[int]
    assignment: dict[int, int]  # target index -> selected candidate index
    loads: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        self.selected = sorted(self.selected)
        if not self.loads:
            loads = {j: 0 for j in self.selected}
            for j in self.assignment.values():
                loads[j] = loads.get(j, 0) + 1
            self.loads = loads


class FlowNetwork:
    """Directed graph with integer capacities and paired residual arcs.

    Arc ``k`` and its reverse ``k ^ 1`` are stored side by side.
    """

    def __init__(self, n_nodes: int):
        self.adj: list[list[int]] = [[] for _ in range(n_nodes)]
        self.head: list[int] = []
        self.cap: list[int] = []
        self.flow: list[int] = []

    def add_arc(self, u: int, v: int, capacity: int) -> int:
        if capacity < 0 or int(capacity) != capacity:
            raise ValueError("capacities must be non-negative integers")
        k = len(self.head)
        self.head += [v, u]
        self.cap += [int(capacity), 0]
        self.flow += [0, 0]
        self.adj[u].append(k)
        self.adj[v].append(k + 1)
        return k

    def tail(self, k: int) -> int:
        return self.head[k ^ 1]

    def max_flow(self, s: int, t: int) -> int:
        """Edmonds-Karp: breadth-first augmenting paths in arc insertion order."""
        total = 0
        while True:
            parent = [-1] * len(self.adj)
            parent[s] = -2
            queue = deque([s])
            while queue and parent[t] == -1:
                u = queue.popleft()
                for k in self.adj[u]:
                    v = self.head[k]
                    if parent[v] == -1 and self.cap[k] - self.flow[k] > 0:
                        parent[v] = k
                        queue.append(v)
            if parent[t] == -1:
                return total
            push = math.inf
            v = t
            while v != s:
                k = parent[v]
                push = min(push, self.cap[k] - self.flow[k])
                v = self.tail(k)
            v = t
            while v != s:
                k = parent[v]
                self.flow[k] += push
                self.flow[k ^ 1] -= push
                v = self.tail(k)
            total += push


def build_flow_network(instance: CoverInstance, alpha) -> tuple[FlowNetwork, dict[tuple[int, int], int]]:
    """Auxiliary graph for a given selection.

    Node 0 is the source, nodes 1..|Q| the targets, then one node per
    candidate, then the sink. Target->candidate arcs exist only for selected
    candidates within ``delta1``.
    """
    alpha = set(int(j) for j in alpha)
    q = instance.targets
    n = instance.n
    src, sink = 0, 1 + len(q) + n
    net = FlowNetwork(sink + 1)
    arcs: dict[tuple[int, int], int] = {}
    for a, i in enumerate(q):
        net.add_arc(src, 1 + a, 1)
    for a, i in enumerate(q):
        for j in range(n):
            if j in alpha and instance.within[i, j]:
                arcs[(i, j)] = net.add_arc(1 + a, 1 + len(q) + j, 1)
    cap = instance.capacity()
    for j in range(n):
        net.add_arc(1 + len(q) + j, sink, cap if j in alpha else 0)
    return net, arcs


def feasibility_maxflow(instance: CoverInstance, alpha) -> CoverSolution | None:
    """Return a valid assignment for selection ``alpha``, or ``None`` if none exists."""
    alpha = sorted(set(int(j) for j in alpha))
    if any(j < 0 or j >= instance.n for j in alpha):
        raise ValueError("selection index out of range")
    if not instance.targets:
        return CoverSolution(alpha, {})
    net, arcs = build_flow_network(instance, alpha)
    value = net.max_flow(0, len(net.adj) - 1)
    if value < len(instance.targets):
        return None
    assignment = {i: j for (i, j), k in arcs.items() if net.flow[k] == 1}
    return CoverSolution(alpha, assignment)


def _masks(instance: CoverInstance) -> list[int]:
    """Bitmask over target positions covered by each candidate."""
    masks = []
    for j in range(instance.n):
        m = 0
        for a, i in enumerate(instance.targets):
            if instance.within[i, j]:
                m |= 1 << a
        masks.append(m)
    return masks


def solve_exact(instance: CoverInstance, limit: int = DEFAULT_EXACT_LIMIT) -> CoverSolution:
    """Minimum-cardinality selection; the lexicographically first one among ties.

    Subsets failing the plain coverage test, containing candidates that cover
    no target, or too small to carry ``|Q|`` at capacity ``kappa`` can never be
    the first feasible minimum, so they are skipped before any flow is run.
    """
    if instance.n > limit:
        raise ExactLimitExceeded(f"n={instance.n} exceeds the exact-solver limit {limit}; use the greedy path")
    q = instance.targets
    if not q:
        return CoverSolution([], {})
    masks = _masks(instance)
    full = (1 << len(q)) - 1
    useful = [j for j in range(instance.n) if masks[j]]
    start = 1 if math.isinf(instance.kappa) else max(1, math.ceil(len(q) / instance.kappa))
    for k in range(start, len(useful) + 1):
        for alpha in itertools.combinations(useful, k):
            m = 0
            for j in alpha:
                m |= masks[j]
            if m != full:
                continue
            sol = feasibility_maxflow(instance, alpha)
            if sol is not None:
                return sol
    raise AssertionError("unreachable: selecting every target is always feasible")


def solve_greedy_msc(instance: CoverInstance) -> CoverSolution:
    """Greedy set cover for unbounded capacity.

    Each round picks the candidate covering the most still-uncovered targets
    (smallest index on ties); newly covered targets are assigned to that pick.
    """
    if not math.isinf(instance.kappa):
        raise ValueError("greedy set cover requires kappa = inf")
    uncovered = set(instance.targets)
    selected: list[int] = []
    assignment: dict[int, int] = {}
    while uncovered:
        best_j, best_cov = -1, set()
        for j in range(instance.n):
            cov = {i for i in uncovered if instance.within[i, j]}
            if len(cov) > len(best_cov):
                best_j, best_cov = j, cov
        selected.append(best_j)
        for i in best_cov:
            assignment[i] = best_j
        uncovered -= best_cov
    return CoverSolution(selected, assignment)


def solve_greedy_repaired(instance: CoverInstance) -> CoverSolution:
    """Greedy selection followed by capacity repair for finite ``kappa``.

    Heuristic: run the uncapacitated greedy, test the selection with max-flow,
    and while it is infeasible add the unselected candidate reaching the most
    targets left unrouted by the current flow. Picks with zero load are dropped.
    """
    relaxed = CoverInstance(instance.candidates, instance.targets, instance.delta1)
    selected = set(solve_greedy_msc(relaxed).selected)
    while True:
        sol = feasibility_maxflow(instance, selected)
        if sol is not None:
            used = sorted(set(sol.assignment.values()))
            return CoverSolution(used, sol.assignment)
        net, arcs = build_flow_network(instance, selected)
        net.max_flow(0, len(net.adj) - 1)
        routed = {i for (i, j), k in arcs.items() if net.flow[k] == 1}
        left = [i for i in instance.targets if i not in routed]
        best_j, best_count = -1, 0
        for j in range(instance.n):
            if j in selected:
                continue
            c = sum(1 for i in left if instance.within[i, j])
            if c > best_count:
                best_j, best_count = j, c
        if best_j < 0:
            # unrouted targets only reach saturated picks; add capacity the flow can reroute through
            for j in range(instance.n):
                if j in selected:
                    continue
                c = sum(1 for i in instance.targets if instance.within[i, j])
                if c > best_count:
                    best_j, best_count = j, c
        selected.add(best_j)


def solve(instance: CoverInstance, exact_limit: int = DEFAULT_EXACT_LIMIT) -> CoverSolution:
    if instance.n <= exact_limit:
        return solve_exact(instance, exact_limit)
    if math.isinf(instance.kappa):
        return solve_greedy_msc(instance)
    return solve_greedy_repaired(instance)


def validate_solution(instance: CoverInstance, sol: CoverSolution) -> None:
    """Independent check of the assignment, radius and capacity constraints."""
    if sorted(sol.assignment) != instance.targets:
        raise ValueError("every target must be assigned exactly once")
    sel = set(sol.selected)
    loads: dict[int, int] = {}
    for i, j in sol.assignment.items():
        if j not in sel:
            raise ValueError(f"target {i} assigned to unselected candidate {j}")
        d = float(row_distances(instance.candidates[j : j + 1], instance.candidates[i])[0])
        if d > instance.delta1:
            raise ValueError(f"target {i} -> {j} at distance {d} > {instance.delta1}")
        loads[j] = loads.get(j, 0) + 1
    if any(v > instance.kappa for v in loads.values()):
        raise ValueError("capacity exceeded")
    if any(loads.get(j, 0) != v for j, v in sol.loads.items()):
        raise ValueError("recorded loads disagree with the assignment")
