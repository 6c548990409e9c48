"""Relay routing and start-time scheduling over the cell chain.

Given one round's timings, the scheduler decides which adjacent
server-to-server relays run and when, so that every edge model propagates
as far as possible before the round deadline. Candidate relay paths are
greedy-forward simulations; simultaneous paths must not reuse a directed
link, which turns path selection into a maximum-weight independent set
problem on a conflict graph. The solver is greedy construction, gap
filling and a single local-search sweep; an exhaustive oracle covers small
instances exactly.

Rightward and leftward relays use disjoint variables and constraints, so
the two directions are solved independently and their objectives add.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from .channel import RoundTimings
from .errors import ConfigError, DomainError, InfeasibleSchedule, SizeError

RIGHT = "right"
LEFT = "left"
CONFLICT_LINK = "link"
CONFLICT_NODE = "node"

ORACLE_VERTEX_LIMIT = 25


@dataclass(frozen=True)
class RelayPath:
    """A directed run of consecutive cells traversed by one relay stream."""

    direction: str
    start_cell: int
    end_cell: int
    weight: float

    def __post_init__(self) -> None:
        if self.direction not in (RIGHT, LEFT):
            raise DomainError(f"unknown direction {self.direction!r}")
        span = self.end_cell - self.start_cell
        if (self.direction == RIGHT and span < 1) or (self.direction == LEFT and span > -1):
            raise DomainError("path must advance at least one hop in its direction")
        if self.weight <= 0:
            raise DomainError("path weight must be positive")

    @property
    def node_list(self) -> tuple[int, ...]:
        step = 1 if self.direction == RIGHT else -1
        return tuple(range(self.start_cell, self.end_cell + step, step))

    @property
    def links(self) -> tuple[tuple[int, int], ...]:
        nodes = self.node_list
        return tuple(zip(nodes[:-1], nodes[1:]))

    @property
    def length(self) -> int:
        return len(self.node_list)


@dataclass
class ConflictGraph:
    paths: list[RelayPath]
    edges: set[frozenset[int]] = field(default_factory=set)
    direction: str = RIGHT

    def conflicts(self, u: int, v: int) -> bool:
        return frozenset((u, v)) in self.edges

    def independent(self, vertices: set[int]) -> bool:
        return all(
            not self.conflicts(u, v) for u, v in itertools.combinations(vertices, 2)
        )


@dataclass
class SchedulePlan:
    """Start times for every activated directed link, plus derived deadlines."""

    start_times: dict[tuple[int, int], float]
    t_agg: np.ndarray
    t_max: float

    def link_active(self, u: int, v: int) -> bool:
        return (u, v) in self.start_times

    def to_json_dict(self) -> dict:
        return {
            "links": [
                {"from": u, "to": v, "start": float(t)}
                for (u, v), t in sorted(self.start_times.items())
            ],
            "t_agg": [float(x) for x in self.t_agg],
            "t_max": float(self.t_max),
        }


@dataclass
class ScheduleResult:
    plan: SchedulePlan
    participation: np.ndarray  # (L, L) ints, entry (j, l): cell j reached ES l
    utility: float
    paths_right: list[RelayPath]
    paths_left: list[RelayPath]


def adjacent_feasibility(timings: RoundTimings) -> dict[tuple[int, int], bool]:
    """Which single-hop relays fit the deadline if fired at local readiness."""
    active = {}
    L = timings.num_cells
    for l in range(L - 1):
        active[(l, l + 1)] = timings.ready(l) + timings.com(l, l + 1) <= timings.t_max
        active[(l + 1, l)] = timings.ready(l + 1) + timings.com(l + 1, l) <= timings.t_max
    return active


def _hat_volumes(timings: RoundTimings, volumes: np.ndarray) -> np.ndarray:
    v = np.asarray(volumes, dtype=float)
    if v.shape != (timings.num_cells,):
        raise ConfigError("volumes must have one entry per cell")
    return v


def enumerate_candidate_paths(
    link_active: dict[tuple[int, int], bool],
    timings: RoundTimings,
    direction: str,
    volumes: np.ndarray,
) -> list[RelayPath]:
    """All relay paths feasible as standalone greedy-forward streams.

    From each start cell the stream departs at local readiness and each
    later hop departs at max(arrival, local readiness); the walk extends
    while the link is active and the next arrival meets the deadline. The
    maximal walk and every prefix of length >= 2 are candidates, weighted
    by the data volume of the cells they span.
    """
    L = timings.num_cells
    step = 1 if direction == RIGHT else -1
    v = _hat_volumes(timings, volumes)
    paths: list[RelayPath] = []
    for q in range(L):
        depart = timings.ready(q)
        cell = q
        weight = v[q]
        while True:
            nxt = cell + step
            if nxt < 0 or nxt >= L or not link_active.get((cell, nxt), False):
                break
            arrival = depart + timings.com(cell, nxt)
            if arrival > timings.t_max:
                break
            weight += v[nxt]
            paths.append(
                RelayPath(direction=direction, start_cell=q, end_cell=nxt, weight=float(weight))
            )
            cell = nxt
            depart = max(arrival, timings.ready(cell))
    return paths


def build_conflict_graph(
    paths: list[RelayPath], conflict: str = CONFLICT_LINK, direction: str | None = None
) -> ConflictGraph:
    """Edges between paths that cannot run in the same round.

    Under the default rule two paths conflict when they reuse a directed
    adjacent link, the physical resource spent once per round per
    direction. The stricter node rule also forbids head-to-tail contact.
    """
    if conflict not in (CONFLICT_LINK, CONFLICT_NODE):
        raise ConfigError(f"conflict rule must be 'link' or 'node', got {conflict!r}")
    if len({p.direction for p in paths}) > 1:
        raise DomainError("conflict graph expects paths of a single direction")
    if direction is None:
        direction = paths[0].direction if paths else RIGHT
    graph = ConflictGraph(paths=list(paths), direction=direction)
    for i, j in itertools.combinations(range(len(paths)), 2):
        if conflict == CONFLICT_LINK:
            clash = bool(set(paths[i].links) & set(paths[j].links))
        else:
            clash = bool(set(paths[i].node_list) & set(paths[j].node_list))
        if clash:
            graph.edges.add(frozenset((i, j)))
    return graph


def _order_key(path: RelayPath) -> tuple[float, int, int]:
    # Highest weight first, longer paths first, then lowest start cell.
    return (-path.weight, -path.length, path.start_cell)


def greedy_initial_set(graph: ConflictGraph) -> list[int]:
    """Maximal independent set picked by descending weight."""
    order = sorted(range(len(graph.paths)), key=lambda i: _order_key(graph.paths[i]))
    chosen: list[int] = []
    for i in order:
        if all(not graph.conflicts(i, j) for j in chosen):
            chosen.append(i)
    return sorted(chosen)


def fill_gaps(selected: list[int], graph: ConflictGraph) -> list[int]:
    """Extend an independent set to a maximal one, best candidates first.

    Selected paths partition the unused links into gaps between one path's
    end node and the next path's start node; each gap is packed with the
    highest-weight candidates that fit.
    """
    full = list(selected)
    order = sorted(range(len(graph.paths)), key=lambda i: _order_key(graph.paths[i]))
    for i in order:
        if i in full:
            continue
        if all(not graph.conflicts(i, j) for j in full):
            full.append(i)
    return sorted(full)


def assign_start_times(
    paths: list[RelayPath], timings: RoundTimings
) -> dict[tuple[int, int], float]:
    """Relay start times along each selected path.

    The first hop fires at local readiness; every later hop fires at
    max(upstream arrival, local readiness). Selected paths are link
    disjoint, so each directed link gets exactly one start time.
    """
    starts: dict[tuple[int, int], float] = {}
    for path in paths:
        prev_arrival: float | None = None
        for (u, v) in path.links:
            start = timings.ready(u) if prev_arrival is None else max(prev_arrival, timings.ready(u))
            arrival = start + timings.com(u, v)
            if arrival > timings.t_max:
                raise InfeasibleSchedule(
                    f"hop {u}->{v} arrives at {arrival:.6f} after deadline "
                    f"{timings.t_max:.6f}; candidate enumeration is broken"
                )
            if (u, v) in starts:
                raise InfeasibleSchedule(f"link {u}->{v} scheduled twice")
            starts[(u, v)] = start
            prev_arrival = arrival
    return starts


def aggregation_times(
    start_times: dict[tuple[int, int], float], timings: RoundTimings
) -> np.ndarray:
    """When each ES can run its final aggregation: own readiness vs arrivals."""
    L = timings.num_cells
    t_agg = np.array([timings.ready(l) for l in range(L)])
    for (u, v), start in start_times.items():
        t_agg[v] = max(t_agg[v], start + timings.com(u, v))
    return t_agg


def make_plan(
    paths_right: list[RelayPath], paths_left: list[RelayPath], timings: RoundTimings
) -> SchedulePlan:
    starts = assign_start_times(paths_right, timings)
    starts.update(assign_start_times(paths_left, timings))
    return SchedulePlan(
        start_times=starts, t_agg=aggregation_times(starts, timings), t_max=timings.t_max
    )


def derive_participation(plan: SchedulePlan, timings: RoundTimings) -> np.ndarray:
    """Which cell's model reaches which ES, from the plan's start times.

    A chain of scheduled links delivers end to end when every intermediate
    arrival lands no later than the following link's start; the final hop
    must additionally meet the round deadline. Entry (j, l) covers origin
    cell j and destination l.
    """
    L = timings.num_cells
    p = np.eye(L, dtype=int)

    def chain_delivers(origin: int, dest: int, step: int) -> bool:
        cells = range(origin, dest, step)
        for u in cells:
            v = u + step
            if not plan.link_active(u, v):
                return False
            arrival = plan.start_times[(u, v)] + timings.com(u, v)
            if v == dest:
                return arrival <= plan.t_max
            if arrival > plan.start_times.get((v, v + step), -np.inf):
                return False
        return True

    for j in range(L):
        for l in range(L):
            if j == l:
                continue
            step = 1 if l > j else -1
            p[j, l] = int(chain_delivers(j, l, step))
    return p


def replay_participation(plan: SchedulePlan, timings: RoundTimings) -> np.ndarray:
    """Discrete-event replay of a plan; independent check of the algebra.

    Runs an event queue of departures and deliveries per direction. A
    departure snapshots the cells known at its source at that instant
    (deliveries at the same timestamp count: they are processed first), so
    any disagreement with `derive_participation` flags a real bug.
    """
    L = timings.num_cells
    p = np.eye(L, dtype=int)
    for step in (1, -1):
        known: list[set[int]] = [{l} for l in range(L)]
        events: list[tuple[float, int, int, tuple[int, int], frozenset[int]]] = []
        seq = itertools.count()
        for (u, v), start in plan.start_times.items():
            if v - u == step:
                heapq.heappush(events, (start, 1, next(seq), (u, v), frozenset()))
        while events:
            time, kind, _, (u, v), payload = heapq.heappop(events)
            if kind == 0:  # delivery
                known[v] |= payload
                if time <= plan.t_max:
                    for j in payload:
                        p[j, v] = 1
            else:  # departure: snapshot and ship
                arrival = time + timings.com(u, v)
                heapq.heappush(
                    events, (arrival, 0, next(seq), (u, v), frozenset(known[u]))
                )
    return p


def objective(participation: np.ndarray, volumes: np.ndarray, direction: str | None = None) -> float:
    """Dissemination utility: reached volume counts for, missed against.

    ``direction`` restricts the sum to origin cells left (right) of the
    destination plus the diagonal for "right", strictly right for "left";
    None sums both, and the two directional values add up to it.
    """
    p = np.asarray(participation)
    L = p.shape[0]
    v = np.asarray(volumes, dtype=float)
    total = 0.0
    for l in range(L):
        for j in range(L):
            if direction == RIGHT and j > l:
                continue
            if direction == LEFT and j <= l:
                continue
            total += v[j] if p[j, l] else -v[j]
    return float(total)


def _direction_utility(
    selected: list[int], graph: ConflictGraph, timings: RoundTimings, volumes: np.ndarray
) -> float:
    paths = [graph.paths[i] for i in selected]
    if graph.direction == RIGHT:
        plan = make_plan(paths, [], timings)
    else:
        plan = make_plan([], paths, timings)
    return objective(derive_participation(plan, timings), volumes, graph.direction)


def local_search(
    graph: ConflictGraph,
    initial: list[int],
    timings: RoundTimings,
    volumes: np.ndarray,
    sweeps: int = 1,
) -> tuple[list[int], float]:
    """Single-swap refinement of the greedy set.

    One sweep tries, for every member of the incumbent and every
    replacement vertex that keeps the set independent, the gap-filled
    utility of the swapped set, and keeps the best strict improvement.
    Extra sweeps repeat from the improved set until a fixed point.
    """
    best = sorted(initial)
    best_u = _direction_utility(fill_gaps(best, graph), graph, timings, volumes)
    for _ in range(max(sweeps, 1)):
        base = list(best)
        improved = False
        for i in base:
            others = [x for x in base if x != i]
            for j in range(len(graph.paths)):
                if j in base:
                    continue
                if any(graph.conflicts(j, k) for k in others):
                    continue
                cand = sorted(others + [j])
                u = _direction_utility(fill_gaps(cand, graph), graph, timings, volumes)
                if u > best_u:
                    best, best_u, improved = cand, u, True
        if not improved:
            break
    return best, best_u


def _fedoc_selection(graph: ConflictGraph) -> list[int]:
    return sorted(i for i, p in enumerate(graph.paths) if p.length == 2)


def solve_direction(
    timings: RoundTimings,
    volumes: np.ndarray,
    direction: str,
    conflict: str = CONFLICT_LINK,
    sweeps: int = 1,
) -> tuple[list[RelayPath], float]:
    """Full pipeline for one direction; returns gap-filled paths and utility.

    The immediate one-hop plan (every active link, no waiting) is always
    evaluated as a fallback so the returned utility can never fall below
    it.
    """
    v = _hat_volumes(timings, volumes)
    active = adjacent_feasibility(timings)
    cands = enumerate_candidate_paths(active, timings, direction, v)
    graph = build_conflict_graph(cands, conflict, direction)
    if not cands:
        return [], objective(np.eye(timings.num_cells, dtype=int), v, direction)
    initial = greedy_initial_set(graph)
    best, best_u = local_search(graph, initial, timings, v, sweeps=sweeps)
    full = fill_gaps(best, graph)
    one_hop = _fedoc_selection(graph)
    if one_hop:
        u_hop = _direction_utility(one_hop, graph, timings, v)
        if u_hop > best_u:
            full, best_u = one_hop, u_hop
    return [graph.paths[i] for i in full], best_u


def schedule_round(
    timings: RoundTimings,
    volumes: np.ndarray,
    conflict: str = CONFLICT_LINK,
    sweeps: int = 1,
) -> ScheduleResult:
    """Solve both directions and assemble the round's relay plan."""
    right, u_r = solve_direction(timings, volumes, RIGHT, conflict, sweeps)
    left, u_l = solve_direction(timings, volumes, LEFT, conflict, sweeps)
    plan = make_plan(right, left, timings)
    participation = derive_participation(plan, timings)
    return ScheduleResult(
        plan=plan,
        participation=participation,
        utility=u_r + u_l,
        paths_right=right,
        paths_left=left,
    )


def fedoc_schedule(timings: RoundTimings, volumes: np.ndarray) -> ScheduleResult:
    """Immediate one-hop relaying on every feasible link, both directions."""
    v = _hat_volumes(timings, volumes)
    active = adjacent_feasibility(timings)
    right = [
        RelayPath(RIGHT, l, l + 1, float(v[l] + v[l + 1]))
        for l in range(timings.num_cells - 1)
        if active[(l, l + 1)]
    ]
    left = [
        RelayPath(LEFT, l + 1, l, float(v[l] + v[l + 1]))
        for l in range(timings.num_cells - 1)
        if active[(l + 1, l)]
    ]
    plan = make_plan(right, left, timings)
    participation = derive_participation(plan, timings)
    u = objective(participation, v, RIGHT) + objective(participation, v, LEFT)
    return ScheduleResult(
        plan=plan, participation=participation, utility=u, paths_right=right, paths_left=left
    )


def empty_schedule(timings: RoundTimings, volumes: np.ndarray) -> ScheduleResult:
    """No relays at all: the intra-cell-only plan shared by HFL-like schemes."""
    v = _hat_volumes(timings, volumes)
    plan = make_plan([], [], timings)
    participation = derive_participation(plan, timings)
    u = objective(participation, v, RIGHT) + objective(participation, v, LEFT)
    return ScheduleResult(
        plan=plan, participation=participation, utility=u, paths_right=[], paths_left=[]
    )


def _independent_sets(graph: ConflictGraph):
    """Yield every independent set of vertex indices (backtracking)."""
    n = len(graph.paths)

    def extend(start: int, current: list[int]):
        yield list(current)
        for i in range(start, n):
            if all(not graph.conflicts(i, j) for j in current):
                current.append(i)
                yield from extend(i + 1, current)
                current.pop()

    yield from extend(0, [])


def exhaustive_oracle_direction(
    graph: ConflictGraph, timings: RoundTimings, volumes: np.ndarray
) -> tuple[float, list[int]]:
    """Exact optimum over all independent sets, gap fill applied to each."""
    if len(graph.paths) > ORACLE_VERTEX_LIMIT:
        raise SizeError(
            f"{len(graph.paths)} candidate paths exceed the oracle guard "
            f"({ORACLE_VERTEX_LIMIT})"
        )
    v = _hat_volumes(timings, volumes)
    best_u = -np.inf
    best: list[int] = []
    cache: dict[tuple[int, ...], float] = {}
    for indep in _independent_sets(graph):
        full = tuple(fill_gaps(indep, graph))
        u = cache.get(full)
        if u is None:
            u = _direction_utility(list(full), graph, timings, v)
            cache[full] = u
        if u > best_u or (u == best_u and list(full) < best):
            best_u, best = u, list(full)
    return float(best_u), best


def exhaustive_oracle(
    timings: RoundTimings, volumes: np.ndarray, conflict: str = CONFLICT_LINK
) -> ScheduleResult:
    """Optimal plan for both directions by exhaustive enumeration."""
    v = _hat_volumes(timings, volumes)
    active = adjacent_feasibility(timings)
    selected: dict[str, list[RelayPath]] = {}
    total_u = 0.0
    for direction in (RIGHT, LEFT):
        cands = enumerate_candidate_paths(active, timings, direction, v)
        graph = build_conflict_graph(cands, conflict, direction)
        if cands:
            u, best = exhaustive_oracle_direction(graph, timings, v)
            selected[direction] = [graph.paths[i] for i in best]
        else:
            u = objective(np.eye(timings.num_cells, dtype=int), v, direction)
            selected[direction] = []
        total_u += u
    plan = make_plan(selected[RIGHT], selected[LEFT], timings)
    participation = derive_participation(plan, timings)
    return ScheduleResult(
        plan=plan,
        participation=participation,
        utility=total_u,
        paths_right=selected[RIGHT],
        paths_left=selected[LEFT],
    )
