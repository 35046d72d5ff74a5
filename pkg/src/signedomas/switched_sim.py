"""Switched closed loop of single integrators over a changing signed graph.

Node states are integrated directly (x' = -k1 L_s x) with classical RK4;
edge errors e = E^T x are derived at every sample.  At each switching
instant the edge state jumps as ``e+ = Xi e- + Phi``: Xi carries the edges
that survive unchanged and Phi holds whatever is new (joined nodes, created
edges, flipped signs).

States may be vectors (one column per axis); every axis evolves
independently under the same graph sequence.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, IllegalTransition, NonMonotoneSchedule, ValidationError
from .signed_graph import (
    BalanceResult,
    SignedGraph,
    incidence_matrix,
    is_connected,
    signed_laplacian,
)

DEFAULT_STEP = 1e-3


@dataclass(frozen=True)
class Mode:
    graph: SignedGraph
    start_time: float


def _as_state(value) -> tuple[float, ...]:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.ndim != 1 or not np.all(np.isfinite(arr)):
        raise ValueError(f"invalid node state {value!r}")
    return tuple(float(v) for v in arr)


def graph_key(g: SignedGraph) -> tuple:
    """Orientation-free identity of a labelled signed graph."""
    edges = frozenset((frozenset((a, b)), s) for a, b, s in g.labeled_edges())
    return frozenset(g.labels), edges


@dataclass(frozen=True)
class Scenario:
    """Ordered modes plus gain, initial states and integration settings.

    ``x0`` covers the nodes of the first mode; ``new_node_states`` gives the
    value a node takes when it joins later.  Values are tuples, one entry
    per axis.
    """

    modes: tuple[Mode, ...]
    k1: float
    x0: Mapping[str, tuple[float, ...]]
    new_node_states: Mapping[str, tuple[float, ...]]
    t_end: float
    step: float = DEFAULT_STEP

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "x0", {str(k): _as_state(v) for k, v in self.x0.items()})
        object.__setattr__(self, "new_node_states",
                           {str(k): _as_state(v) for k, v in self.new_node_states.items()})
        validate_scenario(self)

    @property
    def dim(self) -> int:
        return len(next(iter(self.x0.values())))

    @property
    def labels(self) -> tuple[str, ...]:
        """Every node label, in order of first appearance."""
        seen: dict[str, None] = {}
        for m in self.modes:
            for lab in m.graph.labels:
                seen.setdefault(lab, None)
        return tuple(seen)

    def initial_value(self, label: str) -> np.ndarray:
        if label in self.x0:
            return np.array(self.x0[label])
        return np.array(self.new_node_states[label])

    def switch_times(self) -> list[float]:
        return [m.start_time for m in self.modes[1:]]


def check_transition(g_old: SignedGraph, g_new: SignedGraph, joined: Sequence[str] | None = None):
    """Validate one open-system step and return the updated join stack.

    Allowed: at most one node joins, existing edges may flip sign and new
    edges may appear; or the most recently joined node leaves together with
    its edges.  Edges between persisting nodes are never deleted.
    ``joined`` lists nodes that joined after t = 0, oldest first; when it
    is None the recency of a removed node cannot be checked.
    """
    old, new = set(g_old.labels), set(g_new.labels)
    added, removed = new - old, old - new
    stack = None if joined is None else list(joined)
    if added and removed:
        raise IllegalTransition(f"nodes {sorted(removed)} leave while {sorted(added)} join")
    if len(added) > 1:
        raise IllegalTransition(f"only one node may join per switch, got {sorted(added)}")
    if len(removed) > 1:
        raise IllegalTransition(f"only one node may leave per switch, got {sorted(removed)}")
    if removed:
        (gone,) = removed
        if stack is not None:
            if not stack or stack[-1] != gone:
                latest = stack[-1] if stack else None
                raise IllegalTransition(f"node {gone!r} is not the most recently added node ({latest!r})")
            stack.pop()
    if added and stack is not None:
        stack.append(next(iter(added)))
    new_pairs = {frozenset((a, b)) for a, b, _ in g_new.labeled_edges()}
    for a, b, _ in g_old.labeled_edges():
        if a in new and b in new and frozenset((a, b)) not in new_pairs:
            raise IllegalTransition(f"edge {a}-{b} between persisting nodes was deleted")
    return stack


def validate_scenario(s: Scenario) -> None:
    if not s.modes:
        raise ValidationError("EmptyModes", "a scenario needs at least one mode")
    if not s.k1 > 0:
        raise ValidationError("InvalidGain", f"k1 must be positive, got {s.k1}")
    if not s.step > 0:
        raise ValidationError("InvalidStep", f"integration step must be positive, got {s.step}")
    starts = [m.start_time for m in s.modes]
    if starts[0] != 0:
        raise NonMonotoneSchedule("the first mode must start at t = 0")
    bounds = starts + [s.t_end]
    for a, b in zip(bounds, bounds[1:]):
        if not b > a:
            raise NonMonotoneSchedule(f"mode start times must increase strictly and precede t_end ({a} -> {b})")
    first = set(s.modes[0].graph.labels)
    if set(s.x0) != first:
        raise ValidationError("MissingInitialState",
                              f"x0 must cover exactly the first-mode nodes {sorted(first)}")
    dims = {len(v) for v in list(s.x0.values()) + list(s.new_node_states.values())}
    if len(dims) != 1:
        raise ValidationError("DimensionMismatch", f"node states have mixed dimensions {sorted(dims)}")
    joined: list[str] = []
    for i, m in enumerate(s.modes):
        if not is_connected(m.graph):
            raise ValidationError("DisconnectedMode", f"mode {i} graph is not connected")
        for lab in m.graph.labels:
            if lab not in s.x0 and lab not in s.new_node_states:
                raise ValidationError("MissingInitialState", f"node {lab!r} has no initial value")
        if i:
            try:
                joined = check_transition(s.modes[i - 1].graph, m.graph, joined)
            except IllegalTransition as exc:
                raise IllegalTransition(f"mode {i - 1} -> {i}: {exc}") from None


def mode_identities(s: Scenario) -> list[int]:
    """Index of the first mode with the same labelled signed graph, per mode."""
    first: dict[tuple, int] = {}
    return [first.setdefault(graph_key(m.graph), i) for i, m in enumerate(s.modes)]


def _stack(g: SignedGraph, x) -> np.ndarray:
    if isinstance(x, Mapping):
        try:
            return np.array([np.atleast_1d(np.asarray(x[lab], dtype=float)) for lab in g.labels])
        except KeyError as exc:
            raise DimensionMismatch(f"no state given for node {exc.args[0]!r}") from None
    x = np.asarray(x, dtype=float)
    if x.shape[0] != g.n_nodes:
        raise DimensionMismatch(f"state has {x.shape[0]} entries for {g.n_nodes} nodes")
    return x


def edge_error(g: SignedGraph, x) -> np.ndarray:
    """e = E^T x, i.e. e_k = x_tail - sign_k * x_head."""
    return incidence_matrix(g).T @ _stack(g, x)


def control_input(g: SignedGraph, e, k1: float) -> np.ndarray:
    """u = -k1 E e."""
    e = np.asarray(e, dtype=float)
    if e.shape[0] != g.n_edges:
        raise DimensionMismatch(f"edge vector has {e.shape[0]} entries for {g.n_edges} edges")
    return -k1 * (incidence_matrix(g) @ e)


def _rk4(A: np.ndarray, x: np.ndarray, h: float) -> np.ndarray:
    s1 = A @ x
    s2 = A @ (x + 0.5 * h * s1)
    s3 = A @ (x + 0.5 * h * s2)
    s4 = A @ (x + h * s3)
    return x + (h / 6.0) * (s1 + 2.0 * s2 + 2.0 * s3 + s4)


def flow_step(g: SignedGraph, x, k1: float, h: float) -> np.ndarray:
    """One classical RK4 step of x' = -k1 L_s x."""
    if not h > 0:
        raise ValueError("step must be positive")
    return _rk4(-k1 * signed_laplacian(g), _stack(g, x), h)


@dataclass(frozen=True)
class TransitionMap:
    Xi: np.ndarray
    Phi: np.ndarray


def persistence_matrix(g_old: SignedGraph, g_new: SignedGraph) -> np.ndarray:
    """Xi[k_new, k_old] = 1 when both edges join the same labelled pair with the same sign.

    New and sign-flipped edges get zero rows; their values enter through Phi.
    A reversed orientation keeps the row and its effect also lands in Phi.
    """
    old_index = {frozenset((a, b)): (k, s) for k, (a, b, s) in enumerate(g_old.labeled_edges())}
    Xi = np.zeros((g_new.n_edges, g_old.n_edges))
    for k, (a, b, s) in enumerate(g_new.labeled_edges()):
        hit = old_index.get(frozenset((a, b)))
        if hit is not None and hit[1] == s:
            Xi[k, hit[0]] = 1.0
    return Xi


def transition_map(g_old: SignedGraph, g_new: SignedGraph, x_at_switch: Mapping) -> TransitionMap:
    """Jump map of the edge errors at a switch.

    ``x_at_switch`` maps every label of both graphs to its state: persisting
    and leaving nodes carry their value just before the switch, joining
    nodes their initial value.
    """
    check_transition(g_old, g_new)
    Xi = persistence_matrix(g_old, g_new)
    e_old = edge_error(g_old, x_at_switch)
    e_new = edge_error(g_new, x_at_switch)
    return TransitionMap(Xi, e_new - Xi @ e_old)


@dataclass(frozen=True)
class Jump:
    time: float
    from_mode: int
    to_mode: int
    transition: TransitionMap
    e_before: np.ndarray
    e_after: np.ndarray


@dataclass(frozen=True)
class SimulationTrace:
    """Sampled solution of a scenario.

    ``states`` is (samples, nodes, axes) over every label ever present and
    ``edge_errors`` is (samples, edges, axes) over every node pair ever
    linked; absent entries are NaN.  A switching instant appears twice: as
    the last sample of the old mode and the first sample of the new one.
    """

    times: np.ndarray
    mode_index: np.ndarray
    labels: tuple[str, ...]
    edge_pairs: tuple[tuple[str, str], ...]
    states: np.ndarray
    edge_errors: np.ndarray
    jumps: tuple[Jump, ...]
    modes: tuple[Mode, ...]
    node_columns: tuple[tuple[int, ...], ...]
    edge_columns: tuple[tuple[int, ...], ...]
    k1: float = 1.0

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    def segment(self, mode: int) -> slice:
        idx = np.flatnonzero(self.mode_index == mode)
        return slice(int(idx[0]), int(idx[-1]) + 1)

    def mode_states(self, mode: int) -> np.ndarray:
        return self.states[self.segment(mode)][:, list(self.node_columns[mode])]

    def mode_edge_errors(self, mode: int) -> np.ndarray:
        return self.edge_errors[self.segment(mode)][:, list(self.edge_columns[mode])]

    def final_states(self) -> np.ndarray:
        """Node states at t_end in the order of the last mode's graph."""
        return self.states[-1][list(self.node_columns[-1])]

    def final_edge_errors(self) -> np.ndarray:
        return self.edge_errors[-1][list(self.edge_columns[-1])]

    def axis(self, j: int) -> SimulationTrace:
        """The same trace restricted to one state axis."""
        jumps = tuple(
            Jump(jp.time, jp.from_mode, jp.to_mode,
                 TransitionMap(jp.transition.Xi, jp.transition.Phi[:, j:j + 1]),
                 jp.e_before[:, j:j + 1], jp.e_after[:, j:j + 1])
            for jp in self.jumps)
        return SimulationTrace(self.times, self.mode_index, self.labels, self.edge_pairs,
                               self.states[:, :, j:j + 1], self.edge_errors[:, :, j:j + 1],
                               jumps, self.modes, self.node_columns, self.edge_columns, self.k1)


def time_grid(t0: float, t1: float, h: float) -> np.ndarray:
    """Points t0 < t0 + h < ... <= t1 ending exactly on t1 (last step shortened)."""
    n = max(1, math.ceil((t1 - t0) / h - 1e-9))
    ts = t0 + h * np.arange(1, n + 1)
    ts[-1] = t1
    return ts


def _registries(s: Scenario):
    labels = s.labels
    col = {lab: i for i, lab in enumerate(labels)}
    pairs: dict[frozenset, int] = {}
    pair_names = []
    node_cols, edge_cols = [], []
    for m in s.modes:
        node_cols.append(tuple(col[lab] for lab in m.graph.labels))
        ec = []
        for a, b, _ in m.graph.labeled_edges():
            key = frozenset((a, b))
            if key not in pairs:
                pairs[key] = len(pair_names)
                pair_names.append((a, b))
            ec.append(pairs[key])
        edge_cols.append(tuple(ec))
    return labels, tuple(pair_names), tuple(node_cols), tuple(edge_cols)


def simulate(s: Scenario, step: float | None = None, t_end: float | None = None) -> SimulationTrace:
    """Integrate the scenario mode by mode, recording every RK4 step."""
    h = s.step if step is None else step
    t_end = s.t_end if t_end is None else t_end
    if not h > 0:
        raise ValueError("step must be positive")
    labels, pair_names, node_cols, edge_cols = _registries(s)
    bounds = [m.start_time for m in s.modes] + [t_end]
    if not all(b > a for a, b in zip(bounds, bounds[1:])):
        raise NonMonotoneSchedule("t_end must come after the last switch")
    grids = [time_grid(a, b, h) for a, b in zip(bounds, bounds[1:])]
    total = sum(len(g) + 1 for g in grids)
    d = s.dim
    times = np.empty(total)
    mode_index = np.empty(total, dtype=int)
    states = np.full((total, len(labels), d), np.nan)
    errors = np.full((total, len(pair_names), d), np.nan)

    x_full = np.full((len(labels), d), np.nan)
    for lab in s.modes[0].graph.labels:
        x_full[labels.index(lab)] = s.initial_value(lab)
    jumps = []
    row = 0
    prev = None
    for i, (mode, grid) in enumerate(zip(s.modes, grids)):
        g = mode.graph
        if prev is not None:
            snapshot = {lab: x_full[c] for lab, c in zip(prev.labels, node_cols[i - 1])}
            for lab in g.labels:
                if lab not in snapshot:
                    snapshot[lab] = s.initial_value(lab)
            tm = transition_map(prev, g, snapshot)
            for c in node_cols[i - 1]:
                if labels[c] not in g.labels:
                    x_full[c] = np.nan
            for lab, c in zip(g.labels, node_cols[i]):
                x_full[c] = snapshot[lab]
            jumps.append(Jump(mode.start_time, i - 1, i, tm,
                              edge_error(prev, snapshot), edge_error(g, snapshot)))
        cols, ecols = list(node_cols[i]), list(edge_cols[i])
        A = -s.k1 * signed_laplacian(g)
        Et = incidence_matrix(g).T
        x = x_full[cols].copy()
        t_prev = mode.start_time
        times[row], mode_index[row] = t_prev, i
        states[row, cols] = x
        errors[row, ecols] = Et @ x
        row += 1
        for t in grid:
            x = _rk4(A, x, t - t_prev)
            t_prev = t
            times[row], mode_index[row] = t, i
            states[row, cols] = x
            errors[row, ecols] = Et @ x
            row += 1
        x_full[cols] = x
        prev = g
    return SimulationTrace(times, mode_index, labels, pair_names, states, errors, tuple(jumps),
                           s.modes, node_cols, edge_cols, float(s.k1))


@dataclass(frozen=True)
class Outcome:
    """Terminal behaviour: ``kind`` is 'bipartite', 'trivial' or 'not_converged'."""

    kind: str
    alpha: tuple[float, ...] | None = None
    partition: tuple[tuple[str, ...], tuple[str, ...]] | None = None
    edge_error_norm: float = 0.0
    deviation: float = 0.0


def classify_outcome(trace: SimulationTrace, final_graph: SignedGraph, balance: BalanceResult,
                     tol: float = 1e-3) -> Outcome:
    """Decide bipartite vs trivial consensus from the state at t_end.

    Bipartite requires x(t_end) to be within ``tol`` of alpha * d for the
    gauge d (alpha fitted by least squares, per axis); trivial requires
    |x(t_end)| <= tol.  Both require the final edge errors within ``tol``.
    """
    x = trace.final_states()
    e = trace.final_edge_errors()
    e_norm = float(np.abs(e).max()) if e.size else 0.0
    if e_norm > tol:
        return Outcome("not_converged", edge_error_norm=e_norm)
    if balance.balanced:
        dvec = np.asarray(balance.gauge, dtype=float)
        alpha = dvec @ x / len(dvec)
        dev = float(np.abs(x - np.outer(dvec, alpha)).max())
        if dev <= tol:
            return Outcome("bipartite", tuple(float(a) for a in alpha), balance.partition(final_graph),
                           e_norm, dev)
        return Outcome("not_converged", edge_error_norm=e_norm, deviation=dev)
    dev = float(np.abs(x).max())
    if dev <= tol:
        return Outcome("trivial", edge_error_norm=e_norm, deviation=dev)
    return Outcome("not_converged", edge_error_norm=e_norm, deviation=dev)
