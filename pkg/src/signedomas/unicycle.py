"""Unicycle robots driven through an off-axis point.

A unicycle at ``r`` with heading ``theta`` moves as ``r' = v (cos, sin)``,
``theta' = omega``.  The point ``p = r + delta (cos theta, sin theta)`` has
``p' = u`` under :func:`linearizing_control`, so the consensus law can be
applied to the p-points as if they were single integrators.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import NonpositiveDelta
from .signed_graph import check_structural_balance, signed_laplacian
from .switched_sim import Outcome, SimulationTrace, _registries, classify_outcome, simulate, time_grid


def wrap_angle(theta):
    """Map angles into (-pi, pi]."""
    w = np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2.0 * np.pi)
    return float(w) if np.ndim(w) == 0 else w


@dataclass(frozen=True)
class UnicycleState:
    r_x: float
    r_y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))


@dataclass(frozen=True)
class OffAxisPoint:
    p_x: float
    p_y: float
    delta: float

    @classmethod
    def of(cls, s: UnicycleState, delta: float) -> OffAxisPoint:
        if not delta > 0:
            raise NonpositiveDelta(f"delta must be positive, got {delta}")
        return cls(s.r_x + delta * math.cos(s.theta), s.r_y + delta * math.sin(s.theta), float(delta))


def linearizing_control(theta, delta: float, u) -> tuple:
    """Inputs (v, omega) that make the off-axis point move with velocity u."""
    if not delta > 0:
        raise NonpositiveDelta(f"delta must be positive, got {delta}")
    u = np.asarray(u, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    v = u[..., 0] * c + u[..., 1] * s
    omega = (-u[..., 0] * s + u[..., 1] * c) / delta
    if np.ndim(v) == 0:
        return float(v), float(omega)
    return v, omega


def _rhs(z: np.ndarray, v, omega) -> np.ndarray:
    return np.stack([v * np.cos(z[..., 2]), v * np.sin(z[..., 2]), np.broadcast_to(omega, z[..., 2].shape)], axis=-1)


def unicycle_step(s: UnicycleState, v: float, omega: float, h: float) -> UnicycleState:
    """One RK4 step with (v, omega) held constant."""
    if not h > 0:
        raise ValueError("step must be positive")
    z = np.array([s.r_x, s.r_y, s.theta])
    k1 = _rhs(z, v, omega)
    k2 = _rhs(z + 0.5 * h * k1, v, omega)
    k3 = _rhs(z + 0.5 * h * k2, v, omega)
    k4 = _rhs(z + h * k3, v, omega)
    z = z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return UnicycleState(float(z[0]), float(z[1]), float(z[2]))


def tracking_step(s: UnicycleState, u, delta: float, h: float) -> UnicycleState:
    """RK4 step of one robot whose p-point is commanded to move at constant velocity u."""
    u = np.asarray(u, dtype=float)

    def f(z):
        v, omega = linearizing_control(z[2], delta, u)
        return np.array([v * math.cos(z[2]), v * math.sin(z[2]), omega])

    z = np.array([s.r_x, s.r_y, s.theta])
    k1 = f(z)
    k2 = f(z + 0.5 * h * k1)
    k3 = f(z + 0.5 * h * k2)
    k4 = f(z + h * k3)
    z = z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return UnicycleState(float(z[0]), float(z[1]), float(z[2]))


def off_axis_points(z: np.ndarray, delta: float) -> np.ndarray:
    """p-points for an (n, 3) array of robot states."""
    return z[:, :2] + delta * np.column_stack([np.cos(z[:, 2]), np.sin(z[:, 2])])


def _closed_loop(z: np.ndarray, A: np.ndarray, delta: float) -> np.ndarray:
    c, s = np.cos(z[:, 2]), np.sin(z[:, 2])
    p = z[:, :2] + delta * np.column_stack([c, s])
    u = A @ p
    v = u[:, 0] * c + u[:, 1] * s
    out = np.empty_like(z)
    out[:, 0] = v * c
    out[:, 1] = v * s
    out[:, 2] = (-u[:, 0] * s + u[:, 1] * c) / delta
    return out


def closed_loop_step(z: np.ndarray, A: np.ndarray, delta: float, h: float) -> np.ndarray:
    """RK4 step of all robots under u = A p with the linearizing inputs."""
    k1 = _closed_loop(z, A, delta)
    k2 = _closed_loop(z + 0.5 * h * k1, A, delta)
    k3 = _closed_loop(z + 0.5 * h * k2, A, delta)
    k4 = _closed_loop(z + h * k3, A, delta)
    return z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass(frozen=True)
class RobotTrajectories:
    """Robot states sampled on the consensus time grid.

    ``states`` is (samples, robots, 3) holding r_x, r_y and the wrapped
    heading; ``points`` is (samples, robots, 2).  Absent robots are NaN.
    """

    times: np.ndarray
    mode_index: np.ndarray
    labels: tuple[str, ...]
    states: np.ndarray
    points: np.ndarray
    delta: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "robot", "r_x", "r_y", "theta", "p_x", "p_y"])
        for i, t in enumerate(self.times):
            for j, lab in enumerate(self.labels):
                z = self.states[i, j]
                if np.isnan(z[0]):
                    continue
                p = self.points[i, j]
                w.writerow([fmt(t), lab, fmt(z[0]), fmt(z[1]), fmt(z[2]), fmt(p[0]), fmt(p[1])])
        return buf.getvalue()


def fmt(x: float) -> str:
    return "" if math.isnan(x) else f"{x:.12g}"


def simulate_robots(sf, step: float | None = None, t_end: float | None = None) -> RobotTrajectories:
    """Integrate the full unicycle team on the same grid as :func:`simulate`."""
    if sf.robots is None:
        raise ValueError("scenario has no robots block")
    s = sf.scenario
    delta = sf.robots.delta
    h = s.step if step is None else step
    t_end = s.t_end if t_end is None else t_end
    labels, _, node_cols, _ = _registries(s)
    bounds = [m.start_time for m in s.modes] + [t_end]
    grids = [time_grid(a, b, h) for a, b in zip(bounds, bounds[1:])]
    total = sum(len(g) + 1 for g in grids)
    times = np.empty(total)
    mode_index = np.empty(total, dtype=int)
    states = np.full((total, len(labels), 3), np.nan)

    z_full = np.full((len(labels), 3), np.nan)
    row = 0
    for i, (mode, grid) in enumerate(zip(s.modes, grids)):
        cols = list(node_cols[i])
        for c in range(len(labels)):
            if c not in cols:
                z_full[c] = np.nan
        for c in cols:
            if np.isnan(z_full[c, 0]):
                lab = labels[c]
                r = sf.node_values[lab]
                z_full[c] = (r[0], r[1], sf.robots.headings[lab])
        A = -s.k1 * signed_laplacian(mode.graph)
        z = z_full[cols].copy()
        t_prev = mode.start_time
        times[row], mode_index[row] = t_prev, i
        states[row, cols] = z
        row += 1
        for t in grid:
            z = closed_loop_step(z, A, delta, t - t_prev)
            t_prev = t
            times[row], mode_index[row] = t, i
            states[row, cols] = z
            row += 1
        z_full[cols] = z
    points = states[:, :, :2] + delta * np.stack([np.cos(states[:, :, 2]), np.sin(states[:, :, 2])], axis=-1)
    states[:, :, 2] = wrap_angle(states[:, :, 2])
    return RobotTrajectories(times, mode_index, labels, states, points, delta)


@dataclass(frozen=True)
class DemoResult:
    trace: SimulationTrace
    axes: tuple[SimulationTrace, SimulationTrace]
    robots: RobotTrajectories
    outcomes: tuple[Outcome, Outcome]


def run_paper_demo(scenario_file=None, *, k1: float | None = None, step: float | None = None,
                   t_end: float | None = None, headings: dict | None = None) -> DemoResult:
    """Run the bundled robot scenario (or another robot scenario) end to end.

    The keyword arguments override the file's gain, step, horizon and
    initial headings.
    """
    from .scenario_io import load_paper_scenario, rebuild

    sf = load_paper_scenario() if scenario_file is None else scenario_file
    if k1 is not None or step is not None or t_end is not None or headings is not None:
        sf = rebuild(sf, k1=k1, step=step, t_end=t_end, headings=headings)
    trace = simulate(sf.scenario)
    robots = simulate_robots(sf)
    final = sf.scenario.modes[-1].graph
    balance = check_structural_balance(final)
    axes = (trace.axis(0), trace.axis(1))
    outcomes = tuple(classify_outcome(a, final, balance, sf.converge_tol) for a in axes)
    return DemoResult(trace, axes, robots, outcomes)


__all__ = [
    "UnicycleState", "OffAxisPoint", "wrap_angle", "linearizing_control", "unicycle_step", "tracking_step",
    "off_axis_points", "closed_loop_step", "simulate_robots", "RobotTrajectories", "DemoResult",
    "run_paper_demo",
]
