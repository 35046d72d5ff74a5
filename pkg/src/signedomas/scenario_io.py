"""Scenario files: parsing, validation and serialisation.

A scenario file is YAML with a version tag.  Unknown keys are rejected so
that fixtures stay stable.  See ``data/paper.scenario`` for a complete
example.

Node values are the consensus states themselves unless a ``robots`` block is
present; then they are robot centre positions and the consensus acts on the
off-axis points ``r + delta * (cos theta, sin theta)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import InvalidGraph, ParseError, ValidationError
from .lyapunov import LyapunovCertificate, certificate_for_mode
from .signed_graph import SignedGraph, edge_laplacian
from .spectral import zero_eigenspace
from .switched_sim import DEFAULT_STEP, Mode, Scenario

FORMAT_VERSION = 1

_TOP_KEYS = {"version", "description", "gains", "integrator", "tolerance", "robots", "nodes", "modes"}
_GAIN_KEYS = {"k1", "Q", "alphas", "N_hat"}
_INTEGRATOR_KEYS = {"step", "t_end"}
_TOLERANCE_KEYS = {"zero", "converge"}
_ROBOT_KEYS = {"delta"}
_NODE_KEYS = {"label", "value", "theta"}
_MODE_KEYS = {"start", "edges"}


@dataclass(frozen=True)
class RobotConfig:
    delta: float
    headings: dict[str, float]


@dataclass(frozen=True)
class ScenarioFile:
    """Everything a scenario file holds: the simulation scenario plus the
    certification settings and optional robot geometry."""

    scenario: Scenario
    node_values: dict[str, tuple[float, ...]]
    Q: Any = "identity"
    alphas: Any = None
    n_hat: float = 1.0
    zero_tol: float = 1e-9
    converge_tol: float = 1e-3
    robots: RobotConfig | None = None
    description: str | None = None
    version: int = FORMAT_VERSION

    def q_for(self, mode: int) -> np.ndarray:
        m = self.scenario.modes[mode].graph.n_edges
        if self.Q == "identity" or self.Q[mode] is None:
            return np.eye(m)
        return np.array(self.Q[mode], dtype=float)

    def alphas_for(self, mode: int, xi: int):
        """Deflation weights for one mode; ``None`` selects the default of ones."""
        if self.alphas is None:
            return None
        if isinstance(self.alphas, float):
            return (self.alphas,) * xi
        return self.alphas[mode]

    def tol_for(self, A) -> float:
        A = np.asarray(A, dtype=float)
        norm = float(np.abs(A).sum(axis=1).max()) if A.size else 0.0
        return self.zero_tol * max(1.0, norm)

    def certificates(self) -> list[LyapunovCertificate]:
        out = []
        for i, m in enumerate(self.scenario.modes):
            L = edge_laplacian(m.graph)
            tol = self.tol_for(L)
            alphas = self.alphas_for(i, zero_eigenspace(L, tol).xi)
            out.append(certificate_for_mode(m.graph, self.scenario.k1, self.q_for(i), alphas, tol))
        return out


class _Reader:
    """Walks the loaded data while remembering the YAML node for line lookups."""

    def __init__(self, text: str):
        try:
            self.root = yaml.compose(text)
            self.data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ParseError(str(getattr(exc, "problem", exc)),
                             line=None if mark is None else mark.line + 1) from None

    def line(self, path) -> int | None:
        node = self.root
        for key in path:
            if isinstance(node, yaml.MappingNode):
                for k, v in node.value:
                    if k.value == key:
                        node = v
                        break
                else:
                    return node.start_mark.line + 1
            elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
                node = node.value[key]
            else:
                break
        return None if node is None else node.start_mark.line + 1

    def fail(self, path, message):
        name = "".join(f"[{p}]" if isinstance(p, int) else (f".{p}" if i else p)
                       for i, p in enumerate(path))
        raise ParseError(message, field=name or None, line=self.line(path))

    def mapping(self, value, path, allowed, required=()):
        if not isinstance(value, dict):
            self.fail(path, "expected a mapping")
        for key in value:
            if key not in allowed:
                self.fail(list(path) + [key], f"unknown key {key!r}")
        for key in required:
            if key not in value:
                self.fail(path, f"missing required key {key!r}")
        return value

    def number(self, value, path, positive=False):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            self.fail(path, "number must be finite")
        if positive and value <= 0:
            self.fail(path, "must be positive")
        return value


def _sign(reader, value, path) -> int:
    if isinstance(value, str):
        value = value.strip()
        if value in ("+", "+1"):
            return 1
        if value in ("-", "-1"):
            return -1
        reader.fail(path, f"sign must be +1 or -1, got {value!r}")
    num = reader.number(value, path)
    if num not in (1.0, -1.0):
        reader.fail(path, f"edge weights are restricted to +1 or -1, got {value!r}")
    return int(num)


def parse_scenario(text: str) -> ScenarioFile:
    r = _Reader(text)
    doc = r.mapping(r.data, [], _TOP_KEYS, required=("version", "nodes", "modes"))
    if doc["version"] != FORMAT_VERSION:
        r.fail(["version"], f"unsupported version {doc['version']!r}; expected {FORMAT_VERSION}")

    gains = r.mapping(doc.get("gains", {}) or {}, ["gains"], _GAIN_KEYS)
    k1 = r.number(gains.get("k1", 1.0), ["gains", "k1"], positive=True)
    n_hat = r.number(gains.get("N_hat", 1.0), ["gains", "N_hat"])
    if n_hat < 0:
        r.fail(["gains", "N_hat"], "must be nonnegative")

    integ = r.mapping(doc.get("integrator", {}) or {}, ["integrator"], _INTEGRATOR_KEYS, required=("t_end",))
    step = r.number(integ.get("step", DEFAULT_STEP), ["integrator", "step"], positive=True)
    t_end = r.number(integ["t_end"], ["integrator", "t_end"], positive=True)

    tol = r.mapping(doc.get("tolerance", {}) or {}, ["tolerance"], _TOLERANCE_KEYS)
    zero_tol = r.number(tol.get("zero", 1e-9), ["tolerance", "zero"], positive=True)
    converge_tol = r.number(tol.get("converge", 1e-3), ["tolerance", "converge"], positive=True)

    robots_raw = doc.get("robots")
    delta = None
    if robots_raw is not None:
        robots_raw = r.mapping(robots_raw, ["robots"], _ROBOT_KEYS, required=("delta",))
        delta = r.number(robots_raw["delta"], ["robots", "delta"], positive=True)

    nodes = doc["nodes"]
    if not isinstance(nodes, list) or not nodes:
        r.fail(["nodes"], "expected a non-empty list of nodes")
    values: dict[str, tuple[float, ...]] = {}
    headings: dict[str, float] = {}
    for i, node in enumerate(nodes):
        path = ["nodes", i]
        node = r.mapping(node, path, _NODE_KEYS, required=("label", "value"))
        label = node["label"]
        if not isinstance(label, (str, int)) or isinstance(label, bool):
            r.fail(path + ["label"], "label must be a string")
        label = str(label)
        if label in values:
            r.fail(path + ["label"], f"duplicate node label {label!r}")
        raw = node["value"]
        if isinstance(raw, list):
            if not raw:
                r.fail(path + ["value"], "empty state vector")
            vec = tuple(r.number(v, path + ["value", j]) for j, v in enumerate(raw))
        else:
            vec = (r.number(raw, path + ["value"]),)
        values[label] = vec
        if "theta" in node:
            if delta is None:
                r.fail(path + ["theta"], "theta is only meaningful with a robots block")
            headings[label] = r.number(node["theta"], path + ["theta"])
        elif delta is not None:
            headings[label] = 0.0
    if len({len(v) for v in values.values()}) != 1:
        r.fail(["nodes"], "all node values must have the same dimension")
    if delta is not None and len(next(iter(values.values()))) != 2:
        r.fail(["nodes"], "robot scenarios need 2D positions")

    modes_raw = doc["modes"]
    if not isinstance(modes_raw, list):
        r.fail(["modes"], "expected a list of modes")
    if not modes_raw:
        raise ValidationError("EmptyModes", "a scenario needs at least one mode")
    modes = []
    for i, m in enumerate(modes_raw):
        path = ["modes", i]
        m = r.mapping(m, path, _MODE_KEYS, required=("start", "edges"))
        start = r.number(m["start"], path + ["start"])
        edges_raw = m["edges"]
        if not isinstance(edges_raw, list):
            r.fail(path + ["edges"], "expected a list of [label_a, label_b, sign] triples")
        order: dict[str, None] = {}
        edges = []
        for k, e in enumerate(edges_raw):
            ep = path + ["edges", k]
            if not isinstance(e, list) or len(e) != 3:
                r.fail(ep, "edge must be [label_a, label_b, sign]")
            a, b = str(e[0]), str(e[1])
            for lab, j in ((a, 0), (b, 1)):
                if lab not in values:
                    r.fail(ep + [j], f"unknown node {lab!r}")
                order.setdefault(lab, None)
            edges.append((a, b, _sign(r, e[2], ep + [2])))
        labels = [lab for lab in values if lab in order]
        try:
            graph = SignedGraph.from_labeled_edges(labels, edges)
        except InvalidGraph as exc:
            raise ValidationError("InvalidGraph", f"mode {i}: {exc}") from None
        modes.append(Mode(graph, start))

    used = {lab for m in modes for lab in m.graph.labels}
    unused = [lab for lab in values if lab not in used]
    if unused:
        raise ValidationError("UnusedNode", f"nodes {unused} never appear in any mode")

    Q = _parse_q(r, gains.get("Q", "identity"), modes)
    alphas = _parse_alphas(r, gains.get("alphas", "default"), modes)

    robots = None
    states = dict(values)
    if delta is not None:
        robots = RobotConfig(delta, headings)
        states = {lab: (v[0] + delta * math.cos(headings[lab]), v[1] + delta * math.sin(headings[lab]))
                  for lab, v in values.items()}
    first = set(modes[0].graph.labels)
    scenario = Scenario(
        modes=tuple(modes),
        k1=k1,
        x0={lab: v for lab, v in states.items() if lab in first},
        new_node_states={lab: v for lab, v in states.items() if lab not in first},
        t_end=t_end,
        step=step,
    )
    return ScenarioFile(scenario, values, Q, alphas, n_hat, zero_tol, converge_tol, robots,
                        doc.get("description"), FORMAT_VERSION)


def _parse_q(r, raw, modes):
    if raw == "identity":
        return "identity"
    if not isinstance(raw, list) or len(raw) != len(modes):
        r.fail(["gains", "Q"], "Q must be 'identity' or a list with one entry per mode")
    out = []
    for i, (q, mode) in enumerate(zip(raw, modes)):
        path = ["gains", "Q", i]
        if q is None or q == "identity":
            out.append(None)
            continue
        m = mode.graph.n_edges
        if not isinstance(q, list) or len(q) != m or any(not isinstance(row, list) or len(row) != m for row in q):
            r.fail(path, f"expected a {m}x{m} matrix")
        out.append(tuple(tuple(r.number(v, path + [a, b]) for b, v in enumerate(row)) for a, row in enumerate(q)))
    return tuple(out)


def _parse_alphas(r, raw, modes):
    if raw in ("default", None):
        return None
    if not isinstance(raw, list):
        return r.number(raw, ["gains", "alphas"], positive=True)
    if len(raw) != len(modes):
        r.fail(["gains", "alphas"], "alphas must be 'default', a number, or one list per mode")
    out = []
    for i, a in enumerate(raw):
        path = ["gains", "alphas", i]
        if a is None or a == "default":
            out.append(None)
        elif isinstance(a, list):
            out.append(tuple(r.number(v, path + [j], positive=True) for j, v in enumerate(a)))
        else:
            r.fail(path, "expected a list of positive numbers")
    return tuple(out)


def serialize_scenario(sf: ScenarioFile) -> str:
    """YAML text that parses back to an equal ScenarioFile."""
    s = sf.scenario
    doc: dict[str, Any] = {"version": sf.version}
    if sf.description is not None:
        doc["description"] = sf.description
    gains: dict[str, Any] = {"k1": s.k1, "N_hat": sf.n_hat}
    gains["Q"] = "identity" if sf.Q == "identity" else [
        None if q is None else [list(row) for row in q] for q in sf.Q]
    if sf.alphas is None:
        gains["alphas"] = "default"
    elif isinstance(sf.alphas, float):
        gains["alphas"] = sf.alphas
    else:
        gains["alphas"] = [None if a is None else list(a) for a in sf.alphas]
    doc["gains"] = gains
    doc["integrator"] = {"step": s.step, "t_end": s.t_end}
    doc["tolerance"] = {"zero": sf.zero_tol, "converge": sf.converge_tol}
    if sf.robots is not None:
        doc["robots"] = {"delta": sf.robots.delta}
    nodes = []
    for lab, v in sf.node_values.items():
        entry: dict[str, Any] = {"label": lab, "value": v[0] if len(v) == 1 else list(v)}
        if sf.robots is not None:
            entry["theta"] = sf.robots.headings[lab]
        nodes.append(entry)
    doc["nodes"] = nodes
    doc["modes"] = [{"start": m.start_time, "edges": [list(e) for e in m.graph.labeled_edges()]}
                    for m in s.modes]
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def rebuild(sf: ScenarioFile, *, k1=None, step=None, t_end=None, headings=None) -> ScenarioFile:
    """Copy of ``sf`` with some settings replaced, validated like a parsed file."""
    doc = yaml.safe_load(serialize_scenario(sf))
    if k1 is not None:
        doc["gains"]["k1"] = float(k1)
    if step is not None:
        doc["integrator"]["step"] = float(step)
    if t_end is not None:
        doc["integrator"]["t_end"] = float(t_end)
    if headings:
        if sf.robots is None:
            raise ValueError("headings need a robots block")
        for node in doc["nodes"]:
            node["theta"] = float(headings.get(node["label"], node["theta"]))
    return parse_scenario(yaml.safe_dump(doc, sort_keys=False))


def load_scenario(path) -> ScenarioFile:
    text = Path(path).read_text(encoding="utf-8")
    return parse_scenario(text)


def paper_scenario_text() -> str:
    return resources.files("signedomas").joinpath("data/paper.scenario").read_text(encoding="utf-8")


def load_paper_scenario() -> ScenarioFile:
    return parse_scenario(paper_scenario_text())
