import dataclasses

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from _corpus import G1, G2, G3, G4, G5, G6, POSITIONS, random_connected, random_tree
from signedomas.errors import DimensionMismatch, IllegalTransition, NonMonotoneSchedule, ValidationError
from signedomas.lyapunov import certificate_for_mode
from signedomas.signed_graph import (SignedGraph, check_structural_balance, edge_laplacian,
                                     gauge_matrices, incidence_matrix, signed_laplacian)
from signedomas.switched_sim import (Mode, Scenario, check_transition, classify_outcome, control_input,
                                     edge_error, flow_step, simulate, time_grid, transition_map)


def scenario(modes, starts, t_end, values=None, k1=1.0, step=1e-3):
    values = values or {lab: (POSITIONS[lab][0],) for lab in POSITIONS}
    first = set(modes[0].labels)
    return Scenario(tuple(Mode(g, t) for g, t in zip(modes, starts)), k1,
                    {lab: v for lab, v in values.items() if lab in first},
                    {lab: v for lab, v in values.items() if lab not in first}, t_end, step)


@pytest.fixture(scope="module")
def bundled():
    s = scenario([G1, G2, G3, G4, G5, G6], [0.0, 1.3, 2.5, 5.5, 10.0, 15.0], 30.0,
                 values={lab: (p[0] + 0.1, p[1]) for lab, p in POSITIONS.items()})
    return s, simulate(s)


class TestControl:
    def test_examples(self):
        coop, anta = SignedGraph(2, ((0, 1, 1),)), SignedGraph(2, ((0, 1, -1),))
        np.testing.assert_array_equal(control_input(coop, [0.0], 1.0), [0, 0])
        np.testing.assert_array_equal(control_input(coop, edge_error(coop, [1.0, 0.0]), 2.0), [-2, 2])
        np.testing.assert_array_equal(control_input(anta, edge_error(anta, [1.0, 0.0]), 2.0), [-2, -2])

    def test_component_form(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            g = random_connected(rng, int(rng.integers(2, 8)))
            x = rng.standard_normal(g.n_nodes)
            k1 = float(rng.uniform(0.1, 3))
            u = control_input(g, edge_error(g, x), k1)
            expected = np.zeros(g.n_nodes)
            for t, h, s in g.edges:
                expected[t] -= k1 * (x[t] - s * x[h])
                expected[h] -= k1 * (x[h] - s * x[t])
            np.testing.assert_allclose(u, expected, atol=1e-12)

    def test_dimension(self):
        with pytest.raises(DimensionMismatch):
            control_input(G1, np.zeros(3), 1.0)


class TestFlow:
    def test_equilibrium(self):
        D, _ = gauge_matrices(G1, check_structural_balance(G1))
        x = 2.5 * np.diag(D)
        np.testing.assert_allclose(flow_step(G1, x, 1.0, 0.1), x, atol=1e-15)

    def test_two_node_decay(self):
        g = SignedGraph(2, ((0, 1, 1),))
        x = np.array([1.0, -1.0])
        h = 1e-3
        for n in range(1, 1001):
            x = flow_step(g, x, 1.0, h)
        assert abs((x[0] - x[1]) - 2 * np.exp(-2.0)) <= 1e-10

    def test_cooperative_sum_conserved(self):
        rng = np.random.default_rng(5)
        g = random_tree(rng, 6).unsigned()
        x = rng.standard_normal(6)
        for _ in range(100):
            y = flow_step(g, x, 1.3, 0.01)
            assert abs(y.sum() - x.sum()) <= 1e-9
            x = y

    def test_fifth_order_local_error(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            g = random_connected(rng, 5)
            A = -signed_laplacian(g)
            x = rng.standard_normal(5)
            errs = []
            for h in (0.04, 0.02, 0.01):
                errs.append(np.abs(flow_step(g, x, 1.0, h) - scipy.linalg.expm(h * A) @ x).max())
            consts = [e / h ** 5 for e, h in zip(errs, (0.04, 0.02, 0.01))]
            assert max(consts) <= 2 * np.abs(A).sum(axis=1).max() ** 5 * np.abs(x).max()
            assert np.log2(errs[0] / errs[1]) > 4.5

    def test_rejects_step(self):
        with pytest.raises(ValueError):
            flow_step(G1, np.zeros(4), 1.0, 0.0)


class TestTransitionMap:
    def test_identity(self):
        x = {lab: np.array([v[0]]) for lab, v in POSITIONS.items()}
        tm = transition_map(G3, G3, x)
        np.testing.assert_array_equal(tm.Xi, np.eye(6))
        np.testing.assert_array_equal(tm.Phi, np.zeros((6, 1)))

    def test_node_joins(self):
        x = {lab: np.array([float(i + 1)]) for i, lab in enumerate(POSITIONS)}
        tm = transition_map(G1, G2, x)
        np.testing.assert_array_equal(tm.Xi, np.vstack([np.eye(4), np.zeros((1, 4))]))
        np.testing.assert_array_equal(tm.Phi[:, 0], [0, 0, 0, 0, x["v1"][0] - x["v5"][0]])

    def test_sign_flip(self):
        x = {lab: np.array([float(i + 1) ** 2]) for i, lab in enumerate(POSITIONS)}
        tm = transition_map(G3, G4, x)
        expected = np.eye(6)
        expected[1, 1] = 0
        np.testing.assert_array_equal(tm.Xi, expected)
        np.testing.assert_array_equal(tm.Phi[:, 0], [0, x["v1"][0] + x["v3"][0], 0, 0, 0, 0])

    def test_reversed_orientation_stays_in_xi(self):
        x = {"a": np.array([1.0]), "b": np.array([3.0])}
        g_old = SignedGraph.from_labeled_edges(["a", "b"], [("a", "b", 1)])
        g_new = SignedGraph.from_labeled_edges(["a", "b"], [("b", "a", 1)])
        tm = transition_map(g_old, g_new, x)
        np.testing.assert_array_equal(tm.Xi, [[1.0]])
        np.testing.assert_array_equal(edge_error(g_new, x), tm.Xi @ edge_error(g_old, x) + tm.Phi)

    def test_two_nodes_joining(self):
        x = {lab: np.array([0.0]) for lab in POSITIONS}
        with pytest.raises(IllegalTransition):
            transition_map(G1, G3, x)

    def test_only_latest_node_may_leave(self):
        without_v5 = SignedGraph.from_labeled_edges(
            ["v1", "v2", "v3", "v4", "v6", "v7"], [e for e in G5.labeled_edges() if "v5" not in e])
        with pytest.raises(IllegalTransition, match="most recently"):
            check_transition(G5, without_v5, ["v5", "v6", "v7"])
        without_v7 = SignedGraph.from_labeled_edges(
            ["v1", "v2", "v3", "v4", "v5", "v6"], [e for e in G5.labeled_edges() if "v7" not in e])
        assert check_transition(G5, without_v7, ["v5", "v6", "v7"]) == ["v5", "v6"]

    def test_deleting_persisting_edge(self):
        g = SignedGraph.from_labeled_edges(["v1", "v2", "v3", "v4"], G1.labeled_edges()[:3])
        with pytest.raises(IllegalTransition):
            check_transition(G1, g, [])


class TestScenarioValidation:
    def test_empty(self):
        with pytest.raises(ValidationError) as exc:
            Scenario((), 1.0, {}, {}, 1.0)
        assert exc.value.rule == "EmptyModes"

    def test_disconnected(self):
        g = SignedGraph.from_labeled_edges(["a", "b", "c"], [("a", "b", 1)])
        with pytest.raises(ValidationError) as exc:
            Scenario((Mode(g, 0.0),), 1.0, {"a": 0, "b": 0, "c": 0}, {}, 1.0)
        assert exc.value.rule == "DisconnectedMode"

    def test_missing_state(self):
        with pytest.raises(ValidationError) as exc:
            scenario([G1, G2], [0.0, 1.0], 2.0, values={lab: (0.0,) for lab in ("v1", "v2", "v3", "v4")})
        assert exc.value.rule == "MissingInitialState"

    def test_non_monotone(self):
        with pytest.raises(NonMonotoneSchedule):
            scenario([G1, G2], [0.0, 3.0], 2.0)
        with pytest.raises(NonMonotoneSchedule):
            scenario([G1, G2], [0.5, 1.0], 2.0)

    def test_removal_of_older_node(self):
        g = SignedGraph.from_labeled_edges(["v1", "v2", "v3", "v4", "v6"],
                                           [e for e in G3.labeled_edges() if "v5" not in e])
        with pytest.raises(IllegalTransition):
            scenario([G1, G2, G3, g], [0.0, 1.0, 2.0, 3.0], 4.0)

    def test_latest_node_may_leave(self):
        s = scenario([G1, G2, G1], [0.0, 1.0, 2.0], 3.0)
        tr = simulate(s)
        assert np.all(np.isnan(tr.states[tr.mode_index == 2][:, s.labels.index("v5")]))


class TestSimulate:
    def test_time_grid(self):
        ts = time_grid(1.3, 2.5, 1e-3)
        assert ts[-1] == 2.5 and len(ts) == 1200
        assert time_grid(0.0, 1.0, 0.3)[-1] == 1.0

    def test_tree_envelope(self):
        rng = np.random.default_rng(7)
        g = random_tree(rng, 5)
        labels = g.labels
        x0 = rng.standard_normal(5)
        s = Scenario((Mode(g, 0.0),), 1.5, dict(zip(labels, x0)), {}, 3.0)
        tr = simulate(s)
        L = edge_laplacian(g)
        w, V = np.linalg.eigh(L)
        e0 = edge_error(g, x0.reshape(-1, 1))[:, 0]
        for t, e in zip(tr.times[::100], tr.edge_errors[::100, :, 0]):
            exact = V @ (np.exp(-1.5 * w * t) * (V.T @ e0))
            np.testing.assert_allclose(e, exact, atol=1e-10)
            assert np.linalg.norm(e) <= np.linalg.norm(e0) * np.exp(-w[0] * 1.5 * t) * (1 + 1e-9)

    def test_zero_state(self):
        s = scenario([G1, G2, G3, G4, G5, G6], [0.0, 1.3, 2.5, 5.5, 10.0, 15.0], 20.0,
                     values={lab: (0.0,) for lab in POSITIONS})
        tr = simulate(s)
        assert np.nanmax(np.abs(tr.states)) == 0
        for j in tr.jumps:
            assert np.all(j.transition.Phi == 0)

    def test_consistency(self, bundled):
        s, tr = bundled
        assert tr.dim == 2 and len(tr.jumps) == 5
        for i, m in enumerate(s.modes):
            E = incidence_matrix(m.graph)
            x = tr.mode_states(i)
            e = tr.mode_edge_errors(i)
            np.testing.assert_allclose(e, np.einsum("nk,tnd->tkd", E, x), atol=1e-9)
        for j in tr.jumps:
            lhs = j.e_after
            np.testing.assert_allclose(lhs, j.transition.Xi @ j.e_before + j.transition.Phi, atol=1e-12, rtol=0)

    def test_continuity_and_joins(self, bundled):
        s, tr = bundled
        for j in tr.jumps:
            rows = np.flatnonzero(tr.times == j.time)
            before, after = tr.states[rows[0]], tr.states[rows[1]]
            for lab in s.modes[j.from_mode].graph.labels:
                c = tr.labels.index(lab)
                np.testing.assert_array_equal(before[c], after[c])
            for lab in set(s.modes[j.to_mode].graph.labels) - set(s.modes[j.from_mode].graph.labels):
                np.testing.assert_array_equal(after[tr.labels.index(lab)], s.initial_value(lab))

    def test_lyapunov_nonincreasing(self, bundled):
        s, tr = bundled
        for i, m in enumerate(s.modes):
            cert = certificate_for_mode(m.graph)
            e = tr.mode_edge_errors(i)
            V = 0.5 * np.einsum("tkd,kl,tld->t", e, cert.P, e)
            assert np.all(np.diff(V) <= 1e-9)

    def test_gauge_reduction(self):
        s = scenario([G1, G2, G3], [0.0, 1.0, 2.0], 4.0)
        tr = simulate(s)
        d = dict(zip(G3.labels, check_structural_balance(G3).gauge))
        unsigned = [g.unsigned() for g in (G1, G2, G3)]
        vals = {lab: (d[lab] * POSITIONS[lab][0],) for lab in G3.labels}
        tr_u = simulate(scenario(unsigned, [0.0, 1.0, 2.0], 4.0, values=vals))
        D = np.array([d[lab] for lab in tr.labels])
        np.testing.assert_allclose(tr_u.states[:, :, 0], tr.states[:, :, 0] * D, atol=1e-8)

    def test_terminal_spectral_oracle(self, bundled):
        s, tr = bundled
        L = edge_laplacian(G6)
        w, V = np.linalg.eigh(L)
        zero, pos = V[:, np.abs(w) < 1e-9], V[:, np.abs(w) >= 1e-9]
        lam = w[np.abs(w) >= 1e-9].min()
        e = tr.mode_edge_errors(5)
        t = tr.times[tr.segment(5)] - 15.0
        for axis in range(2):
            assert np.abs(zero.T @ e[:, :, axis].T).max() <= 1e-9
            norms = np.linalg.norm(pos.T @ e[:, :, axis].T, axis=0)
            assert np.all(norms <= norms[0] * np.exp(-lam * t) * (1 + 1e-9))


class TestClassify:
    def _trace_with_final(self, g, final):
        labels = g.labels
        s = Scenario((Mode(g, 0.0),), 1.0, {lab: 0.0 for lab in labels}, {}, 0.01)
        tr = simulate(s)
        states = tr.states.copy()
        states[-1, :, 0] = final
        errors = tr.edge_errors.copy()
        errors[-1, :, 0] = incidence_matrix(g).T @ np.asarray(final, dtype=float)
        return dataclasses.replace(tr, states=states, edge_errors=errors)

    def test_bipartite(self):
        tr = self._trace_with_final(G1, [2, -2, 2, -2])
        out = classify_outcome(tr, G1, check_structural_balance(G1))
        assert out.kind == "bipartite" and out.alpha == (2.0,)
        assert out.partition == (("v1", "v3"), ("v2", "v4"))

    def test_trivial(self):
        tr = self._trace_with_final(G4, [0.0] * 6)
        assert classify_outcome(tr, G4, check_structural_balance(G4)).kind == "trivial"

    def test_not_converged(self):
        tr = self._trace_with_final(G1, [2, 2, 2, -2])
        assert classify_outcome(tr, G1, check_structural_balance(G1)).kind == "not_converged"
