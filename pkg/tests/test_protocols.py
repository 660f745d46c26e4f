import dataclasses
import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcs import symplectic as sp
from gcs.entanglement import ppt_test
from gcs.protocols import (
    GraphSpec,
    InvariantViolation,
    build_41_composite,
    build_four_mode_square,
    build_general,
    build_two_mode_composite,
    composite_41_graph,
    edge_owners,
    nullifier_terms,
    nullifiers_for_graph,
    path_graph,
    square_graph,
)
from gcs.state import InvalidArgument, trace_out, validate_state

SIGMA_FIN_08 = np.array([
    [0.43859649122807, 0, 0, 0.35087719298246],
    [0, 2.92, 0.8, 0],
    [0, 0.8, 1.0, 0],
    [0.35087719298246, 0, 0, 1.28070175438596],
])


class TestTwoMode:
    def test_kappa_08_matches_hand_value(self):
        cm = build_two_mode_composite(0.8).final_state.cm
        assert np.allclose(cm, SIGMA_FIN_08, atol=1e-12)

    def test_matches_vacuum_heisenberg_composition(self):
        # Independent route: compose the Heisenberg maps directly on the identity.
        k = 0.8
        m = sp.s_int2(k).heisenberg @ sp.s_int1(k).heisenberg
        cm = m @ m.T
        keep, meas = [0, 1, 2, 3], [4, 6]
        a = cm[np.ix_(keep, keep)]
        b = cm[np.ix_(meas, meas)]
        c = cm[np.ix_(keep, meas)]
        ref = a - c @ np.linalg.inv(b) @ c.T
        assert np.allclose(build_two_mode_composite(k).final_state.cm, ref, atol=1e-13)

    def test_nu_tilde_at_08(self):
        v = ppt_test(build_two_mode_composite(0.8).final_state, ["A"])
        assert v.min_symplectic_eigenvalue == pytest.approx(0.6019, abs=1e-4)
        assert v.entangled

    @pytest.mark.parametrize("k", [0.5, 0.8, 1.0, 1.7])
    def test_entangled_for_positive_kappa(self, k):
        assert ppt_test(build_two_mode_composite(k).final_state, ["A"]).entangled

    def test_zero_kappa_is_product(self):
        cm = build_two_mode_composite(0.0).final_state.cm
        assert np.allclose(cm[:2, 2:], 0, atol=1e-15)

    def test_trace_layout(self):
        tr = build_two_mode_composite(0.8)
        kinds = [s.kind for s in tr.steps]
        assert kinds == ["prepare", "transform", "transform", "measurement", "measurement"]
        assert tr.final_state.labels == ["A", "L"]
        assert len(tr.outcomes) == 2
        d = json.loads(json.dumps(tr.to_json()))
        assert d["protocol"] == "two-mode" and d["params"]["kappa"] == 0.8

    def test_wrong_outcome_count(self):
        with pytest.raises(InvalidArgument):
            build_two_mode_composite(0.8, outcomes=[0.0])
        with pytest.raises(InvalidArgument):
            build_two_mode_composite(0.8, outcomes=[0.0, 0.0, 0.0])

    @pytest.mark.parametrize("k", [-0.1, np.nan, np.inf])
    def test_bad_kappa(self, k):
        with pytest.raises(InvalidArgument):
            build_two_mode_composite(k)


class TestSquare:
    def test_nullifiers_at_r3(self):
        v = build_four_mode_square(1.0, 3.0).nullifier_variances()
        got = np.array(list(v.values()))
        assert np.allclose(got, [0.00992, 0.00248, 0.00248, 0.00992], atol=5e-5)

    def test_nullifier_names(self):
        names = [n for n, _ in nullifier_terms(square_graph())]
        assert names[0] == "p_A1 - x_A2 - x_A3"
        assert len(names) == 4

    @pytest.mark.parametrize("r", [0.0, 1.0, 2.0, 3.0])
    def test_valid_at_every_step(self, r):
        for step in build_four_mode_square(1.0, r).steps:
            assert validate_state(step.state).passed

    def test_general_builder_agrees(self):
        a = build_four_mode_square(1.0, 2.0).final_state.cm
        b = build_general(square_graph(), 1.0, 2.0).final_state.cm
        assert np.array_equal(a, b)

    def test_square_edges_from_pulse_rules(self):
        # every edge carries weight kappa^2: the p-nullifier coefficients are kappa^2
        k = 0.7
        ideal_r = 6.0
        v = build_four_mode_square(k, ideal_r).final_state
        from gcs.entanglement import nullifier, nullifier_variance

        n = nullifier(v, {("A1", "p"): 1, ("A2", "x"): -k * k, ("A3", "x"): -k * k})
        assert nullifier_variance(v, n) < 1e-3


class TestComposite41:
    def test_nullifiers_at_r3(self):
        got = np.array(list(build_41_composite(1.0, 3.0).nullifier_variances().values()))
        assert np.allclose(got, [0.00992, 0.00248, 0.00248, 0.01487, 0.00248], atol=5e-5)

    def test_square_part_unchanged(self):
        sq = list(build_four_mode_square(1.0, 3.0).nullifier_variances().values())
        c = list(build_41_composite(1.0, 3.0).nullifier_variances().values())
        assert np.allclose(sq[:3], c[:3], rtol=1e-9)

    def test_six_outcomes(self):
        tr = build_41_composite(1.0, 1.0, outcomes=[0.1] * 6)
        assert tr.outcomes == [0.1] * 6
        assert tr.final_state.labels == ["A1", "A2", "A3", "A4", "L"]

    def test_general_builder_differs_only_in_realisation(self):
        # build_general lets A4 own the light edge with a single pulse; both are valid clusters
        g = build_general(composite_41_graph(), 1.0, 3.0)
        vals = np.array(list(g.nullifier_variances().values()))
        assert np.all(vals < 0.05)


class TestGraphs:
    def test_duplicate_vertex(self):
        with pytest.raises(InvalidArgument):
            GraphSpec((("a", "atomic"), ("a", "atomic")), ())

    def test_unknown_endpoint(self):
        with pytest.raises(InvalidArgument):
            GraphSpec((("a", "atomic"),), (("a", "b"),))

    def test_self_loop(self):
        with pytest.raises(InvalidArgument):
            GraphSpec((("a", "atomic"),), (("a", "a"),))

    def test_disconnected_warns(self):
        with pytest.warns(RuntimeWarning):
            GraphSpec((("a", "atomic"), ("b", "atomic"), ("c", "atomic")), (("a", "b"),))

    def test_json_roundtrip(self, tmp_path):
        g = composite_41_graph()
        p = tmp_path / "g.json"
        p.write_text(json.dumps(g.to_json()))
        back = GraphSpec.load(p)
        assert back.labels == g.labels and set(map(frozenset, back.edges)) == set(map(frozenset, g.edges))

    def test_light_light_edge_rejected(self):
        g = path_graph(["L1", "L2"], ["light", "light"])
        with pytest.raises(InvalidArgument):
            build_general(g, 1.0, 1.0)

    def test_owners_bipartite(self):
        owners = edge_owners(square_graph())
        assert set(owners.values()) == {"A1", "A4"}

    def test_light_never_owns(self):
        for (a, b), o in edge_owners(composite_41_graph()).items():
            assert o != "L"

    def test_odd_cycle_fallback(self):
        g = GraphSpec((("a", "atomic"), ("b", "atomic"), ("c", "atomic")), (("a", "b"), ("b", "c"), ("a", "c")))
        owners = edge_owners(g)
        assert owners[("a", "b")] == "a" and owners[("b", "c")] == "b"

    def test_two_mode_via_general(self):
        g = path_graph(["A", "L"], ["atomic", "light"])
        a = build_general(g, 0.8, 0.5).final_state.cm
        assert np.array_equal(a, build_two_mode_composite(0.8, 0.5).final_state.cm)

    def test_three_atom_chain(self):
        g = path_graph(["A1", "A2", "A3"])
        got = list(build_general(g, 1.0, 3.0).nullifier_variances().values())
        assert np.allclose(got, [0.00744, 0.00248, 0.00744], atol=5e-5)

    def test_nullifiers_for_graph_default_layout(self):
        ns = nullifiers_for_graph(square_graph())
        assert len(ns) == 4 and ns[0].coeffs.shape == (8,)


@settings(max_examples=15)
@given(st.integers(2, 5), st.integers(0, 2**16), st.floats(0.2, 1.5), st.floats(0.0, 2.0))
def test_random_graphs_build_valid_states(n, seed, k, r):
    rng = np.random.default_rng(seed)
    labels = [f"A{j}" for j in range(n)]
    # random spanning tree plus maybe one extra edge
    edges = {(labels[rng.integers(0, j)], labels[j]) for j in range(1, n)}
    if n > 2 and rng.random() < 0.5:
        a, b = rng.choice(n, 2, replace=False)
        if (labels[b], labels[a]) not in edges:
            edges.add((labels[a], labels[b]))
    g = GraphSpec(tuple((v, "atomic") for v in labels), tuple(sorted(edges)))
    tr = build_general(g, k, r)
    assert validate_state(tr.final_state).passed
    for step in tr.steps:
        assert validate_state(step.state).passed
        if step.transform is not None:
            assert sp.is_symplectic(step.transform.matrix)


@pytest.mark.parametrize("k", [0.3, 1.0])
def test_light_marginal_valid(k):
    s = build_41_composite(k, 1.0).final_state
    assert validate_state(trace_out(s, ["A1", "A2", "A3"])).passed


def test_final_validation_raises_on_broken_state(monkeypatch):
    from gcs import protocols

    real = protocols.validate_state

    def fake(state):
        rep = real(state)
        return dataclasses.replace(rep, positive=False, notes=("forced failure",))

    monkeypatch.setattr(protocols, "validate_state", fake)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(InvariantViolation):
            build_two_mode_composite(0.5)
