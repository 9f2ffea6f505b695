import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpus import corpus
from pecmdp.compiler import (
    ActionSituationCodec,
    StateCodec,
    apply_outcome,
    build_action_situations,
    build_initial_distribution,
    build_state_codec,
    compile_domain,
    mdp_from_json,
    mdp_to_json,
    normalize_instants,
)
from pecmdp.core import (
    CapacityError,
    CProposition,
    Domain,
    FluentDecl,
    FluentState,
    IProposition,
    PartialFluentState,
    PProposition,
    ValidationError,
    entails,
)
from pecmdp.parser import parse_domain

F = FluentDecl("F", ("a", "b"))
G = FluentDecl("G", ("x", "y"))


def _domain(fluents=(F, G), actions=("A", "B"), instants=("0", "1", "2"), init=None, cprops=(), pprops=()):
    if init is None:
        init = [({d.name: d.values[0] for d in fluents}, 1.0)]
    ip = IProposition(tuple((FluentState(s), p) for s, p in init))
    return Domain(tuple(fluents), tuple(actions), tuple(instants), ip, tuple(cprops), tuple(pprops))


def _pp(action, instant, p, cond=()):
    return PProposition(action, instant, p, PartialFluentState(cond))


# Time normalisation

@pytest.mark.parametrize("labels, expected", [
    (("3", "5", "9"), {"3": 0, "5": 1, "9": 2}),
    (("0", "1", "2", "3"), {"0": 0, "1": 1, "2": 2, "3": 3}),
    (("7",), {"7": 0}),
])
def test_normalize_instants(labels, expected):
    assert normalize_instants(_domain(instants=labels)) == expected


# State codec

def test_codec_2x2():
    codec = build_state_codec(_domain())
    got = {codec.vector_of_index(s): s for s in range(codec.n_states)}
    assert got == {(0, 0): 0, (0, 1): 1, (1, 0): 2, (1, 1): 3}
    assert codec.encode({"F": "b", "G": "x"}) == 2


def test_codec_single_fluent():
    codec = build_state_codec(_domain(fluents=(FluentDecl("Lamp", ("off", "on")),)))
    assert codec.encode({"Lamp": "off"}) == 0 and codec.encode({"Lamp": "on"}) == 1


def test_codec_3x2_against_sorted_enumeration():
    codec = StateCodec(("F", "G"), (("a", "b", "c"), ("x", "y")))
    vectors = sorted(itertools.product(range(3), range(2)))
    assert vectors.index((1, 1)) == 3
    assert codec.encode({"F": "b", "G": "y"}) == 3
    for s, v in enumerate(vectors):
        assert codec.index_of_vector(v) == s


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(2, 4), min_size=1, max_size=4))
def test_codec_laws(radices):
    codec = StateCodec(tuple(f"F{i}" for i in range(len(radices))),
                       tuple(tuple(f"v{j}" for j in range(r)) for r in radices))
    vectors = list(itertools.product(*(range(r) for r in radices)))
    assert codec.n_states == len(vectors) == math.prod(radices)
    for s, v in enumerate(vectors):  # product() yields lexicographic order
        assert codec.index_of_vector(v) == s
        assert codec.vector_of_index(s) == v
        assert codec.encode(codec.decode(s)) == s
    assert np.array_equal(codec.vectors, np.array(vectors))


def test_codec_matches_filters():
    codec = build_state_codec(_domain())
    assert codec.matches({"F": "a"}).tolist() == [True, True, False, False]
    assert codec.matches({}).all()


def test_state_cap():
    with pytest.raises(CapacityError):
        build_state_codec(_domain(), max_states=3)


# Action-taking situations

def _sits(acodec):
    return [set(s) for s in acodec.situations]


def test_situations_powerset_union():
    d = _domain(pprops=[_pp("A", "1", 0.5), _pp("A", "2", 0.5), _pp("B", "2", 0.5)])
    assert _sits(build_action_situations(d)) == [set(), {"A"}, {"B"}, {"A", "B"}]


def test_situations_without_pprops():
    assert _sits(build_action_situations(_domain())) == [set()]


def test_situations_never_coperformed():
    d = _domain(pprops=[_pp("A", "1", 0.5), _pp("B", "2", 0.5)])
    assert _sits(build_action_situations(d)) == [set(), {"A"}, {"B"}]


def test_situations_include_cprop_bodies():
    c = CProposition(frozenset({"A", "B"}), PartialFluentState(), ((PartialFluentState({"F": "b"}), 1.0),))
    d = _domain(cprops=[c], pprops=[_pp("A", "1", 0.5)])
    assert _sits(build_action_situations(d)) == [set(), {"A"}, {"A", "B"}]
    assert _sits(build_action_situations(d, include_cprop_bodies=False)) == [set(), {"A"}]


def test_situation_codec_rejects_missing_null():
    with pytest.raises(ValueError):
        ActionSituationCodec((frozenset({"A"}),))


# Initial distribution and outcome update

def test_initial_distribution():
    codec = build_state_codec(_domain())
    d = _domain(init=[({"F": "a", "G": "x"}, 0.3), ({"F": "b", "G": "y"}, 0.7)])
    assert build_initial_distribution(d, codec).tolist() == [0.3, 0.0, 0.0, 0.7]
    states = [{"F": f, "G": g} for f in "ab" for g in "xy"]
    d = _domain(init=[(s, 0.25) for s in states])
    assert build_initial_distribution(d, codec).tolist() == [0.25] * 4


def test_coin_lamp_p0(coin_mdp):
    assert coin_mdp.p0.tolist() == [1.0, 0.0]


def test_apply_outcome():
    codec = build_state_codec(_domain())
    assert apply_outcome({}, (1, 0), codec) == (1, 0)
    assert apply_outcome({"G": "y"}, (0, 0), codec) == (0, 1)
    total = {"F": "b", "G": "x"}
    assert {apply_outcome(total, x, codec) for x in itertools.product(range(2), range(2))} == {(1, 0)}


# Transition tensor

def test_coin_lamp_transitions(coin_mdp):
    T = coin_mdp.transitions.dense()
    flip = coin_mdp.acodec.encode({"Flip"})
    assert T[0, flip, 1] == 0.9 and T[0, flip, 0] == 0.1
    assert T[1, flip, 0] == 0.9 and T[1, flip, 1] == 0.1
    assert np.array_equal(T[:, 0, :], np.eye(2))


def test_outcomes_aggregate_on_same_target():
    c = CProposition(frozenset({"A"}), PartialFluentState(),
                     ((PartialFluentState({"F": "a"}), 0.5), (PartialFluentState({"F": "a", "G": "x"}), 0.5)))
    d = _domain(cprops=[c], pprops=[_pp("A", "0", 1.0)])
    mdp = compile_domain(d)
    s = mdp.codec.encode({"F": "a", "G": "x"})
    assert mdp.transitions.dense()[s, mdp.acodec.encode({"A"}), s] == 1.0


def test_exact_match_semantics():
    # the c-prop for {A} does not fire when A and B are performed together
    c = CProposition(frozenset({"A"}), PartialFluentState(), ((PartialFluentState({"F": "b"}), 1.0),))
    d = _domain(cprops=[c], pprops=[_pp("A", "0", 0.5), _pp("B", "0", 0.5)])
    mdp = compile_domain(d)
    T = mdp.transitions.dense()
    assert T[0, mdp.acodec.encode({"A"}), 2] == 1.0
    assert T[0, mdp.acodec.encode({"A", "B"}), 0] == 1.0


def _reference_transitions(domain, mdp):
    """Dictionary-level construction: one state and situation at a time."""
    S, U = mdp.n_states, mdp.n_situations
    T = np.zeros((S, U, S))
    states = list(domain.fluent_states())
    index = {st: i for i, st in enumerate(states)}
    for i, state in enumerate(states):
        for a, sit in enumerate(mdp.acodec.situations):
            fired = [c for c in domain.cprops if c.body_actions == sit and entails(state, c.body_conditions)]
            if not fired:
                T[i, a, i] = 1.0
                continue
            for outcome, p in fired[0].outcomes:
                T[i, a, index[FluentState({**state, **outcome})]] += p
    return T


def test_transitions_match_reference_on_corpus():
    for d in corpus()[:80]:
        mdp = compile_domain(d)
        assert np.allclose(mdp.transitions.dense(), _reference_transitions(d, mdp), atol=1e-12)


def test_sparse_equals_dense():
    for d in corpus()[:60]:
        dense = compile_domain(d)
        sp = compile_domain(d, sparse_ok=True)
        assert sp.transitions.is_sparse and not dense.transitions.is_sparse
        assert np.allclose(sp.transitions.dense(), dense.transitions.dense(), atol=1e-15)
        w = np.random.default_rng(0).random((dense.n_states, dense.n_situations))
        assert np.allclose(sp.transitions.push(w), dense.transitions.push(w))
        v = np.arange(dense.n_states, dtype=float)
        assert np.allclose(sp.transitions.expect(v), dense.transitions.expect(v))


def test_dense_limit_switches_to_sparse(coin_mdp, coin_lamp):
    assert compile_domain(coin_lamp, dense_limit=4).transitions.is_sparse
    with pytest.raises(CapacityError):
        compile_domain(coin_lamp, dense_limit=4, sparse_ok=False)


# Policy tensor

def test_policy_product_rule():
    d = _domain(pprops=[_pp("A", "1", 0.8), _pp("B", "1", 0.5)])
    mdp = compile_domain(d)
    assert np.allclose(mdp.policy[1, 0], [0.1, 0.4, 0.1, 0.4])
    assert mdp.policy[0, 0].tolist() == [1.0, 0.0, 0.0, 0.0]


def test_policy_certain_action():
    d = _domain(pprops=[_pp("A", "1", 1.0), _pp("B", "1", 0.5)])
    mu = compile_domain(d).policy[1, 0]
    assert mu.tolist() == [0.0, 0.5, 0.0, 0.5]


def test_policy_respects_conditions():
    d = _domain(pprops=[_pp("A", "0", 0.3, {"G": "y"})])
    mdp = compile_domain(d)
    for s in range(4):
        want = 0.3 if mdp.codec.decode(s)["G"] == "y" else 0.0
        assert mdp.policy[0, s, 1] == pytest.approx(want)


def test_compile_coin_lamp(coin_mdp):
    assert (coin_mdp.n_states, coin_mdp.n_situations, coin_mdp.horizon) == (2, 2, 4)


def test_no_cprops_means_identity():
    d = _domain(pprops=[_pp("A", "1", 0.5)])
    T = compile_domain(d).transitions.dense()
    for a in range(T.shape[1]):
        assert np.array_equal(T[:, a, :], np.eye(4))


def test_no_pprops_means_null_policy():
    mu = compile_domain(_domain()).policy
    assert (mu[:, :, 0] == 1.0).all() and mu.shape[2] == 1


def test_compile_rejects_invalid(coin_lamp):
    from corpus import DATA
    with pytest.raises(ValidationError):
        compile_domain(parse_domain((DATA / "broken.pec").read_text()))


def test_stochasticity_and_coherence_on_corpus():
    for d in corpus():
        mdp = compile_domain(d)
        assert abs(math.fsum(mdp.p0) - 1.0) <= 1e-9
        assert np.allclose(mdp.transitions.row_sums(), 1.0, atol=1e-9)
        assert np.allclose(mdp.policy.sum(axis=2), 1.0, atol=1e-9)
        for t, label in enumerate(d.instants):
            for s, state in enumerate(d.fluent_states()):
                for action in d.actions:
                    want = next((p.probability for p in d.pprops
                                 if p.action == action and p.instant == label and entails(state, p.condition)), 0.0)
                    got = sum(mdp.policy[t, s, a] for a, sit in enumerate(mdp.acodec.situations) if action in sit)
                    assert abs(got - want) <= 1e-9


def test_json_round_trip(coin_lamp):
    for kwargs in ({}, {"sparse_ok": True}):
        mdp = compile_domain(coin_lamp, **kwargs)
        doc = json.loads(json.dumps(mdp_to_json(mdp)))
        back = mdp_from_json(doc)
        assert back.codec == mdp.codec and back.acodec == mdp.acodec and back.instants == mdp.instants
        assert np.array_equal(back.p0, mdp.p0) and np.array_equal(back.policy, mdp.policy)
        assert np.array_equal(back.transitions.dense(), mdp.transitions.dense())
        assert back.transitions.is_sparse == mdp.transitions.is_sparse


def test_json_rejects_wrong_format():
    with pytest.raises(ValidationError):
        mdp_from_json({"format": "other"})
