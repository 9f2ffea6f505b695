import math

import pytest

from pecmdp.core import Domain, FluentDecl, FluentState, IProposition, PProposition
from pecmdp.oracle import enumerate_worlds, marginals, oracle_project
from pecmdp.projection import Query


def test_coin_lamp_worlds(coin_lamp):
    worlds = enumerate_worlds(coin_lamp)
    weights = sorted(w.weight for w in worlds)
    assert len(worlds) == 3
    assert weights == pytest.approx(sorted([0.2, 0.8 * 0.9, 0.8 * 0.1]), abs=1e-15)
    assert math.fsum(weights) == pytest.approx(1.0)
    (success,) = [w for w in worlds if w.state_at(2)["Lamp"] == "on"]
    assert success.trace[1][1] == frozenset({"Flip"})


def _plain(pprops=()):
    return Domain((FluentDecl("F", ("a", "b")),), ("A", "B"), ("0", "1"),
                  IProposition(((FluentState({"F": "a"}), 1.0),)), (), tuple(pprops))


def test_single_world_without_pprops():
    (w,) = enumerate_worlds(_plain())
    assert w.weight == 1.0


def test_independent_actions_branch_fourfold():
    d = _plain([PProposition("A", "0", 0.5), PProposition("B", "0", 0.5)])
    worlds = enumerate_worlds(d)
    assert [w.weight for w in worlds] == [0.25] * 4
    assert {w.trace[0][1] for w in worlds} == {frozenset(), frozenset({"A"}), frozenset({"B"}), frozenset({"A", "B"})}


def test_oracle_queries(coin_lamp):
    assert oracle_project(coin_lamp, Query({"Lamp": "on"}, "2")) == pytest.approx(0.72, abs=1e-12)
    assert oracle_project(coin_lamp, Query({}, "1")) == pytest.approx(1.0)
    assert oracle_project(coin_lamp, Query({"Lamp": "on"}, "2", {"Lamp": "on"}, "2")) == 1.0


def test_marginals(coin_lamp):
    m = marginals(coin_lamp)
    assert m[(2, "Lamp", "on")] == pytest.approx(0.72)
    assert m[(0, "Lamp", "off")] == 1.0
