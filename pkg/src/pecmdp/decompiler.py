"""Turn deterministic policies back into probability-1 p-propositions.

Pipeline: :func:`policy_to_pprops` emits one p-proposition per performed
action and (state, instant), conditioned on the full fluent state;
:func:`reachability_prune` drops those whose state cannot be reached at
that instant; :func:`minimize_conditions` shortens each condition to a
smallest set of assignments that still tells its state apart from the
competing states at the same instant.
"""

from __future__ import annotations

import itertools
from collections import defaultdict
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .compiler import NULL, PecMdp, compile_domain
from .core import Domain, PartialFluentState, PecError, PProposition
from .parser import parse_domain, render_domain
from .planning import PolicyTable
from .projection import distributions


class RequiresDeterministic(PecError):
    """Only deterministic policies can be written as p-propositions."""


@dataclass(frozen=True)
class PPropSet:
    props: tuple[PProposition, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "props", tuple(self.props))
        for p in self.props:
            if p.probability != 1.0:
                raise ValueError("decompiled p-propositions have probability 1")

    def __iter__(self) -> Iterator[PProposition]:
        return iter(self.props)

    def __len__(self) -> int:
        return len(self.props)

    def by_instant(self) -> dict[str, list[PProposition]]:
        out: dict[str, list[PProposition]] = defaultdict(list)
        for p in self.props:
            out[p.instant].append(p)
        return dict(out)


def _as_policy(mdp: PecMdp, policy: Union[PolicyTable, np.ndarray]) -> PolicyTable:
    if isinstance(policy, PolicyTable):
        return policy
    mu = np.asarray(policy, dtype=float)
    if mu.ndim == 2:
        mu = np.broadcast_to(mu, (mdp.horizon,) + mu.shape)
    if not (np.isclose(mu, 0.0, atol=1e-12) | np.isclose(mu, 1.0, atol=1e-12)).all() or \
            not np.allclose(mu.sum(axis=2), 1.0, atol=1e-12):
        raise RequiresDeterministic("policy assigns fractional probabilities to situations")
    return PolicyTable("nonstationary", mu.argmax(axis=2))


def _ordered_actions(mdp: PecMdp, situation: frozenset[str]) -> list[str]:
    order = mdp.domain.actions if mdp.domain is not None else ()
    rank = {a: i for i, a in enumerate(order)}
    return sorted(situation, key=lambda a: (rank.get(a, len(rank)), a))


def policy_to_pprops(mdp: PecMdp, policy: Union[PolicyTable, np.ndarray]) -> PPropSet:
    """One p-proposition per atomic action of each non-null choice.

    A stationary choice is repeated at every instant; a non-stationary one
    only at its own instant.
    """
    policy = _as_policy(mdp, policy)
    props = []
    for t, label in enumerate(mdp.instants):
        for s, a in enumerate(policy.at(t).tolist()):
            if a == NULL:
                continue
            state = mdp.codec.decode(s)
            for action in _ordered_actions(mdp, mdp.acodec[a]):
                props.append(PProposition(action, label, 1.0, PartialFluentState(state)))
    return PPropSet(tuple(props))


def reachability(mdp: PecMdp, policy: Union[PolicyTable, np.ndarray]) -> np.ndarray:
    """``(horizon, n_states)`` state distributions under the policy-induced chain."""
    policy = _as_policy(mdp, policy)
    return distributions(mdp, mu=policy.as_tensor(mdp))


def reachability_prune(mdp: PecMdp, policy: Union[PolicyTable, np.ndarray], pprops: PPropSet,
                       threshold: float = 0.0) -> PPropSet:
    """Keep only p-propositions whose (state, instant) has probability above
    ``threshold``. The default keeps everything not exactly unreachable."""
    probs = reachability(mdp, policy)
    kept = []
    for p in pprops:
        t = mdp.instant_map[p.instant]
        s = mdp.codec.encode(p.condition)
        if probs[t, s] > threshold:
            kept.append(p)
    return PPropSet(tuple(kept))


def distinguishing_condition(state: Sequence[int], others: Iterable[Sequence[int]], n_fluents: int) -> tuple[int, ...]:
    """Smallest set of coordinates on which ``state`` differs from every
    vector in ``others``; ties go to the lexicographically first set."""
    others = [tuple(o) for o in others if tuple(o) != tuple(state)]
    for k in range(n_fluents + 1):
        for coords in itertools.combinations(range(n_fluents), k):
            if all(any(o[c] != state[c] for c in coords) for o in others):
                return coords
    raise ValueError("state is not distinguishable from its competitors")


def minimize_conditions(mdp: PecMdp, pprops: PPropSet, *, policy: Union[PolicyTable, np.ndarray, None] = None,
                        threshold: float = 0.0) -> PPropSet:
    """Replace each full-state condition by a minimal distinguishing one.

    Competitors at an instant are the other states carrying p-propositions
    there. When ``policy`` is given, states reachable at that instant
    (probability above ``threshold``) for which the policy does nothing are
    competitors too; otherwise a shortened condition could make them act.
    """
    codec = mdp.codec
    null_states: dict[int, list[tuple[int, ...]]] = {}
    if policy is not None:
        policy = _as_policy(mdp, policy)
        probs = reachability(mdp, policy)
        for t in range(mdp.horizon):
            idle = np.flatnonzero((probs[t] > threshold) & (policy.at(t) == NULL))
            null_states[t] = [codec.vector_of_index(int(s)) for s in idle]

    groups = pprops.by_instant()
    replaced: dict[tuple[str, PartialFluentState], PartialFluentState] = {}
    for label, props in groups.items():
        t = mdp.instant_map[label]
        states = list(dict.fromkeys(p.condition for p in props))
        vectors = [codec.vector(s) for s in states]
        competitors_extra = null_states.get(t, [])
        for state, x in zip(states, vectors):
            others = [v for v in vectors if v != x] + competitors_extra
            coords = distinguishing_condition(x, others, len(codec.fluent_order))
            replaced[(label, state)] = PartialFluentState(
                (codec.fluent_order[c], state[codec.fluent_order[c]]) for c in coords)
    return PPropSet(tuple(
        PProposition(p.action, p.instant, 1.0, replaced[(p.instant, p.condition)]) for p in pprops))


def is_minimal(condition: PartialFluentState, competitors: Iterable[PartialFluentState]) -> bool:
    """Distinguishes from every competitor, and no single assignment can go."""
    competitors = list(competitors)
    if any(condition.compatible(c) for c in competitors):
        return False
    for f in condition:
        weaker = PartialFluentState((g, v) for g, v in condition.items() if g != f)
        if not any(weaker.compatible(c) for c in competitors):
            return False
    return True


@dataclass(frozen=True)
class Mismatch:
    state: int
    step: int
    expected: tuple[str, ...]
    probability: float

    def __str__(self) -> str:
        return (f"step {self.step}, state {self.state}: expected situation {{{', '.join(self.expected)}}} "
                f"with probability 1, got {self.probability!r}")


@dataclass(frozen=True)
class RoundtripReport:
    mismatches: tuple[Mismatch, ...] = ()
    domain: Optional[Domain] = field(default=None, compare=False, repr=False)
    mdp: Optional[PecMdp] = field(default=None, compare=False, repr=False)

    @property
    def ok(self) -> bool:
        return not self.mismatches


def decompiled_domain(domain: Domain, pprops: PPropSet) -> Domain:
    return domain.with_pprops(pprops.props)


def roundtrip_check(domain: Domain, pprops: PPropSet, policy: Union[PolicyTable, np.ndarray],
                    threshold: float = 0.0, mdp: Optional[PecMdp] = None) -> RoundtripReport:
    """Recompile the domain with ``pprops`` in place of its p-propositions
    (through the text format) and confirm the occurrence policy performs
    the chosen situation with probability 1 wherever the policy-induced
    chain reaches with probability above ``threshold``."""
    mdp = mdp or compile_domain(domain)
    policy = _as_policy(mdp, policy)
    text = render_domain(decompiled_domain(domain, pprops))
    new_domain = parse_domain(text)
    new_mdp = compile_domain(new_domain)
    probs = reachability(mdp, policy)
    out = []
    for t in range(mdp.horizon):
        for s in np.flatnonzero(probs[t] > threshold).tolist():
            sit = mdp.acodec[policy.situation(s, t)]
            a_new = new_mdp.acodec.index.get(sit)
            got = 0.0 if a_new is None else float(new_mdp.policy[t, s, a_new])
            if abs(got - 1.0) > 1e-9:
                out.append(Mismatch(s, t, tuple(_ordered_actions(mdp, sit)), got))
    return RoundtripReport(tuple(out), new_domain, new_mdp)


def decompile(mdp: PecMdp, policy: Union[PolicyTable, np.ndarray], *, prune: bool = True,
              minimize: bool = True, threshold: float = 0.0) -> PPropSet:
    """Translate, then optionally prune and minimise."""
    props = policy_to_pprops(mdp, policy)
    if prune:
        props = reachability_prune(mdp, policy, props, threshold)
    if minimize:
        props = minimize_conditions(mdp, props, policy=policy, threshold=threshold)
    return props
