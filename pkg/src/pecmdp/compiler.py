"""Compile a PEC domain into a numerically encoded, reward-free MDP.

States are mixed-radix integers over value-index vectors (first fluent most
significant, so integer order is lexicographic order). Actions are
action-taking situations: sets of simultaneously performed actions, with
the empty set (null action) always at index 0.
"""

from __future__ import annotations

import itertools
import json
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

import numpy as np
from scipy import sparse

from .core import (
    CapacityError,
    Domain,
    FluentState,
    ValidationError,
    validate,
)

MAX_STATES = 2**24
MAX_SITUATIONS = 2**12
DENSE_LIMIT = 2**24  # entries of the dense transition tensor

FORMAT = "pec-mdp/1"


def normalize_instants(domain: Domain) -> dict[str, int]:
    """Map instant labels onto ``0..n_I-1`` preserving temporal order."""
    return {label: t for t, label in enumerate(domain.instants)}


@dataclass(frozen=True)
class StateCodec:
    fluent_order: tuple[str, ...]
    values: tuple[tuple[str, ...], ...]

    @cached_property
    def radices(self) -> tuple[int, ...]:
        return tuple(len(v) for v in self.values)

    @cached_property
    def n_states(self) -> int:
        return math.prod(self.radices)

    @cached_property
    def value_index(self) -> dict[str, dict[str, int]]:
        return {f: {v: i for i, v in enumerate(vs)} for f, vs in zip(self.fluent_order, self.values)}

    @cached_property
    def place_values(self) -> np.ndarray:
        """Weight of each coordinate; the last fluent varies fastest."""
        weights = np.ones(len(self.radices), dtype=np.int64)
        for k in range(len(self.radices) - 2, -1, -1):
            weights[k] = weights[k + 1] * self.radices[k + 1]
        return weights

    @cached_property
    def vectors(self) -> np.ndarray:
        """``(n_states, n_fluents)`` value-index vector of every state, by index."""
        s = np.arange(self.n_states, dtype=np.int64)
        out = (s[:, None] // self.place_values[None, :]) % np.asarray(self.radices, dtype=np.int64)
        out.flags.writeable = False
        return out

    def vector(self, state: Mapping[str, str]) -> tuple[int, ...]:
        if len(state) != len(self.fluent_order) or any(f not in state for f in self.fluent_order):
            raise ValidationError(f"not a total fluent state: {dict(state)!r}")
        try:
            return tuple(self.value_index[f][state[f]] for f in self.fluent_order)
        except KeyError as exc:
            raise ValidationError(f"unknown value in {dict(state)!r}") from exc

    def index_of_vector(self, x: Iterable[int]) -> int:
        x = tuple(x)
        if len(x) != len(self.radices) or any(not 0 <= v < r for v, r in zip(x, self.radices)):
            raise ValueError(f"vector {x} out of range for radices {self.radices}")
        return int(np.dot(np.asarray(x, dtype=np.int64), self.place_values)) if x else 0

    def vector_of_index(self, s: int) -> tuple[int, ...]:
        if not 0 <= s < self.n_states:
            raise IndexError(s)
        out = []
        for r in reversed(self.radices):
            s, v = divmod(s, r)
            out.append(v)
        return tuple(reversed(out))

    def encode(self, state: Mapping[str, str]) -> int:
        return self.index_of_vector(self.vector(state))

    def decode(self, s: int) -> FluentState:
        x = self.vector_of_index(s)
        return FluentState((f, vs[i]) for f, vs, i in zip(self.fluent_order, self.values, x))

    def matches(self, cond: Mapping[str, str]) -> np.ndarray:
        """Boolean mask of the states that entail ``cond``."""
        mask = np.ones(self.n_states, dtype=bool)
        for f, v in cond.items():
            if f not in self.value_index or v not in self.value_index[f]:
                raise ValidationError(f"unknown assignment {f}={v}")
            k = self.fluent_order.index(f)
            mask &= self.vectors[:, k] == self.value_index[f][v]
        return mask


def build_state_codec(domain: Domain, max_states: int = MAX_STATES) -> StateCodec:
    codec = StateCodec(domain.fluent_names, tuple(d.values for d in domain.fluents))
    if codec.n_states > max_states:
        raise CapacityError(f"{codec.n_states} states exceed the cap of {max_states}")
    return codec


@dataclass(frozen=True)
class ActionSituationCodec:
    situations: tuple[frozenset[str], ...]

    def __post_init__(self):
        if not self.situations or self.situations[0]:
            raise ValueError("the empty situation must sit at index 0")
        if len(set(self.situations)) != len(self.situations):
            raise ValueError("situations must be distinct")

    @cached_property
    def index(self) -> dict[frozenset[str], int]:
        return {a: i for i, a in enumerate(self.situations)}

    def __len__(self) -> int:
        return len(self.situations)

    def __getitem__(self, a: int) -> frozenset[str]:
        return self.situations[a]

    def encode(self, actions: Iterable[str]) -> int:
        return self.index[frozenset(actions)]


NULL = 0


def _powerset(items):
    items = list(items)
    return itertools.chain.from_iterable(itertools.combinations(items, k) for k in range(len(items) + 1))


def performable_at(domain: Domain) -> dict[str, tuple[str, ...]]:
    """Actions with a p-proposition at each instant, in declaration order."""
    out = {}
    for label in domain.instants:
        acts = {p.action for p in domain.pprops if p.instant == label}
        out[label] = tuple(a for a in domain.actions if a in acts)
    return out


def build_action_situations(domain: Domain, max_situations: int = MAX_SITUATIONS,
                            include_cprop_bodies: bool = True) -> ActionSituationCodec:
    """Union over instants of the powerset of performable actions.

    Action sets of c-proposition bodies are added too, so the transition
    tensor is defined on every situation some effect refers to. Ordering:
    null first, then by size, then by action declaration order.
    """
    rank = {a: i for i, a in enumerate(domain.actions)}
    found: set[frozenset[str]] = {frozenset()}
    for acts in performable_at(domain).values():
        if 2 ** len(acts) > max_situations:
            raise CapacityError(f"{2 ** len(acts)} situations exceed the cap of {max_situations}")
        found.update(frozenset(c) for c in _powerset(acts))
    if include_cprop_bodies:
        found.update(c.body_actions for c in domain.cprops)
    if len(found) > max_situations:
        raise CapacityError(f"{len(found)} situations exceed the cap of {max_situations}")
    ordered = sorted(found, key=lambda a: (len(a), sorted(rank.get(x, len(rank)) for x in a), sorted(a)))
    return ActionSituationCodec(tuple(ordered))


def build_initial_distribution(domain: Domain, codec: StateCodec) -> np.ndarray:
    p0 = np.zeros(codec.n_states)
    for state, p in domain.iprop.outcomes:
        p0[codec.encode(state)] = p
    return p0


def apply_outcome(outcome: Mapping[str, str], x: Iterable[int], codec: StateCodec) -> tuple[int, ...]:
    """Overwrite the coordinates named in ``outcome``; keep the rest."""
    out = list(x)
    for f, v in outcome.items():
        out[codec.fluent_order.index(f)] = codec.value_index[f][v]
    return tuple(out)


class Transitions:
    """``T[s, a, s']`` held densely or as a CSR matrix over rows ``s * n_U + a``."""

    def __init__(self, data: Union[np.ndarray, sparse.csr_matrix], n_states: int, n_situations: int):
        self.n_states = n_states
        self.n_situations = n_situations
        if sparse.issparse(data):
            self._csr = sparse.csr_matrix(data)
            self._dense = None
        else:
            self._dense = np.asarray(data, dtype=float)
            self._csr = None

    @property
    def is_sparse(self) -> bool:
        return self._csr is not None

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_states, self.n_situations, self.n_states)

    def dense(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense
        return self._csr.toarray().reshape(self.shape)

    def csr(self) -> sparse.csr_matrix:
        if self._csr is not None:
            return self._csr
        return sparse.csr_matrix(self._dense.reshape(self.n_states * self.n_situations, self.n_states))

    def row(self, s: int, a: int) -> np.ndarray:
        if self._dense is not None:
            return self._dense[s, a]
        return self._csr.getrow(s * self.n_situations + a).toarray().ravel()

    def push(self, weights: np.ndarray) -> np.ndarray:
        """``sum_{s,a} weights[s, a] * T[s, a, :]``."""
        if self._dense is not None:
            return np.einsum("sa,sat->t", weights, self._dense)
        return self._csr.T @ weights.ravel()

    def expect(self, values: np.ndarray) -> np.ndarray:
        """``Q[s, a] = sum_s' T[s, a, s'] * values[s']``."""
        if self._dense is not None:
            return self._dense @ values
        return (self._csr @ values).reshape(self.n_states, self.n_situations)

    def row_sums(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense.sum(axis=2)
        return np.asarray(self._csr.sum(axis=1)).reshape(self.n_states, self.n_situations)

    def __getitem__(self, key):
        return self.dense()[key]


def _matching_cprop_rows(domain: Domain, codec: StateCodec, acodec: ActionSituationCodec):
    """Yield ``(situation, state indices, targets (J, n), probs)`` per c-proposition."""
    for c in domain.cprops:
        a = acodec.index.get(c.body_actions)
        if a is None:
            continue
        rows = np.flatnonzero(codec.matches(c.body_conditions))
        if rows.size == 0:
            continue
        xs = codec.vectors[rows]
        targets = []
        for outcome, _ in c.outcomes:
            ys = xs.copy()
            for f, v in outcome.items():
                ys[:, codec.fluent_order.index(f)] = codec.value_index[f][v]
            targets.append(ys @ codec.place_values)
        yield a, rows, np.asarray(targets).reshape(len(c.outcomes), rows.size), [p for _, p in c.outcomes]


def build_transition_tensor(domain: Domain, codec: StateCodec, acodec: ActionSituationCodec,
                            dense_limit: int = DENSE_LIMIT, sparse_ok: Optional[bool] = None) -> Transitions:
    """Exact-match semantics: a c-proposition fires only when the performed
    situation equals its action set and the state entails its fluent
    precondition. Every other (s, a) row is a self-loop.

    ``sparse_ok=None`` picks the sparse form only when the dense tensor
    would exceed ``dense_limit`` entries; ``False`` forbids it.
    """
    S, U = codec.n_states, len(acodec)
    size = S * U * S
    use_sparse = sparse_ok is True or (size > dense_limit and sparse_ok is None)
    if size > dense_limit and sparse_ok is False:
        raise CapacityError(f"dense transition tensor of {size} entries exceeds {dense_limit}")

    fired = np.zeros((S, U), dtype=bool)
    contributions = []
    for a, rows, targets, probs in _matching_cprop_rows(domain, codec, acodec):
        fired[rows, a] = True
        contributions.append((a, rows, targets, probs))

    if not use_sparse:
        T = np.zeros((S, U, S))
        idle_s, idle_a = np.nonzero(~fired)
        T[idle_s, idle_a, idle_s] = 1.0
        for a, rows, targets, probs in contributions:
            for tgt, p in zip(targets, probs):
                np.add.at(T, (rows, a, tgt), p)
        return Transitions(T, S, U)

    idle_s, idle_a = np.nonzero(~fired)
    r = [idle_s * U + idle_a]
    c = [idle_s]
    v = [np.ones(idle_s.size)]
    for a, rows, targets, probs in contributions:
        for tgt, p in zip(targets, probs):
            r.append(rows * U + a)
            c.append(tgt)
            v.append(np.full(rows.size, p))
    coo = sparse.coo_matrix((np.concatenate(v), (np.concatenate(r), np.concatenate(c))), shape=(S * U, S))
    return Transitions(coo.tocsr(), S, U)


def action_probabilities(domain: Domain, codec: StateCodec, label: str) -> np.ndarray:
    """``(n_states, n_actions)`` probability that each action occurs at ``label``."""
    P = np.zeros((codec.n_states, len(domain.actions)))
    col = {a: k for k, a in enumerate(domain.actions)}
    for p in domain.pprops:
        if p.instant == label:
            P[codec.matches(p.condition), col[p.action]] = p.probability
    return P


def situation_membership(domain: Domain, acodec: ActionSituationCodec) -> np.ndarray:
    return np.array([[a in sit for a in domain.actions] for sit in acodec.situations], dtype=bool).reshape(
        len(acodec), len(domain.actions))


def build_policy_tensor(domain: Domain, codec: StateCodec, acodec: ActionSituationCodec,
                        instant_map: Optional[Mapping[str, int]] = None) -> np.ndarray:
    """``mu[t, s, a]``: probability of situation ``a`` in state ``s`` at step ``t``.

    Actions occur independently: the situation's actions happen and every
    other action does not.
    """
    instant_map = instant_map or normalize_instants(domain)
    member = situation_membership(domain, acodec)
    mu = np.zeros((len(instant_map), codec.n_states, len(acodec)))
    for label, t in instant_map.items():
        P = action_probabilities(domain, codec, label)
        for a in range(len(acodec)):
            mu[t, :, a] = np.prod(np.where(member[a][None, :], P, 1.0 - P), axis=1)
    return mu


@dataclass(frozen=True, eq=False)
class PecMdp:
    codec: StateCodec
    acodec: ActionSituationCodec
    instants: tuple[str, ...]
    p0: np.ndarray
    transitions: Transitions
    policy: np.ndarray
    domain: Optional[Domain] = field(default=None, repr=False)

    @property
    def horizon(self) -> int:
        return len(self.instants)

    @property
    def n_states(self) -> int:
        return self.codec.n_states

    @property
    def n_situations(self) -> int:
        return len(self.acodec)

    @cached_property
    def instant_map(self) -> dict[str, int]:
        return {label: t for t, label in enumerate(self.instants)}

    def step_of(self, label: Union[str, int]) -> int:
        try:
            return self.instant_map[str(label)]
        except KeyError:
            raise ValidationError(f"unknown instant {label!r}") from None


def compile_domain(domain: Domain, *, max_states: int = MAX_STATES, max_situations: int = MAX_SITUATIONS,
                   dense_limit: int = DENSE_LIMIT, sparse_ok: Optional[bool] = None,
                   check: bool = True) -> PecMdp:
    """Validate and compile ``domain``; raises :class:`ValidationError` on
    ill-formed input and :class:`CapacityError` beyond the caps."""
    if check:
        validate(domain).raise_for_errors()
    codec = build_state_codec(domain, max_states)
    acodec = build_action_situations(domain, max_situations)
    instant_map = normalize_instants(domain)
    p0 = build_initial_distribution(domain, codec)
    T = build_transition_tensor(domain, codec, acodec, dense_limit, sparse_ok)
    mu = build_policy_tensor(domain, codec, acodec, instant_map)
    for arr in (p0, mu):
        arr.flags.writeable = False
    return PecMdp(codec, acodec, tuple(domain.instants), p0, T, mu, domain)


compile = compile_domain


# JSON artifact

def mdp_to_json(mdp: PecMdp) -> dict:
    """Plain-data view of a compiled MDP; see the README for the schema."""
    out = {
        "format": FORMAT,
        "fluents": [{"name": f, "values": list(vs)} for f, vs in zip(mdp.codec.fluent_order, mdp.codec.values)],
        "n_states": mdp.n_states,
        "situations": [sorted(s, key=_action_rank(mdp)) for s in mdp.acodec.situations],
        "instants": list(mdp.instants),
        "instant_map": dict(mdp.instant_map),
        "p0": mdp.p0.tolist(),
        "policy": mdp.policy.tolist(),
    }
    if mdp.transitions.is_sparse:
        coo = mdp.transitions.csr().tocoo()
        U = mdp.n_situations
        trip = sorted(zip((coo.row // U).tolist(), (coo.row % U).tolist(), coo.col.tolist(), coo.data.tolist()))
        out["transitions"] = {"kind": "sparse", "shape": list(mdp.transitions.shape), "triplets": [list(t) for t in trip]}
    else:
        out["transitions"] = {"kind": "dense", "data": mdp.transitions.dense().tolist()}
    return out


def _action_rank(mdp: PecMdp):
    order = mdp.domain.actions if mdp.domain is not None else ()
    rank = {a: i for i, a in enumerate(order)}
    return lambda a: (rank.get(a, len(rank)), a)


def mdp_from_json(data: Union[str, Mapping]) -> PecMdp:
    if isinstance(data, str):
        data = json.loads(data)
    if data.get("format") != FORMAT:
        raise ValidationError(f"expected format {FORMAT!r}")
    codec = StateCodec(tuple(f["name"] for f in data["fluents"]), tuple(tuple(f["values"]) for f in data["fluents"]))
    acodec = ActionSituationCodec(tuple(frozenset(s) for s in data["situations"]))
    S, U = codec.n_states, len(acodec)
    tr = data["transitions"]
    if tr["kind"] == "dense":
        T = Transitions(np.asarray(tr["data"], dtype=float).reshape(S, U, S), S, U)
    else:
        rows = [(s * U + a, s2, p) for s, a, s2, p in tr["triplets"]]
        r, c, v = zip(*rows) if rows else ((), (), ())
        T = Transitions(sparse.csr_matrix((v, (r, c)), shape=(S * U, S)), S, U)
    p0 = np.asarray(data["p0"], dtype=float)
    mu = np.asarray(data["policy"], dtype=float).reshape(len(data["instants"]), S, U)
    return PecMdp(codec, acodec, tuple(data["instants"]), p0, T, mu, None)


def dumps(mdp: PecMdp) -> str:
    return json.dumps(mdp_to_json(mdp), sort_keys=True, indent=1)


__all__ = [
    "ActionSituationCodec", "PecMdp", "StateCodec", "Transitions", "apply_outcome",
    "build_action_situations", "build_initial_distribution", "build_policy_tensor",
    "build_state_codec", "build_transition_tensor", "compile", "compile_domain", "dumps",
    "mdp_from_json", "mdp_to_json", "normalize_instants",
]
