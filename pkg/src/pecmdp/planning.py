"""Objective-directed policies for compiled domains.

Rewards are attached to transitions: reaching a goal state pays
``goal_reward``, each performed action costs ``action_costs[U]`` and every
step costs ``step_penalty``. Solvers are exact tabular dynamic programming;
ties go to the lowest situation index.
"""

from __future__ import annotations

import json
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Literal, Optional, Union

import numpy as np

from .compiler import NULL, PecMdp
from .core import PartialFluentState, ValidationError
from .projection import distributions

TIE_TOL = 1e-12


@dataclass(frozen=True)
class RewardSpec:
    goal: Optional[PartialFluentState] = None
    goal_reward: float = 1.0
    action_costs: Mapping[str, float] = field(default_factory=dict)
    step_penalty: float = 0.0
    discount: float = 1.0

    def __post_init__(self):
        if self.goal is not None:
            object.__setattr__(self, "goal", PartialFluentState(self.goal))
        object.__setattr__(self, "action_costs", dict(self.action_costs))
        if self.goal is None and not self.action_costs and self.step_penalty == 0.0:
            raise ValueError("reward spec needs a goal, action costs or a step penalty")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError(f"discount {self.discount} outside (0, 1]")
        if self.step_penalty < 0.0 or any(c < 0.0 for c in self.action_costs.values()):
            raise ValueError("costs and step penalty must be non-negative")

    @classmethod
    def from_dict(cls, data: Mapping) -> "RewardSpec":
        unknown = set(data) - {"goal", "goal_reward", "action_costs", "step_penalty", "discount"}
        if unknown:
            raise ValueError(f"unknown reward fields: {sorted(unknown)}")
        goal = data.get("goal")
        if isinstance(goal, str):
            goal = _parse_assignments(goal)
        return cls(
            goal=goal,
            goal_reward=float(data.get("goal_reward", 1.0)),
            action_costs={k: float(v) for k, v in data.get("action_costs", {}).items()},
            step_penalty=float(data.get("step_penalty", 0.0)),
            discount=float(data.get("discount", 1.0)),
        )

    @classmethod
    def from_json(cls, text: str) -> "RewardSpec":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {
            "goal": dict(self.goal) if self.goal is not None else None,
            "goal_reward": self.goal_reward,
            "action_costs": dict(sorted(self.action_costs.items())),
            "step_penalty": self.step_penalty,
            "discount": self.discount,
        }


def _parse_assignments(text: str) -> PartialFluentState:
    pairs = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        f, sep, v = part.partition("=")
        if not sep:
            raise ValueError(f"expected F=V, got {part!r}")
        pairs.append((f.strip(), v.strip()))
    return PartialFluentState(pairs)


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """Deterministic policy over situation indices.

    ``choice`` has shape ``(n_states,)`` when stationary and
    ``(horizon, n_states)`` when not.
    """

    kind: Literal["stationary", "nonstationary"]
    choice: np.ndarray

    def __post_init__(self):
        choice = np.asarray(self.choice, dtype=np.int64)
        want = 1 if self.kind == "stationary" else 2
        if self.kind not in ("stationary", "nonstationary") or choice.ndim != want:
            raise ValueError(f"{self.kind} policy needs a {want}-d choice array")
        if (choice < 0).any():
            raise ValueError("negative situation index")
        choice.flags.writeable = False
        object.__setattr__(self, "choice", choice)

    def __eq__(self, other):
        return isinstance(other, PolicyTable) and self.kind == other.kind and np.array_equal(self.choice, other.choice)

    def situation(self, s: int, t: int = 0) -> int:
        if self.kind == "stationary":
            return int(self.choice[s])
        return int(self.choice[t, s])

    def at(self, t: int) -> np.ndarray:
        return self.choice if self.kind == "stationary" else self.choice[t]

    def as_tensor(self, mdp: PecMdp) -> np.ndarray:
        """One-hot ``mu[t, s, a]`` usable wherever the domain's policy is."""
        if int(self.choice.max(initial=0)) >= mdp.n_situations:
            raise ValidationError("policy refers to a situation the MDP does not have")
        mu = np.zeros((mdp.horizon, mdp.n_states, mdp.n_situations))
        states = np.arange(mdp.n_states)
        for t in range(mdp.horizon):
            mu[t, states, self.at(t)] = 1.0
        return mu

    def to_json(self, mdp: PecMdp) -> dict:
        """Situations are written by action name so the file survives recompilation."""
        rank = {a: i for i, a in enumerate(mdp.domain.actions)} if mdp.domain is not None else {}
        names = [sorted(s, key=lambda a: (rank.get(a, len(rank)), a)) for s in mdp.acodec.situations]
        return {
            "format": "pec-policy/1",
            "kind": self.kind,
            "fluents": list(mdp.codec.fluent_order),
            "instants": list(mdp.instants),
            "situations": names,
            "choice": self.choice.tolist(),
        }

    @classmethod
    def from_json(cls, data: Union[str, Mapping], mdp: PecMdp) -> "PolicyTable":
        if isinstance(data, str):
            data = json.loads(data)
        if data.get("format") != "pec-policy/1":
            raise ValidationError("not a pec-policy/1 document")
        remap = []
        for names in data["situations"]:
            key = frozenset(names)
            if key not in mdp.acodec.index:
                raise ValidationError(f"situation {sorted(key)} is not available in this domain")
            remap.append(mdp.acodec.index[key])
        choice = np.asarray(remap, dtype=np.int64)[np.asarray(data["choice"], dtype=np.int64)]
        return cls(data["kind"], choice)


def build_reward(mdp: PecMdp, spec: RewardSpec) -> np.ndarray:
    """Dense ``R[s, a, s']``."""
    actions = mdp.domain.actions if mdp.domain is not None else sorted(set().union(*mdp.acodec.situations))
    for a in spec.action_costs:
        if a not in actions:
            raise ValidationError(f"unknown action {a!r} in action costs")
    S, U = mdp.n_states, mdp.n_situations
    goal = np.zeros(S)
    if spec.goal is not None:
        goal = spec.goal_reward * mdp.codec.matches(spec.goal)
    cost = np.array([math.fsum(spec.action_costs.get(a, 0.0) for a in sit) for sit in mdp.acodec.situations])
    return np.broadcast_to(goal[None, None, :], (S, U, S)) - cost[None, :, None] - spec.step_penalty


def available_situations(mdp: PecMdp, t: int, strict: bool = False) -> np.ndarray:
    """Situations the planner may pick at step ``t``.

    Default: any situation the domain's own policy supports at ``t`` in some
    state, plus the null action. ``strict``: subsets of the actions that
    have a p-proposition at that instant.
    """
    if strict:
        if mdp.domain is None:
            raise ValidationError("strict availability needs the source domain")
        label = mdp.instants[t]
        acts = {p.action for p in mdp.domain.pprops if p.instant == label}
        ok = [a for a, sit in enumerate(mdp.acodec.situations) if sit <= acts]
    else:
        ok = np.flatnonzero((mdp.policy[t] > 0.0).any(axis=0)).tolist()
    return np.asarray(sorted(set(ok) | {NULL}), dtype=np.int64)


def _q_values(mdp: PecMdp, R: np.ndarray, values: np.ndarray, discount: float) -> np.ndarray:
    """``Q[s, a] = sum_s' T[s,a,s'] (R[s,a,s'] + discount * values[s'])``."""
    T = mdp.transitions.dense()
    return np.einsum("sat,sat->sa", T, R) + discount * mdp.transitions.expect(values)


def _greedy(q: np.ndarray, allowed: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sub = q[:, allowed]
    best = sub.max(axis=1)
    tol = TIE_TOL * np.maximum(1.0, np.abs(best))
    first = np.argmax(sub >= (best - tol)[:, None], axis=1)
    return allowed[first], best


def solve_finite_horizon(mdp: PecMdp, R: np.ndarray, discount: float = 1.0,
                         strict: bool = False) -> tuple[PolicyTable, np.ndarray]:
    """Backward induction over the instants.

    Returns the non-stationary policy and ``V`` of shape
    ``(horizon + 1, n_states)`` with ``V[horizon] = 0``.
    """
    if mdp.horizon < 1:
        raise ValidationError("horizon must be at least 1")
    V = np.zeros((mdp.horizon + 1, mdp.n_states))
    choice = np.zeros((mdp.horizon, mdp.n_states), dtype=np.int64)
    for t in range(mdp.horizon - 1, -1, -1):
        q = _q_values(mdp, R, V[t + 1], discount)
        choice[t], V[t] = _greedy(q, available_situations(mdp, t, strict))
    return PolicyTable("nonstationary", choice), V


def solve_stationary(mdp: PecMdp, R: np.ndarray, discount: float, epsilon: float = 1e-10,
                     strict: bool = False, max_iter: int = 1_000_000) -> tuple[PolicyTable, np.ndarray]:
    """Value iteration to an epsilon-optimal greedy policy.

    The allowed situations are those available at any step.
    """
    if not 0.0 < discount < 1.0:
        raise ValueError("stationary solving needs a discount in (0, 1)")
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    allowed = np.unique(np.concatenate([available_situations(mdp, t, strict) for t in range(mdp.horizon)]))
    stop = epsilon * (1.0 - discount) / (2.0 * discount)
    V = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        _, V_next = _greedy(_q_values(mdp, R, V, discount), allowed)
        done = np.max(np.abs(V_next - V)) < stop
        V = V_next
        if done:
            break
    choice, _ = _greedy(_q_values(mdp, R, V, discount), allowed)
    return PolicyTable("stationary", choice), V


def evaluate_policy(mdp: PecMdp, policy: PolicyTable, R: np.ndarray, discount: float = 1.0,
                    p0: Optional[np.ndarray] = None) -> float:
    """Exact expected return of ``policy`` from ``p0`` over the horizon.

    Computed forwards: the state distribution at each step comes from the
    policy-induced chain and is weighted by the expected one-step reward.
    """
    mu = policy.as_tensor(mdp)
    ps = distributions(mdp, p0, mu=mu)
    T = mdp.transitions.dense()
    expected_r = np.einsum("sat,sat->sa", T, R)
    terms = []
    for t in range(mdp.horizon):
        a = policy.at(t)
        terms.extend((discount**t * ps[t] * expected_r[np.arange(mdp.n_states), a]).tolist())
    return math.fsum(terms)


# Monte-Carlo simulation

@dataclass(frozen=True, eq=False)
class SimulationResult:
    """``states[e, t]`` for ``t`` in ``0..horizon`` (the last column is the
    state after the final step's action); ``actions[e, t]`` for
    ``t < horizon``."""

    states: np.ndarray
    actions: np.ndarray
    returns: Optional[np.ndarray] = None

    @property
    def episodes(self) -> int:
        return self.states.shape[0]

    def frequency(self, mdp: PecMdp, cond: Mapping[str, str], t: int) -> float:
        if self.episodes == 0:
            return float("nan")
        mask = mdp.codec.matches(cond)
        return float(mask[self.states[:, t]].mean())

    def summary(self) -> dict:
        if self.returns is None or self.episodes == 0:
            return {"episodes": self.episodes}
        return {
            "episodes": self.episodes,
            "mean_return": float(self.returns.mean()),
            "std_return": float(self.returns.std(ddof=1)) if self.episodes > 1 else 0.0,
        }


def _sample_rows(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """One categorical draw per row of ``probs``."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    idx = (cdf <= u[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def _simulate_shard(mdp: PecMdp, mu: np.ndarray, rng: np.random.Generator, n: int,
                    R: Optional[np.ndarray], discount: float):
    H = mdp.horizon
    states = np.zeros((n, H + 1), dtype=np.int64)
    actions = np.zeros((n, H), dtype=np.int64)
    returns = np.zeros(n) if R is not None else None
    states[:, 0] = _sample_rows(rng, np.broadcast_to(mdp.p0, (n, mdp.n_states)))
    T = mdp.transitions
    for t in range(H):
        s = states[:, t]
        a = _sample_rows(rng, mu[t][s])
        rows = np.stack([T.row(int(si), int(ai)) for si, ai in zip(s, a)]) if T.is_sparse else T.dense()[s, a]
        s2 = _sample_rows(rng, rows)
        actions[:, t] = a
        states[:, t + 1] = s2
        if R is not None:
            returns += discount**t * R[s, a, s2]
    return states, actions, returns


def simulate(mdp: PecMdp, policy: Union[PolicyTable, np.ndarray, None] = None, *, seed: int, episodes: int,
             reward: Optional[np.ndarray] = None, discount: float = 1.0, shards: int = 1) -> SimulationResult:
    """Sample ``episodes`` trajectories.

    ``policy`` defaults to the domain's own occurrence policy. Each shard
    draws from its own stream spawned from ``seed``, so results depend only
    on ``seed`` and ``shards``.
    """
    if episodes < 0:
        raise ValueError("episodes must be non-negative")
    if policy is None:
        mu = np.asarray(mdp.policy)
    elif isinstance(policy, PolicyTable):
        mu = policy.as_tensor(mdp)
    else:
        mu = np.asarray(policy, dtype=float)
    H = mdp.horizon
    if episodes == 0:
        empty = np.zeros((0, H + 1), dtype=np.int64)
        return SimulationResult(empty, np.zeros((0, H), dtype=np.int64), np.zeros(0) if reward is not None else None)
    streams = np.random.SeedSequence(seed).spawn(shards)
    sizes = [episodes // shards + (1 if k < episodes % shards else 0) for k in range(shards)]
    parts = [_simulate_shard(mdp, mu, np.random.default_rng(ss), n, reward, discount)
             for ss, n in zip(streams, sizes) if n > 0]
    states = np.concatenate([p[0] for p in parts])
    actions = np.concatenate([p[1] for p in parts])
    returns = np.concatenate([p[2] for p in parts]) if reward is not None else None
    return SimulationResult(states, actions, returns)
