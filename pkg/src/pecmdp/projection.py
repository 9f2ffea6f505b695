"""Temporal projection by forward propagation of state distributions."""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import sparse

from .compiler import PecMdp, StateCodec
from .core import PartialFluentState, PecError, ValidationError

ZERO_CONDITION = 1e-12


class ZeroConditionProbability(PecError):
    """The conditioning event of a query has (numerically) zero probability."""


@dataclass(frozen=True)
class StateDistribution:
    probs: np.ndarray
    time: int

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or (p < -1e-12).any() or abs(math.fsum(p) - 1.0) > 1e-9:
            raise ValueError("state distribution must be a non-negative vector summing to 1")
        object.__setattr__(self, "probs", p)


@dataclass(frozen=True)
class Query:
    target: PartialFluentState
    target_time: str
    condition: Optional[PartialFluentState] = None
    condition_time: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "target", PartialFluentState(self.target))
        object.__setattr__(self, "target_time", str(self.target_time))
        if (self.condition is None) != (self.condition_time is None):
            raise ValueError("condition and condition_time go together")
        if self.condition is not None:
            object.__setattr__(self, "condition", PartialFluentState(self.condition))
            object.__setattr__(self, "condition_time", str(self.condition_time))

    @property
    def conditional(self) -> bool:
        return self.condition is not None


def _check_step(mdp: PecMdp, t: int) -> None:
    if not 0 <= t < mdp.horizon:
        raise ValidationError(f"step {t} outside 0..{mdp.horizon - 1}")


def policy_weighted_matrix(mdp: PecMdp, t: int, mu: Optional[np.ndarray] = None):
    """``M_t[s, s'] = sum_a mu(a, s, t) T(s, a, s')``.

    Dense ``(n_states, n_states)`` array, or CSR when the transition tensor
    is sparse.
    """
    _check_step(mdp, t)
    weights = (mdp.policy if mu is None else mu)[t]
    T = mdp.transitions
    if not T.is_sparse:
        return np.einsum("sa,sat->st", weights, T.dense())
    S, U = T.n_states, T.n_situations
    rows = np.repeat(np.arange(S), U)
    W = sparse.csr_matrix((weights.ravel(), (rows, np.arange(S * U))), shape=(S, S * U))
    return W @ T.csr()


def step(mdp: PecMdp, probs: np.ndarray, t: int, mu: Optional[np.ndarray] = None) -> np.ndarray:
    """One application of ``M_t`` without materialising it.

    Steps at or beyond the horizon are identity (persistence); callers
    decide whether that is allowed.
    """
    if t >= mdp.horizon:
        return probs
    weights = (mdp.policy if mu is None else mu)[t]
    return mdp.transitions.push(probs[:, None] * weights)


def propagate(mdp: PecMdp, p: StateDistribution, to_time: int, *, mu: Optional[np.ndarray] = None,
              extrapolate: bool = False) -> StateDistribution:
    """Distribution at ``to_time`` given ``p`` at ``p.time``.

    ``mu`` substitutes another policy tensor (e.g. a deterministic learned
    policy). With ``extrapolate`` targets past the last instant are
    allowed and the missing steps keep every fluent unchanged.
    """
    if to_time < p.time:
        raise ValidationError(f"cannot propagate backwards from {p.time} to {to_time}")
    if not extrapolate:
        _check_step(mdp, to_time)
    probs = p.probs
    for tau in range(p.time, to_time):
        probs = step(mdp, probs, tau, mu)
    return StateDistribution(probs, to_time)


def distributions(mdp: PecMdp, p0: Optional[np.ndarray] = None, *, mu: Optional[np.ndarray] = None,
                  until: Optional[int] = None) -> np.ndarray:
    """``(until + 1, n_states)`` array of ``p_0 .. p_until`` (default: all steps)."""
    until = mdp.horizon - 1 if until is None else until
    probs = mdp.p0 if p0 is None else np.asarray(p0, dtype=float)
    out = [probs]
    for tau in range(until):
        probs = step(mdp, probs, tau, mu)
        out.append(probs)
    return np.asarray(out)


def filter_vector(codec: StateCodec, x_query: Mapping[str, str]) -> np.ndarray:
    """1.0 at every state entailing ``x_query``, 0.0 elsewhere."""
    return codec.matches(x_query).astype(float)


def masked_mass(probs: np.ndarray, f: np.ndarray) -> float:
    return math.fsum((probs * f).tolist())


def project(mdp: PecMdp, q: Query, *, mu: Optional[np.ndarray] = None, extrapolate: bool = False) -> float:
    """Probability of ``q.target`` at ``q.target_time`` (optionally given
    ``q.condition`` at the same or an earlier instant)."""
    tq = _time_of(mdp, q.target_time, extrapolate)
    fq = filter_vector(mdp.codec, q.target)
    start = StateDistribution(mdp.p0, 0)
    if not q.conditional:
        return masked_mass(propagate(mdp, start, tq, mu=mu, extrapolate=extrapolate).probs, fq)
    tc = _time_of(mdp, q.condition_time, extrapolate)
    if tc > tq:
        raise ValidationError(f"condition instant {q.condition_time} comes after query instant {q.target_time}")
    pc = propagate(mdp, start, tc, mu=mu, extrapolate=extrapolate).probs
    masked = pc * filter_vector(mdp.codec, q.condition)
    mass = math.fsum(masked.tolist())
    if mass < ZERO_CONDITION:
        raise ZeroConditionProbability(
            f"P({_fmt(q.condition)} @ {q.condition_time}) = {mass!r}; cannot condition on it")
    cond = StateDistribution(masked / mass, tc)
    return masked_mass(propagate(mdp, cond, tq, mu=mu, extrapolate=extrapolate).probs, fq)


def _time_of(mdp: PecMdp, label: Union[str, int], extrapolate: bool) -> int:
    label = str(label)
    if label in mdp.instant_map:
        return mdp.instant_map[label]
    if extrapolate and label.isdigit() and all(x.isdigit() for x in mdp.instants):
        # integer instants past the last declared one extend the timeline
        last = int(mdp.instants[-1])
        if int(label) > last:
            return mdp.horizon - 1 + int(label) - last
    raise ValidationError(f"unknown instant {label!r}")


def _fmt(state: Mapping[str, str]) -> str:
    return ", ".join(f"{f}={v}" for f, v in state.items())
