"""Partitioned ground sets and the marginal-gain oracle interface.

The ground set V is a disjoint union of per-agent action sets V_1, ..., V_n;
agent i owns ``sizes[i]`` actions addressed as ``ActionId(agent=i, slot=m)``.
A feasible selection picks at most one action per agent.  Objectives are
monotone normalized set functions exposed to learners only through marginal
gains on their own actions.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import InvalidActionError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class ActionId:
    """Identifier of a single action: slot ``slot`` of agent ``agent``."""

    agent: int
    slot: int


@dataclass(frozen=True)
class Partition:
    """Per-agent action-set sizes.  Action sets of distinct agents are disjoint."""

    sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        sizes = tuple(int(k) for k in self.sizes)
        if len(sizes) == 0:
            raise InvalidActionError("partition needs at least one agent")
        if any(k < 1 for k in sizes):
            raise InvalidActionError(f"every agent needs at least one action, got {sizes}")
        object.__setattr__(self, "sizes", sizes)
        offsets = (0,) + tuple(itertools.accumulate(sizes))
        object.__setattr__(self, "_offsets", offsets)

    @property
    def n_agents(self) -> int:
        return len(self.sizes)

    @property
    def total(self) -> int:
        """Total number of actions |V|."""
        return self._offsets[-1]

    def validate(self, a: ActionId) -> None:
        if not (0 <= a.agent < self.n_agents) or not (0 <= a.slot < self.sizes[a.agent]):
            raise InvalidActionError(f"{a} outside partition with sizes {self.sizes}")

    def flat_index(self, a: ActionId) -> int:
        """Position of ``a`` in the flat enumeration (agent-major, slot-minor)."""
        self.validate(a)
        return self._offsets[a.agent] + a.slot

    def from_flat(self, idx: int) -> ActionId:
        """Inverse of :meth:`flat_index`."""
        if not (0 <= idx < self.total):
            raise InvalidActionError(f"flat index {idx} out of range [0, {self.total})")
        agent = int(np.searchsorted(self._offsets, idx, side="right")) - 1
        return ActionId(agent, idx - self._offsets[agent])

    def agent_actions(self, agent: int) -> tuple[ActionId, ...]:
        if not (0 <= agent < self.n_agents):
            raise InvalidActionError(f"agent {agent} out of range")
        return tuple(ActionId(agent, m) for m in range(self.sizes[agent]))

    def all_actions(self) -> Iterator[ActionId]:
        for i, k in enumerate(self.sizes):
            for m in range(k):
                yield ActionId(i, m)


@dataclass(frozen=True)
class FeasibleSet:
    """At most one chosen slot per agent; ``None`` marks an agent that sits out."""

    choice: tuple[Optional[int], ...]

    @staticmethod
    def empty(n_agents: int) -> "FeasibleSet":
        return FeasibleSet((None,) * n_agents)

    @staticmethod
    def from_actions(partition: Partition, actions: Iterable[ActionId]) -> "FeasibleSet":
        choice: list[Optional[int]] = [None] * partition.n_agents
        for a in actions:
            partition.validate(a)
            if choice[a.agent] is not None:
                raise InvalidActionError(f"agent {a.agent} selected twice")
            choice[a.agent] = a.slot
        return FeasibleSet(tuple(choice))

    def actions(self) -> tuple[ActionId, ...]:
        return tuple(ActionId(i, m) for i, m in enumerate(self.choice) if m is not None)

    def as_set(self) -> frozenset[ActionId]:
        return frozenset(self.actions())

    def size(self) -> int:
        return sum(1 for m in self.choice if m is not None)


def as_action_set(context: "FeasibleSet | Iterable[ActionId]") -> frozenset[ActionId]:
    """Canonicalize a context (FeasibleSet or iterable of actions) to a frozenset."""
    if isinstance(context, FeasibleSet):
        return context.as_set()
    return frozenset(context)


class SetFunction:
    """Monotone normalized objective over a partitioned ground set.

    Subclasses must set ``partition`` and implement :meth:`value`.  The default
    :meth:`marginal` uses two value queries; environments override
    :meth:`agent_marginals` with vectorized versions where it pays off.
    """

    partition: Partition

    def value(self, actions: Iterable[ActionId]) -> float:
        raise NotImplementedError

    def marginal(self, a: ActionId, context: Iterable[ActionId]) -> float:
        """Gain of adding ``a`` to ``context``; zero if ``a`` already present."""
        ctx = as_action_set(context)
        if a in ctx:
            return 0.0
        return self.value(ctx | {a}) - self.value(ctx)

    def agent_marginals(self, agent: int, context: Iterable[ActionId]) -> np.ndarray:
        """Marginal gains of every action of ``agent`` against a fixed context."""
        ctx = as_action_set(context)
        out = np.empty(self.partition.sizes[agent], dtype=np.float64)
        for m in range(self.partition.sizes[agent]):
            out[m] = self.marginal(ActionId(agent, m), ctx)
        return out


class MarginalBudget:
    """Per-agent counter of marginal-oracle queries; reset at round boundaries."""

    def __init__(self, n_agents: int):
        self._counts = np.zeros(n_agents, dtype=np.int64)

    def charge(self, agent: int, count: int = 1) -> None:
        if count < 0:
            raise ValueError("cannot uncharge a query budget")
        self._counts[agent] += count

    def per_agent(self) -> np.ndarray:
        return self._counts.copy()

    def total(self) -> int:
        return int(self._counts.sum())

    def reset(self) -> None:
        self._counts[:] = 0


def local_marginal(
    f: SetFunction,
    a: ActionId,
    context: "FeasibleSet | Iterable[ActionId]",
    budget: Optional[MarginalBudget] = None,
) -> float:
    """One marginal-oracle query f(a | context), charged to ``a.agent``.

    A degenerate query with ``a`` already in the context is answered with 0
    and logged, since the gain of re-adding an element is vacuously zero.
    """
    f.partition.validate(a)
    ctx = as_action_set(context)
    if budget is not None:
        budget.charge(a.agent)
    if a in ctx:
        logger.warning("degenerate marginal query: %s already in context", a)
        return 0.0
    return f.marginal(a, ctx)


def local_marginal_block(
    f: SetFunction,
    agent: int,
    context: "FeasibleSet | Iterable[ActionId]",
    budget: Optional[MarginalBudget] = None,
) -> np.ndarray:
    """Marginal gains of all of ``agent``'s actions; charges one query per slot."""
    ctx = as_action_set(context)
    if budget is not None:
        budget.charge(agent, f.partition.sizes[agent])
    return f.agent_marginals(agent, ctx)


def min_gain_vector(
    f: SetFunction, agent: int, budget: Optional[MarginalBudget] = None
) -> np.ndarray:
    """Smallest-context-complement gains f(v | V - {v}) for agent's actions.

    These are the per-action gains against everything else, a quantity that
    depends on f alone (not on any policy) and can therefore be cached per
    round by callers.
    """
    everything = frozenset(f.partition.all_actions())
    if budget is not None:
        budget.charge(agent, f.partition.sizes[agent])
    out = np.empty(f.partition.sizes[agent], dtype=np.float64)
    for m in range(f.partition.sizes[agent]):
        a = ActionId(agent, m)
        out[m] = f.marginal(a, everything - {a})
    return out
