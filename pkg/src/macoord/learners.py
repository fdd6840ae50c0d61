"""Decentralized learners over the policy relaxation, plus baselines.

Both coordination learners keep, per agent, an estimate of *every* agent's
policy block and talk only to graph neighbors once per round (or once per
inner step).  Agents query the objective only through marginal gains of
their own actions.

* :class:`PolicyConsensusLearner` — single projected-ascent step per round on
  a reweighted stochastic gradient, with weighted averaging of neighbor
  estimates (consensus matrix must be symmetric doubly stochastic).
* :class:`MetaConditionalGradientLearner` — per-round K-step conditional
  gradient whose ascent directions come from K persistent online linear
  maximizers; estimates spread by coordinate-wise max over neighbors.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError
from .extension import (
    PolicyProfile,
    SurrogateScheme,
    estimate_gradient,
    estimate_surrogate_gradient,
    exact_surrogate_gradient_block,
    sample_distribution_slot,
)
from .geometry import normalize_policy, project_capped_simplex
from .ground import (
    ActionId,
    FeasibleSet,
    MarginalBudget,
    Partition,
    SetFunction,
    local_marginal_block,
    min_gain_vector,
)
from .network import CommGraph, exchange

_RANDOM_TAG = 0x72616E64


def agent_stream(seed: int, t: int, agent: int) -> np.random.Generator:
    """Independent per-(round, agent) generator; order-insensitive across agents."""
    return np.random.default_rng(np.random.SeedSequence((int(seed), int(t), int(agent))))


def _check_consensus_matrix(w: np.ndarray, graph: CommGraph, atol: float = 1e-9) -> None:
    n = graph.n
    if w.shape != (n, n):
        raise ConfigError("consensus matrix has wrong shape")
    if not np.allclose(w, w.T, atol=atol):
        raise ConfigError("consensus matrix must be symmetric")
    if not np.allclose(w.sum(axis=1), 1.0, atol=atol) or w.min() < -atol:
        raise ConfigError("consensus matrix must be doubly stochastic")
    for i in range(n):
        allowed = set(graph.neighbors(i)) | {i}
        for j in range(n):
            if j not in allowed and abs(w[i, j]) > atol:
                raise ConfigError(
                    f"consensus weight between non-neighbors {i} and {j}"
                )


class OnlineGradientAscentOracle:
    """Online linear maximizer over one capped simplex.

    Holds an iterate (initialized uniform, hence on the sum-one face), returns
    it as the next direction, and moves it by a projected gradient step on
    each observed linear reward.  Nonnegative rewards keep the iterate on the
    face, since the projection of a superunit nonnegative point lands there.
    """

    def __init__(self, dim: int, step: float):
        if dim < 1 or step <= 0:
            raise ConfigError("oracle needs dim >= 1 and a positive step")
        self.step = float(step)
        self.iterate = np.full(dim, 1.0 / dim)

    def direction(self) -> np.ndarray:
        return self.iterate.copy()

    def update(self, reward: np.ndarray) -> None:
        reward = np.asarray(reward, dtype=np.float64)
        if reward.shape != self.iterate.shape:
            raise ValueError("reward dimension mismatch")
        self.iterate = project_capped_simplex(self.iterate + self.step * reward)


def oga_linear_oracle_step(
    oracle: OnlineGradientAscentOracle, reward: np.ndarray
) -> np.ndarray:
    """One full oracle interaction: emit the current direction, then learn."""
    d = oracle.direction()
    oracle.update(reward)
    return d


class PolicyConsensusLearner:
    """Consensus-plus-projected-ascent coordination (one gradient step/round).

    Parameters
    ----------
    partition : Partition
        Per-agent action-set sizes.
    graph : CommGraph
        Communication topology; must match ``weights``.
    weights : ndarray
        Symmetric doubly-stochastic consensus matrix supported on the graph.
    scheme : SurrogateScheme
        Gradient reweighting; the submodular scheme also adds the min-gain
        bonus, cached once per round since it does not depend on policies.
    horizon : int
        Used for the default step size eta0 / sqrt(horizon).
    seed : int
        Master seed; per-(round, agent) streams are derived from it.
    batch : int
        Single-sample estimates averaged per round and agent.
    exact_gradient : bool
        Replace the Monte-Carlo estimate with the quadrature-exact block
        (only possible at enumeration scale; no marginal queries charged).
    """

    kind = "ma-spl"

    def __init__(
        self,
        partition: Partition,
        graph: CommGraph,
        weights: np.ndarray,
        scheme: SurrogateScheme,
        horizon: int,
        seed: int,
        eta0: float = 1.0,
        batch: int = 10,
        exact_gradient: bool = False,
        step_size: Optional[float] = None,
    ):
        if graph.n != partition.n_agents:
            raise ConfigError("graph and partition disagree on the number of agents")
        weights = np.asarray(weights, dtype=np.float64)
        _check_consensus_matrix(weights, graph)
        if batch < 1:
            raise ConfigError("batch must be >= 1")
        self.partition = partition
        self.graph = graph
        self.weights = weights
        self.scheme = scheme
        self.seed = int(seed)
        self.batch = int(batch)
        self.exact_gradient = bool(exact_gradient)
        self.step_size = float(step_size) if step_size is not None else eta0 / math.sqrt(horizon)
        n = partition.n_agents
        self.policies: list[list[np.ndarray]] = [
            [
                np.full(partition.sizes[j], 1.0 / partition.sizes[j])
                if j == i
                else np.zeros(partition.sizes[j])
                for j in range(n)
            ]
            for i in range(n)
        ]
        self.budget = MarginalBudget(n)

    def set_start(self, profile: PolicyProfile) -> None:
        """Reset every agent's estimates to a common profile (diagnostics)."""
        if profile.sizes != self.partition.sizes:
            raise ConfigError("profile does not match the partition")
        n = self.partition.n_agents
        self.policies = [
            [profile.blocks[j].copy() for j in range(n)] for i in range(n)
        ]

    def local_profile(self, agent: int) -> PolicyProfile:
        return PolicyProfile(tuple(self.policies[agent]))

    def played_profile(self) -> PolicyProfile:
        """Own blocks only — the joint policy actually being sampled from."""
        n = self.partition.n_agents
        return PolicyProfile(tuple(self.policies[i][i] for i in range(n)))

    def round(self, f: SetFunction, t: int) -> FeasibleSet:
        self.budget.reset()
        n = self.partition.n_agents
        streams = [agent_stream(self.seed, t, i) for i in range(n)]

        # play: each agent samples from its own normalized block
        chosen = []
        for i in range(n):
            p = normalize_policy(self.policies[i][i])
            chosen.append(sample_distribution_slot(p, streams[i].random()))

        # synchronous exchange of full estimate vectors (barrier snapshot)
        inbox = exchange([self.policies[i] for i in range(n)], self.graph)

        # local reweighted-gradient estimates at each agent's current view
        grads = []
        for i in range(n):
            profile = self.local_profile(i)
            if self.exact_gradient:
                grads.append(
                    exact_surrogate_gradient_block(f, profile, self.scheme, i)
                )
                continue
            min_gain = (
                min_gain_vector(f, i, self.budget) if self.scheme.adds_min_gain else None
            )
            samples = [
                estimate_surrogate_gradient(
                    f, profile, i, self.scheme, streams[i], self.budget, min_gain
                ).values
                for _ in range(self.batch)
            ]
            grads.append(np.mean(samples, axis=0))

        # consensus averaging on every block; ascent step on the own block
        new_policies = []
        for i in range(n):
            row = []
            for j in range(n):
                mixed = sum(
                    self.weights[i, k] * inbox[i][k][j] for k in inbox[i]
                )
                if j == i:
                    row.append(project_capped_simplex(mixed + self.step_size * grads[i]))
                else:
                    row.append(mixed)
            new_policies.append(row)
        self.policies = new_policies
        return FeasibleSet(tuple(chosen))

    def disagreement(self) -> float:
        """Total L2 spread of the agents' estimates around their mean."""
        n = self.partition.n_agents
        total = 0.0
        for j in range(n):
            stack = np.stack([self.policies[i][j] for i in range(n)])
            total += float(np.linalg.norm(stack - stack.mean(axis=0), axis=1).sum())
        return total


class MetaConditionalGradientLearner:
    """Per-round K-step conditional gradient with max-consensus estimates.

    Every round rebuilds the joint policy from zero in K inner steps: each
    agent adds one K-th of a direction proposed by its k-th online linear
    maximizer, exchanges estimate vectors, and keeps the coordinate-wise max
    of what it saw (estimates of any block only ever grow within a round, so
    the max is the freshest copy).  After playing, each inner-step profile is
    scored by an L-sample mean of marginal gains and fed back to the matching
    maximizer.
    """

    kind = "ma-mpl"

    def __init__(
        self,
        partition: Partition,
        graph: CommGraph,
        horizon: int,
        seed: int,
        inner_steps: int = 15,
        sample_batch: int = 10,
        eta0: float = 1.0,
        step_size: Optional[float] = None,
    ):
        if graph.n != partition.n_agents:
            raise ConfigError("graph and partition disagree on the number of agents")
        if inner_steps < 3:
            raise ConfigError("need at least 3 inner steps per round")
        if sample_batch < 1:
            raise ConfigError("sample batch must be >= 1")
        self.partition = partition
        self.graph = graph
        self.seed = int(seed)
        self.inner_steps = int(inner_steps)
        self.sample_batch = int(sample_batch)
        step = float(step_size) if step_size is not None else eta0 / math.sqrt(horizon)
        n = partition.n_agents
        self.oracles = [
            [OnlineGradientAscentOracle(partition.sizes[i], step) for _ in range(inner_steps)]
            for i in range(n)
        ]
        self.budget = MarginalBudget(n)
        self.estimates: list[list[np.ndarray]] = self._zero_estimates()
        self.last_inner_disagreement: list[list[float]] = []

    def _zero_estimates(self) -> list[list[np.ndarray]]:
        n = self.partition.n_agents
        return [
            [np.zeros(self.partition.sizes[j]) for j in range(n)] for _ in range(n)
        ]

    def local_profile(self, agent: int) -> PolicyProfile:
        return PolicyProfile(tuple(self.estimates[agent]))

    def _inner_disagreement(self) -> list[float]:
        """Per-agent (1/n) <1, own-blocks - estimates>; see the path-graph bound."""
        n = self.partition.n_agents
        own = [float(self.estimates[j][j].sum()) for j in range(n)]
        out = []
        for i in range(n):
            est = [float(self.estimates[i][j].sum()) for j in range(n)]
            out.append(sum(o - e for o, e in zip(own, est)) / n)
        return out

    def round(
        self, f: SetFunction, t: int, record_inner: bool = False
    ) -> FeasibleSet:
        self.budget.reset()
        n = self.partition.n_agents
        self.estimates = self._zero_estimates()
        self.last_inner_disagreement = []
        snapshots: list[list[list[np.ndarray]]] = []

        for k in range(self.inner_steps):
            messages = []
            for i in range(n):
                y = [b.copy() for b in self.estimates[i]]
                y[i] = y[i] + self.oracles[i][k].direction() / self.inner_steps
                messages.append(y)
            inbox = exchange(messages, self.graph)
            self.estimates = [
                [
                    np.max(np.stack([inbox[i][j][m] for j in inbox[i]]), axis=0)
                    for m in range(n)
                ]
                for i in range(n)
            ]
            snapshots.append([[b.copy() for b in self.estimates[i]] for i in range(n)])
            if record_inner:
                self.last_inner_disagreement.append(self._inner_disagreement())

        streams = [agent_stream(self.seed, t, i) for i in range(n)]
        chosen = []
        for i in range(n):
            p = normalize_policy(self.estimates[i][i])
            chosen.append(sample_distribution_slot(p, streams[i].random()))

        # score every inner profile and teach the matching oracle
        for i in range(n):
            for k in range(self.inner_steps):
                profile = PolicyProfile(tuple(snapshots[k][i]))
                samples = [
                    estimate_gradient(f, profile, i, streams[i], self.budget).values
                    for _ in range(self.sample_batch)
                ]
                self.oracles[i][k].update(np.mean(samples, axis=0))
        return FeasibleSet(tuple(chosen))

    def disagreement(self) -> float:
        """Worst per-agent estimate gap at the final inner step of the round."""
        vals = self._inner_disagreement()
        return max(vals) if vals else 0.0


def random_baseline_round(
    partition: Partition, rng: np.random.Generator
) -> FeasibleSet:
    """Every agent plays a uniformly random own action."""
    return FeasibleSet(
        tuple(int(rng.integers(k)) for k in partition.sizes)
    )


def sequential_greedy_round(
    f: SetFunction,
    partition: Partition,
    budget: Optional[MarginalBudget] = None,
) -> FeasibleSet:
    """Agents in index order each take their best action given predecessors.

    Ties break to the lowest slot (argmax returns the first maximizer).
    """
    chosen: list[ActionId] = []
    for i in range(partition.n_agents):
        gains = local_marginal_block(f, i, chosen, budget)
        chosen.append(ActionId(i, int(np.argmax(gains))))
    return FeasibleSet.from_actions(partition, chosen)


class RandomLearner:
    kind = "random"

    def __init__(self, partition: Partition, seed: int):
        self.partition = partition
        self.seed = int(seed)
        self.budget = MarginalBudget(partition.n_agents)

    def round(self, f: SetFunction, t: int) -> FeasibleSet:
        self.budget.reset()
        return random_baseline_round(
            self.partition, agent_stream(self.seed, t, _RANDOM_TAG)
        )

    def disagreement(self) -> float:
        return 0.0


class GreedyLearner:
    kind = "greedy"

    def __init__(self, partition: Partition, seed: int = 0):
        self.partition = partition
        self.budget = MarginalBudget(partition.n_agents)

    def round(self, f: SetFunction, t: int) -> FeasibleSet:
        self.budget.reset()
        return sequential_greedy_round(f, self.partition, self.budget)

    def disagreement(self) -> float:
        return 0.0
