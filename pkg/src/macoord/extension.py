"""Policy-space relaxation of a partitioned set objective.

A policy profile assigns each agent a sub-distribution over its own actions
(coordinates are nonnegative and sum to at most one; leftover mass means
"play nothing").  The relaxed objective is the expectation of the set
objective when every agent samples independently from its block:

    F(pi) = E[ f({sampled actions}) ].

F is multilinear: linear in each block, so partial derivatives are
expectations of marginal gains against the other agents' samples.  On top of
F this module provides reweighted ("surrogate") gradients

    int_0^1 w(z) grad F(z * pi) dz,      w(z) = exp(rate * (z - 1)),

whose stationary points carry better worst-case guarantees, plus the
Monte-Carlo estimators the learners consume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ScaleError
from .ground import (
    ActionId,
    FeasibleSet,
    MarginalBudget,
    Partition,
    SetFunction,
    local_marginal_block,
    min_gain_vector,
)

EXACT_ENUMERATION_LIMIT = 1_000_000
QUADRATURE_NODES = 64


@dataclass(frozen=True)
class PolicyProfile:
    """One sub-distribution block per agent, all float64 and read-only."""

    blocks: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        blocks = []
        for b in self.blocks:
            arr = np.asarray(b, dtype=np.float64).copy()
            if arr.ndim != 1 or arr.size == 0:
                raise ValueError("each policy block must be a nonempty 1-d vector")
            arr.flags.writeable = False
            blocks.append(arr)
        object.__setattr__(self, "blocks", tuple(blocks))

    @staticmethod
    def zeros(partition: Partition) -> "PolicyProfile":
        return PolicyProfile(tuple(np.zeros(k) for k in partition.sizes))

    @staticmethod
    def uniform(partition: Partition) -> "PolicyProfile":
        """Uniform distribution on each agent's own actions (no idle mass)."""
        return PolicyProfile(tuple(np.full(k, 1.0 / k) for k in partition.sizes))

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(b.size for b in self.blocks)

    @property
    def n_agents(self) -> int:
        return len(self.blocks)

    def partition(self) -> Partition:
        return Partition(self.sizes)

    def validate(self, atol: float = 1e-9) -> None:
        for i, b in enumerate(self.blocks):
            if not np.all(np.isfinite(b)):
                raise ValueError(f"block {i} has non-finite entries")
            if b.min(initial=0.0) < -atol:
                raise ValueError(f"block {i} has negative mass {b.min()}")
            if b.sum() > 1.0 + atol:
                raise ValueError(f"block {i} carries total mass {b.sum()} > 1")

    def scaled(self, z: float) -> "PolicyProfile":
        if not (0.0 <= z <= 1.0):
            raise ValueError(f"scale {z} outside [0, 1]")
        return PolicyProfile(tuple(z * b for b in self.blocks))

    def with_block(self, agent: int, block: np.ndarray) -> "PolicyProfile":
        new = list(self.blocks)
        new[agent] = np.asarray(block, dtype=np.float64)
        return PolicyProfile(tuple(new))

    def flat(self) -> np.ndarray:
        return np.concatenate(self.blocks)


@dataclass(frozen=True)
class GradientEstimate:
    """Single-sample (or batch-averaged) gradient block for one agent."""

    agent: int
    values: np.ndarray
    scale: Optional[float] = None  # z draw used for a reweighted estimate


@dataclass(frozen=True)
class SurrogateScheme:
    """Reweighting scheme for surrogate gradients.

    kind:
      * ``"submodular"``   -- rate 1; pairs with a per-coordinate bonus of
        e^{-1} times the min-gain vector (gain against everything else).
      * ``"weak-dr"``      -- rate ``alpha`` in (0, 1], the lower DR ratio.
      * ``"weak-sub"``     -- rate ``beta * (1 - gamma) + gamma**2`` built from
        the two-sided submodularity ratios ``gamma`` in (0, 1], ``beta`` >= 1.
    """

    kind: str
    alpha: Optional[float] = None
    gamma: Optional[float] = None
    beta: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind == "submodular":
            pass
        elif self.kind == "weak-dr":
            if self.alpha is None or not (0.0 < self.alpha <= 1.0):
                raise ValueError(f"weak-dr scheme needs alpha in (0, 1], got {self.alpha}")
        elif self.kind == "weak-sub":
            if self.gamma is None or not (0.0 < self.gamma <= 1.0):
                raise ValueError(f"weak-sub scheme needs gamma in (0, 1], got {self.gamma}")
            if self.beta is None or self.beta < 1.0:
                raise ValueError(f"weak-sub scheme needs beta >= 1, got {self.beta}")
        else:
            raise ValueError(f"unknown surrogate scheme kind {self.kind!r}")

    @staticmethod
    def submodular() -> "SurrogateScheme":
        return SurrogateScheme("submodular")

    @staticmethod
    def weak_dr(alpha: float) -> "SurrogateScheme":
        return SurrogateScheme("weak-dr", alpha=alpha)

    @staticmethod
    def weak_sub(gamma: float, beta: float) -> "SurrogateScheme":
        return SurrogateScheme("weak-sub", gamma=gamma, beta=beta)

    @property
    def rate(self) -> float:
        """Exponent c in the weight w(z) = exp(c * (z - 1))."""
        if self.kind == "submodular":
            return 1.0
        if self.kind == "weak-dr":
            return float(self.alpha)
        return float(self.beta * (1.0 - self.gamma) + self.gamma**2)

    @property
    def adds_min_gain(self) -> bool:
        return self.kind == "submodular"

    def weight(self, z: float) -> float:
        return math.exp(self.rate * (z - 1.0))

    @property
    def weight_integral(self) -> float:
        """int_0^1 w(z) dz = (1 - e^{-rate}) / rate."""
        c = self.rate
        return (1.0 - math.exp(-c)) / c


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def _sample_slot(block: np.ndarray, u: float) -> Optional[int]:
    """Slot index under half-open cumulative intervals; None for leftover mass."""
    cum = np.cumsum(block)
    idx = int(np.searchsorted(cum, u, side="right"))
    return idx if idx < block.size else None


def sample_distribution_slot(weights: np.ndarray, u: float) -> int:
    """Like :func:`_sample_slot` for a full distribution; always returns a slot."""
    idx = _sample_slot(weights, u)
    return weights.size - 1 if idx is None else idx


def sample_actions(profile: PolicyProfile, rng: np.random.Generator) -> FeasibleSet:
    """Draw one joint action set: one uniform per agent, independent blocks."""
    u = rng.random(profile.n_agents)
    return FeasibleSet(
        tuple(_sample_slot(b, u[i]) for i, b in enumerate(profile.blocks))
    )


def sample_context(
    profile: PolicyProfile, exclude_agent: int, rng: np.random.Generator
) -> frozenset[ActionId]:
    """Sample every agent's block except one; used for local gradient estimates."""
    u = rng.random(profile.n_agents)
    out = []
    for j, b in enumerate(profile.blocks):
        if j == exclude_agent:
            continue
        slot = _sample_slot(b, u[j])
        if slot is not None:
            out.append(ActionId(j, slot))
    return frozenset(out)


def sample_z(scheme: SurrogateScheme, rng: np.random.Generator) -> float:
    """Draw z in [0, 1] with density proportional to the scheme weight w(z).

    Inverse transform of the normalized CDF: z = ln(1 + u (e^c - 1)) / c.
    """
    u = rng.random()
    c = scheme.rate
    return math.log1p(u * math.expm1(c)) / c


# ---------------------------------------------------------------------------
# exact (enumeration / quadrature) operations
# ---------------------------------------------------------------------------


def _guard_enumeration(sizes: Sequence[int], exclude: Optional[int] = None) -> None:
    count = 1
    for i, k in enumerate(sizes):
        if i == exclude:
            continue
        count *= k + 1
        if count > EXACT_ENUMERATION_LIMIT:
            raise ScaleError(
                f"joint outcome space exceeds {EXACT_ENUMERATION_LIMIT}; "
                "use the Monte-Carlo estimators instead"
            )


def _agent_outcomes(block: np.ndarray, agent: int):
    """(probability, action-or-None) outcomes of one block, zero-prob pruned."""
    outcomes = []
    idle = 1.0 - float(block.sum())
    if idle > 0.0:
        outcomes.append((idle, None))
    for m, p in enumerate(block):
        if p > 0.0:
            outcomes.append((float(p), ActionId(agent, m)))
    return outcomes


def _joint_outcomes(profile: PolicyProfile, exclude_agent: Optional[int] = None):
    """Yield (probability, frozenset-of-actions) over all joint outcomes."""
    per_agent = [
        _agent_outcomes(b, i)
        for i, b in enumerate(profile.blocks)
        if i != exclude_agent
    ]
    stack: list[tuple[int, float, list[ActionId]]] = [(0, 1.0, [])]
    while stack:
        depth, prob, acc = stack.pop()
        if depth == len(per_agent):
            yield prob, frozenset(acc)
            continue
        for p, a in per_agent[depth]:
            stack.append((depth + 1, prob * p, acc if a is None else acc + [a]))


def exact_extension(f: SetFunction, profile: PolicyProfile) -> float:
    """F(pi) by full enumeration of the joint outcome space.

    Guarded by :data:`EXACT_ENUMERATION_LIMIT` on prod_i (size_i + 1).
    """
    profile.validate()
    _guard_enumeration(profile.sizes)
    total = 0.0
    for prob, chosen in _joint_outcomes(profile):
        total += prob * f.value(chosen)
    return total


def exact_gradient_block(f: SetFunction, profile: PolicyProfile, agent: int) -> np.ndarray:
    """Exact partial derivatives of F for one agent's block.

    dF/dpi_{agent,m} = E[ f(v_{agent,m} | other agents' samples) ], enumerated.
    """
    profile.validate()
    _guard_enumeration(profile.sizes, exclude=agent)
    k = profile.sizes[agent]
    out = np.zeros(k, dtype=np.float64)
    for prob, ctx in _joint_outcomes(profile, exclude_agent=agent):
        gains = f.agent_marginals(agent, ctx)
        out += prob * gains
    return out

def exact_partial(f: SetFunction, profile: PolicyProfile, a: ActionId) -> float:
    """Exact partial derivative of F along one coordinate."""
    f.partition.validate(a)
    return float(exact_gradient_block(f, profile, a.agent)[a.slot])


def exact_gradient(f: SetFunction, profile: PolicyProfile) -> list[np.ndarray]:
    """Exact full gradient of F, one block per agent."""
    return [exact_gradient_block(f, profile, i) for i in range(profile.n_agents)]


def _gauss_legendre_01(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * (x + 1.0), 0.5 * w


def exact_surrogate_gradient_block(
    f: SetFunction,
    profile: PolicyProfile,
    scheme: SurrogateScheme,
    agent: int,
    nodes: int = QUADRATURE_NODES,
) -> np.ndarray:
    """Quadrature evaluation of one agent's block of the reweighted gradient.

    Gauss-Legendre on [0, 1]; the integrand is smooth (a polynomial in z of
    degree < |V| times an exponential weight), so 64 nodes are far beyond the
    accuracy needed at desk scale.  For the submodular scheme the min-gain
    bonus e^{-1} f(v | V - {v}) is added to every coordinate.
    """
    zs, ws = _gauss_legendre_01(nodes)
    grad = np.zeros(profile.sizes[agent], dtype=np.float64)
    for z, wq in zip(zs, ws):
        grad += wq * scheme.weight(float(z)) * exact_gradient_block(
            f, profile.scaled(float(z)), agent
        )
    if scheme.adds_min_gain:
        grad += math.exp(-1.0) * min_gain_vector(f, agent)
    return grad


def exact_surrogate_gradient(
    f: SetFunction,
    profile: PolicyProfile,
    scheme: SurrogateScheme,
    nodes: int = QUADRATURE_NODES,
) -> list[np.ndarray]:
    """Full reweighted gradient, one block per agent (see the block variant)."""
    return [
        exact_surrogate_gradient_block(f, profile, scheme, i, nodes)
        for i in range(profile.n_agents)
    ]


def exact_surrogate_value(
    f: SetFunction,
    profile: PolicyProfile,
    scheme: SurrogateScheme,
    nodes: int = QUADRATURE_NODES,
) -> float:
    """Quadrature evaluation of the surrogate potential.

    The potential whose gradient is ``exact_surrogate_gradient`` is

        F^s(pi) = int_0^1 (w(z) / z) F(z * pi) dz   (+ linear min-gain bonus),

    which is well defined since F(z * pi) vanishes linearly at z = 0 for a
    normalized objective.  Gauss-Legendre nodes avoid the endpoint.
    """
    zs, ws = _gauss_legendre_01(nodes)
    total = 0.0
    for z, wq in zip(zs, ws):
        total += wq * scheme.weight(float(z)) / float(z) * exact_extension(
            f, profile.scaled(float(z))
        )
    if scheme.adds_min_gain:
        for i in range(profile.n_agents):
            total += math.exp(-1.0) * float(
                np.dot(min_gain_vector(f, i), profile.blocks[i])
            )
    return total


# ---------------------------------------------------------------------------
# Monte-Carlo estimators (one joint sample per call; batching is the caller's)
# ---------------------------------------------------------------------------


def estimate_gradient(
    f: SetFunction,
    profile: PolicyProfile,
    agent: int,
    rng: np.random.Generator,
    budget: Optional[MarginalBudget] = None,
) -> GradientEstimate:
    """Unbiased single-sample estimate of agent's gradient block of F.

    Samples every other agent's block once and queries the agent's own
    marginal gains against the sampled context (one query per slot).
    """
    ctx = sample_context(profile, agent, rng)
    values = local_marginal_block(f, agent, ctx, budget)
    return GradientEstimate(agent=agent, values=values)


def estimate_surrogate_gradient(
    f: SetFunction,
    profile: PolicyProfile,
    agent: int,
    scheme: SurrogateScheme,
    rng: np.random.Generator,
    budget: Optional[MarginalBudget] = None,
    min_gain: Optional[np.ndarray] = None,
) -> GradientEstimate:
    """Unbiased single-sample estimate of the reweighted gradient block.

    Draws z from the normalized weight density, samples the other agents from
    the z-scaled blocks, and rescales the observed gains by int_0^1 w.  With
    the submodular scheme the (policy-independent) min-gain bonus is added;
    pass ``min_gain`` to reuse a per-round cached vector, otherwise it is
    recomputed here at the cost of one query per slot.
    """
    z = sample_z(scheme, rng)
    ctx = sample_context(profile.scaled(z), agent, rng)
    values = scheme.weight_integral * local_marginal_block(f, agent, ctx, budget)
    if scheme.adds_min_gain:
        if min_gain is None:
            min_gain = min_gain_vector(f, agent, budget)
        values = values + math.exp(-1.0) * min_gain
    return GradientEstimate(agent=agent, values=values, scale=z)
