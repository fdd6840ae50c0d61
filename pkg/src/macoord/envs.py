"""Benchmark objectives and simulated worlds.

Two moving-target worlds share the same motion model for agents (a grid of
heading x speed moves per tick) and differ in the reward:

* facility-style proximity coverage: every target pays the inverse distance
  to the closest selected agent position (floored), a monotone submodular
  reward;
* tracking-information gain: every target pays the drop in the trace of its
  posterior covariance when the selected positions contribute range-bearing
  style information, a monotone but not submodular reward (it is weakly
  DR-submodular with some ratio alpha > 0).

Static instances used by the oracle suite live here too: weighted coverage
(including a tight two-slot family with a bad interior fixed point), modular,
random-coverage, and square-root-of-modular objectives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, ScaleError
from .ground import ActionId, FeasibleSet, Partition, SetFunction, as_action_set

DT = 0.02  # seconds per tick (25 s split into 1250 ticks at full scale)
DISTANCE_FLOOR = 1e-3
ADVERSARIAL_TRIGGER_RADIUS = 20.0
EVADE_SPEED = 15.0
EVADE_CANDIDATE_HEADINGS = 16
SYNTHETIC_MAX_ACTIONS = 12

DEFAULT_HEADINGS = 8
FACILITY_SPEEDS = (5.0, 10.0, 15.0)
EKF_SPEEDS = (2.0, 7.0, 12.0)
EKF_PROCESS_SCALE = 0.02
EKF_NOISE_VAR = 0.01


# ---------------------------------------------------------------------------
# static set functions
# ---------------------------------------------------------------------------


class ModularFunction(SetFunction):
    """f(S) = sum of per-action weights; the additive baseline case."""

    def __init__(self, partition: Partition, weights: np.ndarray):
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (partition.total,):
            raise ValueError("need one weight per action")
        if weights.min(initial=0.0) < 0:
            raise ValueError("weights must be nonnegative")
        self.partition = partition
        self.weights = weights

    def value(self, actions: Iterable[ActionId]) -> float:
        rows = [self.partition.flat_index(a) for a in as_action_set(actions)]
        return float(self.weights[rows].sum())

    def marginal(self, a: ActionId, context: Iterable[ActionId]) -> float:
        ctx = as_action_set(context)
        if a in ctx:
            return 0.0
        return float(self.weights[self.partition.flat_index(a)])


class SqrtModularFunction(SetFunction):
    """f(S) = sqrt(sum of weights): concave-of-modular, monotone submodular."""

    def __init__(self, partition: Partition, weights: np.ndarray):
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (partition.total,):
            raise ValueError("need one weight per action")
        if weights.min(initial=0.0) < 0:
            raise ValueError("weights must be nonnegative")
        self.partition = partition
        self.weights = weights

    def value(self, actions: Iterable[ActionId]) -> float:
        rows = [self.partition.flat_index(a) for a in as_action_set(actions)]
        return float(math.sqrt(self.weights[rows].sum()))


class WeightedCoverage(SetFunction):
    """f(S) = total weight of universe elements covered by the selected sets."""

    def __init__(self, partition: Partition, masks: np.ndarray, weights: np.ndarray):
        masks = np.asarray(masks, dtype=bool)
        weights = np.asarray(weights, dtype=np.float64)
        if masks.ndim != 2 or masks.shape[0] != partition.total:
            raise ValueError("need one universe mask per action")
        if weights.shape != (masks.shape[1],):
            raise ValueError("need one weight per universe element")
        if weights.min(initial=0.0) < 0:
            raise ValueError("element weights must be nonnegative")
        self.partition = partition
        self.masks = masks
        self.element_weights = weights

    def _covered(self, actions: frozenset[ActionId]) -> np.ndarray:
        if not actions:
            return np.zeros(self.masks.shape[1], dtype=bool)
        rows = [self.partition.flat_index(a) for a in actions]
        return self.masks[rows].any(axis=0)

    def value(self, actions: Iterable[ActionId]) -> float:
        return float(self.element_weights[self._covered(as_action_set(actions))].sum())

    def agent_marginals(self, agent: int, context: Iterable[ActionId]) -> np.ndarray:
        covered = self._covered(as_action_set(context))
        lo = self.partition.flat_index(ActionId(agent, 0))
        hi = lo + self.partition.sizes[agent]
        fresh = self.masks[lo:hi] & ~covered
        return fresh @ self.element_weights


def coverage_instance(n: int, epsilon: float, k: int) -> WeightedCoverage:
    """Two-slot coverage family with a poor interior fixed point.

    Each of the n agents holds two covering sets.  Slot 0 of the last agent
    covers all n-1 unit-weight elements x_0..x_{n-2}; slot 1 of agent i < n-1
    covers x_i alone; slot 0 of agent i < n-1 covers a private element of tiny
    weight ``epsilon``; slot 1 of the last agent covers n-k private unit
    elements.  Selecting every slot-0 set yields value (1 + epsilon)(n - 1)
    and is a fixed point of naive relaxed ascent, while the slot-1 selection
    achieves 2n - k - 1.
    """
    if n < 2:
        raise ConfigError("coverage instance needs n >= 2 agents")
    if not (1 <= k <= n - 1):
        raise ConfigError(f"coverage instance needs 1 <= k <= n-1, got k={k}")
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    n_x, n_y, n_eps = n - 1, n - k, n - 1
    universe = n_x + n_y + n_eps
    x0, y0, e0 = 0, n_x, n_x + n_y
    weights = np.concatenate(
        [np.ones(n_x), np.ones(n_y), np.full(n_eps, float(epsilon))]
    )
    partition = Partition((2,) * n)
    masks = np.zeros((partition.total, universe), dtype=bool)
    for i in range(n - 1):
        masks[partition.flat_index(ActionId(i, 0)), e0 + i] = True
        masks[partition.flat_index(ActionId(i, 1)), x0 + i] = True
    masks[partition.flat_index(ActionId(n - 1, 0)), x0 : x0 + n_x] = True
    masks[partition.flat_index(ActionId(n - 1, 1)), y0 : y0 + n_y] = True
    return WeightedCoverage(partition, masks, weights)


def synthetic_setfn(
    kind: str, sizes: Sequence[int], rng: np.random.Generator
) -> SetFunction:
    """Small random objective of a named kind for oracle-scale testing.

    Kinds: ``modular``, ``coverage-random`` (random incidence weighted
    coverage), ``concave-of-modular`` (square root of a random modular sum).
    """
    partition = Partition(tuple(sizes))
    if partition.total > SYNTHETIC_MAX_ACTIONS:
        raise ScaleError(
            f"synthetic objectives are capped at {SYNTHETIC_MAX_ACTIONS} actions"
        )
    if kind == "modular":
        return ModularFunction(partition, rng.uniform(0.1, 1.0, partition.total))
    if kind == "concave-of-modular":
        return SqrtModularFunction(partition, rng.uniform(0.1, 1.0, partition.total))
    if kind == "coverage-random":
        universe = partition.total + 4
        masks = rng.random((partition.total, universe)) < 0.35
        # every action covers at least one element so singletons are informative
        for row in range(partition.total):
            masks[row, int(rng.integers(universe))] = True
        weights = rng.uniform(0.1, 1.0, universe)
        return WeightedCoverage(partition, masks, weights)
    raise ConfigError(f"unknown synthetic objective kind {kind!r}")


# ---------------------------------------------------------------------------
# moving-target worlds
# ---------------------------------------------------------------------------


@dataclass
class Target:
    kind: str  # "random" | "polyline" | "adversarial" | "brownian"
    pos: np.ndarray
    velocity: Optional[np.ndarray] = None  # units per second
    segment_count: int = 1  # polyline: number of straight legs over the horizon
    evade_ticks: int = 0
    evade_velocity: Optional[np.ndarray] = None


class MotionGrid:
    """Per-tick displacement options: headings pi/4 .. 2pi crossed with speeds."""

    def __init__(self, n_headings: int, speeds: Sequence[float], dt: float = DT):
        if n_headings < 1 or len(speeds) < 1:
            raise ConfigError("need at least one heading and one speed")
        self.headings = np.array(
            [2.0 * math.pi * (h + 1) / n_headings for h in range(n_headings)]
        )
        self.speeds = np.array(list(speeds), dtype=np.float64)
        self.dt = dt

    @property
    def n_moves(self) -> int:
        return self.headings.size * self.speeds.size

    def displacements(self) -> np.ndarray:
        """(n_moves, 2) array; slot = heading_index * n_speeds + speed_index."""
        dirs = np.stack([np.cos(self.headings), np.sin(self.headings)], axis=1)
        out = dirs[:, None, :] * self.speeds[None, :, None] * self.dt
        return out.reshape(-1, 2)


class TrackingWorld:
    """Agent and target positions advanced tick by tick."""

    def __init__(
        self,
        agent_positions: np.ndarray,
        targets: list[Target],
        motion: MotionGrid,
        horizon: int,
    ):
        self.agents = np.asarray(agent_positions, dtype=np.float64).copy()
        self.targets = targets
        self.motion = motion
        self.horizon = int(horizon)
        self.tick = 0

    @property
    def n_agents(self) -> int:
        return self.agents.shape[0]

    def partition(self) -> Partition:
        return Partition((self.motion.n_moves,) * self.n_agents)

    def candidate_positions(self) -> np.ndarray:
        """(total_actions, 2): landing point of each action from current poses."""
        moves = self.motion.displacements()
        return (self.agents[:, None, :] + moves[None, :, :]).reshape(-1, 2)

    def apply_moves(self, chosen: FeasibleSet) -> None:
        moves = self.motion.displacements()
        for i, slot in enumerate(chosen.choice):
            if slot is not None:
                self.agents[i] = self.agents[i] + moves[slot]

    def target_positions(self) -> np.ndarray:
        return np.stack([t.pos for t in self.targets])


def _random_walk_velocity(rng: np.random.Generator) -> np.ndarray:
    """Heading uniform on [0, 2pi), speed uniform on [5, 10] units/s."""
    theta = rng.uniform(0.0, 2.0 * math.pi)
    speed = rng.uniform(5.0, 10.0)
    return speed * np.array([math.cos(theta), math.sin(theta)])


def _evade_direction(pos: np.ndarray, agents: np.ndarray) -> np.ndarray:
    """Unit heading (from a fixed 16-way grid) maximizing the average distance
    of the position one second ahead to all agents; lowest index wins ties."""
    best, best_score = None, -math.inf
    for h in range(EVADE_CANDIDATE_HEADINGS):
        theta = 2.0 * math.pi * h / EVADE_CANDIDATE_HEADINGS
        d = np.array([math.cos(theta), math.sin(theta)])
        landing = pos + EVADE_SPEED * d
        score = float(np.linalg.norm(agents - landing, axis=1).mean())
        if score > best_score + 1e-12:
            best, best_score = d, score
    return best


def step_targets(world: TrackingWorld, rng: np.random.Generator) -> None:
    """Advance every target one tick; increments the world tick.

    * random: fresh heading/speed each tick;
    * polyline: fresh heading/speed only at its segment breakpoints, straight
      otherwise;
    * adversarial: while any agent is within 20 units, flees at 15 units/s
      along the best of 16 headings, held for one second of ticks; otherwise
      moves like a random target;
    * brownian: position increment 0.02 * N(0, I).
    """
    dt = world.motion.dt
    for t in world.targets:
        if t.kind == "random":
            t.velocity = _random_walk_velocity(rng)
            t.pos = t.pos + t.velocity * dt
        elif t.kind == "polyline":
            segment = max(1, world.horizon // max(1, t.segment_count))
            if world.tick % segment == 0 or t.velocity is None:
                t.velocity = _random_walk_velocity(rng)
            t.pos = t.pos + t.velocity * dt
        elif t.kind == "adversarial":
            if t.evade_ticks > 0:
                t.pos = t.pos + t.evade_velocity * dt
                t.evade_ticks -= 1
            else:
                nearest = float(np.linalg.norm(world.agents - t.pos, axis=1).min())
                if nearest <= ADVERSARIAL_TRIGGER_RADIUS:
                    t.evade_velocity = EVADE_SPEED * _evade_direction(t.pos, world.agents)
                    t.evade_ticks = max(1, round(1.0 / dt)) - 1
                    t.pos = t.pos + t.evade_velocity * dt
                else:
                    t.velocity = _random_walk_velocity(rng)
                    t.pos = t.pos + t.velocity * dt
        elif t.kind == "brownian":
            t.pos = t.pos + EKF_PROCESS_SCALE * rng.standard_normal(2)
        else:
            raise ConfigError(f"unknown target kind {t.kind!r}")
    world.tick += 1


class FacilityObjective(SetFunction):
    """Inverse-distance proximity coverage of targets by selected positions.

    f(S) = sum_j max_{a in S} 1 / max(||pos_a - target_j||, floor), with the
    empty max equal to zero.  Monotone submodular (a weighted max-coverage).
    """

    def __init__(
        self,
        partition: Partition,
        candidate_positions: np.ndarray,
        target_positions: np.ndarray,
        floor: float = DISTANCE_FLOOR,
    ):
        self.partition = partition
        dists = np.linalg.norm(
            candidate_positions[:, None, :] - target_positions[None, :, :], axis=2
        )
        self.reward = 1.0 / np.maximum(dists, floor)  # (actions, targets)

    def _best(self, actions: frozenset[ActionId]) -> np.ndarray:
        if not actions:
            return np.zeros(self.reward.shape[1])
        rows = [self.partition.flat_index(a) for a in actions]
        return self.reward[rows].max(axis=0)

    def value(self, actions: Iterable[ActionId]) -> float:
        return float(self._best(as_action_set(actions)).sum())

    def agent_marginals(self, agent: int, context: Iterable[ActionId]) -> np.ndarray:
        best = self._best(as_action_set(context))
        lo = self.partition.flat_index(ActionId(agent, 0))
        hi = lo + self.partition.sizes[agent]
        return np.maximum(self.reward[lo:hi] - best, 0.0).sum(axis=1)


class TrackingGainObjective(SetFunction):
    """Information-gain reward for jointly localizing diffusing targets.

    Each selected position contributes a rank-one-plus-prior information term
    (P + z z^T) / sigma^2 about every target, where z points from the target
    to the position.  The reward is the total reduction in posterior
    covariance trace relative to the prior.  Monotone; not submodular in
    general (directions can complement each other), but weakly DR-submodular.
    """

    def __init__(
        self,
        partition: Partition,
        candidate_positions: np.ndarray,
        target_positions: np.ndarray,
        process_scale: float = EKF_PROCESS_SCALE,
        noise_var: float = EKF_NOISE_VAR,
    ):
        self.partition = partition
        p = process_scale**2
        self.prior_info = np.eye(2) / p  # I_j = P^{-1}, identical for all targets
        self.prior_trace = 2.0 * p
        z = candidate_positions[:, None, :] - target_positions[None, :, :]
        outer = z[..., :, None] * z[..., None, :]  # (actions, targets, 2, 2)
        self.info = (p * np.eye(2) + outer) / noise_var

    @staticmethod
    def _inv_trace(m: np.ndarray) -> np.ndarray:
        """Trace of the inverse of a stack of 2x2 SPD matrices."""
        det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
        return (m[..., 0, 0] + m[..., 1, 1]) / det

    def _posterior_info(self, actions: frozenset[ActionId]) -> np.ndarray:
        total = np.broadcast_to(
            self.prior_info, (self.info.shape[1], 2, 2)
        ).copy()
        for a in actions:
            total += self.info[self.partition.flat_index(a)]
        return total

    def value(self, actions: Iterable[ActionId]) -> float:
        actions = as_action_set(actions)
        n_targets = self.info.shape[1]
        gain = n_targets * self.prior_trace - self._inv_trace(
            self._posterior_info(actions)
        ).sum()
        return float(gain)

    def agent_marginals(self, agent: int, context: Iterable[ActionId]) -> np.ndarray:
        ctx = as_action_set(context)
        base = self._posterior_info(ctx)  # (targets, 2, 2)
        base_trace = self._inv_trace(base).sum()
        lo = self.partition.flat_index(ActionId(agent, 0))
        hi = lo + self.partition.sizes[agent]
        stacked = base[None, :, :, :] + self.info[lo:hi]
        gains = base_trace - self._inv_trace(stacked).sum(axis=1)
        for m in range(lo, hi):
            if ActionId(agent, m - lo) in ctx:
                gains[m - lo] = 0.0
        return gains


# ---------------------------------------------------------------------------
# environments (round-by-round drivers around the worlds)
# ---------------------------------------------------------------------------


def _spawn_disk(rng: np.random.Generator, count: int, radius: float = 20.0) -> np.ndarray:
    r = radius * np.sqrt(rng.random(count))
    theta = rng.uniform(0.0, 2.0 * math.pi, count)
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)


def _build_targets(
    mix: dict[str, int], rng: np.random.Generator, horizon: int
) -> list[Target]:
    positions_needed = sum(mix.values())
    spots = _spawn_disk(rng, positions_needed)
    targets = []
    idx = 0
    for kind in ("random", "polyline", "adversarial", "brownian"):
        for _ in range(mix.get(kind, 0)):
            t = Target(kind=kind, pos=spots[idx].copy())
            if kind == "polyline":
                t.segment_count = int(rng.choice([1, 2, 4]))
            targets.append(t)
            idx += 1
    return targets


def _default_mix(n_targets: int, kinds: Sequence[str]) -> dict[str, int]:
    mix = {k: 0 for k in kinds}
    for j in range(n_targets):
        mix[kinds[j % len(kinds)]] += 1
    return mix


class _MovingTargetEnvironment:
    """Shared driver: build world, expose per-round objectives, advance."""

    speeds: Sequence[float]
    target_kinds: Sequence[str]

    def __init__(self, config: dict, seed: int):
        self.horizon = int(config.get("horizon", 300))
        n_agents = int(config.get("agents", 6))
        n_targets = int(config.get("targets", 8))
        if n_agents < 1 or n_targets < 1:
            raise ConfigError("need at least one agent and one target")
        speeds = config.get("speeds", list(self.speeds))
        headings = int(config.get("headings", DEFAULT_HEADINGS))
        motion = MotionGrid(headings, speeds)
        self._rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x656E76)))
        mix = config.get("target_mix") or _default_mix(n_targets, self.target_kinds)
        if sum(mix.values()) != n_targets:
            raise ConfigError("target_mix must sum to the number of targets")
        targets = _build_targets(mix, self._rng, self.horizon)
        agents = _spawn_disk(self._rng, n_agents)
        self.world = TrackingWorld(agents, targets, motion, self.horizon)
        self.partition = self.world.partition()
        self.record_world = bool(config.get("record_world", False))
        self._trace: list[tuple] = []
        if self.record_world:
            self._record()

    def _objective(self) -> SetFunction:
        raise NotImplementedError

    def begin_round(self, t: int) -> SetFunction:
        return self._objective()

    def finish_round(self, t: int, chosen: FeasibleSet) -> None:
        self.world.apply_moves(chosen)
        step_targets(self.world, self._rng)
        if self.record_world:
            self._record()

    def _record(self) -> None:
        k = self.world.tick
        for i, pos in enumerate(self.world.agents):
            self._trace.append((k, f"agent:{i}", float(pos[0]), float(pos[1]), "agent"))
        for j, tgt in enumerate(self.world.targets):
            self._trace.append(
                (k, f"target:{j}", float(tgt.pos[0]), float(tgt.pos[1]), tgt.kind)
            )

    def trajectory_rows(self) -> list[tuple]:
        return list(self._trace)


class FacilityEnvironment(_MovingTargetEnvironment):
    speeds = FACILITY_SPEEDS
    target_kinds = ("random", "polyline", "adversarial")

    def _objective(self) -> SetFunction:
        return FacilityObjective(
            self.partition,
            self.world.candidate_positions(),
            self.world.target_positions(),
        )


class TrackingGainEnvironment(_MovingTargetEnvironment):
    speeds = EKF_SPEEDS
    target_kinds = ("brownian",)

    def _objective(self) -> SetFunction:
        return TrackingGainObjective(
            self.partition,
            self.world.candidate_positions(),
            self.world.target_positions(),
        )


class StaticEnvironment:
    """Wraps a fixed set function as a (trivially stationary) environment."""

    def __init__(self, f: SetFunction, horizon: int):
        self.f = f
        self.partition = f.partition
        self.horizon = int(horizon)

    def begin_round(self, t: int) -> SetFunction:
        return self.f

    def finish_round(self, t: int, chosen: FeasibleSet) -> None:
        pass

    def trajectory_rows(self) -> list[tuple]:
        return []


class OrbitingTargetsEnvironment:
    """Deterministic slowly-drifting instance at oracle scale.

    Candidate positions are 2n fixed sites on a circle (two per agent);
    targets orbit a strictly inner circle at a slow constant angular rate,
    so the best pair of sites drifts smoothly over the horizon while the
    site-target distance stays bounded away from zero.  The reward is the
    same inverse-distance coverage as the facility world.
    """

    def __init__(self, config: dict, seed: int):
        n_agents = int(config.get("agents", 3))
        slots = int(config.get("slots", 2))
        n_targets = int(config.get("targets", 2))
        self.horizon = int(config.get("horizon", 500))
        self.cycles = float(config.get("drift_cycles", 1.0))
        self.radius = float(config.get("radius", 4.0))
        self.target_radius = float(config.get("target_radius", 0.625 * self.radius))
        self.partition = Partition((slots,) * n_agents)
        total = self.partition.total
        angles = 2.0 * math.pi * np.arange(total) / total
        self.sites = self.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x6F726269)))
        self.phases = rng.uniform(0.0, 2.0 * math.pi, n_targets)
        self.tick = 0

    def _target_positions(self) -> np.ndarray:
        angle = self.phases + 2.0 * math.pi * self.cycles * self.tick / self.horizon
        return self.target_radius * np.stack([np.cos(angle), np.sin(angle)], axis=1)

    def begin_round(self, t: int) -> SetFunction:
        return FacilityObjective(self.partition, self.sites, self._target_positions())

    def finish_round(self, t: int, chosen: FeasibleSet) -> None:
        self.tick += 1

    def trajectory_rows(self) -> list[tuple]:
        return []


def make_environment(spec: dict, seed: int):
    """Environment factory keyed on ``spec["kind"]``."""
    kind = spec.get("kind")
    if kind == "facility":
        return FacilityEnvironment(spec, seed)
    if kind == "tracking-gain":
        return TrackingGainEnvironment(spec, seed)
    if kind == "orbiting-targets":
        return OrbitingTargetsEnvironment(spec, seed)
    if kind == "coverage":
        f = coverage_instance(
            int(spec.get("agents", 3)),
            float(spec.get("epsilon", 0.1)),
            int(spec.get("k", 1)),
        )
        return StaticEnvironment(f, int(spec.get("horizon", 500)))
    if kind == "synthetic":
        rng = np.random.default_rng(
            np.random.SeedSequence((int(seed), 0x73796E74))
        )
        f = synthetic_setfn(
            spec.get("objective", "coverage-random"),
            tuple(spec.get("sizes", (2, 2, 2))),
            rng,
        )
        return StaticEnvironment(f, int(spec.get("horizon", 300)))
    raise ConfigError(f"unknown environment kind {kind!r}")
