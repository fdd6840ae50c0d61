"""Policy extension: exact enumeration, quadrature, and Monte-Carlo estimators.

Every exact routine is checked against an independent second route (finite
differences, dense z-grids, closed forms, or sampling) rather than against
itself.
"""

import math

import numpy as np
import pytest

from macoord.envs import ModularFunction, synthetic_setfn
from macoord.errors import ScaleError
from macoord.extension import (
    PolicyProfile,
    SurrogateScheme,
    estimate_gradient,
    estimate_surrogate_gradient,
    exact_extension,
    exact_gradient,
    exact_gradient_block,
    exact_partial,
    exact_surrogate_gradient,
    exact_surrogate_gradient_block,
    exact_surrogate_value,
    sample_actions,
    sample_context,
    sample_distribution_slot,
    sample_z,
)
from macoord.geometry import indicator_profile
from macoord.ground import ActionId, FeasibleSet, MarginalBudget, Partition, min_gain_vector


def random_profile(sizes, rng, lo=0.05, hi=0.95):
    blocks = []
    for k in sizes:
        b = rng.uniform(lo, hi, k)
        b = b / b.sum() * rng.uniform(0.3, 0.95)
        blocks.append(b)
    return PolicyProfile(tuple(blocks))


# ---------------------------------------------------------------------------
# profiles and schemes
# ---------------------------------------------------------------------------


def test_profile_construction_and_immutability():
    p = Partition((2, 3))
    prof = PolicyProfile.uniform(p)
    assert prof.sizes == (2, 3)
    assert prof.n_agents == 2
    np.testing.assert_allclose(prof.blocks[1], np.full(3, 1 / 3))
    with pytest.raises(ValueError):
        prof.blocks[0][0] = 0.9  # blocks are read-only
    assert PolicyProfile.zeros(p).flat().tolist() == [0.0] * 5


def test_profile_validate():
    PolicyProfile((np.array([0.5, 0.5]),)).validate()
    with pytest.raises(ValueError):
        PolicyProfile((np.array([-0.1, 0.5]),)).validate()
    with pytest.raises(ValueError):
        PolicyProfile((np.array([0.7, 0.7]),)).validate()
    with pytest.raises(ValueError):
        PolicyProfile((np.array([np.inf, 0.0]),)).validate()


def test_profile_scaled_and_with_block():
    prof = PolicyProfile((np.array([0.2, 0.6]), np.array([1.0])))
    half = prof.scaled(0.5)
    np.testing.assert_allclose(half.blocks[0], [0.1, 0.3])
    with pytest.raises(ValueError):
        prof.scaled(1.5)
    swapped = prof.with_block(1, np.array([0.25]))
    assert swapped.blocks[1][0] == 0.25
    assert prof.blocks[1][0] == 1.0  # original untouched


def test_scheme_rates_and_validation():
    assert SurrogateScheme.submodular().rate == 1.0
    assert SurrogateScheme.weak_dr(0.3).rate == 0.3
    ws = SurrogateScheme.weak_sub(gamma=0.8, beta=1.5)
    assert ws.rate == pytest.approx(1.5 * 0.2 + 0.64, abs=1e-15)
    assert SurrogateScheme.submodular().adds_min_gain
    assert not SurrogateScheme.weak_dr(1.0).adds_min_gain
    for bad in (0.0, -0.2, 1.2, None):
        with pytest.raises(ValueError):
            SurrogateScheme.weak_dr(bad)
    with pytest.raises(ValueError):
        SurrogateScheme.weak_sub(gamma=0.5, beta=0.9)
    with pytest.raises(ValueError):
        SurrogateScheme("bogus")


def test_weight_integral_matches_dense_sum():
    for scheme in (
        SurrogateScheme.submodular(),
        SurrogateScheme.weak_dr(0.37),
        SurrogateScheme.weak_sub(gamma=0.6, beta=2.0),
    ):
        z = np.linspace(0.0, 1.0, 100_001)
        w = np.exp(scheme.rate * (z - 1.0))
        riemann = np.trapezoid(w, z)
        assert scheme.weight_integral == pytest.approx(riemann, rel=1e-9)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def test_sample_actions_on_indicator_is_deterministic():
    p = Partition((2, 3, 2))
    sel = FeasibleSet((1, None, 0))
    prof = indicator_profile(sel, p)
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert sample_actions(prof, rng) == sel


def test_sample_actions_frequencies():
    prof = PolicyProfile((np.array([0.3, 0.5]),))  # leftover 0.2 idles
    rng = np.random.default_rng(42)
    n = 20_000
    counts = {0: 0, 1: 0, None: 0}
    for _ in range(n):
        counts[sample_actions(prof, rng).choice[0]] += 1
    for key, p_true in ((0, 0.3), (1, 0.5), (None, 0.2)):
        band = 4.0 * math.sqrt(p_true * (1 - p_true) / n)
        assert abs(counts[key] / n - p_true) < band


def test_sample_distribution_slot_hits_last_slot_on_tail():
    w = np.array([0.5, 0.5])
    assert sample_distribution_slot(w, 0.999999999999999) == 1
    assert sample_distribution_slot(w, 0.2) == 0


def test_sample_context_excludes_own_agent():
    rng = np.random.default_rng(3)
    prof = PolicyProfile.uniform(Partition((2, 2, 2)))
    for _ in range(50):
        ctx = sample_context(prof, 1, rng)
        assert all(a.agent != 1 for a in ctx)


def test_sample_z_cdf():
    scheme = SurrogateScheme.weak_dr(0.7)
    rng = np.random.default_rng(5)
    n = 20_000
    draws = np.sort([sample_z(scheme, rng) for _ in range(n)])
    c = scheme.rate
    cdf = (np.exp(c * draws) - 1.0) / (math.exp(c) - 1.0)
    empirical = np.arange(1, n + 1) / n
    assert np.max(np.abs(cdf - empirical)) < 2.0 / math.sqrt(n)


# ---------------------------------------------------------------------------
# exact extension and gradients
# ---------------------------------------------------------------------------


def test_extension_at_indicator_equals_set_value():
    rng = np.random.default_rng(9)
    f = synthetic_setfn("coverage-random", (2, 2, 2), rng)
    for sel in (FeasibleSet((0, 1, None)), FeasibleSet((None, None, None))):
        prof = indicator_profile(sel, f.partition)
        assert exact_extension(f, prof) == pytest.approx(
            f.value(sel.actions()), abs=1e-12
        )


def test_extension_of_modular_is_linear():
    p = Partition((2, 2))
    w = np.array([0.5, 1.25, 0.75, 2.0])
    f = ModularFunction(p, w)
    rng = np.random.default_rng(17)
    prof = random_profile(p.sizes, rng)
    assert exact_extension(f, prof) == pytest.approx(
        float(np.dot(w, prof.flat())), abs=1e-12
    )


def test_multilinearity_in_each_coordinate():
    rng = np.random.default_rng(21)
    f = synthetic_setfn("coverage-random", (2, 2), rng)
    base = random_profile(f.partition.sizes, rng, hi=0.4)
    a = ActionId(0, 1)
    vals = []
    for s in (0.0, 0.1, 0.2):
        block = base.blocks[0].copy()
        block[a.slot] += s
        vals.append(exact_extension(f, base.with_block(0, block)))
    # linear in one coordinate: equal successive differences
    assert (vals[1] - vals[0]) == pytest.approx(vals[2] - vals[1], abs=1e-12)


def test_exact_gradient_matches_finite_differences():
    rng = np.random.default_rng(33)
    f = synthetic_setfn("coverage-random", (2, 1, 2), rng)
    h = 1e-5
    for _ in range(10):
        prof = random_profile(f.partition.sizes, rng, lo=0.1, hi=0.5)
        grad = exact_gradient(f, prof)
        for a in f.partition.all_actions():
            up = prof.blocks[a.agent].copy()
            up[a.slot] += h
            dn = prof.blocks[a.agent].copy()
            dn[a.slot] -= h
            fd = (
                exact_extension(f, prof.with_block(a.agent, up))
                - exact_extension(f, prof.with_block(a.agent, dn))
            ) / (2 * h)
            assert grad[a.agent][a.slot] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_exact_partial_consistency():
    rng = np.random.default_rng(4)
    f = synthetic_setfn("coverage-random", (2, 2), rng)
    prof = random_profile(f.partition.sizes, rng)
    a = ActionId(1, 0)
    assert exact_partial(f, prof, a) == exact_gradient_block(f, prof, 1)[0]


def test_gradient_of_monotone_objective_is_nonnegative():
    rng = np.random.default_rng(8)
    for kind in ("modular", "coverage-random", "concave-of-modular"):
        f = synthetic_setfn(kind, (2, 2), rng)
        prof = random_profile(f.partition.sizes, rng)
        for block in exact_gradient(f, prof):
            assert block.min() >= -1e-12


def test_enumeration_guard():
    p = Partition((9,) * 7)  # 10^7 joint outcomes
    f = ModularFunction(p, np.ones(p.total))
    with pytest.raises(ScaleError):
        exact_extension(f, PolicyProfile.uniform(p))


# ---------------------------------------------------------------------------
# surrogate gradients (quadrature vs dense z-grid, potential vs FD)
# ---------------------------------------------------------------------------


def dense_surrogate_gradient(f, prof, scheme, agent, steps=2000):
    """Trapezoid z-integration oracle, independent of the quadrature path."""
    zs = np.linspace(0.0, 1.0, steps + 1)
    vals = np.stack(
        [
            scheme.weight(float(z)) * exact_gradient_block(f, prof.scaled(float(z)), agent)
            for z in zs
        ]
    )
    out = np.trapezoid(vals, zs, axis=0)
    if scheme.adds_min_gain:
        out = out + math.exp(-1.0) * min_gain_vector(f, agent)
    return out


@pytest.mark.parametrize(
    "scheme",
    [
        SurrogateScheme.submodular(),
        SurrogateScheme.weak_dr(0.4),
        SurrogateScheme.weak_sub(gamma=0.7, beta=1.3),
    ],
    ids=["submodular", "weak-dr", "weak-sub"],
)
def test_surrogate_gradient_quadrature_vs_dense_grid(scheme):
    rng = np.random.default_rng(13)
    f = synthetic_setfn("coverage-random", (2, 2), rng)
    prof = random_profile(f.partition.sizes, rng)
    for agent in range(2):
        quad = exact_surrogate_gradient_block(f, prof, scheme, agent)
        dense = dense_surrogate_gradient(f, prof, scheme, agent)
        np.testing.assert_allclose(quad, dense, rtol=1e-7, atol=1e-9)


def test_surrogate_value_gradient_consistency():
    # the reweighted gradient must be the gradient of the surrogate potential
    rng = np.random.default_rng(29)
    f = synthetic_setfn("coverage-random", (2, 2), rng)
    scheme = SurrogateScheme.submodular()
    prof = random_profile(f.partition.sizes, rng, lo=0.1, hi=0.4)
    grad = exact_surrogate_gradient(f, prof, scheme)
    h = 1e-5
    for a in f.partition.all_actions():
        up = prof.blocks[a.agent].copy()
        up[a.slot] += h
        dn = prof.blocks[a.agent].copy()
        dn[a.slot] -= h
        fd = (
            exact_surrogate_value(f, prof.with_block(a.agent, up), scheme)
            - exact_surrogate_value(f, prof.with_block(a.agent, dn), scheme)
        ) / (2 * h)
        assert grad[a.agent][a.slot] == pytest.approx(fd, rel=1e-5, abs=1e-8)


# ---------------------------------------------------------------------------
# Monte-Carlo estimators
# ---------------------------------------------------------------------------


def test_estimate_gradient_is_unbiased():
    rng = np.random.default_rng(55)
    f = synthetic_setfn("coverage-random", (2, 2, 2), rng)
    prof = random_profile(f.partition.sizes, rng)
    agent = 1
    exact = exact_gradient_block(f, prof, agent)
    n = 4000
    draws = np.stack(
        [estimate_gradient(f, prof, agent, rng).values for _ in range(n)]
    )
    mean = draws.mean(axis=0)
    sem = draws.std(axis=0, ddof=1) / math.sqrt(n)
    assert np.all(np.abs(mean - exact) <= 5.0 * sem + 1e-12)


def test_estimate_surrogate_gradient_is_unbiased():
    rng = np.random.default_rng(77)
    f = synthetic_setfn("coverage-random", (2, 2), rng)
    scheme = SurrogateScheme.submodular()
    prof = random_profile(f.partition.sizes, rng)
    agent = 0
    exact = exact_surrogate_gradient_block(f, prof, scheme, agent)
    n = 6000
    draws = np.stack(
        [
            estimate_surrogate_gradient(f, prof, agent, scheme, rng).values
            for _ in range(n)
        ]
    )
    mean = draws.mean(axis=0)
    sem = draws.std(axis=0, ddof=1) / math.sqrt(n)
    assert np.all(np.abs(mean - exact) <= 5.0 * sem + 1e-12)


def test_estimate_surrogate_gradient_uses_cached_min_gain():
    rng = np.random.default_rng(2)
    f = synthetic_setfn("coverage-random", (2, 2), rng)
    scheme = SurrogateScheme.submodular()
    prof = random_profile(f.partition.sizes, rng)
    cached = min_gain_vector(f, 0)
    budget = MarginalBudget(2)
    est = estimate_surrogate_gradient(f, prof, 0, scheme, rng, budget, cached)
    # only the context gains are charged when the bonus is supplied
    assert budget.per_agent()[0] == 2
    assert est.scale is not None and 0.0 <= est.scale <= 1.0


def test_lossless_rounding_small():
    rng = np.random.default_rng(101)
    f = synthetic_setfn("coverage-random", (2, 2), rng)
    prof = random_profile(f.partition.sizes, rng)
    exact = exact_extension(f, prof)
    n = 20_000
    vals = np.array(
        [f.value(sample_actions(prof, rng).actions()) for _ in range(n)]
    )
    sem = vals.std(ddof=1) / math.sqrt(n)
    assert abs(vals.mean() - exact) <= 4.0 * sem
