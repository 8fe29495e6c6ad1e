import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heraldopt.circuit import CircuitParams, ancilla_marginals, build_state
from heraldopt.objective import PatternScore
from heraldopt.search import (
    BasinConfig, CircuitSpec, OptConfig, OptResult, basin_hop, circular_distance, classify_rotation,
    fixed_objective, load_checkpoint, local_minimize, run_fixed, score_beam, top_b_patterns,
)
from heraldopt.targets import cat_state, fock_target


# ---------------------------------------------------------------- top-B


def test_top_b_orders_and_filters():
    marg = np.array([[0.1, 0.0], [0.4, 0.1]])
    assert top_b_patterns(marg, 10) == [(1, 0), (0, 0), (1, 1)]
    assert top_b_patterns(marg, 2) == [(1, 0), (0, 0)]
    with pytest.raises(ValueError):
        top_b_patterns(marg, 0)


def test_top_b_vacuum_and_squeezed_ancilla():
    assert top_b_patterns(ancilla_marginals(build_state(CircuitParams(3), 8)), 3) == [(0, 0)]
    marg = ancilla_marginals(build_state(CircuitParams(2, r=[1.0, 0.0]), 30))
    assert top_b_patterns(marg, 2) == [(0,), (2,)]
    assert marg[0] == pytest.approx(1 / math.cosh(1), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), B=st.integers(1, 40))
def test_top_b_is_sorted_with_lexicographic_ties(seed, B):
    rng = np.random.default_rng(seed)
    marg = rng.integers(0, 4, size=(5, 5)) / 10.0  # many exact ties
    out = top_b_patterns(marg, B)
    keys = [(-marg[p], p) for p in out]
    assert keys == sorted(keys)
    assert len(out) == min(B, int(np.count_nonzero(marg)))


# ---------------------------------------------------------------- local search


def test_local_bowl_interior_and_outside():
    c = np.array([0.3, -0.7, 1.1])
    lo, hi = -2 * np.ones(3), 2 * np.ones(3)
    res = local_minimize(lambda x: float(np.sum((x - c) ** 2)), np.zeros(3), lo, hi)
    assert np.max(np.abs(res.x - c)) < 1e-6
    # c outside: nearest face
    c2 = np.array([3.0, 0.5, -5.0])
    res = local_minimize(lambda x: float(np.sum((x - c2) ** 2)), np.zeros(3), lo, hi)
    assert np.max(np.abs(res.x - np.array([2.0, 0.5, -2.0]))) < 1e-4


def test_local_rosenbrock():
    def rosen(x):
        return float(100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2)

    res = local_minimize(rosen, np.array([-1.2, 1.0]), -2 * np.ones(2), 2 * np.ones(2), maxiter=2000, tol=1e-14)
    assert np.max(np.abs(res.x - 1)) < 1e-4
    assert res.fun <= rosen(np.array([-1.2, 1.0]))


def test_local_fixed_coordinates_and_nonfinite():
    lo, hi = np.array([0.0, 1.0]), np.array([1.0, 1.0])
    res = local_minimize(lambda x: (x[0] - 0.25) ** 2 + x[1], np.array([0.9, 1.0]), lo, hi)
    assert res.x[1] == 1.0 and abs(res.x[0] - 0.25) < 1e-6

    def bad(x):
        return math.nan if x[0] < 0.5 else (x[0] - 0.2) ** 2

    res = local_minimize(bad, np.array([0.9, 1.0]), lo, hi)
    assert not res.success
    assert math.isfinite(res.fun) and res.fun <= bad(np.array([0.9, 1.0]))
    with pytest.raises(ValueError):
        local_minimize(bad, np.array([2.0, 1.0]), lo, hi)


# ---------------------------------------------------------------- basin hopping


def test_double_well():
    cfg = BasinConfig(hops=10, step=0.8, restarts=1, seed=3)
    res = basin_hop(lambda x: float((x[0] ** 2 - 1) ** 2), [-2.0], [2.0], cfg, x0=[0.9])
    assert res.fun < 1e-10
    assert abs(abs(res.x[0]) - 1) < 1e-5


def test_greedy_chain_is_monotone_and_trace_nonincreasing():
    def f(x):
        return float(np.sum(x**2) + np.sum(np.sin(5 * x)))

    cfg = BasinConfig(hops=15, step=1.0, temperature=0.0, restarts=3, seed=1, local_maxiter=50)
    res = basin_hop(f, -3 * np.ones(2), 3 * np.ones(2), cfg)
    for chain in res.accepted:
        assert all(b <= a for a, b in zip(chain, chain[1:]))
    assert all(b <= a for a, b in zip(res.trace, res.trace[1:]))


@pytest.mark.parametrize("seed", range(20))
def test_multistart_dominates_every_restart(seed):
    rng = np.random.default_rng(seed)
    c, w = rng.uniform(-1, 1, 6), rng.uniform(2, 6, 6)

    def f(x):
        return float(0.2 * np.sum((x - c) ** 2) + np.sum(np.sin(w * x)))

    cfg = BasinConfig(hops=2, step=0.5, restarts=3, seed=seed, local_maxiter=40)
    res = basin_hop(f, -2 * np.ones(6), 2 * np.ones(6), cfg)
    assert len(res.restart_best) == 3
    assert res.fun <= min(res.restart_best)
    assert res.fun == pytest.approx(f(res.x), abs=0)


def test_basin_hop_is_deterministic():
    def f(x):
        return float(np.sum(np.cos(3 * x)) + 0.1 * np.sum(x**2))

    cfg = BasinConfig(hops=4, restarts=2, seed=42, local_maxiter=30)
    a = basin_hop(f, -2 * np.ones(3), 2 * np.ones(3), cfg)
    b = basin_hop(f, -2 * np.ones(3), 2 * np.ones(3), cfg)
    assert np.array_equal(a.x, b.x) and a.fun == b.fun and a.trace == b.trace


class _Stop(Exception):
    pass


def test_checkpoint_resume_matches_uninterrupted(tmp_path):
    def f(x):
        return float(np.sum(np.cos(3 * x)) + 0.1 * np.sum(x**2))

    cfg = BasinConfig(hops=3, restarts=3, seed=9, local_maxiter=30)
    lo, hi = -2 * np.ones(2), 2 * np.ones(2)
    full = basin_hop(f, lo, hi, cfg)

    ck = tmp_path / "ck.json"
    calls = {"n": 0}
    budget = full.nfev // 2

    def interrupted(x):
        calls["n"] += 1
        if calls["n"] > budget:
            raise _Stop
        return f(x)

    with pytest.raises(_Stop):
        basin_hop(interrupted, lo, hi, cfg, checkpoint=ck)
    saved = load_checkpoint(ck)
    assert 0 < saved["next_restart"] < 3
    resumed = basin_hop(f, lo, hi, cfg, checkpoint=ck)
    assert np.array_equal(resumed.x, full.x)
    assert resumed.trace == full.trace and resumed.nfev == full.nfev

    # a checkpoint written under other settings or for another objective is ignored
    other = BasinConfig(hops=3, restarts=3, seed=10, local_maxiter=30)
    fresh = basin_hop(f, lo, hi, other, checkpoint=ck)
    assert fresh.restart_best == basin_hop(f, lo, hi, other).restart_best
    g = lambda x: f(x) + 1.0  # noqa: E731
    tagged = basin_hop(g, lo, hi, other, checkpoint=ck, tag="g")
    assert tagged.restart_best == pytest.approx([v + 1.0 for v in fresh.restart_best], abs=1e-9)


def test_basin_config_validation():
    with pytest.raises(ValueError):
        BasinConfig(restarts=0)
    with pytest.raises(ValueError):
        BasinConfig(temperature=-1)


# ---------------------------------------------------------------- runs


def _small_run(seed=0):
    spec = CircuitSpec(2, cutoff=12)
    cfg = OptConfig(basin=BasinConfig(hops=1, restarts=2, seed=seed, local_maxiter=15))
    return run_fixed(spec, [((1,), fock_target(1, 12))], cfg)


def test_bounds_layout():
    lo, hi = CircuitSpec(3).bounds()
    assert lo.size == hi.size == CircuitParams.vector_size(3)
    assert hi[0] == pytest.approx(1.38155, abs=1e-5)
    assert np.all(lo[6:12] == 0) and np.all(hi[6:12] == 0)
    lo, hi = CircuitSpec(2, displaced=True, alpha_max=2.0, free_out_phase=True).bounds()
    assert lo[4] == -2 and hi[4] == 2 and hi[-1] == pytest.approx(2 * math.pi)


def test_run_fixed_determinism_and_scores():
    a, b = _small_run(), _small_run()
    assert np.array_equal(a.x, b.x) and a.loss == b.loss
    assert [s.fidelity for s in a.scores] == [s.fidelity for s in b.scores]
    assert a.p_agg == a.scores[0].probability
    assert a.scores[0].fidelity > 0.9


def test_run_fixed_without_hops_scores_start():
    x0 = CircuitParams(2, r=[0.5, 0.5], mesh_theta=[0.3]).to_vector()
    spec = CircuitSpec(2, cutoff=12)
    cfg = OptConfig(basin=BasinConfig(hops=0, restarts=1))
    assign = [((1,), fock_target(1, 12))]
    res = run_fixed(spec, assign, cfg, x0=x0)
    assert np.array_equal(res.x, x0)
    assert res.loss == pytest.approx(fixed_objective(spec, assign)(x0), abs=0)


def test_finite_difference_gradient_matches_richardson():
    rng = np.random.default_rng(11)
    spec = CircuitSpec(2, cutoff=20)
    f = fixed_objective(spec, [((2,), cat_state(1.2, 0.2, "even", 20))])
    lo, hi = spec.bounds()
    free = hi > lo
    x = lo + (hi - lo) * rng.uniform(0.2, 0.8, lo.size)
    for i in np.flatnonzero(free):
        e = np.zeros_like(x)

        def d(h):
            e[i] = h
            return (f(x + e) - f(x - e)) / (2 * h)

        g = d(1e-6)
        rich = (4 * d(5e-4) - d(1e-3)) / 3
        assert abs(g - rich) <= 1e-3 * max(abs(rich), 1e-3)


def test_beam_assigns_cat_by_parity():
    D = 30
    targets = [cat_state(math.sqrt(6), 0.5, "even", D, max_leakage=1e-3), cat_state(math.sqrt(6), 0.5, "odd", D, max_leakage=1e-3)]
    rng = np.random.default_rng(4)
    for _ in range(5):
        p = CircuitParams(
            2, r=rng.uniform(0.2, 1.2, 2), phi=rng.uniform(0, 6, 2), mesh_theta=rng.uniform(0, 6, 1),
            mesh_phi=rng.uniform(0, 6, 1),
        )
        state = build_state(p, D)
        scores = score_beam(state, targets, 12)
        assert [s.pattern for s in scores] == top_b_patterns(ancilla_marginals(state), 12)
        for s in scores:
            if s.fidelity > 1e-12:
                assert s.target == targets[s.pattern[0] % 2].label
    # B = 1 keeps only the most probable pattern
    assert len(score_beam(state, targets, 1)) == 1


# ---------------------------------------------------------------- rotation classes


def _result(phis, targets=None, periods=None):
    targets = targets or ["t"] * len(phis)
    scores = [PatternScore((i,), 0.1, 0.99, phi, t) for i, (phi, t) in enumerate(zip(phis, targets))]
    return OptResult(np.zeros(6), 2, 10, scores, 0.0, 0.0, [], 0, periods=periods or {})


def test_classify_rotation():
    step = 2 * math.pi / 256
    assert classify_rotation(_result([1.0, 1.0, 1.0])) == "invariant"
    assert classify_rotation(_result([0.0, 2 * math.pi - step])) == "invariant"
    assert classify_rotation(_result([1.0, 1.0 + 5 * step])) == "variant"
    # even-support targets are pi-periodic
    assert classify_rotation(_result([0.2, 0.2 + math.pi], periods={"t": math.pi})) == "invariant"
    # only groups with two or more patterns are compared
    assert classify_rotation(_result([0.2, 0.2, 3.0], targets=["a", "a", "b"])) == "invariant"
    with pytest.raises(ValueError):
        classify_rotation(_result([0.2, 1.0], targets=["a", "b"]))


def test_circular_distance():
    assert circular_distance(0.1, 2 * math.pi - 0.1) == pytest.approx(0.2)
    assert circular_distance(0.0, math.pi, math.pi) == pytest.approx(0.0)
