import io
import json

import numpy as np
import pytest

from conftest import (
    RetailerValueOracle,
    SupplierValueOracle,
    random_bilateral,
    solve_joint_lp,
)
from coplan.consensus import (
    ConsensusConfig,
    ConsensusState,
    LocalEndpoint,
    RetailerAgent,
    SupplierAgent,
    best_response,
    coordinator_step,
    run_consensus,
)
from coplan.errors import DimensionError, NonConvergenceError
from coplan.transport import retailer_utility, supplier_utility


@pytest.fixture(scope="module")
def retailer_oracle(toy_retailer):
    oracle = RetailerValueOracle(toy_retailer)
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 120, size=(50, 2))
    direct = np.array([retailer_utility(toy_retailer, p).value for p in pts])
    assert np.allclose(oracle(pts), direct, atol=1e-6), "oracle construction is broken"
    return oracle


@pytest.fixture(scope="module")
def supplier_oracle(toy_supplier):
    oracle = SupplierValueOracle(toy_supplier)
    rng = np.random.default_rng(1)
    pts = rng.uniform(0, 55, size=(50, 2))
    direct = np.array([supplier_utility(toy_supplier, p).value for p in pts])
    assert np.allclose(oracle(pts), direct, atol=1e-6), "oracle construction is broken"
    return oracle


def test_best_response_prox_dominated(toy_retailer):
    agent = RetailerAgent(toy_retailer)
    rho = 1e6
    # proposals inside the agent's plan set: the penalty pins the answer there
    for z in ([30.0, 70.0], [41.0, 59.0], [10.0, 20.0]):
        z = np.asarray(z)
        br = best_response(agent, np.zeros(2), z, rho)
        g = retailer_utility(toy_retailer, z).supergradient
        # the exact maximizer sits within ||g||/rho of the proposal
        assert np.linalg.norm(br.plan - z) <= 1e-6 + np.linalg.norm(g) / rho


def test_best_response_retailer_matches_grid(toy_retailer, retailer_oracle):
    agent = RetailerAgent(toy_retailer)
    z = np.array([40.0, 60.0])
    br = best_response(agent, np.zeros(2), z, rho=1.0)
    axis = np.arange(0.0, 120.0 + 0.25, 0.25)
    gx, gy = np.meshgrid(axis, axis)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    pts = pts[pts.sum(axis=1) <= agent.total_cap + 1e-9]
    scores = retailer_oracle(pts) - 0.5 * np.sum((pts - z) ** 2, axis=1)
    grid_best = pts[np.argmax(scores)]
    assert np.all(np.abs(br.plan - grid_best) <= 0.25 + 1e-9)
    assert br.objective >= scores.max() - 1e-9


def test_best_response_supplier_dominates_grid(toy_supplier, supplier_oracle):
    agent = SupplierAgent(toy_supplier)
    rng = np.random.default_rng(23)
    axis = np.arange(0.0, 110.0 + 0.5, 0.5)
    gx, gy = np.meshgrid(axis, axis)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    pts = pts[pts.sum(axis=1) <= agent.total_cap + 1e-9]
    for _ in range(5):
        prices = rng.uniform(-10, 10, size=2)
        z = rng.uniform(0, 80, size=2)
        br = best_response(agent, prices, z, rho=1.0)
        scores = supplier_oracle(pts) - pts @ prices - 0.5 * np.sum((pts - z) ** 2, axis=1)
        assert br.objective >= scores.max() - 1e-9


def test_best_response_rejects_bad_inputs(toy_retailer):
    agent = RetailerAgent(toy_retailer)
    with pytest.raises(DimensionError):
        best_response(agent, np.zeros(3), np.zeros(2), 1.0)
    with pytest.raises(NonConvergenceError):
        best_response(agent, np.zeros(2), np.array([5.0, 5.0]), 1.0, max_evals=1)


def _state(prices, z, responses, rho=1.0):
    prices = np.asarray(prices, dtype=float)
    return ConsensusState(iteration=0, z=np.asarray(z, dtype=float), prices=prices,
                          responses=np.asarray(responses, dtype=float),
                          r_primal=np.inf, r_dual=np.inf, rho=rho)


def test_coordinator_step_fixed_point():
    z = np.array([3.0, 4.0])
    state = _state(np.zeros((2, 2)), z, np.tile(z, (2, 1)))
    nxt = coordinator_step(state, np.tile(z, (2, 1)))
    assert np.array_equal(nxt.z, z)
    assert nxt.r_primal == 0.0
    assert np.all(nxt.prices == 0)


def test_coordinator_step_two_agent_arithmetic():
    state = _state(np.zeros((2, 2)), np.zeros(2), np.zeros((2, 2)))
    nxt = coordinator_step(state, [np.array([0.0, 0.0]), np.array([2.0, 2.0])])
    assert np.allclose(nxt.z, [1.0, 1.0])
    assert np.allclose(nxt.prices[0], [-1.0, -1.0])
    assert np.allclose(nxt.prices[1], [1.0, 1.0])
    assert nxt.r_primal == pytest.approx(np.sqrt(2.0))


def test_price_sum_is_exactly_zero_over_random_steps():
    rng = np.random.default_rng(31)
    for _ in range(1000):
        M = int(rng.integers(1, 7))
        dim = int(rng.integers(1, 5))
        prices = rng.normal(scale=10, size=(M, dim))
        prices[-1] = -prices[:-1].sum(axis=0)
        state = _state(prices, rng.normal(size=dim), rng.normal(size=(M, dim)),
                       rho=float(rng.choice([0.5, 1.0, 3.0])))
        nxt = coordinator_step(state, rng.normal(size=(M, dim)))
        assert np.all(nxt.prices.sum(axis=0) == 0.0)


def test_coordinator_step_dimension_error():
    state = _state(np.zeros((2, 2)), np.zeros(2), np.zeros((2, 2)))
    with pytest.raises(DimensionError):
        coordinator_step(state, np.zeros((3, 2)))


TOY_CONFIG = ConsensusConfig(eps_abs=1e-6, eps_rel=1e-6)


def test_toy_consensus_reaches_first_best(toy_retailer, toy_supplier):
    cfg = ConsensusConfig(eps_abs=1e-6, eps_rel=1e-6, initial_plan=np.array([40.0, 60.0]))
    res = run_consensus([RetailerAgent(toy_retailer), SupplierAgent(toy_supplier)], cfg)
    assert res.converged
    assert np.all(np.abs(res.plan - [10.0, 90.0]) <= 0.05)
    assert res.joint_utility == pytest.approx(3290.0, abs=0.5)


def test_toy_consensus_plan_beats_nearby_lattice(toy_retailer, toy_supplier):
    cfg = ConsensusConfig(eps_abs=1e-6, eps_rel=1e-6, initial_plan=np.array([40.0, 60.0]))
    res = run_consensus([RetailerAgent(toy_retailer), SupplierAgent(toy_supplier)], cfg)
    ra, sa = RetailerAgent(toy_retailer), SupplierAgent(toy_supplier)
    plan = sa.project(ra.project(res.plan))
    joint_star = retailer_utility(toy_retailer, plan).value + supplier_utility(toy_supplier, plan).value
    for dx in range(-5, 6):
        for dy in range(-5, 6):
            cand = plan + [dx, dy]
            if np.any(cand < 0) or cand.sum() > min(sa.total_cap, ra.total_cap):
                continue
            joint = retailer_utility(toy_retailer, cand).value + supplier_utility(toy_supplier, cand).value
            assert joint_star >= joint - 0.5


def test_single_agent_consensus_is_standalone_argmax(toy_retailer):
    cfg = ConsensusConfig(eps_abs=1e-6, eps_rel=1e-6, initial_plan=np.array([40.0, 60.0]))
    res = run_consensus([RetailerAgent(toy_retailer)], cfg)
    assert res.converged
    assert np.all(np.abs(res.plan - [40.0, 60.0]) <= 1e-3)
    assert res.utilities[0] == pytest.approx(1780.0, abs=1e-6)


def test_random_bilateral_matches_centralized_lp():
    rng = np.random.default_rng(42)
    for _ in range(8):
        retailer, supplier = random_bilateral(rng)
        _, joint_lp = solve_joint_lp(retailer, supplier)
        ra, sa = RetailerAgent(retailer), SupplierAgent(supplier)
        cfg = ConsensusConfig(eps_abs=1e-6, eps_rel=1e-6, adapt_rho=True,
                              initial_plan=np.zeros(retailer.n_inbound))
        res = run_consensus([ra, sa], cfg)
        plan = sa.project(ra.project(res.plan))
        joint = retailer_utility(retailer, plan).value + supplier_utility(supplier, plan).value
        assert abs(joint - joint_lp) <= 1e-3 * max(1.0, abs(joint_lp))


def test_residual_trend_is_nonincreasing(toy_retailer, toy_supplier):
    cfg = ConsensusConfig(eps_abs=1e-7, eps_rel=1e-7, initial_plan=np.zeros(2))
    res = run_consensus([RetailerAgent(toy_retailer), SupplierAgent(toy_supplier)], cfg)
    assert res.converged
    r_p = res.residual_history[:, 0]
    samples = r_p[49::25]
    assert len(samples) >= 3  # long enough for the trend to be meaningful
    for earlier, later in zip(samples, samples[1:]):
        assert later <= 1.05 * earlier


def test_trace_records_are_line_delimited(toy_retailer, toy_supplier):
    buf = io.StringIO()
    cfg = ConsensusConfig(eps_abs=1e-4, eps_rel=1e-4, initial_plan=np.array([40.0, 60.0]))
    res = run_consensus([RetailerAgent(toy_retailer), SupplierAgent(toy_supplier)], cfg,
                        trace=buf)
    lines = buf.getvalue().strip().splitlines()
    assert len(lines) == res.iterations
    first = json.loads(lines[0])
    assert set(first) == {"iteration", "z", "r_primal", "r_dual"}


def test_endpoint_parity_with_direct_best_response(toy_supplier):
    # a wrapped endpoint replays the exact same plans as direct solver calls
    agent = SupplierAgent(toy_supplier)
    ep = LocalEndpoint(agent)
    rng = np.random.default_rng(3)
    last = None
    for it in range(1, 6):
        prices = rng.uniform(-5, 5, size=2)
        z = rng.uniform(0, 80, size=2)
        got = ep.respond(prices, z, 1.0, it)
        want = best_response(agent, prices, z, 1.0, start=last).plan
        last = want
        assert np.array_equal(got, want)
