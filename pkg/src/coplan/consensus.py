"""Iterative consensus planning: proximal agent best responses coordinated by
consensus ADMM.

Agents are black boxes that score a shared plan vector and return a
supergradient; the coordinator never sees their private data.  Each round the
coordinator sends agent m its price vector and the current consensus proposal,
the agent answers with the maximizer of

    u_m(x) - prices @ x - (rho/2) ||x - z||^2

over its feasible plan set, and the coordinator averages the answers into a
new proposal and adjusts prices by the disagreement.  For concave utilities
the iteration converges to a maximizer of the summed utilities.
"""

import json
from dataclasses import dataclass, replace

import numpy as np

from ._qp import MasterError, maximize_cut_model, project_capped
from .errors import DimensionError, NonConvergenceError, ParameterError
from .transport import retailer_utility, supplier_utility


class PlanAgent:
    """Black-box utility evaluator over plans on the nonnegative orthant,
    optionally capped in total volume.

    Subclasses implement :meth:`evaluate` returning ``(value, supergradient)``
    at a feasible plan.  ``total_cap`` bounds ``sum(plan)`` (None = unbounded);
    it doubles as the feasible set used by projection and best responses.
    """

    dim = 0
    total_cap = None

    def evaluate(self, plan):
        raise NotImplementedError

    def project(self, plan):
        return project_capped(np.asarray(plan, dtype=float), self.total_cap)


class RetailerAgent(PlanAgent):
    """Retailer utility as a consensus agent.

    The order book never exceeds total demand: supplying more than can be
    sold has zero retail value, so plans above that total are never proposed.
    """

    def __init__(self, spec):
        self.spec = spec
        self.dim = spec.n_inbound
        self.total_cap = float(spec.demand.sum())

    def evaluate(self, plan):
        ev = retailer_utility(self.spec, plan)
        return ev.value, ev.supergradient


class SupplierAgent(PlanAgent):
    """Supplier utility as a consensus agent, capped at total source capacity."""

    def __init__(self, spec):
        self.spec = spec
        self.dim = spec.n_inbound
        self.total_cap = spec.total_capacity

    def evaluate(self, plan):
        ev = supplier_utility(self.spec, plan)
        return ev.value, ev.supergradient


@dataclass(frozen=True)
class BestResponse:
    plan: np.ndarray
    objective: float   # u(plan) - prices@plan - (rho/2)||plan - z||^2
    gap: float         # certified optimality gap of the proximal objective
    evaluations: int


def best_response(agent, prices, z, rho, gap_tol=1e-12, max_evals=120, start=None):
    """Maximize the proximal objective by cutting planes on the concave
    utility with an exact prox-model master.

    Supergradient cuts overestimate the utility, so the master value is a
    certified upper bound; the loop stops once the bound meets the best
    evaluated point within ``gap_tol`` (relative).  Piecewise-linear utilities
    terminate finitely.  Agents with special structure may expose an exact
    ``prox_respond``, which takes precedence over the cutting-plane loop.
    """
    prices = np.asarray(prices, dtype=float)
    z = np.asarray(z, dtype=float)
    if prices.shape != (agent.dim,) or z.shape != (agent.dim,):
        raise DimensionError(
            f"prices {prices.shape} / proposal {z.shape} do not match agent dimension {agent.dim}"
        )
    if rho <= 0:
        raise ParameterError("penalty rho must be positive")
    if hasattr(agent, "prox_respond"):
        plan = agent.prox_respond(prices, z, rho)
        value = float(agent.evaluate(plan)[0])
        objective = value - prices @ plan - 0.5 * rho * float(np.sum((plan - z) ** 2))
        return BestResponse(plan=plan, objective=objective, gap=0.0, evaluations=1)

    center = z - prices / rho
    shift = 0.5 * rho * float(center @ center - z @ z)
    x = agent.project(center if start is None else np.asarray(start, dtype=float))

    offsets: list[float] = []
    grads: list[np.ndarray] = []
    best_val = -np.inf
    best_x = x
    for k in range(max_evals):
        value, grad = agent.evaluate(x)
        objective = value - prices @ x - 0.5 * rho * float(np.sum((x - z) ** 2))
        if objective > best_val:
            best_val = objective
            best_x = x
        offsets.append(value - float(grad @ x))
        grads.append(np.asarray(grad, dtype=float))
        if len(offsets) > 48:
            # drop the stalest cuts; fewer constraints only raise the model,
            # so the certified upper bound stays valid
            offsets = offsets[-32:]
            grads = grads[-32:]
        try:
            xm, model_val = maximize_cut_model(
                np.asarray(offsets), np.asarray(grads), center, rho, total_cap=agent.total_cap
            )
        except MasterError as exc:  # pragma: no cover - defensive
            raise NonConvergenceError(f"best-response master failed: {exc}") from exc
        upper = model_val + shift
        gap = upper - best_val
        if gap <= gap_tol * (1.0 + abs(best_val)):
            return BestResponse(plan=best_x, objective=best_val, gap=max(gap, 0.0),
                                evaluations=k + 1)
        x = xm
    raise NonConvergenceError(
        f"best response did not close its gap within {max_evals} evaluations (gap {gap:.3e})"
    )


class LocalEndpoint:
    """In-process best-response endpoint with a warm-started solver."""

    def __init__(self, agent, gap_tol=1e-12, max_evals=120):
        self.agent = agent
        self.dim = agent.dim
        self.gap_tol = gap_tol
        self.max_evals = max_evals
        self._last = None

    def respond(self, prices, z, rho, iteration):
        br = best_response(self.agent, prices, z, rho, gap_tol=self.gap_tol,
                           max_evals=self.max_evals, start=self._last)
        self._last = br.plan
        return br.plan

    def utility(self, plan):
        # Consensus iterates can sit a hair outside the agent's feasible set;
        # score the nearest plan the agent could actually execute.
        return float(self.agent.evaluate(self.agent.project(plan))[0])

    def close(self):
        pass


@dataclass(frozen=True)
class ConsensusConfig:
    rho: float = 1.0
    eps_abs: float = 1e-4
    eps_rel: float = 1e-4
    max_iters: int = 5000
    adapt_rho: bool = False
    adapt_every: int = 25          # rebalance cadence; every iteration oscillates
    adapt_span: float = 256.0      # rho stays within rho0 / span .. rho0 * span
    br_gap_tol: float = 1e-12
    br_max_evals: int = 120
    initial_plan: np.ndarray | None = None
    initial_prices: np.ndarray | None = None


@dataclass(frozen=True)
class ConsensusState:
    iteration: int
    z: np.ndarray                 # consensus proposal
    prices: np.ndarray            # (M, I), rows sum to zero exactly
    responses: np.ndarray         # (M, I) latest best responses
    r_primal: float               # max_m ||responses[m] - z||
    r_dual: float                 # rho * ||z - z_prev||
    rho: float


def coordinator_step(state, responses):
    """One ADMM coordinator update: average the responses (price-adjusted)
    into a new proposal and move each agent's prices by the disagreement."""
    X = np.asarray(responses, dtype=float)
    if X.shape != state.prices.shape:
        raise DimensionError(
            f"got responses of shape {X.shape}, expected {state.prices.shape}"
        )
    rho = state.rho
    z_new = np.mean(X + state.prices / rho, axis=0)
    prices = state.prices + rho * (X - z_new[None, :])
    # Pin the zero-sum dual-feasibility identity exactly; float drift would
    # otherwise accumulate over thousands of iterations.
    prices[-1] = -prices[:-1].sum(axis=0)
    r_primal = float(np.max(np.linalg.norm(X - z_new[None, :], axis=1), initial=0.0))
    r_dual = float(rho * np.linalg.norm(z_new - state.z))
    return ConsensusState(
        iteration=state.iteration + 1,
        z=z_new,
        prices=prices,
        responses=X,
        r_primal=r_primal,
        r_dual=r_dual,
        rho=rho,
    )


@dataclass(frozen=True)
class ConsensusResult:
    plan: np.ndarray
    utilities: list          # per-agent utility at the final plan (None if remote)
    iterations: int
    r_primal: float
    r_dual: float
    converged: bool
    residual_history: np.ndarray   # (iterations, 2) of (r_primal, r_dual)
    rho_final: float
    joint_utility: float | None = None
    prices: np.ndarray | None = None   # final per-agent price vectors


def _as_endpoint(agent, config):
    if hasattr(agent, "respond"):
        return agent
    return LocalEndpoint(agent, gap_tol=config.br_gap_tol, max_evals=config.br_max_evals)


def run_consensus(agents, config=None, trace=None):
    """Drive best-response endpoints to consensus.

    ``agents`` may be :class:`PlanAgent` instances (wrapped in-process) or any
    endpoint exposing ``respond(prices, z, rho, iteration)``.  ``trace`` is an
    optional callable or writable stream receiving one structured record per
    iteration.  A run that exhausts ``max_iters`` returns its best state with
    ``converged=False`` rather than raising.
    """
    config = config or ConsensusConfig()
    if not agents:
        raise ParameterError("at least one agent is required")
    endpoints = [_as_endpoint(a, config) for a in agents]
    dims = {ep.dim for ep in endpoints}
    if len(dims) != 1:
        raise DimensionError(f"agents disagree on plan dimension: {sorted(dims)}")
    dim = dims.pop()
    M = len(endpoints)

    if config.initial_plan is not None:
        z = np.maximum(np.asarray(config.initial_plan, dtype=float), 0.0)
        if z.shape != (dim,):
            raise DimensionError("initial plan has the wrong dimension")
    else:
        z = np.zeros(dim)
    if config.initial_prices is not None:
        prices = np.asarray(config.initial_prices, dtype=float).copy()
        if prices.shape != (M, dim):
            raise DimensionError("initial prices have the wrong shape")
        prices[-1] = -prices[:-1].sum(axis=0)
    else:
        prices = np.zeros((M, dim))

    emit = _trace_emitter(trace)
    state = ConsensusState(iteration=0, z=z, prices=prices,
                           responses=np.tile(z, (M, 1)),
                           r_primal=np.inf, r_dual=np.inf, rho=config.rho)
    history = []
    converged = False
    for it in range(1, config.max_iters + 1):
        responses = [ep.respond(state.prices[m], state.z, state.rho, it)
                     for m, ep in enumerate(endpoints)]
        state = coordinator_step(state, responses)
        if config.adapt_rho and it % config.adapt_every == 0:
            state = _rebalance_rho(state, lo=config.rho / config.adapt_span,
                                   hi=config.rho * config.adapt_span)
        history.append((state.r_primal, state.r_dual))
        if emit:
            emit({"iteration": state.iteration, "z": state.z.tolist(),
                  "r_primal": state.r_primal, "r_dual": state.r_dual})
        znorm = float(np.linalg.norm(state.z))
        if (state.r_primal <= config.eps_abs + config.eps_rel * znorm
                and state.r_dual <= config.eps_abs + config.eps_rel * state.rho * znorm):
            converged = True
            break

    plan = np.maximum(state.z, 0.0)
    utilities = [ep.utility(plan) if hasattr(ep, "utility") else None for ep in endpoints]
    joint = sum(u for u in utilities if u is not None) if all(
        u is not None for u in utilities) else None
    return ConsensusResult(
        plan=plan,
        utilities=utilities,
        iterations=state.iteration,
        r_primal=state.r_primal,
        r_dual=state.r_dual,
        converged=converged,
        residual_history=np.asarray(history),
        rho_final=state.rho,
        joint_utility=joint,
        prices=state.prices.copy(),
    )


def _rebalance_rho(state, lo, hi, ratio=10.0, factor=2.0):
    if state.r_primal > ratio * state.r_dual:
        return replace(state, rho=min(state.rho * factor, hi))
    if state.r_dual > ratio * state.r_primal:
        return replace(state, rho=max(state.rho / factor, lo))
    return state


def _trace_emitter(trace):
    if trace is None:
        return None
    if callable(trace):
        return trace

    def emit(record):
        trace.write(json.dumps(record, separators=(",", ":")) + "\n")

    return emit
