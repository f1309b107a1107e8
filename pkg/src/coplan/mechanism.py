"""VCG settlement for the bilateral retailer-supplier case.

Builds the status quo (the retailer's standalone order and the supplier's
standalone value of filling it), computes the socially efficient plan either
by one centralized LP or by the consensus loop, prices the supplier's
externality transfer, applies activity-fee variants, and prices menus of
contracts that let the supplier pick the efficient plan in dominant
strategies.

Plans here live in X = {x >= 0, sum(x) <= total demand}: ordering more than
can possibly sell has no retail value, and leaving the total uncapped would
let gross supplier margin on unsellable units masquerade as joint surplus.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linprog

from ._qp import project_capped
from .consensus import (
    ConsensusConfig,
    PlanAgent,
    SupplierAgent,
    run_consensus,
)
from .errors import InfeasibleError, ParameterError
from .transport import as_plan, retailer_utility, supplier_utility

_TOL = 1e-9

FEE_VARIANTS = ("none", "additive", "multiplicative", "roi", "linear_deviation")


@dataclass(frozen=True)
class FeePolicy:
    """Activity-fee variant applied on top of the externality transfer."""

    variant: str = "none"
    alpha: float = 0.0        # flat fee ($)
    beta: float = 0.0         # proportional markup on the reported retailer utility
    roi_rate: float = 0.0     # share of the retailer's utility swing
    over_rate: float = 0.0    # $/unit charged on oversupply vs the standalone plan
    under_rate: float = 0.0   # $/unit charged on undersupply

    def __post_init__(self):
        if self.variant not in FEE_VARIANTS:
            raise ParameterError(f"unknown fee variant {self.variant!r}")
        for name in ("alpha", "beta", "roi_rate", "over_rate", "under_rate"):
            if getattr(self, name) < 0:
                raise ParameterError(f"fee parameter {name} must be nonnegative")
        if self.variant == "roi" and self.roi_rate >= 1.0:
            raise ParameterError("roi_rate must be below 1")
        if self.variant == "linear_deviation" and self.under_rate > self.over_rate:
            raise ParameterError("under_rate must not exceed over_rate")

    @classmethod
    def none(cls):
        return cls()

    @classmethod
    def additive(cls, alpha):
        return cls(variant="additive", alpha=float(alpha))

    @classmethod
    def multiplicative(cls, beta):
        return cls(variant="multiplicative", beta=float(beta))

    @classmethod
    def roi(cls, rate):
        return cls(variant="roi", roi_rate=float(rate))

    @classmethod
    def linear_deviation(cls, over_rate, under_rate):
        return cls(variant="linear_deviation", over_rate=float(over_rate),
                   under_rate=float(under_rate))

    @property
    def report_scale(self):
        """Multiplier applied to the retailer's reported utility when the fee
        biases the allocation (1.0 when it does not)."""
        if self.variant == "multiplicative":
            return 1.0 + self.beta
        if self.variant == "roi":
            return 1.0 - self.roi_rate
        return 1.0

    def transfer_term(self, utility_drop, x_star=None, standalone_plan=None):
        """Fee added to the supplier transfer; ``utility_drop`` is the
        retailer's utility at its standalone plan minus at the settled plan."""
        if self.variant == "none":
            return 0.0
        if self.variant == "additive":
            return self.alpha
        if self.variant == "multiplicative":
            return self.beta * utility_drop
        if self.variant == "roi":
            return self.roi_rate * abs(utility_drop)
        return deviation_penalty(x_star, standalone_plan, self.over_rate, self.under_rate)


def deviation_penalty(x_star, standalone_plan, over_rate, under_rate):
    """Linear charge on componentwise deviation from the standalone plan:
    ``over_rate`` per unit above it, ``under_rate`` per unit below it."""
    if not (0.0 <= under_rate <= over_rate):
        raise ParameterError("rates must satisfy 0 <= under_rate <= over_rate")
    x = np.asarray(x_star, dtype=float)
    ref = np.asarray(standalone_plan, dtype=float)
    delta = x - ref
    return float(over_rate * delta.clip(min=0).sum() + under_rate * (-delta).clip(min=0).sum())


@dataclass(frozen=True)
class StatusQuo:
    """Standalone plans defining each side's no-agreement payoff: the
    retailer's preferred order and the plan backing the supplier's
    reservation value."""

    retailer_plan: np.ndarray
    supplier_plan: np.ndarray
    mode: str  # "jit-derived" | "explicit"


def jit_plan(retailer):
    """The retailer's standalone preferred order: route every demand region
    from its cheapest inbound node (ties to the lowest node index)."""
    total = float(retailer.demand.sum())
    uncapped = retailer_utility(retailer, np.full(retailer.n_inbound, total))
    return uncapped.transport.flow.sum(axis=1)


def standalone_plans(retailer, supplier, mode="jit-derived", explicit=None):
    """Build the status quo.

    ``jit-derived``: the retailer orders its preferred plan and the supplier
    is assumed to confirm it in full; if the order exceeds total source
    capacity the supplier's reservation plan is instead the partial
    confirmation (a per-node fraction of the order) that maximizes its own
    utility.  ``explicit``: both plans are supplied by the caller.
    """
    if mode == "explicit":
        if explicit is None:
            raise ParameterError("explicit mode needs a (retailer_plan, supplier_plan) pair")
        rp = as_plan(explicit[0], retailer.n_inbound)
        sp = as_plan(explicit[1], supplier.n_inbound)
        return StatusQuo(retailer_plan=rp, supplier_plan=sp, mode="explicit")
    if mode != "jit-derived":
        raise ParameterError(f"unknown status-quo mode {mode!r}")
    order = jit_plan(retailer)
    if order.sum() <= supplier.total_capacity + _TOL:
        return StatusQuo(retailer_plan=order, supplier_plan=order.copy(), mode="jit-derived")
    confirmed = _best_confirmation(supplier, order)
    return StatusQuo(retailer_plan=order, supplier_plan=confirmed, mode="jit-derived")


def _best_confirmation(supplier, order):
    """Utility-maximizing partial confirmation 0 <= x <= order of an order the
    supplier cannot fill completely."""
    K, I = supplier.arc_costs.shape
    n = I + K * I
    c = np.zeros(n)
    c[:I] = -supplier.gross_profit
    c[I:] = supplier.arc_costs.reshape(-1)
    A = []
    b = []
    for i in range(I):  # deliveries cover the confirmed quantity
        row = np.zeros(n)
        row[i] = 1.0
        for k in range(K):
            row[I + k * I + i] = -1.0
        A.append(row)
        b.append(0.0)
    for k in range(K):  # source capacity
        row = np.zeros(n)
        row[I + k * I:I + (k + 1) * I] = 1.0
        A.append(row)
        b.append(supplier.capacities[k])
    bounds = [(0.0, float(q)) for q in order] + [(0.0, None)] * (K * I)
    res = linprog(c, A_ub=np.asarray(A), b_ub=np.asarray(b), bounds=bounds, method="highs")
    if res.status != 0:  # pragma: no cover - the zero plan is always feasible
        raise InfeasibleError(f"confirmation LP failed: {res.message}")
    return res.x[:I].copy()


class BoostedRetailerAgent(PlanAgent):
    """Retailer agent whose reported utility carries the fee-policy bias."""

    def __init__(self, spec, fee, standalone_plan=None):
        self.spec = spec
        self.fee = fee
        self.dim = spec.n_inbound
        self.total_cap = float(spec.demand.sum())
        self.reference = None if standalone_plan is None else np.asarray(standalone_plan, float)
        if fee.variant == "linear_deviation" and self.reference is None:
            raise ParameterError("linear_deviation boosting needs the standalone plan")

    def evaluate(self, plan):
        ev = retailer_utility(self.spec, plan)
        scale = self.fee.report_scale
        value = scale * ev.value
        grad = scale * ev.supergradient
        if self.fee.variant == "additive":
            value += self.fee.alpha
        elif self.fee.variant == "linear_deviation":
            x = np.asarray(plan, dtype=float)
            delta = x - self.reference
            value -= (self.fee.over_rate * delta.clip(min=0).sum()
                      + self.fee.under_rate * (-delta).clip(min=0).sum())
            pen_grad = np.where(delta > _TOL, self.fee.over_rate,
                                np.where(delta < -_TOL, -self.fee.under_rate, 0.0))
            grad = grad - pen_grad
        return value, grad


def efficient_plan(retailer, supplier, fee=None, method="centralized",
                   status_quo=None, config=None):
    """Plan maximizing the (possibly fee-biased) reported retailer utility
    plus the supplier utility over X.

    ``centralized`` solves one joint LP over plans and both transport flows;
    ``cpp`` runs the consensus loop against black-box agents and projects the
    limit back into X.
    """
    fee = fee or FeePolicy.none()
    needs_reference = fee.variant == "linear_deviation"
    if needs_reference and status_quo is None:
        status_quo = standalone_plans(retailer, supplier)
    reference = status_quo.retailer_plan if status_quo is not None else None

    if method == "centralized":
        return _efficient_plan_lp(retailer, supplier, fee, reference)
    if method != "cpp":
        raise ParameterError(f"unknown method {method!r}")

    boosted = BoostedRetailerAgent(retailer, fee, standalone_plan=reference)
    cfg = config or ConsensusConfig(eps_abs=1e-6, eps_rel=1e-6, adapt_rho=True)
    if cfg.initial_plan is None:
        start = status_quo.retailer_plan if status_quo is not None else jit_plan(retailer)
        cfg = replace(cfg, initial_plan=start)
    result = run_consensus([boosted, SupplierAgent(supplier)], cfg)
    cap = min(float(retailer.demand.sum()), supplier.total_capacity)
    return project_capped(result.plan, cap)


def _efficient_plan_lp(retailer, supplier, fee, reference):
    I = retailer.n_inbound
    J = retailer.demand.size
    K = supplier.capacities.size
    scale = fee.report_scale
    extra = 2 * I if fee.variant == "linear_deviation" else 0
    nva, nsa, nvs = I * J, J, K * I
    n = I + nva + nsa + nvs + extra
    c = np.zeros(n)
    c[:I] = -supplier.gross_profit
    c[I:I + nva] = scale * retailer.arc_costs.reshape(-1)
    c[I + nva:I + nva + nsa] = scale * retailer.lost_sales_penalty
    c[I + nva + nsa:I + nva + nsa + nvs] = supplier.arc_costs.reshape(-1)
    if extra:
        c[-2 * I:-I] = fee.over_rate
        c[-I:] = fee.under_rate

    A = []
    b = []
    for j in range(J):
        row = np.zeros(n)
        for i in range(I):
            row[I + i * J + j] = -1.0
        row[I + nva + j] = -1.0
        A.append(row)
        b.append(-retailer.demand[j])
    for i in range(I):
        row = np.zeros(n)
        row[i] = -1.0
        row[I + i * J:I + (i + 1) * J] = 1.0
        A.append(row)
        b.append(0.0)
    for i in range(I):
        row = np.zeros(n)
        row[i] = 1.0
        for k in range(K):
            row[I + nva + nsa + k * I + i] = -1.0
        A.append(row)
        b.append(0.0)
    for k in range(K):
        row = np.zeros(n)
        row[I + nva + nsa + k * I:I + nva + nsa + (k + 1) * I] = 1.0
        A.append(row)
        b.append(supplier.capacities[k])
    row = np.zeros(n)
    row[:I] = 1.0
    A.append(row)
    b.append(retailer.demand.sum())
    if extra:
        for i in range(I):  # over >= x - ref, under >= ref - x
            row = np.zeros(n)
            row[i] = 1.0
            row[n - 2 * I + i] = -1.0
            A.append(row)
            b.append(reference[i])
            row = np.zeros(n)
            row[i] = -1.0
            row[n - I + i] = -1.0
            A.append(row)
            b.append(-reference[i])

    res = linprog(c, A_ub=np.asarray(A), b_ub=np.asarray(b), bounds=(0, None), method="highs")
    if res.status != 0:
        raise InfeasibleError(f"joint planning LP failed: {res.message}")
    return np.maximum(res.x[:I], 0.0)


@dataclass(frozen=True)
class SettlementReport:
    """Everything the principal needs to book one coordinated settlement."""

    plan: np.ndarray
    status_quo: StatusQuo
    fee: FeePolicy
    retailer_value_plan: float       # retailer utility at the settled plan
    supplier_value_plan: float
    retailer_value_standalone: float
    supplier_value_standalone: float
    retailer_cost_plan: float        # transport cost components for reporting
    supplier_cost_plan: float
    transfer_supplier: float         # paid by the supplier to the principal
    transfer_retailer: float         # paid by the retailer agent to the principal
    fee_term: float
    budget_sum: float
    gain: float
    supplier_surplus: float
    retailer_surplus: float
    supplier_accepts: bool

    def verify(self, tol=1e-6):
        """Re-check the settlement identities; raises AssertionError on drift."""
        lhs = self.retailer_value_plan + self.transfer_supplier - self.fee_term
        assert abs(lhs - self.retailer_value_standalone) <= tol, "transfer identity broken"
        assert abs((self.supplier_surplus + self.retailer_surplus) - self.gain) <= tol, \
            "surplus split does not add to the coordination gain"
        assert abs(self.budget_sum - (self.transfer_retailer + self.transfer_supplier)) <= tol
        return True


def vcg_transfers(retailer, supplier, status_quo, x_star, fee=None):
    """Price the settled plan: the supplier pays the retailer's utility drop
    plus the activity fee, the retailer agent pays the supplier's drop (a
    bookkeeping entry that nets out of the principal-plus-agent position)."""
    fee = fee or FeePolicy.none()
    x_star = as_plan(x_star, retailer.n_inbound)
    ev_a_star = retailer_utility(retailer, x_star)
    ev_s_star = supplier_utility(supplier, x_star)
    u_a_sq = retailer_utility(retailer, status_quo.retailer_plan).value
    u_s_sq = supplier_utility(supplier, status_quo.supplier_plan).value

    drop = u_a_sq - ev_a_star.value
    fee_term = fee.transfer_term(drop, x_star=x_star,
                                 standalone_plan=status_quo.retailer_plan)
    t_supplier = drop + fee_term
    t_retailer = u_s_sq - ev_s_star.value
    gain = ev_a_star.value + ev_s_star.value - u_a_sq - u_s_sq
    supplier_surplus = ev_s_star.value - t_supplier - u_s_sq
    retailer_surplus = (ev_a_star.value + t_supplier) - u_a_sq
    return SettlementReport(
        plan=x_star,
        status_quo=status_quo,
        fee=fee,
        retailer_value_plan=ev_a_star.value,
        supplier_value_plan=ev_s_star.value,
        retailer_value_standalone=u_a_sq,
        supplier_value_standalone=u_s_sq,
        retailer_cost_plan=ev_a_star.transport.objective,
        supplier_cost_plan=ev_s_star.transport.objective,
        transfer_supplier=t_supplier,
        transfer_retailer=t_retailer,
        fee_term=fee_term,
        budget_sum=t_retailer + t_supplier,
        gain=gain,
        supplier_surplus=supplier_surplus,
        retailer_surplus=retailer_surplus,
        supplier_accepts=supplier_surplus >= -_TOL,
    )


@dataclass(frozen=True)
class BudgetDiagnosis:
    total: float
    regime: str  # "deficit" | "surplus" | "balanced"


def budget_balance_check(report, tol=1e-9):
    """Classify the VCG budget.  A deficit (the principal pays out on net)
    appears exactly when joint utility at the settled plan beats the summed
    standalone values, i.e. when the agents are complements."""
    if report.fee.variant != "none":
        raise ParameterError("budget diagnosis applies to the fee-free mechanism")
    total = report.budget_sum
    if total < -tol:
        regime = "deficit"
    elif total > tol:
        regime = "surplus"
    else:
        regime = "balanced"
    return BudgetDiagnosis(total=total, regime=regime)


def coordination_gain(report):
    """Joint utility at the settled plan minus joint utility at the status quo."""
    return report.gain


@dataclass(frozen=True)
class MenuOffer:
    """Plans priced so every option leaves the retailer exactly its standalone
    utility plus the flat fee."""

    plans: tuple
    fees: tuple
    alpha: float


def build_menu(retailer, status_quo, plans, alpha=0.0):
    if not plans:
        raise ParameterError("menu needs at least one plan")
    u_a_sq = retailer_utility(retailer, status_quo.retailer_plan).value
    priced = []
    fees = []
    for plan in plans:
        p = as_plan(plan, retailer.n_inbound)
        fees.append(u_a_sq - retailer_utility(retailer, p).value + alpha)
        priced.append(p)
    return MenuOffer(plans=tuple(priced), fees=tuple(fees), alpha=float(alpha))


def default_menu_plans(standalone_plan, x_star, count=4):
    """Retailer-generated sweep from the standalone plan toward (and one step
    past) the efficient plan."""
    ref = np.asarray(standalone_plan, dtype=float)
    target = np.asarray(x_star, dtype=float)
    if count < 1:
        raise ParameterError("count must be positive")
    if count == 1:
        return [target.copy()]
    unit = (target - ref) / (count - 1)
    return [np.maximum(ref + k * unit, 0.0) for k in range(1, count + 1)]


@dataclass(frozen=True)
class MenuChoice:
    accepted: bool
    index: int | None
    plan: np.ndarray | None
    fee: float | None
    net_value: float | None
    option_values: tuple        # supplier utility per option (-inf if unfillable)
    option_nets: tuple          # utility minus the option's fee
    option_alpha_nets: tuple    # utility minus the flat fee only


def supplier_choose(supplier, menu, reservation=-np.inf):
    """Dominant-strategy choice from a priced menu: the option maximizing the
    supplier's utility net of its fee, ties to the lowest index; declined when
    even the best option pays less than the reservation value."""
    values = []
    for plan in menu.plans:
        try:
            values.append(supplier_utility(supplier, plan).value)
        except InfeasibleError:
            values.append(-np.inf)
    nets = [v - f for v, f in zip(values, menu.fees)]
    alpha_nets = [v - menu.alpha for v in values]
    best = int(np.argmax(nets))
    if not np.isfinite(nets[best]) or nets[best] < reservation - _TOL:
        return MenuChoice(accepted=False, index=None, plan=None, fee=None, net_value=None,
                          option_values=tuple(values), option_nets=tuple(nets),
                          option_alpha_nets=tuple(alpha_nets))
    return MenuChoice(accepted=True, index=best, plan=menu.plans[best],
                      fee=menu.fees[best], net_value=nets[best],
                      option_values=tuple(values), option_nets=tuple(nets),
                      option_alpha_nets=tuple(alpha_nets))
