"""Rolling-horizon coordination of weekly orders with cost-benefit transfers.

A retailer runs an order-up-to policy against weekly forecasts; coordination
lets the order stream deviate from that ideal policy to pick up supplier-side
gains (production smoothing), and each week the supplier compensates the
retailer for the certainty-equivalent utility the deviation costs it.  Two
commitment structures are supported: ``none`` re-plans everything weekly and
pays for the one issued order, ``full-horizon`` turns each agreed window into
a binding plan of record and pays for plan updates.

Flow utilities are deterministic given the forecasts (certainty-equivalent):

    retailer week t:  margin * sales_t - holding * end_inventory_t
                      - lost_penalty * (forecast_t - sales_t)
    supplier week t:  margin * order_t - smoothing * (order_t - order_{t-1})^2

The retailer total is concave and piecewise linear in the order vector; the
supplier total is a concave quadratic.  Both are exposed as consensus agents,
so each week's joint plan comes out of the same coordination loop used for
the static case.
"""

from dataclasses import dataclass, replace

import numpy as np

from .consensus import ConsensusConfig, PlanAgent, run_consensus
from .errors import DimensionError, ParameterError, StateError

MODES = ("none", "full-horizon")


@dataclass(frozen=True)
class InventoryModel:
    """Episode data: weekly forecasts plus the flow-utility parameters."""

    forecasts: np.ndarray
    holding_cost: float = 1.0
    lost_sales_cost: float = 9.0
    retailer_margin: float = 10.0
    supplier_margin: float = 3.0
    smoothing_cost: float = 0.5       # $ per squared unit of week-over-week change
    horizon: int = 6
    target_inventory: np.ndarray | None = None  # order-up-to level, default = forecast

    def __post_init__(self):
        f = np.asarray(self.forecasts, dtype=float)
        if f.ndim != 1 or f.size == 0:
            raise DimensionError("forecasts must be a nonempty vector")
        if np.any(f < 0):
            raise ParameterError("forecasts must be nonnegative")
        if self.horizon < 1:
            raise ParameterError("planning horizon must be at least one week")
        for name in ("holding_cost", "lost_sales_cost", "smoothing_cost"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be nonnegative")
        tip = self.target_inventory
        tip = f.copy() if tip is None else np.asarray(tip, dtype=float)
        if tip.shape != f.shape:
            raise DimensionError("target_inventory must match the forecasts")
        if np.any(tip < 0):
            raise ParameterError("target_inventory must be nonnegative")
        object.__setattr__(self, "forecasts", f)
        object.__setattr__(self, "target_inventory", tip)

    @property
    def n_weeks(self):
        return self.forecasts.size

    def window(self, week):
        """Planning-window week indices starting at ``week``, clipped to the
        episode."""
        if not 0 <= week < self.n_weeks:
            raise ParameterError(f"week {week} outside the episode")
        return np.arange(week, min(week + self.horizon, self.n_weeks))

    def initial_state(self, mode="none", on_hand=0.0, last_order=0.0):
        if mode not in MODES:
            raise ParameterError(f"unknown commitment mode {mode!r}")
        return RollingState(week=0, on_hand=float(on_hand), last_order=float(last_order),
                            plan_of_record=None, cumulative_cbt=0.0, mode=mode)


@dataclass(frozen=True)
class RollingState:
    week: int
    on_hand: float
    last_order: float
    plan_of_record: np.ndarray | None   # binding orders for weeks >= week
    cumulative_cbt: float
    mode: str


def jit_policy(model, state, pinned_first=None):
    """Order-up-to-target sequence for the current window.

    With ``pinned_first`` the first order is fixed and the remaining weeks
    re-optimize conditional on it (still order-up-to).  With the default
    target (the forecast itself) the free sequence maximizes total retailer
    flow utility.
    """
    window = model.window(state.week)
    orders = np.zeros(window.size)
    on = state.on_hand
    for idx, t in enumerate(window):
        if idx == 0 and pinned_first is not None:
            orders[idx] = float(pinned_first)
        else:
            orders[idx] = max(model.target_inventory[t] - on, 0.0)
        available = on + orders[idx]
        on = max(available - model.forecasts[t], 0.0)
    return orders


def retailer_flow_utility(model, orders, state):
    """Per-week retailer flow utility of an order sequence and its total,
    propagating inventory through the window at forecast demand."""
    window = model.window(state.week)
    orders = np.asarray(orders, dtype=float)
    if orders.shape != (window.size,):
        raise DimensionError(f"expected {window.size} orders, got {orders.shape}")
    m, h, p = model.retailer_margin, model.holding_cost, model.lost_sales_cost
    weekly = np.zeros(window.size)
    on = state.on_hand
    for idx, t in enumerate(window):
        available = on + orders[idx]
        sales = min(model.forecasts[t], available)
        on = available - sales
        weekly[idx] = m * sales - h * on - p * (model.forecasts[t] - sales)
    return weekly, float(weekly.sum())


def supplier_flow_utility(model, orders, state):
    """Per-week supplier flow utility: margin on the order minus the
    production-smoothing cost of week-over-week changes."""
    window = model.window(state.week)
    orders = np.asarray(orders, dtype=float)
    if orders.shape != (window.size,):
        raise DimensionError(f"expected {window.size} orders, got {orders.shape}")
    prev = state.last_order
    weekly = np.zeros(window.size)
    for idx in range(window.size):
        weekly[idx] = (model.supplier_margin * orders[idx]
                       - model.smoothing_cost * (orders[idx] - prev) ** 2)
        prev = orders[idx]
    return weekly, float(weekly.sum())


def joint_flow_utility(model, orders, state):
    return retailer_flow_utility(model, orders, state)[1] + \
        supplier_flow_utility(model, orders, state)[1]


class DynamicRetailerAgent(PlanAgent):
    """Retailer flow utility over the free weeks of a window, conditioned on
    committed prefix orders.  Orders are capped at the window's uncovered
    forecast total (stock beyond the episode's demand has no retail value)."""

    def __init__(self, model, state, prefix=()):
        self.model = model
        self.state = state
        self.prefix = np.asarray(prefix, dtype=float)
        window = model.window(state.week)
        self.window = window
        self.dim = window.size - self.prefix.size
        if self.dim <= 0:
            raise ParameterError("no free weeks to plan")
        cap = max(float(model.forecasts[window].sum()) - state.on_hand, 0.0)
        self.total_cap = max(cap - float(self.prefix.sum()), 0.0)

    def evaluate(self, plan):
        model, state = self.model, self.state
        orders = np.concatenate([self.prefix, np.asarray(plan, dtype=float)])
        f = model.forecasts[self.window]
        m, h, p = model.retailer_margin, model.holding_cost, model.lost_sales_cost
        n = orders.size
        value = 0.0
        on = state.on_hand
        # d(on_t)/d(orders): active whenever inventory stays positive
        on_grad = np.zeros(n)
        hold_grad = np.zeros(n)
        for idx in range(n):
            available = on + orders[idx]
            if available - f[idx] > 0.0:
                on = available - f[idx]
                sales = f[idx]
                on_grad[idx] += 1.0
            else:
                on = 0.0
                sales = available
                on_grad = np.zeros(n)
            value += m * sales - h * on - p * (f[idx] - sales)
            hold_grad += h * on_grad
        grad = (m + p) * np.ones(n) - (m + p) * on_grad - hold_grad
        return value, grad[self.prefix.size:]


class DynamicSupplierAgent(PlanAgent):
    """Supplier flow utility over the free weeks, anchored at the last issued
    order (and any committed prefix) for the smoothing term."""

    def __init__(self, model, state, prefix=()):
        self.model = model
        self.state = state
        self.prefix = np.asarray(prefix, dtype=float)
        window = model.window(state.week)
        self.dim = window.size - self.prefix.size
        if self.dim <= 0:
            raise ParameterError("no free weeks to plan")
        self.total_cap = None

    @property
    def _anchor(self):
        return float(self.prefix[-1]) if self.prefix.size else self.state.last_order

    def evaluate(self, plan):
        model = self.model
        orders = np.concatenate([self.prefix, np.asarray(plan, dtype=float)])
        m, kappa = model.supplier_margin, model.smoothing_cost
        shifted = np.concatenate([[self.state.last_order], orders[:-1]])
        diffs = orders - shifted
        value = float(m * orders.sum() - kappa * np.sum(diffs ** 2))
        grad = m - 2.0 * kappa * diffs
        grad[:-1] += 2.0 * kappa * diffs[1:]
        return value, grad[self.prefix.size:]

    def prox_respond(self, prices, z, rho):
        """Exact proximal best response: the objective is a strictly concave
        quadratic with a tridiagonal Hessian, solved by active-set pinning of
        the nonnegativity bounds (cutting planes would crawl on it)."""
        n = self.dim
        m, kappa = self.model.supplier_margin, self.model.smoothing_cost
        prices = np.asarray(prices, dtype=float)
        z = np.asarray(z, dtype=float)
        # maximize b@y - y@H y/2 over y >= 0
        H = rho * np.eye(n)
        for t in range(n):
            H[t, t] += 2.0 * kappa * (2.0 if t < n - 1 else 1.0)
            if t + 1 < n:
                H[t, t + 1] -= 2.0 * kappa
                H[t + 1, t] -= 2.0 * kappa
        b = m - prices + rho * z
        b[0] += 2.0 * kappa * self._anchor
        pinned = np.zeros(n, dtype=bool)
        for _ in range(4 * n + 8):
            y = np.zeros(n)
            free = ~pinned
            if free.any():
                y[free] = np.linalg.solve(H[np.ix_(free, free)], b[free])
            if np.any(y[free] < -1e-12):
                pinned |= y < -1e-12
                continue
            slack_grad = b - H @ y
            release = pinned & (slack_grad > 1e-12)
            if not release.any():
                return np.maximum(y, 0.0)
            pinned &= ~release
        raise ParameterError("supplier prox active set failed to settle")  # pragma: no cover


@dataclass(frozen=True)
class CoordinatedPlan:
    orders: np.ndarray
    free_weeks: int
    converged: bool
    iterations: int
    fallback_to_baseline: bool
    prices: np.ndarray | None = None   # final per-agent prices over the free weeks


# rho matched to the weekly flow-utility scale (margins of a few $/unit on
# double-digit orders); the static module keeps its own default
DEFAULT_DYNAMIC_CONFIG = ConsensusConfig(rho=3.0, eps_abs=1e-6, eps_rel=1e-6,
                                         adapt_rho=True, max_iters=3000)


def coordinated_plan(model, state, config=None, warm_plan=None, warm_prices=None):
    """Jointly optimal orders for the current window via the consensus loop.

    In ``full-horizon`` mode the committed plan of record stays binding and
    only appended weeks are re-coordinated.  If the consensus iterate fails
    to beat the order-up-to baseline on joint flow utility (possible when the
    optimizer stops at tolerance and the baseline is already optimal), the
    baseline is used: coordination never does worse than no agreement.

    ``warm_plan`` / ``warm_prices`` seed the loop (rolling runs pass the
    previous week's shifted solution, which typically converges in a handful
    of iterations).
    """
    window = model.window(state.week)
    prefix = np.asarray([], dtype=float)
    if state.mode == "full-horizon" and state.plan_of_record is not None:
        prefix = np.asarray(state.plan_of_record, dtype=float)[:window.size]
    free = window.size - prefix.size
    if free == 0:
        return CoordinatedPlan(orders=prefix.copy(), free_weeks=0, converged=True,
                               iterations=0, fallback_to_baseline=False,
                               prices=None)

    baseline = commitment_baseline(model, state)
    cfg = config or DEFAULT_DYNAMIC_CONFIG
    seed_ok = prefix.size == 0  # shifted seeds only align with an uncommitted window
    if cfg.initial_plan is None:
        start = baseline[prefix.size:]
        if seed_ok and warm_plan is not None and warm_plan.size >= free:
            start = warm_plan[:free]
        cfg = replace(cfg, initial_plan=start)
    if cfg.initial_prices is None and seed_ok and warm_prices is not None \
            and warm_prices.shape[1] >= free:
        cfg = replace(cfg, initial_prices=warm_prices[:, :free])
    retailer = DynamicRetailerAgent(model, state, prefix)
    supplier = DynamicSupplierAgent(model, state, prefix)
    result = run_consensus([retailer, supplier], cfg)
    free_orders = retailer.project(result.plan)
    orders = np.concatenate([prefix, free_orders])

    fallback = joint_flow_utility(model, orders, state) < joint_flow_utility(
        model, baseline, state)
    if fallback:
        orders = baseline
    return CoordinatedPlan(orders=orders, free_weeks=free, converged=result.converged,
                           iterations=result.iterations, fallback_to_baseline=bool(fallback),
                           prices=result.prices)


def commitment_baseline(model, state):
    """No-coordination reference for the current window: the binding plan of
    record (if any) extended week by week with order-up-to fills."""
    window = model.window(state.week)
    committed = np.asarray([], dtype=float)
    if state.mode == "full-horizon" and state.plan_of_record is not None:
        committed = np.asarray(state.plan_of_record, dtype=float)[:window.size]
    orders = np.zeros(window.size)
    on = state.on_hand
    for idx, t in enumerate(window):
        if idx < committed.size:
            orders[idx] = committed[idx]
        else:
            orders[idx] = max(model.target_inventory[t] - on, 0.0)
        on = max(on + orders[idx] - model.forecasts[t], 0.0)
    return orders


def cbt_one_week(model, state, plan, jit_orders=None):
    """Payment from the supplier to the retailer when only the first order of
    the window is issued: the retailer's utility under its free order-up-to
    plan minus its utility when the first order is pinned to the coordinated
    one (later weeks re-optimized conditional on it)."""
    plan = np.asarray(plan, dtype=float)
    if jit_orders is None:
        jit_orders = jit_policy(model, state)
    pinned = jit_policy(model, state, pinned_first=plan[0])
    _, free_total = retailer_flow_utility(model, jit_orders, state)
    _, pinned_total = retailer_flow_utility(model, pinned, state)
    return free_total - pinned_total


def cbt_full_horizon(model, state, plan, baseline=None):
    """Payment when the whole window is binding: the retailer's utility under
    the commitment baseline minus under the agreed plan."""
    if state.mode != "full-horizon":
        raise StateError("full-horizon payment requires full-horizon commitment mode")
    plan = np.asarray(plan, dtype=float)
    if baseline is None:
        baseline = commitment_baseline(model, state)
    if plan.shape != baseline.shape:
        raise DimensionError("plan and baseline cover different windows")
    _, base_total = retailer_flow_utility(model, baseline, state)
    _, plan_total = retailer_flow_utility(model, plan, state)
    return base_total - plan_total


@dataclass(frozen=True)
class WeekRecord:
    week: int
    order: float
    realized_demand: float
    sales: float
    end_inventory: float
    cbt: float
    cumulative_cbt: float
    jit_orders: np.ndarray
    coordinated_orders: np.ndarray
    retailer_total_jit: float
    retailer_total_plan: float
    joint_total_jit: float
    joint_total_plan: float


def roll_forward(model, state, realized_demand, plan):
    """Issue the week's coordinated order, settle the week's payment, update
    inventory with realized demand, and advance the state."""
    plan = np.asarray(plan, dtype=float)
    window = model.window(state.week)
    if plan.shape != (window.size,):
        raise DimensionError(f"plan must cover the {window.size}-week window")
    jit_orders = jit_policy(model, state)
    if state.mode == "none":
        cbt = cbt_one_week(model, state, plan, jit_orders)
    else:
        cbt = cbt_full_horizon(model, state, plan)

    order = float(plan[0])
    available = state.on_hand + order
    sales = min(float(realized_demand), available)
    end_inventory = available - sales
    record = WeekRecord(
        week=state.week,
        order=order,
        realized_demand=float(realized_demand),
        sales=sales,
        end_inventory=end_inventory,
        cbt=float(cbt),
        cumulative_cbt=state.cumulative_cbt + float(cbt),
        jit_orders=jit_orders,
        coordinated_orders=plan,
        retailer_total_jit=retailer_flow_utility(model, jit_orders, state)[1],
        retailer_total_plan=retailer_flow_utility(model, plan, state)[1],
        joint_total_jit=joint_flow_utility(model, jit_orders, state),
        joint_total_plan=joint_flow_utility(model, plan, state),
    )
    new_state = RollingState(
        week=state.week + 1,
        on_hand=end_inventory,
        last_order=order,
        plan_of_record=plan[1:].copy() if state.mode == "full-horizon" else None,
        cumulative_cbt=record.cumulative_cbt,
        mode=state.mode,
    )
    return new_state, record


def simulate(model, demand_path, mode="none", config=None, on_hand=0.0):
    """Roll the model through the whole episode under realized demand.  Each
    week's coordination warm-starts from the previous week's shifted plan and
    prices."""
    demand_path = np.asarray(demand_path, dtype=float)
    if demand_path.shape != (model.n_weeks,):
        raise DimensionError("demand path must cover the episode")
    state = model.initial_state(mode=mode, on_hand=on_hand)
    records = []
    warm_plan = warm_prices = None
    for _ in range(model.n_weeks):
        week_plan = coordinated_plan(model, state, config,
                                     warm_plan=warm_plan, warm_prices=warm_prices)
        if week_plan.prices is not None:
            warm_plan = week_plan.orders[1:]
            warm_prices = week_plan.prices[:, 1:]
        state, record = roll_forward(model, state, demand_path[state.week],
                                     week_plan.orders)
        records.append(record)
    return records, state
