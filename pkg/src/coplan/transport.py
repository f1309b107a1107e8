"""Parameterized transportation LPs behind the retailer and supplier utilities.

The solver is a primal transportation simplex on the balanced tableau with
Bland's pivoting rule, so optima (and the flow matrices reported for tied
optima) are reproducible across runs.  Dual prices are recovered from the
final basis tree and normalized against a free-disposal dummy column, which
makes them valid shadow prices for the inequality-form problem:

    minimize    sum_ij c_ij v_ij
    subject to  sum_j v_ij <= row_bounds[i]        (row duals <= 0)
                sum_i v_ij >= col_requirements[j]  (column duals >= 0)
                v >= 0

An optional virtual slack source with a per-unit penalty makes short problems
feasible (lost-sales style).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InfeasibleError, ParameterError

# Pivot tolerance: toy data is integral, random suites use costs O(10) and
# quantities O(100), so absolute tolerances are safe at this scale.
_TOL = 1e-9
_EPS = 1e-12


def _as_vector(x, name):
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ParameterError(f"{name} contains non-finite entries")
    return v


def as_plan(x, dim=None):
    """Validate a supply plan: a one-dimensional nonnegative float vector."""
    v = _as_vector(x, "plan")
    if dim is not None and v.size != dim:
        raise DimensionError(f"plan has {v.size} entries, expected {dim}")
    if np.any(v < -_TOL):
        raise ParameterError("plan entries must be nonnegative")
    return np.maximum(v, 0.0)


@dataclass(frozen=True)
class TransportSolution:
    """Optimal flow with duals for one transportation instance."""

    flow: np.ndarray          # (rows, cols) flow on the real arcs
    objective: float          # total cost, slack-arc penalties included
    row_duals: np.ndarray     # shadow price of each row bound (<= 0)
    col_duals: np.ndarray     # shadow price of each column requirement (>= 0)
    slack_flow: np.ndarray    # per-column units drawn from the virtual slack source
    dual_objective: float = field(default=0.0, repr=False)
    status: str = "optimal"


def _northwest_corner(supply, demand):
    """Initial basic feasible solution with exactly m + n - 1 basic cells."""
    m, n = supply.size, demand.size
    flow = np.zeros((m, n))
    basic = np.zeros((m, n), dtype=bool)
    s = supply.copy()
    d = demand.copy()
    i = j = 0
    while True:
        q = min(s[i], d[j])
        flow[i, j] = q
        basic[i, j] = True
        s[i] -= q
        d[j] -= q
        if i == m - 1 and j == n - 1:
            break
        if s[i] <= d[j] and i < m - 1:
            i += 1
        else:
            j += 1
    return flow, basic


def _duals_from_basis(costs, basic):
    """Solve u_i + w_j = c_ij over the basis spanning tree (u[0] = 0)."""
    m, n = costs.shape
    u = np.full(m, np.nan)
    w = np.full(n, np.nan)
    u[0] = 0.0
    rows_by_col = [np.nonzero(basic[:, j])[0] for j in range(n)]
    cols_by_row = [np.nonzero(basic[i, :])[0] for i in range(m)]
    stack = [(True, 0)]
    while stack:
        is_row, idx = stack.pop()
        if is_row:
            for j in cols_by_row[idx]:
                if np.isnan(w[j]):
                    w[j] = costs[idx, j] - u[idx]
                    stack.append((False, j))
        else:
            for i in rows_by_col[idx]:
                if np.isnan(u[i]):
                    u[i] = costs[i, idx] - w[idx]
                    stack.append((True, i))
    return u, w


def _basis_cycle(basic, enter):
    """Unique alternating cycle closed by adding `enter` to the basis tree."""
    m, n = basic.shape
    ei, ej = enter
    # Breadth-first search in the bipartite basis graph from row ei to col ej.
    parent = {}
    start = ("r", ei)
    goal = ("c", ej)
    frontier = [start]
    parent[start] = None
    while frontier:
        nxt = []
        for node in frontier:
            kind, idx = node
            if kind == "r":
                for j in np.nonzero(basic[idx, :])[0]:
                    child = ("c", int(j))
                    if child not in parent:
                        parent[child] = node
                        nxt.append(child)
            else:
                for i in np.nonzero(basic[:, idx])[0]:
                    child = ("r", int(i))
                    if child not in parent:
                        parent[child] = node
                        nxt.append(child)
        if goal in parent:
            break
        frontier = nxt
    if goal not in parent:
        raise ArithmeticError("basis tree is disconnected")  # pragma: no cover
    nodes = []
    cur = goal
    while cur is not None:
        nodes.append(cur)
        cur = parent[cur]
    nodes.reverse()  # row ei ... col ej
    cells = []
    for a, b in zip(nodes[:-1], nodes[1:]):
        if a[0] == "r":
            cells.append((a[1], b[1]))
        else:
            cells.append((b[1], a[1]))
    return [enter] + cells


def _optimize(costs, flow, basic, max_pivots):
    m, n = costs.shape
    for _ in range(max_pivots):
        u, w = _duals_from_basis(costs, basic)
        reduced = costs - u[:, None] - w[None, :]
        reduced[basic] = 0.0
        # Bland's rule: first improving cell in row-major order.
        improving = np.argwhere(reduced < -_TOL)
        if improving.size == 0:
            return u, w
        ei, ej = (int(improving[0][0]), int(improving[0][1]))
        cycle = _basis_cycle(basic, (ei, ej))
        minus = cycle[1::2]
        theta = min(flow[c] for c in minus)
        # Leaving cell: lowest row-major index among the ties (anti-cycling).
        leave = min(c for c in minus if flow[c] <= theta + _EPS)
        for k, c in enumerate(cycle):
            flow[c] = flow[c] + theta if k % 2 == 0 else flow[c] - theta
        flow[leave] = 0.0
        basic[ei, ej] = True
        basic[leave] = False
    raise ArithmeticError("transportation simplex exceeded its pivot budget")


def solve_transport(costs, row_bounds, col_requirements, slack_penalty=None,
                    max_pivots=20000):
    """Minimum-cost flow from bounded rows to columns with fixed requirements.

    When total row capacity falls short of the total requirement, a virtual
    slack source priced at ``slack_penalty`` per unit absorbs the shortfall;
    without a penalty the short problem raises :class:`InfeasibleError`.
    Ties among optimal flows are broken by row-major arc order.
    """
    c = np.asarray(costs, dtype=float)
    if c.ndim != 2:
        raise DimensionError(f"costs must be a matrix, got shape {c.shape}")
    rb = _as_vector(row_bounds, "row_bounds")
    cq = _as_vector(col_requirements, "col_requirements")
    rows, cols = c.shape
    if rb.size != rows or cq.size != cols:
        raise DimensionError(
            f"costs {c.shape} inconsistent with bounds ({rb.size},) / requirements ({cq.size},)"
        )
    if np.any(rb < 0) or np.any(cq < 0):
        raise ParameterError("bounds and requirements must be nonnegative")
    if not np.all(np.isfinite(c)):
        raise ParameterError("costs must be finite")

    total_bound = float(rb.sum())
    total_req = float(cq.sum())
    use_slack = slack_penalty is not None
    if not use_slack and total_bound < total_req - _TOL * (1.0 + total_req):
        raise InfeasibleError(
            f"requirements total {total_req} exceed capacity {total_bound} and no slack penalty is set"
        )

    # Balanced tableau: optional slack row, then a free-disposal dummy column.
    tab_costs = c
    supply = rb
    if use_slack:
        tab_costs = np.vstack([tab_costs, np.full(cols, float(slack_penalty))])
        supply = np.append(supply, total_req)
    surplus = float(supply.sum() - total_req)
    if surplus < 0:
        surplus = 0.0
    tab_costs = np.hstack([tab_costs, np.zeros((tab_costs.shape[0], 1))])
    demand = np.append(cq, surplus)

    flow, basic = _northwest_corner(supply, demand)
    u, w = _optimize(tab_costs, flow, basic, max_pivots)

    # Normalize duals so the dummy (disposal) column prices at zero; the
    # resulting row duals are <= 0 and column duals >= 0.
    shift = w[-1]
    u = u + shift
    w = w - shift

    real_flow = flow[:rows, :cols].copy()
    real_flow[np.abs(real_flow) < _EPS] = 0.0
    slack_flow = flow[rows, :cols].copy() if use_slack else np.zeros(cols)
    slack_flow[np.abs(slack_flow) < _EPS] = 0.0
    objective = float(np.sum(tab_costs[:, :cols] * flow[:, :cols]))
    row_duals = np.minimum(u[:rows], 0.0)
    col_duals = np.maximum(w[:cols], 0.0)
    dual_objective = float(rb @ row_duals + cq @ col_duals)
    if use_slack:
        # The slack row contributes its own capacity term; it is priced at the
        # (nonpositive) dual of the slack bound, zero whenever slack is unused.
        dual_objective += float(total_req * min(u[rows], 0.0))
    return TransportSolution(
        flow=real_flow,
        objective=objective,
        row_duals=row_duals,
        col_duals=col_duals,
        slack_flow=slack_flow,
        dual_objective=dual_objective,
    )


@dataclass(frozen=True)
class RetailerSpec:
    """Retailer private data: demand per outbound node, inbound-to-outbound
    arc costs, gross profit per unit of demand, and the lost-sales penalty."""

    demand: np.ndarray            # (J,) units per outbound node
    arc_costs: np.ndarray         # (I, J) $/unit inbound -> outbound
    gross_profit: np.ndarray      # (J,) $/unit of demand served
    lost_sales_penalty: float = 1000.0

    def __post_init__(self):
        d = _as_vector(self.demand, "demand")
        g = _as_vector(self.gross_profit, "gross_profit")
        c = np.asarray(self.arc_costs, dtype=float)
        if c.ndim != 2:
            raise DimensionError(f"arc_costs must be a matrix, got shape {c.shape}")
        if c.shape[1] != d.size or g.size != d.size:
            raise DimensionError(
                f"arc_costs {c.shape}, demand ({d.size},), gross_profit ({g.size},) disagree"
            )
        if np.any(d < 0) or np.any(c < 0):
            raise ParameterError("demand and arc costs must be nonnegative")
        if c.size and self.lost_sales_penalty <= float(c.max()):
            raise ParameterError("lost_sales_penalty must exceed every arc cost")
        object.__setattr__(self, "demand", d)
        object.__setattr__(self, "arc_costs", c)
        object.__setattr__(self, "gross_profit", g)
        object.__setattr__(self, "lost_sales_penalty", float(self.lost_sales_penalty))

    @property
    def n_inbound(self):
        return self.arc_costs.shape[0]

    @property
    def gross_profit_total(self):
        return float(self.gross_profit @ self.demand)


@dataclass(frozen=True)
class SupplierSpec:
    """Supplier private data: source capacities, source-to-inbound arc costs,
    and gross profit per unit supplied to each inbound node."""

    capacities: np.ndarray        # (K,) units per source node
    arc_costs: np.ndarray         # (K, I) $/unit source -> inbound
    gross_profit: np.ndarray      # (I,) $/unit supplied

    def __post_init__(self):
        s = _as_vector(self.capacities, "capacities")
        g = _as_vector(self.gross_profit, "gross_profit")
        c = np.asarray(self.arc_costs, dtype=float)
        if c.ndim != 2:
            raise DimensionError(f"arc_costs must be a matrix, got shape {c.shape}")
        if c.shape[0] != s.size or c.shape[1] != g.size:
            raise DimensionError(
                f"arc_costs {c.shape}, capacities ({s.size},), gross_profit ({g.size},) disagree"
            )
        if np.any(s < 0) or np.any(c < 0):
            raise ParameterError("capacities and arc costs must be nonnegative")
        object.__setattr__(self, "capacities", s)
        object.__setattr__(self, "arc_costs", c)
        object.__setattr__(self, "gross_profit", g)

    @property
    def n_inbound(self):
        return self.arc_costs.shape[1]

    @property
    def total_capacity(self):
        return float(self.capacities.sum())


@dataclass(frozen=True)
class UtilityEvaluation:
    """Utility value at a plan together with the transport solution behind it
    and a supergradient read off the LP duals."""

    value: float
    supergradient: np.ndarray
    transport: TransportSolution
    kind: str  # "retailer" | "supplier"


def retailer_utility(spec, plan):
    """Gross profit on demand minus the optimal inbound-to-outbound transport
    cost when inbound node i holds at most ``plan[i]`` units.  Unmet demand is
    lost at the spec's penalty, so the value is finite for every plan >= 0."""
    x = as_plan(plan, spec.n_inbound)
    sol = solve_transport(
        spec.arc_costs,
        row_bounds=x,
        col_requirements=spec.demand,
        slack_penalty=spec.lost_sales_penalty,
    )
    value = spec.gross_profit_total - sol.objective
    # One more unit of supply at node i is worth the (nonnegative) shadow
    # price of its capacity constraint.
    grad = -sol.row_duals
    return UtilityEvaluation(value=value, supergradient=grad, transport=sol, kind="retailer")


def supplier_utility(spec, plan):
    """Gross profit on the supplied plan minus the optimal source-to-inbound
    transport cost.  Raises :class:`InfeasibleError` when the plan exceeds
    total source capacity."""
    x = as_plan(plan, spec.n_inbound)
    if x.sum() > spec.total_capacity + _TOL * (1.0 + spec.total_capacity):
        raise InfeasibleError(
            f"plan total {x.sum():.6f} exceeds supplier capacity {spec.total_capacity:.6f}"
        )
    sol = solve_transport(spec.arc_costs, row_bounds=spec.capacities, col_requirements=x)
    value = float(spec.gross_profit @ x) - sol.objective
    grad = spec.gross_profit - sol.col_duals
    return UtilityEvaluation(value=value, supergradient=grad, transport=sol, kind="supplier")


def utility_supergradient(evaluation):
    """Supergradient of the evaluated utility with respect to the plan."""
    return evaluation.supergradient
