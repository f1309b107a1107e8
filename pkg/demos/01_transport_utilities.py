"""Agent utilities as transportation LPs.

Both sides of the trade value a supply plan x (units per inbound node) by
gross profit minus an optimal transport cost: the retailer routes inventory
from inbound nodes to demand regions, the supplier routes production from its
sources to the inbound nodes.  Dual prices of the plan-coupled constraints
give each side's marginal value for one more unit at a node.
"""

import numpy as np

from coplan import (
    RetailerSpec,
    SupplierSpec,
    retailer_utility,
    solve_transport,
    supplier_utility,
)

retailer = RetailerSpec(
    demand=[40, 60],
    arc_costs=[[1, 5], [2, 3]],      # inbound node x demand region, $/unit
    gross_profit=[20, 20],
    lost_sales_penalty=1000,
)
supplier = SupplierSpec(
    capacities=[100, 10],
    arc_costs=[[10, 5], [1, 2]],     # source x inbound node, $/unit
    gross_profit=[20, 20],
)

print("A bare transport solve (the retailer's routing at its preferred order):")
sol = solve_transport(retailer.arc_costs, row_bounds=[40, 60],
                      col_requirements=retailer.demand,
                      slack_penalty=retailer.lost_sales_penalty)
print(f"  cost ${sol.objective:.2f}, flows:\n{sol.flow}")
print(f"  duals: rows {sol.row_duals}, cols {sol.col_duals}\n")

for plan in ([40.0, 60.0], [10.0, 90.0], [0.0, 0.0]):
    ev_r = retailer_utility(retailer, plan)
    print(f"retailer at x={plan}: utility ${ev_r.value:,.2f}, "
          f"marginal value of supply {np.round(ev_r.supergradient, 3)}")

for plan in ([40.0, 60.0], [10.0, 90.0]):
    ev_s = supplier_utility(supplier, plan)
    print(f"supplier at x={plan}: utility ${ev_s.value:,.2f}, "
          f"marginal value {np.round(ev_s.supergradient, 3)}")

print("\nNote the trade-off: the order (40, 60) is cheapest for the retailer "
      "($220) but expensive for the supplier ($610); (10, 90) costs the "
      "retailer $30 more and saves the supplier $150.")
