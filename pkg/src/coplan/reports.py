"""Scenario runner: execute the requested analyses and emit both a
machine-readable document (full precision, byte-stable) and a human table.

Analyses and what they add to the report:

  jit        standalone order plan, both sides' transport costs and utilities
  firstbest  coordinated plan (centralized LP, consensus, or consensus over
             the wire protocol, per the scenario mode) and the gain
  vcg        externality transfer with the activity fee, surplus split,
             fee-free budget diagnosis, acceptance
  menu       priced plan menu and the supplier's dominant-strategy choice
  dynamic    weekly rolling-horizon ledger with cost-benefit transfers

Dependencies are computed as needed but only requested sections are emitted.
Settlement identities are re-verified before the report is returned.
"""

import json
from dataclasses import dataclass, replace

import numpy as np

from ._qp import project_capped
from .consensus import RetailerAgent, SupplierAgent, run_consensus
from .dynamic import simulate
from .errors import ParameterError
from .mechanism import (
    budget_balance_check,
    build_menu,
    default_menu_plans,
    efficient_plan,
    standalone_plans,
    supplier_choose,
    vcg_transfers,
)
from .protocol import AgentServer, RemoteAgent
from .scenario import ANALYSES
from .transport import retailer_utility, supplier_utility


@dataclass(frozen=True)
class Report:
    machine: dict
    text: str

    def to_json(self):
        """Canonical machine-readable form: full float precision, sorted keys,
        byte-identical for identical scenario and flags."""
        return json.dumps(self.machine, sort_keys=True, separators=(",", ":"),
                          allow_nan=False) + "\n"


def run(scenario, analyses=ANALYSES, trace=None, seed=None):
    requested = list(analyses)
    unknown = set(requested) - set(ANALYSES)
    if unknown:
        raise ParameterError(f"unknown analyses {sorted(unknown)}")
    needed = set(requested)
    if "menu" in needed or "vcg" in needed:
        needed.update(("jit", "firstbest"))
    if "firstbest" in needed:
        needed.add("jit")

    machine = {"scenario": scenario.name, "mode": scenario.mode,
               "analyses": sorted(requested)}
    if seed is not None:
        machine["seed"] = int(seed)
    lines = [f"Scenario: {scenario.name} (mode: {scenario.mode})"]

    sections = {}
    if "jit" in needed:
        payload, rendered, status_quo = _run_jit(scenario)
        sections["jit"] = (payload, rendered)
    if "firstbest" in needed:
        fb_payload, rendered, plan = _run_firstbest(scenario, status_quo,
                                                    sections["jit"][0], trace)
        sections["firstbest"] = (fb_payload, rendered)
    if "vcg" in needed:
        sections["vcg"] = _run_vcg(scenario, status_quo, plan)
    if "menu" in needed:
        sections["menu"] = _run_menu(scenario, status_quo, plan)
    if "dynamic" in needed:
        sections["dynamic"] = _run_dynamic(scenario)

    for name in ANALYSES:
        if name in requested:
            payload, rendered = sections[name]
            machine[name] = payload
            lines.extend(rendered)
    return Report(machine=machine, text="\n".join(lines) + "\n")


def _plan_list(plan):
    return [float(v) for v in np.asarray(plan, dtype=float)]


def _fmt_plan(plan):
    return "[" + ", ".join(f"{v:.2f}" for v in plan) + "]"


def _run_jit(scenario):
    status_quo = standalone_plans(scenario.retailer, scenario.supplier)
    ev_r = retailer_utility(scenario.retailer, status_quo.retailer_plan)
    ev_s = supplier_utility(scenario.supplier, status_quo.supplier_plan)
    payload = {
        "retailer_plan": _plan_list(status_quo.retailer_plan),
        "supplier_plan": _plan_list(status_quo.supplier_plan),
        "retailer_cost": ev_r.transport.objective,
        "supplier_cost": ev_s.transport.objective,
        "total_cost": ev_r.transport.objective + ev_s.transport.objective,
        "retailer_utility": ev_r.value,
        "supplier_utility": ev_s.value,
    }
    rendered = [
        "== Standalone (JIT) ==",
        f"retailer order plan     : {_fmt_plan(status_quo.retailer_plan)}",
        f"retailer transport cost : ${ev_r.transport.objective:,.2f}",
        f"supplier transport cost : ${ev_s.transport.objective:,.2f}",
        f"total supply chain cost : ${payload['total_cost']:,.2f}",
        f"retailer utility        : ${ev_r.value:,.2f}",
        f"supplier utility        : ${ev_s.value:,.2f}",
    ]
    return payload, rendered, status_quo


def _coordinate(scenario, status_quo, trace):
    """First-best plan via the scenario's coordination mode."""
    retailer, supplier = scenario.retailer, scenario.supplier
    cap = min(float(retailer.demand.sum()), supplier.total_capacity)
    cfg = scenario.consensus
    if cfg.initial_plan is None:
        cfg = replace(cfg, initial_plan=status_quo.retailer_plan)
    if scenario.mode == "cpp":
        result = run_consensus([RetailerAgent(retailer), SupplierAgent(supplier)],
                               cfg, trace=trace)
        return project_capped(result.plan, cap), result.iterations
    if cfg.adapt_rho:
        raise ParameterError(
            "adaptive penalty cannot run over the wire protocol: sessions pin rho "
            "at the handshake")
    # protocol: both agents behind the wire, coordinator sees plans only
    servers = [AgentServer(RetailerAgent(retailer)).start(),
               AgentServer(SupplierAgent(supplier)).start()]
    remotes = []
    try:
        remotes = [RemoteAgent(s.address, dim=retailer.n_inbound, rho=cfg.rho)
                   for s in servers]
        result = run_consensus(remotes, cfg, trace=trace)
    finally:
        for r in remotes:
            r.close()
        for s in servers:
            s.stop()
    return project_capped(result.plan, cap), result.iterations


def _run_firstbest(scenario, status_quo, jit_payload, trace):
    # true socially efficient plan; fee-induced allocation bias (if any)
    # shows up in the settlement section instead
    if scenario.mode == "centralized":
        plan = efficient_plan(scenario.retailer, scenario.supplier,
                              status_quo=status_quo)
        iterations = None
    else:
        plan, iterations = _coordinate(scenario, status_quo, trace)
    ev_r = retailer_utility(scenario.retailer, plan)
    ev_s = supplier_utility(scenario.supplier, plan)
    total_cost = ev_r.transport.objective + ev_s.transport.objective
    jit_cost = jit_payload["total_cost"]
    reduction = 100.0 * (jit_cost - total_cost) / jit_cost if jit_cost else 0.0
    gain = (ev_r.value + ev_s.value
            - jit_payload["retailer_utility"] - jit_payload["supplier_utility"])
    payload = {
        "plan": _plan_list(plan),
        "retailer_cost": ev_r.transport.objective,
        "supplier_cost": ev_s.transport.objective,
        "total_cost": total_cost,
        "joint_utility": ev_r.value + ev_s.value,
        "gain": gain,
        "cost_reduction_pct": reduction,
    }
    if iterations is not None:
        payload["consensus_iterations"] = iterations
    rendered = [
        "== First-best coordination ==",
        f"coordinated plan        : {_fmt_plan(plan)}",
        f"total supply chain cost : ${total_cost:,.2f} ({reduction:.2f}% below standalone)",
        f"joint utility           : ${payload['joint_utility']:,.2f}",
        f"coordination gain       : ${gain:,.2f}",
    ]
    return payload, rendered, plan


def _run_vcg(scenario, status_quo, plan):
    settled_plan = plan
    if scenario.fee.report_scale != 1.0 or scenario.fee.variant == "linear_deviation":
        # reported-utility bias moves the allocation itself
        method = "centralized" if scenario.mode == "centralized" else "cpp"
        settled_plan = efficient_plan(scenario.retailer, scenario.supplier,
                                      fee=scenario.fee, method=method,
                                      status_quo=status_quo,
                                      config=scenario.consensus)
    report = vcg_transfers(scenario.retailer, scenario.supplier, status_quo,
                           settled_plan, scenario.fee)
    report.verify()
    fee_free = vcg_transfers(scenario.retailer, scenario.supplier, status_quo, plan)
    fee_free.verify()
    diagnosis = budget_balance_check(fee_free)
    accepted = report.supplier_accepts
    if scenario.mode == "protocol":
        accepted = _offer_over_protocol(scenario, status_quo, report)
    payload = {
        "plan": _plan_list(report.plan),
        "plan_distorted_by_fee": bool(np.any(np.abs(settled_plan - plan) > 1e-7)),
        "transfer_supplier": report.transfer_supplier,
        "transfer_retailer": report.transfer_retailer,
        "fee_variant": scenario.fee.variant,
        "fee_term": report.fee_term,
        "gain": report.gain,
        "supplier_surplus": report.supplier_surplus,
        "retailer_surplus": report.retailer_surplus,
        "budget_sum_fee_free": diagnosis.total,
        "budget_regime": diagnosis.regime,
        "supplier_accepts": bool(accepted),
    }
    if not accepted:
        payload["settled_plan"] = _plan_list(status_quo.retailer_plan)
        payload["settled_transfer_supplier"] = 0.0
    rendered = [
        "== VCG settlement ==",
        f"supplier transfer       : ${report.transfer_supplier:,.2f}"
        f" (fee term ${report.fee_term:,.2f})",
        f"supplier surplus        : ${report.supplier_surplus:,.2f}",
        f"retailer surplus        : ${report.retailer_surplus:,.2f}",
        f"budget, fee-free        : ${diagnosis.total:,.2f} ({diagnosis.regime})",
        f"supplier accepts        : {'yes' if accepted else 'no (reverts to status quo)'}",
    ]
    return payload, rendered


def _offer_over_protocol(scenario, status_quo, report):
    reservation = supplier_utility(scenario.supplier, status_quo.supplier_plan).value
    server = AgentServer(SupplierAgent(scenario.supplier), reservation=reservation).start()
    try:
        remote = RemoteAgent(server.address, dim=scenario.retailer.n_inbound,
                             rho=scenario.consensus.rho)
        try:
            return remote.offer(report.plan, report.transfer_supplier)
        finally:
            remote.close()
    finally:
        server.stop()


def _run_menu(scenario, status_quo, plan):
    alpha = scenario.fee.alpha if scenario.fee.variant == "additive" else 0.0
    plans = scenario.menu_plans
    if plans is None:
        plans = default_menu_plans(status_quo.retailer_plan, plan)
    menu = build_menu(scenario.retailer, status_quo, plans, alpha=alpha)
    reservation = supplier_utility(scenario.supplier, status_quo.supplier_plan).value
    choice = supplier_choose(scenario.supplier, menu, reservation=reservation)
    u_sq = retailer_utility(scenario.retailer, status_quo.retailer_plan).value
    for menu_plan, fee in zip(menu.plans, menu.fees):
        want = u_sq - retailer_utility(scenario.retailer, menu_plan).value + alpha
        assert abs(fee - want) <= 1e-6, "menu pricing identity broken"
    payload = {
        "alpha": alpha,
        "options": [
            {
                "plan": _plan_list(p),
                "fee": float(f),
                "supplier_utility": None if not np.isfinite(v) else float(v),
                "net": None if not np.isfinite(n) else float(n),
                "utility_net_of_alpha": None if not np.isfinite(a) else float(a),
            }
            for p, f, v, n, a in zip(menu.plans, menu.fees, choice.option_values,
                                     choice.option_nets, choice.option_alpha_nets)
        ],
        "accepted": choice.accepted,
        "chosen_index": choice.index,
        "chosen_plan": None if choice.plan is None else _plan_list(choice.plan),
        "chosen_fee": choice.fee,
    }
    rendered = ["== Menu of contracts =="]
    for k, opt in enumerate(payload["options"]):
        value = "unfillable" if opt["net"] is None else f"nets ${opt['net']:,.2f}"
        rendered.append(
            f"option {k + 1}: plan {_fmt_plan(opt['plan'])} fee ${opt['fee']:,.2f} -> {value}")
    if choice.accepted:
        rendered.append(f"chosen: option {choice.index + 1} at fee ${choice.fee:,.2f}")
    else:
        rendered.append("chosen: none (declined)")
    return payload, rendered


def _run_dynamic(scenario):
    if scenario.dynamic is None:
        raise ParameterError("scenario has no dynamic block")
    settings = scenario.dynamic
    records, final = simulate(settings.model, settings.demand_path,
                              mode=settings.commitment, config=None,
                              on_hand=settings.initial_inventory)
    payload = {
        "commitment": settings.commitment,
        "weeks": [
            {
                "week": rec.week,
                "order": rec.order,
                "realized_demand": rec.realized_demand,
                "sales": rec.sales,
                "end_inventory": rec.end_inventory,
                "cbt": rec.cbt,
                "cumulative_cbt": rec.cumulative_cbt,
                "jit_orders": _plan_list(rec.jit_orders),
                "coordinated_orders": _plan_list(rec.coordinated_orders),
                "joint_total_jit": rec.joint_total_jit,
                "joint_total_plan": rec.joint_total_plan,
            }
            for rec in records
        ],
        "cumulative_cbt": final.cumulative_cbt,
    }
    rendered = ["== Dynamic (rolling horizon) =="]
    for rec in records:
        rendered.append(
            f"week {rec.week + 1}: order {rec.order:.2f}, demand {rec.realized_demand:.2f},"
            f" inventory {rec.end_inventory:.2f}, cbt ${rec.cbt:,.2f}")
    rendered.append(f"cumulative cost-benefit transfer: ${final.cumulative_cbt:,.2f}")
    return payload, rendered
