"""Chance-constrained dispatch on a four-bus network.

Two generators (buses 1 and 2, costs 1 and 10) serve two random loads
(buses 3 and 4) through five lines. Generation and line limits need
only hold jointly with probability alpha; violations are priced by how
often they may occur, not by how large they are, so cheaper dispatch
trades against the chance of running outside the limits.

Two event logics are compared on the same samples:

  joint     -- every limit holds (And over all twelve atoms)
  alternate -- all generator limits hold or all line limits hold
               (Or of two Ands), a weaker requirement

The weaker logic can only lower the optimal cost, which shows in the
Pareto sweep over alpha.

Branch orientation note: flows are signed along the arrows 1->2, 1->3,
2->3, 2->4, 3->4. Flipping any arrow negates that flow variable and
renames nothing else; limits are symmetric, so objectives are
unaffected. The orientation here is one consistent reading of the
network diagram.
"""

import csv
import pathlib

from ..expressions import ParamRef
from ..finprog import solve
from ..measures import And, Atom, Or, reformulate_event
from ..model import Model
from .. import domains, transcription

COST = (1.0, 10.0)
GEN_LIMIT = 10.0
BRANCH_LIMIT = 4.0
# hard equipment range; the chance constraint governs the normal limits,
# this box is the never-exceed rating that also keeps big-M honest
EQUIP_CAP = 15.0
BIG_M = 20.0
LOAD_MEAN = (3.0, 5.0)
LOAD_VAR = (2.0, 2.0)

# branch k runs from FROM_BUS[k] to TO_BUS[k]
FROM_BUS = (1, 1, 2, 2, 3)
TO_BUS = (2, 3, 3, 4, 4)


def build_model(logic, alpha, n_samples=20, seed=11):
    """Dispatch model under one event logic. Returns (model, refs)."""
    m = Model()
    xi = m.random_parameter("xi", domains.MvNormal(LOAD_MEAN, ((LOAD_VAR[0], 0.0), (0.0, LOAD_VAR[1]))))
    m.generate_supports(xi, "mc-sample", n_samples, seed=seed)

    gens = [m.add_variable(f"yg{i + 1}", deps=(xi,), lb=0.0, ub=EQUIP_CAP)
            for i in range(2)]
    branches = [m.add_variable(f"yb{k + 1}", deps=(xi,), lb=-EQUIP_CAP, ub=EQUIP_CAP)
                for k in range(5)]
    xr = ParamRef(m._h(xi))

    # nodal balance: generation plus inflow equals outflow plus load
    load = {3: xr[0], 4: xr[1]}
    for bus in (1, 2, 3, 4):
        expr = 0.0
        if bus <= 2:
            expr = expr + gens[bus - 1]
        for k in range(5):
            if TO_BUS[k] == bus:
                expr = expr + branches[k]
            if FROM_BUS[k] == bus:
                expr = expr - branches[k]
        if bus in load:
            expr = expr - load[bus]
        m.add_constraint(expr, "==", 0.0, label=f"balance.{bus}")

    # per-atom big-M from the equipment box: worst reachable lhs minus rhs
    m_gen = EQUIP_CAP - GEN_LIMIT
    m_branch = EQUIP_CAP - BRANCH_LIMIT
    gen_atoms = [Atom(g, "<=", GEN_LIMIT, big_m=m_gen) for g in gens]
    branch_atoms = []
    for b in branches:
        branch_atoms.append(Atom(b, "<=", BRANCH_LIMIT, big_m=m_branch))
        branch_atoms.append(Atom(-b, "<=", BRANCH_LIMIT, big_m=m_branch))
    if logic == "joint":
        tree = And(tuple(gen_atoms + branch_atoms))
    elif logic == "alternate":
        tree = Or((And(tuple(gen_atoms)), And(tuple(branch_atoms))))
    else:
        raise ValueError(f"unknown logic '{logic}'")
    ev = reformulate_event(m, tree, xi, alpha, direction="at-least", big_m=BIG_M)

    m.set_objective("min", m.expectation(COST[0] * gens[0] + COST[1] * gens[1], xi))
    refs = {"xi": xi, "gens": gens, "branches": branches, "tree": tree, "event": ev}
    return m, refs


def solve_variant(logic, alpha, n_samples=20, seed=11, max_nodes=20000):
    """Solve one (logic, alpha) point; returns (solution, model, refs, tmap)."""
    model, refs = build_model(logic, alpha, n_samples=n_samples, seed=seed)
    prog, tmap = transcription.transcribe(model)
    # the alternate logic carries three binaries per sample
    sol = solve(prog, discrete_cap=3 * n_samples, max_nodes=max_nodes)
    return sol, model, refs, tmap


def run(out=None, n_samples=20, seed=11,
        alphas=(0.80, 0.85, 0.90, 0.95, 0.99), max_nodes=20000):
    """Pareto sweep over alpha for both logics; returns the report dict."""
    rows = []
    report = {"n_samples": n_samples, "seed": seed, "alphas": list(alphas),
              "objective": {}, "realized": {}, "status": {}, "files": []}
    for logic in ("joint", "alternate"):
        for alpha in alphas:
            sol, model, refs, tmap = solve_variant(
                logic, alpha, n_samples=n_samples, seed=seed, max_nodes=max_nodes)
            realized = transcription.event_fraction(
                tmap, sol, refs["tree"], refs["xi"])
            rows.append((alpha, logic, sol.objective, realized))
            report["objective"][(logic, alpha)] = sol.objective
            report["realized"][(logic, alpha)] = realized
            report["status"][(logic, alpha)] = sol.status
    if out is not None:
        path = pathlib.Path(out) / "sopf_pareto.csv"
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["alpha", "logic", "objective", "realized_probability"])
            for alpha, logic, obj, realized in rows:
                w.writerow([f"{alpha:.12g}", logic, f"{obj:.12g}",
                            f"{realized:.12g}"])
        report["files"].append(str(path))
    return report
