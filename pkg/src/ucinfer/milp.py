"""Mixed-integer LP over the built-in simplex: best-bound branch and bound.

Branching picks the most fractional binary (ties to the lowest index);
the node queue is ordered by (parent LP bound, insertion counter), so
runs are fully deterministic.  ``gap`` is an absolute objective gap: the
solver may prune any node whose relaxation bound is within ``gap`` of
the incumbent, and the reported ``MilpSolution.gap`` is guaranteed to be
at most the requested value on an ``optimal`` exit.
"""

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import LpValidationError
from .lp import EQ, GE, LE, LinearProgram, LpSolution, solve_lp, validate_lp


@dataclass(frozen=True)
class Milp:
    lp: LinearProgram
    binary: np.ndarray          # sorted unique indices of binary variables
    crash: np.ndarray | None = None   # per-row basis-opening hint


@dataclass
class MilpSolution:
    status: str                 # optimal | infeasible | node_limit
    primal: np.ndarray | None
    objective: float
    nodes: int                  # LP relaxations solved
    gap: float


def validate_milp(m: Milp) -> None:
    validate_lp(m.lp)
    if m.binary.ndim != 1:
        raise LpValidationError("binary index array must be 1-D")
    if len(m.binary) != len(np.unique(m.binary)):
        raise LpValidationError("binary indices contain duplicates")
    if np.any(m.binary < 0) or np.any(m.binary >= m.lp.n_vars):
        raise LpValidationError("binary index out of range")
    for j in m.binary:
        if m.lp.lo[j] < -1e-12 or m.lp.hi[j] > 1.0 + 1e-12:
            raise LpValidationError(
                f"binary variable {j} has bounds outside [0, 1]: "
                f"[{m.lp.lo[j]}, {m.lp.hi[j]}]")


def _relax(lp: LinearProgram, lo, hi) -> LinearProgram:
    return LinearProgram(c=lp.c, A=lp.A, sense=lp.sense, b=lp.b,
                         lo=lo, hi=hi, var_names=lp.var_names,
                         row_names=lp.row_names)


def solve_milp(milp: Milp, tol_int: float = 1e-6, gap: float = 1e-6,
               node_limit: int = 100_000, tol_feas: float = 1e-7,
               kernel=None, log=None, heuristic=None) -> MilpSolution:
    """Best-bound branch and bound.

    ``log``, when a list, receives one ``(nodes, bound, incumbent)``
    tuple per explored node (used by the monotonicity tests).

    ``heuristic``, when given, maps the fractional root relaxation
    primal to a candidate assignment for the binary variables (or
    ``None``); a feasible candidate seeds the incumbent and tightens
    pruning.  It never affects which solution is finally optimal.
    """
    validate_milp(milp)
    lp = milp.lp
    binary = milp.binary

    ub = np.inf
    inc = None
    pruned_lb = np.inf          # tightest bound discarded by the gap rule
    nodes = 0
    counter = 0
    heap = [(-np.inf, counter, lp.lo.copy(), lp.hi.copy())]

    def lp_solve(lo, hi) -> LpSolution:
        return solve_lp(_relax(lp, lo, hi), tol_feas=tol_feas, kernel=kernel,
                        crash=milp.crash)

    def try_assignment(lo, hi, values) -> None:
        nonlocal ub, inc, nodes
        flo, fhi = lo.copy(), hi.copy()
        flo[binary] = values
        fhi[binary] = values
        cand = lp_solve(flo, fhi)
        nodes += 1
        if cand.status == "optimal" and cand.objective < ub:
            ub = cand.objective
            inc = cand.primal.copy()
            inc[binary] = np.round(inc[binary])

    while heap:
        bound, _, lo, hi = heapq.heappop(heap)
        if bound >= ub - gap:
            pruned_lb = min(pruned_lb, bound)
            continue
        if nodes >= node_limit:
            heapq.heappush(heap, (bound, counter + 1, lo, hi))
            lb = min([bound] + [e[0] for e in heap] + [pruned_lb, ub])
            return MilpSolution("node_limit", inc,
                                ub if inc is not None else np.inf,
                                nodes, float(ub - lb))
        sol = lp_solve(lo, hi)
        nodes += 1
        if log is not None:
            log.append((nodes, bound, ub))
        if sol.status == "unbounded":
            raise LpValidationError(
                "LP relaxation is unbounded; add finite bounds")
        if sol.status != "optimal":
            continue            # infeasible child
        if sol.objective >= ub - gap:
            pruned_lb = min(pruned_lb, sol.objective)
            continue
        x = sol.primal
        frac = np.abs(x[binary] - np.round(x[binary]))
        if frac.size == 0 or np.max(frac) <= tol_int:
            # integral: refit with binaries pinned for an exact vertex
            flo, fhi = lo.copy(), hi.copy()
            flo[binary] = np.round(x[binary])
            fhi[binary] = flo[binary]
            fixed = lp_solve(flo, fhi)
            cand = fixed if fixed.status == "optimal" else sol
            if cand.objective < ub:
                ub = cand.objective
                inc = cand.primal.copy()
                inc[binary] = np.round(inc[binary])
            continue
        if nodes == 1:
            if heuristic is not None:
                values = heuristic(x)
                if values is not None:
                    try_assignment(lo, hi,
                                   np.asarray(values, dtype=np.float64))
            if np.isfinite(ub):
                # reduced-cost fixing: a nonbasic binary whose reduced
                # cost alone pushes the root bound past the incumbent
                # can be pinned to its bound in the whole tree
                slackroom = (ub - gap) - sol.objective
                rc = sol.reduced_costs
                for jb in binary:
                    if x[jb] <= tol_int and rc[jb] > slackroom:
                        hi[jb] = 0.0
                    elif x[jb] >= 1.0 - tol_int and -rc[jb] > slackroom:
                        lo[jb] = 1.0
        # most fractional binary: largest distance from integrality,
        # ties resolved to the lowest variable index by argmax
        score = 0.5 - np.abs(frac - 0.5)
        jb = int(np.argmax(score))
        j = int(binary[jb])
        for branch_hi in (0.0, 1.0):
            clo, chi = lo.copy(), hi.copy()
            if branch_hi == 0.0:
                chi[j] = 0.0
            else:
                clo[j] = 1.0
            counter += 1
            heapq.heappush(heap, (sol.objective, counter, clo, chi))

    if inc is None:
        return MilpSolution("infeasible", None, np.nan, nodes, np.nan)
    lb = min(pruned_lb, ub)
    return MilpSolution("optimal", inc, float(ub), nodes,
                        float(max(0.0, ub - lb)))


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _lp_term(coef: float, name: str) -> str:
    if coef >= 0:
        return f"+ {_fmt(coef)} {name}"
    return f"- {_fmt(-coef)} {name}"


def export_lp_file(milp: Milp, path) -> None:
    """Write the model in CPLEX LP format.

    Every variable appears in the objective (zero coefficients
    included), so the exported objective term count always equals the
    variable count.  Bounds are written explicitly for every variable.
    """
    validate_milp(milp)
    lp = milp.lp
    names = list(lp.var_names) if lp.var_names else [
        f"x{j}" for j in range(lp.n_vars)]
    rnames = list(lp.row_names) if lp.row_names else [
        f"c{i}" for i in range(lp.n_rows)]
    out = ["\\ unit-commitment model export", "Minimize"]
    terms = " ".join(_lp_term(lp.c[j], names[j]) for j in range(lp.n_vars))
    out.append(f" obj: {terms}")
    if lp.n_rows:
        out.append("Subject To")
        op = {LE: "<=", GE: ">=", EQ: "="}
        for i in range(lp.n_rows):
            nz = np.nonzero(lp.A[i])[0]
            if nz.size == 0:
                # constant row: keep it visible with an explicit zero term
                row = f"+ 0 {names[0]}"
            else:
                row = " ".join(_lp_term(lp.A[i, j], names[j]) for j in nz)
            out.append(f" {rnames[i]}: {row} {op[int(lp.sense[i])]} "
                       f"{_fmt(lp.b[i])}")
    out.append("Bounds")
    for j in range(lp.n_vars):
        l, h = lp.lo[j], lp.hi[j]
        if not np.isfinite(l) and not np.isfinite(h):
            out.append(f" {names[j]} free")
        elif l == h:
            out.append(f" {names[j]} = {_fmt(l)}")
        else:
            left = "-infinity" if not np.isfinite(l) else _fmt(l)
            right = "+infinity" if not np.isfinite(h) else _fmt(h)
            out.append(f" {left} <= {names[j]} <= {right}")
    if len(milp.binary):
        out.append("Binaries")
        out.append(" " + " ".join(names[int(j)] for j in milp.binary))
    out.append("End")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(out) + "\n")
