"""Security-constrained unit commitment as a MILP.

Decision variables per period t: dispatch g_tj, commitment v_tj,
start-up y_tj, shut-down z_tj (binary), bus angles theta_tn, line flows
f_te, and a non-negative load-shed slack per bus.  Constraint blocks:

- slack-bus pin            theta_{t, slack} = 0
- DC flow definition       f_te = B_e (theta_{t,from} - theta_{t,to})
- thermal limits           -beta_e Fbar_e <= f_te <= beta_e Fbar_e
- generation bounds        alpha_j Gmin_j v_tj <= g_tj <= alpha_j Gmax_j v_tj
- state transition         y_tj - z_tj = v_tj - v_{t-1,j}
- ramping (t = 1 uses the initial state; starts enter at Gmin, stops
  leave from Gmin)
- minimum up/down times    enforced once a full window fits the horizon
- nodal balance            sum_j g + shed - net outflow = demand

Shedding is priced at ``shed_penalty`` (default 1e4 per MWh) in the
objective; reported ``total_cost`` excludes that penalty term.
"""

from dataclasses import dataclass

import numpy as np

from .errors import UcInfeasibleError
from .lp import EQ, GE, LE, LpBuilder
from .milp import Milp, MilpSolution, solve_milp
from .system import UcInstance

SHED_PENALTY = 1.0e4


@dataclass(frozen=True)
class CostParams:
    marginal: np.ndarray        # (J,) cost per MWh
    startup: np.ndarray         # (J,) cost per start

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.marginal, self.startup])


@dataclass(frozen=True)
class Availability:
    gens: np.ndarray            # (J,) in {0, 1}, day-ahead outage draw
    lines: np.ndarray           # (E,) in {0, 1}


def full_availability(inst: UcInstance) -> Availability:
    return Availability(gens=np.ones(inst.n_gens),
                        lines=np.ones(inst.n_lines))


@dataclass
class Schedule:
    dispatch: np.ndarray        # (T, J)
    commitment: np.ndarray      # (T, J) int8
    startup: np.ndarray         # (T, J) int8
    shutdown: np.ndarray        # (T, J) int8
    angles: np.ndarray          # (T, N)
    flows: np.ndarray           # (T, E)
    shed: np.ndarray            # (T, N)
    total_cost: float           # generation + start-up cost, no penalty


class ScucIndex:
    """Column layout of the SCUC MILP: blocks g, v, y, z, theta, f, shed."""

    def __init__(self, T, J, N, E):
        self.T, self.J, self.N, self.E = T, J, N, E
        self.off_g = 0
        self.off_v = self.off_g + T * J
        self.off_y = self.off_v + T * J
        self.off_z = self.off_y + T * J
        self.off_th = self.off_z + T * J
        self.off_f = self.off_th + T * N
        self.off_shed = self.off_f + T * E
        self.n_vars = self.off_shed + T * N

    def g(self, t, j):
        return self.off_g + t * self.J + j

    def v(self, t, j):
        return self.off_v + t * self.J + j

    def y(self, t, j):
        return self.off_y + t * self.J + j

    def z(self, t, j):
        return self.off_z + t * self.J + j

    def th(self, t, n):
        return self.off_th + t * self.N + n

    def f(self, t, e):
        return self.off_f + t * self.E + e

    def shed(self, t, n):
        return self.off_shed + t * self.N + n


def build_scuc(inst: UcInstance, costs: CostParams, avail: Availability,
               demand: np.ndarray, shed_penalty: float = SHED_PENALTY):
    """Assemble the MILP; returns (Milp, ScucIndex)."""
    T, J, N, E = inst.horizon, inst.n_gens, inst.n_buses, inst.n_lines
    if demand.shape != (T, N):
        raise ValueError(f"demand has shape {demand.shape}, "
                         f"expected ({T}, {N})")
    if np.any(demand < 0):
        raise ValueError("demand must be non-negative")
    idx = ScucIndex(T, J, N, E)
    bld = LpBuilder()
    alpha = np.asarray(avail.gens, dtype=np.float64)
    beta = np.asarray(avail.lines, dtype=np.float64)

    for t in range(T):
        for j in range(J):
            gmax = alpha[j] * inst.generators[j].g_max
            bld.add_var(0.0, gmax, float(costs.marginal[j]),
                        name=f"g_t{t}_j{j}")
    for t in range(T):
        for j in range(J):
            bld.add_var(0.0, 1.0, 0.0, name=f"v_t{t}_j{j}")
    for t in range(T):
        for j in range(J):
            bld.add_var(0.0, 1.0, float(costs.startup[j]),
                        name=f"y_t{t}_j{j}")
    for t in range(T):
        for j in range(J):
            bld.add_var(0.0, 1.0, 0.0, name=f"z_t{t}_j{j}")
    for t in range(T):
        for n in range(N):
            bld.add_var(-np.inf, np.inf, 0.0, name=f"th_t{t}_n{n}")
    for t in range(T):
        for e in range(E):
            cap = beta[e] * inst.lines[e].thermal_limit
            bld.add_var(-cap, cap, 0.0, name=f"f_t{t}_e{e}")
    for t in range(T):
        for n in range(N):
            bld.add_var(0.0, float(demand[t, n]), float(shed_penalty),
                        name=f"shed_t{t}_n{n}")

    # slack-bus pin
    for t in range(T):
        bld.add_row([(idx.th(t, inst.slack_bus), 1.0)], EQ, 0.0,
                    name=f"slackpin_t{t}")
    # DC flow definition
    for t in range(T):
        for e, ln in enumerate(inst.lines):
            bld.add_row([(idx.f(t, e), 1.0),
                         (idx.th(t, ln.from_bus), -ln.susceptance),
                         (idx.th(t, ln.to_bus), ln.susceptance)],
                        EQ, 0.0, name=f"flowdef_t{t}_e{e}")
    # generation bounds tied to commitment
    for t in range(T):
        for j, g in enumerate(inst.generators):
            bld.add_row([(idx.g(t, j), 1.0),
                         (idx.v(t, j), -alpha[j] * g.g_max)],
                        LE, 0.0, name=f"gmax_t{t}_j{j}")
            bld.add_row([(idx.g(t, j), 1.0),
                         (idx.v(t, j), -alpha[j] * g.g_min)],
                        GE, 0.0, name=f"gmin_t{t}_j{j}")
    # state transition; a day-long outage voids the pre-day state, else an
    # initially-on unit forced to zero output could violate its own
    # shutdown ramp and make the whole day infeasible
    for t in range(T):
        for j, g in enumerate(inst.generators):
            coefs = [(idx.y(t, j), 1.0), (idx.z(t, j), -1.0),
                     (idx.v(t, j), -1.0)]
            if t == 0:
                bld.add_row(coefs, EQ, -alpha[j] * g.v_init,
                            name=f"trans_t{t}_j{j}")
            else:
                bld.add_row(coefs + [(idx.v(t - 1, j), 1.0)], EQ, 0.0,
                            name=f"trans_t{t}_j{j}")
    # ramping
    for t in range(T):
        for j, g in enumerate(inst.generators):
            if t == 0:
                bld.add_row([(idx.g(0, j), 1.0),
                             (idx.y(0, j), -g.g_min)],
                            LE, alpha[j] * (g.g_init + g.ramp_up * g.v_init),
                            name=f"rampup_t0_j{j}")
                bld.add_row([(idx.g(0, j), 1.0),
                             (idx.z(0, j), g.g_min)],
                            GE, alpha[j] * (g.g_init - g.ramp_down * g.v_init),
                            name=f"rampdn_t0_j{j}")
            else:
                bld.add_row([(idx.g(t, j), 1.0), (idx.g(t - 1, j), -1.0),
                             (idx.v(t - 1, j), -g.ramp_up),
                             (idx.y(t, j), -g.g_min)],
                            LE, 0.0, name=f"rampup_t{t}_j{j}")
                bld.add_row([(idx.g(t - 1, j), 1.0), (idx.g(t, j), -1.0),
                             (idx.v(t, j), -g.ramp_down),
                             (idx.z(t, j), -g.g_min)],
                            LE, 0.0, name=f"rampdn_t{t}_j{j}")
    # minimum up/down windows that fit the horizon (1-based t >= mu_j)
    for j, g in enumerate(inst.generators):
        for t in range(g.min_up - 1, T):
            coefs = [(idx.y(k, j), 1.0)
                     for k in range(t - g.min_up + 1, t + 1)]
            bld.add_row(coefs + [(idx.v(t, j), -1.0)], LE, 0.0,
                        name=f"minup_t{t}_j{j}")
        for t in range(g.min_down - 1, T):
            coefs = [(idx.z(k, j), 1.0)
                     for k in range(t - g.min_down + 1, t + 1)]
            bld.add_row(coefs + [(idx.v(t, j), 1.0)], LE, 1.0,
                        name=f"mindown_t{t}_j{j}")
    # nodal balance with shedding
    for t in range(T):
        for n in range(N):
            coefs = [(idx.g(t, j), 1.0)
                     for j in range(J) if inst.generators[j].bus == n]
            coefs.append((idx.shed(t, n), 1.0))
            for e, ln in enumerate(inst.lines):
                if ln.from_bus == n:
                    coefs.append((idx.f(t, e), -1.0))
                elif ln.to_bus == n:
                    coefs.append((idx.f(t, e), 1.0))
            bld.add_row(coefs, EQ, float(demand[t, n]),
                        name=f"balance_t{t}_n{n}")

    binary = np.arange(idx.off_v, idx.off_th, dtype=np.int64)
    lp = bld.build()
    # basis-opening hints: every balance row can start from its shed column
    crash = np.full(lp.n_rows, -1, dtype=np.int64)
    for i, nm in enumerate(lp.row_names):
        if nm.startswith("balance_t"):
            _, ts, nn = nm.split("_")
            crash[i] = idx.shed(int(ts[1:]), int(nn[1:]))
    return Milp(lp, binary, crash), idx


def _extract(inst: UcInstance, costs: CostParams, primal: np.ndarray,
             idx: ScucIndex) -> Schedule:
    T, J, N, E = idx.T, idx.J, idx.N, idx.E
    g = primal[idx.off_g:idx.off_v].reshape(T, J).copy()
    g[np.abs(g) < 1e-7] = 0.0
    v = np.round(primal[idx.off_v:idx.off_y].reshape(T, J)).astype(np.int8)
    y = np.round(primal[idx.off_y:idx.off_z].reshape(T, J)).astype(np.int8)
    z = np.round(primal[idx.off_z:idx.off_th].reshape(T, J)).astype(np.int8)
    th = primal[idx.off_th:idx.off_f].reshape(T, N).copy()
    f = primal[idx.off_f:idx.off_shed].reshape(T, E).copy()
    shed = primal[idx.off_shed:].reshape(T, N).copy()
    shed[np.abs(shed) < 1e-7] = 0.0
    cost = float(np.sum(g * costs.marginal[None, :])
                 + np.sum(y * costs.startup[None, :]))
    return Schedule(dispatch=g, commitment=v, startup=y, shutdown=z,
                    angles=th, flows=f, shed=shed, total_cost=cost)


def _commitment_heuristic(inst: UcInstance, idx: ScucIndex):
    """Round the root relaxation commitment and repair it.

    Every on/off switch inside the horizon is extended to respect the
    minimum up/down times, then start/stop indicators are rederived, so
    the assignment satisfies all pure-binary rows by construction.  The
    dispatch LP may still be infeasible (over-generation locks); the
    caller simply discards the candidate then.
    """
    T, J = idx.T, idx.J
    v_init = np.array([g.v_init for g in inst.generators], dtype=np.int64)

    def heuristic(x):
        v = np.round(x[idx.off_v:idx.off_y].reshape(T, J)).astype(np.int64)
        for j, g in enumerate(inst.generators):
            need = {1: g.min_up, 0: g.min_down}
            prev = v_init[j]
            t = 0
            while t < T:
                if v[t, j] != prev:
                    end = min(T, t + need[int(v[t, j])])
                    v[t:end, j] = v[t, j]
                    prev = v[t, j]
                    t = end
                else:
                    t += 1
        y, z = derive_startups(v, v_init)
        return np.concatenate([v.ravel(), y.ravel(), z.ravel()]
                              ).astype(np.float64)

    return heuristic


def solve_uc(inst: UcInstance, costs: CostParams, avail: Availability,
             demand: np.ndarray, shed_penalty: float = SHED_PENALTY,
             tol_int: float = 1e-6, gap: float = 1e-6,
             node_limit: int = 100_000) -> Schedule:
    """Build and solve; raises UcInfeasibleError if no incumbent exists."""
    milp, idx = build_scuc(inst, costs, avail, demand, shed_penalty)
    sol: MilpSolution = solve_milp(milp, tol_int=tol_int, gap=gap,
                                   node_limit=node_limit,
                                   heuristic=_commitment_heuristic(inst, idx))
    if sol.status == "infeasible" or sol.primal is None:
        raise UcInfeasibleError(
            "unit commitment infeasible despite load shedding; "
            "this signals an over-generation lock or a modeling bug "
            f"(instance '{inst.name}')")
    return _extract(inst, costs, sol.primal, idx)


def derive_startups(commitment: np.ndarray,
                    v_init: np.ndarray) -> tuple:
    """Start/stop indicators implied by a commitment trajectory.

    Returns (startup, shutdown), both (T, J) int8 with
    y - z = v_t - v_{t-1} elementwise.
    """
    v = np.asarray(commitment, dtype=np.int64)
    prev = np.vstack([np.asarray(v_init, dtype=np.int64)[None, :],
                      v[:-1]])
    diff = v - prev
    y = (diff > 0).astype(np.int8)
    z = (diff < 0).astype(np.int8)
    return y, z
