"""Inverse optimization over the polar cone of an observed schedule.

The set of cost vectors theta = (c, s) under which an observed
commitment schedule is UC-optimal forms a cone.  Because costs pair
with the schedule only through per-generator total energy and start
counts, theta' F(g) with F(g) = (sum_t g_tj, sum_t y_tj) reproduces the
UC objective, and every alternative schedule g' yields a valid linear
cut theta' (F(g') - F(g_obs)) >= 0 on that cone.

estimate() refines an outer approximation: draw a reference parameter
from the prior, project it onto the current approximation, re-solve the
UC at the projection, and either accept (the observed schedule is
eps-optimal) or add the violated cut.  The projection minimizes the L1
distance and, among L1 ties, the L-infinity distance, which makes the
returned point unique on the symmetric cases and keeps the whole loop
inside the package's LP solver.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AmbiguousCommitmentError, InfeasibleConeError
from .forward import MarketOutcome, PriorConfig, sample_prior
from .lp import GE, LE, LpBuilder, solve_lp
from .scuc import CostParams, Schedule, derive_startups, full_availability, solve_uc
from .system import UcInstance

# dispatch below this level (MW) counts as "off" when recovering commitment
COMMIT_TOL = 1e-4


@dataclass(frozen=True)
class ScheduleFeatures:
    energy: np.ndarray          # (J,) sum_t g_tj
    starts: np.ndarray          # (J,) sum_t y_tj

    def as_vector(self) -> np.ndarray:
        """Ordered like CostParams.as_vector: marginal block then startup."""
        return np.concatenate([self.energy, self.starts.astype(np.float64)])


@dataclass
class PolarConeApprox:
    lo: np.ndarray              # (2J,) box lower bounds
    hi: np.ndarray              # (2J,) box upper bounds
    cuts: list                  # vectors d with constraint theta . d >= 0


@dataclass
class InverseResult:
    theta_hat: CostParams
    iterations: int
    final_violation: float      # theta_hat . (F(g_k) - F(g_obs)) at the last check
    converged: bool


def features(schedule: Schedule) -> ScheduleFeatures:
    return ScheduleFeatures(
        energy=schedule.dispatch.sum(axis=0),
        starts=schedule.startup.sum(axis=0).astype(np.int64))


def derive_observed_features(x_obs: MarketOutcome,
                             inst: UcInstance) -> ScheduleFeatures:
    """Features straight from observable dispatch.

    Commitment is recovered from dispatch positivity, which is sound
    because every generator has g_min > 0; dispatch inside (0, tol]
    cannot be distinguished from numerical noise and is rejected.
    """
    g = x_obs.schedule.dispatch
    if np.any((g > 0.0) & (g <= COMMIT_TOL)):
        t, j = np.argwhere((g > 0.0) & (g <= COMMIT_TOL))[0]
        raise AmbiguousCommitmentError(
            f"dispatch g[{t},{j}]={g[t, j]:.3e} MW is positive but below "
            f"the commitment tolerance {COMMIT_TOL}; cannot recover v")
    v = (g > COMMIT_TOL).astype(np.int8)
    v_init = np.array([gen.v_init for gen in inst.generators], dtype=np.int8)
    y, _ = derive_startups(v, v_init)
    return ScheduleFeatures(energy=g.sum(axis=0),
                            starts=y.sum(axis=0).astype(np.int64))


def prior_box(prior: PriorConfig, n_gens: int) -> PolarConeApprox:
    lo = np.concatenate([np.full(n_gens, prior.c_min),
                         np.full(n_gens, prior.s_min)])
    hi = np.concatenate([np.full(n_gens, prior.c_max),
                         np.full(n_gens, prior.s_max)])
    return PolarConeApprox(lo=lo, hi=hi, cuts=[])


def _projection_lp(theta_ref, cone, minimax: bool):
    """LP over (theta, u[, t]) with u_i >= |theta_i - theta_ref_i|.

    minimax=False minimizes sum(u); minimax=True adds t >= u_i and
    minimizes t (the caller then pins sum(u) separately).
    """
    d = len(theta_ref)
    bld = LpBuilder()
    for i in range(d):
        bld.add_var(cone.lo[i], cone.hi[i], 0.0, name=f"theta{i}")
    for i in range(d):
        bld.add_var(0.0, np.inf, 0.0 if minimax else 1.0, name=f"u{i}")
    if minimax:
        t_var = bld.add_var(0.0, np.inf, 1.0, name="t")
    for i in range(d):
        # theta_i - u_i <= ref_i  and  -theta_i - u_i <= -ref_i
        bld.add_row([(i, 1.0), (d + i, -1.0)], LE, float(theta_ref[i]))
        bld.add_row([(i, -1.0), (d + i, -1.0)], LE, float(-theta_ref[i]))
        if minimax:
            bld.add_row([(d + i, 1.0), (t_var, -1.0)], LE, 0.0)
    for cut in cone.cuts:
        coefs = [(i, float(cut[i])) for i in range(d) if cut[i] != 0.0]
        if coefs:
            bld.add_row(coefs, GE, 0.0)
    return bld, d


def project(theta_ref: np.ndarray, cone: PolarConeApprox) -> np.ndarray:
    """Two-stage projection: min L1 distance, then min L-inf among ties."""
    bld, d = _projection_lp(theta_ref, cone, minimax=False)
    sol1 = solve_lp(bld.build())
    if sol1.status == "infeasible":
        raise InfeasibleConeError(
            "polar cone approximation has no feasible point in the prior "
            "box; the observation is inconsistent with deterministic "
            "UC-optimality")
    l1_star = float(sol1.objective)

    bld, d = _projection_lp(theta_ref, cone, minimax=True)
    bld.add_row([(d + i, 1.0) for i in range(d)], LE, l1_star + 1e-9)
    sol2 = solve_lp(bld.build())
    if sol2.status != "optimal":
        # cannot happen while stage 1 is feasible; keep the L1 point
        return sol1.primal[:d].copy()
    return sol2.primal[:d].copy()


def estimate(inst: UcInstance, x_obs: MarketOutcome, prior: PriorConfig,
             eps: float = 1e-6, max_iter: int = 100_000,
             rng: np.random.Generator | None = None) -> InverseResult:
    """Iteratively refine the polar cone until eps-optimality.

    Each iteration draws a fresh reference parameter from the prior,
    projects it onto the current approximation, and re-solves the UC
    (deterministic map: full availability, observed demand) at the
    projection.  If the observed schedule is within eps of optimal the
    projection is returned; otherwise the exposed improvement direction
    becomes a new cut.  On an infeasible cone or iteration cap the best
    incumbent is returned with converged=False.
    """
    prior.validate()
    if rng is None:
        rng = np.random.default_rng()
    J = inst.n_gens
    cone = prior_box(prior, J)
    f_obs = derive_observed_features(x_obs, inst).as_vector()
    avail = full_availability(inst)
    demand = x_obs.demand

    best_theta = None
    best_viol = -np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        theta_ref = sample_prior(prior, J, rng).as_vector()
        try:
            theta_k = project(theta_ref, cone)
        except InfeasibleConeError:
            if best_theta is None:
                raise
            return InverseResult(
                theta_hat=CostParams(marginal=best_theta[:J],
                                     startup=best_theta[J:]),
                iterations=iterations, final_violation=float(best_viol),
                converged=False)
        costs = CostParams(marginal=theta_k[:J], startup=theta_k[J:])
        sched = solve_uc(inst, costs, avail, demand)
        d = features(sched).as_vector() - f_obs
        viol = float(theta_k @ d)
        if viol > best_viol:
            best_viol = viol
            best_theta = theta_k
        if viol >= -eps:
            return InverseResult(
                theta_hat=costs, iterations=iterations,
                final_violation=viol, converged=True)
        cone.cuts.append(d)
    return InverseResult(
        theta_hat=CostParams(marginal=best_theta[:J],
                             startup=best_theta[J:]),
        iterations=iterations, final_violation=float(best_viol),
        converged=False)
