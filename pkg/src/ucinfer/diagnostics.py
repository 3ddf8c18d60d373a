"""Posterior validation: coverage, predictive checks, ABC oracle, corner export.

The coverage estimator asks the frequentist question behind credible
regions: when (theta, x) pairs come from the joint prior-predictive
distribution, how often does the nominal (1 - alpha) highest-density
region of the surrogate posterior contain the true theta?  A calibrated
posterior answers "(1 - alpha) of the time".

HPD membership uses the sample-threshold estimator: draw n_mc posterior
samples, rank the log-density of theta* among them.  Ties in density
(flat regions) are broken by a single uniform draw per test point,
which keeps the estimator exact for densities with plateaus and pins
the boundary cases: coverage at level 1 is identically 1, and coverage
vanishes as the level goes to 0.

The rejection-ABC sampler is an independent, solver-heavy oracle for
tiny systems only; it shares the feature map with the neural posterior
so the two methods are compared on the same summary of the data.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import npe
from .errors import ConfigError, DegenerateModelError
from .forward import MarketOutcome, PriorConfig, sample_prior, simulate
from .scuc import CostParams

COVERAGE_LEVELS = (0.5, 0.8, 0.9, 0.95)
BAND_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)

# samples drawn per HPD membership test (paper-scale default)
N_MC_DEFAULT = 4096

__all__ = [
    "COVERAGE_LEVELS", "BAND_QUANTILES", "N_MC_DEFAULT",
    "CoverageCurve", "PredictiveBand", "CornerData",
    "hpd_contains", "expected_coverage", "posterior_predictive",
    "abc_reference_posterior", "export_corner",
]


@dataclass(frozen=True)
class CoverageCurve:
    levels: np.ndarray          # nominal (1 - alpha) values
    empirical: np.ndarray       # matching empirical coverage estimates
    n_test: int

    @property
    def stderr(self) -> np.ndarray:
        p = self.empirical
        return np.sqrt(p * (1.0 - p) / self.n_test)

    def save_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "empirical", "stderr"])
            for lv, emp, se in zip(self.levels, self.empirical, self.stderr):
                w.writerow([repr(float(lv)), repr(float(emp)),
                            repr(float(se))])


@dataclass(frozen=True)
class PredictiveBand:
    quantiles: np.ndarray       # (T, J, 5) dispatch quantiles, MW
    qlevels: tuple = BAND_QUANTILES
    n: int = 0                  # posterior draws behind the band

    def contains_fraction(self, dispatch: np.ndarray) -> float:
        """Fraction of (t, j) cells inside the outermost quantile pair."""
        lo = self.quantiles[:, :, 0]
        hi = self.quantiles[:, :, -1]
        inside = (dispatch >= lo) & (dispatch <= hi)
        return float(inside.mean())

    def save_csv(self, path) -> None:
        T, J, _ = self.quantiles.shape
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "j"] + [f"q{int(100 * q):02d}"
                                     for q in self.qlevels])
            for t in range(T):
                for j in range(J):
                    w.writerow([t, j] + [repr(float(v))
                                         for v in self.quantiles[t, j]])


@dataclass(frozen=True)
class CornerData:
    samples: np.ndarray         # (n, 2J) posterior draws
    theta_star: np.ndarray      # nominal parameters
    theta_invopt: np.ndarray | None
    prior_lo: np.ndarray
    prior_hi: np.ndarray


def _hpd_stat(model, x, theta_star, n_mc: int, rng: np.random.Generator):
    """Rank statistics of theta*'s log-density among n_mc posterior draws."""
    draws = model.sample(x, n_mc, rng)
    lps = model.log_prob(draws, x)
    lp_star = float(np.atleast_1d(
        model.log_prob(np.asarray(theta_star, dtype=float), x))[0])
    n_above = int(np.sum(lps > lp_star))
    n_tied = int(np.sum(lps == lp_star))
    return n_above, n_tied


def hpd_contains(model, x, theta_star, level: float, n_mc: int,
                 rng: np.random.Generator) -> bool:
    """Is theta* inside the sample-estimated (1 - alpha) HPD region?

    The region keeps the ``level`` fraction of highest-density draws;
    membership compares densities only, so any strictly monotone
    transform of the density leaves the answer unchanged.
    """
    if not (0.0 < level <= 1.0):
        raise ConfigError("HPD level must lie in (0, 1]")
    n_above, n_tied = _hpd_stat(model, x, theta_star, n_mc, rng)
    u = rng.uniform()
    return n_above + u * n_tied <= level * n_mc


def expected_coverage(model, inst, prior: PriorConfig, n_test: int,
                      levels=COVERAGE_LEVELS, rng=None, dataset=None,
                      n_mc: int = N_MC_DEFAULT) -> CoverageCurve:
    """Empirical HPD coverage over joint (theta, x) test draws.

    With ``dataset`` given, test points are taken from the model's own
    validation split (never seen by the optimizer), avoiding fresh
    solver calls; otherwise each test point is simulated from scratch.
    The same n_mc draws serve every level, which makes the empirical
    curve non-decreasing in the level by construction.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    levels = np.asarray(levels, dtype=float)
    if np.any(levels <= 0.0) or np.any(levels > 1.0):
        raise ConfigError("coverage levels must lie in (0, 1]")

    if dataset is not None:
        val = np.asarray(model.val_indices)
        if n_test > val.size:
            raise ConfigError(
                f"n_test={n_test} exceeds the {val.size} validation records")
        idx = val[:n_test]
        thetas = dataset.theta[idx]
        feats = npe.raw_features(dataset.dispatch[idx],
                                 dataset.startup[idx].astype(np.float64),
                                 dataset.demand[idx])
    else:
        thetas = np.empty((n_test, 2 * inst.n_gens))
        feats = None
        xs = []
        for i in range(n_test):
            theta = sample_prior(prior, inst.n_gens, rng)
            seed = int(rng.integers(0, 2 ** 62))
            x = simulate(inst, theta, prior, seed)
            thetas[i] = theta.as_vector()
            xs.append(npe.featurize(x))
        feats = np.asarray(xs)

    hits = np.zeros(levels.size)
    for i in range(n_test):
        n_above, n_tied = _hpd_stat(model, feats[i], thetas[i], n_mc, rng)
        u = rng.uniform()
        hits += (n_above + u * n_tied) <= levels * n_mc
    return CoverageCurve(levels=levels, empirical=hits / n_test,
                         n_test=n_test)


def posterior_predictive(model, inst, prior: PriorConfig, x_obs,
                         n: int = 4096, rng=None) -> PredictiveBand:
    """Dispatch quantile band under the posterior predictive.

    Each posterior draw of theta is pushed through a fresh simulated
    market day (new bid noise, outages, demand).  Draws are projected
    onto the prior support first: the mixture tails can step slightly
    outside it, where a negative start-up cost would reward spurious
    same-period start/stop pairs in the clearing problem.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    thetas = model.sample(x_obs, n, rng)
    lo, hi = npe.prior_bounds(prior, inst.n_gens)
    thetas = np.clip(thetas, lo, hi)
    J = inst.n_gens
    dispatch = np.empty((n, inst.horizon, J))
    for i in range(n):
        theta = CostParams(marginal=thetas[i, :J], startup=thetas[i, J:])
        seed = int(rng.integers(0, 2 ** 62))
        x = simulate(inst, theta, prior, seed)
        dispatch[i] = x.schedule.dispatch
    q = np.quantile(dispatch, BAND_QUANTILES, axis=0)
    return PredictiveBand(quantiles=np.moveaxis(q, 0, -1), n=n)


def abc_reference_posterior(inst, prior: PriorConfig, x_obs, n_draws: int,
                            accept_frac: float,
                            rng: np.random.Generator) -> np.ndarray:
    """Rejection-ABC posterior samples, solver-priced: tiny systems only.

    Draws theta from the prior, simulates each, and keeps the
    accept_frac fraction closest to the observation in z-scored
    Euclidean distance over the shared feature map.  Returns the kept
    theta rows ordered by distance.
    """
    J = inst.n_gens
    if J > 3 or inst.horizon > 8:
        raise ConfigError("ABC oracle is restricted to J <= 3, T <= 8")
    if not (0.0 < accept_frac <= 1.0):
        raise ConfigError("accept_frac must lie in (0, 1]")
    if n_draws < 1:
        raise ConfigError("n_draws must be >= 1")

    f_obs = npe.featurize(x_obs) if isinstance(x_obs, MarketOutcome) \
        else np.asarray(x_obs, dtype=float)
    cs = rng.uniform(prior.c_min, prior.c_max, (n_draws, J))
    ss = rng.uniform(prior.s_min, prior.s_max, (n_draws, J))
    seeds = rng.integers(0, 2 ** 62, n_draws)
    feats = np.empty((n_draws, f_obs.size))
    for i in range(n_draws):
        x = simulate(inst, CostParams(marginal=cs[i], startup=ss[i]), prior,
                     int(seeds[i]))
        feats[i] = npe.featurize(x)

    sd = feats.std(axis=0)
    sd[sd < npe.ZERO_STD_TOL] = 1.0
    dist = np.sqrt(np.sum(((feats - f_obs) / sd) ** 2, axis=1))
    keep = max(1, int(round(accept_frac * n_draws)))
    order = np.argsort(dist, kind="stable")[:keep]
    return np.concatenate([cs[order], ss[order]], axis=1)


def export_corner(model, x_obs, theta_star, theta_invopt, n: int, path,
                  rng=None) -> CornerData:
    """Write posterior draws plus nominal/inverse-opt markers as CSV.

    One row per draw tagged ``sample``; marker rows ``nominal`` and
    ``invopt`` carry the reference parameter vectors and round-trip
    exactly (shortest-repr float formatting).  Draws further than five
    prior widths from the prior box indicate a degenerate model and
    abort the export.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    samples = model.sample(x_obs, n, rng)
    prior = PriorConfig.from_dict(model.prior)
    J = samples.shape[1] // 2
    lo, hi = npe.prior_bounds(prior, J)
    width = hi - lo
    if np.any(samples < lo - 5.0 * width) or np.any(samples > hi + 5.0 * width):
        raise DegenerateModelError(
            "posterior draws fall outside five prior widths")

    columns = [f"c_{j}" for j in range(J)] + [f"s_{j}" for j in range(J)]

    theta_star = np.asarray(theta_star, dtype=float)
    data = CornerData(samples=samples, theta_star=theta_star,
                      theta_invopt=None if theta_invopt is None
                      else np.asarray(theta_invopt, dtype=float),
                      prior_lo=lo, prior_hi=hi)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["tag"] + columns)
        for row in samples:
            w.writerow(["sample"] + [repr(float(v)) for v in row])
        w.writerow(["nominal"] + [repr(float(v)) for v in theta_star])
        if data.theta_invopt is not None:
            w.writerow(["invopt"] + [repr(float(v))
                                     for v in data.theta_invopt])
    return data
