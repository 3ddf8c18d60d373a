"""Stochastic day-ahead market model: priors, latents, simulated outcomes.

A simulated day works in three layers.  True cost parameters theta =
(c, s) are drawn from independent uniform priors.  Latents then distort
what the market sees: each generator bids c~_j = c_j + N(0, sigma_bid^2)
while its start-up cost enters the clearing problem unchanged, and
day-ahead availability is an independent Bernoulli coin per generator
and per line.  Finally nodal demand is drawn from the instance's load
model and the unit commitment is cleared against the bids.  The
observable outcome is the pair (schedule, demand); the bids and coins
stay hidden.

Every stochastic quantity of a record derives from one integer seed via
named substreams, so a record is reproducible from
(instance, prior, seed) alone and independent of any other record.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .scuc import Availability, CostParams, Schedule, solve_uc
from .system import UcInstance, sample_demand

__all__ = ["BID_FLOOR", "PriorConfig", "Latents", "MarketOutcome",
           "sample_prior", "sample_latents", "prior_rng", "simulate"]

# lowest admissible bid; Gaussian bid noise may otherwise go negative
BID_FLOOR = 0.01

# substream keys: theta draw and day simulation never share an rng state
_STREAM_PRIOR = 1
_STREAM_DAY = 2


@dataclass(frozen=True)
class PriorConfig:
    """Independent box prior over cost parameters plus latent noise levels.

    c_min/c_max bound the marginal cost (per MWh), s_min/s_max the
    start-up cost.  sigma_bid is the bid distortion scale; p_gen_out and
    p_line_out are day-ahead outage probabilities.
    """

    c_min: float = 10.0
    c_max: float = 50.0
    s_min: float = 500.0
    s_max: float = 10000.0
    sigma_bid: float = 2.5
    p_gen_out: float = 0.05
    p_line_out: float = 0.01

    def validate(self) -> None:
        if self.c_min > self.c_max or self.s_min > self.s_max:
            raise ConfigError("prior box is empty (min > max)")
        if self.sigma_bid < 0:
            raise ConfigError("sigma_bid must be >= 0")
        for nm, p in (("p_gen_out", self.p_gen_out),
                      ("p_line_out", self.p_line_out)):
            if not (0.0 <= p < 1.0):
                raise ConfigError(f"{nm} must lie in [0, 1)")
        for nm in ("c_min", "c_max", "s_min", "s_max", "sigma_bid"):
            if not np.isfinite(getattr(self, nm)):
                raise ConfigError(f"{nm} must be finite")

    def to_dict(self) -> dict:
        return {"c_min": self.c_min, "c_max": self.c_max,
                "s_min": self.s_min, "s_max": self.s_max,
                "sigma_bid": self.sigma_bid,
                "p_gen_out": self.p_gen_out,
                "p_line_out": self.p_line_out}

    @classmethod
    def from_dict(cls, d: dict) -> "PriorConfig":
        cfg = cls(**{k: float(d[k]) for k in
                     ("c_min", "c_max", "s_min", "s_max", "sigma_bid",
                      "p_gen_out", "p_line_out")})
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class Latents:
    bid_costs: np.ndarray       # (J,) distorted marginal bids
    availability: Availability


@dataclass(frozen=True)
class MarketOutcome:
    schedule: Schedule
    demand: np.ndarray          # (T, N)


def _stream_rng(stream: int, seed: int) -> np.random.Generator:
    if seed < 0:
        raise ConfigError("seeds must be non-negative integers")
    return np.random.default_rng(np.random.SeedSequence([stream, int(seed)]))


def sample_prior(prior: PriorConfig, n_gens: int,
                 rng: np.random.Generator) -> CostParams:
    """Draw true costs: c_j ~ U(c_min, c_max), s_j ~ U(s_min, s_max)."""
    prior.validate()
    return CostParams(
        marginal=rng.uniform(prior.c_min, prior.c_max, n_gens),
        startup=rng.uniform(prior.s_min, prior.s_max, n_gens))


def sample_latents(theta: CostParams, prior: PriorConfig, n_lines: int,
                   rng: np.random.Generator) -> Latents:
    """Draw what the market sees: bids and availability coins.

    Bids distort only the marginal cost; start-up costs pass through
    unchanged.  The draw order (bids, generator coins, line coins) is
    part of the reproducibility contract.
    """
    prior.validate()
    noise = rng.normal(0.0, 1.0, theta.marginal.shape) * prior.sigma_bid
    bids = np.maximum(theta.marginal + noise, BID_FLOOR)
    gens = (rng.random(theta.marginal.shape[0])
            >= prior.p_gen_out).astype(np.float64)
    lines = (rng.random(n_lines) >= prior.p_line_out).astype(np.float64)
    return Latents(bid_costs=bids,
                   availability=Availability(gens=gens, lines=lines))


def prior_rng(seed: int) -> np.random.Generator:
    """The substream a record's theta is drawn from."""
    return _stream_rng(_STREAM_PRIOR, seed)


def simulate(inst: UcInstance, theta: CostParams, prior: PriorConfig,
             seed: int) -> MarketOutcome:
    """One simulated market day for fixed true costs.

    Latents and demand come from the day substream of ``seed``; the
    clearing problem uses the distorted bids but the true start-up
    costs.  Repeating a seed reproduces the outcome bit for bit.
    """
    rng = _stream_rng(_STREAM_DAY, seed)
    z = sample_latents(theta, prior, inst.n_lines, rng)
    demand = sample_demand(inst.load, rng)
    cleared = CostParams(marginal=z.bid_costs, startup=theta.startup)
    sched = solve_uc(inst, cleared, z.availability, demand)
    return MarketOutcome(schedule=sched, demand=demand)
