"""Cost-parameter inference from day-ahead unit-commitment schedules.

The package chains a stochastic forward market model (prior over
marginal and start-up costs, bid noise, outages, demand noise, and a
built-in MILP clearing solver) with two complementary estimators for
the true costs behind an observed schedule: polar-cone inverse
optimization and an amortized neural posterior, plus the calibration
diagnostics to judge the latter.
"""

__version__ = "0.1.0"

from .dataset import Dataset, generate, load, save
from .diagnostics import (CoverageCurve, PredictiveBand,
                          abc_reference_posterior, expected_coverage,
                          export_corner, hpd_contains, posterior_predictive)
from .errors import UcinferError
from .forward import (Latents, MarketOutcome, PriorConfig, prior_rng,
                      sample_latents, sample_prior, simulate)
from .invopt import InverseResult, estimate, features
from .npe import (PosteriorModel, TrainConfig, fit, gradient_check,
                  load_model, mc_normalization, save_model)
from .scuc import (Availability, CostParams, Schedule, build_scuc,
                   derive_startups, full_availability, solve_uc)
from .system import UcInstance, instance_hash, load_bundled, load_system
from .system import validate as validate_system

__all__ = [
    "__version__",
    "Availability", "CostParams", "CoverageCurve", "Dataset",
    "InverseResult", "Latents", "MarketOutcome", "PosteriorModel",
    "PredictiveBand", "PriorConfig", "Schedule", "TrainConfig",
    "UcInstance", "UcinferError",
    "abc_reference_posterior", "build_scuc", "derive_startups", "estimate",
    "expected_coverage", "export_corner", "features", "fit",
    "full_availability", "generate", "gradient_check", "hpd_contains",
    "instance_hash", "load", "load_bundled", "load_model", "load_system",
    "mc_normalization", "posterior_predictive", "prior_rng",
    "sample_latents", "sample_prior", "save", "save_model", "simulate",
    "solve_uc", "validate_system",
]
