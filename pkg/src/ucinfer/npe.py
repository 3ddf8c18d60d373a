"""Amortized posterior estimation for cost parameters.

A PosteriorModel wraps the mixture density network with everything
needed to use it on raw observations: the featurization, per-dimension
standardization (constant feature dimensions are dropped and recorded),
the prior it was trained under, and the training history.  Training
minimizes the mean negative log-density of true parameters under the
conditional mixture; the returned weights are those of the best
validation epoch.

log_prob and sample never touch the UC solver: after the one-time
simulation and training cost, posterior evaluation for a new
observation is a single network pass.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import mdn
from .errors import ConfigError, IncompatibleModelError, TrainingDivergedError
from .forward import MarketOutcome, PriorConfig

MODEL_FORMAT = "ucinfer-posterior"
MODEL_VERSION = 1

# feature dimensions with std below this are constants and carry no signal
ZERO_STD_TOL = 1e-12

# global gradient-norm clip and plateau schedule for the training loop
GRAD_CLIP = 10.0
LR_DROP_AFTER = 3


@dataclass(frozen=True)
class TrainConfig:
    k_components: int = 8
    hidden_sizes: tuple = (128, 128, 128)
    learning_rate: float = 1e-3
    batch_size: int = 256
    epochs: int = 200
    validation_fraction: float = 0.3
    seed: int = 0
    patience: int = 10
    lambda_balance: float = 0.0

    def validate(self) -> None:
        if self.k_components < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("k_components, epochs, batch_size must be >= 1")
        if not (0.0 < self.validation_fraction < 1.0):
            raise ConfigError("validation_fraction must lie in (0, 1)")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if not all(h >= 1 for h in self.hidden_sizes):
            raise ConfigError("hidden layer sizes must be >= 1")

    def to_dict(self) -> dict:
        return {"k_components": self.k_components,
                "hidden_sizes": list(self.hidden_sizes),
                "learning_rate": self.learning_rate,
                "batch_size": self.batch_size, "epochs": self.epochs,
                "validation_fraction": self.validation_fraction,
                "seed": self.seed, "patience": self.patience,
                "lambda_balance": self.lambda_balance}


@dataclass(frozen=True)
class Standardizer:
    """Affine maps to zero-mean unit-variance training units.

    Constant x dimensions are dropped (keep mask records survivors);
    a constant theta dimension is an error because the density would
    degenerate.
    """

    x_mean: np.ndarray          # (D_kept,)
    x_std: np.ndarray           # (D_kept,)
    x_keep: np.ndarray          # (D_kept,) indices into the raw vector
    x_dim_raw: int
    theta_mean: np.ndarray      # (P,)
    theta_std: np.ndarray       # (P,)

    def x_transform(self, X: np.ndarray) -> np.ndarray:
        if X.shape[-1] != self.x_dim_raw:
            raise IncompatibleModelError(
                f"feature vector has {X.shape[-1]} dims, model expects "
                f"{self.x_dim_raw}")
        return (X[..., self.x_keep] - self.x_mean) / self.x_std

    def theta_transform(self, T: np.ndarray) -> np.ndarray:
        return (T - self.theta_mean) / self.theta_std

    def theta_inverse(self, Z: np.ndarray) -> np.ndarray:
        return Z * self.theta_std + self.theta_mean

    @property
    def log_jacobian(self) -> float:
        """log |d theta_std / d theta| added to standardized log-densities."""
        return float(-np.sum(np.log(self.theta_std)))


def raw_features(dispatch: np.ndarray, startup: np.ndarray,
                 demand: np.ndarray) -> np.ndarray:
    """Flatten one or many outcomes: dispatch, per-gen start counts, demand.

    Accepts (T, J)/(T, N) single outcomes or (B, T, J)/(B, T, N) batches.
    """
    single = dispatch.ndim == 2
    if single:
        dispatch, startup, demand = (dispatch[None], startup[None],
                                     demand[None])
    B = dispatch.shape[0]
    out = np.concatenate([
        dispatch.reshape(B, -1),
        startup.sum(axis=1).astype(np.float64),
        demand.reshape(B, -1)], axis=1)
    return out[0] if single else out


def featurize(x: MarketOutcome) -> np.ndarray:
    """Observation summary the posterior conditions on (raw units)."""
    return raw_features(x.schedule.dispatch, x.schedule.startup, x.demand)


@dataclass
class PosteriorModel:
    spec: mdn.MdnSpec
    weights: np.ndarray
    standardizer: Standardizer
    prior: dict                 # PriorConfig.to_dict() of the training set
    instance_hash: str
    training_log: list = field(default_factory=list)  # (epoch, train, val)
    val_indices: np.ndarray | None = None
    best_epoch: int = -1

    def _as_features(self, x) -> np.ndarray:
        if isinstance(x, MarketOutcome):
            return featurize(x)
        return np.asarray(x, dtype=np.float64)

    def mixture_params(self, x):
        """Standardized-space mixture for one observation."""
        xs = self.standardizer.x_transform(self._as_features(x))
        logpi, mu, sigma, _ = mdn.forward(self.spec, self.weights, xs[None])
        return logpi[0], mu[0], sigma[0]

    def log_prob(self, theta, x) -> np.ndarray:
        """Log posterior density in original theta units.

        theta: (P,) or (n, P); x: MarketOutcome or raw feature vector.
        """
        theta = np.asarray(theta, dtype=np.float64)
        single = theta.ndim == 1
        ts = self.standardizer.theta_transform(
            theta[None] if single else theta)
        logpi, mu, sigma = self.mixture_params(x)
        lp = mdn.mixture_log_prob(logpi, mu, sigma, ts)
        lp = lp + self.standardizer.log_jacobian
        return float(lp[0]) if single else lp

    def sample(self, x, n: int, rng: np.random.Generator) -> np.ndarray:
        """(n, P) posterior draws in original theta units."""
        logpi, mu, sigma = self.mixture_params(x)
        zs = mdn.mixture_sample(logpi, mu, sigma, n, rng)
        return self.standardizer.theta_inverse(zs)


def _standardize_fit(X_raw, Theta, train_idx):
    xm = X_raw[train_idx].mean(axis=0)
    xs = X_raw[train_idx].std(axis=0)
    keep = np.flatnonzero(xs > ZERO_STD_TOL)
    tm = Theta[train_idx].mean(axis=0)
    ts = Theta[train_idx].std(axis=0)
    if np.any(ts <= ZERO_STD_TOL):
        bad = int(np.argmax(ts <= ZERO_STD_TOL))
        raise ConfigError(
            f"theta dimension {bad} is constant in the training set; "
            "a degenerate prior cannot be learned as a density")
    return Standardizer(x_mean=xm[keep], x_std=xs[keep], x_keep=keep,
                        x_dim_raw=X_raw.shape[1], theta_mean=tm,
                        theta_std=ts)


def fit(dataset, config: TrainConfig) -> PosteriorModel:
    """Train the conditional mixture on a simulated dataset.

    Deterministic for fixed (dataset, config): the split, the batch
    order, and the weight initialization all derive from config.seed.
    Returns the model at the epoch with the best validation loss.
    """
    config.validate()
    n = len(dataset)
    if n < 10 * config.batch_size:
        raise ConfigError(
            f"dataset holds {n} records; need >= 10 x batch_size "
            f"({10 * config.batch_size})")
    X_raw = raw_features(dataset.dispatch,
                         dataset.startup.astype(np.float64),
                         dataset.demand)
    Theta = dataset.theta
    rng = np.random.default_rng(np.random.SeedSequence([3, config.seed]))
    perm = rng.permutation(n)
    n_val = max(1, int(round(n * config.validation_fraction)))
    val_idx = perm[:n_val]
    train_idx = perm[n_val:]

    std = _standardize_fit(X_raw, Theta, train_idx)
    Xs = std.x_transform(X_raw)
    Ts = std.theta_transform(Theta)
    Xtr, Ttr = Xs[train_idx], Ts[train_idx]
    Xva, Tva = Xs[val_idx], Ts[val_idx]

    spec = mdn.MdnSpec(n_in=Xs.shape[1], n_out=Theta.shape[1],
                       k=config.k_components,
                       hidden=tuple(config.hidden_sizes))
    w = mdn.init(spec, rng)
    opt = mdn.Adam(spec.n_params, lr=config.learning_rate)

    best_w = w.copy()
    best_val = np.inf
    best_epoch = -1
    log = []
    stale = 0
    plateau = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(train_idx))
        tr_losses = []
        for b in range(0, len(order), config.batch_size):
            sl = order[b:b + config.batch_size]
            loss, grad = mdn.nll_and_grad(spec, w, Xtr[sl], Ttr[sl])
            if not np.isfinite(loss):
                model = PosteriorModel(
                    spec=spec, weights=best_w, standardizer=std,
                    prior=dict(dataset.meta.get("prior", {})),
                    instance_hash=dataset.meta.get("instance_hash", ""),
                    training_log=log, val_indices=val_idx,
                    best_epoch=best_epoch)
                raise TrainingDivergedError(
                    f"loss became non-finite at epoch {epoch}", model)
            gnorm = float(np.linalg.norm(grad))
            if gnorm > GRAD_CLIP:
                grad *= GRAD_CLIP / gnorm
            opt.step(w, grad)
            tr_losses.append(loss)
        val = mdn.nll(spec, w, Xva, Tva)
        log.append((epoch, float(np.mean(tr_losses)), float(val)))
        if val < best_val - 1e-6:
            best_val = val
            best_w = w.copy()
            best_epoch = epoch
            stale = 0
            plateau = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
            plateau += 1
            if plateau >= LR_DROP_AFTER:
                opt.lr *= 0.5
                plateau = 0
    return PosteriorModel(
        spec=spec, weights=best_w, standardizer=std,
        prior=dict(dataset.meta.get("prior", {})),
        instance_hash=dataset.meta.get("instance_hash", ""),
        training_log=log, val_indices=val_idx, best_epoch=best_epoch)


def gradient_check(model: PosteriorModel, X_raw: np.ndarray,
                   Theta: np.ndarray, h: float = 1e-5):
    """Analytic vs central-difference gradients on a small batch.

    Returns (max relative error, worst coordinate index).  The relative
    error uses |a - b| / max(floor, |a| + |b|) per coordinate.  The
    floor matters: a central difference of a loss of order one carries
    roundoff noise of order eps * |loss| / h ~ 1e-11, so coordinates
    whose gradient sits below that cannot be compared relatively; the
    1e-6 floor turns those into absolute comparisons while still
    flagging any real backpropagation defect, which shows up at the
    scale of the gradient itself.
    """
    if X_raw.shape[0] > 32:
        raise ValueError("gradient check slice is limited to 32 records")
    Xs = model.standardizer.x_transform(X_raw)
    Ts = model.standardizer.theta_transform(Theta)
    spec = model.spec
    w = model.weights
    _, grad = mdn.nll_and_grad(spec, w, Xs, Ts)
    worst = 0.0
    worst_i = -1
    wp = w.copy()
    for i in range(spec.n_params):
        wi = w[i]
        wp[i] = wi + h
        up = mdn.nll(spec, wp, Xs, Ts)
        wp[i] = wi - h
        dn = mdn.nll(spec, wp, Xs, Ts)
        wp[i] = wi
        fd = (up - dn) / (2.0 * h)
        rel = abs(fd - grad[i]) / max(1e-6, abs(fd) + abs(grad[i]))
        if rel > worst:
            worst = rel
            worst_i = i
    return worst, worst_i


def save_model(model: PosteriorModel, path) -> None:
    """Self-describing binary: one JSON header line + little-endian weights."""
    std = model.standardizer
    header = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "instance_hash": model.instance_hash,
        "prior": model.prior,
        "n_in": model.spec.n_in,
        "n_out": model.spec.n_out,
        "k": model.spec.k,
        "hidden": list(model.spec.hidden),
        "x_mean": std.x_mean.tolist(),
        "x_std": std.x_std.tolist(),
        "x_keep": std.x_keep.tolist(),
        "x_dim_raw": std.x_dim_raw,
        "theta_mean": std.theta_mean.tolist(),
        "theta_std": std.theta_std.tolist(),
        "best_epoch": model.best_epoch,
        "training_log": model.training_log,
        "val_indices": (model.val_indices.tolist()
                        if model.val_indices is not None else None),
    }
    line = json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n"
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(line.encode("utf-8"))
        f.write(model.weights.astype("<f8").tobytes())
    os.replace(tmp, path)


def load_model(path) -> PosteriorModel:
    with open(path, "rb") as f:
        header = f.readline()
        body = f.read()
    try:
        meta = json.loads(header.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IncompatibleModelError(f"unreadable model header: {exc}")
    if meta.get("format") != MODEL_FORMAT:
        raise IncompatibleModelError(
            f"not a posterior model file (format={meta.get('format')!r})")
    if meta.get("version") != MODEL_VERSION:
        raise IncompatibleModelError(
            f"unsupported model version {meta.get('version')!r}")
    spec = mdn.MdnSpec(n_in=meta["n_in"], n_out=meta["n_out"],
                       k=meta["k"], hidden=tuple(meta["hidden"]))
    if len(body) != spec.n_params * 8:
        raise IncompatibleModelError(
            f"model body holds {len(body)} bytes, expected "
            f"{spec.n_params * 8}")
    w = np.frombuffer(body, dtype="<f8").astype(np.float64)
    std = Standardizer(
        x_mean=np.asarray(meta["x_mean"], dtype=np.float64),
        x_std=np.asarray(meta["x_std"], dtype=np.float64),
        x_keep=np.asarray(meta["x_keep"], dtype=np.int64),
        x_dim_raw=int(meta["x_dim_raw"]),
        theta_mean=np.asarray(meta["theta_mean"], dtype=np.float64),
        theta_std=np.asarray(meta["theta_std"], dtype=np.float64))
    val_idx = meta.get("val_indices")
    return PosteriorModel(
        spec=spec, weights=w, standardizer=std, prior=meta["prior"],
        instance_hash=meta["instance_hash"],
        training_log=[tuple(e) for e in meta.get("training_log", [])],
        val_indices=(np.asarray(val_idx, dtype=np.int64)
                     if val_idx is not None else None),
        best_epoch=int(meta.get("best_epoch", -1)))


def prior_bounds(prior: PriorConfig, n_gens: int):
    """(lo, hi) arrays of the prior box in CostParams vector order."""
    lo = np.concatenate([np.full(n_gens, prior.c_min),
                         np.full(n_gens, prior.s_min)])
    hi = np.concatenate([np.full(n_gens, prior.c_max),
                         np.full(n_gens, prior.s_max)])
    return lo, hi


def mc_normalization(model: PosteriorModel, x, n: int = 1 << 16,
                     rng: np.random.Generator | None = None,
                     box_halfwidths: float = 3.0) -> float:
    """Importance-sampled integral of exp(log_prob) over a wide theta box.

    The proposal is the model's own mixture de-standardized into
    original units with scales inflated 1.5x (an explicit density, so
    the estimate goes through the public log_prob path and would expose
    a missing standardization Jacobian).  The box spans
    +-box_halfwidths prior widths around the prior box; a correctly
    normalized posterior integrates to ~= 1 over it.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    logpi, mu, sigma = model.mixture_params(x)
    std = model.standardizer
    mu_orig = std.theta_inverse(mu)
    sigma_orig = 1.5 * sigma * std.theta_std
    thetas = mdn.mixture_sample(logpi, mu_orig, sigma_orig, n, rng)
    log_prop = mdn.mixture_log_prob(logpi, mu_orig, sigma_orig, thetas)
    lq = model.log_prob(thetas, x)

    pr = PriorConfig.from_dict(model.prior)
    lo, hi = prior_bounds(pr, model.spec.n_out // 2)
    width = hi - lo
    pad = (box_halfwidths - 1.0) * width
    inside = np.all((thetas >= lo - pad) & (thetas <= hi + pad), axis=1)
    ratio = np.exp(lq - log_prop) * inside
    return float(ratio.mean())
