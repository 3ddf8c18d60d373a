"""Conditional Gaussian mixture density network over a flat weight vector.

The network maps a feature vector x through a rectified MLP trunk to
the parameters of a K-component diagonal Gaussian mixture over theta:
component logits, per-component means, and per-component log-scales.
Scales are floored (sigma = SCALE_FLOOR + exp(logscale)) so no
component can collapse onto a data point.

All weights live in one flat float64 vector; pack/unpack return views,
so the analytic gradient is assembled in place.  Everything here works
in standardized units and knows nothing about priors, schedules, or
files; that context lives in the posterior module.
"""

import math
from dataclasses import dataclass

import numpy as np

SCALE_FLOOR = 1e-3
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MdnSpec:
    """Network shape: input dim, theta dim, component count, trunk widths."""

    n_in: int
    n_out: int
    k: int
    hidden: tuple

    def layer_dims(self):
        """(fan_in, fan_out) per trunk layer, then the three heads."""
        dims = []
        prev = self.n_in
        for h in self.hidden:
            dims.append((prev, h))
            prev = h
        dims.append((prev, self.k))                    # logits head
        dims.append((prev, self.k * self.n_out))       # means head
        dims.append((prev, self.k * self.n_out))       # log-scales head
        return dims

    @property
    def n_params(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_dims())


def unpack(spec: MdnSpec, w: np.ndarray):
    """Views (W, b) per layer into the flat vector; mutating them mutates w."""
    out = []
    pos = 0
    for fi, fo in spec.layer_dims():
        W = w[pos:pos + fi * fo].reshape(fo, fi)
        pos += fi * fo
        b = w[pos:pos + fo]
        pos += fo
        out.append((W, b))
    return out


def init(spec: MdnSpec, rng: np.random.Generator) -> np.ndarray:
    """He-scaled trunk, small heads, log-scales biased to sigma ~ 1."""
    w = np.zeros(spec.n_params)
    layers = unpack(spec, w)
    n_trunk = len(spec.hidden)
    for li, (W, b) in enumerate(layers):
        fi = W.shape[1]
        if li < n_trunk:
            W[:] = rng.normal(0.0, math.sqrt(2.0 / fi), W.shape)
        else:
            W[:] = rng.normal(0.0, 0.01, W.shape)
    # spread initial component means so the mixture starts multi-modal
    mu_b = layers[n_trunk + 1][1].reshape(spec.k, spec.n_out)
    mu_b[:] = rng.normal(0.0, 0.5, mu_b.shape)
    return w


def forward(spec: MdnSpec, w: np.ndarray, X: np.ndarray):
    """Mixture parameters for a batch: (logpi, mu, sigma, cache).

    logpi is log-softmaxed (B, K); mu and sigma are (B, K, P).  cache
    holds per-layer inputs and activations for backward().
    """
    layers = unpack(spec, w)
    n_trunk = len(spec.hidden)
    h = X
    acts = [X]
    for W, b in layers[:n_trunk]:
        h = np.maximum(h @ W.T + b, 0.0)
        acts.append(h)
    logits = h @ layers[n_trunk][0].T + layers[n_trunk][1]
    mu = (h @ layers[n_trunk + 1][0].T + layers[n_trunk + 1][1])
    ls = (h @ layers[n_trunk + 2][0].T + layers[n_trunk + 2][1])
    B = X.shape[0]
    mu = mu.reshape(B, spec.k, spec.n_out)
    ls = ls.reshape(B, spec.k, spec.n_out)
    logpi = logits - _logsumexp(logits, axis=1, keepdims=True)
    sigma = SCALE_FLOOR + np.exp(ls)
    cache = (acts, logits, ls)
    return logpi, mu, sigma, cache


def _logsumexp(a, axis, keepdims=False):
    m = np.max(a, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))
    return out if keepdims else np.squeeze(out, axis=axis)


def mixture_log_prob(logpi, mu, sigma, theta):
    """Log density of theta under the mixture; shapes broadcast.

    logpi (..., K), mu/sigma (..., K, P), theta (..., P) -> (...,).
    """
    z = (theta[..., None, :] - mu) / sigma
    comp = logpi + np.sum(-0.5 * z * z - np.log(sigma)
                          - 0.5 * _LOG_2PI, axis=-1)
    return _logsumexp(comp, axis=-1)


def mixture_sample(logpi, mu, sigma, n: int, rng: np.random.Generator):
    """n ancestral draws from one mixture (logpi (K,), mu/sigma (K, P))."""
    pi = np.exp(logpi - np.max(logpi))
    pi = pi / pi.sum()
    ks = rng.choice(len(pi), size=n, p=pi)
    eps = rng.standard_normal((n, mu.shape[1]))
    return mu[ks] + sigma[ks] * eps


def nll(spec: MdnSpec, w: np.ndarray, X: np.ndarray,
        Theta: np.ndarray) -> float:
    logpi, mu, sigma, _ = forward(spec, w, X)
    return float(-np.mean(mixture_log_prob(logpi, mu, sigma, Theta)))


def nll_and_grad(spec: MdnSpec, w: np.ndarray, X: np.ndarray,
                 Theta: np.ndarray):
    """Mean negative log-likelihood and its analytic gradient."""
    B = X.shape[0]
    layers = unpack(spec, w)
    n_trunk = len(spec.hidden)
    logpi, mu, sigma, cache = forward(spec, w, X)
    acts, logits, ls = cache

    z = (Theta[:, None, :] - mu) / sigma                       # (B, K, P)
    comp = logpi + np.sum(-0.5 * z * z - np.log(sigma)
                          - 0.5 * _LOG_2PI, axis=2)            # (B, K)
    ll = _logsumexp(comp, axis=1)
    loss = float(-np.mean(ll))

    # responsibilities and head gradients (d loss / d head outputs)
    r = np.exp(comp - ll[:, None])                             # (B, K)
    pi = np.exp(logpi)
    g_logits = -(r - pi) / B                                   # (B, K)
    g_mu = -(r[:, :, None] * z / sigma) / B                    # (B, K, P)
    # d loss/d ls = d loss/d sigma * exp(ls);  exp(ls) = sigma - floor
    g_sigma = -(r[:, :, None] * (z * z - 1.0) / sigma) / B
    g_ls = g_sigma * (sigma - SCALE_FLOOR)

    grad = np.zeros_like(w)
    glayers = unpack(spec, grad)
    h = acts[-1]
    g_h = np.zeros_like(h)
    heads = [(g_logits.reshape(B, -1), n_trunk),
             (g_mu.reshape(B, -1), n_trunk + 1),
             (g_ls.reshape(B, -1), n_trunk + 2)]
    for g_out, li in heads:
        W, _ = layers[li]
        gW, gb = glayers[li]
        gW += g_out.T @ h
        gb += g_out.sum(axis=0)
        g_h += g_out @ W

    for li in range(n_trunk - 1, -1, -1):
        g_h = g_h * (acts[li + 1] > 0.0)
        W, _ = layers[li]
        gW, gb = glayers[li]
        gW += g_h.T @ acts[li]
        gb += g_h.sum(axis=0)
        if li > 0:
            g_h = g_h @ W
    return loss, grad


class Adam:
    """Adaptive moment optimizer over the flat weight vector."""

    def __init__(self, n_params: int, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, w: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        mhat = self.m / (1.0 - self.beta1 ** self.t)
        vhat = self.v / (1.0 - self.beta2 ** self.t)
        w -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
