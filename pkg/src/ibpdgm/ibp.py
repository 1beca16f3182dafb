"""Truncated stick-breaking Indian Buffet Process.

Feature probabilities decay as running products of stick fractions
v_k ~ Beta(alpha, 1); a finite truncation level K caps the number of
latent features, and everything beyond index K is simply absent.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import distributions as dist

LOG_ZERO_SENTINEL = -1e10  # stands in for log(0) so estimates stay finite


class GlobalSticks:
    """K truncated Beta posteriors over the stick fractions, in log-space.

    One (a_k, b_k) pair is shared by all data points (the stick variables
    are global latents).  Parameters are stored as log-values in one flat
    array [log_a | log_b] so an unconstrained optimizer keeps them
    positive; initialized at the prior, a_k = alpha, b_k = 1.
    """

    def __init__(self, truncation, alpha):
        if int(truncation) < 1:
            raise ValueError("truncation level must be >= 1")
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        self.K = int(truncation)
        self.alpha = float(alpha)
        self.params = np.concatenate([
            np.full(self.K, np.log(self.alpha)),
            np.zeros(self.K),
        ])

    @property
    def log_a(self):
        return self.params[:self.K]

    @property
    def log_b(self):
        return self.params[self.K:]

    @property
    def a(self):
        return np.exp(self.log_a)

    @property
    def b(self):
        return np.exp(self.log_b)

    def sample(self, size, rng):
        """Draw stick fractions of shape (*size, K) from the Beta posteriors."""
        return dist.beta_sample_array(self.a, self.b, (*size, self.K), rng)

    def log_prob(self, v):
        """log q(v) summed over sticks; v has shape (..., K)."""
        v = np.asarray(v, dtype=np.float64)
        a, b = self.a, self.b
        log_beta_fn = (_lgamma(a) + _lgamma(b) - _lgamma(a + b))
        terms = (a - 1.0) * np.log(v) + (b - 1.0) * np.log1p(-v) - log_beta_fn
        return terms.sum(axis=-1)

    def score_grads(self, v):
        """d log q(v) / d [log_a | log_b], shape (..., 2K).

        Chains the Beta score gradient through the exp that maps the
        stored log-parameters to (a, b).
        """
        v = np.asarray(v, dtype=np.float64)
        a, b = self.a, self.b
        psi_ab = dist.digamma(a + b)
        da = np.log(v) - dist.digamma(a) + psi_ab
        db = np.log1p(-v) - dist.digamma(b) + psi_ab
        return np.concatenate([a * da, b * db], axis=-1)


def _lgamma(x):
    return np.array([math.lgamma(t) for t in np.atleast_1d(x)])


def stick_breaking(v):
    """Running products pi_k = prod_{j<=k} v_j; elementwise non-increasing."""
    v = np.asarray(v, dtype=np.float64)
    if v.size and (np.any(v <= 0) or np.any(v > 1)):
        raise ValueError("stick fractions must lie in (0, 1]")
    return np.cumprod(v, axis=-1)


def ibp_prior_log_prob(zhat, pi):
    """log prod_k Bernoulli(zhat_k | pi_k).

    pi_k = 1 with zhat_k = 1 contributes 0; pi_k = 1 with zhat_k = 0 is a
    zero-probability event and contributes the -1e10 sentinel instead of
    -inf so callers can flag it without poisoning sums with NaNs.
    """
    zhat = np.asarray(zhat, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.float64)
    if zhat.shape != pi.shape:
        raise ValueError("zhat and pi must have the same length")
    if pi.size and (np.any(pi <= 0) or np.any(pi > 1)):
        raise ValueError("pi must lie in (0, 1]")
    with np.errstate(divide="ignore"):
        return float(np.sum(log_bernoulli_terms(zhat, np.log(pi), np.log1p(-pi))))


def log_bernoulli_terms(zhat, log_pi, log_one_minus_pi):
    """Elementwise zhat*log(pi) + (1-zhat)*log(1-pi) with log(0) guarded."""
    on = np.where(np.isfinite(log_pi), log_pi, LOG_ZERO_SENTINEL)
    off = np.where(np.isfinite(log_one_minus_pi), log_one_minus_pi, LOG_ZERO_SENTINEL)
    return zhat * on + (1.0 - zhat) * off


def ibp_prior_log_prob_from_sticks(zhat, v):
    """Same as ibp_prior_log_prob but from stick fractions, in log space.

    Works on batched arrays of shape (..., K) and avoids the underflow of
    materializing pi = cumprod(v) when K is large; returns shape (...,).
    """
    zhat = np.asarray(zhat, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    log_pi = np.cumsum(np.log(v), axis=-1)
    one_minus_pi = -np.expm1(log_pi)
    with np.errstate(divide="ignore"):
        log_one_minus_pi = np.log(one_minus_pi)
    return log_bernoulli_terms(zhat, log_pi, log_one_minus_pi).sum(axis=-1)


def sticks_prior_log_prob(v, alpha):
    """log prod_k Beta(v_k | alpha, 1) = sum_k [ln alpha + (alpha-1) ln v_k]."""
    v = np.asarray(v, dtype=np.float64)
    if v.size and (np.any(v <= 0) or np.any(v >= 1)):
        raise ValueError("stick fractions must lie in (0, 1)")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    k = v.shape[-1] if v.ndim else 0
    return k * np.log(alpha) + (alpha - 1.0) * np.log(v).sum(axis=-1)


@dataclass
class ComponentReport:
    active: np.ndarray   # sorted indices of active components
    count: int
    mean: np.ndarray     # per-component mean of q(zhat_k = 1) across points
    std: np.ndarray      # per-component std across points
    tau: float


def active_components(include_probs, tau):
    """Which latent components a dataset actually uses.

    `include_probs` is either an (N, K) matrix of per-point posterior
    inclusion probabilities q(zhat_ik = 1) or an already-averaged (K,)
    vector (std is then zero).  Component k counts as active when its
    dataset mean exceeds tau.
    """
    p = np.asarray(include_probs, dtype=np.float64)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("inclusion probabilities must lie in [0, 1]")
    if p.ndim == 1:
        mean, std = p, np.zeros_like(p)
    else:
        mean, std = p.mean(axis=0), p.std(axis=0)
    active = np.flatnonzero(mean > tau)
    return ComponentReport(active=active, count=int(active.size),
                           mean=mean, std=std, tau=float(tau))
