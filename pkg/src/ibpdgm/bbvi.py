"""Monte Carlo ELBO and gradient estimation.

The Gaussian slab gets pathwise (reparameterized) gradients; the Bernoulli
spikes and the Beta sticks get score-function gradients with weighted
score control variates, a_n = Cov(f_n, h_n) / Var(h_n) estimated per
variational parameter from the same sample set.  Learning signals are
Rao-Blackwellized: each variable's signal keeps only the objective terms
in its Markov blanket.  Gaussian and Categorical complexity terms are
analytic; spike and stick terms are Monte Carlo.

Per-data-point terms are averaged over the batch and multiplied by the
dataset size, so a minibatch estimate targets the full-data objective;
global quantities (stick terms, the decoder weight prior) enter once.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import nn
from . import distributions as dist
from . import ibp
from . import model as mdl


class NumericError(RuntimeError):
    """A named objective term or gradient went non-finite."""

    def __init__(self, term, detail=""):
        self.term = term
        super().__init__(f"non-finite value in term {term!r}" +
                         (f": {detail}" if detail else ""))


@dataclass
class McConfig:
    num_samples: int = 8
    cv_eps: float = 1e-8
    use_control_variates: bool = True

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError("need at least one Monte Carlo sample")
        if self.use_control_variates and self.num_samples < 2:
            raise ValueError("control variates need at least 2 samples")
        if self.cv_eps <= 0:
            raise ValueError("cv_eps must be positive")


@dataclass
class ScoreSampleSet:
    """Per-sample scalar learning signals f_s and score vectors h_s."""
    f: np.ndarray   # (S,)
    h: np.ndarray   # (S, P)

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=np.float64)
        self.h = np.asarray(self.h, dtype=np.float64)
        if self.f.ndim != 1 or self.h.ndim != 2 or self.f.size != self.h.shape[0]:
            raise ValueError("f must be (S,) and h (S, P) with matching S")


def control_variate_coeffs(samples, cv_eps=1e-8):
    """Per-parameter weighted-score coefficients Cov(f*h_n, h_n)/Var(h_n).

    Coordinates whose score variance falls below cv_eps get coefficient 0
    (a constant score carries no information to regress on).
    """
    s = samples.f.size
    if s < 2:
        raise ValueError("control variates need at least 2 samples")
    grad_samples = samples.f[:, None] * samples.h        # per-parameter f_n
    hc = samples.h - samples.h.mean(axis=0)
    gc = grad_samples - grad_samples.mean(axis=0)
    var_h = np.mean(hc * hc, axis=0)
    cov = np.mean(gc * hc, axis=0)
    return np.where(var_h < cv_eps, 0.0, cov / (var_h + cv_eps))


def score_function_grad(samples, a=None):
    """(1/S) sum_s h_s * (f_s - a): the weighted score-function estimate.

    Unbiased for the gradient of E[f] when `a` is held independent of the
    samples, because the score has zero mean.
    """
    if a is None:
        a = 0.0
    return np.mean(samples.h * (samples.f[:, None] - a), axis=0)


@dataclass
class ElboBreakdown:
    """Per-term ELBO estimate (signed contributions; total is their sum)
    plus ELBO-ascent gradients per parameter group."""
    total: float
    recon: float
    kl_gauss: float
    term_zhat: float
    term_v: float
    term_y: float
    grads: dict
    diagnostics: dict = field(default_factory=dict)


def _softmax_jacobian_vec(probs, g):
    """Chain grad-w.r.t.-probs g through softmax: rows p*(g - sum(p*g))."""
    inner = np.sum(probs * g, axis=-1, keepdims=True)
    return probs * (g - inner)


def _likelihood_values_and_grads(kind, dec_out, x_rows, input_dim):
    """Per-row log-likelihood and its gradient w.r.t. the raw decoder output."""
    if kind == "bernoulli":
        r = np.sum(x_rows * dec_out - dist.softplus(dec_out), axis=1)
        grad = x_rows - dist.sigmoid(dec_out)
        return r, grad
    mean = dec_out[:, :input_dim]
    raw = dec_out[:, input_dim:]
    var = dist.softplus(raw) + mdl.VAR_FLOOR
    diff = x_rows - mean
    r = -0.5 * np.sum(np.log(2.0 * np.pi * var) + diff * diff / var, axis=1)
    g_mean = diff / var
    g_var = -0.5 / var + 0.5 * diff * diff / (var * var)
    return r, np.concatenate([g_mean, g_var * dist.sigmoid(raw)], axis=1)


def _check_finite(name, *arrays):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericError(name)


def estimate_elbo_and_grads(m, x, labels, cfg, rng, dataset_size=None,
                            mode="marginalize", alpha_sup=0.0,
                            frozen_sticks=None):
    """Estimate the full-data ELBO and its gradients from one minibatch.

    x is (B, D); labels is (B,) with -1 marking unlabeled points.  For
    each point, S joint samples (noise -> ztilde, zhat, v) are drawn; all
    objective terms are assembled vectorized over (B, S).  When
    `frozen_sticks` is a length-K vector, the sticks are held at that
    constant: no stick sampling, no stick gradient, and the stick term is
    0 (used by the enumeration oracles).

    Returns an ElboBreakdown whose gradients point in the ELBO-ascent
    direction and include the decoder weight-decay prior.
    """
    if mode not in mdl.UNLABELED_MODES:
        raise ValueError(f"unknown unlabeled mode {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("batch must be a nonempty (B, D) matrix")
    if x.shape[1] != m.D:
        raise ValueError("batch feature dimension does not match the model")
    labels = (np.full(x.shape[0], -1, dtype=np.int64) if labels is None
              else np.asarray(labels, dtype=np.int64))
    batch_size, s = x.shape[0], cfg.num_samples
    n_data = int(dataset_size) if dataset_size is not None else batch_size
    scale = n_data / batch_size
    k, c = m.K, m.C

    # --- amortized posterior heads -----------------------------------------
    enc_out, enc_tape = nn.forward(m.encoder, x)
    mean, var, logits_z = mdl.split_encoder_out(enc_out, k)
    sigma = np.sqrt(var)
    pi_hat = dist.sigmoid(logits_z)

    cls_out, cls_tape = nn.forward(m.classifier, x)
    probs_y = dist.softmax(cls_out)                       # (B, C)

    # --- joint samples ------------------------------------------------------
    eps = rng.standard_normal((batch_size, s, k))
    ztilde = mean[:, None, :] + sigma[:, None, :] * eps
    zhat = (rng.random((batch_size, s, k)) < pi_hat[:, None, :]).astype(np.float64)
    z = ztilde * zhat

    if frozen_sticks is not None:
        v = np.broadcast_to(np.asarray(frozen_sticks, dtype=np.float64),
                            (batch_size, s, k))
    else:
        v = m.sticks.sample((batch_size, s), rng)

    logp_zhat = ibp.ibp_prior_log_prob_from_sticks(zhat, v)              # (B, S)
    logq_zhat = np.sum(zhat * logits_z[:, None, :]
                       - dist.softplus(logits_z)[:, None, :], axis=2)    # (B, S)

    # --- reconstruction + decoder/path gradients ---------------------------
    labeled = labels >= 0
    recon = np.empty((batch_size, s))
    g_z = np.zeros((batch_size, s, k))        # weighted by scale/S already
    dec_grads = m.decoder.zero_grad_like()
    g_cls_logits = np.zeros((batch_size, c))
    r_per_class = None

    def run_decoder(z_rows, y_rows, x_rows, weight_rows):
        dec_in = np.concatenate([z_rows, y_rows], axis=1)
        out, tape = nn.forward(m.decoder, dec_in)
        r_rows, g_out = _likelihood_values_and_grads(
            m.likelihood_kind, out, x_rows, m.D)
        g_params, g_in = nn.backward(m.decoder, tape, g_out * weight_rows[:, None])
        return r_rows, g_params, g_in[:, :k]

    idx_lab = np.flatnonzero(labeled)
    if idx_lab.size:
        bl = idx_lab.size
        z_rows = z[idx_lab].reshape(bl * s, k)
        y_rows = np.repeat(np.eye(c)[labels[idx_lab]], s, axis=0)
        x_rows = np.repeat(x[idx_lab], s, axis=0)
        w_rows = np.full(bl * s, scale / s)
        r_rows, g_params, gz_rows = run_decoder(z_rows, y_rows, x_rows, w_rows)
        recon[idx_lab] = r_rows.reshape(bl, s)
        g_z[idx_lab] = gz_rows.reshape(bl, s, k)
        dec_grads += g_params

    idx_unl = np.flatnonzero(~labeled)
    if idx_unl.size:
        bu = idx_unl.size
        if mode == "marginalize":
            # rows ordered (point, sample, class)
            z_rows = np.repeat(z[idx_unl].reshape(bu * s, k), c, axis=0)
            y_rows = np.tile(np.eye(c), (bu * s, 1))
            x_rows = np.repeat(x[idx_unl], s * c, axis=0)
            w_rows = (np.repeat(probs_y[idx_unl], s, axis=0).reshape(bu * s * c)
                      * (scale / s))
            r_rows, g_params, gz_rows = run_decoder(z_rows, y_rows, x_rows, w_rows)
            r_per_class = r_rows.reshape(bu, s, c)
            recon[idx_unl] = np.sum(probs_y[idx_unl][:, None, :] * r_per_class, axis=2)
            # class one-hots are constants; the z-gradient sums the
            # probability-weighted class rows (weights already folded in)
            g_z[idx_unl] = gz_rows.reshape(bu, s, c, k).sum(axis=2)
        else:
            z_rows = z[idx_unl].reshape(bu * s, k)
            y_rows = np.zeros((bu * s, c))
            x_rows = np.repeat(x[idx_unl], s, axis=0)
            w_rows = np.full(bu * s, scale / s)
            r_rows, g_params, gz_rows = run_decoder(z_rows, y_rows, x_rows, w_rows)
            recon[idx_unl] = r_rows.reshape(bu, s)
            g_z[idx_unl] = gz_rows.reshape(bu, s, k)
        dec_grads += g_params
    _check_finite("recon", recon)

    # --- spike (zhat) score gradients, per-point control variates ----------
    f_zhat = recon + logp_zhat - logq_zhat                # (B, S)
    _check_finite("term_zhat", f_zhat)
    h_zhat = zhat - pi_hat[:, None, :]                    # (B, S, K)
    a_zhat = 0.0
    if cfg.use_control_variates:
        grad_samples = f_zhat[:, :, None] * h_zhat
        hc = h_zhat - h_zhat.mean(axis=1, keepdims=True)
        gc = grad_samples - grad_samples.mean(axis=1, keepdims=True)
        var_h = np.mean(hc * hc, axis=1)                  # (B, K)
        cov = np.mean(gc * hc, axis=1)
        a_zhat = np.where(var_h < cfg.cv_eps, 0.0,
                          cov / (var_h + cfg.cv_eps))[:, None, :]
    g_logits = np.mean(h_zhat * (f_zhat[:, :, None] - a_zhat), axis=1)   # (B, K)

    # --- pathwise gradients for the Gaussian slab ---------------------------
    g_ztilde = g_z * zhat                                  # masked by the spikes
    g_mean = g_ztilde.sum(axis=1)                          # scale/S folded in
    g_var = np.sum(g_ztilde * eps, axis=1) / (2.0 * sigma)
    # analytic -KL(q(ztilde) || N(0, I)) and its gradients
    kl_gauss_points = 0.5 * np.sum(mean ** 2 + var - 1.0 - np.log(var), axis=1)
    g_mean += scale * (-mean)
    g_var += scale * (-0.5 * (1.0 - 1.0 / var))

    raw = enc_out[:, k:2 * k]
    enc_grad_out = np.concatenate(
        [g_mean, g_var * dist.sigmoid(raw), scale * g_logits], axis=1)
    enc_grads, _ = nn.backward(m.encoder, enc_tape, enc_grad_out)

    # --- label terms ---------------------------------------------------------
    term_y_points = np.zeros(batch_size)
    if idx_unl.size:
        p_u = probs_y[idx_unl]
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = np.where(p_u > 0, np.log(np.maximum(p_u, 1e-300)), 0.0)
        kl_y = np.sum(p_u * (logp + np.log(c)), axis=1)
        term_y_points[idx_unl] = -kl_y
        g_probs = -(logp + np.log(c) + 1.0) * scale       # d(-KL)/d probs
        if mode == "marginalize" and r_per_class is not None:
            g_probs = g_probs + r_per_class.mean(axis=1) * scale
        g_cls_logits[idx_unl] = _softmax_jacobian_vec(p_u, g_probs)
    if idx_lab.size and alpha_sup != 0.0:
        y_onehots = np.eye(c)[labels[idx_lab]]
        term_y_points[idx_lab] = alpha_sup * np.log(
            np.maximum(probs_y[idx_lab][np.arange(idx_lab.size), labels[idx_lab]],
                       1e-300))
        g_cls_logits[idx_lab] = scale * alpha_sup * (y_onehots - probs_y[idx_lab])
    cls_grads, _ = nn.backward(m.classifier, cls_tape, g_cls_logits)

    # --- stick gradients, pooled over every (point, sample) draw ------------
    if frozen_sticks is not None:
        term_v = 0.0
        stick_grads = np.zeros_like(m.sticks.params)
        logp_v = logq_v = np.zeros((batch_size, s))
    else:
        logp_v = ibp.sticks_prior_log_prob(v, m.sticks.alpha)            # (B, S)
        logq_v = m.sticks.log_prob(v)                                    # (B, S)
        # Markov blanket of v: every point's spike prior (batch-scaled to
        # the dataset) plus the sticks' own prior and entropy.
        f_v = (n_data * logp_zhat + logp_v - logq_v).reshape(-1)
        h_v = m.sticks.score_grads(v).reshape(-1, 2 * k)
        _check_finite("term_v", f_v, h_v)
        sample_set = ScoreSampleSet(f_v, h_v)
        a_v = (control_variate_coeffs(sample_set, cfg.cv_eps)
               if cfg.use_control_variates and f_v.size >= 2 else None)
        stick_grads = score_function_grad(sample_set, a_v)
        term_v = float(np.mean(logp_v - logq_v))

    # --- decoder weight prior ------------------------------------------------
    _, theta_prior_grad = mdl.theta_log_prior(m)
    dec_grads += theta_prior_grad

    breakdown = ElboBreakdown(
        total=0.0,
        recon=scale * float(np.sum(recon.mean(axis=1))),
        kl_gauss=-scale * float(np.sum(kl_gauss_points)),
        term_zhat=scale * float(np.sum((logp_zhat - logq_zhat).mean(axis=1))),
        term_v=term_v,
        term_y=scale * float(np.sum(term_y_points)),
        grads={
            "encoder": enc_grads,
            "classifier": cls_grads,
            "decoder": dec_grads,
            "sticks": stick_grads,
        },
        diagnostics={
            "log_zero_events": int(np.sum(logp_zhat < ibp.LOG_ZERO_SENTINEL / 2.0)),
        },
    )
    breakdown.total = (breakdown.recon + breakdown.kl_gauss + breakdown.term_zhat
                       + breakdown.term_v + breakdown.term_y)
    for name in ("recon", "kl_gauss", "term_zhat", "term_v", "term_y"):
        if not np.isfinite(getattr(breakdown, name)):
            raise NumericError(name)
    for name, g in breakdown.grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"grad_{name}")
    return breakdown


def clip_global_norm(grads, max_norm=10.0):
    """Scale the gradient dict in place so its joint norm is <= max_norm."""
    total = np.sqrt(sum(float(np.dot(g, g)) for g in grads.values()))
    if total > max_norm:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total
