"""The IBP-DGM: spike-and-slab latent code with stick-breaking feature
probabilities, class-conditional decoder, and amortized posteriors.

A single encoder emits the Gaussian posterior (mean, variance) and the
Bernoulli inclusion logits from one shared hidden layer; a classifier
emits label probabilities; one shared decoder takes [z ; label one-hot]
so each class gets its own conditional likelihood without C separate
networks.  Decoder weights carry a spherical Gaussian prior and a
point-mass posterior, which turns into plain weight decay.
"""

import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import nn
from . import distributions as dist
from . import ibp

CHECKPOINT_FORMAT = "IBPDGM-1"
VAR_FLOOR = 1e-6
LIKELIHOODS = ("bernoulli", "gaussian")
UNLABELED_MODES = ("marginalize", "unconditional")


class IbpDgm:
    def __init__(self, encoder, classifier, decoder, sticks, likelihood_kind,
                 sigma_theta_sq, num_classes, input_dim):
        if likelihood_kind not in LIKELIHOODS:
            raise ValueError(f"unknown likelihood kind {likelihood_kind!r}")
        if sigma_theta_sq <= 0:
            raise ValueError("sigma_theta_sq must be positive")
        k = sticks.K
        if encoder.output_dim != 3 * k:
            raise ValueError("encoder must emit 3K outputs (mean, raw var, logits)")
        if decoder.input_dim != k + num_classes:
            raise ValueError("decoder input must be K + C")
        want = input_dim if likelihood_kind == "bernoulli" else 2 * input_dim
        if decoder.output_dim != want:
            raise ValueError("decoder output dim does not match the likelihood kind")
        if classifier.output_dim != num_classes:
            raise ValueError("classifier must emit C logits")
        self.encoder = encoder
        self.classifier = classifier
        self.decoder = decoder
        self.sticks = sticks
        self.likelihood_kind = likelihood_kind
        self.sigma_theta_sq = float(sigma_theta_sq)
        self.C = int(num_classes)
        self.D = int(input_dim)
        self.K = k

    def parameter_groups(self):
        """Flat parameter arrays, keyed by group; optimizer-facing view."""
        return {
            "encoder": self.encoder.params,
            "classifier": self.classifier.params,
            "decoder": self.decoder.params,
            "sticks": self.sticks.params,
        }


def build_model(input_dim, num_classes, truncation, hidden, likelihood_kind,
                alpha, sigma_theta_sq, rng):
    """Construct an IbpDgm with Glorot-initialized single-hidden-layer nets."""
    k = int(truncation)
    out_dim = input_dim if likelihood_kind == "bernoulli" else 2 * input_dim
    encoder = nn.glorot_init(input_dim, [hidden], 3 * k, rng)
    classifier = nn.glorot_init(input_dim, [hidden], num_classes, rng)
    decoder = nn.glorot_init(k + num_classes, [hidden], out_dim, rng)
    sticks = ibp.GlobalSticks(k, alpha)
    return IbpDgm(encoder, classifier, decoder, sticks, likelihood_kind,
                  sigma_theta_sq, num_classes, input_dim)


# ---------------------------------------------------------------------------
# posterior heads

def split_encoder_out(out, k):
    """(..., 3K) raw encoder output -> (mean, var, inclusion logits)."""
    mean = out[..., :k]
    var = dist.softplus(out[..., k:2 * k]) + VAR_FLOOR
    logits = out[..., 2 * k:]
    return mean, var, logits


def encode(m, x):
    """Posterior parameters for one input: (Gaussian over the slab,
    Bernoulli over the spikes, the forward tape)."""
    out, tape = nn.forward(m.encoder, x)
    mean, var, logits = split_encoder_out(out, m.K)
    return dist.DiagGaussianParams(mean, var), dist.BernoulliParams(logits), tape


def classify(m, x):
    out, _ = nn.forward(m.classifier, x)
    return dist.CategoricalParams.from_logits(out)


def predict(m, x):
    """argmax class; ties break to the lowest index."""
    return int(np.argmax(classify(m, x).probs))


def predict_batch(m, x):
    out, _ = nn.forward(m.classifier, np.atleast_2d(x))
    return np.argmax(out, axis=1)


def compose_latent(ztilde, zhat):
    """Elementwise spike-and-slab product z = ztilde * zhat."""
    ztilde = np.asarray(ztilde, dtype=np.float64)
    zhat = np.asarray(zhat, dtype=np.float64)
    if ztilde.shape != zhat.shape:
        raise ValueError("ztilde and zhat must have the same shape")
    return ztilde * zhat


def decode(m, z, y_embed):
    """Conditional likelihood parameters for one latent code and label
    embedding (one-hot for labeled data, soft weights or zeros otherwise)."""
    z = np.asarray(z, dtype=np.float64)
    y_embed = np.asarray(y_embed, dtype=np.float64)
    if z.shape[-1] != m.K or y_embed.shape[-1] != m.C:
        raise ValueError("latent/label embedding dimensions do not match the model")
    out, _ = nn.forward(m.decoder, np.concatenate([z, y_embed], axis=-1))
    return decoder_out_to_params(m, out)


def decoder_out_to_params(m, out):
    if m.likelihood_kind == "bernoulli":
        return dist.BernoulliParams(out)
    mean = out[..., :m.D]
    var = dist.softplus(out[..., m.D:]) + VAR_FLOOR
    return dist.DiagGaussianParams(mean, var)


def likelihood_log_prob(m, x, params):
    if m.likelihood_kind == "bernoulli":
        if not isinstance(params, dist.BernoulliParams):
            raise ValueError("Bernoulli likelihood expects BernoulliParams")
        return dist.bernoulli_log_prob(x, params)
    if not isinstance(params, dist.DiagGaussianParams):
        raise ValueError("Gaussian likelihood expects DiagGaussianParams")
    return dist.gaussian_log_prob(x, params)


def theta_log_prior(m):
    """Spherical Gaussian log-prior over the decoder weights and its gradient.

    With a point-mass posterior over the decoder parameters there is no
    entropy term; the gradient is plain weight decay, -theta / sigma^2.
    """
    theta = m.decoder.params
    s2 = m.sigma_theta_sq
    value = float(-0.5 * theta.size * np.log(2.0 * np.pi * s2)
                  - 0.5 * np.dot(theta, theta) / s2)
    grad = -theta / s2
    return value, grad


def onehot(label, num_classes):
    e = np.zeros(num_classes, dtype=np.float64)
    e[int(label)] = 1.0
    return e


# ---------------------------------------------------------------------------
# joint latent draws and per-point objective terms

@dataclass
class LatentDraw:
    """One Monte Carlo joint sample with its per-factor log-densities."""
    ztilde: np.ndarray
    zhat: np.ndarray
    v: np.ndarray
    y: Optional[int] = None
    logq_ztilde: float = 0.0
    logp_ztilde: float = 0.0
    logq_zhat: float = 0.0
    logp_zhat: float = 0.0   # conditional on the sampled sticks
    logq_v: float = 0.0
    logp_v: float = 0.0

    @property
    def z(self):
        return compose_latent(self.ztilde, self.zhat)


def draw_latents(m, x, rng):
    """Sample (ztilde, zhat, v) from the amortized posteriors for one point."""
    gauss, bern, _ = encode(m, x)
    eps = rng.standard_normal(m.K)
    ztilde = dist.gaussian_reparam_sample(gauss, eps)
    zhat = dist.bernoulli_sample(bern, rng)
    v = m.sticks.sample((), rng)
    return LatentDraw(
        ztilde=ztilde, zhat=zhat, v=v,
        logq_ztilde=dist.gaussian_log_prob(ztilde, gauss),
        logp_ztilde=dist.gaussian_log_prob(
            ztilde, dist.DiagGaussianParams(np.zeros(m.K), np.ones(m.K))),
        logq_zhat=dist.bernoulli_log_prob(zhat, bern),
        logp_zhat=float(ibp.ibp_prior_log_prob_from_sticks(zhat, v)),
        logq_v=float(m.sticks.log_prob(v)),
        logp_v=float(ibp.sticks_prior_log_prob(v, m.sticks.alpha)),
    )


def per_point_elbo_terms(m, x, label, draw, mode="marginalize", alpha_sup=0.0):
    """Signed ELBO contributions of one data point for one joint draw.

    Labeled points condition the decoder on their one-hot label and add
    the supervised classifier term alpha_sup * log q(y = label); unlabeled
    points either marginalize the reconstruction over classes weighted by
    q(y) or use a zero label vector, and pay -KL(q(y) || Uniform(C)).
    Returns a dict with keys recon, kl_gauss, term_zhat, term_v, term_y.
    """
    if mode not in UNLABELED_MODES:
        raise ValueError(f"unknown unlabeled mode {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    z = draw.z
    labeled = label is not None and int(label) >= 0

    if labeled:
        recon = likelihood_log_prob(m, x, decode(m, z, onehot(label, m.C)))
        term_y = 0.0
        if alpha_sup != 0.0:
            term_y = alpha_sup * dist.categorical_log_prob(int(label), classify(m, x))
    else:
        q_y = classify(m, x)
        if mode == "marginalize":
            recon = sum(
                q_y.probs[c] * likelihood_log_prob(m, x, decode(m, z, onehot(c, m.C)))
                for c in range(m.C))
        else:
            recon = likelihood_log_prob(m, x, decode(m, z, np.zeros(m.C)))
        term_y = -dist.categorical_kl_to_uniform(q_y)

    gauss, _, _ = encode(m, x)
    return {
        "recon": float(recon),
        "kl_gauss": -dist.gaussian_kl_to_standard(gauss),
        "term_zhat": draw.logp_zhat - draw.logq_zhat,
        "term_v": draw.logp_v - draw.logq_v,
        "term_y": float(term_y),
    }


def generate(m, n, rng, y=None, sample_observations=False):
    """Draw n observations from the generative process.

    Sticks come from the Beta(alpha, 1) prior, feature probabilities from
    stick-breaking, spikes and slab from their priors; the label is the
    given class or drawn uniformly.  Returns (likelihood means, sampled
    observations or None).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    means = np.empty((n, m.D))
    samples = np.empty((n, m.D)) if sample_observations else None
    for i in range(n):
        v = dist.beta_sample_array(m.sticks.alpha, 1.0, (m.K,), rng)
        pi = ibp.stick_breaking(v)
        zhat = (rng.random(m.K) < pi).astype(np.float64)
        ztilde = rng.standard_normal(m.K)
        label = int(y) if y is not None else int(rng.integers(m.C))
        params = decode(m, compose_latent(ztilde, zhat), onehot(label, m.C))
        if m.likelihood_kind == "bernoulli":
            means[i] = params.probs
            if sample_observations:
                samples[i] = (rng.random(m.D) < params.probs).astype(np.float64)
        else:
            means[i] = params.mean
            if sample_observations:
                samples[i] = params.mean + np.sqrt(params.var) * rng.standard_normal(m.D)
    return means, samples


# ---------------------------------------------------------------------------
# checkpointing: JSON manifest + flat little-endian float64 blob

def _manifest_entries(m):
    return [
        ("encoder", m.encoder.params),
        ("classifier", m.classifier.params),
        ("decoder", m.decoder.params),
        ("sticks", m.sticks.params),
    ]


def save_checkpoint(m, path):
    """Write `path` (JSON manifest) and `path + '.bin'` (parameter blob).

    The blob is every group's flat float64 parameters, little-endian, in
    manifest order; round-trips bit-exactly.
    """
    blob_name = os.path.basename(path) + ".bin"
    manifest = {
        "format_version": CHECKPOINT_FORMAT,
        "blob": blob_name,
        "likelihood_kind": m.likelihood_kind,
        "input_dim": m.D,
        "num_classes": m.C,
        "truncation": m.K,
        "alpha": m.sticks.alpha,
        "sigma_theta_sq": m.sigma_theta_sq,
        "encoder_dims": m.encoder.dims,
        "encoder_activations": m.encoder.activations,
        "classifier_dims": m.classifier.dims,
        "classifier_activations": m.classifier.activations,
        "decoder_dims": m.decoder.dims,
        "decoder_activations": m.decoder.activations,
        "parameters": [
            {"name": name, "shape": [int(arr.size)]}
            for name, arr in _manifest_entries(m)
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    blob = np.concatenate([arr for _, arr in _manifest_entries(m)])
    with open(os.path.join(os.path.dirname(path) or ".", blob_name), "wb") as fh:
        fh.write(blob.astype("<f8").tobytes())


def load_checkpoint(path):
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != CHECKPOINT_FORMAT:
        raise ValueError(
            f"unsupported checkpoint format {manifest.get('format_version')!r}")
    blob_path = os.path.join(os.path.dirname(path) or ".", manifest["blob"])
    flat = np.frombuffer(open(blob_path, "rb").read(), dtype="<f8").astype(np.float64)

    encoder = nn.DenseNet(manifest["encoder_dims"], manifest["encoder_activations"])
    classifier = nn.DenseNet(manifest["classifier_dims"], manifest["classifier_activations"])
    decoder = nn.DenseNet(manifest["decoder_dims"], manifest["decoder_activations"])
    sticks = ibp.GlobalSticks(manifest["truncation"], manifest["alpha"])
    m = IbpDgm(encoder, classifier, decoder, sticks,
               manifest["likelihood_kind"], manifest["sigma_theta_sq"],
               manifest["num_classes"], manifest["input_dim"])

    expected = sum(entry["shape"][0] for entry in manifest["parameters"])
    if flat.size != expected:
        raise ValueError(
            f"parameter blob holds {flat.size} values, manifest expects {expected}")
    off = 0
    groups = m.parameter_groups()
    for entry in manifest["parameters"]:
        n = entry["shape"][0]
        target = groups[entry["name"]]
        if target.size != n:
            raise ValueError(f"group {entry['name']!r} size mismatch")
        target[:] = flat[off:off + n]
        off += n
    return m
