"""Independent oracles shared by the test modules.

These deliberately avoid the library's own gradient/estimation code:
finite differences for gradients, brute-force enumeration for discrete
normalization, Gauss-Hermite tensor quadrature for Gaussian expectations,
and scipy for special functions and adaptive integration.
"""

import itertools

import numpy as np

from ibpdgm import nn, distributions as dist, ibp, model as mdl


def central_diff(fun, x0, i, h=1e-5):
    x = np.array(x0, dtype=np.float64)
    x[i] += h
    fp = fun(x)
    x[i] -= 2 * h
    fm = fun(x)
    return (fp - fm) / (2 * h)


def rel_err(a, b, floor=1e-8):
    denom = max(abs(a), abs(b))
    if denom < floor:
        return abs(a - b)
    return abs(a - b) / denom


def fd_grad_all(objective, params, h=1e-5):
    """Central finite differences of a scalar objective over a flat array."""
    g = np.zeros_like(params)
    for i in range(params.size):
        old = params[i]
        params[i] = old + h
        fp = objective()
        params[i] = old - h
        fm = objective()
        params[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def enumerate_binary(k):
    for bits in itertools.product([0.0, 1.0], repeat=k):
        yield np.array(bits)


def bernoulli_likelihood_rows(m, dec_out, x):
    """log p(x | decoder output) per row, recomputed from first principles."""
    p = 1.0 / (1.0 + np.exp(-dec_out))
    return np.sum(x * np.log(p) + (1.0 - x) * np.log1p(-p), axis=1)


def exact_toy_elbo(m, x, label, v0, mode="marginalize", alpha_sup=0.0,
                   gh_nodes=32):
    """Exact ELBO of the K<=2 toy: enumerate spikes, Gauss-Hermite the slab.

    Requires a decoder without ReLU kinks so the quadrature converges to
    machine precision; sticks are held at the constant v0 (stick term 0).
    """
    k, c = m.K, m.C
    gauss, bern, _ = mdl.encode(m, x)
    probs_y = mdl.classify(m, x).probs
    t, w = np.polynomial.hermite.hermgauss(gh_nodes)
    nodes = np.array(list(itertools.product(*[np.sqrt(2.0) * t] * k)))
    wts = np.prod(np.array(list(itertools.product(*[w / np.sqrt(np.pi)] * k))),
                  axis=1)
    ztilde = gauss.mean + np.sqrt(gauss.var) * nodes

    total = -dist.gaussian_kl_to_standard(gauss)
    labeled = label is not None and label >= 0
    if labeled:
        total += alpha_sup * np.log(probs_y[label])
    else:
        total += -dist.categorical_kl_to_uniform(dist.CategoricalParams(probs_y))

    def recon(z_rows, y_embed):
        out, _ = nn.forward(
            m.decoder,
            np.concatenate([z_rows, np.tile(y_embed, (len(z_rows), 1))], axis=1))
        if m.likelihood_kind == "bernoulli":
            return bernoulli_likelihood_rows(m, out, np.tile(x, (len(z_rows), 1)))
        mean = out[:, :m.D]
        var = np.log1p(np.exp(-np.abs(out[:, m.D:]))) \
            + np.maximum(out[:, m.D:], 0.0) + 1e-6
        return -0.5 * np.sum(np.log(2 * np.pi * var)
                             + (np.tile(x, (len(z_rows), 1)) - mean) ** 2 / var,
                             axis=1)

    for pattern in enumerate_binary(k):
        qz = np.exp(dist.bernoulli_log_prob(pattern, bern))
        total += qz * (ibp.ibp_prior_log_prob(pattern, ibp.stick_breaking(v0))
                       - dist.bernoulli_log_prob(pattern, bern))
        z_rows = ztilde * pattern
        if labeled:
            r = recon(z_rows, np.eye(c)[label])
        elif mode == "marginalize":
            r = sum(probs_y[ci] * recon(z_rows, np.eye(c)[ci]) for ci in range(c))
        else:
            r = recon(z_rows, np.zeros(c))
        total += qz * float(np.sum(wts * r))
    return float(total)


def make_enumerable_toy(seed=7, input_dim=5, num_classes=2, kind="bernoulli"):
    rng = np.random.default_rng(seed)
    m = mdl.build_model(input_dim, num_classes, 2, 4, kind, 2.0, 1.0, rng)
    m.decoder.activations[0] = "identity"
    if kind == "bernoulli":
        x = (rng.random(input_dim) < 0.5).astype(np.float64)
    else:
        x = rng.normal(size=input_dim)
    return m, x
