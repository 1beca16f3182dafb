"""Training loop, run configuration, metrics, and evaluation.

One AdaM state per parameter group; gradients are clipped at global norm
10 before each update (score-function estimators occasionally spike).
Per-epoch metrics rows go to a CSV with a fixed column schema; the ELBO
metric is re-estimated each epoch with a fixed evaluation stream so the
curve reflects parameter movement rather than fresh sampling noise.
"""

import os
from dataclasses import dataclass, fields, replace

import numpy as np

from . import nn
from . import bbvi
from . import data as dio
from . import ibp
from . import model as mdl

METRICS_COLUMNS = ("epoch", "elbo", "recon", "kl_gauss", "term_zhat",
                   "term_v", "term_y", "train_err", "test_err", "n_active")
DEFAULT_GRAD_CLIP = 10.0
SIGMA_THETA_GRID = (1e-3, 1e-2, 1e-1)


@dataclass
class RunConfig:
    # data
    dataset: str = "synth-ibp"        # synth-ibp | synth-blobs | idx | amat
    likelihood: str = "bernoulli"
    images: str = ""                  # idx: image/label file pair
    labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    train_path: str = ""              # amat files
    test_path: str = ""
    limit_train: int = 0              # optional cap on training rows (0 = all)
    synth_n: int = 2000
    synth_test_n: int = 500
    synth_features: int = 4           # ground-truth G for synth-ibp
    synth_dim: int = 30
    synth_noise: float = 0.02
    synth_classes: int = 2            # synth-blobs
    synth_separation: float = 4.0
    add_noise: bool = False           # U[0,1) noise on gaussian loads
    # model
    truncation: int = 50
    alpha: float = 2.0
    hidden: int = 500
    sigma_theta_sq: float = 1e-2
    # optimizer
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    grad_clip: float = DEFAULT_GRAD_CLIP
    # objective
    mc_samples: int = 8
    labeled_fraction: float = 0.01
    alpha_sup: float = -1.0           # < 0 means auto: 0.1 * N / N_labeled
    unlabeled_mode: str = "marginalize"
    # loop
    epochs: int = 10
    batch_size: int = 100
    seed: int = 0
    deterministic: bool = False
    eval_mc_samples: int = 4
    tau: float = 0.01
    out: str = "runs"

    def validate(self):
        if self.dataset not in ("synth-ibp", "synth-blobs", "idx", "amat"):
            raise ValueError(f"unknown dataset kind {self.dataset!r}")
        if self.likelihood not in mdl.LIKELIHOODS:
            raise ValueError(f"unknown likelihood {self.likelihood!r}")
        if self.unlabeled_mode not in mdl.UNLABELED_MODES:
            raise ValueError(f"unknown unlabeled mode {self.unlabeled_mode!r}")
        if self.truncation < 1 or self.hidden < 1 or self.epochs < 0:
            raise ValueError("truncation, hidden, epochs must be positive")
        if self.batch_size < 1 or self.mc_samples < 1:
            raise ValueError("batch_size and mc_samples must be >= 1")
        if not (0 < self.labeled_fraction < 1):
            raise ValueError("labeled_fraction must lie in (0, 1)")
        if self.sigma_theta_sq <= 0 or self.lr <= 0 or self.alpha <= 0:
            raise ValueError("sigma_theta_sq, lr, alpha must be positive")
        return self


def config_fields():
    return {f.name: f.type for f in fields(RunConfig)}


def load_datasets(cfg, rng):
    """Materialize (train, test) datasets for a run configuration."""
    if cfg.dataset == "synth-ibp":
        synth = dio.synth_ibp_data(cfg.synth_n + cfg.synth_test_n,
                                   cfg.synth_features, cfg.synth_dim,
                                   cfg.synth_noise, rng)
        full = synth.dataset
        train = full.subset(np.arange(cfg.synth_n))
        test = full.subset(np.arange(cfg.synth_n, full.n))
        return train, test
    if cfg.dataset == "synth-blobs":
        # train and test share the class centers, so draw them jointly
        joint = dio.synth_blobs(cfg.synth_n + cfg.synth_test_n, cfg.synth_classes,
                                cfg.synth_dim, cfg.synth_separation, rng)
        return (joint.subset(np.arange(cfg.synth_n)),
                joint.subset(np.arange(cfg.synth_n, joint.n)))
    if cfg.dataset == "idx":
        train = dio.load_idx(cfg.images, cfg.labels)
        test = (dio.load_idx(cfg.test_images, cfg.test_labels)
                if cfg.test_images else None)
    else:
        train = dio.load_amat(cfg.train_path, kind=cfg.likelihood)
        test = dio.load_amat(cfg.test_path, kind=cfg.likelihood) if cfg.test_path else None
    if cfg.limit_train and train.n > cfg.limit_train:
        train = train.subset(np.arange(cfg.limit_train))
    if cfg.add_noise and train.kind == "gaussian":
        noise_rng = np.random.default_rng(cfg.seed + 2)
        train = dio.Dataset(dio.add_uniform_noise(train.features, noise_rng),
                            train.labels, train.num_classes, train.kind)
        if test is not None:
            test = dio.Dataset(dio.add_uniform_noise(test.features, noise_rng),
                               test.labels, test.num_classes, test.kind)
    return train, test


def format_metrics_row(values):
    out = []
    for v in values:
        if isinstance(v, (int, np.integer)):
            out.append(str(int(v)))
        else:
            out.append(repr(float(v)))
    return ",".join(out)


def error_rate(m, dataset):
    """Percent of points whose predicted class differs from the label.

    Points with the -1 sentinel are skipped; nan when nothing is labeled.
    """
    mask = dataset.labels >= 0
    if not np.any(mask):
        return float("nan")
    pred = mdl.predict_batch(m, dataset.features[mask])
    return 100.0 * float(np.mean(pred != dataset.labels[mask]))


def inclusion_probs(m, features, batch=2048):
    """q(zhat_ik = 1) for every point: sigmoid of the encoder logit head."""
    rows = []
    for start in range(0, features.shape[0], batch):
        out, _ = nn.forward(m.encoder, features[start:start + batch])
        _, _, logits = mdl.split_encoder_out(out, m.K)
        rows.append(1.0 / (1.0 + np.exp(-np.clip(logits, -500, 500))))
    return np.concatenate(rows, axis=0)


def component_report(m, dataset, tau):
    return ibp.active_components(inclusion_probs(m, dataset.features), tau)


@dataclass
class TrainResult:
    model: "mdl.IbpDgm"
    metrics_path: str
    checkpoint_path: str
    history: list


def train(cfg, train_data=None, test_data=None, log=None):
    """Run the full training loop; returns the model and metrics locations.

    Datasets may be passed directly (tests, notebooks) or loaded from the
    config.  Bernoulli-kind features are re-binarized with a fresh
    Bernoulli draw before every epoch.
    """
    cfg.validate()
    os.makedirs(cfg.out, exist_ok=True)
    seed_root = np.random.SeedSequence(cfg.seed)
    s_data, s_model, s_split, s_train, s_eval = seed_root.spawn(5)

    if train_data is None:
        train_data, test_data = load_datasets(cfg, np.random.default_rng(s_data))

    # stratified labeled/unlabeled split (skipped when nothing is labeled)
    has_labels = np.any(train_data.labels >= 0)
    if has_labels:
        labeled_idx, _ = dio.stratified_label_split(
            train_data.labels, cfg.labeled_fraction, np.random.default_rng(s_split))
        split_train = dio.apply_split(train_data, labeled_idx)
        n_labeled = labeled_idx.size
    else:
        split_train = train_data
        n_labeled = 0
    alpha_sup = cfg.alpha_sup
    if alpha_sup < 0:
        alpha_sup = 0.1 * split_train.n / n_labeled if n_labeled else 0.0

    m = mdl.build_model(split_train.dim, split_train.num_classes, cfg.truncation,
                        cfg.hidden, split_train.kind, cfg.alpha,
                        cfg.sigma_theta_sq, np.random.default_rng(s_model))
    states = {name: nn.AdamState(p.size, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2)
              for name, p in m.parameter_groups().items()}
    mc_cfg = bbvi.McConfig(num_samples=cfg.mc_samples)
    eval_cfg = bbvi.McConfig(num_samples=max(2, cfg.eval_mc_samples))
    train_rng = np.random.default_rng(s_train)
    eval_seed = s_eval.generate_state(1)[0]

    metrics_path = os.path.join(cfg.out, "metrics.csv")
    history = []
    n = split_train.n
    with open(metrics_path, "w", encoding="utf-8") as metrics:
        metrics.write(",".join(METRICS_COLUMNS) + "\n")
        for epoch in range(cfg.epochs):
            feats = split_train.features
            if split_train.kind == "bernoulli":
                feats = dio.binarize_epoch(feats, train_rng)
            order = train_rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                breakdown = bbvi.estimate_elbo_and_grads(
                    m, feats[idx], split_train.labels[idx], mc_cfg, train_rng,
                    dataset_size=n, mode=cfg.unlabeled_mode, alpha_sup=alpha_sup)
                loss_grads = {k: -g for k, g in breakdown.grads.items()}
                bbvi.clip_global_norm(loss_grads, cfg.grad_clip)
                groups = m.parameter_groups()
                for name, g in loss_grads.items():
                    nn.adam_step(groups[name], g, states[name])

            row = _epoch_metrics(m, split_train, test_data, cfg, eval_cfg,
                                 alpha_sup, epoch, eval_seed)
            history.append(row)
            metrics.write(format_metrics_row(row) + "\n")
            metrics.flush()
            if log is not None:
                log("epoch %d  elbo %.3f  n_active %d" % (epoch, row[1], row[-1]))

    checkpoint_path = os.path.join(cfg.out, "model.ckpt")
    mdl.save_checkpoint(m, checkpoint_path)
    return TrainResult(model=m, metrics_path=metrics_path,
                       checkpoint_path=checkpoint_path, history=history)


def _epoch_metrics(m, train_data, test_data, cfg, eval_cfg, alpha_sup,
                   epoch, eval_seed):
    """One metrics row; the ELBO estimate reuses a fixed evaluation stream."""
    rng = np.random.default_rng(eval_seed)
    feats = train_data.features
    if train_data.kind == "bernoulli":
        feats = dio.binarize_epoch(feats, rng)
    n = train_data.n
    cap = min(n, 4000)  # bound per-epoch metric cost on big datasets
    idx = np.arange(n) if n <= cap else rng.permutation(n)[:cap]
    bd = bbvi.estimate_elbo_and_grads(
        m, feats[idx], train_data.labels[idx], eval_cfg, rng, dataset_size=n,
        mode=cfg.unlabeled_mode, alpha_sup=alpha_sup)
    report = component_report(m, train_data, cfg.tau)
    train_err = error_rate(m, train_data)
    test_err = error_rate(m, test_data) if test_data is not None else float("nan")
    return [epoch, bd.total, bd.recon, bd.kl_gauss, bd.term_zhat, bd.term_v,
            bd.term_y, train_err, test_err, report.count]
