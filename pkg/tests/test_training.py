import numpy as np
import pytest

from ibpdgm import data as dio, model as mdl, training


def quick_cfg(tmp_path, **kw):
    base = dict(
        dataset="synth-ibp", synth_n=120, synth_test_n=40, synth_features=2,
        synth_dim=8, synth_noise=0.02, truncation=4, hidden=8,
        epochs=2, batch_size=30, mc_samples=2, eval_mc_samples=2,
        seed=7, out=str(tmp_path / "run"),
    )
    base.update(kw)
    return training.RunConfig(**base)


def test_train_writes_metrics_and_checkpoint(tmp_path):
    result = training.train(quick_cfg(tmp_path))
    lines = open(result.metrics_path).read().splitlines()
    assert lines[0] == ",".join(training.METRICS_COLUMNS)
    assert len(lines) == 3   # header + one row per epoch
    m = mdl.load_checkpoint(result.checkpoint_path)
    assert m.K == 4


def test_metrics_row_parts_sum_to_elbo(tmp_path):
    result = training.train(quick_cfg(tmp_path))
    row = result.history[-1]
    elbo, recon, kl_gauss, term_zhat, term_v, term_y = row[1:7]
    assert abs(elbo - (recon + kl_gauss + term_zhat + term_v + term_y)) < 1e-9


def test_train_deterministic_metrics(tmp_path):
    a = training.train(quick_cfg(tmp_path, out=str(tmp_path / "a"),
                                 deterministic=True))
    b = training.train(quick_cfg(tmp_path, out=str(tmp_path / "b"),
                                 deterministic=True))
    assert open(a.metrics_path).read() == open(b.metrics_path).read()


def test_train_seed_changes_metrics(tmp_path):
    a = training.train(quick_cfg(tmp_path, out=str(tmp_path / "a")))
    b = training.train(quick_cfg(tmp_path, out=str(tmp_path / "b"), seed=8))
    assert open(a.metrics_path).read() != open(b.metrics_path).read()


def test_train_with_labels_uses_stratified_split(tmp_path):
    cfg = quick_cfg(tmp_path, dataset="synth-blobs", synth_classes=2,
                    synth_dim=5, likelihood="gaussian", labeled_fraction=0.1)
    result = training.train(cfg)
    assert np.isfinite(result.history[-1][7])   # train_err defined
    assert np.isfinite(result.history[-1][8])   # test_err defined


def test_train_unlabeled_has_nan_error(tmp_path):
    result = training.train(quick_cfg(tmp_path))
    assert np.isnan(result.history[-1][7])


def test_config_validation():
    with pytest.raises(ValueError):
        training.RunConfig(dataset="nope").validate()
    with pytest.raises(ValueError):
        training.RunConfig(labeled_fraction=1.5).validate()
    with pytest.raises(ValueError):
        training.RunConfig(unlabeled_mode="sometimes").validate()
    with pytest.raises(ValueError):
        training.RunConfig(lr=-1.0).validate()


def test_run_config_paper_defaults():
    cfg = training.RunConfig()
    assert cfg.truncation == 50
    assert cfg.lr == 3e-4
    assert cfg.beta1 == 0.9 and cfg.beta2 == 0.999
    assert cfg.labeled_fraction == 0.01
    assert cfg.hidden == 500
    assert cfg.sigma_theta_sq in training.SIGMA_THETA_GRID
    assert cfg.mc_samples == 8
    assert cfg.alpha == 2.0
    assert cfg.unlabeled_mode == "marginalize"
    assert cfg.tau == 0.01


def test_error_rate_perfect_and_uniform():
    rng = np.random.default_rng(0)
    m = mdl.build_model(3, 2, 2, 4, "gaussian", 2.0, 1e-2, rng)
    # rig the classifier to a perfect sign detector on x0
    m.classifier.params[:] = 0.0
    m.classifier.weights(0)[0, 0] = 5.0    # hidden0 = relu(5 x0)
    m.classifier.weights(0)[1, 0] = -5.0   # hidden1 = relu(-5 x0)
    m.classifier.weights(1)[0, 0] = 5.0    # logit0 tracks hidden0
    m.classifier.weights(1)[1, 1] = 5.0    # logit1 tracks hidden1
    x = rng.normal(size=(200, 3))
    labels = (x[:, 0] < 0).astype(np.int64)
    ds = dio.Dataset(x, labels, 2, "gaussian")
    assert training.error_rate(m, ds) == 0.0

    # uniform-random predictions on C=10: error approaches 90%
    m10 = mdl.build_model(3, 10, 2, 4, "gaussian", 2.0, 1e-2, rng)
    m10.classifier.params[:] = 0.0   # all logits equal -> always class 0
    labels10 = rng.integers(0, 10, size=5000).astype(np.int64)
    ds10 = dio.Dataset(rng.normal(size=(5000, 3)), labels10, 10, "gaussian")
    err = training.error_rate(m10, ds10)
    assert abs(err - 90.0) < 2.0


def test_error_rate_skips_unlabeled():
    rng = np.random.default_rng(1)
    m = mdl.build_model(3, 2, 2, 4, "gaussian", 2.0, 1e-2, rng)
    ds = dio.Dataset(rng.normal(size=(10, 3)), np.full(10, -1), 2, "gaussian")
    assert np.isnan(training.error_rate(m, ds))


def test_component_report_untrained_is_all_active():
    rng = np.random.default_rng(2)
    m = mdl.build_model(4, 2, 3, 4, "bernoulli", 2.0, 1e-2, rng)
    m.encoder.params[:] = 0.0
    ds = dio.Dataset((rng.random((20, 4)) < 0.5).astype(float),
                     np.full(20, -1), 2, "bernoulli")
    report = training.component_report(m, ds, 0.01)
    assert report.count == 3
    assert np.allclose(report.mean, 0.5)
    report_strict = training.component_report(m, ds, 1.0)
    assert report_strict.count == 0


def test_format_metrics_row_roundtrip():
    row = [3, -1234.56789012345678, float("nan"), 7]
    text = training.format_metrics_row(row)
    parts = text.split(",")
    assert parts[0] == "3" and parts[3] == "7"
    assert float(parts[1]) == -1234.56789012345678
    assert parts[2] == "nan"
