import math

import numpy as np
import pytest

from ibpdgm import distributions as dist, ibp

from oracles import enumerate_binary


def test_stick_breaking_running_product():
    pi = ibp.stick_breaking(np.array([0.5, 0.5, 0.5]))
    assert np.allclose(pi, [0.5, 0.25, 0.125])


def test_stick_breaking_identity():
    assert np.array_equal(ibp.stick_breaking(np.array([1.0, 1.0])), [1.0, 1.0])


def test_stick_breaking_empty():
    assert ibp.stick_breaking(np.array([])).size == 0


def test_stick_breaking_rejects_out_of_range():
    with pytest.raises(ValueError):
        ibp.stick_breaking(np.array([0.5, 0.0]))
    with pytest.raises(ValueError):
        ibp.stick_breaking(np.array([1.2]))


def test_stick_breaking_monotone():
    rng = np.random.default_rng(0)
    for _ in range(25):
        pi = ibp.stick_breaking(rng.random(8) * 0.999 + 1e-6)
        assert np.all(np.diff(pi) <= 0)
        assert np.all((pi > 0) & (pi <= 1))


def test_ibp_prior_log_prob_basic():
    got = ibp.ibp_prior_log_prob(np.array([1.0, 0.0]), np.array([0.5, 0.5]))
    assert abs(got - 2 * math.log(0.5)) < 1e-12


def test_ibp_prior_log_prob_pi_one():
    assert ibp.ibp_prior_log_prob(np.array([1.0]), np.array([1.0])) == 0.0
    # impossible event: guarded sentinel instead of -inf
    got = ibp.ibp_prior_log_prob(np.array([0.0]), np.array([1.0]))
    assert got == ibp.LOG_ZERO_SENTINEL


def test_ibp_prior_log_prob_length_mismatch():
    with pytest.raises(ValueError):
        ibp.ibp_prior_log_prob(np.array([1.0]), np.array([0.5, 0.5]))


def test_ibp_prior_normalizes():
    rng = np.random.default_rng(1)
    pi = ibp.stick_breaking(rng.random(3) * 0.9 + 0.05)
    total = sum(np.exp(ibp.ibp_prior_log_prob(z, pi)) for z in enumerate_binary(3))
    assert abs(total - 1.0) < 1e-9


def test_ibp_prior_from_sticks_matches_direct():
    rng = np.random.default_rng(2)
    v = rng.random(5) * 0.9 + 0.05
    pi = ibp.stick_breaking(v)
    for z in (np.zeros(5), np.ones(5), (rng.random(5) < 0.5).astype(float)):
        direct = ibp.ibp_prior_log_prob(z, pi)
        from_sticks = float(ibp.ibp_prior_log_prob_from_sticks(z, v))
        assert abs(direct - from_sticks) < 1e-10


def test_ibp_prior_from_sticks_no_underflow_large_k():
    # pi underflows to 0 in linear space at K=50 with tiny sticks
    v = np.full(50, 1e-7)
    z = np.zeros(50)
    got = float(ibp.ibp_prior_log_prob_from_sticks(z, v))
    assert np.isfinite(got)
    assert abs(got) < 1e-3   # all-off under a near-zero prior is nearly free


def test_sticks_prior_uniform_alpha_one():
    rng = np.random.default_rng(3)
    v = rng.random(6) * 0.9 + 0.05
    assert abs(float(ibp.sticks_prior_log_prob(v, 1.0))) < 1e-12


def test_sticks_prior_value():
    got = float(ibp.sticks_prior_log_prob(np.array([0.5]), 2.0))
    assert abs(got - (math.log(2) + math.log(0.5))) < 1e-12


def test_sticks_prior_matches_beta_log_prob():
    rng = np.random.default_rng(4)
    alpha = 2.7
    v = rng.random(5) * 0.9 + 0.05
    expected = sum(dist.beta_log_prob(vk, dist.BetaParams(alpha, 1.0)) for vk in v)
    assert abs(float(ibp.sticks_prior_log_prob(v, alpha)) - expected) < 1e-10


def test_sticks_prior_domain():
    with pytest.raises(ValueError):
        ibp.sticks_prior_log_prob(np.array([1.0]), 2.0)


def test_prior_moments_match_closed_form():
    # with v_k ~ Beta(alpha, 1) i.i.d., E[pi_k] = (alpha/(alpha+1))^k
    rng = np.random.default_rng(5)
    alpha, k, n = 2.0, 5, 100_000
    v = dist.beta_sample_array(alpha, 1.0, (n, k), rng)
    pi = np.cumprod(v, axis=1)
    expected = (alpha / (alpha + 1.0)) ** np.arange(1, k + 1)
    sem = pi.std(axis=0, ddof=1) / np.sqrt(n)
    assert np.all(np.abs(pi.mean(axis=0) - expected) < 3 * sem)


def test_global_sticks_init_at_prior():
    sticks = ibp.GlobalSticks(4, 2.0)
    assert np.allclose(sticks.a, 2.0)
    assert np.allclose(sticks.b, 1.0)
    assert sticks.K == 4


def test_global_sticks_validation():
    with pytest.raises(ValueError):
        ibp.GlobalSticks(0, 2.0)
    with pytest.raises(ValueError):
        ibp.GlobalSticks(4, -1.0)


def test_global_sticks_log_prob_matches_beta():
    sticks = ibp.GlobalSticks(3, 2.0)
    sticks.params[:] = np.log([1.5, 2.0, 3.0, 1.0, 0.5, 2.0])
    v = np.array([0.3, 0.6, 0.9])
    expected = sum(
        dist.beta_log_prob(v[i], dist.BetaParams(sticks.a[i], sticks.b[i]))
        for i in range(3))
    assert abs(float(sticks.log_prob(v)) - expected) < 1e-10


def test_global_sticks_score_grads_match_fd():
    sticks = ibp.GlobalSticks(2, 2.0)
    sticks.params[:] = np.log([1.5, 2.5, 0.7, 1.2])
    v = np.array([0.35, 0.8])
    grads = sticks.score_grads(v)
    h = 1e-6
    for i in range(4):
        old = sticks.params[i]
        sticks.params[i] = old + h
        fp = float(sticks.log_prob(v))
        sticks.params[i] = old - h
        fm = float(sticks.log_prob(v))
        sticks.params[i] = old
        assert abs(grads[i] - (fp - fm) / (2 * h)) < 1e-6


def test_active_components_all_zero():
    report = ibp.active_components(np.zeros(5), 0.01)
    assert report.count == 0
    assert report.active.size == 0


def test_active_components_threshold():
    report = ibp.active_components(np.array([0.9, 0.005, 0.4]), 0.01)
    assert list(report.active) == [0, 2]
    assert report.count == 2


def test_active_components_matrix_stats():
    probs = np.array([[0.9, 0.0], [0.1, 0.0], [0.5, 0.02]])
    report = ibp.active_components(probs, 0.01)
    assert np.allclose(report.mean, [0.5, 0.02 / 3])
    assert report.count == 1
    assert np.allclose(report.std, probs.std(axis=0))


def test_active_components_validates_range():
    with pytest.raises(ValueError):
        ibp.active_components(np.array([1.2]), 0.01)
