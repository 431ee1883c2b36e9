import numpy as np
import pytest
from scipy import stats

from conftest import random_model
from frontier_sampler import (
    DomainError,
    LinearCombination,
    PopulationModel,
    PortfolioSpec,
    SamplerInputs,
    brute_force_batch,
    characteristics_batch,
    draw_brute_force,
    draw_characteristics,
    draw_joint,
    draw_weights,
    frontier_quantities,
    representation_batch,
)
from frontier_sampler import linalg
from frontier_sampler.harness import ks_critical_value
from frontier_sampler.samplers import DrawBatch, simulate_returns

EU = PortfolioSpec("EU", gamma=20.0)


@pytest.fixture(scope="module")
def inputs():
    model = random_model(8, 5)
    return SamplerInputs.build(model, LinearCombination.unit(8, (0, 3)), 30)


def test_inputs_precomputation(inputs):
    tg = inputs.targets
    np.testing.assert_allclose(inputs.lql_sqrt @ inputs.lql_sqrt, tg.lql, atol=1e-12)
    np.testing.assert_allclose(inputs.lql_inv_sqrt @ tg.lql @ inputs.lql_inv_sqrt, np.eye(2), atol=1e-10)
    assert inputs.dof3 == 8 - 2 - 1
    assert inputs.noncentrality == pytest.approx(30 * tg.mu_a_mu)
    assert inputs.noncentrality >= 0


def test_inputs_reject_small_n():
    with pytest.raises(ValueError):
        SamplerInputs.build(random_model(5, 0), LinearCombination.unit(5), 5)


def test_draw_weights_shares_latents(inputs):
    j = draw_joint(inputs, np.random.default_rng(9))
    w = draw_weights(inputs, EU, np.random.default_rng(9))
    assert w.joint.v_hat == j.v_hat and w.joint.s_hat == j.s_hat and w.joint.f == j.f
    np.testing.assert_array_equal(w.joint.eta_hat, j.eta_hat)
    gmv = draw_weights(inputs, PortfolioSpec("GMV"), np.random.default_rng(9))
    np.testing.assert_array_equal(gmv.lw_hat, j.theta_hat)
    assert j.v_hat > 0 and j.s_hat >= 0 and j.f > 0


def test_batch_gmv_weights_equal_theta(inputs):
    b = representation_batch(inputs, 500, 1, PortfolioSpec("GMV"))
    np.testing.assert_array_equal(b.lw_hat, b.theta_hat)


def test_batch_determinism(inputs):
    a = representation_batch(inputs, 3000, 17, EU)
    b = representation_batch(inputs, 3000, 17, EU)
    for name in a.columns()[1:]:
        np.testing.assert_array_equal(a.column(name), b.column(name))
    # chunks are keyed by index, so a shorter batch is a prefix of a longer one
    short = representation_batch(inputs, 1024, 17, EU)
    np.testing.assert_array_equal(short.s_hat, a.s_hat[:1024])
    other = representation_batch(inputs, 3000, 18, EU)
    assert not np.array_equal(other.s_hat, a.s_hat)


def test_no_factorization_in_fast_path(inputs):
    with linalg.FACTORIZATIONS.track() as count:
        representation_batch(inputs, 5000, 3, EU)
    assert count[0] == 0
    with linalg.FACTORIZATIONS.track() as count:
        brute_force_batch(inputs.model, inputs.lincomb, inputs.n, 10, 3, EU)
    assert count[0] == 10


def test_v_marginal_chi2(inputs):
    b = representation_batch(inputs, 20000, 2)
    x = (inputs.n - 1) * b.v_hat / inputs.frontier.v_gmv
    assert stats.kstest(x, stats.chi2(inputs.n - inputs.p).cdf).pvalue > 0.01


def test_zero_mean_gives_centred_return():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((6, 6))
    model = PopulationModel(np.zeros(6), a @ a.T / 6 + np.eye(6))
    inputs = SamplerInputs.build(model, LinearCombination.unit(6), 20)
    b = representation_batch(inputs, 50000, 4)
    assert abs(b.r_hat.mean()) < 4 * b.r_hat.std() / np.sqrt(b.b)


def test_characteristics_marginals():
    r, v, s, n, p = 0.1, 1 / 3, 0.2, 10, 3
    d = characteristics_batch(r, v, s, n, p, EU, 200000, 5)
    assert abs(d.v_hat.mean() - 7 / 27) < 3 * d.v_hat.std() / np.sqrt(d.v_hat.size)
    n, p = 40, 10
    d = characteristics_batch(r, v, s, n, p, EU, 50000, 6)
    f = n * (n - p + 1) / ((n - 1) * (p - 1)) * d.s_hat
    assert stats.kstest(f, stats.ncf(p - 1, n - p + 1, n * s).cdf).pvalue > 0.01


def test_characteristics_eu_identity():
    gamma = 20.0
    spec = PortfolioSpec("EU", gamma=gamma)
    d = draw_characteristics(0.1, 0.3, 0.2, 50, 10, spec, np.random.default_rng(1), 1000)
    eps = np.finfo(float).eps
    assert np.all(np.abs(d.values[:, 0] - (d.r_hat + d.s_hat / gamma)) <= 2 * eps * (np.abs(d.r_hat) + d.s_hat / gamma))
    assert np.all(np.abs(d.values[:, 1] - (d.v_hat + d.s_hat / gamma**2)) <= 4 * eps * (d.v_hat + d.s_hat / gamma**2))
    single = draw_characteristics(0.1, 0.3, 0.2, 50, 10, spec, np.random.default_rng(1))
    assert single.values.shape == (6,)


def test_characteristics_path_agrees_with_joint(inputs):
    fr = inputs.frontier
    joint = representation_batch(inputs, 20000, 8)
    chars = characteristics_batch(fr.r_gmv, fr.v_gmv, fr.s, inputs.n, inputs.p, EU, 20000, 8)
    assert stats.ks_2samp(joint.v_hat, chars.v_hat).statistic < ks_critical_value(0.01, 20000, 20000)
    assert stats.ks_2samp(joint.s_hat, chars.s_hat).statistic < ks_critical_value(0.01, 20000, 20000)


def test_domain_violation_rate_is_fatal_above_half(inputs):
    with pytest.raises(DomainError):
        representation_batch(inputs, 200, 1, PortfolioSpec("MVaR", alpha=0.51))


def test_domain_violation_marks_nan():
    model = random_model(5, 2, mu_range=(0.0, 0.6))
    inputs = SamplerInputs.build(model, LinearCombination.unit(5), 12)
    spec = PortfolioSpec("MVaR", alpha=0.99)
    b = representation_batch(inputs, 4000, 3, spec)
    assert 0 < b.violation_rate <= 0.5
    assert np.all(np.isnan(b.lw_hat[b.domain_violation]))
    assert np.all(np.isfinite(b.lw_hat[~b.domain_violation]))


def test_brute_force_sample_moments():
    rng = np.random.default_rng(3)
    mu = np.array([0.1, -0.2, 0.3])
    a = rng.standard_normal((3, 3))
    sigma = a @ a.T + np.eye(3)
    chol = np.linalg.cholesky(sigma)
    reps = 10000
    mus = np.empty((reps, 3))
    sigmas = np.empty((reps, 3, 3))
    for i in range(reps):
        x = simulate_returns(mu, chol, 10, rng)
        mus[i] = x.mean(axis=0)
        sigmas[i] = np.cov(x, rowvar=False)
    assert np.all(np.abs(mus.mean(axis=0) - mu) < 4 * mus.std(axis=0) / np.sqrt(reps))
    assert np.all(np.abs(sigmas.mean(axis=0) - sigma) < 4 * sigmas.std(axis=0) / np.sqrt(reps))


def test_student_t_returns_have_covariance_sigma():
    rng = np.random.default_rng(4)
    sigma = np.array([[1.0, 0.3], [0.3, 2.0]])
    x = simulate_returns(np.zeros(2), np.linalg.cholesky(sigma), 400000, rng, "student_t", 10)
    emp = np.cov(x, rowvar=False)
    prod = x[:, :, None] * x[:, None, :]
    se = prod.reshape(len(x), -1).std(axis=0).reshape(2, 2) / np.sqrt(len(x))
    assert np.all(np.abs(emp - sigma) < 4 * se)
    with pytest.raises(ValueError):
        simulate_returns(np.zeros(2), np.eye(2), 5, rng, "student_t", 2)
    with pytest.raises(ValueError):
        simulate_returns(np.zeros(2), np.eye(2), 5, rng, "cauchy")


def test_brute_force_single_draw(inputs):
    joint, lw, chars, bad = draw_brute_force(inputs.model, inputs.lincomb, inputs.n, EU, np.random.default_rng(0))
    assert lw.shape == (2,) and chars.shape == (6,) and not bad
    assert joint.v_hat > 0


def test_batch_csv(tmp_path, inputs):
    b = representation_batch(inputs, 50, 5, EU)
    b.to_csv(tmp_path / "a.csv")
    representation_batch(inputs, 50, 5, EU).to_csv(tmp_path / "b.csv")
    text = (tmp_path / "a.csv").read_bytes()
    assert text == (tmp_path / "b.csv").read_bytes()
    lines = text.decode().splitlines()
    assert lines[0].split(",") == b.columns()
    assert len(lines) == 51
    row = np.array(lines[1].split(","), dtype=float)
    assert row[2] == b.r_hat[0]


def test_batch_validation_and_concatenate(inputs):
    a = representation_batch(inputs, 10, 1, EU)
    c = DrawBatch.concatenate([a, a])
    assert c.b == 20
    with pytest.raises(KeyError):
        a.column("nope")
    with pytest.raises(ValueError):
        DrawBatch(a.v_hat[:5], a.r_hat, a.s_hat, a.theta_hat, a.eta_hat, a.lw_hat, a.characteristics, a.domain_violation, a.f, 1, "stochastic_rep")


def test_frontier_of_inputs(inputs):
    assert inputs.frontier.s == pytest.approx(frontier_quantities(inputs.model).s)
