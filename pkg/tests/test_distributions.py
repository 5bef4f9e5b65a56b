import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from firecast.distributions import (
    AltLikelihoodParams,
    EgpParams,
    MedianLink,
    PcPriorConfig,
    alt_loglik_eta,
    alt_sample,
    bernoulli_loglik_eta,
    egp_cdf,
    egp_loglik_eta,
    egp_logpdf,
    egp_pdf,
    egp_quantile,
    egp_sample,
    egp_sigma_from_eta,
    kld_egp_kappa,
    kld_gpd_xi,
    pc_prior_kappa,
    pc_prior_xi,
    trunc_poisson_loglik_eta,
    trunc_poisson_pmf,
)
from firecast.errors import DomainError, ParameterError


def central_difference_errors(fun, eta, step=1e-5):
    """Relative errors of the analytic gradient and Hessian against central differences."""
    _, grad, hess = fun(eta)
    vp, gp, _ = fun(eta + step)
    vm, gm, _ = fun(eta - step)
    num_grad = (vp - vm) / (2 * step)
    num_hess = (gp - gm) / (2 * step)
    scale_g = np.maximum(np.abs(num_grad), 1.0)
    scale_h = np.maximum(np.abs(num_hess), 1.0)
    return np.abs(grad - num_grad) / scale_g, np.abs(hess - num_hess) / scale_h


@pytest.mark.parametrize(
    "y, params, expected",
    [
        (np.log(2.0), EgpParams(1.0, 0.0, 1.0), 0.5),
        (1.0, EgpParams(1.0, 0.5, 1.0), 1 - 1.5**-2),
        (1.0, EgpParams(1.0, 0.5, 2.0), (1 - 1.5**-2) ** 2),
    ],
)
def test_egp_cdf_examples(y, params, expected):
    assert egp_cdf(y, params) == pytest.approx(expected, rel=1e-14)


def test_egp_cdf_limits_and_monotone():
    p = EgpParams(2.0, 0.25, 0.7)
    grid = np.linspace(0.0, 200.0, 5001)
    F = egp_cdf(grid, p)
    assert F[0] == 0.0
    assert np.all(np.diff(F) >= 0)
    assert egp_cdf(1e12, p) == pytest.approx(1.0, abs=1e-3)


def test_egp_with_unit_kappa_is_gpd():
    for xi in (-0.4, -0.1, 0.0, 0.2, 0.45):
        p = EgpParams(1.7, xi, 1.0)
        upper = p.upper if np.isfinite(p.upper) else 60.0
        grid = np.linspace(0.0, upper, 4001)
        ref = stats.genpareto.cdf(grid, xi, scale=1.7)
        assert np.max(np.abs(egp_cdf(grid, p) - ref)) < 1e-12


@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_egp_cdf_continuous_across_xi_branch(sign):
    grid = np.linspace(0.0, 30.0, 301)
    near = egp_cdf(grid, EgpParams(1.3, sign * 1e-9, 2.5))
    at_zero = egp_cdf(grid, EgpParams(1.3, 0.0, 2.5))
    assert np.max(np.abs(near - at_zero)) < 1e-7


def test_egp_pdf_examples():
    assert egp_pdf(1.0, EgpParams(1.0, 0.0, 2.0)) == pytest.approx(
        2 * (1 - np.exp(-1)) * np.exp(-1), rel=1e-13
    )
    assert egp_pdf(1e-300, EgpParams(2.5, 0.2, 1.0)) == pytest.approx(1 / 2.5, rel=1e-12)


@pytest.mark.parametrize(
    "params",
    [EgpParams(1.3, 0.3, 4.0), EgpParams(1.0, 0.0, 0.5), EgpParams(0.4, -0.3, 2.0), EgpParams(3.0, 0.45, 1.0)],
)
def test_egp_pdf_integrates_to_one(params):
    upper = params.upper
    f = lambda y: egp_pdf(y, params)
    if np.isfinite(upper):
        total = integrate.quad(f, 0, upper, limit=200)[0]
    else:
        total = integrate.quad(f, 0, 1, limit=200)[0] + integrate.quad(f, 1, np.inf, limit=200)[0]
    assert total == pytest.approx(1.0, abs=1e-6)


def test_egp_pdf_lower_tail_power_law():
    p = EgpParams(1.0, 0.2, 0.6)
    ys = np.array([1e-8, 1e-7])
    slope = np.diff(np.log(egp_pdf(ys, p))) / np.diff(np.log(ys))
    assert slope[0] == pytest.approx(p.kappa - 1.0, abs=1e-6)


def test_egp_quantile_examples():
    assert egp_quantile(0.5, EgpParams(1.0, 0.0, 1.0)) == pytest.approx(np.log(2.0), rel=1e-15)
    assert egp_quantile(0.5, EgpParams(1.20711, 0.5, 1.0)) == pytest.approx(1.0, abs=1e-5)


@settings(max_examples=60, deadline=None)
@given(
    sigma=st.floats(0.1, 10.0),
    xi=st.floats(-0.49, 0.49),
    kappa=st.floats(0.2, 8.0),
)
def test_egp_cdf_quantile_round_trip(sigma, xi, kappa):
    p = EgpParams(sigma, xi, kappa)
    u = np.linspace(0.01, 0.99, 99)
    back = egp_cdf(egp_quantile(u, p), p)
    assert np.max(np.abs(back - u) / u) < 1e-10


def test_egp_domain_errors():
    with pytest.raises(DomainError):
        egp_cdf(-1.0, EgpParams(1.0, 0.1, 1.0))
    with pytest.raises(DomainError):
        egp_cdf(3.0, EgpParams(1.0, -0.5, 1.0))
    with pytest.raises(DomainError):
        egp_quantile(1.0, EgpParams(1.0, 0.1, 1.0))
    with pytest.raises(ParameterError):
        EgpParams(0.0, 0.1, 1.0)
    with pytest.raises(ParameterError):
        EgpParams(1.0, 0.1, -2.0)


def test_egp_sample_matches_cdf():
    p = EgpParams(1.0, 0.0, 1.0)
    draws = egp_sample(100_000, p, seed=3)
    assert stats.kstest(draws, lambda y: egp_cdf(y, p)).statistic < 0.01
    assert egp_sample(0, p, seed=3).shape == (0,)
    assert np.array_equal(egp_sample(50, p, seed=9), egp_sample(50, p, seed=9))


def test_sigma_from_eta_examples():
    assert egp_sigma_from_eta(MedianLink(0.0), 0.5, 1.0) == pytest.approx(0.5 / (np.sqrt(2) - 1), rel=1e-14)
    assert egp_sigma_from_eta(MedianLink(0.0), 0.0, 1.0) == pytest.approx(1 / np.log(2), rel=1e-14)


def test_sigma_from_eta_places_quantile_at_exp_eta():
    rng = np.random.default_rng(11)
    for _ in range(20):
        eta, xi, kappa = rng.normal(0, 2), rng.uniform(-0.45, 0.45), rng.uniform(0.2, 6)
        alpha = rng.uniform(0.1, 0.9)
        sigma = egp_sigma_from_eta(MedianLink(eta, alpha), xi, kappa)
        q = egp_quantile(alpha, EgpParams(sigma, xi, kappa))
        assert q == pytest.approx(np.exp(eta), rel=1e-11)


def random_egp_tuples(rng, n):
    out = []
    while len(out) < n:
        xi, kappa, eta = rng.uniform(-0.45, 0.45), rng.uniform(0.2, 6.0), rng.normal(0, 1.5)
        sigma = egp_sigma_from_eta(MedianLink(eta), xi, kappa)
        y = float(egp_sample(1, EgpParams(sigma, xi, kappa), seed=rng)[0])
        # stay clear of the moving support edge so eta +- step remains feasible
        if xi < 0 and y > 0.95 * EgpParams(sigma, xi, kappa).upper:
            continue
        if y > 0:
            out.append((y, eta, xi, kappa))
    return out


def test_egp_loglik_eta_matches_logpdf_and_differences():
    rng = np.random.default_rng(5)
    for y, eta, xi, kappa in random_egp_tuples(rng, 50):
        value, _, _ = egp_loglik_eta(y, eta, xi, kappa)
        sigma = egp_sigma_from_eta(MedianLink(eta), xi, kappa)
        assert value == pytest.approx(egp_logpdf(y, EgpParams(sigma, xi, kappa)), rel=1e-10, abs=1e-10)
        eg, eh = central_difference_errors(lambda e: egp_loglik_eta(y, e, xi, kappa), eta)
        assert eg < 1e-5 and eh < 1e-5


def test_egp_loglik_eta_recovers_generating_eta():
    from scipy.optimize import minimize_scalar

    xi, kappa, eta0 = 0.2, 1.8, 0.7
    sigma = egp_sigma_from_eta(MedianLink(eta0), xi, kappa)
    y = egp_sample(50_000, EgpParams(sigma, xi, kappa), seed=21)
    res = minimize_scalar(lambda e: -egp_loglik_eta(y, e, xi, kappa)[0].sum(), bounds=(-2, 3), method="bounded")
    assert abs(res.x - eta0) < 0.02
    assert np.isfinite(egp_loglik_eta(np.exp(eta0), eta0, xi, kappa)[0])


def test_egp_loglik_domain():
    with pytest.raises(DomainError):
        egp_loglik_eta(0.0, 0.0, 0.1, 1.0)


def test_trunc_poisson_pmf_examples():
    assert trunc_poisson_pmf(1, 1.0) == pytest.approx(np.exp(-1) / (1 - np.exp(-1)), rel=1e-14)
    assert trunc_poisson_pmf(np.arange(1, 201), 3.0).sum() == pytest.approx(1.0, abs=1e-12)
    assert trunc_poisson_pmf(1, 1e-12) == pytest.approx(1.0, abs=1e-11)
    with pytest.raises(DomainError):
        trunc_poisson_pmf(0, 1.0)


def test_trunc_poisson_loglik_eta_differences():
    rng = np.random.default_rng(8)
    for _ in range(50):
        y, eta = int(rng.integers(1, 30)), rng.uniform(-6, 4)
        value, _, _ = trunc_poisson_loglik_eta(y, eta)
        assert value == pytest.approx(np.log(trunc_poisson_pmf(y, np.exp(eta))), rel=1e-10, abs=1e-12)
        eg, eh = central_difference_errors(lambda e: trunc_poisson_loglik_eta(y, e), eta)
        assert eg < 1e-5 and eh < 1e-5


def test_trunc_poisson_gradient_saturates_and_mode():
    _, g, _ = trunc_poisson_loglik_eta(1, -40.0)
    assert abs(g) < 1e-15
    rng = np.random.default_rng(4)
    draws = rng.poisson(2.5, 200_000)
    y = draws[draws > 0]
    from scipy.optimize import minimize_scalar

    res = minimize_scalar(lambda e: -trunc_poisson_loglik_eta(y, e)[0].sum(), bounds=(0.0, 2.0), method="bounded")
    assert abs(res.x - np.log(2.5)) < 0.01


def test_bernoulli_loglik():
    v, g, h = bernoulli_loglik_eta(1, 0.0)
    assert (v, g, h) == (pytest.approx(np.log(0.5)), pytest.approx(0.5), pytest.approx(-0.25))
    etas = np.linspace(-8, 8, 33)
    assert np.allclose(bernoulli_loglik_eta(1, etas)[0], bernoulli_loglik_eta(0, -etas)[0], atol=1e-14)
    for z in (0, 1):
        eg, eh = central_difference_errors(lambda e: bernoulli_loglik_eta(z, e), etas)
        assert eg.max() < 1e-5 and eh.max() < 1e-5


@pytest.mark.parametrize("family", ["gamma", "weibull"])
def test_alt_likelihoods(family):
    rng = np.random.default_rng(2)
    for _ in range(30):
        params = AltLikelihoodParams(family, rng.uniform(0.3, 5.0))
        y, eta = rng.gamma(2.0, 1.5), rng.normal()
        eg, eh = central_difference_errors(lambda e: alt_loglik_eta(y, e, params), eta)
        assert eg < 1e-5 and eh < 1e-5
    params = AltLikelihoodParams(family, 2.3)
    draws = alt_sample(np.full(100_000, 0.4), params, np.random.default_rng(1))
    assert np.median(draws) == pytest.approx(np.exp(0.4), rel=0.02)


def test_weibull_unit_shape_is_exponential_with_median_link():
    eta = 0.3
    rate = np.log(2) / np.exp(eta)
    ys = np.array([0.1, 1.0, 4.0])
    v, _, _ = alt_loglik_eta(ys, eta, AltLikelihoodParams("weibull", 1.0))
    assert np.allclose(v, stats.expon.logpdf(ys, scale=1 / rate), rtol=1e-13)


def test_kld_gpd_xi():
    assert kld_gpd_xi(0.0) == 0.0
    assert kld_gpd_xi(0.5) == pytest.approx(0.5)
    xs = np.linspace(0, 0.99, 100)
    assert np.all(np.diff(kld_gpd_xi(xs)) > 0)
    f = lambda y: stats.genpareto.pdf(y, 0.5) * (stats.genpareto.logpdf(y, 0.5) - stats.expon.logpdf(y))
    numeric = integrate.quad(f, 0, 1, limit=200)[0] + integrate.quad(f, 1, np.inf, limit=400)[0]
    assert numeric == pytest.approx(0.5, abs=1e-6)


def test_pc_prior_xi():
    cfg = PcPriorConfig(rate=10.0)
    assert pc_prior_xi(0.0, cfg) == pytest.approx(10 / (2 * (1 - np.exp(-5))), rel=1e-14)
    xs = np.linspace(-0.49, 0.49, 99)
    assert np.allclose(pc_prior_xi(xs, cfg), pc_prior_xi(-xs, cfg), rtol=0, atol=0)
    mass = integrate.quad(lambda x: pc_prior_xi(x, cfg), -0.5, 0.5, points=[0.0])[0]
    assert mass == pytest.approx(1.0, abs=1e-10)
    assert pc_prior_xi(0.7, cfg) == 0.0
    with pytest.raises(DomainError):
        pc_prior_xi(0.7, cfg, outside="error")


@pytest.mark.parametrize("kappa", [0.25, 0.5, 2.0, 4.0, 8.0])
def test_kld_egp_kappa_matches_quadrature(kappa):
    # any fixed (sigma, xi) gives the same divergence
    p, base = EgpParams(1.4, 0.2, kappa), EgpParams(1.4, 0.2, 1.0)
    f = lambda y: egp_pdf(y, p) * (egp_logpdf(y, p) - egp_logpdf(y, base)) if y > 0 else 0.0
    numeric = integrate.quad(f, 0, 1, limit=200)[0] + integrate.quad(f, 1, np.inf, limit=200)[0]
    assert kld_egp_kappa(kappa) == pytest.approx(numeric, abs=1e-6)


def test_kld_egp_kappa_examples():
    assert kld_egp_kappa(1.0) == 0.0
    assert kld_egp_kappa(2.0) == pytest.approx(np.log(2) - 0.5, rel=1e-14)
    e = np.linspace(-0.05, 0.05, 101)
    assert np.max(np.abs(kld_egp_kappa(1 + e) - e**2 / 2)) <= 1e-4


@pytest.mark.parametrize("form", ["exact", "approximate"])
def test_pc_prior_kappa_is_proper(form):
    cfg = PcPriorConfig(rate=10.0, kappa_form=form)
    f = lambda k: pc_prior_kappa(k, cfg)
    mass = integrate.quad(f, 0, 1, limit=200)[0] + integrate.quad(f, 1, np.inf, limit=200)[0]
    tol = 1e-6 if form == "exact" else 1e-10
    assert mass == pytest.approx(1.0, abs=tol)


def test_pc_prior_kappa_values():
    exact = PcPriorConfig(rate=10.0, kappa_form="exact")
    approx = PcPriorConfig(rate=10.0)
    assert pc_prior_kappa(1.0, approx) == pytest.approx(10 / (2 - np.exp(-10)), rel=1e-14)
    assert pc_prior_kappa(1.0, exact) == pytest.approx(5.0, rel=1e-12)
    assert pc_prior_kappa(1.0 + 1e-7, exact) == pytest.approx(5.0, rel=1e-5)
    mass_exact = integrate.quad(lambda k: pc_prior_kappa(k, exact), 0.8, 1.2, points=[1.0])[0]
    mass_approx = integrate.quad(lambda k: pc_prior_kappa(k, approx), 0.8, 1.2, points=[1.0])[0]
    assert mass_exact / mass_approx == pytest.approx(1.0, rel=0.05)
    for k in (0.8, 1.0, 1.2):
        assert pc_prior_kappa(k, exact) / pc_prior_kappa(k, approx) == pytest.approx(1.0, rel=0.05)
    with pytest.raises(DomainError):
        pc_prior_kappa(0.0, approx)
