"""Acceptance suite: one PASS/FAIL line per criterion.

Each criterion gathers named sub-checks, prints a single summary line and
then asserts its sub-checks.  Two quoted reference constants disagree with the
formulas they are quoted for; those literal comparisons are reported in the
summary line and asserted in their own strict-xfail tests so the rest of the
criterion still gates the suite.
"""

import time

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES, write_small_dataset
from oracles import brute_force_tree
from scipy import integrate, stats
from test_distributions import central_difference_errors, random_egp_tuples
from test_latent import exact_gaussian, gaussian_model
from test_scoring import pair_count_auc
from test_shap import ensemble_oracle

from firecast.boosting import BoostConfig, grow_tree, loss_grad_hess, shap_values, train, unit_deviance
from firecast.cli import main
from firecast.distributions import (
    AltLikelihoodParams,
    EgpParams,
    PcPriorConfig,
    alt_loglik_eta,
    bernoulli_loglik_eta,
    egp_cdf,
    egp_loglik_eta,
    egp_logpdf,
    egp_pdf,
    egp_quantile,
    egp_sigma,
    gaussian_loglik_eta,
    kld_egp_kappa,
    pc_prior_kappa,
    pc_prior_xi,
    trunc_poisson_loglik_eta,
    trunc_poisson_pmf,
)
from firecast.latent import laplace_fit, sample_hurdle
from firecast.scoring import ScoreConfig, auc, crps_from_samples, predictive_cdf, raw_weight_count, weighted_binned_score
from firecast.study import StudyConfig, run_study

LITERAL_PI2 = 5.00022
LITERAL_WEIGHT_30 = 0.15498


def report(number, title, checks, seconds=None, limit=None):
    """Print and store the summary line; return the names of failed checks."""
    checks = dict(checks)
    if limit is not None:
        checks[f"runtime {seconds:.1f}s < {limit}s"] = seconds < limit
    failed = [name for name, ok in checks.items() if not ok]
    status = "FAIL" if failed else "PASS"
    line = f"{status} criterion {number:2d}: {title} | " + "; ".join(checks)
    if failed:
        line += " | failed: " + "; ".join(failed)
    ACCEPTANCE_LINES[number] = line
    print(line)
    return failed


def assert_checks(checks, allowed=()):
    failed = [name for name, ok in checks.items() if not ok and name not in allowed]
    assert not failed, failed


# ---------------------------------------------------------------- 1


def test_distribution_exactness():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_round_trip = 0.0
    for _ in range(200):
        p = EgpParams(rng.uniform(0.1, 10), rng.uniform(-0.49, 0.49), rng.uniform(0.2, 8))
        u = np.linspace(0.01, 0.99, 99)
        worst_round_trip = max(worst_round_trip, np.max(np.abs(egp_cdf(egp_quantile(u, p), p) - u) / u))
    worst_gpd = 0.0
    for xi in (-0.4, -0.2, -0.05, 0.0, 0.1, 0.25, 0.45):
        p = EgpParams(1.7, xi, 1.0)
        grid = np.linspace(0.0, p.upper if np.isfinite(p.upper) else 60.0, 4001)
        worst_gpd = max(worst_gpd, np.max(np.abs(egp_cdf(grid, p) - stats.genpareto.cdf(grid, xi, scale=1.7))))
    worst_mass = 0.0
    for p in (EgpParams(1.3, 0.3, 4.0), EgpParams(1.0, 0.0, 0.5), EgpParams(0.4, -0.3, 2.0), EgpParams(3.0, 0.45, 1.0)):
        f = lambda y: egp_pdf(y, p)
        if np.isfinite(p.upper):
            mass = integrate.quad(f, 0, p.upper, limit=200)[0]
        else:
            mass = integrate.quad(f, 0, 1, limit=200)[0] + integrate.quad(f, 1, np.inf, limit=200)[0]
        worst_mass = max(worst_mass, abs(mass - 1))
    seconds = time.perf_counter() - start
    checks = {
        f"cdf(quantile(u)) rel err {worst_round_trip:.1e} <= 1e-10": worst_round_trip <= 1e-10,
        f"kappa=1 vs GPD {worst_gpd:.1e} <= 1e-12": worst_gpd <= 1e-12,
        f"pdf mass error {worst_mass:.1e} <= 1e-6": worst_mass <= 1e-6,
    }
    report(1, "distribution exactness", checks, seconds, 5)
    assert_checks(checks)
    assert seconds < 5


# ---------------------------------------------------------------- 2


def pc_prior_checks():
    checks = {}
    for kappa in (0.25, 0.5, 2.0, 4.0, 8.0):
        p, base = EgpParams(1.4, 0.2, kappa), EgpParams(1.4, 0.2, 1.0)
        f = lambda y: egp_pdf(y, p) * (egp_logpdf(y, p) - egp_logpdf(y, base)) if y > 0 else 0.0
        numeric = integrate.quad(f, 0, 1, limit=200)[0] + integrate.quad(f, 1, np.inf, limit=200)[0]
        err = abs(kld_egp_kappa(kappa) - numeric)
        checks[f"KLD kappa={kappa} err {err:.1e} <= 1e-6"] = err <= 1e-6
    for form in ("exact", "approximate"):
        cfg = PcPriorConfig(rate=10.0, kappa_form=form)
        f = lambda k: pc_prior_kappa(k, cfg)
        mass = integrate.quad(f, 0, 1, limit=200)[0] + integrate.quad(f, 1, np.inf, limit=200)[0]
        checks[f"{form} kappa prior mass {mass:.8f}"] = abs(mass - 1) <= 1e-6
    cfg = PcPriorConfig(rate=10.0)
    mass = integrate.quad(lambda x: pc_prior_xi(x, cfg), -0.5, 0.5, points=[0.0])[0]
    checks[f"xi prior mass {mass:.8f}"] = abs(mass - 1) <= 1e-6
    at_one = float(pc_prior_kappa(1.0, cfg))
    formula = 10 / (2 - np.exp(-10))
    checks[f"approximate prior at 1 = {at_one:.6f} equals 10/(2-exp(-10))"] = abs(at_one - formula) <= 1e-12
    literal = f"approximate prior at 1 = {at_one:.6f} within 1e-4 of {LITERAL_PI2}"
    checks[literal] = abs(at_one - LITERAL_PI2) <= 1e-4
    return checks, literal


@pytest.fixture(scope="module")
def pc_prior_result():
    start = time.perf_counter()
    checks, literal = pc_prior_checks()
    seconds = time.perf_counter() - start
    report(2, "PC prior correctness", checks, seconds, 10)
    return checks, literal, seconds


def test_pc_prior_correctness(pc_prior_result):
    checks, literal, seconds = pc_prior_result
    assert_checks(checks, allowed=(literal,))
    assert seconds < 10


@pytest.mark.xfail(strict=True, reason="the quoted 5.00022 is not the value of 10/(2-exp(-10)) = 5.0001135")
def test_pc_prior_literal_constant(pc_prior_result):
    checks, literal, _ = pc_prior_result
    assert checks[literal]


# ---------------------------------------------------------------- 3


def loss_value(loss):
    return lambda y, s: 0.5 * unit_deviance(y, np.exp(s), loss, 1.5)


def test_derivative_contracts():
    start = time.perf_counter()
    rng = np.random.default_rng(303)
    worst = {}

    def track(name, fun, eta):
        eg, eh = central_difference_errors(fun, eta)
        worst[name] = max(worst.get(name, 0.0), float(np.max(eg)), float(np.max(eh)))

    for y, eta, xi, kappa in random_egp_tuples(rng, 100):
        track("egp", lambda e: egp_loglik_eta(y, e, xi, kappa), eta)
    for _ in range(100):
        y, eta = int(rng.integers(1, 40)), rng.uniform(-6, 4)
        track("truncated poisson", lambda e: trunc_poisson_loglik_eta(y, e), eta)
        z, eta = int(rng.integers(0, 2)), rng.uniform(-8, 8)
        track("bernoulli", lambda e: bernoulli_loglik_eta(z, e), eta)
        y, eta, prec = rng.normal(0, 3), rng.normal(0, 3), rng.uniform(0.1, 10)
        track("gaussian", lambda e: gaussian_loglik_eta(y, e, prec), eta)
        for family in ("gamma", "weibull"):
            params = AltLikelihoodParams(family, rng.uniform(0.3, 5.0))
            y, eta = rng.gamma(2.0, 1.5), rng.normal()
            track(family, lambda e: alt_loglik_eta(y, e, params), eta)
        for loss in ("poisson", "tweedie"):
            y = float(rng.poisson(3.0)) if loss == "poisson" else float(rng.gamma(1.0, 3.0) * (rng.random() < 0.7))
            s = rng.normal(0.5, 1.0)
            value = loss_value(loss)

            def fun(e, y=y, loss=loss, value=value):
                # loss_grad_hess returns derivatives of the loss; negate to reuse the log-likelihood helper
                g, h = loss_grad_hess(y, e, loss, 1.5)
                return -value(y, e), -g, -h

            track(f"{loss} loss", fun, s)
    seconds = time.perf_counter() - start
    checks = {f"{name} worst rel err {err:.1e} <= 1e-5": err <= 1e-5 for name, err in worst.items()}
    report(3, "derivative contracts (100 tuples each)", checks, seconds, 10)
    assert_checks(checks)
    assert seconds < 10


# ---------------------------------------------------------------- 4


def same_tree(tree, ref, node=0):
    if tree.feature[node] < 0:
        return ref["leaf"] and abs(tree.value[node] - ref["w"]) <= 1e-12 * max(1.0, abs(ref["w"]))
    if ref["leaf"] or tree.feature[node] != ref["feature"] or tree.threshold[node] != ref["threshold"]:
        return False
    return same_tree(tree, ref["left"], tree.left[node]) and same_tree(tree, ref["right"], tree.right[node])


def leaf_identity_error(tree, X, g, h, lam):
    leaf = tree.apply(X)
    worst = 0.0
    for node in np.nonzero(tree.is_leaf)[0]:
        G, H = g[leaf == node].sum(), h[leaf == node].sum()
        worst = max(worst, abs(tree.value[node] * (H + lam) + G))
    return worst


def test_boosting_oracle_equivalence():
    start = time.perf_counter()
    mismatches, worst_identity, n_leaves = 0, 0.0, 0
    n_datasets = 60
    for case in range(n_datasets):
        rng = np.random.default_rng(4000 + case)
        n, d = int(rng.integers(4, 33)), int(rng.integers(1, 4))
        X = np.round(rng.normal(size=(n, d)), 1)
        X[rng.random((n, d)) < 0.1] = np.nan
        g, h = rng.normal(size=n), rng.uniform(0.2, 2.0, n)
        lam, gamma, mcw = rng.uniform(0, 2), rng.uniform(0, 0.3), rng.uniform(0, 1)
        tree = grow_tree(X, g, h, reg_lambda=lam, reg_gamma=gamma, max_depth=3, min_child_weight=mcw)
        mismatches += not same_tree(tree, brute_force_tree(X, g, h, lam, gamma, mcw, 3))
        worst_identity = max(worst_identity, leaf_identity_error(tree, X, g, h, lam))
        n_leaves += int(tree.is_leaf.sum())
    for seed, loss in ((0, "poisson"), (1, "tweedie")):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(300, 4))
        y = rng.poisson(np.exp(0.4 * X[:, 0]))
        cfg = BoostConfig(n_trees=20, max_depth=3, reg_lambda=1.5, loss=loss)
        model = train(X, y, cfg)
        raw = np.full(len(y), model.base_score)
        for tree in model.trees:
            g, h = loss_grad_hess(y, raw, loss, cfg.tweedie_power)
            worst_identity = max(worst_identity, leaf_identity_error(tree, X, g, h, cfg.reg_lambda))
            n_leaves += int(tree.is_leaf.sum())
            raw = raw + cfg.learning_rate * tree.predict(X)
    seconds = time.perf_counter() - start
    checks = {
        f"{n_datasets - mismatches}/{n_datasets} trees match enumeration": mismatches == 0,
        f"leaf identity worst {worst_identity:.1e} <= 1e-9 over {n_leaves} leaves": worst_identity <= 1e-9,
    }
    report(4, "boosting oracle equivalence", checks, seconds, 60)
    assert_checks(checks)
    assert seconds < 60


# ---------------------------------------------------------------- 5


def test_shap_exactness():
    start = time.perf_counter()
    worst_tree, worst_brute, rows = 0.0, 0.0, 0
    for seed in range(10):
        rng = np.random.default_rng(500 + seed)
        d = int(rng.integers(2, 9))
        X = rng.normal(size=(80, d))
        X[rng.random((80, d)) < 0.05] = np.nan
        y = rng.poisson(np.exp(0.6 * np.nan_to_num(X[:, 0]) - 0.4 * np.nan_to_num(X[:, 1])))
        model = train(X, y, BoostConfig(n_trees=int(rng.integers(1, 6)), max_depth=4, learning_rate=0.3))
        for x in X[:3]:
            phi_ref, base_ref = ensemble_oracle(model, x)
            res = shap_values(model, x)
            brute = shap_values(model, x, method="brute")
            worst_tree = max(worst_tree, np.max(np.abs(res.phi - phi_ref)), abs(res.base_value - base_ref))
            worst_brute = max(worst_brute, np.max(np.abs(brute.phi - res.phi)))
            rows += 1
    rng = np.random.default_rng(5)
    X = rng.normal(size=(1000, 6))
    y = rng.poisson(np.exp(0.5 * X[:, 0] + 0.3 * X[:, 1] * X[:, 2]))
    model = train(X, y, BoostConfig(n_trees=30, max_depth=4))
    additivity = float(np.max(np.abs(shap_values(model, X).total() - model.predict_raw(X))))
    seconds = time.perf_counter() - start
    # "exact" up to summation order: both sides are finite sums of the same terms
    checks = {
        f"tree vs enumeration {worst_tree:.1e} <= 1e-12 on {rows} rows": worst_tree <= 1e-12,
        f"tree vs brute method {worst_brute:.1e} <= 1e-12": worst_brute <= 1e-12,
        f"additivity {additivity:.1e} <= 1e-9 on 1000 rows": additivity <= 1e-9,
    }
    report(5, "SHAP exactness", checks, seconds, 60)
    assert_checks(checks)
    assert seconds < 60


# ---------------------------------------------------------------- 6


def test_laplace_anchor():
    start = time.perf_counter()
    model, y = gaussian_model(n=100)
    errs = {"mean": 0.0, "variance": 0.0, "log evidence": 0.0}
    for theta in ({"tau_u": 2.0, "tau_r": 1.5, "beta": 0.7, "prec": 3.0}, {"tau_u": 0.3, "tau_r": 20.0, "beta": -1.1, "prec": 0.5}):
        res = laplace_fit(model, theta)
        mean, cov, ev = exact_gaussian(model, theta, y)
        errs["mean"] = max(errs["mean"], np.max(np.abs(res.mode - mean)))
        var = res.approx.marginal_variance(np.arange(model.dim))
        errs["variance"] = max(errs["variance"], np.max(np.abs(var - np.diag(cov))))
        errs["log evidence"] = max(errs["log evidence"], abs(res.log_evidence - ev))
    seconds = time.perf_counter() - start
    checks = {f"{name} err {e:.1e} <= 1e-6": e <= 1e-6 for name, e in errs.items()}
    report(6, f"Laplace anchor ({model.dim} latent nodes)", checks, seconds, 10)
    assert_checks(checks)
    assert seconds < 10


# ---------------------------------------------------------------- 7


def test_sampling_fidelity():
    start = time.perf_counter()
    rng = np.random.default_rng(707)
    n = 100_000
    worst_pmf = 0.0
    for lam in (0.3, 2.5, 8.0):
        z, c, _, _, _ = sample_hurdle(np.full(n, 50.0), np.log(lam), 0.0, "egp", {"xi": 0.1, "kappa": 1.0}, rng)
        ys = np.arange(1, 31)
        freq = np.array([np.mean(c == k) for k in ys])
        worst_pmf = max(worst_pmf, float(np.max(np.abs(freq - trunc_poisson_pmf(ys, lam)))))
    worst_ks = 0.0
    for xi, kappa, eta_b in ((0.2, 1.8, 1.3), (-0.3, 0.6, 0.0), (0.0, 4.0, -0.5)):
        _, _, r, _, _ = sample_hurdle(np.full(n, 50.0), 0.0, eta_b, "egp", {"xi": xi, "kappa": kappa}, rng)
        p = EgpParams(float(egp_sigma(eta_b, xi, kappa)), xi, kappa)
        worst_ks = max(worst_ks, stats.kstest(r, lambda v: egp_cdf(v, p)).statistic)
    seconds = time.perf_counter() - start
    checks = {
        f"truncated Poisson frequency err {worst_pmf:.4f} <= 0.01": worst_pmf <= 0.01,
        f"eGP KS {worst_ks:.4f} < 0.01": worst_ks < 0.01,
    }
    report(7, "sampling fidelity at 1e5 draws", checks, seconds, 60)
    assert_checks(checks)
    assert seconds < 60


# ---------------------------------------------------------------- 8


def test_synthetic_end_to_end():
    summary = run_study(range(20), StudyConfig())
    seconds = summary.seconds()
    coverage = summary.coverage()
    better, in_band = summary.n_full_better(), summary.n_exceedance_in_band(5.0, 95.0)
    checks = {f"{k} coverage {v:.2f} >= 0.8": v >= 0.8 for k, v in coverage.items()}
    checks[f"full beats reduced in {better}/20 >= 16"] = better >= 16
    checks[f"exceedance rank in band in {in_band}/20 >= 18"] = in_band >= 18
    report(8, "synthetic end-to-end study (20 seeds)", checks, seconds, 1800)
    assert_checks(checks)
    assert seconds < 1800


# ---------------------------------------------------------------- 9


@pytest.fixture(scope="module")
def scoring_result():
    start = time.perf_counter()
    worst_auc = 0.0
    for seed in range(30):
        rng = np.random.default_rng(900 + seed)
        n = int(rng.integers(5, 80))
        labels = rng.integers(0, 2, n)
        labels[:2] = (0, 1)
        scores = np.round(rng.normal(size=n), 1)
        worst_auc = max(worst_auc, abs(auc(labels, scores) - pair_count_auc(labels, scores)))
    y = 0.5
    truth = integrate.quad(lambda t: (t - (t >= y)) ** 2, 0, 1, points=[y])[0]
    crps_err = abs(crps_from_samples(np.random.default_rng(9).random(100_000), y) - truth)
    cfg = ScoreConfig()
    perfect = []
    obs = {"C": np.array([0, 3, 12, 40]), "B": np.array([0.0, 2.5, 30.0, 900.0])}
    for variant in ("C", "B"):
        cdf = predictive_cdf(np.tile(obs[variant], (100, 1)), cfg.thresholds(variant))
        perfect.append(weighted_binned_score(cdf, obs[variant], cfg, variant, weighted=True))
    w30 = float(raw_weight_count(30))
    literal = f"count weight at 30 = {w30:.7f} within 1e-5 of {LITERAL_WEIGHT_30}"
    checks = {
        f"AUC vs pair counting {worst_auc:.1e}": worst_auc <= 1e-12,
        f"uniform CRPS err {crps_err:.1e} <= 1e-3": crps_err <= 1e-3,
        f"perfect forecast weighted scores {perfect}": all(s == 0.0 for s in perfect),
        f"count weight at 30 equals 1-(1+31^2/1000)^(-1/4)": abs(w30 - (1 - (1 + 31**2 / 1000) ** -0.25)) <= 1e-15,
        literal: abs(w30 - LITERAL_WEIGHT_30) <= 1e-5,
    }
    seconds = time.perf_counter() - start
    report(9, "scoring oracles", checks, seconds, 30)
    return checks, literal, seconds


def test_scoring_oracles(scoring_result):
    checks, literal, seconds = scoring_result
    assert_checks(checks, allowed=(literal,))
    assert seconds < 30


@pytest.mark.xfail(strict=True, reason="the quoted 0.15498 is not the value of 1-1.961^(-1/4) = 0.1549535")
def test_scoring_literal_constant(scoring_result):
    checks, literal, _ = scoring_result
    assert checks[literal]


# ---------------------------------------------------------------- 10


def test_reproducibility(tmp_path):
    start = time.perf_counter()
    trees = []
    for name in ("first", "second"):
        (tmp_path / name).mkdir()
        cfg = write_small_dataset(tmp_path / name, seed=4)
        assert main(["pipeline", str(cfg)]) == 0
        run = tmp_path / name / "run"
        trees.append({str(p.relative_to(run)): p.read_bytes() for p in sorted(run.rglob("*")) if p.is_file()})
    first, second = trees
    differing = sorted(k for k in first.keys() | second.keys() if first.get(k) != second.get(k))
    seconds = time.perf_counter() - start
    groups = {
        "manifest": ["manifest.json"],
        "models": ["stage1/ensemble_C.json", "stage1/ensemble_B.json", "stage2/hurdle_model.json", "stage2/fit.json"],
        "reports": ["report/report.txt", "report/exceedance.csv", "report/shap_C.csv", "report/shap_B.csv"],
    }
    checks = {f"{g} byte-identical": all(n in first and n not in differing for n in names) for g, names in groups.items()}
    checks[f"all {len(first)} run files byte-identical"] = not differing
    report(10, f"reproducibility of two pipeline runs ({seconds:.0f}s)", checks)
    assert_checks(checks)
