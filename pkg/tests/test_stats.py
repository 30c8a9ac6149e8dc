import numpy as np
import pytest
from scipy.stats import chi2

from gibbsflow import basis as bs
from gibbsflow import flow as fl
from gibbsflow import functionals as fn
from gibbsflow import gibbs as gb
from gibbsflow import stats as st
from gibbsflow.randfield import RngStream, sample_mu_block

STREAM = RngStream(seed=505)


# -- exact oracle -------------------------------------------------------------------


def test_isserlis_basic_moments():
    p = st.PolynomialFunctional()
    p.add(1.0, ((5, False), (5, False), (5, True), (5, True)))
    assert st.isserlis_expect(p) == pytest.approx(2.0)  # E|g|^4

    q = st.PolynomialFunctional()
    q.add(1.0, ((1, False), (2, True)))
    assert st.isserlis_expect(q) == 0.0  # cross modes vanish

    r = st.PolynomialFunctional()
    r.add(1.0, ((1, False), (1, False)))
    assert st.isserlis_expect(r) == 0.0  # E[g g] = 0

    s = st.PolynomialFunctional(variances={3: 2.0})
    s.add(1.0, ((3, False), (3, True)))
    assert st.isserlis_expect(s) == pytest.approx(2.0)  # bo-normalized pairs


def test_isserlis_quartic_hw_closed_form():
    for n in (1, 2, 4):
        closed = 2.0 * sum(1.0 / (1.0 + abs(k)) ** 2 for k in range(-n, n + 1))
        assert st.isserlis_expect(st.polyfunc_quartic_hw(n)) == pytest.approx(closed)
    assert st.isserlis_expect(st.polyfunc_quartic_hw(1)) == pytest.approx(3.0)


def test_isserlis_dnls_momentum_diff():
    diff = st.polyfunc_dnls_momentum_diff(1, 2)
    assert st.isserlis_expect(diff.abs_squared()) == pytest.approx(8.0 / 25.0)


def test_isserlis_bo_square_hand_value():
    # independently hand-derived: sigma = 0, (M, N) = (1, 2) gives 9/4
    val = st.expect_hminus_sq(st.polyfield_bo_square_diff(1, 2), 0.0)
    assert val == pytest.approx(2.25)


def test_oracle_agrees_with_monte_carlo():
    # every acceptance functional at small cutoffs, 1e5 samples, 4 s.e.
    n = 100_000

    b = bs.make_basis("halfwave", 2)
    c = sample_mu_block(b, STREAM, 0, n)
    f = fn.quartic_hw_batch(b, c, 2)
    se = f.std() / np.sqrt(n)
    assert abs(f.mean() - st.isserlis_expect(st.polyfunc_quartic_hw(2))) < 4 * se

    bd = bs.make_basis("dnls", 2)
    cd = sample_mu_block(bd, STREAM, 0, n)
    sel = np.abs(bd.modes) > 1
    vals = np.abs(np.sum(-(bd.modes * sel) * np.abs(cd) ** 2, axis=1)) ** 2
    se = vals.std() / np.sqrt(n)
    assert abs(vals.mean() - 8.0 / 25.0) < 4 * se

    bb = bs.make_basis("bo", 4)
    cb = sample_mu_block(bb, STREAM, 0, n)
    freqs = fn._fft_freqs(bb.grid)
    sob = (1.0 + freqs.astype(float) ** 2) ** (-0.25)
    d = fn.bo_square_coeffs(bb, cb, 4) - fn.bo_square_coeffs(bb, cb, 2)
    vals = np.sum(sob * fn._abs2(d), axis=-1)
    se = vals.std() / np.sqrt(n)
    oracle = st.expect_hminus_sq(st.polyfield_bo_square_diff(2, 4), 0.25)
    assert abs(vals.mean() - oracle) < 4 * se


def test_oracle_wick_diff_agrees_with_monte_carlo():
    n = 60_000
    b = bs.make_basis("halfwave", 3)
    c = sample_mu_block(b, STREAM, 0, n)
    diff = fn.wick_cubic_hw_coeffs(b, c, 3) - fn.wick_cubic_hw_coeffs(b, c, 1)
    w = (1.0 + b.modes.astype(float) ** 2) ** (-0.25)
    vals = np.sum(w * fn._abs2(diff), axis=-1)
    se = vals.std() / np.sqrt(n)
    oracle = st.expect_hminus_sq(st.polyfield_hw_wick_diff(1, 3), 0.25)
    assert abs(vals.mean() - oracle) < 4 * se


def test_degree_and_budget_guards():
    p = st.PolynomialFunctional()
    with pytest.raises(st.PairingBudgetError):
        p.add(1.0, tuple((k, False) for k in range(9)))  # degree 9 > 8


# -- cauchy rates --------------------------------------------------------------------


def test_cauchy_rate_synthetic_calibration():
    rep = st.cauchy_rate("halfwave", "synthetic", 256, [8, 16, 32, 64], 0.0, 50_000, STREAM)
    assert rep.slope == pytest.approx(-1.0, abs=0.02)
    for p in rep.points:
        assert p.exact == pytest.approx(1.0 / p.m)


def test_cauchy_rate_exact_alongside_and_monotone():
    rep = st.cauchy_rate("dnls", "dnls_momentum", 12, [2, 4], 0.0, 5000, STREAM)
    for p in rep.points:
        assert p.exact is not None
        assert abs(p.estimate - p.exact) < 6 * p.stderr
    ests = [p.estimate for p in rep.points]
    assert ests[1] <= ests[0]


def test_cauchy_rate_validates_m_list():
    with pytest.raises(ValueError):
        st.cauchy_rate("bo", "bo_square", 16, [8, 16], 0.25, 100, STREAM)
    with pytest.raises(ValueError):
        st.cauchy_rate("bo", "nope", 16, [8], 0.25, 100, STREAM)


# -- weighted KS ----------------------------------------------------------------------


def test_ks_identical_and_disjoint():
    x = np.arange(100.0)
    s, p = st.weighted_two_sample(x, x, np.ones(100), 999, STREAM)
    assert s == 0.0 and p == 1.0
    s2 = st.weighted_ks_statistic(x, x + 1000.0, np.ones(100))
    assert s2 == pytest.approx(1.0)


def test_ks_monotone_transform_invariance():
    gen = STREAM.at(1).generator()
    a = gen.normal(size=400)
    b = gen.normal(size=400) + 0.2
    w = gen.random(400) + 0.1
    s1 = st.weighted_ks_statistic(a, b, w)
    s2 = st.weighted_ks_statistic(np.exp(a), np.exp(b), w)
    assert s1 == s2


def test_ks_gaussian_power():
    gen = STREAM.at(2).generator()
    a = gen.normal(size=10_000)
    b = gen.normal(size=10_000) + 0.5
    _, p = st.weighted_two_sample(a, b, np.ones(10_000), 1999, STREAM)
    assert p < 1e-3


def test_ks_input_validation():
    with pytest.raises(ValueError):
        st.weighted_two_sample([1.0], [1.0, 2.0], [1.0], 999, STREAM)
    with pytest.raises(ValueError):
        st.weighted_two_sample([1.0, 2.0], [1.0, 2.0], [0.0, 0.0], 999, STREAM)
    with pytest.raises(ValueError):
        st.weighted_two_sample([1.0], [1.0], [1.0], 100, STREAM)  # too few perms


def test_permutation_pvalues_uniform_under_null():
    # calibration: p-values of exchangeable pairs pass a chi^2 uniformity test at 1%
    gen = STREAM.at(3).generator()
    pvals = []
    for rep in range(200):
        pooled = gen.normal(size=400)
        swap = gen.random(200) < 0.5
        a = np.where(swap, pooled[200:], pooled[:200])
        b = np.where(swap, pooled[:200], pooled[200:])
        w = gen.random(200) + 0.2
        _, p = st.weighted_two_sample(a, b, w, 599, STREAM.at(rep))
        pvals.append(p)
    counts, _ = np.histogram(pvals, bins=10, range=(0.0, 1.0))
    stat = np.sum((counts - 20.0) ** 2 / 20.0)
    assert stat < chi2.ppf(0.99, df=9)


def test_permutation_deterministic():
    gen = STREAM.at(4).generator()
    a, b, w = gen.normal(size=300), gen.normal(size=300), gen.random(300)
    r1 = st.weighted_two_sample(a, b, w, 999, STREAM.at(0))
    r2 = st.weighted_two_sample(a, b, w, 999, STREAM.at(0))
    assert r1 == r2


# -- invariance reports -----------------------------------------------------------------


def test_invariance_report_t0_statistics_zero():
    cfg = gb.GibbsConfig(model="halfwave", cutoff=8, kappa=2.0)
    fcfg = fl.FlowConfig("halfwave", 8, dt=5e-3, horizon=0.0)
    rep = st.invariance_report(cfg, fcfg, count=1500, stream=STREAM)
    assert all(k == 0.0 for _, k, _ in rep.observables)
    assert all(p == 1.0 for _, _, p in rep.observables)
    doc = rep.as_dict()
    assert doc["model"] == "halfwave" and doc["N"] == 8 and "ess" in doc


def test_invariance_holds_small_scale():
    cfg = gb.GibbsConfig(model="halfwave", cutoff=8, kappa=2.0)
    fcfg = fl.FlowConfig("halfwave", 8, dt=5e-3, horizon=1.0)
    rep = st.invariance_report(cfg, fcfg, count=4000, stream=STREAM)
    assert rep.all_pass(0.01)
    assert rep.drifts["l2"] < 1e-4


def test_negative_control_rejects_free_measure():
    # uniform weights test invariance of mu itself under a coupling-boosted flow:
    # at least one observable must reject at the 1% level
    cfg = gb.GibbsConfig(model="halfwave", cutoff=8, kappa=2.0)
    fcfg = fl.FlowConfig("halfwave", 8, dt=5e-3, horizon=1.0, coupling=4.0)
    rep = st.invariance_report(cfg, fcfg, count=20_000, stream=STREAM, uniform_weights=True)
    assert any(p < 0.01 for _, _, p in rep.observables)


def test_invariance_config_mismatch():
    cfg = gb.GibbsConfig(model="halfwave", cutoff=8, kappa=2.0)
    fcfg = fl.FlowConfig("bo", 8, dt=5e-3, horizon=1.0)
    with pytest.raises(ValueError):
        st.invariance_report(cfg, fcfg, count=100, stream=STREAM)
