import numpy as np
import pytest

from gibbsflow import basis as bs
from gibbsflow import functionals as fn
from gibbsflow.randfield import RngStream, lq_norm, sample_mu, sample_mu_block

STREAM = RngStream(seed=202)


def conv_product_circle(c1, modes1, c2, modes2):
    """Direct convolution oracle: coefficients of u*v as {mode: value}."""
    out = {}
    for a, ca in zip(modes1, c1):
        for b, cb in zip(modes2, c2):
            out[a + b] = out.get(a + b, 0.0) + ca * cb
    return out


# -- counterterms -----------------------------------------------------------------


def test_alpha_values():
    assert fn.alpha("bo", 3) == pytest.approx(11.0 / 6.0)
    assert fn.alpha("halfwave", 2) == pytest.approx(8.0 / 3.0)
    assert fn.alpha("torus", 0) == pytest.approx(1.0)
    assert fn.alpha("zonal", 2) == pytest.approx(1.25)
    assert fn.alpha("dnls", 1) == pytest.approx(2.0)


def test_mass_recentered():
    b = bs.make_basis("halfwave", 2)
    zero = bs.SpectralField(b, np.zeros(5))
    assert fn.mass_recentered(zero, 2) == pytest.approx(-8.0 / 3.0)
    u = bs.field_from_modes(bs.make_basis("halfwave", 1), {0: np.sqrt(2.0)})
    assert fn.mass_recentered(u, 1) == pytest.approx(0.0, abs=1e-12)
    # any field with ||Pi_N u||^2 = alpha_N recenters to zero
    v = bs.field_from_modes(b, {1: np.sqrt(fn.alpha("halfwave", 2))})
    assert fn.mass_recentered(v, 2) == pytest.approx(0.0, abs=1e-12)


# -- bo square ---------------------------------------------------------------------


def test_bo_square_cos():
    b = bs.make_basis("bo", 4)
    cosx = bs.field_from_modes(b, {1: 0.5, -1: 0.5})
    sq = fn.bo_square(cosx, 4)
    assert sq.coeff(2) == pytest.approx(0.25)
    assert sq.coeff(0) == 0.0
    assert sq.basis.cutoff == 8
    two = fn.bo_square(bs.field_from_modes(b, {1: 1.0, -1: 1.0}), 4)
    assert two.coeff(2) == pytest.approx(1.0)  # 2cos x -> 2cos 2x


def test_bo_square_real_mean_free_random():
    b = bs.make_basis("bo", 8)
    for i in range(5):
        u = sample_mu(b, stream=STREAM.at(i))
        sq = fn.bo_square(u, 8)
        assert sq.coeff(0) == 0.0
        sym = sq.coeffs[::-1].conj()
        assert np.max(np.abs(sym - sq.coeffs)) < 1e-12


def test_bo_square_matches_convolution():
    b = bs.make_basis("bo", 6)
    u = sample_mu(b, stream=STREAM.at(11))
    sq = fn.bo_square(u, 6)
    direct = conv_product_circle(u.coeffs, b.modes, u.coeffs, b.modes)
    for k in range(-12, 13):
        want = direct.get(k, 0.0) if k != 0 else 0.0
        assert abs(sq.coeff(k) - want) < 1e-12


# -- wick cubics -------------------------------------------------------------------


def test_wick_cubic_hw_single_mode():
    b = bs.make_basis("halfwave", 4)
    c = 0.7 - 1.1j
    g = fn.wick_cubic_hw(bs.field_from_modes(b, {2: c}), 4)
    assert g.coeff(2) == pytest.approx(-abs(c) ** 2 * c)
    others = np.delete(g.coeffs, b.index_of(2))
    assert np.max(np.abs(others)) < 1e-14


def test_wick_cubic_hw_two_modes():
    b = bs.make_basis("halfwave", 2)
    g = fn.wick_cubic_hw(bs.field_from_modes(b, {0: 1.0, 1: 1.0}), 2)
    expect = {-1: 1.0, 0: -1.0, 1: -1.0, 2: 1.0, -2: 0.0}
    for k, val in expect.items():
        assert g.coeff(k) == pytest.approx(val, abs=1e-13)
    assert np.all(fn.wick_cubic_hw(bs.SpectralField(b, np.zeros(5)), 2).coeffs == 0.0)


def test_wick_cubic_hw_matches_convolution():
    b = bs.make_basis("halfwave", 5)
    u = sample_mu(b, stream=STREAM.at(3))
    g = fn.wick_cubic_hw(u, 5)
    conj_modes = -b.modes
    sq = conv_product_circle(u.coeffs, b.modes, u.coeffs.conj(), conj_modes)
    mass = np.sum(np.abs(u.coeffs) ** 2)
    for k in range(-5, 6):
        cubic_k = sum(
            sq.get(k - m, 0.0) * u.coeffs[i] for i, m in enumerate(b.modes)
        )
        want = cubic_k - 2.0 * mass * u.coeff(k)
        assert abs(g.coeff(k) - want) < 1e-12


def test_wick_cubic_torus():
    b = bs.make_basis("torus", 12)
    a = fn.alpha("torus", 12)
    c = 1.3 + 0.4j
    f = fn.wick_cubic_torus(bs.field_from_modes(b, {(1, 0): c}), 12)
    assert f.coeff((1, 0)) == pytest.approx((abs(c) ** 2 - 2 * a) * c)
    assert np.all(fn.wick_cubic_torus(bs.SpectralField(b, np.zeros(13)), 12).coeffs == 0.0)
    # definition check: wick cubic == plain projected cubic - 2 alpha u
    u = sample_mu(b, stream=STREAM.at(4))
    fu = fn.wick_cubic_torus(u, 12)
    plain = fu.coeffs + 2 * a * u.coeffs
    grid = bs.to_grid(u)
    plain_direct = b.analyze(np.abs(grid) ** 2 * grid)
    assert np.max(np.abs(plain - plain_direct)) < 1e-12


def test_gauge_invariance_of_cubics():
    theta = 0.731
    phase = np.exp(1j * theta)
    bh = bs.make_basis("halfwave", 6)
    u = sample_mu(bh, stream=STREAM.at(5))
    lhs = fn.wick_cubic_hw(u.with_coeffs(phase * u.coeffs), 6).coeffs
    rhs = phase * fn.wick_cubic_hw(u, 6).coeffs
    assert np.max(np.abs(lhs - rhs)) < 1e-12

    bt = bs.make_basis("torus", 12)
    v = sample_mu(bt, stream=STREAM.at(6))
    lhs = fn.wick_cubic_torus(v.with_coeffs(phase * v.coeffs), 12).coeffs
    rhs = phase * fn.wick_cubic_torus(v, 12).coeffs
    assert np.max(np.abs(lhs - rhs)) < 1e-12

    bz = bs.make_basis("zonal", 8)
    w = sample_mu(bz, stream=STREAM.at(7))
    lhs = fn.zonal_power(w.with_coeffs(phase * w.coeffs), 8, 3.0).coeffs
    rhs = phase * fn.zonal_power(w, 8, 3.0).coeffs
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_wick_cubic_mass_pairing():
    # Im <G_N(u), u> = 0: the nonlinearity conserves mass at the vector field level
    b = bs.make_basis("halfwave", 8)
    c = sample_mu_block(b, STREAM, 0, 1000)
    g = fn.wick_cubic_hw_coeffs(b, c, 8)
    pair = np.sum(g * np.conj(c), axis=1)
    assert np.max(np.abs(pair.imag)) < 1e-12


# -- quartics ----------------------------------------------------------------------


def test_quartic_hw():
    b = bs.make_basis("halfwave", 2)
    c = 0.9 + 0.2j
    assert fn.quartic_hw(bs.field_from_modes(b, {0: c}), 2) == pytest.approx(abs(c) ** 4)
    u = bs.field_from_modes(b, {0: 1.0, 1: 1.0})
    assert fn.quartic_hw(u, 2) == pytest.approx(2.0)
    assert fn.quartic_hw(bs.SpectralField(b, np.zeros(5)), 2) == 0.0


def test_quartic_torus():
    b = bs.make_basis("torus", 12)
    a = fn.alpha("torus", 12)
    assert fn.quartic_torus(bs.SpectralField(b, np.zeros(13)), 12) == pytest.approx(a * a)
    u = bs.field_from_modes(b, {(0, 1): np.sqrt(2 * a)})
    assert fn.quartic_torus(u, 12) == pytest.approx(-a * a)


def test_quartic_torus_defocusing_bound():
    b = bs.make_basis("torus", 12)
    a = fn.alpha("torus", 12)
    c = sample_mu_block(b, STREAM, 0, 10_000)
    vals = fn.quartic_torus_batch(b, c, 12)
    assert np.all(vals >= -a * a - 1e-10)


# -- dnls --------------------------------------------------------------------------


def test_dnls_momentum_examples():
    b = bs.make_basis("dnls", 4)
    e1 = bs.field_from_modes(b, {1: 1.0})
    assert fn.dnls_momentum(e1, 4) == pytest.approx(-0.5)
    c = 1.1 - 0.3j
    ce0 = bs.field_from_modes(b, {0: c})
    assert fn.dnls_momentum(ce0, 4) == pytest.approx(1.5 * abs(c) ** 4)
    assert fn.dnls_momentum(bs.SpectralField(b, np.zeros(9)), 4) == 0.0


def test_dnls_momentum_quadrature_oracle():
    # 2 Im int u dx(conj u) + (3/2) int |u|^4 evaluated independently on the grid
    b = bs.make_basis("dnls", 5)
    u = sample_mu(b, stream=STREAM.at(8))
    grid = bs.to_grid(u)
    du = b.synthesize(1j * b.modes * u.coeffs)
    quad = 2.0 * np.mean(grid * np.conj(du)).imag + 1.5 * np.mean(np.abs(grid) ** 4)
    assert fn.dnls_momentum(u, 5) == pytest.approx(quad, abs=1e-12)


def test_dnls_remainder_vanishes_below_band():
    b = bs.make_basis("dnls", 16)
    e1 = bs.field_from_modes(b, {1: 1.0})
    assert np.max(np.abs(fn.dnls_remainder(e1, 16).coeffs)) < 1e-14
    assert np.all(fn.dnls_remainder(bs.SpectralField(b, np.zeros(33)), 16).coeffs == 0.0)


def test_dnls_remainder_hand_value():
    # N = 1, u = 2 cos x: R^2 vanishes (real field) and R^1 expands to 6 cos x
    b = bs.make_basis("dnls", 1)
    u = bs.field_from_modes(b, {1: 1.0, -1: 1.0})
    r = fn.dnls_remainder(u, 1)
    assert r.coeff(1) == pytest.approx(3.0, abs=1e-12)
    assert r.coeff(-1) == pytest.approx(3.0, abs=1e-12)
    assert abs(r.coeff(0)) < 1e-13


def test_dnls_remainder_matches_padded_convolution():
    # fully independent oracle: exact convolution arithmetic on dictionaries
    cutoff = 3
    b = bs.make_basis("dnls", cutoff)
    u = sample_mu(b, stream=STREAM.at(12))
    c = dict(zip(b.modes.tolist(), u.coeffs))
    cbar = {-k: np.conj(v) for k, v in c.items()}

    def mul(d1, d2):
        out = {}
        for a, va in d1.items():
            for bb, vb in d2.items():
                out[a + bb] = out.get(a + bb, 0.0) + va * vb
        return out

    def dx(d):
        return {k: 1j * k * v for k, v in d.items()}

    def proj(d, keep_low, low=True):
        return {k: v for k, v in d.items() if (abs(k) <= keep_low) == low}

    def inv_dx(d):
        return {k: v / (1j * k) for k, v in d.items() if k != 0}

    inner1 = mul(c, proj(mul(c, dx(mul(cbar, cbar))), cutoff, low=False))
    inner1b = mul(cbar, proj(mul(cbar, dx(mul(c, c))), cutoff, low=False))
    tot1 = {k: inner1.get(k, 0.0) + inner1b.get(k, 0.0) for k in set(inner1) | set(inner1b)}
    r1 = proj(mul(c, inv_dx(tot1)), cutoff)

    quint = mul(mul(c, cbar), mul(c, cbar))
    inner2 = mul(c, proj(mul(quint, cbar), cutoff, low=False))
    inner2b = mul(cbar, proj(mul(quint, c), cutoff, low=False))
    tot2 = {k: inner2.get(k, 0.0) - inner2b.get(k, 0.0) for k in set(inner2) | set(inner2b)}
    r2 = proj(mul(c, inv_dx(tot2)), cutoff)

    r = fn.dnls_remainder(u, cutoff)
    for k in range(-cutoff, cutoff + 1):
        want = 1.5 * r1.get(k, 0.0) + 1.5j * r2.get(k, 0.0)
        assert abs(r.coeff(k) - want) < 1e-12


def test_dnls_gauge_energy_matches_coefficient_sum():
    # Im int conj(u^2) dx(u^2) = sum_k k |(u^2)_k|^2 on coefficients
    b = bs.make_basis("dnls", 4)
    u = sample_mu(b, stream=STREAM.at(13))
    sq = conv_product_circle(u.coeffs, b.modes, u.coeffs, b.modes)
    want = sum(k * abs(v) ** 2 for k, v in sq.items())
    assert fn.dnls_gauge_energy(u, 4) == pytest.approx(want, abs=1e-12)


# -- zonal power --------------------------------------------------------------------


def test_zonal_power_linear_case():
    b = bs.make_basis("zonal", 8)
    u = sample_mu(b, stream=STREAM.at(14))
    v = fn.zonal_power(u, 8, 1.0)
    mult = bs.cutoff_profile(b.modes / 8)
    assert np.max(np.abs(v.coeffs - mult**2 * u.coeffs)) < 1e-12


def test_zonal_power_p1():
    b = bs.make_basis("zonal", 64)
    c = 0.8 + 0.5j
    v = fn.zonal_power(bs.field_from_modes(b, {1: c}), 64, 3.0)
    assert v.coeff(1) == pytest.approx((2.0 / np.pi) * abs(c) ** 2 * c)
    assert np.max(np.abs(v.coeffs[1:])) < 1e-13
    assert np.all(fn.zonal_power(bs.SpectralField(b, np.zeros(64)), 64, 3.0).coeffs == 0.0)


def test_zonal_power_rejects_bad_degree():
    b = bs.make_basis("zonal", 4)
    u = sample_mu(b, stream=STREAM.at(15))
    with pytest.raises(ValueError):
        fn.zonal_power(u, 4, 5.0)
    with pytest.raises(NotImplementedError):
        fn.zonal_power(sample_mu(bs.make_basis("dnls", 4), stream=STREAM.at(0)), 4, 3.0)


def test_zonal_product_identity():
    # P_k P_l = sqrt(2/pi) sum_{j=1}^{min(k,l)} P_{|k-l|+2j-1}, coefficients to 1e-10
    b = bs.make_basis("zonal", 24)
    for k in range(1, 9):
        for ell in range(1, 9):
            pk = bs.to_grid(bs.field_from_modes(b, {k: 1.0}))
            pl = bs.to_grid(bs.field_from_modes(b, {ell: 1.0}))
            prod = b.analyze(pk * pl)
            expect = fn.zonal_product_coeffs(k, ell)
            for n in range(1, 25):
                want = expect.get(n, 0.0)
                assert abs(prod[n - 1] - want) < 1e-10


# -- dealiasing ---------------------------------------------------------------------


@pytest.mark.parametrize("cutoff", [4, 8, 16])
def test_projected_products_match_convolution(cutoff):
    b = bs.make_basis("dnls", cutoff)
    u = sample_mu(b, stream=STREAM.at(20 + cutoff))
    v = sample_mu(b, stream=STREAM.at(30 + cutoff))
    grid_prod = b.analyze(bs.to_grid(u) * bs.to_grid(v))
    direct = conv_product_circle(u.coeffs, b.modes, v.coeffs, b.modes)
    for i, k in enumerate(b.modes):
        assert abs(grid_prod[i] - direct.get(k, 0.0)) < 1e-12
