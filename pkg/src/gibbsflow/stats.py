"""Exact Gaussian-moment oracle, Cauchy-rate estimation and invariance testing.

The oracle evaluates expectations of polynomials in independent circular
complex Gaussians by the per-mode moment identity E[g^p conj(g)^q] =
delta_{pq} p! (E|g|^2)^p, which is the closed form of the Wick pairing count.
Every second-moment formula used in the paper-side proofs is reproduced by
squaring the field polynomial and feeding it through this oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import functionals as fn
from . import gibbs as gb
from .basis import make_basis
from .flow import FlowConfig, evolve_batch, hamiltonian_batch
from .randfield import LANE_PERMUTE, RngStream, sample_mu_block

MAX_DEGREE = 8
MONOMIAL_BUDGET = 2_000_000


class PairingBudgetError(RuntimeError):
    """The exact expansion exceeds the pairing budget; fall back to Monte Carlo."""


# -- polynomial functionals ----------------------------------------------------------


@dataclass
class PolynomialFunctional:
    """Finite sum of monomials prod g_{n_i} prod conj(g_{m_j}).

    terms maps a sorted tuple of (label, conj) factor pairs to a complex
    coefficient.  variances[label] = E|g_label|^2 (default 1; bo labels use 2
    because their components are standard normals).
    """

    terms: dict = field(default_factory=dict)
    variances: dict = field(default_factory=dict)

    def add(self, coeff: complex, factors) -> None:
        key = tuple(sorted(factors))
        if len(key) > MAX_DEGREE:
            raise PairingBudgetError(f"monomial degree {len(key)} exceeds {MAX_DEGREE}")
        self.terms[key] = self.terms.get(key, 0.0) + coeff
        if len(self.terms) > MONOMIAL_BUDGET:
            raise PairingBudgetError("monomial budget exceeded; use Monte Carlo instead")

    def conjugate(self) -> "PolynomialFunctional":
        out = PolynomialFunctional(variances=self.variances)
        for key, coeff in self.terms.items():
            out.add(np.conj(coeff), tuple((lab, not cj) for lab, cj in key))
        return out

    def __mul__(self, other: "PolynomialFunctional") -> "PolynomialFunctional":
        out = PolynomialFunctional(variances={**self.variances, **other.variances})
        for k1, c1 in self.terms.items():
            for k2, c2 in other.terms.items():
                out.add(c1 * c2, k1 + k2)
        return out

    def __sub__(self, other: "PolynomialFunctional") -> "PolynomialFunctional":
        out = PolynomialFunctional(variances={**self.variances, **other.variances})
        out.terms = dict(self.terms)
        for key, coeff in other.terms.items():
            out.terms[key] = out.terms.get(key, 0.0) - coeff
        return out

    def abs_squared(self) -> "PolynomialFunctional":
        return self * self.conjugate()


_FACTORIAL = [1, 1, 2, 6, 24]


def isserlis_expect(poly: PolynomialFunctional) -> float:
    """Exact expectation under independent circular complex Gaussians."""
    total = 0.0 + 0.0j
    for key, coeff in poly.terms.items():
        if coeff == 0.0:
            continue
        per_mode: dict = {}
        for lab, cj in key:
            p, q = per_mode.get(lab, (0, 0))
            per_mode[lab] = (p + (not cj), q + cj)
        val = 1.0
        for lab, (p, q) in per_mode.items():
            if p != q:
                val = 0.0
                break
            v = poly.variances.get(lab, 1.0)
            val *= _FACTORIAL[p] * v**p
        total += coeff * val
    return float(total.real)


# -- builders for the paper's functionals ----------------------------------------------


def _hw_phi_factors(n: int):
    """phi coefficient of e^{inx}: g_n / (1+|n|)^{1/2} (labels are the modes)."""
    return 1.0 / np.sqrt(1.0 + abs(n)), (n, False)


def polyfunc_quartic_hw(m: int, n: int | None = None) -> PolynomialFunctional:
    """f_M(phi) or, with n given, f_N(phi) - f_M(phi) on the half-wave field."""

    def build(cut: int, sign: float, poly: PolynomialFunctional):
        rng = [k for k in range(-cut, cut + 1)]
        wt = {k: 1.0 / np.sqrt(1.0 + abs(k)) for k in rng}
        # -||u||_{L4}^4 = -sum_{a-b+c-d=0} ...
        for a in rng:
            for b in rng:
                for c in rng:
                    d = a - b + c
                    if abs(d) > cut:
                        continue
                    coeff = -sign * wt[a] * wt[b] * wt[c] * wt[d]
                    poly.add(coeff, ((a, False), (b, True), (c, False), (d, True)))
        # +2 ||u||_{L2}^4
        for a in rng:
            for b in rng:
                coeff = 2.0 * sign * wt[a] ** 2 * wt[b] ** 2
                poly.add(coeff, ((a, False), (a, True), (b, False), (b, True)))

    poly = PolynomialFunctional()
    if n is None:
        build(m, 1.0, poly)
    else:
        build(n, 1.0, poly)
        build(m, -1.0, poly)
    return poly


def polyfunc_dnls_momentum_diff(m: int, n: int) -> PolynomialFunctional:
    """J(phi_N) - J(phi_M) = -sum_{M<|k|<=N} k |g_k|^2 / <k>^2."""
    poly = PolynomialFunctional()
    for k in range(-n, n + 1):
        if abs(k) <= m or k == 0:
            continue
        poly.add(-k / (1.0 + k * k), ((k, False), (k, True)))
    return poly


def _bo_factor(n: int):
    """BO coefficient c_n as (weight, factor): c_n = g_|n|/(2 sqrt|n|), c_{-n} = conj."""
    w = 1.0 / (2.0 * np.sqrt(abs(n)))
    return (w, (abs(n), n < 0))


def polyfield_bo_square_diff(m: int, n: int) -> dict[int, PolynomialFunctional]:
    """Fourier modes of Pi^0(phi_N^2) - Pi^0(phi_M^2) as polynomials; labels carry
    the bo variance E|g|^2 = 2."""
    out: dict[int, PolynomialFunctional] = {}
    for n1 in range(-n, n + 1):
        if n1 == 0:
            continue
        for n2 in range(-n, n + 1):
            if n2 == 0 or n1 + n2 == 0:
                continue
            if abs(n1) <= m and abs(n2) <= m:
                continue
            k = n1 + n2
            w1, f1 = _bo_factor(n1)
            w2, f2 = _bo_factor(n2)
            poly = out.setdefault(k, PolynomialFunctional())
            poly.add(w1 * w2, (f1, f2))
            poly.variances[abs(n1)] = 2.0
            poly.variances[abs(n2)] = 2.0
    return out


def polyfield_hw_wick_diff(m: int, n: int) -> dict[int, PolynomialFunctional]:
    """Fourier modes of G_N(phi) - G_M(phi) for the half-wave Wick cubic."""
    out: dict[int, PolynomialFunctional] = {}

    def add_cubic(cut: int, sign: float):
        rng = range(-cut, cut + 1)
        for n1 in rng:
            for n2 in rng:
                for n3 in rng:
                    k = n1 - n2 + n3
                    if abs(k) > cut:
                        continue
                    w = sign / np.sqrt((1.0 + abs(n1)) * (1.0 + abs(n2)) * (1.0 + abs(n3)))
                    poly = out.setdefault(k, PolynomialFunctional())
                    poly.add(w, ((n1, False), (n2, True), (n3, False)))

    def add_mass(cut: int, sign: float):
        rng = range(-cut, cut + 1)
        for a in rng:
            for k in rng:
                w = sign * (-2.0) / ((1.0 + abs(a)) * np.sqrt(1.0 + abs(k)))
                poly = out.setdefault(k, PolynomialFunctional())
                poly.add(w, ((a, False), (a, True), (k, False)))

    add_cubic(n, 1.0)
    add_mass(n, 1.0)
    add_cubic(m, -1.0)
    add_mass(m, -1.0)
    return out


def expect_hminus_sq(polyfield: dict[int, PolynomialFunctional], sigma: float) -> float:
    """E || sum_k P_k e_k ||_{H^{-sigma}}^2 = sum <k>^{-2 sigma} E|P_k|^2, exact."""
    total = 0.0
    for k, poly in polyfield.items():
        wk = (1.0 + k * k) ** (-sigma)
        total += wk * isserlis_expect(poly.abs_squared())
    return total


# -- Monte Carlo Cauchy rates ------------------------------------------------------------


@dataclass(frozen=True)
class RatePoint:
    m: int
    estimate: float
    stderr: float
    exact: float | None = None


@dataclass(frozen=True)
class RateReport:
    model: str
    functional: str
    cutoff: int
    sigma: float
    samples: int
    points: tuple
    slope: float
    slope_stderr: float

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "functional": self.functional,
            "cutoff": self.cutoff,
            "sigma": self.sigma,
            "samples": self.samples,
            "points": [
                {"M": p.m, "estimate": p.estimate, "stderr": p.stderr, "exact": p.exact}
                for p in self.points
            ],
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
        }


def _fit_slope(ms, estimates, stderrs) -> tuple[float, float]:
    x = np.log(np.asarray(ms, dtype=float))
    y = np.log(np.asarray(estimates, dtype=float))
    w = (np.asarray(estimates) / np.maximum(np.asarray(stderrs), 1e-300)) ** 2  # d(log y) variance
    wsum = np.sum(w)
    xb = np.sum(w * x) / wsum
    yb = np.sum(w * y) / wsum
    sxx = np.sum(w * (x - xb) ** 2)
    slope = np.sum(w * (x - xb) * (y - yb)) / sxx
    return float(slope), float(1.0 / np.sqrt(sxx))


_RATE_FUNCTIONALS = ("bo_square", "quartic_hw", "dnls_momentum", "wick_cubic_hw", "synthetic")


def cauchy_rate(
    model: str,
    functional: str,
    cutoff: int,
    m_list,
    sigma: float,
    samples: int,
    stream: RngStream,
    batch: int = 1024,
    with_exact: bool = True,
) -> RateReport:
    """Monte Carlo E_mu of the squared (H^{-sigma} or scalar) Cauchy difference.

    The same mu-samples at the large cutoff feed every M.  The exact oracle
    value is attached where the pairing budget allows it.
    """
    m_list = sorted(int(m) for m in m_list)
    if any(m >= cutoff for m in m_list):
        raise ValueError("every M must be < the reference cutoff N")

    if functional == "synthetic":
        # calibration channel: per-sample Exp(1)/M has mean exactly 1/M
        points = []
        for m in m_list:
            gen = stream.at(m).generator()
            vals = gen.exponential(1.0, size=samples) / m
            points.append(RatePoint(m, float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples)), 1.0 / m))
        slope, sse = _fit_slope(m_list, [p.estimate for p in points], [p.stderr for p in points])
        return RateReport(model, functional, cutoff, sigma, samples, tuple(points), slope, sse)

    if functional not in _RATE_FUNCTIONALS:
        raise ValueError(f"unknown rate functional {functional!r}")

    basis = make_basis(model, cutoff)
    freqs = fn._fft_freqs(basis.grid)
    sob = (1.0 + freqs.astype(float) ** 2) ** (-sigma)

    sums = np.zeros(len(m_list))
    sums_sq = np.zeros(len(m_list))
    done = 0
    while done < samples:
        nb = min(batch, samples - done)
        c = sample_mu_block(basis, stream, done, nb)
        if functional == "bo_square":
            big = fn.bo_square_coeffs(basis, c, cutoff)
            for j, m in enumerate(m_list):
                small = fn.bo_square_coeffs(basis, c, m)
                vals = np.sum(sob * np.abs(big - small) ** 2, axis=-1)
                sums[j] += vals.sum()
                sums_sq[j] += (vals**2).sum()
        elif functional == "quartic_hw":
            big = fn.quartic_hw_batch(basis, c, cutoff)
            for j, m in enumerate(m_list):
                vals = np.abs(big - fn.quartic_hw_batch(basis, c, m)) ** 2
                sums[j] += vals.sum()
                sums_sq[j] += (vals**2).sum()
        elif functional == "dnls_momentum":
            for j, m in enumerate(m_list):
                # J(phi_N) - J(phi_M) = -sum_{M<|n|<=N} n |c_n|^2 on coefficients
                sel = (np.abs(basis.modes) > m) & (np.abs(basis.modes) <= cutoff)
                vals = np.abs(np.sum(-(basis.modes * sel) * np.abs(c) ** 2, axis=-1)) ** 2
                sums[j] += vals.sum()
                sums_sq[j] += (vals**2).sum()
        else:  # wick_cubic_hw
            big = fn.wick_cubic_hw_coeffs(basis, c, cutoff)
            for j, m in enumerate(m_list):
                small = fn.wick_cubic_hw_coeffs(basis, c, m)
                diff = big - small
                w = (1.0 + basis.modes.astype(float) ** 2) ** (-sigma)
                vals = np.sum(w * np.abs(diff) ** 2, axis=-1)
                sums[j] += vals.sum()
                sums_sq[j] += (vals**2).sum()
        done += nb

    points = []
    for j, m in enumerate(m_list):
        mean = sums[j] / samples
        var = max(sums_sq[j] / samples - mean * mean, 0.0)
        se = float(np.sqrt(var / samples))
        exact = None
        if with_exact:
            exact = exact_cauchy_value(model, functional, m, cutoff, sigma)
        points.append(RatePoint(m, float(mean), se, exact))
    slope, sse = _fit_slope(m_list, [p.estimate for p in points], [p.stderr for p in points])
    return RateReport(model, functional, cutoff, sigma, samples, tuple(points), slope, sse)


def exact_cauchy_value(model: str, functional: str, m: int, n: int, sigma: float) -> float | None:
    """Oracle value of the squared Cauchy difference, None when over budget."""
    try:
        if functional == "dnls_momentum":
            return isserlis_expect(polyfunc_dnls_momentum_diff(m, n).abs_squared())
        if n > 12:
            return None  # quartic expansions grow like N^3..N^4
        if functional == "bo_square":
            return expect_hminus_sq(polyfield_bo_square_diff(m, n), sigma)
        if functional == "quartic_hw":
            return isserlis_expect(polyfunc_quartic_hw(m, n).abs_squared())
        if functional == "wick_cubic_hw":
            return expect_hminus_sq(polyfield_hw_wick_diff(m, n), sigma)
    except PairingBudgetError:
        return None
    return None


# -- weighted two-sample testing -----------------------------------------------------------


def _tie_boundaries(sorted_vals: np.ndarray) -> np.ndarray:
    """Mask of positions where the cdf difference may be evaluated: the sup of
    |F0 - FT| lives at the last index of each group of tied pooled values."""
    out = np.empty(len(sorted_vals), dtype=bool)
    out[-1] = True
    out[:-1] = np.diff(sorted_vals) > 0
    return out


def weighted_ks_statistic(obs0, obs_t, weights) -> float:
    """sup_x |F0(x) - FT(x)| between the weight-reweighted empirical cdfs."""
    obs0 = np.asarray(obs0, dtype=float)
    obs_t = np.asarray(obs_t, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if obs0.shape != obs_t.shape or obs0.shape != weights.shape:
        raise ValueError("observables and weights must have equal length")
    if np.any(weights < 0) or not np.any(weights > 0):
        raise ValueError("weights must be nonnegative and not all zero")
    total = weights.sum()
    pooled = np.concatenate([obs0, obs_t])
    contrib = np.concatenate([weights, -weights]) / total
    order = np.argsort(pooled, kind="stable")
    keep = _tie_boundaries(pooled[order])
    return float(np.max(np.abs(np.cumsum(contrib[order])[keep])))


def weighted_two_sample(
    obs0,
    obs_t,
    weights,
    n_permutations: int = 999,
    stream: RngStream | None = None,
) -> tuple[float, float]:
    """Weighted KS statistic with a pair-swapping permutation p-value.

    Pairs (obs0_i, obsT_i) are swapped independently with probability 1/2;
    the p-value is (1 + #{D_perm >= D}) / (1 + n_permutations).
    """
    if n_permutations < 500:
        raise ValueError("use at least 500 permutations")
    obs0 = np.asarray(obs0, dtype=float)
    obs_t = np.asarray(obs_t, dtype=float)
    weights = np.asarray(weights, dtype=float)
    stat = weighted_ks_statistic(obs0, obs_t, weights)

    n = len(obs0)
    total = weights.sum()
    pooled = np.concatenate([obs0, obs_t])
    order = np.argsort(pooled, kind="stable")
    keep = _tie_boundaries(pooled[order])
    pair_of = np.concatenate([np.arange(n), np.arange(n)])[order]
    base = np.concatenate([weights, -weights])[order] / total

    gen = (stream.on_lane(LANE_PERMUTE) if stream is not None else RngStream(0, lane=LANE_PERMUTE)).generator()
    hits = 0
    chunk = max(1, min(n_permutations, 256 if n > 4096 else 1024))
    done = 0
    while done < n_permutations:
        nb = min(chunk, n_permutations - done)
        signs = np.where(gen.random((nb, n)) < 0.5, 1.0, -1.0)
        flipped = signs[:, pair_of] * base[None, :]
        stats = np.max(np.abs(np.cumsum(flipped, axis=1)[:, keep]), axis=1)
        hits += int(np.sum(stats >= stat - 1e-15))
        done += nb
    return stat, (1 + hits) / (1 + n_permutations)


# -- invariance testing ---------------------------------------------------------------------


def default_observables(model: str, basis) -> list[tuple[str, callable]]:
    obs: list[tuple[str, callable]] = []
    probe = min(8, basis.cutoff)
    low = basis.low_mask(probe)

    obs.append((f"mass_pi{probe}", lambda C, low=low: np.sum(np.abs(C * low) ** 2, axis=1)))
    if model == "zonal":
        i1 = basis.index_of(1)
    elif model == "torus":
        i1 = 1
    else:
        i1 = basis.index_of(1)
    obs.append(("re_c1", lambda C, i=i1: C[:, i].real))
    obs.append(("im_c1", lambda C, i=i1: C[:, i].imag))
    if model == "bo":
        def cube(C):
            v = fn._grid(fn._full_spectrum(basis, C))
            return np.mean(v.real**3, axis=-1)
        obs.append(("int_u3", cube))
    if model == "halfwave":
        obs.append(("f_N", lambda C: fn.quartic_hw_batch(basis, C, basis.cutoff)))
    if model == "torus":
        obs.append(("f_N", lambda C: fn.quartic_torus_batch(basis, C, basis.cutoff)))
    return obs


@dataclass(frozen=True)
class InvarianceReport:
    model: str
    cutoff: int
    horizon: float
    seed: int
    count: int
    ess: float
    observables: tuple  # of (name, ks, p)
    drifts: dict

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "N": self.cutoff,
            "T": self.horizon,
            "seed": self.seed,
            "ess": self.ess,
            "observables": [{"name": n, "ks": k, "p": p} for (n, k, p) in self.observables],
            "drifts": dict(self.drifts),
        }

    def all_pass(self, level: float = 0.01) -> bool:
        return all(p > level for (_, _, p) in self.observables)


def invariance_report(
    config: gb.GibbsConfig,
    flow_config: FlowConfig,
    count: int,
    stream: RngStream,
    observables=None,
    n_permutations: int = 999,
    uniform_weights: bool = False,
    batch: int = 4096,
    keep_states: bool = False,
):
    """Sample mu, weight by the Gibbs density, evolve, and KS-compare observables.

    The same weights w_i = density(v_i) reweight both time slices: under exact
    invariance of rho_N the reweighted distributions of F(v) and F(Phi_T v)
    coincide for every observable F.  With keep_states the raw arrays
    (c0, cT, weights) are returned alongside the report.
    """
    if config.model != flow_config.model or config.cutoff != flow_config.cutoff:
        raise ValueError("gibbs and flow configs must agree on model and cutoff")
    basis = make_basis(config.model, config.cutoff)
    c0 = sample_mu_block(basis, stream, 0, count)
    weights = (
        np.ones(count) if uniform_weights else gb.density_batch(config, basis, c0)
    )
    if not np.any(weights > 0):
        raise gb.DegenerateDensityError("all invariance-test weights vanished")

    ct = np.empty_like(c0)
    for lo in range(0, count, batch):
        hi = min(lo + batch, count)
        ct[lo:hi] = evolve_batch(flow_config, c0[lo:hi], basis)

    obs = observables or default_observables(config.model, basis)
    results = []
    for name, func in obs:
        stat, p = weighted_two_sample(func(c0), func(ct), weights, n_permutations, stream)
        results.append((name, float(stat), float(p)))

    mass0 = np.linalg.norm(c0, axis=1)
    mass_t = np.linalg.norm(ct, axis=1)
    h0 = hamiltonian_batch(basis, c0, config.cutoff, flow_config.power, flow_config.coupling)
    h_t = hamiltonian_batch(basis, ct, config.cutoff, flow_config.power, flow_config.coupling)
    drifts = {
        "l2": float(np.max(np.abs(mass_t - mass0) / np.maximum(1.0, mass0))),
        "hamiltonian": float(np.max(np.abs(h_t - h0) / np.maximum(1.0, np.abs(h0)))),
    }
    ess = float(weights.sum() ** 2 / np.sum(weights**2))
    report = InvarianceReport(
        model=config.model,
        cutoff=config.cutoff,
        horizon=flow_config.horizon,
        seed=stream.seed,
        count=count,
        ess=ess,
        observables=tuple(results),
        drifts=drifts,
    )
    if keep_states:
        return report, c0, ct, weights
    return report
