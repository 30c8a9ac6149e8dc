"""Gibbs density evaluation, normalization, weighted sampling and tail diagnostics.

Unnormalized densities with respect to the free measure mu, chosen so that
rho_N is exactly invariant under the matching truncated flow (the exponent is
minus the potential part of the conserved Hamiltonian, with the kinetic part
absorbed by mu):

* zonal     exp(-(2/(r+1)) int |S_N u|^{r+1})
* bo        chi(g_N(u)) exp(-(2/3) int (Pi_N u)^3)
* dnls      chi(||u_N||_{L2}) exp(+(3/4) f_N(u) - (1/2) int |u_N|^6),
            f_N(u) = Im int conj(u_N^2) dx(u_N^2)
* halfwave  chi(g_N(u)) exp(+f_N(u)/2), f_N = -||u_N||_{L4}^4 + 2||u_N||_{L2}^4
* torus     exp(-f_N(u)), f_N the completed-square quartic

with g_N(u) = ||Pi_N u||^2 - alpha_N.  Normalization constants are estimated
separately and never enter density().
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from . import functionals as fn
from .basis import Basis, SpectralField, cutoff_profile, make_basis
from .randfield import LANE_ACCEPT, RngStream, sample_mu_block

_LOG_CLAMP = 700.0  # exp stays finite in double precision


class DegenerateDensityError(RuntimeError):
    """Every sampled weight vanished (the chi window was never hit)."""


@dataclass
class GibbsConfig:
    model: str
    cutoff: int
    kappa: float = 2.0
    chi_kind: str = "indicator"  # or "smooth"
    power: float = 3.0  # zonal r
    normalization: float | None = None  # beta_N, set by estimate_normalization

    def __post_init__(self):
        if self.model not in ("zonal", "bo", "dnls", "halfwave", "torus"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.kappa <= 0:
            raise ValueError("kappa must be > 0")
        if self.chi_kind not in ("indicator", "smooth"):
            raise ValueError("chi_kind must be 'indicator' or 'smooth'")
        if self.model == "zonal" and not 1.0 <= self.power < 5.0:
            raise ValueError("zonal power r must satisfy 1 <= r < 5")

    def fingerprint(self) -> int:
        text = (
            f"model={self.model};cutoff={self.cutoff};kappa={self.kappa!r};"
            f"chi={self.chi_kind};power={self.power!r}"
        )
        return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


def chi_weight(config: GibbsConfig, t: np.ndarray) -> np.ndarray:
    """The compact cutoff chi on the recentered mass (or dnls mass)."""
    t = np.asarray(t, dtype=float)
    if config.chi_kind == "indicator":
        return (np.abs(t) <= config.kappa).astype(float)
    return cutoff_profile(t / config.kappa)


def log_density_batch(config: GibbsConfig, basis: Basis, coeffs: np.ndarray) -> np.ndarray:
    """log of the unnormalized density on rows of mode coefficients; -inf where chi = 0."""
    coeffs = np.atleast_2d(coeffs)
    n = config.cutoff
    model = config.model
    if model == "zonal":
        mult = cutoff_profile(basis.modes / n)
        v = basis.synthesize(coeffs * mult)
        pot = basis.integrate(np.abs(v) ** (config.power + 1.0))
        return -(2.0 / (config.power + 1.0)) * pot
    if model == "torus":
        return -fn.quartic_torus_batch(basis, coeffs, n)

    mask = basis.low_mask(n)
    un = coeffs * mask
    mass = np.sum(fn._abs2(un), axis=-1)
    if model == "bo":
        arg = mass - fn.alpha("bo", n)
        v = fn._grid(fn._full_spectrum(basis, un))
        cubic = np.mean(v.real**3, axis=-1)
        logw = -(2.0 / 3.0) * cubic
    elif model == "halfwave":
        arg = mass - fn.alpha("halfwave", n)
        logw = 0.5 * fn.quartic_hw_batch(basis, un, n)
    else:  # dnls: chi acts on the L2 norm itself
        arg = np.sqrt(mass)
        gauge = fn.dnls_gauge_energy_batch(basis, un, n)
        sextic = np.mean(fn._abs2(fn._grid(fn._full_spectrum(basis, un))) ** 3, axis=-1)
        logw = 0.75 * gauge - 0.5 * sextic
    chi = chi_weight(config, arg)
    out = np.where(chi > 0.0, logw + np.log(np.maximum(chi, 1e-300)), -np.inf)
    return out


def log_density(config: GibbsConfig, u: SpectralField) -> float:
    if u.basis.model != config.model:
        raise ValueError("field model does not match the config")
    if config.cutoff > u.basis.cutoff:
        raise ValueError("config cutoff exceeds the field's basis cutoff")
    return float(log_density_batch(config, u.basis, u.coeffs)[0])


def density(config: GibbsConfig, u: SpectralField) -> float:
    """Unnormalized density value; overflow clamped via the log domain."""
    return float(np.exp(min(log_density(config, u), _LOG_CLAMP)))


def density_batch(config: GibbsConfig, basis: Basis, coeffs: np.ndarray) -> np.ndarray:
    logw = log_density_batch(config, basis, coeffs)
    return np.exp(np.minimum(logw, _LOG_CLAMP))


# -- ensembles --------------------------------------------------------------------


@dataclass
class WeightedEnsemble:
    """mu-samples with importance weights density(u); ESS = (sum w)^2 / sum w^2."""

    basis: Basis
    coeffs: np.ndarray  # (count, n_modes)
    weights: np.ndarray
    indices: np.ndarray
    seed: int
    fingerprint: int
    low_ess_warning: bool = field(default=False)

    @property
    def count(self) -> int:
        return self.coeffs.shape[0]

    @property
    def ess(self) -> float:
        s = float(np.sum(self.weights))
        q = float(np.sum(self.weights**2))
        return s * s / q if q > 0 else 0.0

    def field(self, i: int) -> SpectralField:
        return SpectralField(self.basis, self.coeffs[i])


def estimate_normalization(
    config: GibbsConfig, samples: int, stream: RngStream, batch: int = 4096
) -> tuple[float, float]:
    """beta_N = 1/mean_mu(density) with its Monte Carlo standard error.

    Stores beta_N into config.normalization.
    """
    if samples < 100:
        raise ValueError("need at least 100 samples")
    basis = make_basis(config.model, config.cutoff)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        n = min(batch, samples - done)
        w = density_batch(config, basis, sample_mu_block(basis, stream, done, n))
        total += float(np.sum(w))
        total_sq += float(np.sum(w * w))
        done += n
    mean = total / samples
    if mean == 0.0:
        raise DegenerateDensityError(
            f"all {samples} weights vanished for {config.model} N={config.cutoff} "
            f"kappa={config.kappa}: chi support never hit"
        )
    var = max(total_sq / samples - mean * mean, 0.0)
    se_mean = np.sqrt(var / samples)
    beta = 1.0 / mean
    config.normalization = beta
    return beta, float(beta * beta * se_mean)


def sample_rho(
    config: GibbsConfig,
    count: int,
    stream: RngStream,
    rejection: bool = False,
    batch: int = 4096,
) -> WeightedEnsemble:
    """Importance sample rho_N against mu: weights are the unnormalized density.

    With rejection=True (bounded densities only, e.g. zonal where density <= 1)
    an unweighted ensemble of accepted draws is returned instead.
    """
    basis = make_basis(config.model, config.cutoff)
    if not rejection:
        coeffs = sample_mu_block(basis, stream, 0, count)
        weights = density_batch(config, basis, coeffs)
        ens = WeightedEnsemble(
            basis=basis,
            coeffs=coeffs,
            weights=weights,
            indices=np.arange(count, dtype=np.uint64),
            seed=stream.seed,
            fingerprint=config.fingerprint(),
        )
        if ens.ess < 10.0:
            ens.low_ess_warning = True
        return ens

    if config.model != "zonal":
        raise ValueError("rejection sampling requires a density bounded by 1 (zonal)")
    kept, kept_idx = [], []
    start = 0
    accept_stream = stream.on_lane(LANE_ACCEPT)
    while sum(len(k) for k in kept) < count:
        c = sample_mu_block(basis, stream, start, batch)
        w = density_batch(config, basis, c)
        u = np.empty(batch)
        for i in range(batch):
            u[i] = accept_stream.at(start + i).generator().random()
        acc = u < w
        kept.append(c[acc])
        kept_idx.append(np.arange(start, start + batch, dtype=np.uint64)[acc])
        start += batch
    coeffs = np.vstack(kept)[:count]
    return WeightedEnsemble(
        basis=basis,
        coeffs=coeffs,
        weights=np.ones(count),
        indices=np.concatenate(kept_idx)[:count],
        seed=stream.seed,
        fingerprint=config.fingerprint(),
    )


def draw_typical(config: GibbsConfig, stream: RngStream, pool: int = 512) -> SpectralField:
    """One rho_N-typical field: weighted resampling from a mu-sample pool."""
    ens = sample_rho(config, pool, stream)
    total = float(np.sum(ens.weights))
    if total == 0.0:
        raise DegenerateDensityError("cannot draw a typical field: all weights vanished")
    p = ens.weights / total
    pick_gen = stream.on_lane(LANE_ACCEPT).at(0).generator()
    i = int(pick_gen.choice(ens.count, p=p))
    return ens.field(i)


def tail_curve(
    config: GibbsConfig,
    lambda_grid: np.ndarray,
    samples: int,
    stream: RngStream,
    batch: int = 8192,
) -> list[tuple[float, float, float]]:
    """Monte Carlo survival curve mu(density > lambda) with binomial error bars."""
    lam = np.asarray(lambda_grid, dtype=float)
    if np.any(lam <= 0) or np.any(np.diff(lam) <= 0):
        raise ValueError("lambda grid must be positive and increasing")
    basis = make_basis(config.model, config.cutoff)
    counts = np.zeros(len(lam))
    done = 0
    loglam = np.log(lam)
    while done < samples:
        n = min(batch, samples - done)
        logw = log_density_batch(config, basis, sample_mu_block(basis, stream, done, n))
        counts += np.sum(logw[:, None] > loglam[None, :], axis=0)
        done += n
    p = counts / samples
    se = np.sqrt(p * (1.0 - p) / samples)
    return [(float(l), float(pi), float(si)) for l, pi, si in zip(lam, p, se)]


def density_moment(
    config: GibbsConfig, p: float, samples: int, stream: RngStream, batch: int = 8192
) -> tuple[float, float]:
    """Empirical p-th moment E_mu[density^p] with its standard error."""
    basis = make_basis(config.model, config.cutoff)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        n = min(batch, samples - done)
        w = density_batch(config, basis, sample_mu_block(basis, stream, done, n))
        wp = w**p
        total += float(np.sum(wp))
        total_sq += float(np.sum(wp * wp))
        done += n
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    return mean, float(np.sqrt(var / samples))


# -- binary ensemble persistence ----------------------------------------------------

_MAGIC = b"GFE1"


class EnsembleFormatError(ValueError):
    """Malformed ensemble file; the message names the failing byte offset."""


def write_ensemble(path, ens: WeightedEnsemble) -> None:
    """Little-endian layout: magic, model tag, N, n_modes, count, seed, fingerprint,
    then complex-double coefficient blocks, double weights, uint64 rng indices."""
    model_tag = ens.basis.model.encode().ljust(8, b"\0")
    header = _MAGIC + model_tag + struct.pack(
        "<IIQQQ", ens.basis.cutoff, ens.basis.n_modes, ens.count, ens.seed & (2**64 - 1), ens.fingerprint
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(ens.coeffs, dtype="<c16").tobytes())
        fh.write(np.ascontiguousarray(ens.weights, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ens.indices, dtype="<u8").tobytes())


def read_ensemble(path, expect_fingerprint: int | None = None) -> WeightedEnsemble:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 44:
        raise EnsembleFormatError(f"file truncated in header at offset {len(raw)}")
    if raw[:4] != _MAGIC:
        raise EnsembleFormatError("bad magic at offset 0")
    model = raw[4:12].rstrip(b"\0").decode()
    cutoff, n_modes, count, seed, fingerprint = struct.unpack("<IIQQQ", raw[12:44])
    if expect_fingerprint is not None and fingerprint != expect_fingerprint:
        raise EnsembleFormatError(
            f"fingerprint mismatch: file has {fingerprint:#018x}, requested {expect_fingerprint:#018x}"
        )
    basis = make_basis(model, cutoff)
    if basis.n_modes != n_modes:
        raise EnsembleFormatError(f"mode count {n_modes} inconsistent with basis at offset 16")
    off = 44
    nc = count * n_modes * 16
    if len(raw) < off + nc + count * 8 + count * 8:
        raise EnsembleFormatError(f"file truncated in payload at offset {len(raw)}")
    coeffs = np.frombuffer(raw, dtype="<c16", count=count * n_modes, offset=off).reshape(count, n_modes)
    off += nc
    weights = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
    off += count * 8
    indices = np.frombuffer(raw, dtype="<u8", count=count, offset=off)
    ens = WeightedEnsemble(
        basis=basis,
        coeffs=coeffs.copy(),
        weights=weights.copy(),
        indices=indices.copy(),
        seed=seed,
        fingerprint=fingerprint,
    )
    if ens.ess < 10.0:
        ens.low_ess_warning = True
    return ens
