"""Sampling the free Gaussian measure mu and computing norms of sampled fields.

Per-mode standard deviations sigma_n (complex Gaussians g with E|g|^2 = 1):

* zonal     sigma_n = 1/n
* dnls      sigma_n = 1/<n>,        <n> = (1+n^2)^{1/2}
* halfwave  sigma_n = (1+|n|)^{-1/2}
* torus     sigma_n = (1+lam_n^2)^{-1/2}
* bo        c_n = (h_n + i l_n) / (2 |n|^{1/2}) for n >= 1 with h, l standard
            real Gaussians, c_{-n} = conj(c_n), c_0 = 0.  The components are
            standard (not 1/sqrt(2)-normalized), which is what makes
            E ||Pi_N phi||^2 equal the harmonic counterterm sum_{n<=N} 1/n.

Reproducibility: one Philox stream per (seed, lane, sample index); sample i is
bit-identical however the index range is split across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .basis import Basis, SpectralField, make_basis

_MASK64 = (1 << 64) - 1

# lane allotment: 0 free-measure draws, 1 rejection/resampling uniforms,
# 2 permutation tests, 3 scratch
LANE_MU = 0
LANE_ACCEPT = 1
LANE_PERMUTE = 2


@dataclass(frozen=True)
class RngStream:
    """Counter-based stream: (seed, lane) keys Philox, the index is the counter."""

    seed: int
    index: int = 0
    lane: int = LANE_MU

    def at(self, index: int) -> "RngStream":
        return replace(self, index=int(index))

    def on_lane(self, lane: int) -> "RngStream":
        return replace(self, lane=int(lane))

    def generator(self) -> np.random.Generator:
        bg = np.random.Philox(
            key=np.array([self.seed & _MASK64, self.lane & _MASK64], dtype=np.uint64),
            counter=np.array([0, 0, self.index & _MASK64, 0], dtype=np.uint64),
        )
        return np.random.Generator(bg)


def weight_table(basis: Basis) -> np.ndarray:
    """sigma_n per stored mode (for bo: the per-mode deviation of c_n, n != 0)."""
    model = basis.model
    if model == "zonal":
        return 1.0 / basis.modes.astype(float)
    if model == "dnls":
        return 1.0 / np.sqrt(1.0 + basis.modes.astype(float) ** 2)
    if model == "halfwave":
        return 1.0 / np.sqrt(1.0 + np.abs(basis.modes).astype(float))
    if model == "bo":
        absn = np.abs(basis.modes).astype(float)
        sig = np.zeros_like(absn)
        nz = absn > 0
        # E|c_n|^2 = 2/(4|n|) = 1/(2|n|) with standard components
        sig[nz] = 1.0 / (2.0 * np.sqrt(absn[nz]))
        return sig
    return 1.0 / np.sqrt(1.0 + basis.lam_sq)


def _draw_count(basis: Basis) -> int:
    if basis.model == "bo":
        return basis.cutoff  # independent complex draws for n = 1..N
    return basis.n_modes


def _coeffs_from_normals(basis: Basis, normals: np.ndarray) -> np.ndarray:
    """Map a (..., 2*draws) block of standard normals to coefficient rows."""
    re = normals[..., 0::2]
    im = normals[..., 1::2]
    if basis.model == "bo":
        n = np.arange(1, basis.cutoff + 1, dtype=float)
        g = (re + 1j * im) / (2.0 * np.sqrt(n))  # standard components, no 1/sqrt2
        c = np.zeros(normals.shape[:-1] + (basis.n_modes,), dtype=complex)
        c[..., basis.cutoff + 1 :] = g
        c[..., : basis.cutoff] = g[..., ::-1].conj()
        return c
    g = (re + 1j * im) / np.sqrt(2.0)  # E|g|^2 = 1
    return g * weight_table(basis)


def sample_mu(model_or_basis, cutoff: int | None = None, stream: RngStream | None = None) -> SpectralField:
    """One draw of the truncated free field phi_N for the stream's index."""
    basis = model_or_basis if isinstance(model_or_basis, Basis) else make_basis(model_or_basis, cutoff)
    if stream is None:
        raise ValueError("an RngStream is required")
    normals = stream.generator().standard_normal(2 * _draw_count(basis))
    return SpectralField(basis, _coeffs_from_normals(basis, normals))


def sample_mu_block(basis: Basis, stream: RngStream, start: int, count: int) -> np.ndarray:
    """Coefficient matrix (count, n_modes); row i reproduces sample start+i.

    Fast path: one Philox bit generator whose state is reset per index, which
    is bit-identical to constructing a fresh generator for every sample.
    """
    d = 2 * _draw_count(basis)
    normals = np.empty((count, d))
    bg = stream.at(start).generator().bit_generator
    state = bg.state
    counter = state["state"]["counter"]
    gen = np.random.Generator(bg)
    for i in range(count):
        counter[:] = 0
        counter[2] = (start + i) & _MASK64
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        bg.state = state
        normals[i] = gen.standard_normal(d)
    return _coeffs_from_normals(basis, normals)


def expected_mass(basis: Basis, cutoff: int | None = None) -> float:
    """E ||Pi_M phi||_{L^2}^2 under mu; with M = basis cutoff this is alpha_N."""
    m = basis.cutoff if cutoff is None else cutoff
    sig = weight_table(basis)
    mask = basis.low_mask(m)
    if basis.model == "bo":
        return float(np.sum(2.0 * sig[mask] ** 2))  # standard components double it
    return float(np.sum(sig[mask] ** 2))


# -- norms and observables -----------------------------------------------------


def sobolev_norm(u: SpectralField, s: float) -> float:
    """H^s norm from coefficients with the model's <mode> weight."""
    w = u.basis.sobolev_weight ** (2.0 * s)
    return float(np.sqrt(np.sum(w * np.abs(u.coeffs) ** 2)))


def lq_norm(u: SpectralField, q: float) -> float:
    """(int |u|^q)^{1/q} by quadrature under the model's normalized measure."""
    if q < 1:
        raise ValueError("q must be >= 1")
    vals = np.abs(u.basis.synthesize(u.coeffs))
    return float(u.basis.integrate(vals**q) ** (1.0 / q))


def cubic_integral(u: SpectralField) -> float:
    """Signed int u^3 for real (bo-type) fields, normalized measure."""
    vals = u.basis.synthesize(u.coeffs)
    return float(np.real(u.basis.integrate(vals**3)))
