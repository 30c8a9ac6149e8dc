"""Spectral bases, projectors and grid transforms for the five model geometries.

Models and conventions (all inner products are the normalized ones):

* ``zonal``    -- radial functions on S^3 spanned by P_n(theta) =
  sqrt(2/pi) sin(n theta)/sin(theta), n = 1..N, with
  <f,g> = int_0^pi f conj(g) sin^2(theta) dtheta.
* ``bo``, ``dnls``, ``halfwave`` -- Fourier exponentials e^{inx} on the circle,
  |n| <= N, with <f,g> = (2 pi)^{-1} int_0^{2 pi} f conj(g) dx.  ``bo`` fields
  are real with zero mean: c_{-n} = conj(c_n), c_0 = 0.
* ``torus``    -- unit square [0,1)^2 with waves e^{2 pi i k.x}; the mode list
  is the first N+1 lattice points in the canonical (|k|^2, lex) order and
  <f,g> = int f conj(g) dx.

Grids are sized for exact dealiasing: quintic products of band-limited fields
reach frequency 5N and every projected product below the cutoff must equal the
exact coefficient convolution.  A power of two >= 8(N+1) per axis guarantees
this (on the torus the bound applies to the largest frequency component of the
mode list, not to the eigenvalue count N).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import fft as sfft

from . import weyl

MODELS = ("zonal", "bo", "dnls", "halfwave", "torus")
CIRCLE_MODELS = ("bo", "dnls", "halfwave")

_BO_REALITY_TOL = 1e-9


def _fft_workers(default: int = 2) -> int:
    import os

    try:
        return max(1, int(os.environ.get("GIBBSFLOW_THREADS", default)))
    except (TypeError, ValueError):
        return default


_WORKERS = _fft_workers()


def next_pow2(m: int) -> int:
    g = 1
    while g < m:
        g *= 2
    return g


def cutoff_profile(t):
    """Smooth even cutoff chi: 1 on |t|<=1/2, 0 on |t|>=1, C^inf blend between.

    On (1/2,1): chi(t) = h(2(1-|t|)) with h(s) = psi(s)/(psi(s)+psi(1-s)),
    psi(s) = exp(-1/s).  The blend is symmetric, so chi(3/4) = 1/2 exactly.
    """
    t = np.abs(np.asarray(t, dtype=float))
    out = np.zeros_like(t)
    out[t <= 0.5] = 1.0
    mid = (t > 0.5) & (t < 1.0)
    if np.any(mid):
        s = 2.0 * (1.0 - t[mid])

        def psi(x):
            val = np.zeros_like(x)
            pos = x > 0
            val[pos] = np.exp(-1.0 / x[pos])
            return val

        out[mid] = psi(s) / (psi(s) + psi(1.0 - s))
    return out if out.ndim else float(out)


class Basis:
    """Precomputed mode set, symbols and transform plan for one (model, N)."""

    def __init__(self, model: str, cutoff: int):
        if model not in MODELS:
            raise ValueError(f"unknown model {model!r}")
        if cutoff < 1 and model != "torus":
            raise ValueError("cutoff must be >= 1")
        if model == "torus" and cutoff < 0:
            raise ValueError("cutoff must be >= 0")
        self.model = model
        self.cutoff = int(cutoff)

        if model == "zonal":
            self.modes = np.arange(1, cutoff + 1)
            self.grid = next_pow2(8 * (cutoff + 1))
            self.sobolev_weight = self.modes.astype(float)
            self.omega = self.modes.astype(float) ** 2
            theta = np.arange(1, self.grid) * np.pi / self.grid
            self._theta = theta
            self._sin_theta = np.sin(theta)
            self.quad_nodes = theta
            self.quad_weights = (np.pi / self.grid) * self._sin_theta**2
        elif model in CIRCLE_MODELS:
            self.modes = np.arange(-cutoff, cutoff + 1)
            self.grid = next_pow2(8 * (cutoff + 1))
            self.sobolev_weight = np.sqrt(1.0 + self.modes.astype(float) ** 2)
            if model == "halfwave":
                self.omega = 1.0 + np.abs(self.modes).astype(float)
            elif model == "bo":
                self.omega = self.modes.astype(float) * np.abs(self.modes)
            else:  # dnls
                self.omega = self.modes.astype(float) ** 2
            self._full_index = np.mod(self.modes, self.grid)
            self.quad_nodes = 2.0 * np.pi * np.arange(self.grid) / self.grid
            self.quad_weights = np.full(self.grid, 1.0 / self.grid)
        else:  # torus
            self.modes = weyl.first_modes(cutoff + 1)
            self.lam_sq = weyl.first_lam_sq(cutoff + 1)
            kmax = int(np.max(np.abs(self.modes)))
            # the torus model is cubic: projected cubics need 4K+2 per axis and
            # the widest integrand (|u|^6) needs 6K+1; no quintic occurs here
            self.grid = max(8, next_pow2(max(4 * (kmax + 1), 6 * kmax + 1)))
            self.sobolev_weight = np.sqrt(1.0 + self.lam_sq)
            self.omega = 1.0 + self.lam_sq
            self._full_index = (
                np.mod(self.modes[:, 0], self.grid),
                np.mod(self.modes[:, 1], self.grid),
            )
            self.quad_weights = np.full(self.grid * self.grid, 1.0 / self.grid**2)

    # -- bookkeeping ---------------------------------------------------------

    @property
    def n_modes(self) -> int:
        return len(self.modes) if self.model != "torus" else self.modes.shape[0]

    def index_of(self, mode) -> int:
        """Position of a mode in the coefficient vector."""
        if self.model == "zonal":
            n = int(mode)
            if not 1 <= n <= self.cutoff:
                raise ValueError(f"mode {n} outside zonal range 1..{self.cutoff}")
            return n - 1
        if self.model in CIRCLE_MODELS:
            n = int(mode)
            if abs(n) > self.cutoff:
                raise ValueError(f"mode {n} outside circle range |n|<={self.cutoff}")
            return n + self.cutoff
        k = np.asarray(mode, dtype=int)
        hits = np.nonzero((self.modes[:, 0] == k[0]) & (self.modes[:, 1] == k[1]))[0]
        if len(hits) == 0:
            raise ValueError(f"lattice point {tuple(k)} not in the first {self.n_modes} modes")
        return int(hits[0])

    def low_mask(self, m: int) -> np.ndarray:
        """Boolean mask of the modes kept by the sharp projector Pi_m."""
        if self.model == "zonal":
            return self.modes <= m
        if self.model in CIRCLE_MODELS:
            return np.abs(self.modes) <= m
        return np.arange(self.n_modes) <= m

    def __eq__(self, other):
        return isinstance(other, Basis) and (self.model, self.cutoff) == (other.model, other.cutoff)

    def __hash__(self):
        return hash((self.model, self.cutoff))

    def __repr__(self):
        return f"Basis(model={self.model!r}, cutoff={self.cutoff}, grid={self.grid})"

    # -- transforms ----------------------------------------------------------

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        """Coefficients -> grid values.  Accepts (..., n_modes) batches."""
        coeffs = np.asarray(coeffs)
        if self.model == "zonal":
            lead = coeffs.shape[:-1]
            b = np.zeros(lead + (self.grid - 1,), dtype=complex)
            b[..., : self.cutoff] = coeffs * np.sqrt(2.0 / np.pi)
            g = 0.5 * (sfft.dst(b.real, type=1, axis=-1) + 1j * sfft.dst(b.imag, type=1, axis=-1))
            return g / self._sin_theta
        if self.model in CIRCLE_MODELS:
            lead = coeffs.shape[:-1]
            s = np.zeros(lead + (self.grid,), dtype=complex)
            s[..., self._full_index] = coeffs
            return sfft.ifft(s, axis=-1, norm="forward", workers=_WORKERS)
        lead = coeffs.shape[:-1]
        s = np.zeros(lead + (self.grid, self.grid), dtype=complex)
        s[..., self._full_index[0], self._full_index[1]] = coeffs
        return sfft.ifft2(s, axes=(-2, -1), norm="forward", workers=_WORKERS)

    def analyze(self, values: np.ndarray) -> np.ndarray:
        """Grid values -> coefficients; exact inverse for band-limited data."""
        values = np.asarray(values, dtype=complex)
        if self.model == "zonal":
            if values.shape[-1] != self.grid - 1:
                raise ValueError("grid values must sit on the interior sine nodes")
            g = values * self._sin_theta
            b = (sfft.dst(g.real, type=1, axis=-1) + 1j * sfft.dst(g.imag, type=1, axis=-1)) / self.grid
            return b[..., : self.cutoff] * np.sqrt(np.pi / 2.0)
        if self.model in CIRCLE_MODELS:
            if values.shape[-1] != self.grid:
                raise ValueError("grid values must match the basis grid size")
            s = sfft.fft(values, axis=-1, norm="forward", workers=_WORKERS)
            return s[..., self._full_index]
        if values.shape[-2:] != (self.grid, self.grid):
            raise ValueError("grid values must match the basis grid size")
        s = sfft.fft2(values, axes=(-2, -1), norm="forward", workers=_WORKERS)
        return s[..., self._full_index[0], self._full_index[1]]

    def integrate(self, grid_values: np.ndarray) -> np.ndarray:
        """Normalized integral of grid samples (batched over leading axes)."""
        if self.model == "torus":
            flat = grid_values.reshape(grid_values.shape[:-2] + (-1,))
            return flat @ self.quad_weights
        return grid_values @ self.quad_weights


@lru_cache(maxsize=64)
def make_basis(model: str, cutoff: int) -> Basis:
    return Basis(model, cutoff)


@dataclass(frozen=True)
class SpectralField:
    """A truncated field: complex coefficients over a basis' mode list."""

    basis: Basis
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.ascontiguousarray(self.coeffs, dtype=complex)
        if c.shape != (self.basis.n_modes,):
            raise ValueError(
                f"coefficient vector length {c.shape} does not match mode count {self.basis.n_modes}"
            )
        object.__setattr__(self, "coeffs", c)
        if self.basis.model == "bo":
            scale = max(1.0, float(np.max(np.abs(c))) if c.size else 1.0)
            mid = self.basis.cutoff
            if abs(c[mid]) > _BO_REALITY_TOL * scale:
                raise ValueError("bo fields must have zero mean (c_0 = 0)")
            if np.max(np.abs(c[::-1].conj() - c)) > _BO_REALITY_TOL * scale:
                raise ValueError("bo fields must be real: c_{-n} = conj(c_n)")

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.basis, coeffs)

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def coeff(self, mode) -> complex:
        return complex(self.coeffs[self.basis.index_of(mode)])


def field_from_modes(basis: Basis, entries: dict) -> SpectralField:
    """Build a field from a {mode: coefficient} mapping."""
    c = np.zeros(basis.n_modes, dtype=complex)
    for mode, val in entries.items():
        c[basis.index_of(mode)] = val
    return SpectralField(basis, c)


# -- operators ----------------------------------------------------------------


def project(u: SpectralField, m: int) -> SpectralField:
    """Sharp spectral projector Pi_m: zero every coefficient beyond m."""
    if m > u.basis.cutoff:
        raise ValueError(f"projection cutoff {m} exceeds basis cutoff {u.basis.cutoff}")
    if m < 0:
        raise ValueError("projection cutoff must be >= 0")
    c = np.where(u.basis.low_mask(m), u.coeffs, 0.0)
    return u.with_coeffs(c)


def smooth_project(u: SpectralField, m: int) -> SpectralField:
    """Smooth zonal projector S_m: multiply mode n by chi(n/m)."""
    if u.basis.model != "zonal":
        raise NotImplementedError("smooth_project is defined for the zonal model only")
    if m < 1:
        raise ValueError("smooth projection cutoff must be >= 1")
    mult = cutoff_profile(u.basis.modes / m)
    return u.with_coeffs(u.coeffs * mult)


def zero_mean_project(u: SpectralField) -> SpectralField:
    """Pi^0 = 1 - Pi_0 on circle fields: remove the mean mode."""
    if u.basis.model not in CIRCLE_MODELS:
        raise NotImplementedError("zero_mean_project is defined for circle models only")
    c = u.coeffs.copy()
    c[u.basis.index_of(0)] = 0.0
    return u.with_coeffs(c)


def dispersion(model: str, mode, cutoff: int | None = None) -> float:
    """Linear frequency omega of one mode: c(t) = exp(-i omega t) c(0)."""
    if model == "zonal":
        return float(int(mode) ** 2)
    if model == "dnls":
        return float(int(mode) ** 2)
    if model == "bo":
        n = int(mode)
        return float(n * abs(n))
    if model == "halfwave":
        return 1.0 + abs(int(mode))
    if model == "torus":
        k = np.asarray(mode, dtype=float)
        return float(1.0 + weyl.FOUR_PI_SQ * (k[0] ** 2 + k[1] ** 2))
    raise ValueError(f"unknown model {model!r}")


def hilbert_transform(u: SpectralField) -> SpectralField:
    """Periodic Hilbert transform: c_n -> -i sign(n) c_n, c_0 -> 0."""
    if u.basis.model not in CIRCLE_MODELS:
        raise NotImplementedError("hilbert_transform is defined for circle models only")
    return u.with_coeffs(-1j * np.sign(u.basis.modes) * u.coeffs)


def to_grid(u: SpectralField) -> np.ndarray:
    return u.basis.synthesize(u.coeffs)


def from_grid(basis: Basis, values: np.ndarray) -> SpectralField:
    return SpectralField(basis, basis.analyze(values))


def embed(u: SpectralField, cutoff: int) -> SpectralField:
    """Re-express a field on the basis with a larger (or equal) cutoff."""
    if cutoff < u.basis.cutoff:
        raise ValueError("embed target cutoff must be >= the field's cutoff")
    big = make_basis(u.basis.model, cutoff)
    c = np.zeros(big.n_modes, dtype=complex)
    if u.basis.model == "zonal":
        c[: u.basis.n_modes] = u.coeffs
    elif u.basis.model in CIRCLE_MODELS:
        c[cutoff - u.basis.cutoff : cutoff + u.basis.cutoff + 1] = u.coeffs
    else:
        c[: u.basis.n_modes] = u.coeffs  # canonical order is cutoff-stable
    return SpectralField(big, c)
