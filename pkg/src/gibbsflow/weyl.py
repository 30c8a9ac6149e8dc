"""Flat-torus eigenvalue enumeration and the log asymptotics of the mass counterterm.

The torus model lives on the unit-volume square [0,1)^2 with orthonormal waves
exp(2*pi*i k.x), k in Z^2, and Laplace eigenvalues lam_k^2 = 4 pi^2 |k|^2.  The
eigenbasis is ordered by nondecreasing lam^2 with a lexicographic tie-break on
(kx, ky), which makes every partial sum over "the first N+1 modes" reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

FOUR_PI_SQ = 4.0 * np.pi**2


@dataclass(frozen=True)
class EigenvalueTable:
    """Sorted torus spectrum below a radius cut.

    modes: (count, 2) int array of lattice points, nondecreasing lam^2,
    ties broken lexicographically on (kx, ky).
    lam_sq: eigenvalues 4 pi^2 |k|^2 in the same order.
    """

    modes: np.ndarray
    lam_sq: np.ndarray

    @property
    def count(self) -> int:
        return self.modes.shape[0]


def _sorted_lattice(radius_int: int) -> tuple[np.ndarray, np.ndarray]:
    """All k in Z^2 with |k|_inf <= radius_int, sorted by (|k|^2, kx, ky)."""
    r = int(radius_int)
    axis = np.arange(-r, r + 1)
    kx, ky = np.meshgrid(axis, axis, indexing="ij")
    modes = np.column_stack([kx.ravel(), ky.ravel()])
    norm2 = modes[:, 0] ** 2 + modes[:, 1] ** 2
    order = np.lexsort((modes[:, 1], modes[:, 0], norm2))
    return modes[order], norm2[order]


@lru_cache(maxsize=32)
def _first_modes_cached(count: int) -> tuple[np.ndarray, np.ndarray]:
    # |k|^2 of the count-th smallest lattice point is below count/pi + slack;
    # enlarge the box until enough points sit strictly inside the guard radius.
    guard = max(2, int(np.ceil(np.sqrt(count / np.pi))) + 2)
    while True:
        modes, norm2 = _sorted_lattice(guard)
        # points with |k|^2 <= guard^2 are complete within the box
        complete = np.count_nonzero(norm2 <= guard * guard)
        if complete >= count:
            m = modes[:count].copy()
            n2 = norm2[:count].copy()
            m.setflags(write=False)
            n2.setflags(write=False)
            return m, n2
        guard *= 2


def first_modes(count: int) -> np.ndarray:
    """The first ``count`` torus modes in the canonical spectral order."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return _first_modes_cached(int(count))[0]


def first_lam_sq(count: int) -> np.ndarray:
    """Eigenvalues 4 pi^2 |k|^2 of the first ``count`` modes."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return FOUR_PI_SQ * _first_modes_cached(int(count))[1].astype(float)


def enumerate_modes(lambda_max: float) -> EigenvalueTable:
    """All modes with lam = 2 pi |k| <= lambda_max, canonically sorted."""
    if lambda_max < 0:
        raise ValueError("lambda_max must be >= 0")
    rmax = lambda_max / (2.0 * np.pi)
    box = int(np.floor(rmax)) + 1
    modes, norm2 = _sorted_lattice(box)
    keep = norm2 <= rmax * rmax * (1 + 1e-15)
    return EigenvalueTable(modes=modes[keep], lam_sq=FOUR_PI_SQ * norm2[keep].astype(float))


def alpha_torus(cutoff: int) -> float:
    """Counterterm sum_{0<=n<=cutoff} 1/(1 + lam_n^2) over the ordered spectrum."""
    if cutoff < 0:
        raise ValueError("cutoff must be >= 0")
    lam_sq = first_lam_sq(cutoff + 1)
    return float(np.sum(1.0 / (1.0 + lam_sq)))


def alpha_series(nmax: int) -> np.ndarray:
    """alpha_N for N = 0..nmax as one cumulative pass over the ordered spectrum."""
    lam_sq = first_lam_sq(nmax + 1)
    return np.cumsum(1.0 / (1.0 + lam_sq))


def counting_ratio(lambda_value: float) -> float:
    """N(lam)/lam^2, which tends to 1/(4 pi) by the lattice-count asymptotics."""
    if lambda_value <= 0:
        raise ValueError("lambda_value must be > 0")
    table = enumerate_modes(lambda_value)
    return table.count / lambda_value**2


def alpha_asymptotics(nmax: int) -> tuple[float, float]:
    """Least-squares slope of alpha_N against ln N over N in [nmax/10, nmax].

    Returns (slope, intercept).  The slope approaches 1/(4 pi).
    """
    if nmax < 1000:
        raise ValueError("nmax must be >= 1000")
    alpha = alpha_series(nmax)
    lo = nmax // 10
    n = np.arange(lo, nmax + 1)
    x = np.log(n.astype(float))
    y = alpha[lo : nmax + 1]
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def export_alpha_csv(path, nmax: int, stride: int = 1) -> None:
    """Write (N, lam_N^2, alpha_N) rows; plain plumbing for external plotting."""
    lam_sq = first_lam_sq(nmax + 1)
    alpha = np.cumsum(1.0 / (1.0 + lam_sq))
    with open(path, "w") as fh:
        fh.write("N,lam_sq,alpha\n")
        for n in range(0, nmax + 1, stride):
            fh.write(f"{n},{float(lam_sq[n])!r},{float(alpha[n])!r}\n")
