"""Time integration of the five truncated Hamiltonian systems.

The integrator is an interaction-picture (integrating factor) RK4: linear
phases exp(-i omega t) are applied exactly, classical RK4 acts on the rotated
nonlinear part only.  Modes above the coupling cutoff N therefore evolve by
exact phase rotation, matching the structure of the truncated systems where
the nonlinearity never touches them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import functionals as fn
from .basis import Basis, SpectralField, make_basis

_FFT_FREQS = fn._fft_freqs


class BlowUpError(RuntimeError):
    """Integration produced a non-finite state; carries the last good time."""

    def __init__(self, message: str, last_good_time: float):
        super().__init__(message)
        self.last_good_time = last_good_time


@dataclass(frozen=True)
class FlowConfig:
    model: str
    cutoff: int
    dt: float
    horizon: float
    monitor_every: int = 100
    coupling: float = 1.0
    power: float = 3.0  # zonal nonlinearity degree r

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if not np.isfinite(self.horizon):
            raise ValueError("horizon must be finite")
        basis = make_basis(self.model, self.cutoff)
        omega_max = float(np.max(np.abs(basis.omega)))
        # exact linear phases remove stiffness; cap the step at half the
        # fastest linear period so stage phases stay meaningful
        if omega_max > 0 and self.dt > np.pi / omega_max:
            raise ValueError(
                f"dt={self.dt} exceeds the stability guard {np.pi / omega_max:.3e} "
                f"for max |omega| = {omega_max}"
            )

    def step_sizes(self) -> tuple[int, float]:
        """(number of full dt steps, fractional remainder step or 0)."""
        total = abs(self.horizon)
        n = int(np.floor(total / self.dt + 1e-12))
        rem = total - n * self.dt
        if rem < 1e-12 * max(1.0, total):
            rem = 0.0
        return n, rem


@dataclass(frozen=True)
class InvariantRecord:
    time: float
    l2: float
    hamiltonian: float
    mean: complex
    max_coeff: float


@dataclass(frozen=True)
class Trajectory:
    config: FlowConfig
    times: np.ndarray
    states: np.ndarray  # (len(times), n_modes)
    records: list[InvariantRecord] = field(default_factory=list)

    @property
    def initial(self) -> np.ndarray:
        return self.states[0]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


# -- nonlinearities (batched du/dt contributions, linear part excluded) -----------


def _nonlinear_rhs(basis: Basis, cutoff: int, coupling: float, power: float):
    """Return N(c) acting on (batch, n_modes) rows: dc/dt = -i omega c + N(c)."""
    model = basis.model

    if model == "halfwave":

        def rhs(c):
            return (-1j * coupling) * fn.wick_cubic_hw_coeffs(basis, c, cutoff)

    elif model == "torus":

        def rhs(c):
            return (-1j * coupling) * fn.wick_cubic_torus_coeffs(basis, c, cutoff)

    elif model == "zonal":

        def rhs(c):
            return (-1j * coupling) * fn.zonal_power_coeffs(basis, c, cutoff, power)

    elif model == "bo":
        freqs = _FFT_FREQS(basis.grid)
        low = np.abs(freqs) <= cutoff

        def rhs(c):
            sq = fn.bo_square_coeffs(basis, c, cutoff)
            dsq = (1j * freqs) * sq * low
            return -coupling * fn._extract(basis, dsq)

    elif model == "dnls":
        freqs = _FFT_FREQS(basis.grid)
        low = np.abs(freqs) <= cutoff
        lowmask = basis.low_mask(cutoff)

        def rhs(c):
            c = np.atleast_2d(c)
            un = c * lowmask
            s = fn._full_spectrum(basis, un)
            v = fn._grid(s)
            cubic_spec = fn._spec(fn._abs2(v) * v)
            dx_cubic = fn._extract(basis, (1j * freqs) * cubic_spec * low)
            t_u = fn.dnls_momentum_batch(basis, un, cutoff)[:, None]
            r_n = fn.dnls_remainder_coeffs(basis, un, cutoff)
            return coupling * (dx_cubic - 1j * (t_u * un + r_n))

    else:  # pragma: no cover
        raise ValueError(f"unknown model {model!r}")

    return rhs


def rhs(u: SpectralField, cutoff: int, coupling: float = 1.0, power: float = 3.0) -> SpectralField:
    """Full du/dt: exact linear symbol plus the truncated nonlinearity."""
    if cutoff > u.basis.cutoff:
        raise ValueError("cutoff exceeds the basis cutoff")
    nonlinear = _nonlinear_rhs(u.basis, cutoff, coupling, power)
    dc = -1j * u.basis.omega * u.coeffs + nonlinear(u.coeffs)[0]
    if u.basis.model == "bo":
        # du/dt of a real field is real; repair rounding asymmetry exactly
        dc = 0.5 * (dc + dc[::-1].conj())
        dc[u.basis.cutoff] = 0.0
    return SpectralField(u.basis, dc) if u.basis.model != "bo" else u.with_coeffs(dc)


def _rk4_steps(omega, nonlinear, c, dt, steps):
    """Lawson RK4 in the frame rotating with the linear phases; fixed step dt."""
    e_half = np.exp(-1j * omega * dt / 2.0)
    e_full = e_half * e_half
    for _ in range(steps):
        k1 = nonlinear(c)
        k2 = np.conj(e_half) * nonlinear(e_half * (c + (dt / 2.0) * k1))
        k3 = np.conj(e_half) * nonlinear(e_half * (c + (dt / 2.0) * k2))
        k4 = np.conj(e_full) * nonlinear(e_full * (c + dt * k3))
        c = e_full * (c + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
    return c


def evolve_batch(
    config: FlowConfig,
    states: np.ndarray,
    basis: Basis | None = None,
) -> np.ndarray:
    """Integrate a (batch, n_modes) matrix to t = horizon; returns the final states."""
    basis = basis or make_basis(config.model, config.cutoff)
    nonlinear = _nonlinear_rhs(basis, config.cutoff, config.coupling, config.power)
    direction = 1.0 if config.horizon >= 0 else -1.0
    n_full, rem = config.step_sizes()

    c = np.array(np.atleast_2d(states), dtype=complex)
    c = _rk4_steps(basis.omega, nonlinear, c, direction * config.dt, n_full)
    if rem > 0.0:
        c = _rk4_steps(basis.omega, nonlinear, c, direction * rem, 1)
    if not np.all(np.isfinite(c)):
        raise BlowUpError("non-finite state during integration", last_good_time=0.0)
    return c


def hamiltonian(u: SpectralField, cutoff: int, power: float = 3.0, coupling: float = 1.0) -> float:
    """Conserved energy of the truncated system, exact quadrature."""
    return float(hamiltonian_batch(u.basis, u.coeffs, cutoff, power, coupling)[0])


def hamiltonian_batch(
    basis: Basis, coeffs: np.ndarray, cutoff: int, power: float = 3.0, coupling: float = 1.0
) -> np.ndarray:
    coeffs = np.atleast_2d(coeffs)
    model = basis.model
    if model == "halfwave":
        kinetic = np.sum(basis.omega * np.abs(coeffs) ** 2, axis=-1)
        return kinetic - 0.5 * coupling * fn.quartic_hw_batch(basis, coeffs, cutoff)
    if model == "torus":
        kinetic = np.sum(basis.omega * np.abs(coeffs) ** 2, axis=-1)
        a = fn.alpha("torus", cutoff)
        # drop the constant alpha^2 of the completed square: H(0) = 0
        return kinetic + coupling * (fn.quartic_torus_batch(basis, coeffs, cutoff) - a * a)
    if model == "zonal":
        kinetic = np.sum(basis.omega * np.abs(coeffs) ** 2, axis=-1)
        mult = fn.cutoff_profile(basis.modes / cutoff)
        v = basis.synthesize(coeffs * mult)
        potential = basis.integrate(np.abs(v) ** (power + 1.0))
        return kinetic + coupling * (2.0 / (power + 1.0)) * potential
    if model == "bo":
        kinetic = -0.5 * np.sum(np.abs(basis.modes) * np.abs(coeffs) ** 2, axis=-1)
        un = coeffs * basis.low_mask(cutoff)
        v = fn._grid(fn._full_spectrum(basis, un))
        cubic = np.mean(v.real**3, axis=-1)
        return kinetic - coupling * cubic / 3.0
    if model == "dnls":
        un = coeffs * basis.low_mask(cutoff)
        kinetic = np.sum(basis.modes**2 * np.abs(un) ** 2, axis=-1)
        sextic = np.mean(fn._abs2(fn._grid(fn._full_spectrum(basis, un))) ** 3, axis=-1)
        gauge = fn.dnls_gauge_energy_batch(basis, un, cutoff)
        return kinetic + coupling * (-0.75 * gauge + 0.5 * sextic)
    raise ValueError(f"unknown model {model!r}")


def _record(config: FlowConfig, basis: Basis, t: float, c: np.ndarray) -> InvariantRecord:
    mean = complex(c[basis.index_of(0)]) if basis.model in ("bo", "dnls", "halfwave") else 0j
    return InvariantRecord(
        time=t,
        l2=float(np.linalg.norm(c)),
        hamiltonian=float(hamiltonian_batch(basis, c, config.cutoff, config.power, config.coupling)[0]),
        mean=mean,
        max_coeff=float(np.max(np.abs(c))),
    )


def evolve(config: FlowConfig, u0: SpectralField) -> Trajectory:
    """Integrate one field, recording invariants every monitor_every steps."""
    basis = u0.basis
    if basis.model != config.model:
        raise ValueError("field model does not match the flow config")
    if config.cutoff > basis.cutoff:
        raise ValueError("flow cutoff exceeds the basis cutoff")
    direction = 1.0 if config.horizon >= 0 else -1.0
    cadence = max(1, config.monitor_every)
    total = abs(config.horizon)

    times = [0.0]
    states = [u0.coeffs.copy()]
    records = [_record(config, basis, 0.0, u0.coeffs)]
    c = u0.coeffs[None, :].copy()

    elapsed = 0.0
    while elapsed < total - 1e-12 * max(1.0, total):
        span = min(cadence * config.dt, total - elapsed)
        sub = FlowConfig(
            model=config.model,
            cutoff=config.cutoff,
            dt=config.dt,
            horizon=direction * span,
            monitor_every=config.monitor_every,
            coupling=config.coupling,
            power=config.power,
        )
        try:
            c = evolve_batch(sub, c, basis)
        except BlowUpError as err:
            raise BlowUpError(str(err), last_good_time=direction * elapsed) from None
        elapsed = min(total, elapsed + span)
        t = direction * elapsed
        times.append(t)
        states.append(c[0].copy())
        records.append(_record(config, basis, t, c[0]))

    return Trajectory(config=config, times=np.array(times), states=np.array(states), records=records)


def invariant_drift(traj: Trajectory) -> dict[str, float]:
    """Max over monitor times of |Q(t) - Q(0)| / max(1, |Q(0)|) per invariant."""
    if not traj.records:
        raise ValueError("trajectory has no records")
    r0 = traj.records[0]
    out = {"l2": 0.0, "hamiltonian": 0.0}
    if traj.config.model == "bo":
        out["mean"] = 0.0  # the mean is conserved for bo only
    for rec in traj.records[1:]:
        out["l2"] = max(out["l2"], abs(rec.l2 - r0.l2) / max(1.0, abs(r0.l2)))
        out["hamiltonian"] = max(
            out["hamiltonian"], abs(rec.hamiltonian - r0.hamiltonian) / max(1.0, abs(r0.hamiltonian))
        )
        if "mean" in out:
            out["mean"] = max(out["mean"], abs(rec.mean - r0.mean) / max(1.0, abs(r0.mean)))
    return out


def export_trajectory_csv(path, traj: Trajectory, n_coeffs: int = 4, header_lines=()) -> None:
    """CSV with (time, re/im of the first coefficients, L2, H)."""
    basis = make_basis(traj.config.model, traj.config.cutoff)
    idx = list(range(min(n_coeffs, basis.n_modes)))
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        cols = ["time"] + [f"re_c{i}" for i in idx] + [f"im_c{i}" for i in idx] + ["l2", "hamiltonian"]
        fh.write(",".join(cols) + "\n")
        for t, state, rec in zip(traj.times, traj.states, traj.records):
            row = [repr(float(t))]
            row += [repr(float(state[i].real)) for i in idx]
            row += [repr(float(state[i].imag)) for i in idx]
            row += [repr(rec.l2), repr(rec.hamiltonian)]
            fh.write(",".join(row) + "\n")
