"""Piecewise time-dependent propagation of pure states and Lindblad densities.

Every Hamiltonian used here is a linear combination of five fixed operators

    H(t) = c0 sz/2 + c1 a+a + c2 (a s+ + a+ s-) + c3 i(a+ s- - a s+) + c4 sx

so segments only provide the scalar coefficients, evaluated on the whole RK4
time grid in one vectorized call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

from ._kernels import rk4_lindblad, rk4_pure, to_coo
from .hilbert import SpaceSpec, SystemState, build_operators
from .pulses import (
    BaseProtocol,
    FourierPulse,
    GaussianPulse,
    StaPulse,
    base_eval,
    fourier_eval,
    gaussian_field,
)

TERMS = ("sz_half", "n", "coupling", "cd", "sx")


class StepSizeError(RuntimeError):
    pass


class IntegrationAccuracyError(RuntimeError):
    pass


def term_matrices(space: SpaceSpec) -> np.ndarray:
    ops = build_operators(space)
    return np.stack([0.5 * ops["sz"], ops["n"], ops["coupling"], ops["cd_generator"], ops["sx"]])


class Segment:
    duration: float

    def coefficients(self, t: np.ndarray, omega: float) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"type": type(self).__name__, "duration": self.duration}


def _stack(t, wq=0.0, omega=0.0, lam=0.0, cd=0.0, sx=0.0):
    out = np.zeros((np.size(t), len(TERMS)))
    for k, v in enumerate((wq, omega, lam, cd, sx)):
        out[:, k] = v
    return out


@dataclass(frozen=True)
class JCSegment(Segment):
    """Bare driven JC Hamiltonian with the base schedule."""

    base: BaseProtocol

    @property
    def duration(self):
        return self.base.tau

    def coefficients(self, t, omega):
        wq, _, _, lam, _, _ = base_eval(self.base, t)
        return _stack(t, wq, omega, lam)


@dataclass(frozen=True)
class LCDSegment(Segment):
    sta: StaPulse

    @property
    def duration(self):
        return self.sta.tau

    def coefficients(self, t, omega):
        wq, lam = self.sta.fields(t)
        return _stack(t, wq, omega, lam)


@dataclass(frozen=True)
class CDSegment(Segment):
    """``H_JC + H_CD`` (the counterdiabatic Hamiltonian before the LCD rotation)."""

    sta: StaPulse

    @property
    def duration(self):
        return self.sta.tau

    def coefficients(self, t, omega):
        wq, _, _, lam, _, _ = base_eval(self.sta.base, t)
        return _stack(t, wq, omega, lam, self.sta.theta(t))


@dataclass(frozen=True)
class FourierLCDSegment(Segment):
    omega_q_fit: FourierPulse
    lambda_fit: FourierPulse
    duration: float

    def coefficients(self, t, omega):
        return _stack(t, fourier_eval(self.omega_q_fit, t), omega, fourier_eval(self.lambda_fit, t))


@dataclass(frozen=True)
class StaticSegment(Segment):
    """Time-independent JC Hamiltonian; ``lam = 0`` is an idle period."""

    duration: float
    omega_q: float
    lam: float = 0.0

    def coefficients(self, t, omega):
        return _stack(t, self.omega_q, omega, self.lam)


def idle(duration: float, omega_q: float) -> StaticSegment:
    return StaticSegment(duration, omega_q, 0.0)


@dataclass(frozen=True)
class GaussianSegment(Segment):
    """Spin rotation ``A(t) sx`` generated by a Gaussian pulse.

    The free terms ``omega_q sz/2 + omega a+a`` are off during the pulse
    unless ``omega_q`` / ``free_mode`` are set.
    """

    pulse: GaussianPulse
    omega_q: float = 0.0
    free_mode: bool = False

    @property
    def duration(self):
        return self.pulse.duration

    def coefficients(self, t, omega):
        return _stack(
            t, self.omega_q, omega if self.free_mode else 0.0, 0.0, 0.0, gaussian_field(self.pulse, t)
        )


@dataclass(frozen=True)
class HamiltonianSchedule:
    segments: tuple[Segment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        for seg in self.segments:
            if not seg.duration > 0:
                raise ValueError(f"segment {seg!r} has non-positive duration")

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    def boundaries(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    def locate(self, t: float) -> tuple[Segment, float]:
        edges = self.boundaries()
        if t < -1e-12 or t > edges[-1] + 1e-12:
            raise ValueError(f"t = {t} outside schedule span [0, {edges[-1]}]")
        k = int(np.clip(np.searchsorted(edges, t, side="right") - 1, 0, len(self.segments) - 1))
        return self.segments[k], min(max(t - edges[k], 0.0), self.segments[k].duration)


def assemble_h(schedule: HamiltonianSchedule, t: float, space: SpaceSpec) -> np.ndarray:
    seg, tl = schedule.locate(t)
    c = seg.coefficients(np.array([tl]), space.omega)[0]
    return np.tensordot(c, term_matrices(space), axes=1)


@dataclass(frozen=True)
class EvolutionConfig:
    steps_per_unit: int = 2000
    renormalize: bool = True
    sample_dt: float | None = None

    def __post_init__(self):
        if self.steps_per_unit < 100:
            raise ValueError("steps_per_unit must be >= 100")


@dataclass(frozen=True)
class NoiseRates:
    gamma_sm: float = 0.0
    gamma_sz: float = 0.0
    gamma_a: float = 0.0
    gamma_ad: float = 0.0

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if v < 0:
                raise ValueError(f"{k} must be non-negative")

    def jumps(self, space: SpaceSpec) -> list[tuple[float, np.ndarray]]:
        ops = build_operators(space)
        pairs = [
            (self.gamma_sm, ops["sm"]),
            (self.gamma_sz, ops["sz"]),
            (self.gamma_a, ops["a"]),
            (self.gamma_ad, ops["adag"]),
        ]
        return [(g, np.asarray(A)) for g, A in pairs if g > 0]

    @property
    def any(self) -> bool:
        return any(v > 0 for v in self.__dict__.values())


@dataclass
class Series:
    """Sampled observables; ``columns`` maps names to value lists aligned with ``t``."""

    t: list = field(default_factory=list)
    columns: dict = field(default_factory=dict)

    def record(self, t: float, values: dict) -> None:
        self.t.append(t)
        for k, v in values.items():
            self.columns.setdefault(k, []).append(v)

    def extend(self, other: "Series", t_offset: float = 0.0) -> None:
        for i, t in enumerate(other.t):
            self.record(t + t_offset, {k: v[i] for k, v in other.columns.items()})

    def as_array(self) -> tuple[list[str], np.ndarray]:
        names = ["t", *self.columns]
        data = np.column_stack([self.t, *self.columns.values()]) if self.t else np.empty((0, len(names)))
        return names, data

    def at(self, t: float, name: str, tol: float = 1e-9) -> float:
        ts = np.asarray(self.t)
        i = int(np.argmin(np.abs(ts - t)))
        if abs(ts[i] - t) > tol:
            raise KeyError(f"no sample at t={t} (nearest {ts[i]})")
        return self.columns[name][i]


Observer = Callable[[SystemState], dict]


def _grid(seg: Segment, steps_per_unit: int):
    n = max(1, math.ceil(seg.duration * steps_per_unit - 1e-9))
    h = seg.duration / n
    t_half = np.linspace(0.0, seg.duration, 2 * n + 1)
    return n, h, t_half


def _stride(cfg: EvolutionConfig, h: float, n: int) -> int:
    if cfg.sample_dt is None:
        return n
    return max(1, int(round(cfg.sample_dt / h)))


def _chunks(n: int, stride: int):
    i = 0
    while i < n:
        j = min(n, i + stride)
        yield i, j
        i = j


def _segment_coo(seg: Segment, mats: np.ndarray, omega: float, cfg: EvolutionConfig):
    n, h, t_half = _grid(seg, cfg.steps_per_unit)
    coef = seg.coefficients(t_half, omega)
    active = np.flatnonzero(np.any(coef != 0, axis=0))
    coef = np.ascontiguousarray(coef[:, active])
    return n, h, coef, to_coo(mats[active])


def evolve_pure(
    state: SystemState,
    schedule: HamiltonianSchedule,
    cfg: EvolutionConfig = EvolutionConfig(),
    observer: Observer | None = None,
    t0: float = 0.0,
) -> tuple[SystemState, Series]:
    """Fixed-step RK4 integration of ``d psi/dt = -i H(t) psi``."""
    if not state.is_pure:
        raise TypeError("evolve_pure needs a pure state")
    space = state.space
    mats = term_matrices(space)
    psi = np.array(state.data, dtype=complex)
    series = Series()
    t_now = t0
    if observer is not None:
        series.record(t_now, observer(SystemState(psi.copy(), space)))
    for seg in schedule.segments:
        n, h, coef, coo = _segment_coo(seg, mats, space.omega, cfg)
        stride = _stride(cfg, h, n) if observer is not None else n
        for i0, i1 in _chunks(n, stride):
            drift = rk4_pure(psi, coef, *coo, h, i0, i1, cfg.renormalize)
            if drift > 1e-6:
                raise StepSizeError(
                    f"norm drift {drift:.2e} before t={t_now + i1 * h:.4f}; raise steps_per_unit"
                )
            if observer is not None:
                series.record(t_now + i1 * h, observer(SystemState(psi.copy(), space)))
        t_now += seg.duration
    return SystemState(psi, space), series


def lindblad_rhs(h: np.ndarray, rho: np.ndarray, jumps: Sequence[tuple[float, np.ndarray]]) -> np.ndarray:
    """``-i[H, rho] + sum_k G_k (A rho A+ - {A+A, rho}/2)``."""
    out = -1j * (h @ rho - rho @ h)
    for g, A in jumps:
        Ad = A.conj().T
        AdA = Ad @ A
        out += g * (A @ rho @ Ad - 0.5 * (AdA @ rho + rho @ AdA))
    return out


def _jump_tables(jumps, dim: int):
    damp = np.zeros((dim, dim), complex)
    rows, cols, vals, ids = [], [], [], []
    for k, (g, A) in enumerate(jumps):
        damp += g * A.conj().T @ A
        r, c = np.nonzero(A)
        rows.append(r)
        cols.append(c)
        vals.append(math.sqrt(g) * A[r, c])
        ids.append(np.full(r.size, k))
    if np.abs(damp - np.diag(np.diag(damp))).max() > 1e-14:
        raise ValueError("jump operators must have diagonal A+A")
    cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)
    return (
        np.ascontiguousarray(np.diag(damp).real),
        cat(rows, np.int64),
        cat(cols, np.int64),
        cat(vals, np.complex128),
        cat(ids, np.int64),
    )


def evolve_lindblad(
    state: SystemState,
    schedule: HamiltonianSchedule,
    rates: NoiseRates = NoiseRates(),
    cfg: EvolutionConfig = EvolutionConfig(),
    observer: Observer | None = None,
    t0: float = 0.0,
) -> tuple[SystemState, Series]:
    """Fixed-step RK4 on the master equation, using ``H_eff = H - i/2 sum G A+A``."""
    space = state.space
    mats = term_matrices(space)
    rho = np.array(state.density(), dtype=complex)
    tables = _jump_tables(rates.jumps(space), space.dim)
    series = Series()
    t_now = t0
    if observer is not None:
        series.record(t_now, observer(SystemState(rho.copy(), space)))
    for seg in schedule.segments:
        n, h, coef, coo = _segment_coo(seg, mats, space.omega, cfg)
        stride = _stride(cfg, h, n) if observer is not None else n
        for i0, i1 in _chunks(n, stride):
            rk4_lindblad(rho, coef, *coo, *tables, h, i0, i1)
            _check_density(rho, t_now + i1 * h)
            if observer is not None:
                series.record(t_now + i1 * h, observer(SystemState(rho.copy(), space)))
        t_now += seg.duration
    return SystemState(rho, space), series


def _check_density(rho: np.ndarray, t: float) -> None:
    tr = np.trace(rho).real
    if abs(tr - 1) > 1e-8:
        raise IntegrationAccuracyError(f"trace drift {abs(tr - 1):.2e} at t={t:.4f}")
    lo = np.linalg.eigvalsh(rho).min()
    if lo < -1e-6:
        raise IntegrationAccuracyError(f"density eigenvalue {lo:.2e} at t={t:.4f}")


def _slice_generators(seg: Segment, mats: np.ndarray, omega: float, m: int, order: int):
    dt = seg.duration / m
    if order == 2:
        t = (np.arange(m) + 0.5) * dt
        c = seg.coefficients(t, omega)
        for k in range(m):
            yield dt * np.tensordot(c[k], mats, axes=1)
        return
    # fourth-order Magnus with two Gauss-Legendre nodes
    g = math.sqrt(3) / 6
    t1 = (np.arange(m) + 0.5 - g) * dt
    t2 = (np.arange(m) + 0.5 + g) * dt
    c1, c2 = seg.coefficients(t1, omega), seg.coefficients(t2, omega)
    for k in range(m):
        h1 = np.tensordot(c1[k], mats, axes=1)
        h2 = np.tensordot(c2[k], mats, axes=1)
        yield 0.5 * dt * (h1 + h2) - 1j * (math.sqrt(3) * dt**2 / 12) * (h2 @ h1 - h1 @ h2)


def expm_oracle(
    state: SystemState,
    schedule: HamiltonianSchedule,
    n_slices: int,
    rates: NoiseRates | None = None,
    order: int = 2,
) -> SystemState:
    """Product of exact exponentials over ``n_slices`` slices per unit time.

    ``order=2`` freezes H at slice midpoints; ``order=4`` uses the two-node
    Magnus expansion. With ``rates`` the state is propagated as a density by
    exponentiating the Lindblad superoperator of each (midpoint) slice.
    """
    space = state.space
    mats = term_matrices(space)
    if rates is not None:
        return _expm_lindblad(state, schedule, n_slices, rates, mats)
    if not state.is_pure:
        rho = state.data.copy()
    else:
        psi = state.data.copy()
    for seg in schedule.segments:
        m = max(1, math.ceil(seg.duration * n_slices - 1e-9))
        for gen in _slice_generators(seg, mats, space.omega, m, order):
            U = expm(-1j * gen)
            if state.is_pure:
                psi = U @ psi
            else:
                rho = U @ rho @ U.conj().T
    return SystemState(psi if state.is_pure else rho, space)


def lindblad_superoperator(h: np.ndarray, jumps) -> np.ndarray:
    """Matrix of the Lindblad generator acting on row-major ``vec(rho)``."""
    d = h.shape[0]
    I = np.eye(d)
    L = -1j * (np.kron(h, I) - np.kron(I, h.T))
    for g, A in jumps:
        AdA = A.conj().T @ A
        L += g * (np.kron(A, A.conj()) - 0.5 * (np.kron(AdA, I) + np.kron(I, AdA.T)))
    return L


def _expm_lindblad(state, schedule, n_slices, rates, mats):
    space = state.space
    jumps = rates.jumps(space)
    v = state.density().reshape(-1).copy()
    for seg in schedule.segments:
        m = max(1, math.ceil(seg.duration * n_slices - 1e-9))
        dt = seg.duration / m
        c = seg.coefficients((np.arange(m) + 0.5) * dt, space.omega)
        for k in range(m):
            h = np.tensordot(c[k], mats, axes=1)
            v = expm(dt * lindblad_superoperator(h, jumps)) @ v
    return SystemState(v.reshape(space.dim, space.dim), space)


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.linalg.eigvalsh(rho - sigma)).sum())
