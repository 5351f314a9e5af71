"""Drive schedules, counterdiabatic corrections and pulse approximations.

The base schedules are a quintic detuning ramp and a ``cos^4`` coupling bump,
both with vanishing first and second derivatives at the segment ends. All
derivatives are analytic; finite differences appear only in the tests.

Local counterdiabatic (LCD) fields are the exact rotation of
``H_JC + H_CD`` back to Jaynes-Cummings form inside the addressed
n-subspace. Inside that subspace the CD field is ``theta sqrt(n+1)`` along
``sigma_y``, so the dressing angle is ``atan2(theta, lambda)`` and

    omega_q_lcd = omega_q - d/dt atan2(theta, lambda)
    lambda_lcd  = sqrt(lambda^2 + theta^2)
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .hilbert import SpaceSpec, build_operators


class ScheduleRangeError(ValueError):
    pass


class SingularScheduleError(ValueError):
    pass


class DegeneracyError(ValueError):
    pass


class FourierFitError(ValueError):
    pass


class PulseWindowWarning(UserWarning):
    pass


@dataclass(frozen=True)
class BaseProtocol:
    omega_q_start: float
    omega_q_end: float
    lambda_0: float
    lambda_m: float
    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")

    @property
    def delta_omega_q(self) -> float:
        return self.omega_q_end - self.omega_q_start

    def replace(self, **kw) -> "BaseProtocol":
        return BaseProtocol(**{**self.__dict__, **kw})


def _check_range(proto: BaseProtocol, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    slack = 1e-12 * proto.tau
    if np.any(t < -slack) or np.any(t > proto.tau + slack):
        raise ScheduleRangeError(f"t outside [0, {proto.tau}]")
    return np.clip(t, 0.0, proto.tau)


def base_eval(proto: BaseProtocol, t):
    """Return ``(wq, wq_dot, wq_ddot, lam, lam_dot, lam_ddot)`` at ``t`` (scalar or array)."""
    t = _check_range(proto, t)
    tau = proto.tau
    s = t / tau
    dw = proto.delta_omega_q
    wq = proto.omega_q_start + dw * s**3 * (10 - 15 * s + 6 * s**2)
    wq_d = dw * 30 * s**2 * (1 - s) ** 2 / tau
    wq_dd = dw * 60 * s * (1 - 3 * s + 2 * s**2) / tau**2

    # cos^4[pi(1+2s)/2] = sin^4(pi s)
    amp = proto.lambda_m - proto.lambda_0
    w = math.pi / tau
    sn, cs = np.sin(math.pi * s), np.cos(math.pi * s)
    lam = amp * sn**4 + proto.lambda_0
    lam_d = amp * 4 * w * sn**3 * cs
    lam_dd = amp * 4 * w**2 * sn**2 * (3 * cs**2 - sn**2)
    return wq, wq_d, wq_dd, lam, lam_d, lam_dd


def sta_theta(proto: BaseProtocol, n: int, t, omega: float = 1.0):
    """CD amplitude ``theta`` and its time derivative for subspace ``n``."""
    wq, wq_d, wq_dd, lam, lam_d, lam_dd = base_eval(proto, t)
    delta = wq - omega
    rabi2 = 4 * (n + 1) * lam**2
    den = rabi2 + delta**2
    if np.any(den < 1e-12):
        raise SingularScheduleError("delta^2 + Omega_n^2 vanishes: resonance at zero coupling")
    num = delta * lam_d - lam * wq_d
    num_d = delta * lam_dd - lam * wq_dd
    den_d = 8 * (n + 1) * lam * lam_d + 2 * delta * wq_d
    theta = num / den
    theta_d = (num_d * den - num * den_d) / den**2
    return theta, theta_d


def _lcd_raw(proto, n, t, omega):
    _, _, _, lam, lam_d, _ = base_eval(proto, t)
    theta, theta_d = sta_theta(proto, n, t, omega)
    return lam, lam_d, theta, theta_d


def lcd_fields(proto: BaseProtocol, n: int, t, omega: float = 1.0):
    """Modified qubit frequency and coupling ``(omega_q_lcd, lambda_lcd)`` for subspace ``n``.

    With ``lambda_0 = 0`` the dressing rate is 0/0 exactly at ``t = 0, tau``;
    the one-sided limit is returned there (it is ``-delta/4`` for the
    ``cos^4`` ramp, so ``omega_q_lcd`` does not coincide with ``omega_q`` at
    the endpoints in that case).
    """
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(_check_range(proto, t)).astype(float)
    wq = base_eval(proto, t)[0]
    lam, lam_d, theta, theta_d = _lcd_raw(proto, n, t, omega)
    den = lam**2 + theta**2
    rate = np.zeros_like(t)
    ok = den > 1e-200
    rate[ok] = (lam[ok] * theta_d[ok] - theta[ok] * lam_d[ok]) / den[ok]
    for i in np.flatnonzero(~ok):
        rate[i] = _dressing_rate_limit(proto, n, t[i], omega, theta_d[i], lam_d[i])
    out_wq = wq - rate
    out_lam = np.sqrt(den)
    if scalar:
        return float(out_wq[0]), float(out_lam[0])
    return out_wq, out_lam


def _dressing_rate_limit(proto, n, t, omega, theta_d, lam_d):
    tau = proto.tau
    eps = 1e-9 * tau
    at_end = t <= eps or t >= tau - eps
    if at_end and proto.lambda_0 == 0 and proto.lambda_m != 0:
        t_in = eps if t <= eps else tau - eps
        lam, lam_d2, theta, theta_d2 = (float(x) for x in _lcd_raw(proto, n, t_in, omega))
        return (lam * theta_d2 - theta * lam_d2) / (lam**2 + theta**2)
    if theta_d == 0 and lam_d == 0:
        # coupling and CD field both identically off: nothing to dress
        return 0.0
    raise SingularScheduleError(f"lambda = theta = 0 at interior t={t}")


def cd_term(proto: BaseProtocol, n: int, t: float, space: SpaceSpec) -> np.ndarray:
    """``H_CD(t) = i theta(t) (a+ s- - a s+)`` on the full space."""
    theta, _ = sta_theta(proto, n, t, space.omega)
    return float(theta) * build_operators(space)["cd_generator"]


def _blocks(*hs: np.ndarray, tol: float = 1e-14) -> list[np.ndarray]:
    pattern = sum(np.abs(h) for h in hs) > tol
    ncomp, labels = connected_components(pattern.astype(int), directed=False)
    return [np.flatnonzero(labels == k) for k in range(ncomp)]


def berry_cd_numeric(
    h_of_t: Callable[[float], np.ndarray],
    t: float,
    dt: float = 1e-4,
    blocks: Sequence[np.ndarray] | None = None,
    gap_tol: float = 1e-10,
) -> np.ndarray:
    """Counterdiabatic operator from finite-difference eigenvector derivatives.

    ``i sum_k (|d_t k><k| - <k|d_t k> |k><k|)`` evaluated block by block; the
    blocks default to the connected components of the sparsity pattern of
    ``H`` at ``t - dt, t, t + dt`` (the excitation-number sectors for JC).
    Eigenvectors at the neighbouring times are gauge-aligned to positive
    overlap with those at ``t``.
    """
    h_m, h_0, h_p = h_of_t(t - dt), h_of_t(t), h_of_t(t + dt)
    dim = h_0.shape[0]
    if blocks is None:
        blocks = _blocks(h_m, h_0, h_p)
    out = np.zeros((dim, dim), complex)
    for idx in blocks:
        if len(idx) == 1:
            continue
        sub = np.ix_(idx, idx)
        e0, v0 = np.linalg.eigh(h_0[sub])
        if np.min(np.diff(e0)) < gap_tol:
            raise DegeneracyError(f"eigenvalue gap below {gap_tol} at t={t}")
        vecs = []
        for h in (h_m, h_p):
            e, v = np.linalg.eigh(h[sub])
            if np.min(np.diff(e)) < gap_tol:
                raise DegeneracyError(f"eigenvalue gap below {gap_tol} near t={t}")
            ov = np.einsum("ik,ik->k", v0.conj(), v)
            v = v * (np.abs(ov) / ov)  # positive-overlap gauge
            vecs.append(v)
        dv = (vecs[1] - vecs[0]) / (2 * dt)
        berry = np.einsum("ik,ik->k", v0.conj(), dv)
        block = 1j * (dv @ v0.conj().T - (v0 * berry) @ v0.conj().T)
        out[sub] = block
    return out


def two_level_lcd(delta_of_t: Callable, lam_of_t: Callable, t: float):
    """LCD fields for ``H0 = Delta/2 sx + lambda/2 sz``.

    ``delta_of_t`` and ``lam_of_t`` return ``(value, first, second)``
    derivatives at ``t``. Returns ``(x_field, z_field)`` such that
    ``H_LCD = x_field/2 sx + z_field/2 sz``. The dressing rotates about z by
    ``f = atan2(theta_a, Delta)/2``.
    """
    D, Dd, Ddd = delta_of_t(t)
    L, Ld, Ldd = lam_of_t(t)
    den = L**2 + D**2
    if den == 0:
        raise SingularScheduleError("Delta = lambda = 0")
    num = L * Dd - D * Ld
    num_d = L * Ddd - D * Ldd
    den_d = 2 * (L * Ld + D * Dd)
    theta_a = num / den
    theta_a_d = (num_d * den - num * den_d) / den**2
    rad = theta_a**2 + D**2
    if rad == 0:
        raise SingularScheduleError("Delta = theta_a = 0")
    x_field = math.copysign(math.sqrt(rad), D) if D != 0 else abs(theta_a)
    f_dot = 0.5 * (D * theta_a_d - theta_a * Dd) / rad
    return x_field, L - 2 * f_dot


@dataclass(frozen=True)
class StaPulse:
    """Base schedule addressed at subspace ``n_ref``."""

    base: BaseProtocol
    n_ref: float
    omega: float = 1.0

    @property
    def tau(self) -> float:
        return self.base.tau

    def theta(self, t):
        return sta_theta(self.base, self.n_ref, t, self.omega)[0]

    def fields(self, t):
        return lcd_fields(self.base, self.n_ref, t, self.omega)


@dataclass(frozen=True)
class GaussianPulse:
    """Gaussian ``sigma_x`` rotation by ``angle`` centred at ``t_pi`` over ``[0, 2 t_pi]``."""

    angle: float = math.pi
    t_pi: float = 5.0
    sigma_pi: float = 1.0

    def __post_init__(self):
        if not (self.t_pi > 0 and self.sigma_pi > 0):
            raise ValueError("t_pi and sigma_pi must be positive")

    @property
    def duration(self) -> float:
        return 2 * self.t_pi

    @property
    def peak(self) -> float:
        # 2 * integral of the amplitude equals the rotation angle
        return self.angle / (2 * self.sigma_pi * math.sqrt(2 * math.pi))

    @property
    def window_ok(self) -> bool:
        return self.t_pi / self.sigma_pi >= 4

    def truncated_angle(self) -> float:
        """Rotation angle actually delivered inside the finite window."""
        return self.angle * math.erf(self.t_pi / (self.sigma_pi * math.sqrt(2)))


def gaussian_field(pulse: GaussianPulse, t):
    """Amplitude multiplying ``sigma_x`` at time ``t`` in ``[0, 2 t_pi]``."""
    if not pulse.window_ok:
        warnings.warn(
            f"pulse window t_pi/sigma_pi = {pulse.t_pi / pulse.sigma_pi:.2f} < 4",
            PulseWindowWarning,
            stacklevel=2,
        )
    t = np.asarray(t, dtype=float)
    if np.any(t < -1e-12) or np.any(t > pulse.duration + 1e-12):
        raise ScheduleRangeError(f"t outside pulse window [0, {pulse.duration}]")
    val = pulse.peak * np.exp(-((t - pulse.t_pi) ** 2) / (2 * pulse.sigma_pi**2))
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class FourierPulse:
    n_modes: int
    omega_f: float
    cos_coeffs: np.ndarray
    sin_coeffs: np.ndarray
    source: str = ""
    residual: float = 0.0

    def __call__(self, t):
        return fourier_eval(self, t)


def _design(t: np.ndarray, n_modes: int, omega_f: float) -> np.ndarray:
    k = np.arange(n_modes + 1)
    phase = np.outer(t, k * omega_f)
    # the k = 0 sine column is identically zero and is dropped
    return np.hstack([np.cos(phase), np.sin(phase[:, 1:])])


def fourier_fit(
    t: np.ndarray, values: np.ndarray, n_modes: int, omega_f: float, source: str = ""
) -> FourierPulse:
    """Ordinary least-squares fit of a truncated Fourier series; ``residual`` is the RMS error."""
    t = np.asarray(t, float)
    values = np.asarray(values, float)
    if n_modes < 0:
        raise ValueError("n_modes must be non-negative")
    if t.size < 4 * (n_modes + 1):
        raise FourierFitError(f"need >= {4 * (n_modes + 1)} samples, got {t.size}")
    X = _design(t, n_modes, omega_f)
    cond = np.linalg.cond(X) ** 2
    if cond > 1e12:
        raise FourierFitError(f"normal equations ill-conditioned (cond = {cond:.2e})")
    coef, *_ = np.linalg.lstsq(X, values, rcond=None)
    resid = float(np.sqrt(np.mean((X @ coef - values) ** 2)))
    c = coef[: n_modes + 1]
    s = np.concatenate([[0.0], coef[n_modes + 1 :]])
    return FourierPulse(n_modes, omega_f, c, s, source, resid)


def fourier_eval(fp: FourierPulse, t):
    t = np.asarray(t, float)
    k = np.arange(fp.n_modes + 1)
    phase = np.multiply.outer(t, k * fp.omega_f)
    val = np.cos(phase) @ fp.cos_coeffs + np.sin(phase) @ fp.sin_coeffs
    return float(val) if val.ndim == 0 else val


def natural_omega_f(x: np.ndarray, tau: float, tol: float = 1e-9) -> float:
    """``2 pi/tau`` for samples with equal end values (periodic), else the half-range ``pi/tau``."""
    scale = max(1.0, float(np.abs(x).max()))
    return 2 * math.pi / tau if abs(x[-1] - x[0]) <= tol * scale else math.pi / tau


def fit_lcd_pulses(
    sta: StaPulse, n_modes: int, omega_f: float | None = None, samples: int = 512
) -> tuple[FourierPulse, FourierPulse]:
    """Fourier approximants of ``(omega_q_lcd, lambda_lcd)``.

    ``omega_f=None`` picks :func:`natural_omega_f` separately for each pulse.
    """
    t = np.linspace(0.0, sta.tau, samples)
    wq, lam = sta.fields(t)
    return (
        fourier_fit(t, wq, n_modes, omega_f or natural_omega_f(wq, sta.tau), "omega_q_lcd"),
        fourier_fit(t, lam, n_modes, omega_f or natural_omega_f(lam, sta.tau), "lambda_lcd"),
    )


PULSE_CSV_COLUMNS = ("t", "omega_q", "lambda", "theta", "omega_q_lcd", "lambda_lcd")


def pulse_table(sta: StaPulse, samples: int = 1001) -> np.ndarray:
    t = np.linspace(0.0, sta.tau, samples)
    wq, _, _, lam, _, _ = base_eval(sta.base, t)
    theta = sta.theta(t)
    wq_l, lam_l = sta.fields(t)
    return np.column_stack([t, wq, lam, theta, wq_l, lam_l])


def write_pulse_csv(sta: StaPulse, path, samples: int = 1001) -> None:
    table = pulse_table(sta, samples)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PULSE_CSV_COLUMNS)
        for row in table:
            w.writerow([f"{x:.12g}" for x in row])
