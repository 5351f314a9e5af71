"""State-engineering sequences: Fock ladder, cat preparation, photon-shifted states."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Literal

import numpy as np
from scipy.optimize import minimize_scalar

from .dynamics import (
    CDSegment,
    EvolutionConfig,
    FourierLCDSegment,
    GaussianSegment,
    HamiltonianSchedule,
    JCSegment,
    LCDSegment,
    NoiseRates,
    Segment,
    Series,
    StaticSegment,
    evolve_lindblad,
    evolve_pure,
)
from .hilbert import (
    DEFAULT_LEAK_TOL as LEAK_TOL,
    SpaceSpec,
    TruncationWarning,
    SystemState,
    basis_state,
    coherent_amplitudes,
    product_state,
    project_spin,
    reduce_boson,
    reduce_spin,
    thermal_populations,
)
from .observables import fidelity, purity
from .pulses import BaseProtocol, GaussianPulse, StaPulse, fit_lcd_pulses, lcd_fields

Drive = Literal["lcd", "cd", "bare", "ti", "fourier"]
DRIVES = ("lcd", "cd", "bare", "ti", "fourier")


class PlanError(ValueError):
    pass


class AmplitudeUnderflowError(ValueError):
    pass


@dataclass(frozen=True)
class InitialState:
    """``|spin> (x) boson`` with boson ``fock`` ``|n>``, ``coherent`` ``|alpha>`` or ``thermal``."""

    kind: Literal["fock", "coherent", "thermal"] = "fock"
    spin: str = "e"
    n: int = 0
    alpha: complex = 0.0
    beta_th: float | None = None

    def build(self, space: SpaceSpec) -> SystemState:
        if self.kind == "fock":
            return basis_state(space, self.spin, self.n)
        if self.kind == "coherent":
            return product_state(self.spin, coherent_amplitudes(self.alpha, space.fock_dim), space)
        if self.kind == "thermal":
            if self.beta_th is None:
                raise PlanError("thermal initial state needs beta_th")
            p = thermal_populations(self.beta_th, space.fock_dim, space.omega)
            return product_state(self.spin, np.diag(p).astype(complex), space)
        raise PlanError(f"unknown initial state kind {self.kind!r}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["alpha"] = [float(np.real(self.alpha)), float(np.imag(self.alpha))]
        return out


@dataclass(frozen=True)
class Sta:
    """STA segment driven with LCD fields for ``n_ref``; ``subspaces`` lists the rungs it must transfer."""

    base: BaseProtocol
    n_ref: float
    subspaces: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "subspaces", tuple(int(k) for k in self.subspaces))

    @property
    def duration(self) -> float:
        return self.base.tau


@dataclass(frozen=True)
class Pulse:
    pulse: GaussianPulse

    @property
    def duration(self) -> float:
        return self.pulse.duration


@dataclass(frozen=True)
class Measure:
    r: str

    duration = 0.0


Step = Sta | Pulse | Measure


@dataclass(frozen=True)
class ProtocolPlan:
    name: str
    space: SpaceSpec
    initial: InitialState
    steps: tuple[Step, ...]
    target: tuple = ()  # ("fock", N) | ("cat", n_low, n_high) | ("shift", reps)

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.steps))

    @property
    def cycle_time(self) -> float | None:
        """``t_c = tau + 2 t_pi`` of the first STA + pulse pair."""
        sta = next((s for s in self.steps if isinstance(s, Sta)), None)
        pul = next((s for s in self.steps if isinstance(s, Pulse)), None)
        if sta is None or pul is None:
            return None
        return sta.duration + pul.duration

    def to_dict(self) -> dict:
        steps = []
        for s in self.steps:
            if isinstance(s, Sta):
                steps.append(
                    {"type": "sta", "n_ref": s.n_ref, "subspaces": list(s.subspaces), "base": asdict(s.base)}
                )
            elif isinstance(s, Pulse):
                steps.append({"type": "pulse", **asdict(s.pulse)})
            else:
                steps.append({"type": "measure", "r": s.r})
        return {
            "name": self.name,
            "space": asdict(self.space),
            "initial": self.initial.to_dict(),
            "target": list(self.target),
            "steps": steps,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "ProtocolPlan":
        steps = []
        for s in doc["steps"]:
            s = dict(s)
            kind = s.pop("type")
            if kind == "sta":
                steps.append(Sta(BaseProtocol(**s["base"]), s["n_ref"], tuple(s.get("subspaces", ()))))
            elif kind == "pulse":
                steps.append(Pulse(GaussianPulse(**s)))
            elif kind == "measure":
                steps.append(Measure(s["r"]))
            else:
                raise PlanError(f"unknown step type {kind!r}")
        ini = dict(doc["initial"])
        ini["alpha"] = complex(*ini["alpha"])
        return cls(doc["name"], SpaceSpec(**doc["space"]), InitialState(**ini), tuple(steps), tuple(doc["target"]))


@dataclass
class ProtocolResult:
    plan: ProtocolPlan
    final: SystemState
    probabilities: list[dict] = field(default_factory=list)
    series: Series = field(default_factory=Series)
    phase: float | None = None
    fidelity: float | None = None

    @property
    def duration(self) -> float:
        return self.plan.duration

    @property
    def boson(self) -> np.ndarray:
        return reduce_boson(self.final)

    def summary(self) -> dict:
        out = {"name": self.plan.name, "duration": self.duration, "probabilities": self.probabilities}
        if self.fidelity is not None:
            out["fidelity"] = self.fidelity
        if self.phase is not None:
            out["phase"] = self.phase
        out["leak"] = self.final.leak()
        return out


# -- plan builders ---------------------------------------------------------


def _check_dim(space: SpaceSpec, n_max: int) -> None:
    if space.fock_dim <= n_max + 2:
        raise PlanError(f"fock_dim {space.fock_dim} too small for Fock level {n_max} (need > {n_max + 2})")


def plan_fock(
    N: int,
    base: BaseProtocol,
    pulse: GaussianPulse = GaussianPulse(),
    space: SpaceSpec | None = None,
    initial: InitialState = InitialState(),
) -> ProtocolPlan:
    """``|e,0> -> |e,N>`` by ``N`` rounds of [STA on subspace k, pi-pulse]."""
    if N < 1:
        raise PlanError("N must be >= 1")
    space = space or SpaceSpec(N + 6)
    _check_dim(space, N)
    pi = GaussianPulse(math.pi, pulse.t_pi, pulse.sigma_pi)
    steps = []
    for k in range(N):
        steps += [Sta(base, k, (k,)), Pulse(pi)]
    return ProtocolPlan(f"fock{N}", space, initial, tuple(steps), ("fock", N))


def plan_transfer(n: int, base: BaseProtocol, space: SpaceSpec | None = None) -> ProtocolPlan:
    """Single rung ``|e,n> -> |g,n+1>`` by one STA."""
    if n < 0:
        raise PlanError("n must be >= 0")
    space = space or SpaceSpec(n + 4)
    _check_dim(space, n + 1)
    return ProtocolPlan(f"transfer{n}", space, InitialState("fock", "e", n), (Sta(base, n, (n,)),), ("transfer", n))


def _block_propagator_error(base: BaseProtocol, n_ref: float, m: int, omega: float, per_unit: int = 40) -> float:
    """``1 - |<g,m+1|U|e,m>|^2`` for the 2x2 block ``m`` driven by LCD fields built for ``n_ref``.

    Fourth-order Magnus with closed-form SU(2) exponentials.
    """
    M = max(8, math.ceil(base.tau * per_unit))
    h = base.tau / M
    g = math.sqrt(3) / 6
    mid = (np.arange(M) + 0.5) * h

    def bvec(t):
        wq, lam = lcd_fields(base, n_ref, t, omega)
        return np.stack([lam * math.sqrt(m + 1), np.zeros_like(t), 0.5 * (wq - omega)], axis=1)

    b1, b2 = bvec(mid - g * h), bvec(mid + g * h)
    om = 0.5 * h * (b1 + b2) + (math.sqrt(3) * h * h / 6) * np.cross(b2, b1)
    ang = np.linalg.norm(om, axis=1)
    nhat = om / np.where(ang > 0, ang, 1.0)[:, None]
    c, s = np.cos(ang), np.sin(ang)
    U = np.empty((M, 2, 2), complex)
    U[:, 0, 0] = c - 1j * s * nhat[:, 2]
    U[:, 1, 1] = c + 1j * s * nhat[:, 2]
    U[:, 0, 1] = -1j * s * (nhat[:, 0] - 1j * nhat[:, 1])
    U[:, 1, 0] = -1j * s * (nhat[:, 0] + 1j * nhat[:, 1])
    while U.shape[0] > 1:
        if U.shape[0] % 2:
            U = np.concatenate([U, np.eye(2)[None]], axis=0)
        U = U[1::2] @ U[0::2]
    return float(1.0 - abs(U[0, 1, 0]) ** 2)


@lru_cache(maxsize=256)
def compromise_n_ref(base: BaseProtocol, lower: int, upper: int, omega: float = 1.0) -> float:
    """Reference index minimizing the summed transfer error of subspaces ``lower`` and ``upper``.

    Coarse scan over ``[0, upper]`` in steps of 0.1, then bounded refinement.
    """

    def cost(n):
        return _block_propagator_error(base, n, lower, omega) + _block_propagator_error(base, n, upper, omega)

    grid = np.round(np.arange(0.0, upper + 1e-9, 0.1), 10)
    vals = [cost(n) for n in grid]
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    if hi - lo < 1e-12:
        return float(grid[k])
    res = minimize_scalar(cost, bounds=(lo, hi), method="bounded", options={"xatol": 1e-4})
    return float(res.x) if res.fun <= vals[k] else float(grid[k])


def plan_cat(
    n_low: int,
    n_high: int,
    base: BaseProtocol,
    pulse: GaussianPulse = GaussianPulse(),
    measure_r: str = "e",
    space: SpaceSpec | None = None,
    n_ref_rule: Literal["compromise", "lower", "upper"] = "compromise",
) -> ProtocolPlan:
    """``(|n_low> + e^{i phi}|n_high>)/sqrt 2`` from ``|e,N>``, ``N = (n_low + n_high)/2``.

    Sequence: pi/2, then ``(n_high - n_low)/2`` STAs separated by pi-pulses,
    each STA ``k`` addressing subspaces ``N-1-k`` and ``N+k``, then pi/2 and a
    spin measurement.
    """
    gap = n_high - n_low
    if gap < 2 or gap % 2 or n_low < 0:
        raise PlanError("n_high - n_low must be even and >= 2")
    if measure_r not in ("e", "g"):
        raise PlanError("measure_r must be 'e' or 'g'")
    N = (n_low + n_high) // 2
    space = space or SpaceSpec(n_high + 6)
    _check_dim(space, n_high)
    half = GaussianPulse(math.pi / 2, pulse.t_pi, pulse.sigma_pi)
    pi = GaussianPulse(math.pi, pulse.t_pi, pulse.sigma_pi)
    steps: list[Step] = [Pulse(half)]
    for k in range(gap // 2):
        lo, hi = N - 1 - k, N + k
        if n_ref_rule == "compromise":
            n_ref = compromise_n_ref(base, lo, hi, space.omega)
        elif n_ref_rule == "lower":
            n_ref = float(lo)
        elif n_ref_rule == "upper":
            n_ref = float(hi)
        else:
            raise PlanError(f"unknown n_ref_rule {n_ref_rule!r}")
        if k:
            steps.append(Pulse(pi))
        steps.append(Sta(base, n_ref, (lo, hi)))
    steps += [Pulse(half), Measure(measure_r)]
    return ProtocolPlan(
        f"cat{n_low}_{n_high}", space, InitialState("fock", "e", N), tuple(steps), ("cat", n_low, n_high)
    )


def plan_photon_shift(
    repetitions: int,
    base: BaseProtocol,
    pulse: GaussianPulse = GaussianPulse(),
    initial: InitialState = InitialState("coherent", alpha=0.75),
    space: SpaceSpec | None = None,
) -> ProtocolPlan:
    """``repetitions`` STAs on subspaces 0, 1, ... separated by pi-pulses."""
    if repetitions < 1:
        raise PlanError("repetitions must be >= 1")
    space = space or SpaceSpec(40)
    pi = GaussianPulse(math.pi, pulse.t_pi, pulse.sigma_pi)
    steps: list[Step] = []
    for k in range(repetitions):
        if k:
            steps.append(Pulse(pi))
        steps.append(Sta(base, k, (k,)))
    plan = ProtocolPlan(f"shift{repetitions}", space, initial, tuple(steps), ("shift", repetitions))
    if not initial.build(space).truncation_safe():
        raise PlanError("initial state is not resolved by the truncated space")
    return plan


# -- execution -------------------------------------------------------------


@dataclass(frozen=True)
class RunOptions:
    drive: Drive = "lcd"
    fourier_modes: int = 8
    omega_f: float | None = None
    rates: NoiseRates = NoiseRates()
    noisy_pulses: bool = False
    evolution: EvolutionConfig = EvolutionConfig()

    def __post_init__(self):
        if self.drive not in DRIVES:
            raise PlanError(f"drive must be one of {DRIVES}")


def sta_segment(step: Sta, omega: float, opts: RunOptions) -> Segment:
    sta = StaPulse(step.base, step.n_ref, omega)
    if opts.drive == "lcd":
        return LCDSegment(sta)
    if opts.drive == "cd":
        return CDSegment(sta)
    if opts.drive == "bare":
        return JCSegment(step.base)
    if opts.drive == "fourier":
        wq_fit, lam_fit = _fourier_pair(step.base, step.n_ref, omega, opts.fourier_modes, opts.omega_f)
        return FourierLCDSegment(wq_fit, lam_fit, step.base.tau)
    # resonant static swap timed for the highest addressed rung
    lam = float(np.max(sta.fields(np.linspace(0.0, sta.tau, 2001))[1]))
    n = max(step.subspaces) if step.subspaces else step.n_ref
    return StaticSegment(math.pi / (2 * lam * math.sqrt(n + 1)), omega, lam)


@lru_cache(maxsize=256)
def _fourier_pair(base, n_ref, omega, n_modes, omega_f):
    return fit_lcd_pulses(StaPulse(base, n_ref, omega), n_modes, omega_f)


def _observer(space: SpaceSpec):
    d = space.fock_dim
    ns = np.arange(d)

    def obs(st: SystemState) -> dict:
        if st.is_pure:
            m = st.data.reshape(2, d)
            pops = (np.abs(m) ** 2).sum(axis=0)
            rho_s = m @ m.conj().T
        else:
            pops = np.real(np.diag(st.data)).reshape(2, d).sum(axis=0)
            rho_s = reduce_spin(st)
        nbar = float(pops @ ns)
        q = float((pops @ ns**2 - nbar**2) / nbar - 1.0) if nbar > 1e-12 else math.nan
        return {"Q": q, "p": purity(rho_s), "nbar": nbar}

    return obs


def run_plan(plan: ProtocolPlan, opts: RunOptions = RunOptions(), record: bool = True) -> ProtocolResult:
    """Execute ``plan``; densities are used when the initial state is mixed or noise is on."""
    space = plan.space
    state = plan.initial.build(space)
    noisy = opts.rates.any or not state.is_pure
    if noisy and state.is_pure:
        state = state.as_density()
    observer = _observer(space) if record else None
    series = Series()
    probs: list[dict] = []
    t = 0.0
    for step in plan.steps:
        if isinstance(step, Measure):
            other = "e" if step.r == "g" else "g"
            p_other = _spin_population(state, other)
            state, p = project_spin(state, step.r)
            probs.append({"r": step.r, "p": p, "p_other": p_other})
            continue
        if isinstance(step, Sta):
            seg = sta_segment(step, space.omega, opts)
        else:
            seg = GaussianSegment(step.pulse)
        sched = HamiltonianSchedule([seg])
        if noisy:
            rates = opts.rates if isinstance(step, Sta) or opts.noisy_pulses else NoiseRates()
            state, ser = evolve_lindblad(state, sched, rates, opts.evolution, observer, t0=t)
        else:
            state, ser = evolve_pure(state, sched, opts.evolution, observer, t0=t)
        if record:
            if series.t:
                ser.t, ser.columns = ser.t[1:], {k: v[1:] for k, v in ser.columns.items()}
            series.extend(ser)
        t += seg.duration
        if state.leak() > LEAK_TOL:
            warnings.warn(
                f"top Fock level holds {state.leak():.1e} after t={t:.3f}; raise fock_dim",
                TruncationWarning,
                stacklevel=2,
            )
    result = ProtocolResult(plan, state, probs, series)
    _score(result)
    return result


def _spin_population(state: SystemState, r: str) -> float:
    i = 1 if r == "e" else 0
    return float(np.real(reduce_spin(state)[i, i]))


def cat_vector(n_low: int, n_high: int, phi: float, d: int) -> np.ndarray:
    v = np.zeros(d, complex)
    v[n_low] = 1 / math.sqrt(2)
    v[n_high] = np.exp(1j * phi) / math.sqrt(2)
    return v


def extract_phase(boson, n_low: int, n_high: int) -> float:
    """``arg <n_high|psi> - arg <n_low|psi>`` in ``[0, 2 pi)``; densities use ``rho[n_high, n_low]``."""
    x = np.asarray(boson, complex)
    if x.ndim == 1:
        a_lo, a_hi = x[n_low], x[n_high]
        if min(abs(a_lo), abs(a_hi)) < 1e-6:
            raise AmplitudeUnderflowError("Fock amplitude below 1e-6")
        z = a_hi * np.conj(a_lo)
    else:
        if min(x[n_low, n_low].real, x[n_high, n_high].real) < 1e-12:
            raise AmplitudeUnderflowError("Fock population below 1e-12")
        z = x[n_high, n_low]
    return float(np.angle(z) % (2 * math.pi))


def _score(res: ProtocolResult) -> None:
    tgt = res.plan.target
    if not tgt:
        return
    rho_b = reduce_boson(res.final)
    d = rho_b.shape[0]
    if tgt[0] == "fock":
        res.fidelity = float(np.real(rho_b[tgt[1], tgt[1]]))
    elif tgt[0] == "transfer":
        i = res.final.space.index("g", tgt[1] + 1)
        x = res.final.data
        res.fidelity = float(abs(x[i]) ** 2 if x.ndim == 1 else np.real(x[i, i]))
    elif tgt[0] == "cat":
        lo, hi = tgt[1], tgt[2]
        try:
            res.phase = extract_phase(rho_b, lo, hi)
            res.fidelity = fidelity(rho_b, cat_vector(lo, hi, res.phase, d))
        except AmplitudeUnderflowError:
            # no coherence to speak of; the phase-optimal overlap is still defined
            res.fidelity = float(0.5 * np.real(rho_b[lo, lo] + rho_b[hi, hi]) + abs(rho_b[hi, lo]))


def fock_checkpoints(res: ProtocolResult) -> list[dict]:
    """``Q`` and ``p`` at ``n t_c`` and ``p`` at ``(n-1) t_c + tau/2`` for each rung."""
    plan = res.plan
    tc = plan.cycle_time
    tau = next(s for s in plan.steps if isinstance(s, Sta)).duration
    N = plan.target[1]
    return [
        {
            "n": n,
            "Q": res.series.at(n * tc, "Q", tol=1e-6),
            "p": res.series.at(n * tc, "p", tol=1e-6),
            "p_mid": res.series.at((n - 1) * tc + tau / 2, "p", tol=1e-6),
        }
        for n in range(1, N + 1)
    ]

