"""Truncated spin-boson Hilbert space: operators, canonical states, measurement.

Basis ordering is spin-major: ``index = spin * d + n`` with ``g = 0`` and
``e = 1``, so the full space is ``C^2 (x) C^d`` in ``np.kron`` order.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

SPIN_INDEX = {"g": 0, "e": 1}
DEFAULT_LEAK_TOL = 1e-6


class TruncationWarning(UserWarning):
    """Population reached the top Fock level of the truncated space."""


class MeasurementError(ValueError):
    """Projective measurement onto a branch of (numerically) zero probability."""


@dataclass(frozen=True)
class SpaceSpec:
    fock_dim: int
    omega: float = 1.0

    def __post_init__(self):
        if int(self.fock_dim) != self.fock_dim or self.fock_dim < 2:
            raise ValueError(f"fock_dim must be an integer >= 2, got {self.fock_dim}")
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")

    @property
    def dim(self) -> int:
        return 2 * self.fock_dim

    def index(self, spin: str, n: int) -> int:
        if not 0 <= n < self.fock_dim:
            raise IndexError(f"Fock level {n} outside 0..{self.fock_dim - 1}")
        return SPIN_INDEX[spin] * self.fock_dim + n


@dataclass(frozen=True, eq=False)
class SystemState:
    """Pure vector (length 2d) or density matrix (2d x 2d) over ``space``."""

    data: np.ndarray
    space: SpaceSpec

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        dim = self.space.dim
        if data.shape not in ((dim,), (dim, dim)):
            raise ValueError(f"state shape {data.shape} incompatible with dim {dim}")
        object.__setattr__(self, "data", data)

    @property
    def kind(self) -> str:
        return "pure" if self.data.ndim == 1 else "density"

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    def density(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return self.data

    def as_density(self) -> "SystemState":
        return SystemState(self.density(), self.space)

    def trace(self) -> float:
        if self.is_pure:
            return float(np.vdot(self.data, self.data).real)
        return float(np.trace(self.data).real)

    def fock_populations(self) -> np.ndarray:
        """Boson-number distribution with the spin traced out."""
        d = self.space.fock_dim
        if self.is_pure:
            return (np.abs(self.data.reshape(2, d)) ** 2).sum(axis=0)
        diag = np.real(np.diag(self.data)).reshape(2, d)
        return diag.sum(axis=0)

    def leak(self) -> float:
        """Population in the top Fock level."""
        return float(self.fock_populations()[-1])

    def truncation_safe(self, tol: float = DEFAULT_LEAK_TOL) -> bool:
        return self.leak() <= tol

    def check(self, tol: float = 1e-10) -> None:
        """Raise ``ValueError`` if norm/trace/Hermiticity/positivity invariants fail."""
        if self.is_pure:
            if abs(self.trace() - 1) > tol:
                raise ValueError(f"pure state norm^2 = {self.trace()!r}")
            return
        rho = self.data
        herm = np.max(np.abs(rho - rho.conj().T))
        if herm > 1e-12:
            raise ValueError(f"density not Hermitian (max deviation {herm:.3e})")
        if abs(self.trace() - 1) > tol:
            raise ValueError(f"density trace = {self.trace()!r}")
        lo = np.linalg.eigvalsh(rho).min()
        if lo < -1e-8:
            raise ValueError(f"density has negative eigenvalue {lo:.3e}")

    def to_json(self) -> str:
        arr = self.data
        return json.dumps(
            {
                "dim": self.space.dim,
                "kind": self.kind,
                "re": arr.real.ravel().tolist(),
                "im": arr.imag.ravel().tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str, omega: float = 1.0) -> "SystemState":
        doc = json.loads(text)
        dim = int(doc["dim"])
        arr = np.asarray(doc["re"], dtype=float) + 1j * np.asarray(doc["im"], dtype=float)
        if doc["kind"] == "density":
            arr = arr.reshape(dim, dim)
        elif doc["kind"] != "pure":
            raise ValueError(f"unknown state kind {doc['kind']!r}")
        return cls(arr, SpaceSpec(dim // 2, omega))


@lru_cache(maxsize=32)
def build_operators(space: SpaceSpec) -> Mapping[str, np.ndarray]:
    """Return the operator table for ``space``.

    Factor operators carry a ``_b`` (boson, d x d) or ``_s`` (spin, 2 x 2)
    suffix; unsuffixed labels are embeddings on the full 2d space. The
    arrays are read-only since the table is cached and shared.
    """
    d = space.fock_dim
    a_b = np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1).astype(complex)
    ad_b = a_b.conj().T
    n_b = ad_b @ a_b
    sp_s = np.zeros((2, 2), complex)
    sp_s[1, 0] = 1.0  # |e><g|
    sm_s = sp_s.conj().T
    sz_s = np.diag([-1.0, 1.0]).astype(complex)
    sx_s = sp_s + sm_s
    sy_s = -1j * (sp_s - sm_s)
    i2, id_ = np.eye(2), np.eye(d)

    ops = {
        "a_b": a_b,
        "adag_b": ad_b,
        "n_b": n_b,
        "sp_s": sp_s,
        "sm_s": sm_s,
        "sx_s": sx_s,
        "sy_s": sy_s,
        "sz_s": sz_s,
        "a": np.kron(i2, a_b),
        "adag": np.kron(i2, ad_b),
        "n": np.kron(i2, n_b),
        "sp": np.kron(sp_s, id_),
        "sm": np.kron(sm_s, id_),
        "sx": np.kron(sx_s, id_),
        "sy": np.kron(sy_s, id_),
        "sz": np.kron(sz_s, id_),
        "proj_e": np.kron(np.diag([0.0, 1.0]), id_).astype(complex),
        "proj_g": np.kron(np.diag([1.0, 0.0]), id_).astype(complex),
    }
    ops["coupling"] = ops["a"] @ ops["sp"] + ops["adag"] @ ops["sm"]
    ops["cd_generator"] = 1j * (ops["adag"] @ ops["sm"] - ops["a"] @ ops["sp"])
    ops["N_e"] = ops["proj_e"] + ops["n"]
    ops["identity"] = np.eye(space.dim, dtype=complex)
    for m in ops.values():
        m.setflags(write=False)
    return ops


def jc_hamiltonian(space: SpaceSpec, omega_q: float, lam: float) -> np.ndarray:
    """Static Jaynes-Cummings Hamiltonian ``omega_q sz/2 + omega n + lam (a s+ + a+ s-)``."""
    ops = build_operators(space)
    return 0.5 * omega_q * ops["sz"] + space.omega * ops["n"] + lam * ops["coupling"]


def basis_state(space: SpaceSpec, spin: str, n: int) -> SystemState:
    psi = np.zeros(space.dim, complex)
    psi[space.index(spin, n)] = 1.0
    return SystemState(psi, space)


def product_state(spin: str | np.ndarray, boson: np.ndarray, space: SpaceSpec) -> SystemState:
    """``|spin> (x) boson``; ``boson`` may be a d-vector or a d x d density."""
    spin_vec = np.zeros(2, complex)
    if isinstance(spin, str):
        spin_vec[SPIN_INDEX[spin]] = 1.0
    else:
        spin_vec = np.asarray(spin, complex)
    boson = np.asarray(boson, complex)
    if boson.ndim == 1:
        return SystemState(np.kron(spin_vec, boson), space)
    return SystemState(np.kron(np.outer(spin_vec, spin_vec.conj()), boson), space)


def fock_vector(n: int, d: int) -> np.ndarray:
    v = np.zeros(d, complex)
    v[n] = 1.0
    return v


def _leak_warn(weight: float, tol: float, what: str) -> None:
    if weight > tol:
        warnings.warn(
            f"{what}: top-level population {weight:.2e} exceeds leak tolerance {tol:.1e}",
            TruncationWarning,
            stacklevel=3,
        )


def coherent_amplitudes(alpha: complex, d: int, tol: float = DEFAULT_LEAK_TOL) -> np.ndarray:
    """Fock amplitudes of ``|alpha>`` truncated to d levels and renormalized."""
    n = np.arange(d)
    if alpha == 0:
        return fock_vector(0, d)
    log_mag = -0.5 * abs(alpha) ** 2 + n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    amps = np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))
    _leak_warn(abs(amps[-1]) ** 2, tol, f"coherent state alpha={alpha}")
    return amps / np.linalg.norm(amps)


def coherent_state(
    alpha: complex, space: SpaceSpec, spin: str | None = "e", tol: float = DEFAULT_LEAK_TOL
) -> SystemState | np.ndarray:
    """``|spin, alpha>``; with ``spin=None`` the bare d-vector is returned."""
    amps = coherent_amplitudes(alpha, space.fock_dim, tol)
    if spin is None:
        return amps
    return product_state(spin, amps, space)


def thermal_populations(beta_th: float, d: int, omega: float = 1.0, tol: float = DEFAULT_LEAK_TOL) -> np.ndarray:
    if not beta_th > 0:
        raise ValueError(f"beta_th must be positive, got {beta_th}")
    if np.isinf(beta_th):
        return fock_vector(0, d).real
    # p_n proportional to exp(-beta omega n); computed in log space for large beta
    logp = -beta_th * omega * np.arange(d)
    p = np.exp(logp - logp.max())
    p /= p.sum()
    _leak_warn(p[-1], tol, f"thermal state beta_th={beta_th}")
    return p


def thermal_state(
    beta_th: float, space: SpaceSpec, spin: str | None = "e", tol: float = DEFAULT_LEAK_TOL
) -> SystemState | np.ndarray:
    """Gibbs state of the mode, ``|spin><spin| (x) rho_th``; ``spin=None`` gives the d x d density."""
    rho_b = np.diag(thermal_populations(beta_th, space.fock_dim, space.omega, tol)).astype(complex)
    if spin is None:
        return rho_b
    return product_state(spin, rho_b, space)


def mean_thermal_number(beta_th: float, omega: float = 1.0) -> float:
    return 1.0 / np.expm1(omega * beta_th)


def displacement(beta: complex, d: int) -> np.ndarray:
    """``expm(beta a+ - beta* a)`` on the d-level truncated mode.

    Unitarity degrades on the last few levels; pad ``d`` when the displaced
    state approaches the truncation edge.
    """
    a = np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1).astype(complex)
    return expm(beta * a.conj().T - np.conj(beta) * a)


def project_spin(state: SystemState, r: str) -> tuple[SystemState, float]:
    """Measure ``|r><r| (x) 1`` and return the normalized post-measurement state and probability."""
    ops = build_operators(state.space)
    proj = ops["proj_" + r]
    if state.is_pure:
        out = proj @ state.data
        prob = float(np.vdot(out, out).real)
        if prob < 1e-12:
            raise MeasurementError(f"outcome {r!r} has probability {prob:.2e}")
        return SystemState(out / np.sqrt(prob), state.space), prob
    out = proj @ state.data @ proj
    prob = float(np.trace(out).real)
    if prob < 1e-12:
        raise MeasurementError(f"outcome {r!r} has probability {prob:.2e}")
    return SystemState(out / prob, state.space), prob


def reduce_spin(state: SystemState) -> np.ndarray:
    """Partial trace over the boson: 2 x 2 spin density."""
    d = state.space.fock_dim
    if state.is_pure:
        m = state.data.reshape(2, d)
        return m @ m.conj().T
    return np.einsum("injn->ij", state.data.reshape(2, d, 2, d))


def reduce_boson(state: SystemState) -> np.ndarray:
    """Partial trace over the spin: d x d mode density."""
    d = state.space.fock_dim
    if state.is_pure:
        m = state.data.reshape(2, d)
        return m.T @ m.conj()
    return np.einsum("imin->mn", state.data.reshape(2, d, 2, d))
