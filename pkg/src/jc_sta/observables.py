"""Scalar and phase-space diagnostics of spin-boson states."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .hilbert import SystemState, displacement, reduce_boson


class UndefinedObservableError(ValueError):
    pass


class WignerSupportWarning(UserWarning):
    pass


def _array(state) -> np.ndarray:
    return state.data if isinstance(state, SystemState) else np.asarray(state, dtype=complex)


def _as_density(x: np.ndarray) -> np.ndarray:
    return np.outer(x, x.conj()) if x.ndim == 1 else x


def fidelity(state, target) -> float:
    """``<t|rho|t>`` or ``|<t|psi>|^2``; ``target`` must be a pure vector."""
    s, t = _array(state), _array(target)
    if t.ndim != 1:
        raise ValueError("target must be a pure state vector")
    if s.shape[0] != t.shape[0]:
        raise ValueError(f"dimension mismatch: {s.shape[0]} vs {t.shape[0]}")
    t = t / np.linalg.norm(t)
    if s.ndim == 1:
        return float(abs(np.vdot(t, s)) ** 2)
    return float(np.real(t.conj() @ s @ t))


def purity(rho) -> float:
    r = _as_density(_array(rho))
    return float(np.real(np.sum(r * r.T)))


def boson_moments(rho_b: np.ndarray) -> tuple[float, float]:
    p = np.real(np.diag(_as_density(rho_b)))
    n = np.arange(p.size)
    return float(p @ n), float(p @ n**2)


def mandel_q(rho_b) -> float:
    """Mandel Q of a boson state (vector or density)."""
    m1, m2 = boson_moments(_array(rho_b))
    if m1 <= 1e-12:
        raise UndefinedObservableError("Mandel Q is undefined for <n> = 0")
    return (m2 - m1 * m1) / m1 - 1.0


@dataclass(frozen=True)
class WignerGrid:
    """``W(beta)`` on a uniform grid; ``values[i, j]`` sits at ``re[j] + i im[i]``."""

    re_range: float = 5.0
    im_range: float = 5.0
    resolution: int = 201
    values: np.ndarray | None = None

    @property
    def re(self) -> np.ndarray:
        return np.linspace(-self.re_range, self.re_range, self.resolution)

    @property
    def im(self) -> np.ndarray:
        return np.linspace(-self.im_range, self.im_range, self.resolution)

    @property
    def cell(self) -> float:
        return (2 * self.re_range / (self.resolution - 1)) * (2 * self.im_range / (self.resolution - 1))

    def integral(self) -> float:
        """``(1/pi) int W d^2 beta``, equal to the trace for this normalization."""
        return float(self.values.sum() * self.cell / math.pi)

    def edge_max(self) -> float:
        v = np.abs(self.values)
        return float(max(v[0].max(), v[-1].max(), v[:, 0].max(), v[:, -1].max()))

    def meta(self) -> dict:
        return {"re_range": self.re_range, "im_range": self.im_range, "resolution": self.resolution}

    def save(self, csv_path) -> tuple[Path, Path]:
        csv_path = Path(csv_path)
        np.savetxt(csv_path, self.values, delimiter=",", fmt="%.12g", newline="\n")
        side = csv_path.with_suffix(".json")
        side.write_text(json.dumps(self.meta(), indent=2, sort_keys=True) + "\n")
        return csv_path, side

    @classmethod
    def load(cls, csv_path) -> "WignerGrid":
        csv_path = Path(csv_path)
        meta = json.loads(csv_path.with_suffix(".json").read_text())
        vals = np.loadtxt(csv_path, delimiter=",", ndmin=2)
        return cls(values=vals, **meta)


def _boson_density(state) -> np.ndarray:
    if isinstance(state, SystemState):
        return reduce_boson(state)
    return _as_density(np.asarray(state, dtype=complex))


def wigner(state, grid: WignerGrid = WignerGrid(), method: str = "series") -> WignerGrid:
    """``W(beta) = 2 Tr[rho D(beta) P D(beta)+]`` with parity ``P = (-1)^n``.

    ``series`` uses the exact Fock matrix elements of ``D(2 beta)`` built by a
    column recurrence; ``displacement`` evaluates the definition with the
    truncated displacement matrix in a space padded to resolve it (slow, for
    cross-checks).
    """
    rho = _boson_density(state)
    X, Y = np.meshgrid(grid.re, grid.im)
    beta = X + 1j * Y
    if method == "series":
        w = _wigner_series(rho, 2.0 * beta.ravel()).reshape(beta.shape)
    elif method == "displacement":
        w = _wigner_displacement(rho, beta)
    else:
        raise ValueError(f"unknown method {method!r}")
    if np.abs(w.imag).max() > 1e-10:
        raise ArithmeticError(f"Wigner function has imaginary residue {np.abs(w.imag).max():.2e}")
    out = WignerGrid(grid.re_range, grid.im_range, grid.resolution, np.ascontiguousarray(w.real))
    if out.edge_max() > 1e-6:
        warnings.warn(
            f"|W| = {out.edge_max():.1e} on the grid edge; enlarge the grid", WignerSupportWarning, stacklevel=2
        )
    pop = np.real(np.diag(rho))
    if pop[-1] > 1e-6:
        warnings.warn(f"top Fock level holds {pop[-1]:.1e}", WignerSupportWarning, stacklevel=2)
    return out


def _wigner_series(rho: np.ndarray, g: np.ndarray) -> np.ndarray:
    d = rho.shape[0]
    sq = np.sqrt(np.arange(d))
    col = np.empty((d, g.size), complex)
    # <m|D(g)|0> = e^{-|g|^2/2} g^m / sqrt(m!)
    col[0] = np.exp(-0.5 * np.abs(g) ** 2)
    for m in range(1, d):
        col[m] = col[m - 1] * g / sq[m]
    w = 2.0 * (rho[0] @ col)
    gc = np.conj(g)
    for n in range(1, d):
        new = np.empty_like(col)
        new[0] = -gc * col[0] / sq[n]
        new[1:] = (sq[1:, None] * col[:-1] - gc * col[1:]) / sq[n]
        col = new
        w += 2.0 * (-1) ** n * (rho[n] @ col)
    return w


def _wigner_displacement(rho: np.ndarray, beta: np.ndarray) -> np.ndarray:
    d = rho.shape[0]
    big = d + 40 + int(4 * np.abs(beta).max() ** 2)
    r = np.zeros((big, big), complex)
    r[:d, :d] = rho
    parity = (-1.0) ** np.arange(big)
    w = np.empty(beta.shape, complex)
    for idx, b in np.ndenumerate(beta):
        D = displacement(b, big)
        w[idx] = 2.0 * np.trace(r @ (D * parity) @ D.conj().T)
    return w


def negativity(wg: WignerGrid) -> float:
    """``(1/2 pi) int (|W| - W) d^2 beta`` by the midpoint rule."""
    if wg.edge_max() > 1e-6:
        warnings.warn("Wigner grid does not cover the state's support", WignerSupportWarning, stacklevel=2)
    v = wg.values
    return float((np.abs(v) - v).sum() * wg.cell / (2 * math.pi))


def photon_added_reference(state, k: int = 1) -> np.ndarray:
    """Normalized ``a+^k |psi>`` (or ``a+^k rho a^k``) in the same truncated space."""
    x = reduce_boson(state) if isinstance(state, SystemState) else np.asarray(state, complex)
    d = x.shape[0]
    ad = np.diag(np.sqrt(np.arange(1, d)), -1)
    op = np.linalg.matrix_power(ad, k)
    y = op @ x if x.ndim == 1 else op @ x @ op.conj().T
    norm = np.linalg.norm(y) if y.ndim == 1 else np.real(np.trace(y))
    if norm < 1e-14:
        raise ValueError("photon-added state has zero norm")
    return y / norm
