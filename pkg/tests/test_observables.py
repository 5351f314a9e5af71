import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from jc_sta.hilbert import SpaceSpec, SystemState, coherent_amplitudes, fock_vector, product_state, reduce_boson, thermal_populations
from jc_sta.observables import (
    UndefinedObservableError,
    WignerGrid,
    WignerSupportWarning,
    fidelity,
    mandel_q,
    negativity,
    photon_added_reference,
    purity,
    wigner,
)


def test_fidelity_basics():
    a, b = fock_vector(0, 4), fock_vector(2, 4)
    assert fidelity(a, a) == pytest.approx(1)
    assert fidelity(a, b) == pytest.approx(0)
    mixed = np.eye(2) / 2
    assert fidelity(mixed, np.array([0.6, 0.8j])) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        fidelity(a, fock_vector(0, 5))
    with pytest.raises(ValueError):
        fidelity(a, np.eye(4))


def test_purity():
    assert purity(fock_vector(1, 3)) == pytest.approx(1)
    assert purity(np.eye(2) / 2) == pytest.approx(0.5)
    beta = 3.0
    p = thermal_populations(beta, 60, tol=1.0)
    q = math.exp(-beta)
    assert purity(np.diag(p)) == pytest.approx((1 - q) / (1 + q), abs=1e-8)


@given(st.integers(1, 30))
def test_mandel_fock(n):
    assert abs(mandel_q(fock_vector(n, 32)) + 1) <= 1e-10


@given(st.floats(0.3, 3.0))
def test_mandel_coherent_and_thermal(r):
    assert abs(mandel_q(coherent_amplitudes(r, 60))) <= 1e-8
    beta = math.log1p(1 / r)  # mean occupation r
    p = thermal_populations(beta, 400, tol=1.0)
    assert mandel_q(np.diag(p)) == pytest.approx(r, abs=1e-6)


def test_mandel_vacuum_undefined():
    with pytest.raises(UndefinedObservableError):
        mandel_q(fock_vector(0, 3))


def test_mandel_accepts_system_state():
    sp = SpaceSpec(6)
    s = product_state("e", fock_vector(5, 6), sp)
    assert mandel_q(reduce_boson(s)) == pytest.approx(-1)


def test_wigner_fock_origin_values():
    g = WignerGrid(5, 5, 3)
    assert wigner(fock_vector(0, 10), g).values[1, 1] == pytest.approx(2)
    assert wigner(fock_vector(1, 10), g).values[1, 1] == pytest.approx(-2)


def test_wigner_coherent_closed_form():
    alpha = 0.8 - 0.5j
    wg = wigner(coherent_amplitudes(alpha, 40), WignerGrid(5, 5, 61))
    X, Y = np.meshgrid(wg.re, wg.im)
    exact = 2 * np.exp(-2 * np.abs(X + 1j * Y - alpha) ** 2)
    rng = np.random.default_rng(0)
    for _ in range(5):
        i, j = rng.integers(0, 61, 2)
        assert wg.values[i, j] == pytest.approx(exact[i, j], abs=1e-4)


@given(st.integers(0, 10_000))
def test_series_matches_displacement_method(seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    rho = m @ m.conj().T
    rho /= np.trace(rho)
    g = WignerGrid(2.5, 2.5, 7)
    with pytest.warns(WignerSupportWarning):
        a = wigner(rho, g).values
        b = wigner(rho, g, method="displacement").values
    assert np.abs(a - b).max() <= 1e-10


@given(st.integers(0, 6))
def test_wigner_integrates_to_trace(n):
    wg = wigner(fock_vector(n, 12), WignerGrid(6, 6, 241))
    assert wg.integral() == pytest.approx(1, abs=1e-6)


def test_wigner_of_spin_boson_state_traces_spin():
    sp = SpaceSpec(5)
    s = SystemState(np.kron([1, 1j], fock_vector(1, 5)) / math.sqrt(2), sp)
    wg = wigner(s, WignerGrid(5, 5, 3))
    assert wg.values[1, 1] == pytest.approx(-2)


def test_negativity_gaussian_is_zero():
    assert negativity(wigner(coherent_amplitudes(1.0, 40))) == pytest.approx(0, abs=1e-6)
    p = thermal_populations(1.0, 40)
    assert negativity(wigner(np.diag(p))) == pytest.approx(0, abs=1e-6)


def _fock1_radial_negativity():
    # W(r) = 2 (4 r^2 - 1) e^{-2 r^2} is negative for r < 1/2
    f = lambda r: 2 * (1 - 4 * r * r) * math.exp(-2 * r * r) * 2 * math.pi * r
    val, _ = quad(f, 0, 0.5, epsabs=1e-14)
    return val / (2 * math.pi) * 2  # (|W| - W) = 2|W| on the negative region


def test_negativity_fock1_against_radial_oracle():
    ref = _fock1_radial_negativity()
    got = negativity(wigner(fock_vector(1, 6), WignerGrid(5, 5, 301)))
    assert got == pytest.approx(ref, abs=1e-4)


def test_negativity_resolution_doubling():
    a = negativity(wigner(fock_vector(1, 6), WignerGrid(5, 5, 201)))
    b = negativity(wigner(fock_vector(1, 6), WignerGrid(5, 5, 401)))
    assert abs(a - b) < 1e-3


def test_support_warning():
    with pytest.warns(WignerSupportWarning):
        negativity(wigner(coherent_amplitudes(3.0, 40), WignerGrid(2, 2, 21)))


def test_photon_added_reference():
    assert np.allclose(photon_added_reference(fock_vector(0, 4), 1), fock_vector(1, 4))
    rho = np.diag([0.5, 0.5, 0, 0]).astype(complex)
    out = photon_added_reference(rho, 1)
    assert np.allclose(np.diag(out).real, [0, 1 / 3, 2 / 3, 0])
    with pytest.raises(ValueError):
        photon_added_reference(fock_vector(3, 4), 1)


def test_grid_save_load_round_trip(tmp_path):
    wg = wigner(fock_vector(2, 8), WignerGrid(6, 5, 41))
    csv, side = wg.save(tmp_path / "w.csv")
    back = WignerGrid.load(csv)
    assert back.meta() == wg.meta()
    # 12 significant digits: half-unit rounding in the last place
    nz = wg.values != 0
    assert np.all(np.abs(back.values - wg.values)[nz] <= 5e-12 * np.abs(wg.values)[nz])
    assert b"\r" not in csv.read_bytes()
