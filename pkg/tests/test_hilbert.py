import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from jc_sta.hilbert import (
    MeasurementError,
    SpaceSpec,
    SystemState,
    TruncationWarning,
    basis_state,
    build_operators,
    coherent_amplitudes,
    displacement,
    jc_hamiltonian,
    mean_thermal_number,
    product_state,
    project_spin,
    reduce_boson,
    reduce_spin,
    thermal_populations,
    thermal_state,
)

dims = st.integers(2, 12)
reals = st.floats(-3, 3, allow_nan=False)


def random_state(rng, space, pure=True):
    v = rng.normal(size=space.dim) + 1j * rng.normal(size=space.dim)
    v /= np.linalg.norm(v)
    if pure:
        return SystemState(v, space)
    w = rng.normal(size=space.dim) + 1j * rng.normal(size=space.dim)
    w /= np.linalg.norm(w)
    return SystemState(0.3 * np.outer(v, v.conj()) + 0.7 * np.outer(w, w.conj()), space)


def test_space_validation():
    with pytest.raises(ValueError):
        SpaceSpec(1)
    with pytest.raises(ValueError):
        SpaceSpec(4, omega=0)
    sp = SpaceSpec(5)
    assert sp.dim == 10
    assert sp.index("g", 0) == 0 and sp.index("e", 0) == 5
    with pytest.raises(IndexError):
        sp.index("e", 5)


@given(dims)
def test_ladder_algebra(d):
    ops = build_operators(SpaceSpec(d))
    comm = ops["a_b"] @ ops["adag_b"] - ops["adag_b"] @ ops["a_b"]
    # exact identity except on the top level
    assert np.allclose(comm[:-1, :-1], np.eye(d - 1), atol=1e-12)
    assert np.isclose(comm[-1, -1], 1 - d)
    assert np.allclose(ops["n_b"], np.diag(np.arange(d)))


def test_spin_operators():
    ops = build_operators(SpaceSpec(2))
    sx, sy, sz = ops["sx_s"], ops["sy_s"], ops["sz_s"]
    assert np.allclose(sx @ sy - sy @ sx, 2j * sz)
    assert np.allclose(ops["sp_s"] @ np.array([1, 0]), [0, 1])  # s+ |g> = |e>
    assert ops["sz_s"][1, 1] == 1


@given(dims, reals, reals)
def test_excitation_number_conserved(d, wq, lam):
    sp = SpaceSpec(d)
    h = jc_hamiltonian(sp, wq, lam)
    ne = build_operators(sp)["N_e"]
    assert np.abs(h @ ne - ne @ h).max() <= 1e-12


def test_operator_table_read_only():
    ops = build_operators(SpaceSpec(3))
    with pytest.raises(ValueError):
        ops["a"][0, 0] = 1.0


@given(st.floats(0, 2.5), st.floats(0, 6.28))
def test_coherent_norm_and_mean(r, phase):
    alpha = r * np.exp(1j * phase)
    amps = coherent_amplitudes(alpha, 40)
    assert np.isclose(np.linalg.norm(amps), 1)
    mean = (np.abs(amps) ** 2) @ np.arange(40)
    assert abs(mean - r * r) < 1e-6


def test_coherent_truncation_warns():
    with pytest.warns(TruncationWarning):
        coherent_amplitudes(3.0, 10)


@given(st.floats(0.3, 5))
def test_thermal_mean(beta):
    p = thermal_populations(beta, 80, tol=1.0)
    assert np.isclose(p.sum(), 1)
    assert abs(p @ np.arange(80) - mean_thermal_number(beta)) < 1e-8


def test_thermal_rejects_bad_beta():
    with pytest.raises(ValueError):
        thermal_populations(0.0, 5)


def test_thermal_state_density():
    sp = SpaceSpec(30)
    s = thermal_state(2.0, sp)
    s.check()
    assert np.allclose(reduce_spin(s), np.diag([0, 1]))


@given(st.complex_numbers(max_magnitude=1.5))
def test_displacement_maps_vacuum_to_coherent(beta):
    D = displacement(beta, 50)
    assert np.allclose(D[:, 0], coherent_amplitudes(beta, 50, tol=1.0), atol=1e-10)


@given(st.integers(0, 10_000))
def test_partial_traces(seed):
    rng = np.random.default_rng(seed)
    sp = SpaceSpec(4)
    for pure in (True, False):
        s = random_state(rng, sp, pure)
        rs, rb = reduce_spin(s), reduce_boson(s)
        assert np.isclose(np.trace(rs), 1) and np.isclose(np.trace(rb), 1)
        assert np.allclose(rs, rs.conj().T) and np.allclose(rb, rb.conj().T)
        assert np.allclose(np.diag(rb).real, s.fock_populations())


def test_product_state_reduces_to_factors():
    sp = SpaceSpec(5)
    b = coherent_amplitudes(0.7, 5, tol=1.0)
    s = product_state("g", b, sp)
    assert np.allclose(reduce_boson(s), np.outer(b, b.conj()))
    assert np.allclose(reduce_spin(s), np.diag([1, 0]))


@given(st.integers(0, 10_000))
def test_projection_probabilities_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    sp = SpaceSpec(3)
    for pure in (True, False):
        s = random_state(rng, sp, pure)
        (se, pe), (_, pg) = project_spin(s, "e"), project_spin(s, "g")
        assert np.isclose(pe + pg, 1)
        assert np.isclose(se.trace(), 1)
        assert np.allclose(reduce_spin(se), np.diag([0, 1]), atol=1e-12)


def test_projection_of_impossible_outcome():
    with pytest.raises(MeasurementError):
        project_spin(basis_state(SpaceSpec(3), "g", 1), "e")


def test_state_json_round_trip():
    rng = np.random.default_rng(1)
    for pure in (True, False):
        s = random_state(rng, SpaceSpec(3), pure)
        back = SystemState.from_json(s.to_json())
        assert back.kind == s.kind
        assert np.array_equal(back.data, s.data)


def test_state_check_rejects_bad_density():
    sp = SpaceSpec(2)
    with pytest.raises(ValueError):
        SystemState(np.diag([1.5, -0.5, 0, 0]).astype(complex), sp).check()
    with pytest.raises(ValueError):
        SystemState(np.ones(3), sp)


def test_leak_reports_top_level():
    sp = SpaceSpec(4)
    assert basis_state(sp, "e", 3).leak() == 1
    assert basis_state(sp, "e", 2).leak() == 0
