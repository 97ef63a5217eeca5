import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pnesdec import fock_space as fs
from pnesdec.states import twb_coeffs

from conftest import ginibre_state


def test_annihilation_matrix_lowers():
    a = fs.annihilation_matrix(4)
    ket = np.zeros(4)
    ket[3] = 1
    assert np.allclose(a @ ket, [0, 0, math.sqrt(3), 0])


def test_cutoff_of_rejects_non_square_dimension():
    with pytest.raises(ValueError):
        fs.cutoff_of(np.zeros((5, 5)))
    assert fs.cutoff_of(np.zeros((9, 9))) == 3


def test_density_matrix_is_read_only(random_rho):
    with pytest.raises(ValueError):
        random_rho.elements[0, 0] = 1


def test_element_uses_mode_one_major_index():
    psi = np.array([0.6, 0.8])
    rho = fs.pure_pnes_density(psi, 3)
    assert rho.element((1, 1), (0, 0)) == pytest.approx(0.48)
    assert rho.elements[1 * 3 + 1, 0] == pytest.approx(0.48)


def test_pure_pnes_density_checks_norm_and_cutoff():
    with pytest.raises(ValueError):
        fs.pure_pnes_density(np.array([1.0, 1.0]))
    with pytest.raises(ValueError):
        fs.pure_pnes_density(np.array([0.6, 0, 0.8]), d=2)


def test_resized_round_trip(random_rho):
    big = random_rho.resized(7)
    assert big.trace == pytest.approx(1.0)
    assert np.array_equal(big.resized(5).elements, random_rho.elements)


def test_partial_transpose_of_pure_pnes_has_known_spectrum():
    # PT of sum psi_n psi_m* |nn><mm| has eigenvalues |psi_n|^2 and +-|psi_n psi_m|
    psi = np.array([0.7, 0.5j, -0.4, 0.3])
    psi = psi / np.linalg.norm(psi)
    ev = np.sort(np.linalg.eigvalsh(fs.partial_transpose(fs.pure_pnes_density(psi))))
    a = np.abs(psi)
    expected = list(a**2)
    for i in range(4):
        for j in range(i + 1, 4):
            expected += [a[i] * a[j], -a[i] * a[j]]
    expected += [0.0] * (16 - len(expected))
    assert np.allclose(ev, np.sort(expected), atol=1e-14)


def test_partial_transposes_on_either_mode_agree_up_to_full_transpose(random_rho):
    pt1 = fs.partial_transpose(random_rho, 1)
    pt2 = fs.partial_transpose(random_rho, 2)
    assert np.allclose(pt1, pt2.T)


def test_partial_trace_of_twin_beam_is_thermal():
    r = 0.4
    c = twb_coeffs(r, d=30, tail_tol=1e-12)
    red = fs.partial_trace(fs.pure_pnes_density(c), 2)
    n = np.arange(30)
    thermal = np.tanh(r) ** (2 * n) / np.cosh(r) ** 2
    assert np.allclose(np.diag(red).real, thermal / thermal.sum(), atol=1e-12)
    assert np.allclose(red, np.diag(np.diag(red)))


def test_partial_trace_traces_out_named_mode():
    rho_a = np.diag([0.25, 0.75])
    rho_b = np.array([[0.5, 0.1j], [-0.1j, 0.5]])
    joint = np.kron(rho_a, rho_b)
    assert np.allclose(fs.partial_trace(joint, 2), rho_a)
    assert np.allclose(fs.partial_trace(joint, 1), rho_b)


def test_hermitian_eigenvalues_rejects_non_hermitian():
    with pytest.raises(ValueError):
        fs.hermitian_eigenvalues(np.array([[0, 1], [0, 0]], dtype=complex))


def test_blocks():
    assert list(fs.square_block(2, 3)) == [0, 1, 3, 4]
    assert sorted(fs.total_photon_block(2, 3)) == [0, 1, 3]
    assert list(fs.ket_block([(0, 1), (1, 0)], 4)) == [1, 4]


def test_trace_distance_between_orthogonal_pure_states():
    a = np.diag([1.0, 0, 0, 0])
    b = np.diag([0, 1.0, 0, 0])
    assert fs.trace_distance(a, b) == pytest.approx(1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=2, max_value=5), st.integers(min_value=0, max_value=10**6))
def test_partial_transpose_is_an_involution(d, seed):
    rho = ginibre_state(d, np.random.default_rng(seed))
    for mode in (1, 2):
        twice = fs.partial_transpose(fs.partial_transpose(rho, mode), mode)
        assert np.array_equal(twice, rho.elements)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=2, max_value=5), st.integers(min_value=0, max_value=10**6))
def test_partial_transpose_preserves_trace_and_hermiticity(d, seed):
    rho = ginibre_state(d, np.random.default_rng(seed))
    pt = fs.partial_transpose(rho)
    assert np.trace(pt) == pytest.approx(1.0)
    assert np.allclose(pt, pt.conj().T)
