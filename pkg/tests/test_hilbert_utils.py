import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from etsim.hilbert_utils import (
    Boson,
    DensityMatrix,
    HilbertSpaceError,
    Operator,
    Qubit,
    SpaceSpec,
    commutator,
    displacement,
    embed,
    embed_many,
    fock_ops,
    identity,
    partial_trace,
    pauli_ops,
    product_ket,
    tensor_density,
    trace_distance,
)


def build_space(n_c=3):
    """Helper: control qubit plus one boson mode."""
    return SpaceSpec([Qubit(), Boson(n_c)])


def random_density(dim, values):
    """Helper: a valid density matrix A A^dag / tr from a flat list of reals."""
    a = np.asarray(values[: dim * dim], dtype=float).reshape(dim, dim) + 1j * np.asarray(
        values[dim * dim :], dtype=float
    ).reshape(dim, dim)
    rho = a @ a.conj().T + 1e-3 * np.eye(dim)
    return rho / np.trace(rho)


def test_boson_cutoff_must_be_at_least_two():
    with pytest.raises(HilbertSpaceError):
        Boson(1)


def test_space_dims_and_sites():
    space = SpaceSpec([Qubit(), Boson(4), Qubit(), Boson(3)])
    assert space.dims == (2, 4, 2, 3)
    assert space.dim == 48
    assert space.qubit_sites() == [0, 2]
    assert space.boson_sites() == [1, 3]
    with pytest.raises(HilbertSpaceError):
        space.check_index(4)


def test_ladder_commutator_is_identity_below_cutoff():
    a, a_dag, num = fock_ops(6)
    comm = commutator(a.matrix, a_dag.matrix)
    assert np.allclose(np.diag(comm)[:-1], 1.0)
    assert np.isclose(comm[-1, -1], -5.0)
    assert np.allclose(np.diag(num.matrix), np.arange(6))


def test_sigma_plus_minus_projects_on_up():
    _, _, sz, sp, sm = pauli_ops()
    assert np.allclose((sp @ sm).matrix, np.diag([1.0, 0.0]))
    assert np.allclose(sz.matrix, np.diag([1.0, -1.0]))


def test_embed_places_operator_in_factor_order():
    space = build_space(3)
    _, _, sz, _, _ = pauli_ops()
    a, _, _ = fock_ops(3)
    assert np.allclose(embed(sz, 0, space).matrix, np.kron(sz.matrix, np.eye(3)))
    assert np.allclose(embed(a, 1, space).matrix, np.kron(np.eye(2), a.matrix))
    assert embed(sz, 0, space).hermitian


def test_embed_many_rejects_wrong_local_dimension():
    space = build_space(3)
    _, _, sz, _, _ = pauli_ops()
    with pytest.raises(HilbertSpaceError):
        embed_many({1: sz}, space)


def test_operator_hermitian_tag_is_checked():
    space = SpaceSpec([Qubit()])
    with pytest.raises(HilbertSpaceError):
        Operator(space, np.array([[0, 1], [0, 0]]), hermitian=True)


def test_operator_arithmetic_requires_same_space():
    with pytest.raises(HilbertSpaceError):
        identity(SpaceSpec([Qubit()])) + identity(SpaceSpec([Boson(2)]))


def test_operator_matrix_is_read_only():
    op = identity(SpaceSpec([Qubit()]))
    with pytest.raises(ValueError):
        op.matrix[0, 0] = 2.0


@pytest.mark.parametrize(
    "matrix",
    [
        np.diag([2.0, 0.0]),
        np.diag([1.5, -0.5]),
        np.array([[0.5, 0.3], [0.0, 0.5]]),
    ],
)
def test_density_matrix_contract_violations(matrix):
    with pytest.raises(HilbertSpaceError):
        DensityMatrix(SpaceSpec([Qubit()]), matrix)


def test_density_matrix_can_skip_validation():
    rho = DensityMatrix(SpaceSpec([Qubit()]), np.diag([2.0, 0.0]), validate=False)
    assert rho.contract_violations()


def test_partial_trace_of_product_state_recovers_factors():
    up = DensityMatrix(SpaceSpec([Qubit()]), np.diag([1.0, 0.0]))
    thermal = DensityMatrix(SpaceSpec([Boson(3)]), np.diag([0.7, 0.2, 0.1]))
    joint = tensor_density(up, thermal)
    assert np.allclose(partial_trace(joint, [0]).matrix, up.matrix)
    assert np.allclose(partial_trace(joint, [1]).matrix, thermal.matrix)
    with pytest.raises(HilbertSpaceError):
        partial_trace(joint, [])


@settings(max_examples=25, deadline=None)
@given(values=st.lists(st.floats(-1.0, 1.0), min_size=72, max_size=72))
def test_partial_trace_preserves_trace_and_hermiticity(values):
    space = build_space(3)
    rho = DensityMatrix(space, random_density(6, values))
    for keep in ([0], [1]):
        reduced = partial_trace(rho, keep)
        assert abs(reduced.trace() - 1.0) < 1e-12
        assert np.allclose(reduced.matrix, reduced.matrix.conj().T)
        assert reduced.min_eigenvalue() > -1e-12


def test_product_ket_matches_kron():
    space = build_space(2)
    ket = product_ket(space, [np.array([1, 0]), np.array([0, 1])])
    assert np.allclose(ket, np.kron([1, 0], [0, 1]))
    with pytest.raises(HilbertSpaceError):
        product_ket(space, [np.array([1, 0])])


def test_displacement_shifts_the_vacuum():
    alpha = 0.5
    u = displacement(alpha, 20).matrix
    a, _, _ = fock_ops(20)
    vac = np.zeros(20)
    vac[0] = 1.0
    coherent = u @ vac
    assert np.isclose(np.vdot(coherent, a.matrix @ coherent), alpha, atol=1e-10)
    assert np.isclose(np.linalg.norm(coherent), 1.0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(re=st.floats(-1.0, 1.0), im=st.floats(-1.0, 1.0), n_c=st.integers(10, 20))
def test_displacement_inverse_on_low_fock_block(re, im, n_c):
    alpha = complex(re, im)
    product = displacement(alpha, n_c).matrix @ displacement(-alpha, n_c).matrix
    low = n_c // 2
    assert np.allclose(product[:low, :low], np.eye(low), atol=1e-10)


def test_displacement_warns_when_cutoff_is_small(caplog):
    with caplog.at_level(logging.WARNING, logger="etsim.hilbert_utils"):
        displacement(2.0, 8)
    assert "truncation degrades unitarity" in caplog.text


def test_trace_distance_extremes():
    up = np.diag([1.0, 0.0])
    down = np.diag([0.0, 1.0])
    assert trace_distance(up, up) == pytest.approx(0.0, abs=1e-14)
    assert trace_distance(up, down) == pytest.approx(1.0)
