import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from transducers.errors import GramMismatch, ShapeMismatch
from transducers.linalg import (
    SectorSpace,
    assemble_block,
    complete_unitary_from_pairs,
    dense,
    fixed_subspace_projector,
    haar_unitary,
    matrix_from_json,
    matrix_to_json,
    pseudoinverse,
    unitarity_defect,
)
from transducers.transducer import example_reflection


def penrose_ok(a, p, tol=1e-10):
    return (np.allclose(a @ p @ a, a, atol=tol) and np.allclose(p @ a @ p, p, atol=tol)
            and np.allclose((a @ p).conj().T, a @ p, atol=tol)
            and np.allclose((p @ a).conj().T, p @ a, atol=tol))


def test_pinv_trivial_cases():
    assert np.allclose(pseudoinverse(np.eye(3)), np.eye(3))
    assert np.allclose(pseudoinverse(np.zeros((2, 2))), np.zeros((2, 2)))


def test_pinv_diag():
    a = np.diag([2.0, 0.0])
    p = pseudoinverse(a)
    assert np.allclose(p, np.diag([0.5, 0.0]))
    assert penrose_ok(a, p)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2 ** 31))
def test_pinv_penrose_identities(m, n, seed):
    g = np.random.default_rng(seed)
    a = g.normal(size=(m, n)) + 1j * g.normal(size=(m, n))
    assert penrose_ok(a, pseudoinverse(a), tol=1e-8)


def test_fixed_projector_trivial():
    assert np.allclose(fixed_subspace_projector(np.eye(2)), np.eye(2))
    assert np.allclose(fixed_subspace_projector(np.zeros((2, 2))), np.zeros((2, 2)))


def test_fixed_projector_example_reflection():
    S = dense(example_reflection().op)
    pi = np.diag([0, 1, 1]).astype(complex)
    P = fixed_subspace_projector(pi @ S @ pi)
    u = np.array([0, 1, -1]) / np.sqrt(2)
    assert np.allclose(P, np.outer(u, u), atol=1e-9)


def test_pairs_identity_and_swap():
    e = np.eye(3, dtype=complex)
    U = dense(complete_unitary_from_pairs([(e[0], e[0])]))
    assert np.allclose(U @ e[0], e[0])
    assert unitarity_defect(U) < 1e-9
    U = dense(complete_unitary_from_pairs([(e[0], e[1]), (e[1], e[0])]))
    assert np.allclose(U @ e[0], e[1]) and np.allclose(U @ e[1], e[0])


def test_pairs_gram_mismatch():
    e = np.eye(2, dtype=complex)
    with pytest.raises(GramMismatch):
        complete_unitary_from_pairs([(e[0], 2 * e[0])])


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(1, 4), st.integers(0, 2 ** 31))
def test_pairs_random_isometry(n, k, seed):
    k = min(k, n)
    g = np.random.default_rng(seed)
    V = haar_unitary(n, g)
    a = g.normal(size=(n, k)) + 1j * g.normal(size=(n, k))
    U = dense(complete_unitary_from_pairs([(a[:, j], V @ a[:, j]) for j in range(k)]))
    assert unitarity_defect(U) < 1e-8
    assert np.allclose(U @ a, V @ a, atol=1e-8)


def test_assemble_block_examples():
    H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    a = (("A", 0),)
    op = assemble_block(SectorSpace(((a, 2),)), {(a, a): H})
    assert np.allclose(op.matrix, H) and op.is_unitary()
    c0, c1 = (("C", 0),), (("C", 1),)
    X = np.array([[0, 1], [1, 0]])
    op = assemble_block(SectorSpace(((c0, 2), (c1, 2))), {(c0, c0): np.eye(2), (c1, c1): X})
    cx = np.eye(4)
    cx[2:, 2:] = X
    assert np.allclose(op.matrix, cx)


def test_query_operator_kron_form():
    from transducers.canonical import CanonicalTransducer, OracleSlot

    S = CanonicalTransducer(1, 1, [OracleSlot("O", 2, 1)], np.eye(4))
    X = np.array([[0, 1], [1, 0]], dtype=complex)
    Q = dense(S.query_matrix({"O": X}))
    ref = sp.block_diag([np.eye(2), X]).toarray()
    assert np.allclose(Q, ref)


def test_sector_space_bijection():
    s = SectorSpace((({"P": 0}, 2), ({"P": 1}, 3)))
    assert s.total_dim == 5
    with pytest.raises(ShapeMismatch):
        SectorSpace((({"P": 0}, 2), ({"P": 0}, 3)))
    located = [s.locate(i) for i in range(5)]
    assert [s.index(lab, k) for lab, k in located] == list(range(5))


def test_matrix_json_round_trip():
    m = haar_unitary(3, 1)
    assert np.allclose(matrix_from_json(matrix_to_json(m)), m)
