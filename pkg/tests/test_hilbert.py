import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cascadeq.hilbert import (
    HilbertError, HilbertSpec, OperatorMatrix, StateVector, annihilation_op, apply, basis_state, embed,
    expectation, identity, partial_trace, transition_op,
)


def small_space():
    return HilbertSpec([("a", 3), ("b", 2)])


def test_dims_and_index_layout():
    sp = small_space()
    assert sp.dim == 6
    assert sp.dims == (3, 2)
    # first subsystem is the most significant factor
    assert sp.index({"a": 1, "b": 0}) == 2
    assert sp.index({"a": 2, "b": 1}) == 5
    assert sp.index({}) == 0


def test_bad_specs_rejected():
    with pytest.raises(HilbertError):
        HilbertSpec([])
    with pytest.raises(HilbertError):
        HilbertSpec([("a", 2), ("a", 3)])
    with pytest.raises(HilbertError):
        HilbertSpec([("a", 0)])
    with pytest.raises(HilbertError):
        HilbertSpec([("a", 100), ("b", 100)])


def test_transition_op_has_expected_entries():
    sp = small_space()
    op = transition_op(sp, "a", 0, 2)  # |0><2| on a, identity on b
    assert op.entries.shape == (6, 6)
    nz = np.argwhere(op.entries != 0)
    assert len(nz) == 2
    assert set(map(tuple, nz)) == {(0, 4), (1, 5)}


def test_transition_algebra():
    sp = HilbertSpec([("x", 4)])
    for i in range(4):
        for j in range(4):
            for k in range(4):
                for m in range(4):
                    lhs = transition_op(sp, "x", i, j) @ transition_op(sp, "x", k, m)
                    rhs = transition_op(sp, "x", i, m).entries if j == k else np.zeros((4, 4))
                    np.testing.assert_array_equal(lhs.entries, rhs)


def test_projectors_resolve_identity():
    sp = small_space()
    total = sum((transition_op(sp, "a", i, i) for i in range(3)), transition_op(sp, "a", 0, 0) * 0)
    np.testing.assert_array_equal(total.entries, identity(sp).entries)


def test_annihilation_operator():
    sp = HilbertSpec([("c", 4)])
    a = annihilation_op(sp, "c")
    n = (a.dag() @ a).entries
    np.testing.assert_allclose(np.diag(n).real, [0, 1, 2, 3])
    psi = basis_state(sp, {"c": 3})
    out = apply(a, psi).amplitudes
    assert out[2] == pytest.approx(np.sqrt(3))
    with pytest.raises(HilbertError):
        annihilation_op(HilbertSpec([("c", 1)]), "c")


def test_embeddings_on_different_subsystems_commute():
    sp = small_space()
    rng = np.random.default_rng(1)
    x = embed(sp, "a", rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
    y = embed(sp, "b", rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
    np.testing.assert_allclose((x @ y).entries, (y @ x).entries, atol=1e-12)


def test_embed_rejects_wrong_shape():
    with pytest.raises(HilbertError):
        embed(small_space(), "a", np.eye(2))


def test_mismatched_spaces_rejected():
    a = identity(HilbertSpec([("a", 2)]))
    b = identity(HilbertSpec([("b", 2)]))
    with pytest.raises(HilbertError):
        a @ b
    with pytest.raises(HilbertError):
        expectation(a, basis_state(HilbertSpec([("b", 2)])))


def test_state_normalization():
    sp = HilbertSpec([("a", 2)])
    psi = StateVector(sp, np.array([3.0, 4.0j]))
    assert psi.norm() == pytest.approx(5.0)
    assert not psi.is_normalized()
    assert psi.normalized().is_normalized()


def test_partial_trace_of_product_state():
    sp = small_space()
    u = np.array([0.6, 0.0, 0.8j])
    v = np.array([1, 1]) / np.sqrt(2)
    rho = np.outer(np.kron(u, v), np.kron(u, v).conj())
    np.testing.assert_allclose(partial_trace(rho, sp, "a"), np.outer(u, u.conj()), atol=1e-12)
    np.testing.assert_allclose(partial_trace(rho, sp, "b"), np.outer(v, v.conj()), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
                min_size=6, max_size=6))
def test_projector_expectations_bounded(amps):
    amps = np.array(amps, dtype=complex)
    if np.linalg.norm(amps) < 1e-3:
        amps[0] = 1.0
    sp = small_space()
    psi = StateVector(sp, amps).normalized()
    total = 0.0
    for i in range(3):
        p = expectation(transition_op(sp, "a", i, i), psi).real
        assert -1e-12 <= p <= 1 + 1e-12
        total += p
    assert total == pytest.approx(1.0, abs=1e-12)


def test_hermitian_check():
    sp = HilbertSpec([("a", 2)])
    assert not transition_op(sp, "a", 0, 1).is_hermitian()
    x = transition_op(sp, "a", 0, 1) + transition_op(sp, "a", 1, 0)
    assert x.is_hermitian()
    assert isinstance(x, OperatorMatrix)
