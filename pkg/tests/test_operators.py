import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse

from eitcool.operators import (
    DensityState,
    HilbertSpace,
    Operator,
    destroy,
    embed,
    expect,
    number,
    thermal_populations,
)


def test_embed_identity():
    op = embed(np.eye(8), 0, HilbertSpace((8, 17)))
    assert np.array_equal(op.toarray(), np.eye(136))


def test_embed_number_on_second_factor():
    n = destroy(3).conj().T @ destroy(3)
    op = embed(n, 1, HilbertSpace((2, 3)))
    assert np.allclose(op.toarray(), np.diag([0, 1, 2, 0, 1, 2]))


def test_embed_raising_is_nilpotent():
    sp = np.array([[0, 1], [0, 0]])
    op = embed(sp, 0, HilbertSpace((2, 2)))
    assert np.array_equal((op @ op).toarray(), np.zeros((4, 4)))


def test_embed_dimension_mismatch_message():
    with pytest.raises(ValueError, match=r"\(3, 3\).*dimension 2"):
        embed(np.eye(3), 0, HilbertSpace((2, 4)))


def test_embed_disjoint_factors_commute():
    rng = np.random.default_rng(0)
    space = HilbertSpace((3, 4))
    a = embed(rng.normal(size=(3, 3)), 0, space)
    b = embed(rng.normal(size=(4, 4)), 1, space)
    assert np.max(np.abs((a @ b).toarray() - (b @ a).toarray())) < 1e-12


def test_embed_preserves_spectrum():
    op = np.diag([1.0, -2.0, 5.0])
    ev = np.sort(np.linalg.eigvalsh(embed(op, 0, HilbertSpace((3, 2))).toarray()))
    assert np.allclose(ev, [-2, -2, 1, 1, 5, 5])


def test_destroy_examples():
    assert np.array_equal(destroy(2), [[0, 1], [0, 0]])
    a = destroy(3)
    assert np.allclose(a.conj().T @ a, np.diag([0, 1, 2]))
    a = destroy(17)
    for m in range(16):
        assert a[m, m + 1] == pytest.approx(np.sqrt(m + 1))
    with pytest.raises(ValueError):
        destroy(1)


def _fock(n, k):
    p = np.zeros(n)
    p[k] = 1
    return DensityState(HilbertSpace((1, n)), np.diag(p))


def test_expect_examples():
    space = HilbertSpace((1, 17))
    rho = DensityState(space, np.diag(thermal_populations(0.5, 17)))
    assert expect(Operator.identity(space), rho) == pytest.approx(1)
    assert expect(Operator(space, number(17)), _fock(17, 3)) == pytest.approx(3)
    assert abs(expect(Operator(space, number(17)), rho) - 0.5) < 1e-6


def test_expect_shape_mismatch():
    with pytest.raises(ValueError):
        expect(Operator.identity(HilbertSpace((2,))), _fock(3, 0))


def test_thermal_populations_truncated_geometric():
    p = thermal_populations(1.0, 17)
    k = np.arange(17)
    exact = 0.5 ** (k + 1)
    assert np.allclose(p, exact / exact.sum(), rtol=1e-12, atol=0)
    # closed form of the renormalised truncated series, x = nbar / (nbar + 1) = 1/2
    x, n = 0.5, 17
    mean = x / (1 - x) - n * x**n / (1 - x**n)
    assert abs(np.dot(k, p) - mean) < 1e-12
    assert abs(np.dot(k, p) - 1) < 2e-4


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 30), st.integers(2, 40))
def test_thermal_populations_normalised(nbar, n):
    p = thermal_populations(nbar, n)
    assert p.min() >= 0
    assert abs(p.sum() - 1) < 1e-12
    assert np.dot(np.arange(n), p) <= nbar + 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_hermitian_expectation_is_real(seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    rho = m @ m.conj().T
    rho /= np.trace(rho)
    h = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    h = h + h.conj().T
    space = HilbertSpace((2, 3))
    state = DensityState(space, rho)
    state.validate()
    assert abs(expect(Operator(space, h), state).imag) < 1e-10


def test_density_state_validate_rejects():
    space = HilbertSpace((1, 2))
    with pytest.raises(ValueError, match="trace"):
        DensityState(space, np.diag([0.5, 0.2])).validate()
    with pytest.raises(ValueError, match="positive"):
        DensityState(space, np.diag([1.5, -0.5])).validate()
    with pytest.raises(ValueError, match="Hermitian"):
        DensityState(space, np.array([[1, 0.1], [0, 0]])).validate()


def test_product_state_marginals():
    rho = DensityState.thermal(8, 1, 2.0, 10)
    assert rho.space == HilbertSpace((8, 10))
    el = rho.electronic_populations()
    assert el[1] == pytest.approx(1) and el.sum() == pytest.approx(1)
    assert np.allclose(rho.fock_populations(), thermal_populations(2.0, 10))


def test_operator_arithmetic_checks_space():
    a = Operator.identity(HilbertSpace((2,)))
    b = Operator.identity(HilbertSpace((3,)))
    with pytest.raises(ValueError):
        a + b
    c = (a * 2 - a) @ a.dag()
    assert sparse.issparse(c.matrix)
    assert np.allclose(c.toarray(), np.eye(2))
    assert c.is_hermitian()
