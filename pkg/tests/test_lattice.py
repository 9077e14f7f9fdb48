from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spmlattice import (
    LatticeVector,
    SiteSequence,
    apply_A,
    apply_B,
    apply_Bstar,
    inner_product,
    norm_l1,
    norm_l2,
    norm_lp,
)
from spmlattice.lattice import LatticeError, laplacian


def brute_B(x):
    """(Bu)_i = u_{i+1} - u_i over i = -N-1..N+1 with zero padding, by loops."""
    n = (len(x) - 1) // 2
    get = lambda i: x[i + n] if -n <= i <= n else 0.0  # noqa: E731
    return np.array([get(i + 1) - get(i) for i in range(-n - 1, n + 2)])


def lattice_vectors(max_n=12):
    return st.integers(0, max_n).flatmap(
        lambda n: arrays(float, 2 * n + 1, elements=st.floats(-1e3, 1e3, allow_nan=False))
    )


def test_B_of_zero_and_unit():
    assert np.all(apply_B(LatticeVector.zeros(3)).values == 0)
    b = apply_B(LatticeVector.unit(3, 0))
    assert b[0] == -1.0 and b[-1] == 1.0
    assert np.count_nonzero(b.values) == 2


def test_Bstar_of_unit():
    b = apply_Bstar(LatticeVector.unit(3, 0))
    assert b[0] == -1.0 and b[1] == 1.0
    assert np.count_nonzero(b.values) == 2


def test_A_of_unit_and_constant():
    a = apply_A(LatticeVector.unit(4, 0))
    assert (a[-1], a[0], a[1]) == (-1.0, 2.0, -1.0)
    assert np.count_nonzero(a.values) == 3
    c = apply_A(LatticeVector(np.full(11, 3.5)))
    interior = c.values[1:-1]
    assert np.all(interior == 0.0)
    # boundary sites see the zero padding
    assert c[5] == 3.5 and c[-5] == 3.5


def test_B_matches_loops(rng):
    x = rng.standard_normal(9)
    assert np.allclose(apply_B(LatticeVector(x)).values, brute_B(x), atol=0)


@given(lattice_vectors())
@settings(max_examples=200, deadline=None)
def test_energy_identity(x):
    u = LatticeVector(x)
    lhs = inner_product(apply_A(u), u)
    rhs = norm_l2(apply_B(u)) ** 2
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, rhs)
    assert lhs <= 4.0 * norm_l2(u) ** 2 * (1 + 1e-12) + 1e-12


@given(lattice_vectors(), st.integers(0, 2**32 - 1))
@settings(max_examples=200, deadline=None)
def test_adjoint(x, seed):
    u = LatticeVector(x)
    w = LatticeVector(np.random.default_rng(seed).standard_normal(x.size + 2))
    a = inner_product(apply_B(u), w)
    b = inner_product(u, apply_Bstar(w))
    scale = norm_l2(apply_B(u)) * norm_l2(w) + 1.0
    assert abs(a - b) <= 1e-12 * scale


def test_A_is_Bstar_B_restricted(rng):
    u = LatticeVector(rng.standard_normal(33))
    full = apply_Bstar(apply_B(u))
    assert np.allclose(full.restrict(16).values, apply_A(u).values, atol=1e-14)


def test_laplacian_batched(rng):
    X = rng.standard_normal((4, 3, 9))
    L = laplacian(X)
    for row in X.reshape(-1, 9):
        assert np.allclose(laplacian(row), apply_A(LatticeVector(row)).values)
    assert L.shape == X.shape


def test_norms():
    assert norm_l2(LatticeVector.unit(5, 2)) == 1.0
    assert norm_lp(LatticeVector([1.0, 1.0, 1.0]), 3) == pytest.approx(3 ** (1 / 3), rel=1e-15)
    with pytest.raises(ValueError):
        norm_lp(LatticeVector([1.0]), 0.5)


def test_geometric_l1_norm():
    n = 20
    a = SiteSequence.from_function(n, lambda i: 2.0 ** (-np.abs(i)))
    exact = 1 + 2 * sum(Fraction(1, 2**i) for i in range(1, n + 1))
    assert exact == 3 - Fraction(1, 2**19)
    assert norm_l1(a) == pytest.approx(float(exact), rel=1e-15)


def test_inner_product_pads_narrower():
    u = LatticeVector([1.0, 2.0, 3.0])
    w = LatticeVector([5.0, 1.0, 1.0, 1.0, 5.0])
    assert inner_product(u, w) == 6.0


@pytest.mark.parametrize("bad", [[1.0, 2.0], [[1.0]], [np.nan], [np.inf, 0.0, 0.0]])
def test_invalid_lattice_values(bad):
    with pytest.raises(LatticeError):
        LatticeVector(bad)


def test_site_sequence_a_nonnegative():
    with pytest.raises(LatticeError):
        SiteSequence([0.0, -1.0, 0.0], role="a")
    assert SiteSequence([0.0, -1.0, 0.0], role="g")[0] == -1.0


def test_arithmetic_and_resizing(rng):
    u = LatticeVector(rng.standard_normal(7))
    w = LatticeVector(rng.standard_normal(7))
    assert (u + w - w).values == pytest.approx(u.values)
    assert (2 * u).values == pytest.approx(2 * u.values)
    assert u.widen(5).restrict(3) == u
    with pytest.raises(LatticeError):
        u + LatticeVector.zeros(4)
    with pytest.raises(IndexError):
        u[4]


def test_round_trips(rng):
    u = LatticeVector(rng.standard_normal(11))
    assert LatticeVector.from_json(u.to_json()) == u
    assert LatticeVector.from_csv(u.to_csv()) == u
    assert u.to_csv().splitlines()[0] == "site,value"
