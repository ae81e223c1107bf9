import math

import numpy as np
import pytest

from torusdiss.errors import DimensionError
from torusdiss.fourier import (DenseOperator, FourierVector, TruncatedGrid,
                               apply, compose, dump_operator, dump_vector,
                               l2_norm, load, operator_norm, power,
                               smallest_singular, sobolev_norm)


def test_grid_enumeration_lexicographic_no_zero():
    g = TruncatedGrid(2, 1)
    assert g.modes == ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1),
                       (1, -1), (1, 0), (1, 1))
    assert len(g) == 8
    # bijection onto the index range
    assert sorted(g.index.values()) == list(range(8))
    assert (0, 0) not in g.index


def test_grid_counts():
    for d, k in [(1, 5), (2, 3), (3, 2)]:
        g = TruncatedGrid(d, k)
        assert len(g) == (2 * k + 1) ** d - 1


def test_l2_norm_examples():
    g = TruncatedGrid(2, 2)
    e10 = FourierVector.from_modes(g, {(1, 0): 1.0})
    assert l2_norm(e10) == 1.0
    zero = FourierVector(g, np.zeros(len(g)))
    assert l2_norm(zero) == 0.0
    g1 = TruncatedGrid(1, 3)
    f = FourierVector.from_modes(g1, {(1,): 3.0, (2,): 4.0})
    assert l2_norm(f) == pytest.approx(5.0, abs=0)


def test_parseval_random():
    rng = np.random.RandomState(7)
    g = TruncatedGrid(2, 4)
    for _ in range(20):
        c = rng.standard_normal(len(g)) + 1j * rng.standard_normal(len(g))
        f = FourierVector(g, c)
        assert l2_norm(f) ** 2 == pytest.approx(float(np.sum(np.abs(c) ** 2)),
                                                rel=1e-14)


def test_sobolev_examples():
    g1 = TruncatedGrid(1, 2)
    f = FourierVector.from_modes(g1, {(1,): 1.0})
    assert sobolev_norm(f, 0) == l2_norm(f)
    assert sobolev_norm(f, 1) == pytest.approx(math.sqrt(2.0), rel=1e-15)
    g2 = TruncatedGrid(2, 2)
    f2 = FourierVector.from_modes(g2, {(1, 1): 1.0})
    assert sobolev_norm(f2, 2) == pytest.approx(3.0, rel=1e-15)


def test_sobolev_monotone_in_s():
    rng = np.random.RandomState(11)
    g = TruncatedGrid(2, 3)
    c = rng.standard_normal(len(g)) + 1j * rng.standard_normal(len(g))
    f = FourierVector(g, c)
    values = [sobolev_norm(f, s) for s in (0.0, 0.5, 1.0, 1.7, 2.0)]
    assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))


def test_operator_norm_identity_and_nilpotent():
    g = TruncatedGrid(1, 1)
    assert operator_norm(DenseOperator.identity(g)) == pytest.approx(1.0)
    nil = DenseOperator(g, [[0, 1], [0, 0]])
    assert operator_norm(nil) == pytest.approx(1.0)


def test_operator_norm_noise_diagonal_case():
    # diag(g_hat(eps k)) for the Gaussian symbol, eps=0.5, K=3, d=1:
    # max over k in {+-1..+-3} of exp(-(0.5 k)^2), attained at |k| = 1
    g = TruncatedGrid(1, 3)
    diag = [math.exp(-(0.5 * k[0]) ** 2) for k in g.modes]
    t = DenseOperator.diagonal(g, diag)
    assert operator_norm(t) == pytest.approx(math.exp(-0.25), rel=1e-12)


def test_operator_norm_matches_svd_random():
    rng = np.random.RandomState(3)
    g = TruncatedGrid(1, 6)
    m = rng.standard_normal((len(g), len(g))) + 1j * rng.standard_normal((len(g), len(g)))
    t = DenseOperator(g, m)
    assert operator_norm(t) == pytest.approx(
        float(np.linalg.svd(m, compute_uv=False)[0]), rel=1e-12)


def test_operator_norm_dominates_columns():
    rng = np.random.RandomState(5)
    g = TruncatedGrid(1, 4)
    m = rng.standard_normal((len(g), len(g)))
    t = DenseOperator(g, m)
    nrm = operator_norm(t)
    for j in range(len(g)):
        assert nrm >= np.linalg.norm(m[:, j]) - 1e-12


def test_smallest_singular_examples():
    g = TruncatedGrid(1, 1)
    zero = DenseOperator(g, np.zeros((2, 2)))
    assert smallest_singular(zero, 1.0) == pytest.approx(1.0)
    diag = DenseOperator(g, np.diag([0.5, 0.2]))
    assert smallest_singular(diag, 1.0) == pytest.approx(0.5, rel=1e-14)


@pytest.mark.parametrize("r", [0.5, 0.7, 1.0])
def test_smallest_singular_nilpotent_closed_form(r):
    # sigma_min of [[r, -1], [0, r]]: explicit 2x2 singular values
    g = TruncatedGrid(1, 1)
    nil = DenseOperator(g, [[0, 1], [0, 0]])
    want = math.sqrt(((1 + 2 * r * r) - math.sqrt(1 + 4 * r * r)) / 2)
    assert smallest_singular(nil, r) == pytest.approx(want, rel=1e-12)


def test_smallest_singular_times_inverse_norm_is_one():
    rng = np.random.RandomState(17)
    g = TruncatedGrid(1, 10)  # 20 modes
    for trial in range(5):
        m = rng.standard_normal((len(g), len(g))) * 0.3
        t = DenseOperator(g, m)
        lam = 1.0 + 0.1 * trial
        s = smallest_singular(t, lam)
        inv = np.linalg.inv(lam * np.eye(len(g)) - m)
        assert s * np.linalg.norm(inv, 2) == pytest.approx(1.0, rel=1e-10)


def test_apply_compose_power():
    g = TruncatedGrid(1, 2)
    ident = DenseOperator.identity(g)
    rng = np.random.RandomState(2)
    c = rng.standard_normal(len(g))
    f = FourierVector(g, c)
    assert np.allclose(apply(ident, f).coeffs, c)
    a = DenseOperator.diagonal(g, [1, 2, 3, 4])
    b = DenseOperator.diagonal(g, [5, 6, 7, 8])
    assert np.allclose(compose(a, b).entries, np.diag([5, 12, 21, 32]))
    assert np.allclose(power(a, 0).entries, np.eye(4))
    assert np.allclose(power(a, 3).entries, np.diag([1, 8, 27, 64]))


def test_grid_mismatch_raises():
    a = DenseOperator.identity(TruncatedGrid(1, 2))
    f = FourierVector.from_modes(TruncatedGrid(1, 3), {(1,): 1.0})
    with pytest.raises(DimensionError):
        apply(a, f)


def test_serialization_roundtrip_and_determinism():
    rng = np.random.RandomState(9)
    g = TruncatedGrid(2, 2)
    f = FourierVector(g, rng.standard_normal(len(g)) + 1j * rng.standard_normal(len(g)))
    blob = dump_vector(f)
    assert blob == dump_vector(f)
    f2 = load(blob)
    assert f2.grid.modes == g.modes
    assert np.array_equal(f2.coeffs, f.coeffs)

    m = rng.standard_normal((len(g), len(g))) + 1j * rng.standard_normal((len(g), len(g)))
    t = DenseOperator(g, m)
    blob2 = dump_operator(t)
    t2 = load(blob2)
    assert np.array_equal(t2.entries, m)
    assert blob2 == dump_operator(t2)
