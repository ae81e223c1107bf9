import math

import numpy as np
import pytest

from torusdiss.errors import ConfigurationError
from torusdiss.fourier import TruncatedGrid
from torusdiss.maps import (LinearToralMap, SampledMap, TranslationMap,
                            entropy_report, ergodicity_test,
                            expansion_profile, koopman_assembly,
                            koopman_matrix, perturbed_cat_map,
                            sample_linear_map)

CAT = [[2, 1], [1, 1]]
LAMBDA = (3 + math.sqrt(5)) / 2


def test_mode_action_examples():
    cat = LinearToralMap(CAT)
    assert cat.mode_action((1, 0)) == (2, 1)
    assert cat.mode_action((1, 0), 0) == (1, 0)
    dbl = LinearToralMap([[2]])
    assert dbl.mode_action((1,), 5) == (32,)


def test_mode_action_semigroup_random():
    rng = np.random.RandomState(8)
    cat = LinearToralMap(CAT)
    for _ in range(30):
        k = tuple(int(v) for v in rng.randint(-5, 6, size=2))
        if k == (0, 0):
            continue
        m, n = rng.randint(0, 6), rng.randint(0, 6)
        assert cat.mode_action(k, m + n) == cat.mode_action(cat.mode_action(k, m), n)


def test_mode_action_big_integers():
    cat = LinearToralMap(CAT)
    k = cat.mode_action((1, 0), 100)
    assert max(abs(v) for v in k) > 2 ** 63  # promoted beyond int64


def test_det_and_automorphism_flags():
    assert LinearToralMap(CAT).is_automorphism
    assert LinearToralMap(CAT).det == 1
    assert not LinearToralMap([[2]]).is_automorphism
    with pytest.raises(ConfigurationError):
        LinearToralMap([[1, 0], [2, 0]])  # det 0


def test_inverse_matrix_exact():
    cat = LinearToralMap(CAT)
    inv = cat.inverse_matrix()
    assert inv == ((1, -1), (-1, 2))
    a = np.array(CAT)
    assert np.array_equal(a @ np.array(inv), np.eye(2, dtype=int))


def test_expansion_profile_cat():
    p = expansion_profile(LinearToralMap(CAT))
    assert p.mu == pytest.approx(LAMBDA, rel=1e-12)
    assert p.df_norm == pytest.approx(LAMBDA, rel=1e-12)  # A symmetric
    assert p.lambda_u == pytest.approx(LAMBDA, rel=1e-12)
    assert p.lambda_s == pytest.approx(1 / LAMBDA, rel=1e-12)
    assert p.df_inverse_norm == pytest.approx(LAMBDA, rel=1e-12)
    assert 1.0 <= p.mu <= p.df_norm + 1e-12


def test_expansion_profile_identity_translation():
    p = expansion_profile(LinearToralMap([[1, 0], [0, 1]]))
    assert p.df_norm == pytest.approx(1.0) and p.mu == pytest.approx(1.0)
    pt = expansion_profile(TranslationMap([0.3, 0.7]))
    assert pt.df_norm == 1.0 and pt.mu == 1.0


def test_expansion_profile_sampled():
    smap = perturbed_cat_map(CAT, 0.01, 32)
    p = expansion_profile(smap)
    assert p.df_norm >= LAMBDA - 1e-9
    assert p.df_norm <= LAMBDA + 2 * math.pi * 0.01 + 1e-9
    assert abs(p.mu - LAMBDA) < 0.05
    assert p.mu <= p.df_norm + 1e-9


def test_entropy_report_cat():
    rep = entropy_report(LinearToralMap(CAT))
    assert rep.h == pytest.approx(math.log(LAMBDA), abs=1e-10)
    assert len(rep.factors) == 1 and rep.factors[0].degree == 2
    assert rep.h_hat == pytest.approx(math.log(LAMBDA) / 2, abs=1e-10)
    assert rep.ergodic


def test_entropy_report_rotation_and_parabolic():
    rot = entropy_report(LinearToralMap([[0, 1], [-1, 0]]))
    assert not rot.ergodic and rot.h == pytest.approx(0.0, abs=1e-12)
    par = entropy_report(LinearToralMap([[1, 1], [0, 1]]))
    assert not par.ergodic and par.h == pytest.approx(0.0, abs=1e-12)


def test_entropy_block_diagonal_factors():
    # block diag of the cat map and [[3,2],[1,1]] (lambda' = 2 + sqrt(3))
    a = [[2, 1, 0, 0], [1, 1, 0, 0], [0, 0, 3, 2], [0, 0, 1, 1]]
    rep = entropy_report(LinearToralMap(a))
    lam2 = 2 + math.sqrt(3)
    assert rep.h == pytest.approx(math.log(LAMBDA) + math.log(lam2), abs=1e-9)
    assert rep.h == pytest.approx(sum(f.h * f.multiplicity for f in rep.factors),
                                  abs=1e-10)
    assert rep.h_hat == pytest.approx(math.log(LAMBDA) / 2, abs=1e-9)
    assert rep.ergodic


def test_entropy_factorization_hint():
    rep = entropy_report(LinearToralMap(CAT), factorization_hint=[[1, -3, 1]])
    assert rep.h == pytest.approx(math.log(LAMBDA), abs=1e-10)
    with pytest.raises(ConfigurationError):
        entropy_report(LinearToralMap(CAT), factorization_hint=[[1, -2, 1]])


def test_ergodicity_examples():
    assert ergodicity_test(LinearToralMap(CAT))
    assert not ergodicity_test(LinearToralMap([[1, 0], [0, 1]]))
    assert not ergodicity_test(LinearToralMap([[0, -1], [1, 0]]))  # Phi_4


def test_sampled_map_volume_check():
    smap = perturbed_cat_map(CAT, 0.01, 32)
    assert smap.min_abs_jacobian > 0.8
    with pytest.raises(ConfigurationError):
        perturbed_cat_map(CAT, 0.9, 32)  # wildly non-volume-preserving


def test_koopman_identity_map():
    ident = sample_linear_map(LinearToralMap([[1, 0], [0, 1]]), 16)
    grid = TruncatedGrid(2, 3)
    op = koopman_matrix(ident, grid)
    assert np.max(np.abs(op.entries - np.eye(len(grid)))) < 1e-12


def test_koopman_cat_exact_permutation():
    cat = LinearToralMap(CAT)
    smap = sample_linear_map(cat, 32)
    grid = TruncatedGrid(2, 4)
    op, diag = koopman_assembly(smap, grid)
    assert diag["zero_mode_max"] < 1e-12
    for j, k in enumerate(grid.modes):
        ak = cat.mode_action(k)
        col = op.entries[:, j].copy()
        if grid.contains(ak):
            i = grid.index[ak]
            assert abs(col[i] - 1.0) < 1e-10
            col[i] = 0.0
            assert diag["dropped_max"] >= 0.0
        assert np.abs(col).max() < 1e-10


def test_koopman_delta_zero_equals_pure_cat():
    grid = TruncatedGrid(2, 3)
    pure = koopman_matrix(sample_linear_map(LinearToralMap(CAT), 24), grid)
    pert = koopman_matrix(perturbed_cat_map(CAT, 0.0, 24), grid)
    assert np.max(np.abs(pure.entries - pert.entries)) < 1e-12


def test_koopman_column_norms_and_mass_accounting():
    smap = perturbed_cat_map(CAT, 0.01, 32)
    grid = TruncatedGrid(2, 4)
    op, diag = koopman_assembly(smap, grid)
    norms = np.linalg.norm(op.entries, axis=0)
    assert np.all(norms <= 1.0 + 1e-9)
    # retained + dropped (+ zero-mode mass) accounts for the unit column:
    # |e_k o F| = 1 pointwise so the window mass is exactly 1 by Parseval
    n = smap.n_samples
    for j in (0, 7, len(grid) // 2):
        k = np.array(grid.modes[j], dtype=float)
        phase = np.exp(2j * np.pi * (smap.f_values @ k))
        u_hat = np.fft.fftn(phase) / n ** 2
        freqs = (np.fft.fftfreq(n) * n).astype(int)
        signed = np.stack(np.meshgrid(freqs, freqs, indexing="ij"), axis=-1)
        in_grid = np.all(np.abs(signed) <= grid.cutoff, axis=-1) & \
            np.any(signed != 0, axis=-1)
        retained = float(np.sum(np.abs(u_hat[in_grid]) ** 2))
        zero_mass = float(np.abs(u_hat[0, 0]) ** 2)
        dropped = float(np.sum(np.abs(u_hat[~in_grid]) ** 2)) - zero_mass
        assert retained == pytest.approx(float(norms[j] ** 2), rel=1e-12)
        assert retained + dropped + zero_mass == pytest.approx(1.0, abs=1e-12)
        assert dropped <= diag["dropped_max"] + 1e-12


def test_koopman_aliasing_guard():
    smap = perturbed_cat_map(CAT, 0.01, 16)
    with pytest.raises(ConfigurationError):
        koopman_matrix(smap, TruncatedGrid(2, 5))  # N=16 < 4K=20
