import math

import numpy as np
import pytest

from torusdiss.analysis import (TauResult, bound_report, correlation_series,
                                decay_fit, dissipation_time,
                                pseudospectrum_distance, rate_fit,
                                supexp_bound_check)
from torusdiss.errors import UnsupportedError
from torusdiss.fourier import FourierVector, TruncatedGrid
from torusdiss.maps import LinearToralMap, TranslationMap
from torusdiss.noise import AlphaStableKernel, noise_norm
from torusdiss.propagation import DenseEngine, LatticeOrbitEngine

CAT = [[2, 1], [1, 1]]
LAMBDA = (3 + math.sqrt(5)) / 2


def _lattice(map_, kern, eps):
    return LatticeOrbitEngine(map_, kern, eps)


# -- dissipation_time --------------------------------------------------------

def test_doubling_tau_example():
    # closed form: smallest n with eps^2 (4^n - 1)/(3/4) > 1, i.e. 4^n > 7501
    eng = _lattice(LinearToralMap([[2]]), AlphaStableKernel(1, 2.0), 0.01)
    assert dissipation_time(eng, "noisy") == TauResult.of(7)


def test_translation_tau_floor_formula():
    kern = AlphaStableKernel(1, 2.0)
    tr = TranslationMap([0.3183098861837907])
    for eps in (0.3, 0.15, 0.07, 0.031, 0.0142):
        eng = _lattice(tr, kern, eps)
        tau = dissipation_time(eng, "noisy", n_cap=10 ** 7)
        assert tau.finite and tau.n == math.floor(eps ** -2.0) + 1


def test_translation_coarse_infinite():
    kern = AlphaStableKernel(1, 2.0)
    eng = _lattice(TranslationMap([0.618034]), kern, 0.3)
    # g_hat(eps)^2 = e^{-0.18} > 1/e, certified n-independent
    assert dissipation_time(eng, "coarse") == TauResult.infinite()
    # large-eps coarse crossing is finite
    eng2 = _lattice(TranslationMap([0.618034]), kern, 1.0)
    assert dissipation_time(eng2, "coarse") == TauResult.of(1)


def test_exceeds_cap():
    kern = AlphaStableKernel(1, 2.0)
    eng = _lattice(TranslationMap([0.618034]), kern, 0.01)
    assert dissipation_time(eng, "noisy", n_cap=100) == TauResult.exceeds(100)


def test_parabolic_coarse_plateau_certification():
    # [[1,1],[0,1]] fixes the mode (1,0): coarse norm plateaus at g_hat(eps)^2;
    # the map is not ergodic, so INFINITE is certified through the window rule
    kern = AlphaStableKernel(2, 2.0)
    eng = _lattice(LinearToralMap([[1, 1], [0, 1]]), kern, 0.3)
    assert not eng.coarse_constant
    tau = dissipation_time(eng, "coarse", n_cap=500)
    assert tau == TauResult.infinite()


def test_tau_nonincreasing_in_eps():
    kern = AlphaStableKernel(2, 2.0)
    taus = []
    for eps in np.geomspace(0.5, 1e-4, 10):
        eng = _lattice(LinearToralMap(CAT), kern, float(eps))
        taus.append(dissipation_time(eng, "noisy").n)
    assert all(a <= b for a, b in zip(taus, taus[1:]))


def test_eta_configurable():
    eng = _lattice(LinearToralMap([[2]]), AlphaStableKernel(1, 2.0), 0.01)
    t_small = dissipation_time(eng, "noisy", eta=1e-3)
    t_default = dissipation_time(eng, "noisy")
    assert t_small.n >= t_default.n


def test_tau_is_first_threshold_crossing():
    # at tau* the norm is below eta, at tau* - 1 it is not
    eta = math.exp(-1.0)
    for eps in (0.01, 0.003):
        eng = _lattice(LinearToralMap([[2]]), AlphaStableKernel(1, 2.0), eps)
        tau = dissipation_time(eng, "noisy")
        assert eng.noisy_norm(tau.n) < eta
        assert tau.n == 1 or eng.noisy_norm(tau.n - 1) >= eta
    eng = _lattice(LinearToralMap(CAT), AlphaStableKernel(2, 2.0), 0.05)
    tau = dissipation_time(eng, "coarse")
    assert eng.coarse_norm(tau.n) < eta
    assert eng.coarse_norm(tau.n - 1) >= eta


# -- rate_fit -----------------------------------------------------------------

def test_rate_fit_synthetic_exact():
    pairs = [(e, 3.0 * math.log(1 / e) + 5) for e in np.geomspace(1e-2, 1e-6, 8)]
    fit = rate_fit(pairs)
    assert fit.model == "logarithmic"
    assert fit.r_star == pytest.approx(3.0, rel=1e-12)
    assert fit.r2_log == pytest.approx(1.0, abs=1e-12)
    pairs = [(e, 2.5 * e ** -1.5) for e in np.geomspace(1e-1, 1e-4, 8)]
    fit = rate_fit(pairs)
    assert fit.model == "power"
    assert fit.beta == pytest.approx(1.5, rel=1e-12)


def test_rate_fit_doubling():
    kern = AlphaStableKernel(1, 2.0)
    pairs = []
    for eps in np.geomspace(1e-2, 1e-6, 9):
        eng = _lattice(LinearToralMap([[2]]), kern, float(eps))
        pairs.append((float(eps), dissipation_time(eng, "noisy")))
    fit = rate_fit(pairs)
    assert fit.model == "logarithmic"
    assert fit.r_star == pytest.approx(1 / math.log(2), rel=0.05)
    assert fit.sensitivity["trimmed_points"] == 6


def test_rate_fit_infinite_only():
    fit = rate_fit([])
    assert fit.model == "none"


# -- pseudospectrum -----------------------------------------------------------

def test_pseudospectrum_trivial_zero_operator():
    kern = AlphaStableKernel(1, 2.0)
    grid = TruncatedGrid(1, 3)
    import scipy.sparse as sp
    eng = DenseEngine(sp.csc_matrix((len(grid), len(grid)), dtype=complex),
                      grid, kern, 0.5)
    assert pseudospectrum_distance(eng, 1.0, 64) == pytest.approx(1.0, rel=1e-12)


def test_pseudospectrum_translation_normal_operator():
    kern = AlphaStableKernel(2, 2.0)
    tr = TranslationMap([0.41421356237, 0.71828182845])
    eng = DenseEngine.from_linear_map(tr, kern, 0.1, 10)
    d1 = pseudospectrum_distance(eng, 1.0, 256)
    assert d1 == pytest.approx(1 - math.exp(-0.01), rel=5e-3)


def test_pseudospectrum_cat_converges_in_k():
    kern = AlphaStableKernel(2, 2.0)
    vals = []
    for k in (8, 16):
        eng = DenseEngine.from_linear_map(LinearToralMap(CAT), kern, 0.3, k)
        vals.append(pseudospectrum_distance(eng, 1.0, 128))
    assert vals[0] == pytest.approx(vals[1], rel=1e-6)


def test_pseudospectrum_angle_guard():
    kern = AlphaStableKernel(1, 2.0)
    eng = DenseEngine.from_linear_map(LinearToralMap([[2]]), kern, 0.3, 4)
    from torusdiss.errors import ConfigurationError
    with pytest.raises(ConfigurationError):
        pseudospectrum_distance(eng, 1.0, 32)


# -- bound_report -------------------------------------------------------------

def test_bound_report_cat_slopes_and_sandwich():
    kern = AlphaStableKernel(2, 2.0)
    rep = bound_report(LinearToralMap(CAT), kern, [0.1, 0.05], dense_cutoff=12,
                       correlation_sigma=1 / LAMBDA)
    assert rep.nln_lower_slope == pytest.approx(1.0 / math.log(LAMBDA), rel=1e-10)
    # s = s* = 1 default for automorphisms: slope (2+1+1)/|ln sigma|
    assert rep.corr_upper_slope == pytest.approx(4.0 / math.log(LAMBDA), rel=1e-10)
    assert rep.violations == ()
    for row in rep.rows:
        assert row.gb_lower <= row.tau_star.n <= row.gb_upper1


def test_bound_report_gb_upper1_exact():
    kern = AlphaStableKernel(2, 2.0)
    rep = bound_report(LinearToralMap(CAT), kern, [0.1, 0.02])
    for row in rep.rows:
        assert row.gb_upper1 == pytest.approx(row.eps ** -2.0 + 1.0, rel=1e-12)
        assert row.noise_cap == pytest.approx(row.eps ** -2.0, rel=1e-12)


def test_bound_report_weakmix_lower_on_translation():
    kern = AlphaStableKernel(1, 2.0)
    rep = bound_report(TranslationMap([0.7548776662]), kern,
                       [0.3, 0.1, 0.03], n_cap=10 ** 6)
    assert rep.violations == ()
    for row in rep.rows:
        want = (1 - math.exp(-1)) / (1 - math.exp(-row.eps ** 2)) - 1
        assert row.weakmix_lower == pytest.approx(want, rel=1e-12)
        assert row.weakmix_lower <= row.tau_star.n


def test_bound_report_expanding_defaults():
    kern = AlphaStableKernel(1, 1.0)
    rep = bound_report(LinearToralMap([[2]]), kern, [0.1])
    assert rep.s == 1.0 and rep.s_star == 0.0  # expanding maps take s* = 0
    assert rep.nln_lower_slope == pytest.approx(1.0 / math.log(2), rel=1e-12)


# -- correlations -------------------------------------------------------------

def test_correlations_doubling_hand_cases():
    kern = AlphaStableKernel(1, 2.0)
    eng = _lattice(LinearToralMap([[2]]), kern, 0.1)
    grid = TruncatedGrid(1, 4)
    e1 = FourierVector.from_modes(grid, {(1,): 1.0, (-1,): 1.0})
    series = correlation_series(eng, e1, e1, 4)
    vals = dict(series.noiseless)
    assert vals[0] == pytest.approx(2.0)
    for n in range(1, 5):
        assert vals[n] == 0.0
    # f on modes +-2 picks out n = 1 only
    f2 = FourierVector.from_modes(grid, {(2,): 1.0, (-2,): 1.0})
    series = correlation_series(eng, f2, e1, 4)
    vals = dict(series.noiseless)
    assert vals[0] == 0.0
    assert vals[1] == pytest.approx(2.0)
    assert vals[2] == vals[3] == 0.0
    # noisy variant carries the single-step noise factor g_hat(2 eps)
    noisy = dict(series.noisy)
    assert noisy[1] == pytest.approx(2.0 * math.exp(-0.04), rel=1e-12)


def test_correlations_cat_hand_case():
    kern = AlphaStableKernel(2, 2.0)
    eng = _lattice(LinearToralMap(CAT), kern, 0.1)
    grid = TruncatedGrid(2, 3)
    h = FourierVector.from_modes(grid, {(1, 0): 1.0, (-1, 0): 1.0})
    f = FourierVector.from_modes(grid, {(2, 1): 1.0, (-2, -1): 1.0})
    series = correlation_series(eng, f, h, 3)
    vals = dict(series.noiseless)
    assert vals[0] == 0.0
    assert vals[1] == pytest.approx(2.0)  # A(1,0) = (2,1)
    assert vals[2] == vals[3] == 0.0


def test_correlations_translation_no_decay():
    kern = AlphaStableKernel(2, 2.0)
    theta = (0.41421356237, 0.0)
    eng = _lattice(TranslationMap(theta), kern, 0.1)
    grid = TruncatedGrid(2, 2)
    h = FourierVector.from_modes(grid, {(1, 0): 1.0})
    f = FourierVector.from_modes(grid, {(-1, 0): 1.0})
    series = correlation_series(eng, f, h, 6)
    for n, c in series.noiseless:
        assert abs(c) == pytest.approx(1.0, rel=1e-12)  # pure phase, non-mixing
        assert c == pytest.approx(np.exp(2j * math.pi * n * theta[0]), rel=1e-12)


def test_correlation_operator_norm_domination():
    kern = AlphaStableKernel(2, 2.0)
    eng = _lattice(LinearToralMap(CAT), kern, 0.15)
    grid = TruncatedGrid(2, 2)
    rng = np.random.RandomState(3)
    f = FourierVector(grid, rng.standard_normal(len(grid)))
    h = FourierVector(grid, rng.standard_normal(len(grid)))
    series = correlation_series(eng, f, h, 10)
    for n, c in series.noisy:
        if n == 0:
            continue
        bound = series.f_norm * series.h_norm * eng.noisy_norm(n)
        assert abs(c) <= bound + 1e-12


def test_correlations_dense_match_lattice():
    kern = AlphaStableKernel(2, 2.0)
    cat = LinearToralMap(CAT)
    lat = _lattice(cat, kern, 0.2)
    den = DenseEngine.from_linear_map(cat, kern, 0.2, 12)
    f = FourierVector.from_modes(den.grid, {(1, 0): 1.0, (-1, 0): 1.0,
                                            (0, 1): 0.5, (0, -1): 0.5})
    lat_series = correlation_series(lat, f, f, 4)
    den_series = correlation_series(den, f, f, 4)
    for (n1, c1), (n2, c2) in zip(lat_series.noisy, den_series.noisy):
        assert c1 == pytest.approx(c2, abs=1e-10)


# -- decay_fit ----------------------------------------------------------------

def test_decay_fit_exact_geometric():
    series = [(n, 0.5 ** n) for n in range(1, 12)]
    fit = decay_fit(series)
    assert fit.model == "exponential"
    assert fit.sigma == pytest.approx(0.5, rel=1e-12)
    assert fit.r2["exponential"] == pytest.approx(1.0, abs=1e-12)


def test_decay_fit_exact_power():
    series = [(n, float(n) ** -2) for n in range(1, 12)]
    fit = decay_fit(series)
    assert fit.model == "power"
    assert fit.beta == pytest.approx(2.0, rel=1e-12)


def test_decay_fit_double_exponential():
    series = [(n, math.exp(-0.01 * 2.0 ** n)) for n in range(1, 12)]
    fit = decay_fit(series)
    assert fit.model == "double-exponential"
    assert fit.double_rate == pytest.approx(2.0, rel=1e-6)


def test_decay_fit_scaling_invariance():
    rng = np.random.RandomState(1)
    base = [(n, 0.6 ** n * (1 + 0.05 * rng.standard_normal())) for n in range(1, 15)]
    f1 = decay_fit(base)
    f2 = decay_fit([(n, 37.0 * v) for n, v in base])
    assert f1.model == f2.model
    assert f1.sigma == pytest.approx(f2.sigma, rel=1e-12)
    assert f1.beta == pytest.approx(f2.beta, rel=1e-12)
    assert f1.envelope_rate == pytest.approx(f2.envelope_rate, rel=1e-12)


def test_decay_fit_degenerate():
    fit = decay_fit([(n, 0.0) for n in range(10)])
    assert fit.model == "degenerate"


def test_envelope_rate_dominates_series():
    series = [(n, math.exp(-0.05 * 1.9 ** n)) for n in range(1, 14)]
    fit = decay_fit(series, reference=1.0)
    for n, v in series:
        assert v <= fit.envelope_rate ** n * (1 + 1e-12)


# -- supexp bound -------------------------------------------------------------

def test_supexp_bound_cat():
    kern = AlphaStableKernel(2, 2.0)
    grid = TruncatedGrid(2, 2)
    f = FourierVector.from_modes(grid, {(1, 0): 1.0})
    rep = supexp_bound_check(LinearToralMap(CAT), kern, 0.1, f, f,
                             range(1, 16), delta=0.5)
    assert not rep["skipped"]
    assert rep["holds"]
    assert rep["h_hat"] == pytest.approx(math.log(LAMBDA) / 2, abs=1e-10)


def test_supexp_bound_multimode():
    kern = AlphaStableKernel(2, 2.0)
    grid = TruncatedGrid(2, 2)
    f = FourierVector.from_modes(grid, {(1, 0): 1.0, (-1, 0): 1.0,
                                        (0, 1): 1.0, (0, -1): 1.0})
    rep = supexp_bound_check(LinearToralMap(CAT), kern, 0.1, f, f, range(1, 16))
    assert rep["holds"]


def test_supexp_bound_guards():
    kern1 = AlphaStableKernel(2, 1.0)
    grid = TruncatedGrid(2, 1)
    f = FourierVector.from_modes(grid, {(1, 0): 1.0})
    with pytest.raises(UnsupportedError):
        supexp_bound_check(LinearToralMap(CAT), kern1, 0.1, f, f, range(1, 4))
    kern2 = AlphaStableKernel(2, 2.0)
    rep = supexp_bound_check(LinearToralMap(CAT), kern2, 0.0, f, f, range(1, 4))
    assert rep["skipped"]
    with pytest.raises(UnsupportedError):
        supexp_bound_check(LinearToralMap([[1, 0], [0, 1]]), kern2, 0.1, f, f,
                           range(1, 4))
