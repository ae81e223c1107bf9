"""Dissipation times, rate fits, pseudospectral distances, bound calculators
and correlation series.

The dissipation time is the first n at which the propagator norm drops below
the threshold eta (default e^{-1}); its small-eps growth separates regular
maps (power law in 1/eps) from strongly mixing ones (logarithmic, with rate
constant tau / ln(1/eps)).  Everything here consumes the engines from
propagation.py and works in log space where norms underflow.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, UnsupportedError
from .fourier import l2_norm
from .maps import (LinearToralMap, SampledMap, TranslationMap,
                   entropy_report, ergodicity_test, expansion_profile)
from .noise import AlphaStableKernel, eigenvalue_on_mode, log_noise_norm
from .propagation import DenseEngine, LatticeOrbitEngine

ETA_DEFAULT = math.exp(-1.0)
PLATEAU_WINDOW = 50
PLATEAU_TOL = 1e-12


@dataclass(frozen=True)
class TauResult:
    """Dissipation time: a positive integer, INFINITE, or EXCEEDS_CAP."""
    kind: str              # "finite" | "infinite" | "exceeds_cap"
    n: int | None = None
    n_cap: int | None = None

    @property
    def finite(self):
        return self.kind == "finite"

    def __str__(self):
        if self.kind == "finite":
            return str(self.n)
        if self.kind == "infinite":
            return "INFINITE"
        return f"EXCEEDS_CAP({self.n_cap})"

    @classmethod
    def of(cls, n):
        return cls("finite", int(n))

    @classmethod
    def infinite(cls):
        return cls("infinite")

    @classmethod
    def exceeds(cls, n_cap):
        return cls("exceeds_cap", None, int(n_cap))


def _non_weakly_mixing(engine):
    m = getattr(engine, "map", None) or getattr(engine, "source_map", None)
    if isinstance(m, TranslationMap):
        return True
    if isinstance(m, LinearToralMap) and m.is_automorphism:
        return not ergodicity_test(m)
    return False


def dissipation_time(engine, mode="noisy", eta=ETA_DEFAULT, n_cap=10 ** 6):
    """First n with ||T_eps^n|| < eta (noisy) or ||G U^n G|| < eta (coarse).

    The noisy norm is strictly decreasing (submultiplicativity against
    ||G_eps|| < 1), so the crossing is located by exponential search plus
    bisection.  The coarse mode scans linearly; INFINITE is declared only
    with a certificate: either the engine proves n-independence of the norm,
    or the norm plateaus to 1e-12 over 50 steps on a non-weakly-mixing map.
    """
    if not 0 < eta < 1:
        raise ConfigurationError("eta must lie in (0,1)", field="run.eta")
    if n_cap < 1:
        raise ConfigurationError("n_cap must be >= 1", field="run.n_cap")
    log_eta = math.log(eta)
    if mode == "noisy":
        return _noisy_crossing(engine, log_eta, n_cap)
    if mode == "coarse":
        return _coarse_crossing(engine, log_eta, n_cap)
    raise ValueError(f"unknown mode {mode!r}")


def _noisy_crossing(engine, log_eta, n_cap):
    if engine.noisy_log_norm(1) < log_eta:
        return TauResult.of(1)
    hi = 1
    while True:
        hi = min(hi * 2, n_cap)
        if engine.noisy_log_norm(hi) < log_eta:
            break
        if hi == n_cap:
            return TauResult.exceeds(n_cap)
    lo = hi // 2 if hi > 1 else 1  # log_norm(lo) >= log_eta
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if engine.noisy_log_norm(mid) < log_eta:
            hi = mid
        else:
            lo = mid
    return TauResult.of(hi)


def _coarse_crossing(engine, log_eta, n_cap):
    if getattr(engine, "coarse_constant", False):
        return TauResult.of(1) if engine.coarse_log_norm(1) < log_eta \
            else TauResult.infinite()
    window = []
    nwm = _non_weakly_mixing(engine)
    for n in range(1, n_cap + 1):
        lv = engine.coarse_log_norm(n)
        if lv < log_eta:
            return TauResult.of(n)
        window.append(math.exp(lv))
        if len(window) > PLATEAU_WINDOW:
            window.pop(0)
        if nwm and len(window) == PLATEAU_WINDOW and \
                max(window) - min(window) < PLATEAU_TOL:
            return TauResult.infinite()
    return TauResult.exceeds(n_cap)


@dataclass(frozen=True)
class DissipationReport:
    eps: float
    tau_star: TauResult
    tau_tilde_star: TauResult | None
    eta: float
    n_cap: int
    engine: str
    curves: dict = field(default_factory=dict)


def dissipation_report(engine, modes=("noisy", "coarse"), eta=ETA_DEFAULT,
                       n_cap=10 ** 6, curve_n=0):
    tau = dissipation_time(engine, "noisy", eta, n_cap) if "noisy" in modes else None
    tau_t = dissipation_time(engine, "coarse", eta, n_cap) if "coarse" in modes else None
    curves = {}
    if curve_n:
        for m in modes:
            curves[m] = engine.norm_curve(curve_n, m)
    return DissipationReport(engine.eps, tau, tau_t, eta, n_cap, engine.name, curves)


# ---------------------------------------------------------------------------
# asymptotic model fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    model: str                  # "logarithmic" | "power" | "none"
    r_star: float | None        # slope of tau vs ln(1/eps)
    intercept: float | None
    coefficient: float | None   # C in tau ~ C eps^-beta
    beta: float | None
    r2_log: float | None
    r2_power: float | None
    eps_range: tuple
    n_points: int
    sensitivity: dict = field(default_factory=dict)


def _r2(x, y, slope, intercept):
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        return 1.0
    return 1.0 - float(np.sum(resid ** 2)) / ss_tot


def _fit_linear(x, y):
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept), _r2(x, y, slope, intercept)


def rate_fit(pairs, trim_largest_third=True):
    """Fit tau(eps) against the logarithmic and power-law models.

    `pairs` is a list of (eps, tau) with integer tau, or DissipationReports
    (whose tau_star is used).  The asymptotic statements under test are
    eps -> 0 limits,
    so the largest-eps third of the grid is excluded from the primary fit;
    the full-grid slope is kept as a sensitivity figure.
    """
    data = []
    for p in pairs:
        if isinstance(p, DissipationReport):
            if p.tau_star is not None and p.tau_star.finite:
                data.append((p.eps, p.tau_star.n))
        else:
            eps, tau = p
            if isinstance(tau, TauResult):
                if tau.finite:
                    data.append((eps, tau.n))
            else:
                data.append((eps, tau))
    if len(data) < 4:
        if not data:
            return RateFit("none", None, None, None, None, None, None,
                           (None, None), 0)
        raise ConfigurationError("rate fit needs at least 4 finite tau values",
                                 field="epsilon.count")
    data.sort(key=lambda t: -t[0])
    full = data
    trimmed = data
    if trim_largest_third:
        drop = len(data) // 3
        if len(data) - drop >= 4:
            trimmed = data[drop:]

    def models(subset):
        eps = np.array([e for e, _ in subset])
        tau = np.array([t for _, t in subset], dtype=float)
        x = np.log(1.0 / eps)
        r, c, r2l = _fit_linear(x, tau)
        b, lc, r2p = _fit_linear(x, np.log(tau))
        return r, c, r2l, b, math.exp(lc), r2p

    r, c, r2l, beta, coef, r2p = models(trimmed)
    r_full = models(full)[0]
    model = "logarithmic" if r2l >= r2p else "power"
    return RateFit(model, r, c, coef, beta, r2l, r2p,
                   (min(e for e, _ in data), max(e for e, _ in data)),
                   len(trimmed),
                   {"r_star_full_grid": r_full,
                    "r_star_shift": abs(r - r_full),
                    "trimmed_points": len(trimmed),
                    "full_points": len(full)})


# ---------------------------------------------------------------------------
# pseudospectrum distance
# ---------------------------------------------------------------------------

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def pseudospectrum_distance(engine, r=1.0, angle_samples=256,
                            refine_rounds=3, refine_points=8, refine_top=3):
    """d_eps(r) = 1 / sup_{|lam| = r} ||(lam - T_eps)^{-1}|| on the truncation.

    The circle is sampled uniformly, then refined with golden-ratio offsets
    around the smallest values: d is a minimum of sigma_min over the circle
    and sharp dips (spectrum nearly touching the circle) would be missed by
    uniform samples alone.  Deterministic schedule.
    """
    if angle_samples < 64:
        raise ConfigurationError("angle_samples must be >= 64",
                                 field="analysis.angle_samples")
    if not 0 < r <= 1.0 + 1e-12:
        raise ValueError("radius must lie in (0, 1]")

    evaluated = {}

    def val(theta):
        theta = theta % (2 * math.pi)
        if theta not in evaluated:
            lam = r * complex(math.cos(theta), math.sin(theta))
            evaluated[theta] = engine.resolvent_sigma_min(lam)
        return evaluated[theta]

    thetas = [2 * math.pi * j / angle_samples for j in range(angle_samples)]
    for t in thetas:
        val(t)
    spacing = 2 * math.pi / angle_samples
    for _ in range(refine_rounds):
        best = sorted(evaluated.items(), key=lambda kv: kv[1])[:refine_top]
        for theta0, _ in best:
            for i in range(1, refine_points + 1):
                offset = ((i * GOLDEN) % 1.0) * 2.0 - 1.0
                val(theta0 + offset * spacing)
        spacing /= 5.0
    return min(evaluated.values())


# ---------------------------------------------------------------------------
# bound calculators (pseudospectral sandwich plus slope references)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundRow:
    eps: float
    tau_star: TauResult
    tau_tilde_star: TauResult | None
    gb_lower: float | None          # (1 - 1/e) / d_eps(1)
    gb_upper1: float                # 1/|ln ||G_eps||| + 1
    gb_upper2: float | None         # inf_r ln(e/d_eps(r)) / |ln r|
    d_eps_1: float | None
    noise_cap: float                # eps^-alpha reference
    weakmix_lower: float | None     # (1-1/e)/(1 - g_hat(eps)) - 1, translations


@dataclass(frozen=True)
class BoundReport:
    rows: tuple
    nln_lower_slope: float | None
    nln_case: str
    corr_upper_slope: float | None
    s: float
    s_star: float
    sigma: float | None
    violations: tuple


def _default_regularity(torus_map, s, s_star):
    # Anosov-type runs take s = s_* = 1; expanding maps allow s_* = 0
    if isinstance(torus_map, LinearToralMap) and not torus_map.is_automorphism:
        s = 1.0 if s is None else s
        s_star = 0.0 if s_star is None else s_star
    else:
        s = 1.0 if s is None else s
        s_star = 1.0 if s_star is None else s_star
    return float(s), float(s_star)


def bound_report(torus_map, kernel, eps_grid, correlation_sigma=None,
                 s=None, s_star=None, dense_cutoff=None, eta=ETA_DEFAULT,
                 n_cap=10 ** 6, angle_samples=128, r_grid_points=16):
    """Evaluate every bound formula across the eps grid and flag sandwich
    violations (gb_lower <= tau* <= gb_upper1) as they are proven facts."""
    s, s_star = _default_regularity(torus_map, s, s_star)
    profile = expansion_profile(torus_map)
    alpha = kernel.alpha if kernel.alpha is not None else 2.0
    a1 = min(alpha, 1.0)
    if profile.df_norm > 1.0:
        rate = profile.df_norm
        if profile.df_inverse_norm is not None and profile.df_inverse_norm > 1.0:
            rate = min(rate, profile.df_inverse_norm)
        nln_slope = a1 / math.log(rate)
        nln_case = "logarithmic-lower"
    else:
        nln_slope = None
        nln_case = "power-law-lower"   # tau* >~ eps^-(alpha ^ 1)

    corr_slope = None
    if correlation_sigma is not None:
        if not 0 < correlation_sigma < 1:
            raise ConfigurationError("correlation sigma must lie in (0,1)",
                                     field="analysis.sigma")
        corr_slope = (torus_map.d + s + s_star) / abs(math.log(correlation_sigma))

    rows = []
    violations = []
    for eps in eps_grid:
        engine = _lattice_or_dense(torus_map, kernel, eps, dense_cutoff)
        tau = dissipation_time(engine, "noisy", eta, n_cap)
        tau_t = dissipation_time(engine, "coarse", eta, n_cap)
        gb_upper1 = 1.0 / abs(log_noise_norm(kernel, eps)) + 1.0
        gb_lower = gb_upper2 = d1 = None
        if dense_cutoff is not None:
            dengine = _dense_engine(torus_map, kernel, eps, dense_cutoff)
            d1 = pseudospectrum_distance(dengine, 1.0, angle_samples)
            gb_lower = (1.0 - math.exp(-1.0)) / d1
            gb_upper2 = _second_upper(dengine, kernel, eps, angle_samples,
                                      r_grid_points)
        weakmix = None
        if isinstance(torus_map, TranslationMap):
            k1 = tuple(1 if i == 0 else 0 for i in range(torus_map.d))
            defect = 1.0 - eigenvalue_on_mode(kernel, eps, k1)
            weakmix = (1.0 - math.exp(-1.0)) / defect - 1.0
        rows.append(BoundRow(eps, tau, tau_t, gb_lower, gb_upper1, gb_upper2,
                             d1, eps ** (-alpha), weakmix))
        if tau.finite:
            if gb_lower is not None and gb_lower > tau.n + 1e-9:
                violations.append((eps, "gb_lower", gb_lower, tau.n))
            if tau.n > gb_upper1 + 1e-9:
                violations.append((eps, "gb_upper1", gb_upper1, tau.n))
            if weakmix is not None and weakmix > tau.n + 1e-9:
                violations.append((eps, "weakmix_lower", weakmix, tau.n))
    return BoundReport(tuple(rows), nln_slope, nln_case, corr_slope,
                       s, s_star, correlation_sigma, tuple(violations))


def _lattice_or_dense(torus_map, kernel, eps, dense_cutoff):
    if isinstance(torus_map, (LinearToralMap, TranslationMap)):
        return LatticeOrbitEngine(torus_map, kernel, eps)
    if dense_cutoff is None:
        raise ConfigurationError("sampled maps need a dense cutoff K",
                                 field="run.grid_k")
    return DenseEngine.from_sampled_map(torus_map, kernel, eps, dense_cutoff)


def _dense_engine(torus_map, kernel, eps, cutoff):
    if isinstance(torus_map, (LinearToralMap, TranslationMap)):
        return DenseEngine.from_linear_map(torus_map, kernel, eps, cutoff)
    return DenseEngine.from_sampled_map(torus_map, kernel, eps, cutoff)


def _second_upper(dengine, kernel, eps, angle_samples, r_grid_points):
    # geometric r-grid in (r_sp estimate, 1); exact infimum is not needed
    r_sp = 0.05
    if isinstance(getattr(dengine, "source_map", None), TranslationMap):
        r_sp = min(0.95, math.exp(log_noise_norm(kernel, eps)) * 1.02)
    rs = np.geomspace(max(r_sp, 0.05), 0.98, r_grid_points)
    best = math.inf
    for r in rs:
        # coarse angular scan: the infimum over r tolerates modest resolution
        d_r = pseudospectrum_distance(dengine, float(r), max(64, angle_samples // 4),
                                      refine_rounds=1)
        if d_r <= 0:
            continue
        bound = math.log(math.e / d_r) / abs(math.log(r))
        best = min(best, bound)
    return best if best < math.inf else None


# ---------------------------------------------------------------------------
# correlation functions and decay fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorrelationSeries:
    f_norm: float
    h_norm: float
    eps: float | None
    noiseless: tuple      # of (n, complex C(n))
    noisy: tuple | None   # of (n, complex C_eps(n))

    def values(self, which="noiseless"):
        data = self.noiseless if which == "noiseless" else self.noisy
        return [] if data is None else list(data)


def correlation_series(engine, f, h, n_max, mode="both"):
    """C_{f,h}(n) = m(f U^n h) and its noisy version m(f T_eps^n h).

    On the lattice engine the sums are exact: U^n h concentrates on the
    modes A^n k, so C(n) = sum_k h_hat(k) f_hat(-A^n k), with the orbit
    product of noise factors inserted for the noisy variant.
    """
    want_noiseless = mode in ("noiseless", "both")
    want_noisy = mode in ("noisy", "both")
    if isinstance(engine, LatticeOrbitEngine):
        noiseless, noisy = _correlations_lattice(engine, f, h, n_max,
                                                 want_noiseless, want_noisy)
    else:
        noiseless, noisy = _correlations_dense(engine, f, h, n_max,
                                               want_noiseless, want_noisy)
    return CorrelationSeries(l2_norm(f), l2_norm(h), engine.eps,
                             tuple(noiseless) if noiseless is not None else None,
                             tuple(noisy) if noisy is not None else None)


def _correlations_lattice(engine, f, h, n_max, want_noiseless, want_noisy):
    supp_h = h.support()
    noiseless = [] if want_noiseless else None
    noisy = [] if want_noisy else None
    for n in range(0, n_max + 1):
        c0 = 0j
        ce = 0j
        for k, hk in supp_h.items():
            img = engine.mode_power(k, n)
            fk = f.coeff(tuple(-v for v in img))
            if fk == 0:
                continue
            term = hk * fk
            if engine.is_translation:
                term *= engine.map.mode_phase(k, n)
            if want_noiseless:
                c0 += term
            if want_noisy:
                ce += term * engine.orbit_product(k, n)
        if want_noiseless:
            noiseless.append((n, c0))
        if want_noisy:
            noisy.append((n, ce))
    return noiseless, noisy


def _correlations_dense(engine, f, h, n_max, want_noiseless, want_noisy):
    grid = engine.grid
    if f.grid.modes != grid.modes or h.grid.modes != grid.modes:
        raise ConfigurationError("observables must live on the engine grid")
    neg = np.array([grid.index[tuple(-v for v in k)] for k in grid.modes])
    f_neg = f.coeffs[neg]

    def run(matrix):
        out = [(0, complex(np.dot(f_neg, h.coeffs)))]
        w = h.coeffs.copy()
        for n in range(1, n_max + 1):
            w = matrix @ w
            out.append((n, complex(np.dot(f_neg, w))))
        return out

    noiseless = run(engine.u) if want_noiseless else None
    noisy = run(engine.t) if want_noisy else None
    return noiseless, noisy


@dataclass(frozen=True)
class DecayFit:
    model: str                      # "exponential" | "power" | "double-exponential" | "degenerate"
    sigma: float | None             # exponential rate
    beta: float | None              # power exponent
    double_rate: float | None       # lambda in C exp(-c lambda^n)
    double_c: float | None
    r2: dict = field(default_factory=dict)
    amplitudes: dict = field(default_factory=dict)
    envelope_rate: float | None = None
    n_used: int = 0


def decay_fit(series, which="noiseless", reference=None):
    """Fit |C(n)| against exponential, power and double-exponential decay.

    Selected by R^2, each computed in its own fitted coordinates; all three
    are reported.  `envelope_rate` is the smallest geometric rate whose
    envelope reference * sigma^n dominates the whole series: for bound
    checks it is the meaningful rate, since a least-squares fit through a
    super-exponential segment underestimates the asymptotic decay.
    """
    if isinstance(series, CorrelationSeries):
        data = series.values(which)
        if reference is None:
            reference = series.f_norm * series.h_norm
    else:
        data = list(series)
    pts = [(n, abs(c)) for n, c in data if n >= 1 and abs(c) > 1e-300]
    if len(pts) < 6:
        return DecayFit("degenerate", None, None, None, None,
                        n_used=len(pts))
    ns = np.array([n for n, _ in pts], dtype=float)
    vs = np.array([v for _, v in pts])
    logv = np.log(vs)

    slope, inter, r2_exp = _fit_linear(ns, logv)
    sigma = math.exp(slope)
    a_exp = math.exp(inter)

    slope_p, inter_p, r2_pow = _fit_linear(np.log(ns), logv)
    beta = -slope_p
    a_pow = math.exp(inter_p)

    # double exponential |C| = A exp(-c lam^n): consecutive log-ratios
    # ln(C_n/C_{n+1}) = c (lam - 1) lam^n are scale-free and log-linear in n
    r2_dbl, lam, c_dbl = None, None, None
    ratio_n, ratio_v = [], []
    for i in range(len(pts) - 1):
        if ns[i + 1] == ns[i] + 1 and vs[i] > vs[i + 1]:
            ratio_n.append(ns[i])
            ratio_v.append(logv[i] - logv[i + 1])
    if len(ratio_n) >= 3:
        s_d, i_d, r2_dbl = _fit_linear(np.array(ratio_n), np.log(ratio_v))
        lam = math.exp(s_d)
        if lam > 1.0:
            c_dbl = math.exp(i_d) / (lam - 1.0)

    ref = reference if reference and reference > 0 else float(vs.max())
    env = max((v / ref) ** (1.0 / n) for n, v in pts)

    scores = {"exponential": r2_exp, "power": r2_pow}
    if r2_dbl is not None:
        scores["double-exponential"] = r2_dbl
    model = max(scores, key=lambda k: scores[k])
    return DecayFit(model, sigma, beta, lam, c_dbl,
                    r2={"exponential": r2_exp, "power": r2_pow,
                        "double-exponential": r2_dbl},
                    amplitudes={"exponential": a_exp, "power": a_pow,
                                "series_max": float(vs.max())},
                    envelope_rate=float(env), n_used=len(pts))


def supexp_bound_check(torus_map, kernel, eps, f, h, n_range, delta=0.5):
    """Check |C_eps(n)| <= ||f|| ||h|| exp(-eps^2 e^{2(1-delta)h_hat n}).

    Gaussian noise only; the reference rate is the dimensionally averaged
    entropy h_hat of the (ergodic) automorphism.  Comparisons run in log
    space; zero correlations pass trivially.
    """
    if not isinstance(kernel, AlphaStableKernel) or kernel.alpha != 2.0:
        raise UnsupportedError("the super-exponential bound is stated for Gaussian noise")
    if not (isinstance(torus_map, LinearToralMap) and torus_map.is_automorphism):
        raise UnsupportedError("bound check requires a toral automorphism")
    if not ergodicity_test(torus_map):
        raise UnsupportedError("bound check requires an ergodic automorphism")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0,1)")
    if eps == 0:
        return {"skipped": True, "reason": "bound degenerates at eps = 0"}
    h_hat = entropy_report(torus_map).h_hat
    engine = LatticeOrbitEngine(torus_map, kernel, eps)
    series = correlation_series(engine, f, h, max(n_range), mode="noisy")
    log_ff = math.log(series.f_norm * series.h_norm)
    margins = []
    holds = True
    noisy = dict(series.noisy)
    for n in n_range:
        c = abs(noisy[n])
        bound_log = log_ff - eps ** 2 * math.exp(2.0 * (1.0 - delta) * h_hat * n)
        if c == 0:
            margins.append((n, math.inf))
            continue
        margin = bound_log - math.log(c)
        margins.append((n, margin))
        if margin < -1e-12:
            holds = False
    return {"skipped": False, "holds": holds, "h_hat": h_hat, "delta": delta,
            "eps": eps, "margins": margins}
