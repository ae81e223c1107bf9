"""Noise kernels through their Fourier symbols, and the related estimates.

The workhorse is the symmetric alpha-stable family
    g_hat(xi) = exp(-(xi^T Q xi)^(alpha/2)),   alpha in (0, 2],
with Q positive definite (alpha = 2 is the Gaussian).  Convolution by the
width-eps kernel acts diagonally on Fourier modes with eigenvalues
g_hat(eps*k), so the operator norm on the zero-mean space is the lattice
supremum sup_{k != 0} |g_hat(eps*k)| -- strictly below 1 for every eps > 0.

Custom symbols are supported as radial tables with linear interpolation;
a decay envelope is then required to certify lattice suprema.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import lattice
from .errors import ConfigurationError, UnsupportedError
from .fourier import FourierVector

TWO_PI_SQ = 2.0 * math.pi ** 2


def _as_matrix(q, d):
    if q is None:
        return None
    m = np.asarray(q, dtype=float)
    if m.shape != (d, d):
        raise ConfigurationError(f"Q must be {d}x{d}", field="kernel.q")
    if not np.allclose(m, m.T):
        raise ConfigurationError("Q must be symmetric", field="kernel.q")
    if np.linalg.eigvalsh(m).min() <= 0:
        raise ConfigurationError("Q must be positive definite", field="kernel.q")
    return m


class AlphaStableKernel:
    """Symmetric alpha-stable noise generating density, given by its symbol."""

    kind = "alpha-stable"

    def __init__(self, d, alpha, q=None):
        if not 0 < alpha <= 2:
            raise ConfigurationError("alpha must lie in (0, 2]", field="kernel.alpha")
        self.d = int(d)
        self.alpha = float(alpha)
        m = _as_matrix(q, self.d)
        self.q_is_identity = m is None or np.array_equal(m, np.eye(self.d))
        self.q = np.eye(self.d) if m is None else m
        self._lam_min = float(np.linalg.eigvalsh(self.q).min())

    def q_value(self, xi):
        """xi^T Q xi; exact integer arithmetic when Q = I and xi is integral."""
        if self.q_is_identity and all(isinstance(x, int) for x in xi):
            return sum(x * x for x in xi)
        v = np.asarray(xi, dtype=float)
        return float(v @ self.q @ v)

    def log_symbol(self, xi):
        return -float(self.q_value(xi)) ** (self.alpha / 2.0)

    def symbol(self, xi):
        return math.exp(self.log_symbol(xi))

    def envelope(self, r):
        """Monotone bound on sup_{|xi| >= r} g_hat(xi)."""
        return math.exp(-((self._lam_min * r * r) ** (self.alpha / 2.0)))

    def min_lattice_qform(self):
        """Exact min over nonzero integer k of k^T Q k."""
        q = None if self.q_is_identity else self.q.tolist()
        value, argmin = lattice.min_orbit_sum(
            [lattice.identity_matrix(self.d)], 2.0, Q=q)
        return value, argmin


class CustomSymbolKernel:
    """Radial symbol from a sampled table, with optional decay envelope."""

    kind = "custom-symbol"
    alpha = None

    def __init__(self, d, radii, values, envelope=None):
        radii = np.asarray(radii, dtype=float)
        values = np.asarray(values, dtype=float)
        if radii.ndim != 1 or radii.shape != values.shape or len(radii) < 2:
            raise ConfigurationError("symbol table needs matching 1-d radius/value arrays",
                                     field="kernel.table")
        if radii[0] != 0.0 or values[0] != 1.0:
            raise ConfigurationError("symbol table must start at (0, 1)", field="kernel.table")
        if np.any(np.diff(radii) <= 0):
            raise ConfigurationError("radii must be strictly increasing", field="kernel.table")
        if np.any(np.abs(values) > 1.0):
            raise ConfigurationError("symbol values must lie in [-1, 1]", field="kernel.table")
        self.d = int(d)
        self.radii = radii
        self.values = values
        self._envelope = envelope
        self.q_is_identity = True
        self.q = np.eye(self.d)

    def symbol(self, xi):
        r = math.sqrt(sum(float(x) ** 2 for x in xi))
        if r >= self.radii[-1]:
            return float(self.values[-1])
        return float(np.interp(r, self.radii, self.values))

    def log_symbol(self, xi):
        s = abs(self.symbol(xi))
        return math.log(s) if s > 0 else -math.inf

    def envelope(self, r):
        if self._envelope is None:
            raise ConfigurationError(
                "custom symbol lacks a decay envelope; lattice suprema cannot be certified",
                field="kernel.envelope")
        return float(self._envelope(r))

    @property
    def has_envelope(self):
        return self._envelope is not None


@dataclass(frozen=True)
class MomentEstimate:
    alpha: float
    value: float
    method: str  # "analytic" | "quadrature"


def symbol_at(kernel, xi):
    """g_hat(xi)."""
    return kernel.symbol(tuple(xi))


def eigenvalue_on_mode(kernel, eps, k):
    """Noise eigenvalue g_hat(eps*k) on the mode e_k; equals 1 at eps = 0."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    if eps == 0.0:
        return 1.0
    return kernel.symbol(tuple(eps * float(x) for x in k))


def log_noise_norm(kernel, eps, policy=None):
    """ln ||G_eps|| = ln sup_{k != 0} |g_hat(eps*k)| (exact in log space)."""
    if eps <= 0:
        raise ValueError("eps must be > 0")
    if isinstance(kernel, AlphaStableKernel):
        # radially decreasing in the Q-norm: the sup sits at the Q-shortest k
        qmin, _ = kernel.min_lattice_qform()
        return -(eps ** kernel.alpha) * float(qmin) ** (kernel.alpha / 2.0)
    best, _ = lattice.sup_orbit_product(
        kernel.symbol, kernel.envelope, eps,
        [lattice.identity_matrix(kernel.d)], policy)
    return math.log(best)


def noise_norm(kernel, eps, policy=None):
    """||G_eps|| = sup_{k != 0} |g_hat(eps*k)|, certified; < 1 for eps > 0."""
    return math.exp(log_noise_norm(kernel, eps, policy))


def apply_noise(kernel, eps, f):
    """G_eps f: multiply each coefficient by g_hat(eps*k)."""
    if eps == 0.0:
        return FourierVector(f.grid, f.coeffs.copy())
    mult = np.array([eigenvalue_on_mode(kernel, eps, k) for k in f.grid.modes])
    return FourierVector(f.grid, f.coeffs * mult)


def noise_diagonal(kernel, eps, grid):
    return np.array([eigenvalue_on_mode(kernel, eps, k) for k in grid.modes])


def smoothing_defect(kernel, eps, f):
    """||G_eps f - f|| = (sum_k (1 - g_hat(eps*k))^2 |f_hat(k)|^2)^(1/2)."""
    if eps == 0.0:
        return 0.0
    mult = np.array([1.0 - eigenvalue_on_mode(kernel, eps, k) for k in f.grid.modes])
    return float(np.linalg.norm(mult * f.coeffs))


# ---------------------------------------------------------------------------
# moments of the generating density
# ---------------------------------------------------------------------------

def _gaussian_sigma(kernel):
    """Spatial covariance of the Gaussian kernel: symbol e^{-xi^T Q xi}
    corresponds to the density N(0, Q/(2 pi^2))."""
    return kernel.q / TWO_PI_SQ


def moment(kernel, alpha_prime, method="auto", box=20.0):
    """M_{alpha'} = int |x|^{alpha'} g(x) dx of the generating density.

    Gaussian kernels are handled analytically (alpha'=2 for any Q, any
    alpha' for isotropic Q) or by direct quadrature of the known density
    (d <= 2).  For alpha < 2 the density is recovered by a numerical
    inverse transform (d = 1 only) and moments exist only for alpha' < alpha.
    """
    if alpha_prime == 0:
        return MomentEstimate(0.0, 1.0, "analytic")
    if not 0 < alpha_prime <= 2:
        raise ValueError("alpha' must lie in (0, 2]")
    if not isinstance(kernel, AlphaStableKernel):
        raise UnsupportedError("moments require an invertible symbol representation")

    if kernel.alpha == 2.0:
        sigma = _gaussian_sigma(kernel)
        if method in ("auto", "analytic"):
            if alpha_prime == 2.0:
                return MomentEstimate(2.0, float(np.trace(sigma)), "analytic")
            evals = np.linalg.eigvalsh(sigma)
            if np.allclose(evals, evals[0]):
                s2 = float(evals[0])
                d = kernel.d
                val = (2.0 * s2) ** (alpha_prime / 2.0) * \
                    math.gamma((d + alpha_prime) / 2.0) / math.gamma(d / 2.0)
                return MomentEstimate(alpha_prime, val, "analytic")
            if method == "analytic":
                raise UnsupportedError("analytic moment needs alpha'=2 or isotropic Q")
        return _gaussian_moment_quadrature(kernel, alpha_prime)

    if alpha_prime >= kernel.alpha:
        raise UnsupportedError(
            f"M_{alpha_prime} diverges for the alpha-stable kernel with alpha={kernel.alpha}")
    if kernel.d != 1:
        raise UnsupportedError("stable-density inversion implemented for d = 1 only")
    return _stable_moment_quadrature(kernel, alpha_prime, box)


def _gaussian_moment_quadrature(kernel, alpha_prime):
    from scipy import integrate
    sigma = _gaussian_sigma(kernel)
    d = kernel.d
    if d == 1:
        s2 = float(sigma[0, 0])
        pdf = lambda x: math.exp(-x * x / (2 * s2)) / math.sqrt(2 * math.pi * s2)
        val, _ = integrate.quad(lambda x: abs(x) ** alpha_prime * pdf(x),
                                -np.inf, np.inf)
        return MomentEstimate(alpha_prime, float(val), "quadrature")
    if d == 2:
        # rotate to principal axes; |x| is rotation invariant
        evals = np.linalg.eigvalsh(sigma)
        s1, s2 = float(evals[0]), float(evals[1])
        L = 12.0 * math.sqrt(max(s1, s2))
        def integrand(y, x):
            r = math.hypot(x, y)
            return r ** alpha_prime * \
                math.exp(-x * x / (2 * s1) - y * y / (2 * s2)) / \
                (2 * math.pi * math.sqrt(s1 * s2))
        val, _ = integrate.dblquad(integrand, -L, L, -L, L, epsabs=1e-13)
        return MomentEstimate(alpha_prime, float(val), "quadrature")
    raise UnsupportedError("moment quadrature implemented for d <= 2")


def _stable_moment_quadrature(kernel, alpha_prime, box):
    from scipy import integrate
    q = float(kernel.q[0, 0])
    alpha = kernel.alpha

    def density(x):
        val, _ = integrate.quad(
            lambda xi: math.cos(2 * math.pi * x * xi) *
            math.exp(-((q * xi * xi) ** (alpha / 2.0))),
            0, np.inf, limit=400)
        return 2.0 * val

    val, _ = integrate.quad(lambda x: 2.0 * x ** alpha_prime * density(x),
                            0, box, limit=400)
    return MomentEstimate(alpha_prime, float(val), "quadrature")


@lru_cache(maxsize=None)
def cosine_bound_constant(alpha):
    """Smallest C with 1 - cos(2 pi x) <= C |x|^alpha for all real x.

    Exactly 2 pi^2 at alpha = 2 (the small-x limit); below 2 the supremum
    is interior and found numerically.
    """
    if alpha == 2.0:
        return TWO_PI_SQ
    xs = np.logspace(-4, 0.5, 4001)
    vals = (1.0 - np.cos(2 * math.pi * xs)) / xs ** alpha
    i = int(np.argmax(vals))
    lo, hi = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
    phi = (math.sqrt(5) - 1) / 2
    f = lambda x: (1.0 - math.cos(2 * math.pi * x)) / x ** alpha
    a, b = lo, hi
    c, d_ = b - phi * (b - a), a + phi * (b - a)
    for _ in range(200):
        if f(c) > f(d_):
            b, d_ = d_, c
            c = b - phi * (b - a)
        else:
            a, c = c, d_
            d_ = a + phi * (b - a)
    x_star = 0.5 * (a + b)
    return float(max(f(x_star), vals[i]))


def moment_fourier_check(kernel, alpha_prime, xi_samples, moment_estimate=None):
    """Verify 0 <= 1 - g_hat(xi) <= C_a M_a |xi|^a at the sampled points.

    Returns a report with the worst margin; for alpha' = 2 the small-|xi|
    ratios (1 - g_hat)/|xi|^2 are included (they approach 1 for Q = I).
    """
    m = moment_estimate if moment_estimate is not None else moment(kernel, alpha_prime)
    c_a = cosine_bound_constant(alpha_prime)
    worst = -math.inf
    worst_xi = None
    nonneg_ok = True
    ratios = []
    for xi in xi_samples:
        xi = tuple(float(x) for x in xi)
        r = math.sqrt(sum(x * x for x in xi))
        defect = 1.0 - kernel.symbol(xi)
        if defect < -1e-15:
            nonneg_ok = False
        excess = defect - c_a * m.value * r ** alpha_prime
        if excess > worst:
            worst, worst_xi = excess, xi
        if alpha_prime == 2.0 and 0 < r < 0.2:
            ratios.append((r, defect / (r * r)))
    return {
        "alpha": alpha_prime,
        "c_alpha": c_a,
        "moment": m,
        "holds": nonneg_ok and worst <= 1e-12,
        "max_excess": worst,
        "worst_xi": worst_xi,
        "small_xi_ratios": sorted(ratios),
    }


# ---------------------------------------------------------------------------
# Poisson-summation check: eps^d sum_k g_hat(eps k)^2 vs int g_hat(xi)^2 dxi
# ---------------------------------------------------------------------------

def symbol_square_integral(kernel):
    """int g_hat(xi)^2 dxi, closed form for alpha-stable kernels.

    Substituting eta = Q^(1/2) xi reduces to the isotropic integral:
    det(Q)^(-1/2) * S_{d-1} * Gamma(d/alpha) / (alpha * 2^(d/alpha)).
    """
    if not isinstance(kernel, AlphaStableKernel):
        raise UnsupportedError("closed-form integral requires an alpha-stable kernel")
    d, alpha = kernel.d, kernel.alpha
    detq = float(np.linalg.det(kernel.q))
    s_sphere = 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)
    radial = math.gamma(d / alpha) / (alpha * 2.0 ** (d / alpha))
    return s_sphere * radial / math.sqrt(detq)


def poisson_sum_check(kernel, eps_grid, order=None, dps=60):
    """Discrepancy |eps^d sum g_hat(eps k)^2 - int g_hat^2| per eps.

    Computed in extended precision (the true discrepancies for Gaussian
    kernels are far below double roundoff).  Reports monotone shrinking and,
    when `order` is given, whether the decay is at least that power of eps.
    """
    import mpmath as mp
    if not isinstance(kernel, AlphaStableKernel):
        raise UnsupportedError("poisson check requires an alpha-stable kernel")
    if kernel.d > 2:
        raise UnsupportedError("poisson check implemented for d <= 2")
    integral = symbol_square_integral(kernel)
    d, alpha = kernel.d, kernel.alpha
    lam_min = kernel._lam_min
    entries = []
    with mp.workdps(dps):
        mp_integral = _mp_symbol_square_integral(kernel, mp)
        for eps in eps_grid:
            target = mp.mpf(10) ** (-(dps + 10))
            # exp(-2 eps^a (lam r^2)^(a/2)) < target  =>  radius bound
            r_bound = (float(mp.log(1 / target)) / (2.0 * eps ** alpha *
                       lam_min ** (alpha / 2.0))) ** (1.0 / alpha)
            radius = int(math.ceil(r_bound)) + 2
            s = mp.mpf(0)
            e = mp.mpf(eps)
            if d == 1:
                for k in range(-radius, radius + 1):
                    qv = kernel.q_value((k,))
                    s += mp.e ** (-2 * e ** alpha * mp.mpf(qv) ** (alpha / 2.0))
                s *= e
            else:
                for k1 in range(-radius, radius + 1):
                    for k2 in range(-radius, radius + 1):
                        qv = kernel.q_value((k1, k2))
                        s += mp.e ** (-2 * e ** alpha * mp.mpf(qv) ** (alpha / 2.0))
                s *= e ** 2
            disc = abs(s - mp_integral)
            entries.append((float(eps), float(s), float(disc)))
    descending = sorted(entries, key=lambda t: -t[0])
    monotone = all(descending[i][2] >= descending[i + 1][2]
                   for i in range(len(descending) - 1))
    report = {"integral": integral, "entries": entries, "monotone": monotone}
    if order is not None:
        ok = True
        for i in range(len(descending) - 1):
            e1, _, d1 = descending[i]
            e2, _, d2 = descending[i + 1]
            if d2 > 0 and d1 / d2 < (e1 / e2) ** order * 0.5:
                ok = False
        report["order_ok"] = ok
        report["order"] = order
    return report


def _mp_symbol_square_integral(kernel, mp):
    d, alpha = kernel.d, kernel.alpha
    detq = mp.mpf(np.linalg.det(kernel.q))
    s_sphere = 2 * mp.pi ** (mp.mpf(d) / 2) / mp.gamma(mp.mpf(d) / 2)
    radial = mp.gamma(mp.mpf(d) / alpha) / (alpha * mp.mpf(2) ** (mp.mpf(d) / alpha))
    return s_sphere * radial / mp.sqrt(detq)
