"""Volume-preserving torus maps and their static invariants.

Linear maps F(x) = A^t x mod 1 act on Fourier modes by the exact lattice
action k -> A k; translations act by pure phases.  Nonlinear maps enter as
grids of sampled values (with the Jacobian alongside), from which a Galerkin
truncation of the Koopman operator is assembled by FFT.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DimensionError, UnsupportedError
from .fourier import DenseOperator

DEFAULT_JACOBIAN_TOL = 0.2


class LinearToralMap:
    """Integer-matrix toral map F(x) = A^t x mod 1 (automorphism iff |det A| = 1)."""

    def __init__(self, matrix):
        rows = tuple(tuple(int(v) for v in row) for row in matrix)
        d = len(rows)
        if any(len(r) != d for r in rows):
            raise DimensionError("map matrix must be square")
        self.matrix = rows
        self.d = d
        self.det = _int_det(rows)
        if self.det == 0:
            raise ConfigurationError("map matrix must have nonzero determinant",
                                     field="map.matrix")
        self.is_automorphism = abs(self.det) == 1

    def mode_action(self, k, n=1):
        """A^n k on the mode lattice; Python integers never overflow."""
        if n < 0:
            raise ValueError("mode_action requires n >= 0")
        k = tuple(int(v) for v in k)
        if not any(k):
            raise ValueError("mode action is defined on nonzero modes")
        for _ in range(n):
            k = tuple(sum(self.matrix[i][j] * k[j] for j in range(self.d))
                      for i in range(self.d))
        return k

    def inverse_matrix(self):
        """Exact integer inverse (automorphisms only)."""
        if not self.is_automorphism:
            raise UnsupportedError("matrix inverse is integral only for |det| = 1")
        if self.d == 1:
            return ((self.matrix[0][0],),)
        a = [[int(v) for v in row] for row in self.matrix]
        adj = _int_adjugate(a)
        s = self.det
        return tuple(tuple(v // s if s > 0 else -v for v in row) for row in adj)

    def __repr__(self):
        return f"LinearToralMap({self.matrix})"


def _int_det(rows):
    d = len(rows)
    if d == 1:
        return rows[0][0]
    if d == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    det = 0
    for j in range(d):
        minor = [r[:j] + r[j + 1:] for r in rows[1:]]
        det += (-1) ** j * rows[0][j] * _int_det(tuple(map(tuple, minor)))
    return det


def _int_adjugate(a):
    d = len(a)
    adj = [[0] * d for _ in range(d)]
    for i in range(d):
        for j in range(d):
            minor = [row[:j] + row[j + 1:] for r, row in enumerate(a) if r != i]
            adj[j][i] = (-1) ** (i + j) * _int_det(tuple(map(tuple, minor)))
    return adj


class TranslationMap:
    """Rigid translation x -> x + theta mod 1; Koopman acts by phases on modes."""

    def __init__(self, theta):
        self.theta = tuple(float(t) % 1.0 for t in theta)
        self.d = len(self.theta)

    def mode_phase(self, k, n=1):
        """Eigenvalue of U_F^n on e_k: exp(2 pi i n k.theta)."""
        dot = sum(float(ki) * ti for ki, ti in zip(k, self.theta))
        return complex(np.exp(2j * math.pi * n * dot))

    def __repr__(self):
        return f"TranslationMap({self.theta})"


class SampledMap:
    """Map sampled on the uniform grid x = m/N, with Jacobians.

    f_values has shape (N,)*d + (d,), df_values (N,)*d + (d, d).  Analytic
    callables may accompany the samples (the shipped perturbation family has
    them); expansion-rate fits use them when present.
    """

    def __init__(self, d, n_samples, f_values, df_values, description="",
                 f_callable=None, df_callable=None,
                 jacobian_tol=DEFAULT_JACOBIAN_TOL):
        self.d = int(d)
        self.n_samples = int(n_samples)
        self.f_values = np.asarray(f_values, dtype=float)
        self.df_values = np.asarray(df_values, dtype=float)
        expect_f = (self.n_samples,) * self.d + (self.d,)
        expect_df = (self.n_samples,) * self.d + (self.d, self.d)
        if self.f_values.shape != expect_f:
            raise DimensionError(f"f_values shape {self.f_values.shape} != {expect_f}")
        if self.df_values.shape != expect_df:
            raise DimensionError(f"df_values shape {self.df_values.shape} != {expect_df}")
        if np.any(self.f_values < 0) or np.any(self.f_values >= 1.0):
            raise ConfigurationError("image points must lie in [0, 1)^d", field="map.samples")
        self.description = description
        self.f_callable = f_callable
        self.df_callable = df_callable
        dets = np.abs(np.linalg.det(self.df_values.reshape(-1, self.d, self.d)))
        self.min_abs_jacobian = float(dets.min())
        if self.min_abs_jacobian < 1.0 - jacobian_tol:
            raise ConfigurationError(
                f"|det DF| = {self.min_abs_jacobian:.4f} at some sample: map is not "
                f"volume preserving within tol {jacobian_tol}", field="map.samples")

    def __repr__(self):
        return f"SampledMap({self.description or 'custom'}, N={self.n_samples})"


def sample_linear_map(linmap, n_samples):
    """Render a linear toral map as a SampledMap (exact on the grid)."""
    d, n = linmap.d, int(n_samples)
    at = np.array(linmap.matrix, dtype=float).T
    axes = np.meshgrid(*[np.arange(n) / n for _ in range(d)], indexing="ij")
    x = np.stack(axes, axis=-1)
    f = np.mod(x @ at.T, 1.0)
    df = np.broadcast_to(at, (n,) * d + (d, d)).copy()
    return SampledMap(d, n, f, df, description=f"linear {linmap.matrix}",
                      f_callable=lambda p: np.mod(at @ np.asarray(p), 1.0),
                      df_callable=lambda p: at)


def perturbed_cat_map(matrix, delta, n_samples):
    """Shipped nonlinear family on T^2:
    F(x) = A^t x + delta*(sin 2 pi x_2, sin 2 pi x_1) mod 1.

    Volume preserving only up to O(delta); min |det DF| is checked against
    the sampled-map tolerance.
    """
    linmap = LinearToralMap(matrix)
    if linmap.d != 2:
        raise ConfigurationError("perturbation family is two-dimensional", field="map.matrix")
    at = np.array(linmap.matrix, dtype=float).T
    delta = float(delta)
    n = int(n_samples)

    def f_call(p):
        p = np.asarray(p, dtype=float)
        pert = delta * np.array([math.sin(2 * math.pi * p[1]),
                                 math.sin(2 * math.pi * p[0])])
        return np.mod(at @ p + pert, 1.0)

    def df_call(p):
        c1 = math.cos(2 * math.pi * p[0])
        c2 = math.cos(2 * math.pi * p[1])
        pert = 2 * math.pi * delta * np.array([[0.0, c2], [c1, 0.0]])
        return at + pert

    g1, g2 = np.meshgrid(np.arange(n) / n, np.arange(n) / n, indexing="ij")
    x = np.stack([g1, g2], axis=-1)
    pert = delta * np.stack([np.sin(2 * math.pi * g2), np.sin(2 * math.pi * g1)], axis=-1)
    f = np.mod(x @ at.T + pert, 1.0)
    df = np.empty((n, n, 2, 2))
    df[..., 0, 0] = at[0, 0]
    df[..., 0, 1] = at[0, 1] + 2 * math.pi * delta * np.cos(2 * math.pi * g2)
    df[..., 1, 0] = at[1, 0] + 2 * math.pi * delta * np.cos(2 * math.pi * g1)
    df[..., 1, 1] = at[1, 1]
    return SampledMap(2, n, f, df,
                      description=f"perturbed cat A={linmap.matrix} delta={delta}",
                      f_callable=f_call, df_callable=df_call)


# ---------------------------------------------------------------------------
# expansion profile
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpansionProfile:
    df_norm: float                 # ||DF||_inf
    mu: float                      # maximal expansion rate mu_F (or estimate)
    df_inverse_norm: float | None  # ||DF^{-1}||_inf when invertible
    lambda_u: float | None         # unstable rate, when hyperbolic
    lambda_s: float | None         # stable rate, when hyperbolic
    method: str = "exact"
    grid_spacing: float | None = None


def expansion_profile(torus_map, n_fit=12, starts_per_axis=6):
    """Expansion invariants: exact for linear/translation maps, grid maxima
    plus a finite-n growth fit for sampled maps (reported as lower estimates)."""
    if isinstance(torus_map, TranslationMap):
        return ExpansionProfile(1.0, 1.0, 1.0, None, None)
    if isinstance(torus_map, LinearToralMap):
        a = np.array(torus_map.matrix, dtype=float)
        svals = np.linalg.svd(a, compute_uv=False)
        eig = np.linalg.eigvals(a)
        mods = np.abs(eig)
        mu = float(mods.max())
        inv_norm = float(1.0 / svals.min()) if torus_map.is_automorphism else None
        hyper = np.all(np.abs(mods - 1.0) > 1e-9) and torus_map.is_automorphism
        lam_u = float(mods.max()) if hyper and mods.max() > 1 else None
        lam_s = float(mods.min()) if hyper and mods.min() < 1 else None
        return ExpansionProfile(float(svals.max()), mu, inv_norm, lam_u, lam_s)
    if isinstance(torus_map, SampledMap):
        df = torus_map.df_values.reshape(-1, torus_map.d, torus_map.d)
        df_norm = float(np.linalg.norm(df, ord=2, axis=(1, 2)).max())
        mu = _sampled_growth_rate(torus_map, n_fit, starts_per_axis)
        return ExpansionProfile(df_norm, mu, None, None, None,
                                method="grid-max+trajectory-fit",
                                grid_spacing=1.0 / torus_map.n_samples)
    raise UnsupportedError(f"unknown map type {type(torus_map)!r}")


def _sampled_growth_rate(smap, n_fit, starts_per_axis):
    if smap.f_callable is None or smap.df_callable is None:
        return float(np.linalg.norm(
            smap.df_values.reshape(-1, smap.d, smap.d), ord=2, axis=(1, 2)).max())
    starts = np.stack(np.meshgrid(
        *[np.linspace(0, 1, starts_per_axis, endpoint=False) + 0.013] * smap.d,
        indexing="ij"), axis=-1).reshape(-1, smap.d)
    log_max = []
    prods = [np.eye(smap.d) for _ in starts]
    pts = [s.copy() for s in starts]
    for n in range(1, n_fit + 1):
        worst = 0.0
        for i in range(len(pts)):
            prods[i] = np.asarray(smap.df_callable(pts[i])) @ prods[i]
            pts[i] = np.asarray(smap.f_callable(pts[i]))
            worst = max(worst, float(np.linalg.norm(prods[i], ord=2)))
        log_max.append(math.log(worst))
    ns = np.arange(1, n_fit + 1, dtype=float)
    half = len(ns) // 2
    slope = np.polyfit(ns[half:], np.array(log_max)[half:], 1)[0]
    return float(math.exp(slope))


# ---------------------------------------------------------------------------
# entropy and ergodicity (exact integer arithmetic through sympy)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FactorEntropy:
    coefficients: tuple    # highest degree first, over Z
    degree: int
    multiplicity: int
    h: float               # KS entropy of a toral automorphism with this factor
    h_hat: float           # h / degree


@dataclass(frozen=True)
class EntropyReport:
    h: float
    factors: tuple
    h_hat: float
    ergodic: bool


def _charpoly(torus_map):
    import sympy
    a = sympy.Matrix(torus_map.matrix)
    x = sympy.Symbol("x")
    return sympy.Poly(a.charpoly(x).as_expr(), x, domain="ZZ"), x


def ergodicity_test(torus_map):
    """Exact test: ergodic iff no eigenvalue is a root of unity, i.e. the
    characteristic polynomial shares no factor with any cyclotomic Phi_m
    with phi(m) <= d (finitely many m)."""
    import sympy
    p, x = _charpoly(torus_map)
    d = torus_map.d
    for m in range(1, 2 * d * d + 3):
        if sympy.totient(m) > d:
            continue
        phi_m = sympy.Poly(sympy.cyclotomic_poly(m, x), x, domain="ZZ")
        if sympy.gcd(p, phi_m).degree() > 0:
            return False
    return True


def _factor_entropy(coeffs, multiplicity):
    coeffs = tuple(int(c) for c in coeffs)
    roots = np.roots([float(c) for c in coeffs])
    h = float(sum(math.log(abs(r)) for r in roots if abs(r) > 1.0))
    deg = len(coeffs) - 1
    return FactorEntropy(coeffs, deg, multiplicity, h, h / deg)


def entropy_report(torus_map, factorization_hint=None):
    """KS entropy h = sum_{|lambda_j| > 1} ln|lambda_j|, the exact irreducible
    factorization of the characteristic polynomial, per-factor dimensionally
    averaged entropies, their minimum h_hat, and the ergodicity flag.

    A factorization hint (list of integer coefficient lists, highest degree
    first, repeated per multiplicity) is verified by exact polynomial
    multiplication before being used.
    """
    import sympy
    p, x = _charpoly(torus_map)
    if factorization_hint is not None:
        prod = sympy.Poly(1, x, domain="ZZ")
        hint_polys = []
        for coeffs in factorization_hint:
            hp = sympy.Poly(list(int(c) for c in coeffs), x, domain="ZZ")
            hint_polys.append(hp)
            prod = prod * hp
        if prod != p:
            raise ConfigurationError("factorization hint does not multiply back to "
                                     "the characteristic polynomial",
                                     field="map.factorization_hint")
        counted = {}
        for hp in hint_polys:
            key = tuple(int(c) for c in hp.all_coeffs())
            counted[key] = counted.get(key, 0) + 1
        factors = [(_factor_entropy(c, m)) for c, m in sorted(counted.items())]
    else:
        _, flist = p.factor_list()
        factors = []
        for fpoly, mult in sorted(flist, key=lambda t: tuple(t[0].all_coeffs())):
            factors.append(_factor_entropy(fpoly.all_coeffs(), int(mult)))
    h_total = float(sum(f.h * f.multiplicity for f in factors))
    h_hat = float(min(f.h_hat for f in factors))
    return EntropyReport(h_total, tuple(factors), h_hat, ergodicity_test(torus_map))


# ---------------------------------------------------------------------------
# Galerkin truncation of the Koopman operator for sampled maps
# ---------------------------------------------------------------------------

def koopman_assembly(smap, grid, kernel=None, eps=0.0, column_block=256):
    """Truncated Koopman matrix U_{jk} = <e_j, e_k o F> by per-column FFT.

    Requires the anti-aliasing margin N >= 4K.  Returns (DenseOperator,
    diagnostics); diagnostics quantify assembly fidelity and cutoff loss:

      zero_mode_max   max_k |hat(e_k o F)(0)|   (aliasing indicator; e_k o F
                      has exact zero mean for measure-preserving F)
      dropped_max     max_k of the raw squared mass at window modes outside
                      the grid cutoff
      noise_dropped_max  same mass weighted by g_hat(eps j)^2 (when a kernel
                      is supplied): the part the noisy propagator actually loses
    """
    n, d = smap.n_samples, smap.d
    if n < 4 * grid.cutoff:
        raise ConfigurationError(
            f"anti-aliasing requires N >= 4K (N={n}, K={grid.cutoff})",
            field="run.sample_n")
    m = len(grid)
    modes = np.array(grid.modes)
    u = np.zeros((m, m), dtype=complex)

    freqs = (np.fft.fftfreq(n) * n).astype(int)
    signed = np.stack(np.meshgrid(*[freqs] * d, indexing="ij"), axis=-1)
    in_grid = np.all(np.abs(signed) <= grid.cutoff, axis=-1) & np.any(signed != 0, axis=-1)
    row_gather = tuple(np.mod(modes[:, ax], n) for ax in range(d))

    if kernel is not None:
        flat = signed.reshape(-1, d)
        w = np.array([kernel.symbol(tuple(eps * v)) for v in flat.astype(float)])
        noise_w = (w ** 2).reshape(signed.shape[:-1])
    zero_mode_max = 0.0
    dropped_max = 0.0
    noise_dropped_max = 0.0
    outside = ~in_grid
    outside_nz = outside.copy()
    outside_nz[(0,) * d] = False

    for lo in range(0, m, column_block):
        hi = min(lo + column_block, m)
        block = modes[lo:hi]
        phase = np.exp(2j * math.pi * np.tensordot(smap.f_values, block.T, axes=([d], [0])))
        u_hat = np.fft.fftn(phase, axes=tuple(range(d))) / n ** d
        mass = np.abs(u_hat) ** 2
        zero_mode_max = max(zero_mode_max, float(np.abs(u_hat[(0,) * d]).max()))
        dropped = mass[outside_nz].sum(axis=0)
        dropped_max = max(dropped_max, float(dropped.max()))
        if kernel is not None:
            nd = (mass * noise_w[..., None])[outside_nz].sum(axis=0)
            noise_dropped_max = max(noise_dropped_max, float(nd.max()))
        u[:, lo:hi] = u_hat[row_gather]

    diagnostics = {
        "zero_mode_max": zero_mode_max,
        "dropped_max": dropped_max,
        "noise_dropped_max": noise_dropped_max if kernel is not None else None,
        "n_samples": n,
        "cutoff": grid.cutoff,
    }
    return DenseOperator(grid, u), diagnostics


def koopman_matrix(smap, grid):
    """Galerkin Koopman matrix (see koopman_assembly for fidelity figures)."""
    op, _ = koopman_assembly(smap, grid)
    return op
