"""Noisy propagator T_eps = G_eps U_F and the coarse-grained family
G_eps U_F^n G_eps, with two engines.

The lattice engine is exact for linear maps: modes map to modes, so
T_eps^n e_k = [prod_{l=1..n} g_hat(eps A^l k)] e_{A^n k} and the operator
norm is a certified supremum over lattice orbits with no truncation error.
For alpha-stable kernels the log-norm is -(eps^alpha) * min_k sum_l
|A^l k|_Q^alpha, a minimization solved exactly in lattice.py.  Norms are
carried in log space throughout: at small eps and large n the norm itself
underflows double precision long before the exponent loses accuracy.

The dense engine works on a truncated mode grid and handles sampled
(nonlinear) maps; mass pushed outside the cutoff is accounted, never
silently dropped.  Norms of powers are norms of the explicit matrix power:
T_eps is strongly nonnormal and the power of the norm would be wildly off.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import lattice
from .errors import ConfigurationError, DimensionError, UnsupportedError
from .fourier import DenseOperator, matrix_norm2, matrix_sigma_min
from .maps import LinearToralMap, SampledMap, TranslationMap, koopman_assembly
from .noise import AlphaStableKernel, log_noise_norm, noise_diagonal


@dataclass(frozen=True)
class NormCurve:
    """Sequence of propagator norms at fixed eps, with diagnostics."""
    eps: float
    mode: str                  # "noisy" | "coarse"
    engine: str                # "lattice" | "dense"
    entries: tuple             # of (n, norm, log_norm)
    diagnostics: dict = field(default_factory=dict)

    def norms(self):
        return [(n, v) for n, v, _ in self.entries]

    def log_norms(self):
        return [(n, lv) for n, _, lv in self.entries]

    def to_rows(self):
        leak = self.diagnostics.get("noise_dropped_max")
        return [{"eps": self.eps, "mode": self.mode, "n": n, "norm": v,
                 "log_norm": lv, "leak": leak if leak is not None else 0.0}
                for n, v, lv in self.entries]


class LatticeOrbitEngine:
    """Exact norms for linear/translation maps via certified lattice search."""

    name = "lattice"

    def __init__(self, torus_map, kernel, eps, policy=None):
        if eps <= 0:
            raise ConfigurationError("lattice engine requires eps > 0", field="epsilon")
        if not isinstance(torus_map, (LinearToralMap, TranslationMap)):
            raise UnsupportedError("lattice engine handles linear and translation maps")
        if torus_map.d != kernel.d:
            raise DimensionError("map and kernel dimensions differ")
        self.map = torus_map
        self.kernel = kernel
        self.eps = float(eps)
        self.policy = policy or lattice.SearchPolicy()
        self._powers = {}
        self._noisy_cache = {}
        self._coarse_cache = {}
        self._log_gnorm = log_noise_norm(kernel, eps, self.policy)
        self.is_translation = isinstance(torus_map, TranslationMap)
        self.modulus_preserving = self.is_translation or self._isometric_action()

    def _isometric_action(self):
        # |A k|_Q = |k|_Q for all k  iff  A^T Q A = Q
        a = np.array(self.map.matrix, dtype=float)
        return bool(np.allclose(a.T @ self.kernel.q @ a, self.kernel.q, atol=1e-12))

    def _power(self, l):
        if l == 0:
            return lattice.identity_matrix(self.map.d)
        if l not in self._powers:
            self._powers[l] = lattice.matmul(self._power(l - 1), self.map.matrix) \
                if l > 1 else self.map.matrix
        return self._powers[l]

    # -- norms ------------------------------------------------------------

    def noisy_log_norm(self, n):
        """ln ||T_eps^n||, exact up to floating round-off in the exponent."""
        if n < 1:
            raise ValueError("n must be >= 1")
        if n in self._noisy_cache:
            return self._noisy_cache[n][0]
        if self.is_translation:
            val = n * self._log_gnorm
            self._noisy_cache[n] = (val, None)
            return val
        if isinstance(self.kernel, AlphaStableKernel):
            mats = [self._power(l) for l in range(1, n + 1)]
            q = None if self.kernel.q_is_identity else self.kernel.q.tolist()
            s_min, argmin = lattice.min_orbit_sum(mats, self.kernel.alpha, Q=q,
                                                  policy=self.policy)
            val = -(self.eps ** self.kernel.alpha) * s_min
        else:
            mats = [self._power(l) for l in range(1, n + 1)]
            best, argmin = lattice.sup_orbit_product(
                self.kernel.symbol, self.kernel.envelope, self.eps, mats, self.policy)
            val = math.log(best) if best > 0 else -math.inf
        self._noisy_cache[n] = (val, argmin)
        return val

    def noisy_norm(self, n):
        return math.exp(self.noisy_log_norm(n))

    def coarse_log_norm(self, n):
        """ln ||G_eps U_F^n G_eps||."""
        if n < 1:
            raise ValueError("n must be >= 1")
        if n in self._coarse_cache:
            return self._coarse_cache[n]
        if self.is_translation or self.modulus_preserving:
            val = 2.0 * self._log_gnorm
        elif isinstance(self.kernel, AlphaStableKernel):
            mats = [lattice.identity_matrix(self.map.d), self._power(n)]
            q = None if self.kernel.q_is_identity else self.kernel.q.tolist()
            s_min, _ = lattice.min_orbit_sum(mats, self.kernel.alpha, Q=q,
                                             policy=self.policy)
            val = -(self.eps ** self.kernel.alpha) * s_min
        else:
            mats = [lattice.identity_matrix(self.map.d), self._power(n)]
            best, _ = lattice.sup_orbit_product(
                self.kernel.symbol, self.kernel.envelope, self.eps, mats, self.policy)
            val = math.log(best) if best > 0 else -math.inf
        self._coarse_cache[n] = val
        return val

    def coarse_norm(self, n):
        return math.exp(self.coarse_log_norm(n))

    @property
    def coarse_constant(self):
        """True when the engine proves the coarse norm is n-independent."""
        return self.modulus_preserving

    def log_norm(self, n, mode):
        return self.noisy_log_norm(n) if mode == "noisy" else self.coarse_log_norm(n)

    def norm_curve(self, n_max, mode="noisy"):
        entries = []
        for n in range(1, n_max + 1):
            lv = self.log_norm(n, mode)
            entries.append((n, math.exp(lv), lv))
        return NormCurve(self.eps, mode, self.name, tuple(entries),
                         {"map": repr(self.map), "exact": True})

    # -- orbit products for correlations ----------------------------------

    def mode_power(self, k, n):
        if self.is_translation:
            return tuple(int(v) for v in k)
        return self.map.mode_action(k, n)

    def orbit_product(self, k, n):
        """prod_{l=1..n} g_hat(eps A^l k) (signed, linear space)."""
        if n == 0:
            return 1.0
        if self.is_translation:
            xi = tuple(self.eps * float(v) for v in k)
            return self.kernel.symbol(xi) ** n
        if isinstance(self.kernel, AlphaStableKernel):
            q = None if self.kernel.q_is_identity else self.kernel.q.tolist()
            mats = [self._power(l) for l in range(1, n + 1)]
            s = lattice.orbit_sum(mats, self.kernel.alpha,
                                  tuple(int(v) for v in k), Q=q)
            return math.exp(-(self.eps ** self.kernel.alpha) * s)
        p = 1.0
        kk = tuple(int(v) for v in k)
        for l in range(1, n + 1):
            v = lattice.matvec(self._power(l), kk)
            p *= self.kernel.symbol(tuple(self.eps * float(x) for x in v))
        return p


class DenseEngine:
    """Truncated-grid propagator for general maps; leakage is accounted."""

    name = "dense"

    def __init__(self, koopman, grid, kernel, eps, diagnostics=None,
                 source_map=None):
        import scipy.sparse as sp
        self.grid = grid
        self.kernel = kernel
        self.eps = float(eps)
        self.diagnostics = dict(diagnostics or {})
        self.source_map = source_map
        m = koopman.entries if isinstance(koopman, DenseOperator) else koopman
        self.u = m
        if self.diagnostics.get("noise_dropped_max") is None and \
                self.diagnostics.get("dropped_max") is not None:
            # noise-weighted bound on the cutoff loss: every dropped mode
            # sits at |j|_inf > K, where the symbol is below the envelope
            try:
                env = kernel.envelope(self.eps * (grid.cutoff + 1))
                self.diagnostics["noise_dropped_max"] = \
                    self.diagnostics["dropped_max"] * env ** 2
                self.diagnostics["noise_dropped_kind"] = "envelope-bound"
            except ConfigurationError:
                pass
        self.noise_diag = noise_diagonal(kernel, eps, grid)
        if sp.issparse(m):
            self.t = (sp.diags(self.noise_diag) @ m).tocsr()
        else:
            self.t = self.noise_diag[:, None] * m
        self._t_powers = {1: self.t}
        self._u_powers = {1: self.u}

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_linear_map(cls, torus_map, kernel, eps, cutoff):
        """Exact sparse assembly from the mode action (no quadrature)."""
        import scipy.sparse as sp
        from .fourier import TruncatedGrid
        grid = TruncatedGrid(torus_map.d, cutoff)
        m = len(grid)
        rows, cols, vals = [], [], []
        dropped = []
        if isinstance(torus_map, TranslationMap):
            for j, k in enumerate(grid.modes):
                rows.append(j); cols.append(j)
                vals.append(torus_map.mode_phase(k))
        else:
            for j, k in enumerate(grid.modes):
                ak = torus_map.mode_action(k)
                i = grid.index.get(ak)
                if i is None:
                    from .noise import eigenvalue_on_mode
                    dropped.append(eigenvalue_on_mode(kernel, eps, ak) ** 2)
                else:
                    rows.append(i); cols.append(j); vals.append(1.0)
        u = sp.csc_matrix((vals, (rows, cols)), shape=(m, m), dtype=complex)
        diag = {
            "assembly": "exact-mode-action",
            "zero_mode_max": 0.0,
            "dropped_columns": len(dropped),
            "noise_dropped_max": max(dropped) if dropped else 0.0,
        }
        return cls(u, grid, kernel, eps, diag, source_map=torus_map)

    @classmethod
    def from_sampled_map(cls, smap, kernel, eps, cutoff):
        from .fourier import TruncatedGrid
        grid = TruncatedGrid(smap.d, cutoff)
        op, diag = koopman_assembly(smap, grid, kernel=kernel, eps=eps)
        diag["assembly"] = "fft-galerkin"
        return cls(op, grid, kernel, eps, diag, source_map=smap)

    # -- norms ------------------------------------------------------------

    def _norm(self, m):
        import scipy.sparse as sp
        if sp.issparse(m) and m.shape[0] <= 500:
            return matrix_norm2(m.toarray())
        return matrix_norm2(m)

    def _pow(self, cache, base, n):
        if n in cache:
            return cache[n]
        half = self._pow(cache, base, n // 2)
        out = half @ half
        if n % 2:
            out = out @ base
        cache[n] = out
        return out

    def noisy_norm(self, n):
        """||T_eps^n|| on the truncation (norm of the explicit power)."""
        if n < 1:
            raise ValueError("n must be >= 1")
        return self._norm(self._pow(self._t_powers, self.t, n))

    def noisy_log_norm(self, n):
        v = self.noisy_norm(n)
        return math.log(v) if v > 0 else -math.inf

    def coarse_norm(self, n):
        """||G_eps U^n G_eps|| on the truncation."""
        import scipy.sparse as sp
        if n < 1:
            raise ValueError("n must be >= 1")
        un = self._pow(self._u_powers, self.u, n)
        if sp.issparse(un):
            m = sp.diags(self.noise_diag) @ un @ sp.diags(self.noise_diag)
        else:
            m = self.noise_diag[:, None] * un * self.noise_diag[None, :]
        return self._norm(m)

    def coarse_log_norm(self, n):
        v = self.coarse_norm(n)
        return math.log(v) if v > 0 else -math.inf

    @property
    def coarse_constant(self):
        return False

    def log_norm(self, n, mode):
        return self.noisy_log_norm(n) if mode == "noisy" else self.coarse_log_norm(n)

    def norm_curve(self, n_max, mode="noisy"):
        entries = []
        if mode == "noisy":
            acc = None
            for n in range(1, n_max + 1):
                acc = self.t if acc is None else acc @ self.t
                self._t_powers.setdefault(n, acc)
                v = self._norm(acc)
                entries.append((n, v, math.log(v) if v > 0 else -math.inf))
        else:
            for n in range(1, n_max + 1):
                v = self.coarse_norm(n)
                entries.append((n, v, math.log(v) if v > 0 else -math.inf))
        return NormCurve(self.eps, mode, self.name, tuple(entries),
                         dict(self.diagnostics))

    # -- resolvent ---------------------------------------------------------

    def resolvent_sigma_min(self, lam):
        """sigma_min(lam I - T_eps) on the truncation (|lam| > 0)."""
        if abs(lam) <= 0:
            raise ValueError("resolvent is sampled away from the origin")
        return matrix_sigma_min(self.t, complex(lam))

    def apply_noisy(self, coeffs, n=1):
        out = np.asarray(coeffs, dtype=complex)
        for _ in range(n):
            out = self.t @ out
        return out
