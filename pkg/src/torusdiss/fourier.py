"""Truncated Fourier spaces on the torus and dense operator algebra.

Everything lives on the zero-mean subspace of L^2(T^d): the constant mode
k = 0 is excluded from every enumeration.  A TruncatedGrid fixes a cutoff K
and enumerates {k in Z^d : 0 < |k|_inf <= K} in lexicographic order, so that
serialized vectors and operators are reproducible bit for bit.
"""

import json
import struct

import numpy as np
from dataclasses import dataclass, field

from .errors import DimensionError, NumericalFailure

# Above this dimension the 2-norm is obtained by power iteration instead of
# a full SVD, and sigma_min by factorized inverse iteration.
_SVD_NORM_LIMIT = 500
_SVD_SIGMA_LIMIT = 2000
_POWER_TOL = 1e-10
_POWER_MAXIT = 10_000

_MAGIC = b"TORUSDISS1"


@dataclass(frozen=True)
class TruncatedGrid:
    """Enumeration of the nonzero modes in the box [-K, K]^d."""

    d: int
    cutoff: int
    modes: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.d < 1:
            raise DimensionError("dimension must be >= 1")
        if self.cutoff < 1:
            raise DimensionError("cutoff must be >= 1")
        rng = range(-self.cutoff, self.cutoff + 1)
        modes = []
        # lexicographic over the box, k = 0 excluded
        def rec(prefix):
            if len(prefix) == self.d:
                if any(prefix):
                    modes.append(tuple(prefix))
                return
            for v in rng:
                rec(prefix + [v])
        rec([])
        object.__setattr__(self, "modes", tuple(modes))

    def __len__(self):
        return len(self.modes)

    @property
    def index(self):
        try:
            return self._index_cache
        except AttributeError:
            object.__setattr__(self, "_index_cache",
                               {k: i for i, k in enumerate(self.modes)})
            return self._index_cache

    def contains(self, k):
        k = tuple(int(v) for v in k)
        return any(k) and max(abs(v) for v in k) <= self.cutoff

    def mode_array(self):
        return np.array(self.modes, dtype=float)


class FourierVector:
    """Zero-mean trigonometric polynomial over a TruncatedGrid."""

    def __init__(self, grid, coeffs):
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (len(grid),):
            raise DimensionError(
                f"coefficient vector has length {coeffs.shape}, grid has {len(grid)} modes")
        self.grid = grid
        self.coeffs = coeffs

    @classmethod
    def from_modes(cls, grid, entries):
        """Build from a {mode: coefficient} mapping; modes must lie in the grid."""
        c = np.zeros(len(grid), dtype=complex)
        for k, v in entries.items():
            k = tuple(int(x) for x in (k if isinstance(k, (tuple, list)) else (k,)))
            if k not in grid.index:
                raise DimensionError(f"mode {k} outside grid (K={grid.cutoff})")
            c[grid.index[k]] = v
        return cls(grid, c)

    def coeff(self, k):
        k = tuple(int(x) for x in (k if isinstance(k, (tuple, list)) else (k,)))
        i = self.grid.index.get(k)
        return 0j if i is None else self.coeffs[i]

    def support(self):
        return {self.grid.modes[i]: self.coeffs[i]
                for i in np.nonzero(self.coeffs)[0]}


def l2_norm(f):
    """L^2 norm; by Parseval this is the Euclidean norm of the coefficients."""
    return float(np.linalg.norm(f.coeffs))


def sobolev_norm(f, s):
    """H^s norm (sum_k (1+|k|^2)^s |f_hat(k)|^2)^(1/2), s >= 0."""
    if s < 0:
        raise ValueError("Sobolev index must be >= 0")
    k2 = np.sum(f.grid.mode_array() ** 2, axis=1)
    return float(np.sqrt(np.sum((1.0 + k2) ** s * np.abs(f.coeffs) ** 2)))


class DenseOperator:
    """Truncated operator as a dense complex matrix indexed by (mode, mode)."""

    def __init__(self, grid, entries):
        entries = np.asarray(entries, dtype=complex)
        m = len(grid)
        if entries.shape != (m, m):
            raise DimensionError(f"matrix shape {entries.shape} does not match grid of {m} modes")
        self.grid = grid
        self.entries = entries

    @classmethod
    def identity(cls, grid):
        return cls(grid, np.eye(len(grid), dtype=complex))

    @classmethod
    def diagonal(cls, grid, diag):
        return cls(grid, np.diag(np.asarray(diag, dtype=complex)))


def apply(T, f):
    if T.grid is not f.grid and T.grid.modes != f.grid.modes:
        raise DimensionError("operator and vector live on different grids")
    return FourierVector(T.grid, T.entries @ f.coeffs)


def compose(T, S):
    if T.grid.modes != S.grid.modes:
        raise DimensionError("operators live on different grids")
    return DenseOperator(T.grid, T.entries @ S.entries)


def power(T, n):
    if n < 0:
        raise ValueError("power requires n >= 0")
    return DenseOperator(T.grid, np.linalg.matrix_power(T.entries, n))


def _matrix_of(T):
    return T.entries if isinstance(T, DenseOperator) else T


def matrix_norm2(m, tol=_POWER_TOL):
    """Largest singular value of a dense or sparse matrix.

    Dense matrices up to 500x500 go through LAPACK; larger (or sparse) ones
    use power iteration on the normal matrix with relative tolerance `tol`.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    import scipy.sparse as sp
    sparse = sp.issparse(m)
    n = m.shape[0]
    if not sparse and n <= _SVD_NORM_LIMIT:
        if n == 0:
            return 0.0
        return float(np.linalg.svd(m, compute_uv=False)[0])
    mh = m.conj().T if sparse else m.conj().T
    rng = np.random.RandomState(12345)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for it in range(_POWER_MAXIT):
        w = mh @ (m @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v_new = w / nw
        sigma_new = np.sqrt(nw)
        if it > 0 and abs(sigma_new - sigma) <= tol * max(sigma_new, 1e-300):
            return float(sigma_new)
        sigma, v = sigma_new, v_new
    raise NumericalFailure(
        f"operator-norm power iteration did not converge in {_POWER_MAXIT} iterations "
        f"(last estimate {sigma:.6e})")


def operator_norm(T, tol=_POWER_TOL):
    """Operator 2-norm of a DenseOperator (largest singular value)."""
    return matrix_norm2(_matrix_of(T), tol)


def matrix_sigma_min(m, lam):
    """sigma_min(lam*I - m); 0 when lam is an eigenvalue.

    Small dense matrices use a full SVD; large or sparse ones use inverse
    iteration on the normal equations through an (s)LU factorization.
    """
    import scipy.sparse as sp
    n = m.shape[0]
    if sp.issparse(m):
        diag = m.diagonal()
        if (m - sp.diags(diag)).nnz == 0:
            # diagonal (normal) operator: exact distance to the spectrum
            return float(np.abs(lam - diag).min())
        a = (lam * sp.identity(n, dtype=complex, format="csc") - m).tocsc()
        try:
            return _sigma_min_sparse(a)
        except NumericalFailure:
            # clustered singular values stall the iteration; exact fallback
            if n <= _SVD_SIGMA_LIMIT:
                return float(np.linalg.svd(a.toarray(), compute_uv=False)[-1])
            raise
    a = lam * np.eye(n, dtype=complex) - m
    if n <= _SVD_SIGMA_LIMIT:
        return float(np.linalg.svd(a, compute_uv=False)[-1])
    return _sigma_min_via_lu(a, sparse=False)


def _sigma_min_sparse(a, tol=0.0):
    """Smallest singular value of sparse a via shift-invert Lanczos on the
    normal matrix (handles clustered spectra that stall plain iteration)."""
    import scipy.sparse.linalg as spla
    n = a.shape[0]
    m = (a.conj().T @ a).tocsc()
    rng = np.random.RandomState(54321)
    v0 = rng.standard_normal(n)
    try:
        vals = spla.eigsh(m, k=1, sigma=0.0, which="LM", v0=v0, tol=tol,
                          return_eigenvectors=False)
    except RuntimeError:
        return 0.0  # factorization hit an exactly singular matrix
    except spla.ArpackNoConvergence as exc:
        raise NumericalFailure(f"sigma_min Lanczos did not converge: {exc}")
    val = float(vals[0])
    return math_sqrt_clip(val)


def math_sqrt_clip(x):
    return float(np.sqrt(max(x, 0.0)))


def _sigma_min_via_lu(a, sparse, tol=1e-10, maxit=500):
    # inverse power iteration for the largest singular value of a^{-1}
    import scipy.sparse as sp
    import scipy.sparse.linalg as spla
    import scipy.linalg as sla
    n = a.shape[0]
    if sparse:
        try:
            lu = spla.splu(a)
        except RuntimeError:
            return 0.0  # exactly singular
        solve = lambda b: lu.solve(b, trans="N")
        solve_h = lambda b: lu.solve(b, trans="H")
    else:
        lu, piv = sla.lu_factor(a)
        solve = lambda b: sla.lu_solve((lu, piv), b, trans=0)
        solve_h = lambda b: sla.lu_solve((lu, piv), b, trans=2)
    rng = np.random.RandomState(54321)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    gamma = 0.0
    for it in range(maxit):
        w = solve(solve_h(v))
        nw = np.linalg.norm(w)
        if not np.isfinite(nw) or nw == 0.0:
            return 0.0
        gamma_new = nw  # estimate of ||a^{-1}||^2
        v = w / nw
        if it > 0 and abs(gamma_new - gamma) <= tol * gamma_new:
            return float(1.0 / np.sqrt(gamma_new))
        gamma = gamma_new
    raise NumericalFailure(
        f"sigma_min inverse iteration did not converge in {maxit} iterations")


def smallest_singular(T, lam):
    """sigma_min(lam*I - T) = 1/||(lam - T)^{-1}||, 0 at eigenvalues."""
    return matrix_sigma_min(_matrix_of(T), complex(lam))


# ---------------------------------------------------------------------------
# serialization: a flat binary format, deterministic byte for byte.
# Layout: magic | uint32 header length | JSON header (sorted keys) | payload,
# payload = raw little-endian complex128 entries, row-major.
# ---------------------------------------------------------------------------

def _header(kind, grid):
    return {"kind": kind, "d": grid.d, "cutoff": grid.cutoff}


def _pack(kind, grid, payload):
    head = json.dumps(_header(kind, grid), sort_keys=True, separators=(",", ":")).encode()
    return _MAGIC + struct.pack("<I", len(head)) + head + payload


def _unpack(blob):
    if blob[: len(_MAGIC)] != _MAGIC:
        raise ValueError("not a torusdiss serialization blob")
    off = len(_MAGIC)
    (hlen,) = struct.unpack_from("<I", blob, off)
    off += 4
    head = json.loads(blob[off:off + hlen].decode())
    return head, blob[off + hlen:]


def dump_vector(f):
    payload = np.ascontiguousarray(f.coeffs, dtype="<c16").tobytes()
    return _pack("vector", f.grid, payload)


def dump_operator(T):
    payload = np.ascontiguousarray(T.entries, dtype="<c16").tobytes()
    return _pack("operator", T.grid, payload)


def load(blob):
    head, payload = _unpack(blob)
    grid = TruncatedGrid(head["d"], head["cutoff"])
    data = np.frombuffer(payload, dtype="<c16").astype(complex)
    if head["kind"] == "vector":
        return FourierVector(grid, data)
    if head["kind"] == "operator":
        m = len(grid)
        return DenseOperator(grid, data.reshape(m, m))
    raise ValueError(f"unknown blob kind {head['kind']!r}")
