"""Certified searches over the nonzero integer lattice.

Two problems appear throughout the toolkit:

  * minimize  S(k) = sum_l ((B_l k)^T Q (B_l k))^(alpha/2)  over 0 != k in Z^d,
    which gives the exact operator norms of noisy propagators of linear maps
    for alpha-stable kernels (the norm is exp(-eps^alpha * S_min));

  * maximize a product of symbol values prod_l |g_hat(eps B_l k)| for a
    tabulated symbol with a decay envelope.

For d <= 2 the first problem is solved exactly: the alpha = 2 surrogate
G2 = sum_l B_l^T Q B_l is a positive-definite quadratic form, Lagrange-Gauss
reduction yields its true lattice minimum, and since S(k) >= q2(k)^(alpha/2)
for alpha <= 2 every candidate beating the current best lies in the ellipse
q2(k) <= best^(2/alpha), which is enumerated exactly.  Growing sup-norm
shells with a single-factor certificate (which is what the envelope search
below does) would need a radius ~ 1/(eps*sigma_min) and are hopeless for
hyperbolic maps at small eps.

All integer arithmetic uses Python ints, so orbit entries A^l k may grow
without overflow.
"""

import math

from dataclasses import dataclass

from .errors import ConfigurationError

_HUGE_BITS = 1020  # int magnitudes beyond this saturate to float inf


@dataclass(frozen=True)
class SearchPolicy:
    """Shell-search policy for envelope-certified searches."""
    max_radius: int | None = None  # None: 2^20 for d = 1, 4096 otherwise
    growth: int = 2

    def radius_cap(self, d):
        if self.max_radius is not None:
            return self.max_radius
        return (1 << 20) if d == 1 else 4096


def matvec(m, k):
    return tuple(sum(row[j] * k[j] for j in range(len(k))) for row in m)


def matmul(a, b):
    n = len(a)
    return tuple(tuple(sum(a[i][r] * b[r][j] for r in range(n)) for j in range(n))
                 for i in range(n))


def identity_matrix(d):
    return tuple(tuple(1 if i == j else 0 for j in range(d)) for i in range(d))


def _qf(Q, v):
    """v^T Q v; exact int when Q is None (identity)."""
    if Q is None:
        return sum(x * x for x in v)
    d = len(v)
    acc = 0.0
    for i in range(d):
        vi = float(v[i])
        for j in range(d):
            acc += vi * Q[i][j] * float(v[j])
    return acc


def _pow_half_alpha(q, alpha):
    """q^(alpha/2) with saturation for astronomically large exact integers."""
    if isinstance(q, int) and q.bit_length() > _HUGE_BITS:
        return math.inf
    return float(q) ** (alpha / 2.0)


def orbit_sum(mats, alpha, k, Q=None, stop_above=None):
    """S(k) = sum over l of |B_l k|_Q^alpha, with optional early exit."""
    s = 0.0
    for m in mats:
        s += _pow_half_alpha(_qf(Q, matvec(m, k)), alpha)
        if stop_above is not None and s > stop_above:
            return s
    return s


def surrogate_gram(mats, Q=None):
    """Gram matrix of the alpha=2 surrogate: sum_l B_l^T Q B_l (exact for Q=None)."""
    d = len(mats[0])
    if Q is None:
        g = [[0] * d for _ in range(d)]
        for m in mats:
            for i in range(d):
                for j in range(i + 1):
                    acc = 0
                    for r in range(d):
                        acc += m[r][i] * m[r][j]
                    g[i][j] += acc
        for i in range(d):
            for j in range(i + 1, d):
                g[i][j] = g[j][i]
        return g
    g = [[0.0] * d for _ in range(d)]
    for m in mats:
        qb = [[sum(Q[i][r] * float(m[r][j]) for r in range(d)) for j in range(d)]
              for i in range(d)]
        for i in range(d):
            for j in range(d):
                g[i][j] += sum(float(m[r][i]) * qb[r][j] for r in range(d))
    return g


def gauss_reduce_2d(a, b, c):
    """Lagrange-Gauss reduction of the binary form [a b; b c].

    Returns (a, b, c, basis) with 2|b| <= a <= c and basis columns u1, u2
    expressing the reduced basis in the original coordinates; a is the exact
    minimum of the form over nonzero integer vectors.
    """
    u11, u21, u12, u22 = 1, 0, 0, 1
    for _ in range(100000):
        if a > c:
            a, c = c, a
            u11, u12 = u12, u11
            u21, u22 = u22, u21
        if isinstance(a, int) and isinstance(b, int):
            mu = (2 * b + a) // (2 * a)
        else:
            mu = round(b / a)
        if mu == 0:
            break
        c = c - 2 * mu * b + mu * mu * a
        b = b - mu * a
        u12 -= mu * u11
        u22 -= mu * u21
    if a > c:
        a, c = c, a
        u11, u12 = u12, u11
        u21, u22 = u22, u21
    return a, b, c, ((u11, u12), (u21, u22))


def enumerate_form_below(a, b, c, basis, bound):
    """All k (one per +-pair) with q(k) <= bound for the reduced form.

    Yields vectors in the original coordinates.  Ranges are computed in
    floating point with a widening margin and verified exactly.
    """
    det = a * c - b * b
    if det <= 0:
        raise ValueError("form is not positive definite")
    fa, fb, fdet, fB = float(a), float(b), float(det), float(bound)
    y_max = int(math.floor(math.sqrt(max(fB * fa / fdet, 0.0)))) + 2
    (u11, u12), (u21, u22) = basis
    for y in range(0, y_max + 1):
        rad2 = (fB - fdet / fa * y * y) / fa
        if rad2 < -1e-9:
            continue
        rad = math.sqrt(max(rad2, 0.0))
        center = -fb * y / fa
        x_lo = math.floor(center - rad) - 1
        x_hi = math.ceil(center + rad) + 1
        for x in range(x_lo, x_hi + 1):
            if y == 0 and x <= 0:
                continue
            q = a * x * x + 2 * b * x * y + c * y * y
            if q <= bound:
                yield (u11 * x + u12 * y, u21 * x + u22 * y)


def min_orbit_sum(mats, alpha, Q=None, policy=None):
    """Certified minimum of S(k) = sum_l |B_l k|_Q^alpha over nonzero k.

    Returns (value, argmin).  Exact enumeration for d <= 2; growing-shell
    search with a PD-form certificate for d >= 3.
    """
    if not 0 < alpha <= 2:
        raise ValueError("alpha must lie in (0, 2]")
    d = len(mats[0])
    if d == 1:
        k = (1,)
        return orbit_sum(mats, alpha, k, Q), k
    if d == 2:
        return _min_orbit_sum_2d(mats, alpha, Q)
    return _min_orbit_sum_shells(mats, alpha, Q, policy or SearchPolicy())


def _min_orbit_sum_2d(mats, alpha, Q):
    g = surrogate_gram(mats, Q)
    a, b, c, basis = gauss_reduce_2d(g[0][0], g[0][1], g[1][1])
    (u11, u12), (u21, u22) = basis
    seeds = [(u11, u21), (u12, u22), (u11 + u12, u21 + u22), (u11 - u12, u21 - u22)]
    best, best_k = math.inf, None
    for k in seeds:
        if k == (0, 0):
            continue
        s = orbit_sum(mats, alpha, k, Q)
        if s < best:
            best, best_k = s, k
    if alpha == 2.0:
        # the surrogate is the objective itself; a is its exact minimum
        return float(a), (u11, u21)
    bound = best ** (2.0 / alpha)
    if isinstance(a, int):
        bound = int(bound) + 1
    for k in enumerate_form_below(a, b, c, basis, bound):
        s = orbit_sum(mats, alpha, k, Q, stop_above=best)
        if s < best:
            best, best_k = s, k
    return best, best_k


def _lambda_min(g):
    import numpy as np
    m = np.array([[float(x) for x in row] for row in g])
    scale = max(abs(m).max(), 1.0)
    return float(np.linalg.eigvalsh(m / scale).min() * scale)


def _min_orbit_sum_shells(mats, alpha, Q, policy):
    d = len(mats[0])
    lam = _lambda_min(surrogate_gram(mats, Q))
    if lam <= 0:
        raise ConfigurationError("surrogate form is not positive definite")
    cap = policy.radius_cap(d)
    best, best_k = math.inf, None
    radius = 1
    while radius <= cap:
        for k in _shell_points(d, radius):
            s = orbit_sum(mats, alpha, k, Q, stop_above=best)
            if s < best:
                best, best_k = s, k
        # any k beyond this radius has S(k) >= (lam * |k|^2)^(alpha/2)
        if (lam * (radius + 1) ** 2) ** (alpha / 2.0) >= best:
            return best, best_k
        radius *= policy.growth
    raise ConfigurationError(
        f"shell search not certified within max_radius={cap}; "
        "use d <= 2 exact search or a stronger decay envelope")


def _shell_points(d, radius):
    """Nonzero points with |k|_inf <= radius, one per +-pair."""
    rng = range(-radius, radius + 1)
    def rec(prefix):
        if len(prefix) == d:
            k = tuple(prefix)
            if any(k):
                # keep one representative of {k, -k}
                for v in k:
                    if v > 0:
                        yield k
                        return
                    if v < 0:
                        return
            return
        for v in rng:
            yield from rec(prefix + [v])
    yield from rec([])


def sup_orbit_product(value_at, envelope, eps, mats, policy=None):
    """Certified sup over nonzero k of prod_l |g_hat(eps * B_l k)|.

    `value_at(xi_vector)` evaluates |g_hat|; `envelope(r)` must dominate
    sup_{|xi| >= r} |g_hat(xi)|.  The certificate bounds the whole product
    by its first factor: |B_1 k| >= sigma_min(B_1) |k|_inf.
    """
    if envelope is None:
        raise ConfigurationError("custom symbol search requires a decay envelope",
                                 field="kernel.envelope")
    policy = policy or SearchPolicy()
    import numpy as np
    b1 = np.array([[float(x) for x in row] for row in mats[0]])
    sigma1 = float(np.linalg.svd(b1, compute_uv=False)[-1])
    if sigma1 <= 0:
        raise ConfigurationError("first orbit matrix is singular")
    d = len(mats[0])
    cap = policy.radius_cap(d)
    best, best_k = -math.inf, None
    radius = 1
    while radius <= cap:
        for k in _shell_points(d, radius):
            p = 1.0
            for m in mats:
                v = matvec(m, k)
                p *= abs(value_at(tuple(eps * float(x) for x in v)))
                if p <= (best if best > 0 else 0.0):
                    break
            if p > best:
                best, best_k = p, k
        if best > 0 and envelope(eps * sigma1 * (radius + 1)) <= best:
            return best, best_k
        radius *= policy.growth
    raise ConfigurationError(
        f"envelope search not certified within max_radius={cap}")
