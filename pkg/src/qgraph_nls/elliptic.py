"""Complete and incomplete elliptic integrals and Jacobi elliptic functions.

K and E come from the arithmetic-geometric mean, sn/cn/dn and am from the
descending Landen (AGM) recursion, and F(phi; k) from Carlson's symmetric
integral R_F, which stays well defined at k = 1.

Every function accepts scalars or numpy arrays and broadcasts.
"""

import numpy as np

_EPS = np.finfo(float).eps
_MAX_ITER = 64


class EllipticDomainError(ValueError):
    """Raised when a modulus or amplitude lies outside the supported range."""


def _as_modulus(k, allow_one=False):
    k = np.asarray(k, dtype=float)
    upper_ok = k <= 1.0 if allow_one else k < 1.0
    if not np.all((k >= 0.0) & upper_ok):
        bound = "[0, 1]" if allow_one else "[0, 1)"
        raise EllipticDomainError(f"modulus k must lie in {bound}")
    return k


def _scalar_or_array(x):
    return x.item() if np.ndim(x) == 0 else x


def complementary_modulus(k):
    """k' = sqrt(1 - k^2), computed as sqrt((1-k)(1+k)) to keep accuracy near 1."""
    k = np.asarray(k, dtype=float)
    return _scalar_or_array(np.sqrt((1.0 - k) * (1.0 + k)))


def _kprime(k, kprime):
    if kprime is None:
        return np.sqrt((1.0 - k) * (1.0 + k))
    kp = np.broadcast_to(np.asarray(kprime, dtype=float), np.shape(k))
    if not np.all((kp > 0.0) & (kp <= 1.0)):
        raise EllipticDomainError("complementary modulus must lie in (0, 1]")
    return kp


def _agm_sequence(k, kprime=None):
    """AGM ladder a_n, b_n, c_n started from (1, k', k).

    Returns stacked arrays of shape (n_levels, *k.shape). The ladder is run
    until every entry has c_n <= eps * a_n; the trailing levels are exact
    for entries that converged earlier (c = 0 there). Passing k' explicitly
    keeps full relative accuracy when k is within rounding of 1.
    """
    a = np.ones_like(k)
    b = _kprime(k, kprime).copy()
    c = k.copy()
    As, Cs = [a], [c]
    for _ in range(_MAX_ITER):
        if np.all(np.abs(c) <= _EPS * a):
            break
        a, b, c = 0.5 * (a + b), np.sqrt(a * b), 0.5 * (a - b)
        As.append(a)
        Cs.append(c)
    else:
        raise RuntimeError("AGM did not converge")
    return np.stack(As), np.stack(Cs)


def complete_K(k, kprime=None):
    """Complete elliptic integral of the first kind, 0 <= k < 1.

    With an explicit k' > 0, k may have rounded to 1.
    """
    k = _as_modulus(k, allow_one=kprime is not None)
    a, _ = _agm_sequence(k, kprime)
    return _scalar_or_array(np.pi / (2.0 * a[-1]))


def complete_K_from_kprime(kp):
    """K as a function of the complementary modulus, 0 < k' <= 1.

    Stays accurate when k is so close to 1 that k itself rounds to 1.
    """
    kp = np.asarray(kp, dtype=float)
    if not np.all((kp > 0.0) & (kp <= 1.0)):
        raise EllipticDomainError("complementary modulus must lie in (0, 1]")
    a, b = np.ones_like(kp), kp.copy()
    for _ in range(_MAX_ITER):
        if np.all(np.abs(a - b) <= _EPS * a):
            break
        a, b = 0.5 * (a + b), np.sqrt(a * b)
    return _scalar_or_array(np.pi / (a + b))


def complete_E(k):
    """Complete elliptic integral of the second kind, 0 <= k <= 1."""
    k = _as_modulus(k, allow_one=True)
    one = k == 1.0
    ks = np.where(one, 0.0, k)
    a, c = _agm_sequence(ks)
    weights = 2.0 ** (np.arange(a.shape[0]) - 1.0)
    weights = weights.reshape((-1,) + (1,) * ks.ndim)
    K = np.pi / (2.0 * a[-1])
    E = K * (1.0 - np.sum(weights * c**2, axis=0))
    return _scalar_or_array(np.where(one, 1.0, E))


def complete_KE(k, kprime=None):
    """(K(k), E(k)) from a single AGM ladder."""
    k = _as_modulus(k, allow_one=kprime is not None)
    a, c = _agm_sequence(k, kprime)
    weights = 2.0 ** (np.arange(a.shape[0]) - 1.0)
    weights = weights.reshape((-1,) + (1,) * k.ndim)
    K = np.pi / (2.0 * a[-1])
    E = K * (1.0 - np.sum(weights * c**2, axis=0))
    return _scalar_or_array(K), _scalar_or_array(E)


def carlson_rf(x, y, z):
    """Carlson's symmetric integral R_F(x, y, z) by duplication.

    At most one of x, y, z may vanish.
    """
    x, y, z = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (x, y, z)))
    x0, y0 = x, y
    A0 = (x + y + z) / 3.0
    Q = (3.0 * _EPS) ** (-1.0 / 8.0) * np.maximum.reduce(
        [np.abs(A0 - x), np.abs(A0 - y), np.abs(A0 - z)])
    A = A0.copy()
    scale = np.ones_like(A)
    for _ in range(_MAX_ITER):
        if np.all(Q * scale <= np.abs(A)):
            break
        sx, sy, sz = np.sqrt(x), np.sqrt(y), np.sqrt(z)
        lam = sx * sy + sx * sz + sy * sz
        x, y, z = 0.25 * (x + lam), 0.25 * (y + lam), 0.25 * (z + lam)
        A = 0.25 * (A + lam)
        scale = 0.25 * scale
    X = scale * (A0 - x0) / A
    Y = scale * (A0 - y0) / A
    Zc = -(X + Y)
    E2 = X * Y - Zc * Zc
    E3 = X * Y * Zc
    series = (1.0 - E2 / 10.0 + E3 / 14.0 + E2 * E2 / 24.0 - 3.0 * E2 * E3 / 44.0
              - 5.0 * E2**3 / 208.0 + 3.0 * E3**2 / 104.0 + E2**2 * E3 / 16.0)
    return _scalar_or_array(series / np.sqrt(A))


def incomplete_F(phi, k):
    """Incomplete elliptic integral of the first kind F(phi; k).

    Accepts 0 <= k <= 1; at k = 1 the amplitude must satisfy |phi| < pi/2.
    For k < 1 and |phi| > pi/2 the quasi-periodicity F(phi + m*pi) =
    F(phi) + 2mK is used.
    """
    k = _as_modulus(k, allow_one=True)
    phi = np.asarray(phi, dtype=float)
    phi, k = np.broadcast_arrays(phi, k)
    one = k == 1.0
    if np.any(one & (np.abs(phi) >= np.pi / 2)):
        raise EllipticDomainError("F(phi; 1) requires |phi| < pi/2")
    m = np.round(phi / np.pi)
    m = np.where(one, 0.0, m)
    r = phi - m * np.pi
    s = np.sin(r)
    c = np.cos(r)
    F = s * carlson_rf(c * c, (1.0 - k * s) * (1.0 + k * s), np.ones_like(s))
    if np.any(m != 0):
        F = F + 2.0 * m * complete_K(np.where(one, 0.0, k))
    return _scalar_or_array(np.asarray(F))


def _landen_phases(u, k, kprime=None):
    """Amplitude am(u) by the descending Landen recursion, plus the phase one
    level up and the number of levels. u is already reduced to [-2K, 2K].
    """
    a, c = _agm_sequence(k, kprime)
    n = a.shape[0] - 1
    phi = (2.0**n) * a[-1] * u
    prev = phi
    for j in range(n, 0, -1):
        prev = phi
        phi = 0.5 * (phi + np.arcsin(np.clip(c[j] / a[j] * np.sin(phi), -1.0, 1.0)))
    return phi, prev, n


def _reduce(u, k, period_quarters=4, kprime=None):
    K = complete_K(k, kprime)
    period = period_quarters * np.asarray(K)
    m = np.round(u / period)
    return u - m * period, m


def jacobi_sn_cn_dn(u, k, kprime=None):
    """Return (sn, cn, dn) of u with modulus 0 <= k < 1.

    kprime, if given, is used in place of sqrt(1 - k^2) (k may then have
    rounded to 1).
    """
    k = _as_modulus(k, allow_one=kprime is not None)
    u = np.asarray(u, dtype=float)
    u, k = np.broadcast_arrays(u, k)
    k = np.array(k)
    kp = None if kprime is None else np.array(_kprime(k, kprime))
    ur, _ = _reduce(u, k, kprime=kp)
    phi0, _, _ = _landen_phases(ur, k, kp)
    sn = np.sin(phi0)
    cn = np.cos(phi0)
    # dn from dn^2 = 1 - k^2 sn^2 = k'^2 + k^2 cn^2, using whichever form
    # has no cancellation at this point
    kp2 = (1.0 - k) * (1.0 + k) if kp is None else kp * kp
    dn = np.where(np.abs(sn) < 0.7,
                  np.sqrt((1.0 - k * sn) * (1.0 + k * sn)),
                  np.sqrt(kp2 + (k * cn) ** 2))
    return _scalar_or_array(sn), _scalar_or_array(cn), _scalar_or_array(dn)


def jacobi_am(u, k):
    """Jacobi amplitude am(u, k), 0 <= k < 1, continuous and increasing in u."""
    k = _as_modulus(k)
    u = np.asarray(u, dtype=float)
    u, k = np.broadcast_arrays(u, k)
    k = np.array(k)
    ur, m = _reduce(u, k, period_quarters=2)
    phi0, _, _ = _landen_phases(ur, k)
    return _scalar_or_array(phi0 + m * np.pi)


def dK_dk(k):
    """dK/dk = (E - k'^2 K) / (k k'^2); the k -> 0 limit 0 is returned at k = 0."""
    k = _as_modulus(k)
    K, E = complete_KE(k)
    kp2 = (1.0 - k) * (1.0 + k)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = (E - kp2 * K) / (k * kp2)
    return _scalar_or_array(np.where(k == 0.0, 0.0, d))


def dE_dk(k):
    """dE/dk = (E - K) / k; the k -> 0 limit 0 is returned at k = 0."""
    k = _as_modulus(k)
    K, E = complete_KE(k)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = (np.asarray(E) - K) / k
    return _scalar_or_array(np.where(k == 0.0, 0.0, d))
