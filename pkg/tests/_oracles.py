"""Reference computations kept independent of the package internals."""
from fractions import Fraction

import mpmath


def charpoly(m):
    """Characteristic polynomial coefficients (highest degree first), exact.

    Faddeev-LeVerrier recursion over rationals.
    """
    n = len(m)
    A = [[Fraction(v) for v in row] for row in m]
    coeffs = [Fraction(1)]
    M = [[Fraction(0)] * n for _ in range(n)]
    for k in range(1, n + 1):
        AM = [[sum(A[i][l] * M[l][j] for l in range(n)) for j in range(n)] for i in range(n)]
        for i in range(n):
            AM[i][i] += coeffs[-1]
        M = AM
        AM = [[sum(A[i][l] * M[l][j] for l in range(n)) for j in range(n)] for i in range(n)]
        coeffs.append(-sum(AM[i][i] for i in range(n)) / k)
    return coeffs


# exact polynomial helpers, coefficients highest degree first


def _trim(p):
    i = 0
    while i < len(p) - 1 and p[i] == 0:
        i += 1
    return p[i:]


def _monic(p):
    p = _trim(p)
    return [c / p[0] for c in p]


def _deriv(p):
    n = len(p) - 1
    return _trim([c * (n - i) for i, c in enumerate(p[:-1])]) or [Fraction(0)]


def _divmod(a, b):
    a, b = _trim(list(a)), _trim(b)
    q = [Fraction(0)] * max(1, len(a) - len(b) + 1)
    while len(a) >= len(b) and any(a):
        k = len(a) - len(b)
        f = a[0] / b[0]
        q[len(q) - 1 - k] = f
        a = [x - f * y for x, y in zip(a, b + [Fraction(0)] * k)]
        a = _trim(a[1:]) if len(a) > 1 else [Fraction(0)]
    return _trim(q), a


def _sub(a, b):
    n = max(len(a), len(b))
    a = [Fraction(0)] * (n - len(a)) + a
    b = [Fraction(0)] * (n - len(b)) + b
    return _trim([x - y for x, y in zip(a, b)])


def _gcd(a, b):
    a, b = _trim(a), _trim(b)
    while any(b):
        _, r = _divmod(a, b)
        a, b = b, r
    return _monic(a)


def squarefree_factors(p):
    """Yun's algorithm: [(factor, multiplicity)] with distinct simple roots."""
    f = _monic(p)
    if len(f) == 1:
        return []
    fp = _deriv(f)
    a = _gcd(f, fp)
    b, _ = _divmod(f, a)
    c, _ = _divmod(fp, a)
    d = _sub(c, _deriv(b))
    out, i = [], 1
    while len(b) > 1:
        a = _gcd(b, d)
        b, _ = _divmod(b, a)
        c, _ = _divmod(d, a)
        d = _sub(c, _deriv(b))
        if len(a) > 1:
            out.append((a, i))
        i += 1
    return out


def charpoly_roots(m, dps=50):
    """Eigenvalues from the exact characteristic polynomial, ascending."""
    roots = []
    with mpmath.workdps(dps):
        for factor, mult in squarefree_factors(charpoly(m)):
            coeffs = [mpmath.mpf(c.numerator) / c.denominator for c in factor]
            if len(coeffs) == 2:
                found = [-coeffs[1] / coeffs[0]]
            else:
                found = mpmath.polyroots(coeffs, maxsteps=200, extraprec=2 * dps)
            roots.extend([float(mpmath.re(r))] * mult for r in found)
    return sorted(v for group in roots for v in group)
