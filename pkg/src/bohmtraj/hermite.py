"""Physicists' Hermite polynomials and the pair expressions built from them.

All functions work in the scaled variable ``z = sqrt(omega) * x`` except
:func:`antiderivative_zero_pair`, which needs omega explicitly. Scalars and
numpy arrays are both accepted for ``z``/``x``.
"""

import math

import numpy as np
from numpy.polynomial import hermite as npherm
from numpy.polynomial import polynomial as nppoly

MAX_INDEX = 32
SINGULAR_FLOOR = 1e-14


class HermiteIndexError(ValueError):
    """Quantum number outside 0..MAX_INDEX."""


class DegeneratePairError(ValueError):
    """Pair expression requested for two equal indices (bracket is zero)."""


class SingularPointError(ArithmeticError):
    """Expression evaluated on a bracket zero or a logarithmic node.

    ``axis`` is filled in by callers that know which coordinate failed.
    """

    def __init__(self, message, axis=None):
        super().__init__(message)
        self.axis = axis


def check_index(n):
    if isinstance(n, bool) or int(n) != n:
        raise HermiteIndexError(f"Hermite index must be an integer, got {n!r}")
    n = int(n)
    if n < 0 or n > MAX_INDEX:
        raise HermiteIndexError(f"Hermite index {n} outside 0..{MAX_INDEX}")
    return n


def _table(nmax, z):
    """Rows H_0..H_nmax at z by upward recurrence."""
    z = np.asarray(z, dtype=float)
    out = np.empty((nmax + 1,) + z.shape)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = 2.0 * z
    for k in range(1, nmax):
        out[k + 1] = 2.0 * z * out[k] - 2.0 * k * out[k - 1]
    return out


def _scalarize(value, like):
    return float(value) if np.ndim(like) == 0 else value


def evaluate(n, z):
    """H_n(z) via H_{k+1} = 2z H_k - 2k H_{k-1}."""
    n = check_index(n)
    return _scalarize(_table(n, z)[n], z)


def evaluate_with_derivative(n, z):
    """Return ``(H_n(z), H_n'(z))`` using H_n' = 2n H_{n-1}."""
    n = check_index(n)
    rows = _table(n, z)
    value = rows[n]
    deriv = 2.0 * n * rows[n - 1] if n > 0 else np.zeros_like(value)
    return _scalarize(value, z), _scalarize(deriv, z)


def bracket(a, b, z):
    """[H_a, H_b](z) = H_a H_b' - H_a' H_b, derivative taken in z."""
    a = check_index(a)
    b = check_index(b)
    rows = _table(max(a, b), z)
    ha, hb = rows[a], rows[b]
    dha = 2.0 * a * rows[a - 1] if a > 0 else 0.0
    dhb = 2.0 * b * rows[b - 1] if b > 0 else 0.0
    return _scalarize(ha * dhb - dha * hb, z)


def integrand(a, b, z, floor=SINGULAR_FLOOR, singular="raise"):
    """H_a H_b / [H_a, H_b] in the z variable.

    A point counts as singular when ``|[H_a, H_b]| < floor * max(|H_a H_b|, 1)``.
    With ``singular="raise"`` such points raise :class:`SingularPointError`;
    with ``singular="nan"`` they come back as NaN.
    """
    a = check_index(a)
    b = check_index(b)
    if a == b:
        raise DegeneratePairError(f"bracket [H_{a}, H_{a}] vanishes identically")
    rows = _table(max(a, b), z)
    ha, hb = rows[a], rows[b]
    dha = 2.0 * a * rows[a - 1] if a > 0 else 0.0
    dhb = 2.0 * b * rows[b - 1] if b > 0 else 0.0
    num = ha * hb
    den = ha * dhb - dha * hb
    bad = np.abs(den) < floor * np.maximum(np.abs(num), 1.0)
    if np.any(bad) and singular == "raise":
        raise SingularPointError(f"[H_{a}, H_{b}] vanishes at z={z}")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(bad, np.nan, num / np.where(bad, 1.0, den))
    return _scalarize(out, z)


def leading_coefficient(n, omega):
    """Coefficient of x^n in H_n(sqrt(omega) x)."""
    return 2.0 ** n * omega ** (0.5 * n)


def antiderivative_zero_pair(k, omega, x, floor=SINGULAR_FLOOR, singular="raise"):
    """(x^2 - ln|H_{k-1}(sqrt(omega) x)| / omega) / (2k).

    This is the x-antiderivative of H_k / (dH_k/dx), i.e. of the pair
    integrand for indices (0, k). It is singular on the zeros of H_{k-1}.
    """
    k = check_index(k)
    if k < 1:
        raise DegeneratePairError("zero-index pair needs k >= 1")
    x = np.asarray(x, dtype=float)
    z = math.sqrt(omega) * x
    hk1 = _table(k - 1, z)[k - 1]
    # magnitude of the individual monomials, so the test is scale-free
    scale = np.maximum(nppoly.polyval(np.abs(z), np.abs(power_coefficients(k - 1))), 1.0)
    bad = np.abs(hk1) < floor * scale
    if np.any(bad) and singular == "raise":
        raise SingularPointError(f"H_{k - 1} vanishes at x={x}")
    with np.errstate(divide="ignore"):
        log_term = np.log(np.abs(np.where(bad, 1.0, hk1)))
    out = np.where(bad, np.nan, (x * x - log_term / omega) / (2.0 * k))
    return _scalarize(out, x)


def power_coefficients(n):
    """Monomial coefficients (ascending) of H_n, exact for n <= MAX_INDEX."""
    n = check_index(n)
    c = np.zeros(n + 1)
    c[n] = 1.0
    return npherm.herm2poly(c)


def bracket_coefficients(a, b):
    """Monomial coefficients (ascending, in z) of [H_a, H_b]."""
    pa = power_coefficients(a)
    pb = power_coefficients(b)
    out = nppoly.polysub(nppoly.polymul(pa, nppoly.polyder(pb)),
                         nppoly.polymul(nppoly.polyder(pa), pb))
    return nppoly.polytrim(out)


def bracket_roots(a, b):
    """Sorted distinct real zeros (in z) of [H_a, H_b].

    These are exactly the poles of the pair integrand, so they split the
    real line into the branches on which a pair antiderivative is defined.
    The bracket has definite parity, so roots are found in u = z^2 after
    stripping the exact power of z.
    """
    a = check_index(a)
    b = check_index(b)
    if a == b:
        raise DegeneratePairError("equal indices have no bracket")
    c = bracket_coefficients(a, b)
    nz = 0
    while nz < len(c) and c[nz] == 0.0:
        nz += 1
    rest = c[nz:]
    roots = [0.0] if nz > 0 else []
    # parity: only every other coefficient is non-zero
    even = rest[::2]
    if len(even) > 1:
        u = nppoly.polyroots(even)
        for r in u:
            if abs(r.imag) <= 1e-9 * max(1.0, abs(r.real)) and r.real > 0:
                s = math.sqrt(r.real)
                roots.extend([-s, s])
    roots = sorted(roots)
    distinct = []
    for r in roots:
        if not distinct or abs(r - distinct[-1]) > 1e-9:
            distinct.append(r)
    return np.array(distinct)
