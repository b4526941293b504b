"""Numerical kernels shared by the beamformers and the rate bound."""

import math

import numpy as np
from scipy import integrate, special

# Hermitian check tolerance for Rayleigh-quotient denominators.
HERMITIAN_TOL = 1e-10

# Above this argument (and above s) the continued fraction converges fast.
_CF_THRESHOLD = 1.0
_CF_MAX_TERMS = 5000
_TINY = 1e-300


def _as_matrix(g):
    g = np.asarray(g, dtype=complex)
    if g.ndim == 1:
        g = g[np.newaxis, :]
    if g.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("matrix has non-finite entries")
    return g


def smallest_right_singular_vector(g):
    """Unit vector ``w`` minimizing ``||g w||^2``.

    Parameters
    ----------
    g : array_like, shape (rows, n_t)
        Stacked conjugated channels (one channel per row, ``h^H``). A 1-D
        input is treated as a single row.

    Returns
    -------
    numpy.ndarray
        Right singular vector associated with the smallest singular value.
        When ``rows < n_t`` this is a null-space direction. The global phase
        is whatever the decomposition returns.
    """
    g = _as_matrix(g)
    if g.shape[1] < 2:
        raise ValueError("need at least two columns (antennas)")
    _, _, vh = np.linalg.svd(g, full_matrices=True)
    return vh[-1].conj()


def dominant_rayleigh_vector(h, b):
    """Maximizer of ``|h^H w|^2 / (w^H b w)`` over unit vectors.

    The numerator matrix ``h h^H`` has rank one, so the generalized
    eigenvector is collinear with ``b^{-1} h``; no eigendecomposition is done.
    """
    h = np.asarray(h, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if h.ndim != 1 or b.shape != (h.size, h.size):
        raise ValueError(f"dimension mismatch: h {h.shape}, b {b.shape}")
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(b))):
        raise ValueError("non-finite input")
    scale = max(np.abs(b).max(), 1.0)
    if np.abs(b - b.conj().T).max() > HERMITIAN_TOL * scale:
        raise ValueError("b is not Hermitian")
    try:
        c = np.linalg.cholesky(b)
    except np.linalg.LinAlgError as exc:
        raise ValueError("b is not positive definite") from exc
    y = np.linalg.solve(c, h)
    x = np.linalg.solve(c.conj().T, y)
    return x / np.linalg.norm(x)


def _gamma_cf(s, x):
    # Legendre continued fraction, modified Lentz evaluation.
    b = x + 1.0 - s
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _CF_MAX_TERMS):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    else:
        raise ArithmeticError(f"continued fraction did not converge for s={s}, x={x}")
    return math.exp(-x + s * math.log(x)) * h


def _gamma_positive(s, x):
    return float(special.gammaincc(s, x) * special.gamma(s))


def _gamma_head(s, x):
    # int_x^1 t^(s-1) e^-t dt with t = x e^v, scaled by x^-s: the integrand
    # exp(s v - x e^v) is at most x^-s <= 1/x for s <= 1.
    upper = -math.log(x)
    val, _ = integrate.quad(lambda v: math.exp(s * v - x * math.exp(v)), 0.0, upper,
                            epsabs=0.0, epsrel=2e-14, limit=400)
    return val


def upper_incomplete_gamma(s, x):
    """Upper incomplete gamma ``Gamma(s, x) = int_x^inf t^(s-1) e^(-t) dt``.

    Works for any real ``s`` with ``|s| <= 64``, including the non-positive
    integers needed by the global-rate bound. For ``x > max(1, s)`` the
    Legendre continued fraction is used. For ``s <= 1`` and ``x <= 1`` the
    integral is split at 1, ``Gamma(s, x) = Gamma(s, 1) + int_x^1 ...``;
    both parts are positive, so unlike the downward recurrence in ``s``
    there is no cancellation near integer orders. Orders above 1 with
    ``x <= s`` use ``gammaincc * gamma``.
    """
    s = float(s)
    x = float(x)
    if not (math.isfinite(s) and math.isfinite(x)):
        raise ValueError("non-finite input")
    if x <= 0:
        raise ValueError(f"x must be positive, got {x}")
    if abs(s) > 64:
        raise ValueError(f"|s| must be <= 64, got {s}")

    if x > max(_CF_THRESHOLD, s):
        return _gamma_cf(s, x)
    if s > 1:
        return _gamma_positive(s, x)
    if x == 1.0:
        return _gamma_cf(s, 1.0)
    with np.errstate(over="raise"):
        try:
            return _gamma_cf(s, 1.0) + math.exp(s * math.log(x)) * _gamma_head(s, x)
        except (OverflowError, FloatingPointError):
            raise OverflowError(f"Gamma({s}, {x}) exceeds the float range") from None
