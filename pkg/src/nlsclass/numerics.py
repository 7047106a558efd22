"""Dense linear-algebra helpers: SVD null spaces and rational snapping."""
from __future__ import annotations

from fractions import Fraction

import numpy as np

SVD_CUTOFF = 1e-8
SNAP_DENOMINATOR = 64
SNAP_TOLERANCE = 1e-6


def null_space(a: np.ndarray, rcond: float = SVD_CUTOFF):
    """Return (basis, singular_values, gap) for the null space of ``a``.

    Singular values below ``rcond * s_max`` count as zero.  ``gap`` is the
    ratio between the smallest retained and the largest discarded singular
    value (``inf`` when nothing is discarded or nothing retained).
    """
    a = np.atleast_2d(a)
    m, n = a.shape
    _, s, vh = np.linalg.svd(a, full_matrices=True)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s > rcond * smax)) if smax > 0 else 0
    basis = vh[rank:].conj().T
    full = np.zeros(n)
    full[: s.size] = s
    if 0 < rank < n:
        gap = full[rank - 1] / full[rank] if full[rank] > 0 else np.inf
    else:
        gap = np.inf
    return basis, full, float(gap)


def rref(rows: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Reduced row echelon form with partial pivoting (rows span is preserved)."""
    a = np.array(rows, dtype=complex, copy=True)
    if a.size == 0:
        return a
    m, n = a.shape
    r = 0
    for c in range(n):
        if r >= m:
            break
        p = r + int(np.argmax(np.abs(a[r:, c])))
        if abs(a[p, c]) < tol:
            continue
        a[[r, p]] = a[[p, r]]
        a[r] /= a[r, c]
        for i in range(m):
            if i != r:
                a[i] -= a[i, c] * a[r]
        r += 1
    return a[:r]


def snap(value: float, max_denominator: int = SNAP_DENOMINATOR,
         tol: float = SNAP_TOLERANCE) -> Fraction | None:
    """Nearest fraction with bounded denominator, or None if none is within ``tol``."""
    fr = Fraction(float(value)).limit_denominator(max_denominator)
    return fr if abs(float(fr) - value) <= tol else None


def snap_complex(value: complex, max_denominator: int = SNAP_DENOMINATOR,
                 tol: float = SNAP_TOLERANCE):
    """Snap real and imaginary parts; returns (re, im) Fractions or None."""
    re = snap(value.real, max_denominator, tol)
    im = snap(value.imag, max_denominator, tol)
    if re is None or im is None:
        return None
    return re, im
