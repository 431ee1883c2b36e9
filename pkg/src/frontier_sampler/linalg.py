"""Matrix square roots, rank-one identities and Haar rotations.

The closed-form rank-one square roots let the exact samplers avoid any
per-draw matrix factorization: the only factorizations happen once, on
population objects.  Every routine here that factorizes a matrix reports to
:data:`FACTORIZATIONS`, so callers can assert that a hot loop performs none.

Square roots are not unique.  The factors returned here satisfy
``X @ X.T == target``; they are compared through that product, never
entrywise.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NotPositiveDefinite, NotPositiveSemiDefinite

__all__ = [
    "FACTORIZATIONS",
    "FactorizationCounter",
    "SqrtFactor",
    "cho_factor",
    "cho_solve",
    "haar_orthogonal",
    "sqrt_downdate",
    "sqrt_downdate_apply",
    "sqrt_update_identity",
    "sqrt_update_identity_apply",
    "sym_sqrt",
]

_TINY = 1e-14


class FactorizationCounter:
    """Counts matrices passed through an eigen or Cholesky factorization."""

    def __init__(self) -> None:
        self.count = 0

    def add(self, n: int = 1) -> None:
        self.count += n

    @contextlib.contextmanager
    def track(self):
        """Yield a one-element list holding the number of factorizations
        performed inside the ``with`` block once it exits."""
        start = self.count
        out = [0]
        try:
            yield out
        finally:
            out[0] = self.count - start


FACTORIZATIONS = FactorizationCounter()


@dataclass(frozen=True)
class SqrtFactor:
    """A square-root factor ``matrix`` with ``matrix @ matrix.T == target``.

    ``symmetric`` is true for eigendecomposition roots and for the identity
    update; the downdate of a general ``D`` produces a non-symmetric factor.
    """

    matrix: np.ndarray
    source_rank_one: bool
    symmetric: bool = True

    def square(self) -> np.ndarray:
        return self.matrix @ self.matrix.T


def cho_factor(a: np.ndarray):
    """Lower Cholesky factor of ``a`` (counted)."""
    FACTORIZATIONS.add()
    return scipy.linalg.cho_factor(a, lower=True, check_finite=False)


def cho_solve(factor, b: np.ndarray) -> np.ndarray:
    return scipy.linalg.cho_solve(factor, b, check_finite=False)


def _eigh(m: np.ndarray):
    FACTORIZATIONS.add()
    return np.linalg.eigh(m)


def sym_sqrt(m: np.ndarray, *, inverse: bool = False) -> SqrtFactor:
    """Symmetric PSD square root (or inverse square root) of ``m``.

    Eigenvalues in ``[-1e-8, 0)`` relative to the largest are clamped to zero;
    anything more negative raises :class:`NotPositiveSemiDefinite`.
    """
    m = np.asarray(m, dtype=float)
    m = 0.5 * (m + m.T)
    lam, u = _eigh(m)
    lam_max = max(lam[-1], 0.0)
    if lam[0] < -1e-8 * lam_max:
        raise NotPositiveSemiDefinite(
            f"smallest eigenvalue {lam[0]:.3e} is below -1e-8 * {lam_max:.3e}"
        )
    lam = np.clip(lam, 0.0, None)
    if inverse:
        if lam[0] <= 0.0:
            raise NotPositiveDefinite("inverse square root of a singular matrix")
        root = 1.0 / np.sqrt(lam)
    else:
        root = np.sqrt(lam)
    mat = (u * root) @ u.T
    return SqrtFactor(0.5 * (mat + mat.T), source_rank_one=False)


def _downdate_coef(one_minus_x):
    # (1 - sqrt(1-x)) / x rewritten without the removable singularity at x = 0
    return 1.0 / (1.0 + np.sqrt(one_minus_x))


def sqrt_downdate(d_sqrt: np.ndarray, d_inv_b: np.ndarray, b: np.ndarray) -> SqrtFactor:
    """Square root of ``D - b b^T`` from a symmetric root of ``D``.

    Uses ``D^{1/2} (I - c D^{-1/2} b b^T D^{-1/2})`` with
    ``c = (1 - sqrt(1 - b^T D^{-1} b)) / b^T D^{-1} b``.  Since ``d_sqrt`` is
    symmetric, ``D^{-1/2} b = D^{1/2} (D^{-1} b)`` and no inverse root is needed.
    """
    d_sqrt = np.asarray(d_sqrt, dtype=float)
    d_inv_b = np.asarray(d_inv_b, dtype=float)
    b = np.asarray(b, dtype=float)
    x = float(b @ d_inv_b)
    if x >= 1.0 - 1e-12:
        raise NotPositiveDefinite(f"b^T D^-1 b = {x:.6g} >= 1; D - b b^T is not PD")
    if x < _TINY:
        return SqrtFactor(d_sqrt.copy(), source_rank_one=True, symmetric=True)
    u = d_sqrt @ d_inv_b
    c = _downdate_coef(1.0 - x)
    # D^{1/2} u = b
    mat = d_sqrt - c * np.outer(b, u)
    return SqrtFactor(mat, source_rank_one=True, symmetric=False)


def sqrt_update_identity(d: np.ndarray) -> SqrtFactor:
    """Symmetric square root ``I + a d d^T`` of ``I + d d^T``."""
    d = np.asarray(d, dtype=float)
    dd = float(d @ d)
    a = 1.0 / (np.sqrt(1.0 + dd) + 1.0)
    return SqrtFactor(np.eye(d.size) + a * np.outer(d, d), source_rank_one=True)


def sqrt_downdate_apply(d_sqrt, d_inv_sqrt, b, vecs, one_minus_x=None):
    """Batched product ``(D - b b^T)^{1/2} v`` for rows of ``b`` and ``vecs``.

    ``b`` and ``vecs`` have shape ``(B, k)``.  ``one_minus_x`` may carry an
    accurate value of ``1 - b^T D^{-1} b`` when the caller knows one.
    Performs no factorization.
    """
    u = b @ d_inv_sqrt.T
    if one_minus_x is None:
        one_minus_x = 1.0 - np.einsum("ij,ij->i", u, u)
    c = _downdate_coef(one_minus_x)
    proj = np.einsum("ij,ij->i", u, vecs)
    return (vecs - (c * proj)[:, None] * u) @ d_sqrt.T


def sqrt_update_identity_apply(d, vecs):
    """Batched product ``(I + d d^T)^{1/2} v`` for rows of ``d`` and ``vecs``."""
    dd = np.einsum("ij,ij->i", d, d)
    a = 1.0 / (np.sqrt(1.0 + dd) + 1.0)
    proj = np.einsum("ij,ij->i", d, vecs)
    return vecs + (a * proj)[:, None] * d


def haar_orthogonal(p: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed ``p x p`` orthogonal matrix (QR with sign-fixed R)."""
    if p < 1:
        raise ValueError("p must be >= 1")
    z = rng.standard_normal((p, p))
    q, r = np.linalg.qr(z)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs
