"""Sampling primitives for the latent variables of the exact representations.

Multivariate t vectors use the identity scale matrix,
``t_k(nu) = N_k(0, I) / sqrt(chi2_nu / nu)``; callers apply any scale
factor themselves.
"""
from __future__ import annotations

import numpy as np


def _check_dof(dof, name="dof"):
    if np.any(np.asarray(dof) < 1):
        raise ValueError(f"{name} must be >= 1")


def sample_chi2(rng: np.random.Generator, dof, size=None):
    _check_dof(dof)
    return rng.chisquare(dof, size)


def sample_noncentral_chi2(rng: np.random.Generator, dof, nc, size=None):
    """Noncentral chi-square as a Poisson mixture of central chi-squares (exact)."""
    _check_dof(dof)
    if np.any(np.asarray(nc) < 0):
        raise ValueError("noncentrality must be >= 0")
    j = rng.poisson(np.asarray(nc) / 2.0, size)
    return rng.chisquare(dof + 2 * j)


def sample_student_t(rng: np.random.Generator, dof, size=None):
    _check_dof(dof)
    z = rng.standard_normal(size)
    return z / np.sqrt(rng.chisquare(dof, size) / dof)


def sample_mv_t(rng: np.random.Generator, k: int, dof, size: int):
    """``size`` draws of a k-variate t with identity scale, shape ``(size, k)``."""
    _check_dof(dof)
    z = rng.standard_normal((size, k))
    w = rng.chisquare(dof, size)
    return z / np.sqrt(w / dof)[:, None]


def sample_noncentral_f(rng: np.random.Generator, d1, d2, nc, size=None):
    num = sample_noncentral_chi2(rng, d1, nc, size) / d1
    den = sample_chi2(rng, d2, size) / d2
    return num / den


def sample_gaussian_vector(rng: np.random.Generator, cov_sqrt: np.ndarray, size: int):
    """Rows ``cov_sqrt @ z`` with z standard normal, covariance ``cov_sqrt cov_sqrt^T``."""
    cov_sqrt = np.atleast_2d(cov_sqrt)
    z = rng.standard_normal((size, cov_sqrt.shape[1]))
    return z @ cov_sqrt.T
