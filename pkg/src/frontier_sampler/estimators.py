"""Estimators computed from an observed ``n x p`` return matrix.

Plug-in estimators evaluate the population formulas at the sample mean and
covariance.  With ``p/n`` non-negligible they are biased, so bias-corrected
("consistent") versions, a plug-in estimate of their covariance, Wald-type
confidence ellipsoids and the dual test are provided as well.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import linalg
from .asymptotics import omega_consistent_terms
from .errors import InsufficientSample, NonpositiveSlopeEstimate, SingularOmega, SingularSampleCovariance
from .model import (
    FrontierQuantities,
    LinearCombination,
    PortfolioKind,
    PortfolioSpec,
    _frontier_from_moments,
    _g_array,
    characteristic_values,
    g_gradient,
    g_value,
)

logger = logging.getLogger(__name__)

__all__ = [
    "ConfidenceRegion",
    "ConsistentEstimates",
    "SampleEstimates",
    "WeightTest",
    "confidence_region",
    "consistent_estimates",
    "membership",
    "omega_hat_eu_display",
    "omega_hat_plugin",
    "read_returns_csv",
    "sample_estimates",
    "sample_moments",
    "test_weights",
]

SLOPE_MODES = ("verbatim", "centering_exact")


def sample_moments(x: np.ndarray):
    """Sample mean and the ``n - 1`` denominator sample covariance."""
    n = x.shape[0]
    mu_hat = x.mean(axis=0)
    xc = x - mu_hat
    sigma_hat = (xc.T @ xc) / (n - 1)
    return mu_hat, 0.5 * (sigma_hat + sigma_hat.T)


@dataclass(frozen=True, eq=False)
class SampleEstimates:
    mu_hat: np.ndarray
    sigma_hat: np.ndarray
    n: int
    frontier: FrontierQuantities

    @property
    def p(self) -> int:
        return self.mu_hat.size

    @property
    def v_hat(self) -> float:
        return self.frontier.v_gmv

    @property
    def w_hat(self) -> np.ndarray:
        return self.frontier.w_gmv

    @property
    def r_hat(self) -> float:
        return self.frontier.r_gmv

    @property
    def s_hat(self) -> float:
        return self.frontier.s

    @property
    def v_sf_hat(self) -> np.ndarray:
        return self.frontier.v_sf

    @property
    def q_hat(self) -> np.ndarray:
        return self.frontier.q


def sample_estimates(returns) -> SampleEstimates:
    """Plug-in frontier estimates from a return matrix (rows are periods)."""
    x = np.asarray(returns, dtype=float)
    if x.ndim != 2:
        raise ValueError("returns must be a 2-D array")
    n, p = x.shape
    if not np.all(np.isfinite(x)):
        raise ValueError("returns contain non-finite entries")
    if n <= p + 2:
        raise InsufficientSample(f"need n > p + 2, got n={n}, p={p}")
    mu_hat, sigma_hat = sample_moments(x)
    frontier = _frontier_from_moments(mu_hat, sigma_hat, SingularSampleCovariance)
    return SampleEstimates(mu_hat, sigma_hat, n, frontier)


@dataclass(frozen=True, eq=False)
class ConsistentEstimates:
    """Bias-corrected frontier estimates seen through ``L``.

    ``slope_ok`` is false when the corrected slope ``s_c`` is not positive; the
    ``eta``-dependent fields are then NaN.
    """

    v_c: float
    r_c: float
    s_c: float
    theta_c: np.ndarray
    eta_c: np.ndarray
    lw_c: np.ndarray
    lql_c: np.ndarray
    characteristics_c: np.ndarray | None
    slope_ok: bool
    n: int
    p: int
    spec: PortfolioSpec | None
    mode: str

    @property
    def c(self) -> float:
        return self.p / self.n


def corrected_slope(s_hat: float, n: int, p: int, mode: str = "verbatim") -> float:
    """``s_c`` from the plug-in slope.

    ``"verbatim"`` uses ``(n-p)/n (s_hat - p/(p+n))``; ``"centering_exact"``
    inverts the finite-n centring ``(s + p/n)(1 - 1/n)/(1 - p/n + 2/n)``.
    """
    if mode == "verbatim":
        return (n - p) / n * (s_hat - p / (p + n))
    if mode == "centering_exact":
        return s_hat * (1.0 - p / n + 2.0 / n) / (1.0 - 1.0 / n) - p / n
    raise ValueError(f"mode must be one of {SLOPE_MODES}, got {mode!r}")


def consistent_estimates(
    sample: SampleEstimates,
    lincomb: LinearCombination,
    spec: PortfolioSpec | None = None,
    mode: str = "verbatim",
    *,
    strict: bool = False,
) -> ConsistentEstimates:
    """Bias-corrected estimates; with ``strict`` a non-positive ``s_c`` raises."""
    n, p = sample.n, sample.p
    c = p / n
    if c >= 1.0:
        raise ValueError("need p < n")
    fr = sample.frontier
    l = lincomb.l
    v_c = fr.v_gmv / (1.0 - c)
    r_c = fr.r_gmv
    s_c = corrected_slope(fr.s, n, p, mode)
    theta_c = l @ fr.w_gmv
    lql_c = (1.0 - c) * fr.lql(l)
    slope_ok = bool(s_c > 0.0 and fr.slope_valid)
    k = lincomb.k
    if slope_ok:
        eta_c = (s_c + c) / s_c * (l @ fr.v_sf)
    else:
        msg = f"corrected slope s_c = {s_c:.4g} is not positive"
        if strict:
            raise NonpositiveSlopeEstimate(msg)
        logger.warning(msg)
        eta_c = np.full(k, np.nan)
    lw_c = chars = None
    if spec is not None:
        if spec.kind is PortfolioKind.GMV:
            lw_c = theta_c.copy()
        else:
            g, _ = _g_array(spec, r_c, v_c, s_c)
            lw_c = theta_c + g * eta_c
        chars = characteristic_values(spec, r_c, v_c, s_c) if slope_ok else np.full(6, np.nan)
    return ConsistentEstimates(
        v_c=v_c,
        r_c=r_c,
        s_c=s_c,
        theta_c=theta_c,
        eta_c=eta_c,
        lw_c=lw_c,
        lql_c=lql_c,
        characteristics_c=chars,
        slope_ok=slope_ok,
        n=n,
        p=p,
        spec=spec,
        mode=mode,
    )


def _floor_psd(omega: np.ndarray) -> np.ndarray:
    omega = 0.5 * (omega + omega.T)
    lam, u = np.linalg.eigh(omega)
    top = lam[-1]
    if not top > 0.0:
        raise SingularOmega("estimated covariance has no positive eigenvalue")
    lam = np.maximum(lam, 1e-12 * top)
    out = (u * lam) @ u.T
    return 0.5 * (out + out.T)


def omega_hat_plugin(spec: PortfolioSpec, consistent: ConsistentEstimates, *, form: str = "literal", floor: bool = True) -> np.ndarray:
    """Plug-in estimate of the covariance of the bias-corrected weights.

    Substitutes ``(R_c, V_c, s_c, eta_c, (1 - p/n) L Q_hat L', p/n)`` into the
    population formula; the result is symmetrised and its eigenvalues are
    floored at ``1e-12`` times the largest.
    """
    if not consistent.slope_ok:
        raise NonpositiveSlopeEstimate(f"s_c = {consistent.s_c:.4g} <= 0")
    r, v, s, c = consistent.r_c, consistent.v_c, consistent.s_c, consistent.c
    g = g_value(spec, r, v, s)
    g1, g2, g3 = g_gradient(spec, r, v, s)
    a, b = omega_consistent_terms(g, g1, g2, g3, v, s, c, form=form)
    omega = a * consistent.lql_c + b * np.outer(consistent.eta_c, consistent.eta_c)
    return _floor_psd(omega) if floor else 0.5 * (omega + omega.T)


def omega_hat_eu_display(gamma: float, consistent: ConsistentEstimates) -> np.ndarray:
    """The displayed closed form of the EU plug-in covariance."""
    s, c, v = consistent.s_c, consistent.c, consistent.v_c
    gi = 1.0 / gamma
    sc = s + c
    a = ((1.0 - c) / sc + sc * gi) * gi + v
    b = gi * gi * (
        2.0 * (1.0 - c) * c**3 / sc**2
        + 4.0 * (1.0 - c) * c * s * (s + 2.0 * c) / sc**2
        + 2.0 * (1.0 - c) * c * c * sc**2 / s**2
        - s * s
    )
    return a * consistent.lql_c + b * np.outer(consistent.eta_c, consistent.eta_c)


# --- confidence regions and tests --------------------------------------------


@dataclass(frozen=True, eq=False)
class ConfidenceRegion:
    """``{w : (n-p)(center - w)' Omega^-1 (center - w) <= chi2_{k;1-beta}}``."""

    center: np.ndarray
    omega: np.ndarray
    n: int
    p: int
    level: float
    chi2_quantile: float
    _factor: tuple

    @property
    def shape(self) -> np.ndarray:
        """``(n - p) Omega^-1``."""
        k = self.center.size
        return (self.n - self.p) * linalg.cho_solve(self._factor, np.eye(k))

    def statistic(self, r) -> float:
        d = self.center - np.asarray(r, dtype=float)
        return float((self.n - self.p) * d @ linalg.cho_solve(self._factor, d))

    def contains(self, r) -> bool:
        return self.statistic(r) <= self.chi2_quantile


@dataclass(frozen=True)
class WeightTest:
    reject: bool
    statistic: float
    quantile: float


def confidence_region(consistent: ConsistentEstimates, omega_hat: np.ndarray, beta: float) -> ConfidenceRegion:
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    if consistent.lw_c is None:
        raise ValueError("consistent estimates were built without a portfolio spec")
    if not np.all(np.isfinite(consistent.lw_c)):
        raise NonpositiveSlopeEstimate("corrected weights are undefined")
    omega_hat = np.atleast_2d(omega_hat)
    try:
        factor = linalg.cho_factor(omega_hat)
    except np.linalg.LinAlgError as exc:
        raise SingularOmega(f"covariance estimate is not positive definite: {exc}") from exc
    k = consistent.lw_c.size
    return ConfidenceRegion(
        center=np.asarray(consistent.lw_c, dtype=float),
        omega=omega_hat,
        n=consistent.n,
        p=consistent.p,
        level=1.0 - beta,
        chi2_quantile=float(stats.chi2.ppf(1.0 - beta, k)),
        _factor=factor,
    )


def membership(region: ConfidenceRegion, r) -> bool:
    return region.contains(r)


def test_weights(consistent: ConsistentEstimates, omega_hat: np.ndarray, r, beta: float) -> WeightTest:
    """Reject ``L w_g = r`` at level ``beta`` iff ``r`` lies outside the region."""
    region = confidence_region(consistent, omega_hat, beta)
    stat = region.statistic(r)
    return WeightTest(reject=not stat <= region.chi2_quantile, statistic=stat, quantile=region.chi2_quantile)


# keep pytest from collecting the public function above as a test
test_weights.__test__ = False


def read_returns_csv(path) -> np.ndarray:
    """Read a returns matrix; a non-numeric first row is treated as a header."""
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise ValueError(f"{path}: empty file")
    try:
        [float(x) for x in rows[0]]
    except ValueError:
        rows = rows[1:]
    data = np.array([[float(x) for x in row] for row in rows])
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError(f"{path}: no numeric rows")
    return data
