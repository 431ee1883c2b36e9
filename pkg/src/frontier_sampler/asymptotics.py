"""Limit laws when ``p/n -> c`` in ``(0, 1)``.

Every law here is the covariance of a ``sqrt(n - p)``-scaled, centred
quantity.  Two algebraic forms are available for the matrices whose
closed-form displays disagree with the limit representation they are meant to
summarise:

``form="literal"``
    the closed-form expressions taken literally (default);
``form="derived"``
    the expressions obtained by computing the covariance of the limit
    representation directly (and, for the weight laws, by the delta method
    on it).

The two forms coincide for the ``V``, ``R`` and ``theta`` blocks, for
``s``'s variance and for ``eta``'s covariance.  They differ in the ``(s, eta)``
cross-covariance and in the weight covariances ``omega_lg`` and
``omega_lg_consistent``.  :func:`draw_limit_quantities` and the Monte Carlo
tests decide between them.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import DomainError
from .model import (
    CHARACTERISTIC_NAMES,
    FrontierQuantities,
    LinearTargets,
    PortfolioSpec,
    characteristic_gradient,
    characteristic_values,
    g_gradient,
    g_value,
)

logger = logging.getLogger(__name__)

__all__ = [
    "AsymptoticLaw",
    "AssumptionWarning",
    "LambdaPoint",
    "check_assumption_a1",
    "draw_limit_quantities",
    "eu_cancellation",
    "lambda_point",
    "omega_consistent_terms",
    "omega_eu_closed_form",
    "omega_lg",
    "omega_lg_consistent",
    "omega_lg_delta",
    "omega_terms",
    "xi_h",
    "xi_h_consistent",
    "xi_matrix",
    "xi_rvs",
]

FORMS = ("literal", "derived")


class AssumptionWarning(UserWarning):
    """A population quantity falls outside the configured regularity bounds."""


@dataclass(frozen=True, eq=False)
class AsymptoticLaw:
    """``sqrt(n-p) (x - center) -> N(0, cov)``."""

    center: np.ndarray
    cov: np.ndarray
    n: int
    p: int
    labels: tuple = ()

    def __post_init__(self):
        center = np.atleast_1d(np.asarray(self.center, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (center.size, center.size):
            raise ValueError(f"cov has shape {cov.shape}, center has length {center.size}")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(cov))):
            raise ValueError("cov is not symmetric")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))
        if self.labels and len(self.labels) != center.size:
            raise ValueError("labels do not match the dimension")

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def scale(self) -> float:
        return float(np.sqrt(self.n - self.p))

    def sd(self) -> np.ndarray:
        """Finite-n standard deviations ``sqrt(diag(cov) / (n - p))``."""
        return np.sqrt(np.diag(self.cov)) / self.scale

    def is_psd(self, tol: float = 1e-10) -> bool:
        lam = np.linalg.eigvalsh(self.cov)
        return bool(lam[0] >= -tol * max(lam[-1], 0.0))

    def standardize(self, x) -> np.ndarray:
        """Per-coordinate ``sqrt(n-p) (x - center) / sqrt(cov_ii)``."""
        x = np.asarray(x, dtype=float)
        return (x - self.center) * self.scale / np.sqrt(np.diag(self.cov))

    def to_json(self) -> str:
        return json.dumps({"center": self.center.tolist(), "scale": "sqrt(n-p)", "cov": self.cov.tolist()})

    @classmethod
    def from_json(cls, text: str, n: int, p: int) -> "AsymptoticLaw":
        d = json.loads(text)
        if d.get("scale") != "sqrt(n-p)":
            raise ValueError(f"unsupported scale {d.get('scale')!r}")
        return cls(np.asarray(d["center"]), np.asarray(d["cov"]), n, p)


@dataclass(frozen=True)
class LambdaPoint:
    """The point ``(R, V, s)`` as estimated, in the limit, and in the population."""

    lambda_limit: tuple
    lambda_population: tuple
    c: float
    lambda_hat: tuple | None = None


def lambda_point(frontier: FrontierQuantities, c: float, lambda_hat=None) -> LambdaPoint:
    if not 0.0 <= c < 1.0:
        raise DomainError(f"concentration ratio must lie in [0, 1), got {c}")
    r, v, s = frontier.r_gmv, frontier.v_gmv, frontier.s
    return LambdaPoint(
        lambda_limit=(r, (1.0 - c) * v, (s + c) / (1.0 - c)),
        lambda_population=(r, v, s),
        c=c,
        lambda_hat=None if lambda_hat is None else tuple(lambda_hat),
    )


def _ratio(n: int, p: int) -> float:
    if n <= 0 or p < 0:
        raise ValueError("n must be positive and p non-negative")
    c = p / n
    if c >= 1.0:
        raise DomainError(f"p/n = {c} >= 1")
    return c


def _check_form(form: str) -> None:
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}, got {form!r}")


def check_assumption_a1(frontier: FrontierQuantities, targets: LinearTargets, bounds=(1e-6, 1e6)) -> list[str]:
    """Return (and warn about) the regularity quantities outside ``[m, M]``.

    Checked: ``mu' Sigma^-1 mu``, ``1' Sigma^-1 1`` and ``diag(L Sigma^-1 L')``.
    """
    m, big_m = bounds
    v = frontier.v_gmv
    quantities = {
        "mu' Sigma^-1 mu": frontier.s + frontier.r_gmv**2 / v,
        "1' Sigma^-1 1": 1.0 / v,
    }
    l_sig_l = np.diag(targets.lql) + targets.theta**2 / v
    for i, val in enumerate(l_sig_l):
        quantities[f"l_{i + 1}' Sigma^-1 l_{i + 1}"] = float(val)
    bad = [f"{name} = {val:.4g}" for name, val in quantities.items() if not m <= val <= big_m]
    if bad:
        warnings.warn("outside [%g, %g]: %s" % (m, big_m, "; ".join(bad)), AssumptionWarning, stacklevel=3)
    return bad


# --- joint law of the five frontier estimators ----------------------------


def _s_centre(s: float, n: int, p: int) -> float:
    return (s + p / n) * (1.0 - 1.0 / n) / (1.0 - p / n + 2.0 / n)


def xi_ss(s: float, c: float) -> float:
    return 2.0 * (c + 2.0 * s) / (1.0 - c) + 2.0 * (s + c) ** 2 / (1.0 - c) ** 2


def xi_matrix(
    frontier: FrontierQuantities,
    targets: LinearTargets,
    n: int,
    p: int,
    *,
    form: str = "literal",
    a1_bounds=(1e-6, 1e6),
) -> AsymptoticLaw:
    """Joint law of ``(V, R, theta, s, eta)`` estimators, dimension ``2k + 3``.

    The ``(s, eta)`` cross block is ``2s(2c - s + 4 mu'A mu)/(s+c)^2 eta`` for
    ``form="literal"`` and ``-2 s^2/(s+c)^2 eta`` for ``form="derived"``.
    """
    _check_form(form)
    c = _ratio(n, p)
    check_assumption_a1(frontier, targets, a1_bounds)
    v, r, s = frontier.v_gmv, frontier.r_gmv, frontier.s
    theta, eta, lql = targets.theta, targets.eta, targets.lql
    if not frontier.slope_valid:
        raise DomainError("the joint law needs s > 0")
    k = theta.size
    d = 2 * k + 3
    cov = np.zeros((d, d))
    iv, ir, ith, iss, iet = 0, 1, slice(2, 2 + k), 2 + k, slice(3 + k, 3 + 2 * k)
    cov[iv, iv] = 2.0 * v * v * (1.0 - c) ** 2
    cov[ir, ir] = v * (1.0 + s)
    cov[ir, ith] = cov[ith, ir] = v * s * eta
    cov[ith, ith] = v * lql
    cov[iss, iss] = xi_ss(s, c)
    if form == "literal":
        s_eta = 2.0 * s * (2.0 * c - s + 4.0 * targets.mu_a_mu) / (s + c) ** 2 * eta
    else:
        s_eta = -2.0 * s * s / (s + c) ** 2 * eta
    cov[iss, iet] = cov[iet, iss] = s_eta
    cov[iet, iet] = (s + 1.0) / (s + c) ** 2 * lql - s * s * (2.0 * c * (1.0 - c) + (s + c) ** 2) / (s + c) ** 4 * np.outer(eta, eta)
    center = np.concatenate(
        [
            [(1.0 - p / n) / (1.0 - 1.0 / n) * v, r],
            theta,
            [_s_centre(s, n, p)],
            s / (s + p / n) * eta,
        ]
    )
    labels = ("v_hat", "r_hat", *(f"theta_hat_{i + 1}" for i in range(k)), "s_hat", *(f"eta_hat_{i + 1}" for i in range(k)))
    return AsymptoticLaw(center, cov, n, p, labels)


def xi_rvs(frontier: FrontierQuantities, c: float) -> np.ndarray:
    """Diagonal of the limit covariance of ``(R, V, s)`` estimators."""
    v, s = frontier.v_gmv, frontier.s
    return np.array([v * (1.0 + s), 2.0 * v * v * (1.0 - c) ** 2, xi_ss(s, c)])


def draw_limit_quantities(frontier: FrontierQuantities, targets: LinearTargets, c: float, rng, size: int) -> np.ndarray:
    """Draws of the limit representation of the five scaled, centred estimators.

    Eight independent standard normal blocks are combined literally.  Rows are
    ordered like :func:`xi_matrix`: ``(V, R, theta, s, eta)``.
    """
    if not 0.0 < c < 1.0:
        raise DomainError(f"c must lie in (0, 1), got {c}")
    v, s = frontier.v_gmv, frontier.s
    eta, lql, a = targets.eta, targets.lql, targets.mu_a_mu
    if s + c <= 0:
        raise DomainError("need s + c > 0")
    k = eta.size
    kappa = s * s / (s + c)
    ee = np.outer(eta, eta)
    resid_root = linalg.sym_sqrt(lql - kappa * ee).matrix
    lql_inv_root = linalg.sym_sqrt(lql, inverse=True).matrix
    u1, u2, u4, u5, u7 = (rng.standard_normal(size) for _ in range(5))
    u3, u6, u8 = (rng.standard_normal((size, k)) for _ in range(3))
    w3 = u3 @ lql_inv_root.T
    noise_a = np.sqrt(2.0 * (1.0 - c) * (c + 2.0 * a)) * u2
    lim_v = np.sqrt(2.0) * (1.0 - c) * v * u1
    lim_r = np.sqrt(v) * (np.sqrt(1.0 - c) * u4 + np.sqrt(s + c) * u5)
    lim_theta = np.sqrt(v) * (s / np.sqrt(s + c) * u5[:, None] * eta + u6 @ resid_root.T)
    lim_s = (noise_a + 2.0 * s * np.sqrt(1.0 - c) * (w3 @ eta) + np.sqrt(2.0) * (s + c) * u7) / (1.0 - c)
    lim_eta = (
        u8 @ resid_root.T / np.sqrt(s + c)
        + np.sqrt(1.0 - c) / (s + c) * (w3 @ (lql - 2.0 * kappa * ee).T)
        - (s * noise_a / (s + c) ** 2)[:, None] * eta
    )
    return np.column_stack([lim_v, lim_r, lim_theta, lim_s, lim_eta])


# --- weights ----------------------------------------------------------------


def _slope_gap(g, g3, s, c):
    # g3/(1-c) - g/(s+c) written over the common factor lam3 = (s+c)/(1-c);
    # for g = lam3/gamma the numerator is an exact zero
    lam3 = (s + c) / (1.0 - c)
    return (g3 * lam3 - g) / ((1.0 - c) * lam3)


def eu_cancellation(spec: PortfolioSpec, frontier: FrontierQuantities, c: float) -> float:
    """``g3(lam)/(1-c) - g(lam)/(s+c)`` at the limit point; exactly 0 for EU."""
    lam = lambda_point(frontier, c).lambda_limit
    g = g_value(spec, *lam)
    g3 = g_gradient(spec, *lam)[2]
    return _slope_gap(g, g3, frontier.s, c)


def omega_terms(g, g1, g2, g3, v, s, c, *, form="literal"):
    """Coefficients ``(a, b)`` of ``Omega = a L Q L' + b eta eta'``.

    ``g`` multiplies the ``eta`` estimator and ``g1..g3`` are the gradient
    entries paired with the ``(R, V, s)`` estimators, as in the non-consistent
    weight law.
    """
    _check_form(form)
    sc = s + c
    d = _slope_gap(g, g3, s, c)
    if form == "literal":
        a = ((1.0 - c) / sc + g) * g / sc + v
        b = s * s * (
            2.0 * (1.0 - c) ** 2 * v * v / sc**2 * g2
            + d * d * 2.0 * (1.0 - c) * c / sc**2
            + 4.0 * (1.0 - c) / sc**2 * (g * d + s * d * d)
            + v * (1.0 - c) / sc**2 * g1 * g1
            + v / sc * g1
            + 2.0 / (1.0 - c) * g3 * g3
            - g * g / sc**2
        )
    else:
        a = v + g * g * (1.0 + s) / sc**2
        b = s * s * (
            2.0 * (1.0 - c) ** 2 * v * v * g2 * g2 / sc**2
            + d * d * 2.0 * (1.0 - c) * (c + 2.0 * s) / sc**2
            + 4.0 * (1.0 - c) * g * d / sc**2
            + v * (1.0 - c) * g1 * g1 / sc**2
            + v * (g1 * g1 + 2.0 * g1) / sc
            + 2.0 * g3 * g3 / (1.0 - c) ** 2
            - g * g / sc**2
        )
    return a, b


def _assemble(a, b, targets: LinearTargets) -> np.ndarray:
    return a * targets.lql + b * np.outer(targets.eta, targets.eta)


def omega_lg(spec: PortfolioSpec, frontier: FrontierQuantities, targets: LinearTargets, n: int, p: int, *, form="literal") -> AsymptoticLaw:
    """Law of ``L w_g`` plug-in estimator, centred at ``theta + s g(lam)/(s+p/n) eta``."""
    c = _ratio(n, p)
    s = frontier.s
    if s + c <= 0:
        raise DomainError("need s + c > 0")
    lam = lambda_point(frontier, c).lambda_limit
    g = g_value(spec, *lam)
    g1, g2, g3 = g_gradient(spec, *lam)
    a, b = omega_terms(g, g1, g2, g3, frontier.v_gmv, s, c, form=form)
    center = targets.theta + s * g / (s + p / n) * targets.eta
    k = targets.theta.size
    return AsymptoticLaw(center, _assemble(a, b, targets), n, p, tuple(f"lw_hat_{i + 1}" for i in range(k)))


def omega_eu_closed_form(gamma: float, frontier: FrontierQuantities, targets: LinearTargets, c: float) -> np.ndarray:
    """The displayed EU specialisation of the plug-in weight covariance."""
    s, v = frontier.s, frontier.v_gmv
    gi = 1.0 / gamma
    a = ((1.0 - c) / (s + c) + gi * (s + c) / (1.0 - c)) * gi / (1.0 - c) + v
    b = (1.0 - 2.0 * c) * gi * gi * s * s / (1.0 - c) ** 2
    return _assemble(a, b, targets)


def omega_lg_delta(spec: PortfolioSpec, frontier: FrontierQuantities, targets: LinearTargets, n: int, p: int) -> np.ndarray:
    """Delta-method covariance of ``theta + g(lam) eta`` built from the full
    joint law (``form="derived"``), independent of :func:`omega_terms`."""
    c = _ratio(n, p)
    law = xi_matrix(frontier, targets, n, p, form="derived")
    lam = lambda_point(frontier, c).lambda_limit
    g = g_value(spec, *lam)
    g1, g2, g3 = g_gradient(spec, *lam)
    k = targets.theta.size
    s = frontier.s
    e = s / (s + c) * targets.eta
    # Jacobian of theta + g eta w.r.t. (V, R, theta, s, eta)
    jac = np.zeros((k, 2 * k + 3))
    jac[:, 0] = g2 * e
    jac[:, 1] = g1 * e
    jac[:, 2 : 2 + k] = np.eye(k)
    jac[:, 2 + k] = g3 * e
    jac[:, 3 + k :] = g * np.eye(k)
    return jac @ law.cov @ jac.T


def _consistent_gradients(spec: PortfolioSpec, frontier: FrontierQuantities, c: float):
    r, v, s = frontier.r_gmv, frontier.v_gmv, frontier.s
    if s <= 0:
        raise DomainError("consistent laws need s > 0")
    g = g_value(spec, r, v, s)
    g1, g2, g3 = g_gradient(spec, r, v, s)
    return g, g1, g2, g3


def omega_lg_consistent(
    spec: PortfolioSpec, frontier: FrontierQuantities, targets: LinearTargets, n: int, p: int, *, form="literal", c: float | None = None
) -> AsymptoticLaw:
    """Law of the bias-corrected ``L w_g`` estimator, centred at ``L w_g``.

    ``c`` overrides ``p/n`` in the covariance (used when plugging in estimates).
    """
    c = _ratio(n, p) if c is None else c
    g, g1, g2, g3 = _consistent_gradients(spec, frontier, c)
    a, b = omega_consistent_terms(g, g1, g2, g3, frontier.v_gmv, frontier.s, c, form=form)
    center = targets.theta + g * targets.eta
    k = targets.theta.size
    return AsymptoticLaw(center, _assemble(a, b, targets), n, p, tuple(f"lw_c_{i + 1}" for i in range(k)))


def omega_consistent_terms(g, g1, g2, g3, v, s, c, *, form="literal"):
    """Coefficients ``(a, b)`` for the bias-corrected weights at ``(R, V, s)``."""
    _check_form(form)
    if form == "derived":
        # corrected estimator = non-consistent form with rescaled multipliers
        sc = (s + c) / s
        return omega_terms(
            g * sc,
            g1 * sc,
            g2 * sc / (1.0 - c),
            (1.0 - c) * sc * (g3 - g * c / (s * (s + c))),
            v,
            s,
            c,
            form="derived",
        )
    sc = s + c
    d = g3 * sc / s - g / s
    a = ((1.0 - c) / sc + sc / s * g) * g / s + v
    b = s * s * (
        2.0 * (1.0 - c) * v * v / (s * sc) * g2
        + d * d * 2.0 * (1.0 - c) * c / sc**2
        + 4.0 * (1.0 - c) / sc**2 * (sc / s * g * d + s * d * d)
        + v * (1.0 - c) / s**2 * g1 * g1
        + v / s * g1
        + 2.0 * (1.0 - c) * sc**2 / s**2 * g3 * g3
        - g * g / s**2
    )
    return a, b


# --- characteristics ----------------------------------------------------------


def _names(names):
    names = tuple(names)
    for nm in names:
        if nm not in CHARACTERISTIC_NAMES:
            raise ValueError(f"unknown characteristic {nm!r}")
    return names


def _xi_h_from(coefs, spec, names, point):
    grads = np.array([characteristic_gradient(spec, nm, *point) for nm in names])
    return (grads * coefs) @ grads.T


def xi_h(spec: PortfolioSpec, frontier: FrontierQuantities, n: int, p: int, names=CHARACTERISTIC_NAMES) -> AsymptoticLaw:
    """Law of the plug-in characteristics, centred at ``h(lam)``."""
    names = _names(names)
    c = _ratio(n, p)
    lam = lambda_point(frontier, c).lambda_limit
    cov = _xi_h_from(xi_rvs(frontier, c), spec, names, lam)
    vals = characteristic_values(spec, *lam)
    center = np.array([vals[CHARACTERISTIC_NAMES.index(nm)] for nm in names])
    return AsymptoticLaw(center, cov, n, p, names)


def xi_h_consistent(spec: PortfolioSpec, frontier: FrontierQuantities, n: int, p: int, names=CHARACTERISTIC_NAMES, c: float | None = None) -> AsymptoticLaw:
    """Law of the bias-corrected characteristics, centred at ``h(R, V, s)``."""
    names = _names(names)
    c = _ratio(n, p) if c is None else c
    v, s = frontier.v_gmv, frontier.s
    coefs = np.array([v * (1.0 + s), 2.0 * v * v, 2.0 * s * s + 4.0 * s + 2.0 * c])
    point = (frontier.r_gmv, v, s)
    cov = _xi_h_from(coefs, spec, names, point)
    vals = characteristic_values(spec, *point)
    center = np.array([vals[CHARACTERISTIC_NAMES.index(nm)] for nm in names])
    return AsymptoticLaw(center, cov, n, p, names)
