"""Population model, efficient-frontier quantities and the optimal portfolio family.

Every portfolio on the mean-variance frontier has weights

    w_g = w_GMV + g(R_GMV, V_GMV, s) * v

so a portfolio rule is fully described by its ``g`` function.  This module
holds ``g`` for the classical rules, its gradient, the six portfolio
characteristics and their gradients.  All scalar functions broadcast over
numpy arrays so the samplers can evaluate them on whole batches.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import linalg
from .errors import DegenerateSlope, DomainError, SingularCovariance

__all__ = [
    "CHARACTERISTIC_NAMES",
    "FrontierQuantities",
    "LinearCombination",
    "LinearTargets",
    "PopulationModel",
    "PortfolioCharacteristics",
    "PortfolioKind",
    "PortfolioSpec",
    "characteristic_gradient",
    "characteristic_values",
    "characteristics",
    "frontier_quantities",
    "g_gradient",
    "g_value",
    "k_alpha",
    "linear_targets",
    "weights",
    "z_alpha",
]

SLOPE_EPS = 1e-14
CHARACTERISTIC_NAMES = ("r", "v", "var", "cvar", "vor", "cvor")


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PopulationModel:
    """Mean vector ``mu`` and covariance ``sigma`` of p asset returns."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = _readonly(self.mu).reshape(-1)
        sigma = _readonly(self.sigma)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        p = mu.size
        if p < 2:
            raise ValueError("need at least two assets")
        if sigma.shape != (p, p):
            raise ValueError(f"sigma has shape {sigma.shape}, expected {(p, p)}")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise ValueError("mu and sigma must be finite")
        asym = np.max(np.abs(sigma - sigma.T))
        if asym > 1e-10:
            raise ValueError(f"sigma is not symmetric (max asymmetry {asym:.2e})")
        lam = np.linalg.eigvalsh(sigma)
        if lam[0] <= 1e-12 * lam[-1]:
            raise SingularCovariance(
                f"sigma is not positive definite (eigenvalues {lam[0]:.3e} .. {lam[-1]:.3e})"
            )

    @property
    def p(self) -> int:
        return self.mu.size

    def to_dict(self) -> dict:
        return {"mu": self.mu.tolist(), "sigma": self.sigma.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PopulationModel":
        return cls(np.asarray(d["mu"], dtype=float), np.asarray(d["sigma"], dtype=float))


@dataclass(frozen=True, eq=False)
class FrontierQuantities:
    """GMV variance/weights/return, frontier slope ``s`` and self-financing weights.

    ``v_sf`` is all-NaN with ``slope_valid=False`` when ``s`` is numerically
    zero.  ``q`` (the p x p matrix with ``s = mu^T q mu``) is built on first
    access from the stored Cholesky factor.
    """

    v_gmv: float
    w_gmv: np.ndarray
    r_gmv: float
    s: float
    v_sf: np.ndarray
    slope_valid: bool
    q_mu: np.ndarray = field(repr=False)
    _chol: tuple = field(repr=False, compare=False)

    @functools.cached_property
    def sigma_inv_one(self) -> np.ndarray:
        return self.w_gmv / self.v_gmv

    @functools.cached_property
    def q(self) -> np.ndarray:
        p = self.w_gmv.size
        sigma_inv = linalg.cho_solve(self._chol, np.eye(p))
        a = self.sigma_inv_one
        q = sigma_inv - np.outer(a, a) * self.v_gmv
        return _readonly(0.5 * (q + q.T))

    def sigma_inv_apply(self, b: np.ndarray) -> np.ndarray:
        return linalg.cho_solve(self._chol, b)

    def lql(self, l: np.ndarray) -> np.ndarray:
        """``L Q L^T`` without forming Q: ``L Sigma^-1 L^T - theta theta^T / V``."""
        l = np.atleast_2d(l)
        theta = l @ self.w_gmv
        m = l @ linalg.cho_solve(self._chol, l.T) - np.outer(theta, theta) / self.v_gmv
        return 0.5 * (m + m.T)


def _frontier_from_moments(mu: np.ndarray, sigma: np.ndarray, singular_exc=SingularCovariance):
    """Frontier quantities from one Cholesky factorization; shared by the
    population and the plug-in (sample) paths."""
    try:
        chol = linalg.cho_factor(sigma)
    except np.linalg.LinAlgError as exc:
        raise singular_exc(f"Cholesky factorization failed: {exc}") from exc
    diag = np.abs(np.diag(chol[0]))
    if not np.all(np.isfinite(diag)) or diag.min() ** 2 <= 1e-12 * diag.max() ** 2:
        raise singular_exc("covariance matrix is numerically singular")
    p = mu.size
    sol = linalg.cho_solve(chol, np.column_stack([np.ones(p), mu]))
    a, b = sol[:, 0], sol[:, 1]
    one_a = a.sum()
    v_gmv = 1.0 / one_a
    w_gmv = a * v_gmv
    r_gmv = float(mu @ w_gmv)
    q_mu = b - a * (b.sum() * v_gmv)
    s = float(mu @ q_mu)
    if s < 0.0:
        # rounding only: Q is PSD
        s = 0.0
    valid = s > SLOPE_EPS
    v_sf = q_mu / s if valid else np.full(p, np.nan)
    return FrontierQuantities(
        v_gmv=float(v_gmv),
        w_gmv=_readonly(w_gmv),
        r_gmv=r_gmv,
        s=s,
        v_sf=_readonly(v_sf),
        slope_valid=bool(valid),
        q_mu=_readonly(q_mu),
        _chol=chol,
    )


def frontier_quantities(model: PopulationModel) -> FrontierQuantities:
    return _frontier_from_moments(model.mu, model.sigma)


# --- linear combinations -------------------------------------------------


@dataclass(frozen=True, eq=False)
class LinearCombination:
    """k linear combinations (rows of ``l``) of portfolio weights, k < p - 1."""

    l: np.ndarray

    def __post_init__(self):
        l = _readonly(np.atleast_2d(self.l))
        object.__setattr__(self, "l", l)
        k, p = l.shape
        if k >= p - 1:
            raise ValueError(f"need k < p - 1, got k={k}, p={p}")
        sv = np.linalg.svd(l, compute_uv=False)
        if sv[-1] <= 1e-10 * sv[0]:
            raise ValueError("L does not have full row rank")
        m = np.vstack([l, np.ones(p)])
        sv = np.linalg.svd(m, compute_uv=False)
        if sv[-1] <= 1e-10 * sv[0]:
            raise ValueError("the rows of L together with the ones vector are linearly dependent")

    @property
    def k(self) -> int:
        return self.l.shape[0]

    @property
    def p(self) -> int:
        return self.l.shape[1]

    @classmethod
    def unit(cls, p: int, rows=(0,)) -> "LinearCombination":
        """Selector of the given asset weights (default: the first one)."""
        l = np.zeros((len(rows), p))
        for i, j in enumerate(rows):
            l[i, j] = 1.0
        return cls(l)

    def stacked_rank(self, mu: np.ndarray) -> int:
        """Rank of ``(L^T, mu, 1)^T``."""
        m = np.vstack([self.l, mu, np.ones(self.p)])
        return int(np.linalg.matrix_rank(m, tol=1e-10 * np.linalg.norm(m, 2)))


@dataclass(frozen=True, eq=False)
class LinearTargets:
    """Population objects seen through L: theta = L w_GMV, eta = L v, L Q L^T.

    ``s_eta`` (= L Q mu) stays defined when the slope vanishes; ``mu_a_mu``
    is the part of the slope orthogonal to the rows of L.
    """

    theta: np.ndarray
    eta: np.ndarray
    s_eta: np.ndarray
    lql: np.ndarray
    lql_inv: np.ndarray
    mu_a_mu: float


def linear_targets(frontier: FrontierQuantities, lincomb: LinearCombination) -> LinearTargets:
    l = lincomb.l
    lql = frontier.lql(l)
    lql_inv = np.linalg.inv(lql)
    lql_inv = 0.5 * (lql_inv + lql_inv.T)
    s_eta = l @ frontier.q_mu
    mu_a_mu = max(frontier.s - float(s_eta @ lql_inv @ s_eta), 0.0)
    return LinearTargets(
        theta=_readonly(l @ frontier.w_gmv),
        eta=_readonly(l @ frontier.v_sf),
        s_eta=_readonly(s_eta),
        lql=_readonly(lql),
        lql_inv=_readonly(lql_inv),
        mu_a_mu=mu_a_mu,
    )


# --- portfolio family ----------------------------------------------------


class PortfolioKind(str, enum.Enum):
    GMV = "GMV"
    MV = "MV"
    EU = "EU"
    T = "T"
    SR = "SR"
    MVAR = "MVaR"
    MCVAR = "MCVaR"
    MVOR = "MVoR"
    MCVOR = "MCVoR"


@dataclass(frozen=True)
class PortfolioSpec:
    """Choice of optimal portfolio and its auxiliary constants.

    Only the fields used by ``kind`` are read.  ``sign_convention`` applies to
    MV: ``"return_consistent"`` (default) gives ``g = mu0 - R_GMV`` so that
    the portfolio's expected return is ``mu0``; ``"table1_verbatim"`` gives
    the tabulated ``R_GMV - mu0``.
    """

    kind: PortfolioKind = PortfolioKind.GMV
    gamma: float = 1.0
    mu0: float = 0.0
    rf: float = 0.0
    alpha: float = 0.95
    v0: float = 1.0
    k0: float = 0.0
    sign_convention: str = "return_consistent"

    def __post_init__(self):
        object.__setattr__(self, "kind", PortfolioKind(self.kind))
        if self.sign_convention not in ("return_consistent", "table1_verbatim"):
            raise ValueError(f"unknown sign convention {self.sign_convention!r}")
        if self.kind is PortfolioKind.EU and not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.kind in (PortfolioKind.MVAR, PortfolioKind.MCVAR, PortfolioKind.MVOR, PortfolioKind.MCVOR):
            if not 0.5 < self.alpha < 1.0:
                raise ValueError("alpha must lie in (0.5, 1)")
        if self.kind is PortfolioKind.MVOR and not self.v0 > 0:
            raise ValueError("v0 must be positive")

    @property
    def z(self) -> float:
        return z_alpha(self.alpha)

    @property
    def k(self) -> float:
        return k_alpha(self.alpha)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "gamma": self.gamma,
            "mu0": self.mu0,
            "rf": self.rf,
            "alpha": self.alpha,
            "v0": self.v0,
            "k0": self.k0,
            "sign_convention": self.sign_convention,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PortfolioSpec":
        return cls(**d)


def z_alpha(alpha: float) -> float:
    return float(stats.norm.ppf(alpha))


def k_alpha(alpha: float) -> float:
    # constant taken as tabulated: 2*pi, not sqrt(2*pi)
    z = z_alpha(alpha)
    return math.exp(-0.5 * z * z) / (2.0 * math.pi * (1.0 - alpha))


def _vor_parts(level2, target, r, v, s):
    a = r + target
    w = level2 * s * (a * a + (s - level2) * v)
    return a, w


def _g_array(spec: PortfolioSpec, r, v, s):
    """g on arrays; returns ``(value, ok)`` with NaN where the domain fails."""
    r, v, s = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (r, v, s)))
    kind = spec.kind
    ok = np.ones(r.shape, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind is PortfolioKind.GMV:
            g = np.zeros(r.shape)
        elif kind is PortfolioKind.MV:
            g = spec.mu0 - r if spec.sign_convention == "return_consistent" else r - spec.mu0
        elif kind is PortfolioKind.EU:
            # same product as g3 * s, so the EU cancellation is exact
            g = s * (1.0 / spec.gamma)
        elif kind in (PortfolioKind.T, PortfolioKind.SR):
            rf = spec.rf if kind is PortfolioKind.T else 0.0
            ok = (r - rf) != 0.0
            g = v * s / (r - rf)
        elif kind in (PortfolioKind.MVAR, PortfolioKind.MCVAR):
            lvl = spec.z if kind is PortfolioKind.MVAR else spec.k
            ok = lvl * lvl > s
            g = s * np.sqrt(v / (lvl * lvl - s))
        else:
            if kind is PortfolioKind.MVOR:
                lvl, target = spec.z, spec.v0
            else:
                lvl, target = spec.k, spec.k0
            q = lvl * lvl
            a, w = _vor_parts(q, target, r, v, s)
            ok = (q > s) & (w >= 0.0)
            g = (a * s + np.sqrt(w)) / (q - s)
    g = np.where(ok, g, np.nan)
    return g, ok


def _domain_message(spec: PortfolioSpec) -> str:
    return {
        PortfolioKind.T: "R_GMV == r_f for T",
        PortfolioKind.SR: "R_GMV == 0 for SR",
        PortfolioKind.MVAR: "z_alpha^2 <= s for MVaR",
        PortfolioKind.MCVAR: "k_alpha^2 <= s for MCVaR",
        PortfolioKind.MVOR: "z_alpha^2 <= s or negative discriminant for MVoR",
        PortfolioKind.MCVOR: "k_alpha^2 <= s or negative discriminant for MCVoR",
    }.get(spec.kind, f"domain violated for {spec.kind.value}")


def g_value(spec: PortfolioSpec, r_gmv, v_gmv, s):
    """g(R_GMV, V_GMV, s) for the chosen portfolio; raises on domain failure."""
    g, ok = _g_array(spec, r_gmv, v_gmv, s)
    if not np.all(ok):
        raise DomainError(_domain_message(spec))
    return float(g) if g.ndim == 0 else g


def _g_grad_array(spec: PortfolioSpec, r, v, s):
    r, v, s = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (r, v, s)))
    kind = spec.kind
    zero = np.zeros(r.shape)
    ok = np.ones(r.shape, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind is PortfolioKind.GMV:
            g1, g2, g3 = zero, zero, zero
        elif kind is PortfolioKind.MV:
            sign = -1.0 if spec.sign_convention == "return_consistent" else 1.0
            g1, g2, g3 = zero + sign, zero, zero
        elif kind is PortfolioKind.EU:
            g1, g2, g3 = zero, zero, zero + 1.0 / spec.gamma
        elif kind in (PortfolioKind.T, PortfolioKind.SR):
            rf = spec.rf if kind is PortfolioKind.T else 0.0
            d = r - rf
            ok = d != 0.0
            g1 = -v * s / d**2
            g2 = s / d
            g3 = v / d
        elif kind in (PortfolioKind.MVAR, PortfolioKind.MCVAR):
            lvl = spec.z if kind is PortfolioKind.MVAR else spec.k
            q = lvl * lvl
            ok = (q > s) & (v > 0)
            g1 = zero
            g2 = s / (2.0 * np.sqrt(v * (q - s)))
            g3 = np.sqrt(v) * (q - 0.5 * s) / (q - s) ** 1.5
        else:
            if kind is PortfolioKind.MVOR:
                lvl, target = spec.z, spec.v0
            else:
                lvl, target = spec.k, spec.k0
            q = lvl * lvl
            a, w = _vor_parts(q, target, r, v, s)
            ok = (q > s) & (w > 0.0)
            rw = np.sqrt(w)
            num = a * s + rw
            den = q - s
            dw_r = 2.0 * q * s * a
            dw_v = q * s * (s - q)
            dw_s = q * (a * a + (2.0 * s - q) * v)
            g1 = (s + dw_r / (2.0 * rw)) / den
            g2 = (dw_v / (2.0 * rw)) / den
            g3 = (a + dw_s / (2.0 * rw)) / den + num / den**2
    nan = np.where(ok, 0.0, np.nan)
    return (g1 + nan, g2 + nan, g3 + nan), ok


def g_gradient(spec: PortfolioSpec, r_gmv, v_gmv, s):
    """Partial derivatives ``(dg/dR, dg/dV, dg/ds)`` in closed form."""
    grads, ok = _g_grad_array(spec, r_gmv, v_gmv, s)
    if not np.all(ok):
        raise DomainError(_domain_message(spec) + " (or g not differentiable here)")
    if grads[0].ndim == 0:
        return tuple(float(x) for x in grads)
    return grads


# --- characteristics -----------------------------------------------------


@dataclass(frozen=True)
class PortfolioCharacteristics:
    r_g: float
    v_g: float
    var_g: float
    cvar_g: float
    vor_g: float
    cvor_g: float

    def as_array(self) -> np.ndarray:
        return np.array([self.r_g, self.v_g, self.var_g, self.cvar_g, self.vor_g, self.cvor_g])


def characteristic_values(spec: PortfolioSpec, r, v, s, g=None):
    """Array version of :func:`characteristics`: shape ``(..., 6)``, NaN off-domain."""
    r, v, s = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (r, v, s)))
    if g is None:
        g, _ = _g_array(spec, r, v, s)
    if spec.kind is PortfolioKind.GMV:
        vg = v + 0.0
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            vg = np.where(s > SLOPE_EPS, v + g * g / s, np.nan)
    rg = r + g
    sd = np.sqrt(vg)
    z, k = spec.z, spec.k
    return np.stack([rg, vg, -rg - z * sd, -rg - k * sd, rg - z * sd, rg - k * sd], axis=-1)


def characteristics(spec: PortfolioSpec, r_gmv: float, v_gmv: float, s: float) -> PortfolioCharacteristics:
    """Expected return, variance, VaR, CVaR, VoR and CVoR of the g-portfolio."""
    if spec.kind is not PortfolioKind.GMV and s <= SLOPE_EPS:
        raise DegenerateSlope("frontier slope is zero; only the GMV portfolio is defined")
    g = g_value(spec, r_gmv, v_gmv, s)
    vals = characteristic_values(spec, r_gmv, v_gmv, s, g=np.asarray(g))
    return PortfolioCharacteristics(*(float(x) for x in vals))


def characteristic_gradient(spec: PortfolioSpec, name: str, r: float, v: float, s: float) -> np.ndarray:
    """Gradient of one characteristic with respect to ``(R_GMV, V_GMV, s)``.

    Chain rule through g; ``name`` is one of :data:`CHARACTERISTIC_NAMES`.
    """
    if name not in CHARACTERISTIC_NAMES:
        raise ValueError(f"unknown characteristic {name!r}")
    g = g_value(spec, r, v, s)
    g1, g2, g3 = g_gradient(spec, r, v, s)
    d_r = np.array([1.0 + g1, g2, g3])
    if spec.kind is PortfolioKind.GMV:
        vg = v
        d_v = np.array([0.0, 1.0, 0.0])
    else:
        if s <= SLOPE_EPS:
            raise DegenerateSlope("frontier slope is zero")
        vg = v + g * g / s
        d_v = np.array([2 * g * g1 / s, 1.0 + 2 * g * g2 / s, 2 * g * g3 / s - g * g / s**2])
    d_sd = d_v / (2.0 * math.sqrt(vg))
    z, k = spec.z, spec.k
    return {
        "r": d_r,
        "v": d_v,
        "var": -d_r - z * d_sd,
        "cvar": -d_r - k * d_sd,
        "vor": d_r - z * d_sd,
        "cvor": d_r - k * d_sd,
    }[name]


def weights(spec: PortfolioSpec, model: PopulationModel, frontier: FrontierQuantities | None = None) -> np.ndarray:
    """Optimal weights ``w_GMV + g * v``."""
    if frontier is None:
        frontier = frontier_quantities(model)
    g = g_value(spec, frontier.r_gmv, frontier.v_gmv, frontier.s)
    if g == 0.0:
        return np.array(frontier.w_gmv)
    if not frontier.slope_valid:
        raise DegenerateSlope("self-financing portfolio undefined for zero slope")
    return frontier.w_gmv + g * frontier.v_sf
