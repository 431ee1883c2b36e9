"""Exact finite-sample draws of the plug-in frontier estimators.

Two engines produce the same joint law under normal returns:

* the *stochastic representation* path draws ``3k + 5`` latent variables per
  replication (chi-squares, normals, t vectors) and assembles the plug-in
  GMV variance, return, ``L w_GMV``, slope and ``L v`` from them.  All matrix
  square roots it needs are population objects computed once, or closed-form
  rank-one corrections, so no factorization happens per draw;
* the *brute force* path simulates ``n`` return vectors, forms the sample
  mean and covariance and evaluates the plug-in formulas.  It is the
  validation oracle and the only exact path for non-normal returns.

A third, smaller representation draws the plug-in characteristics
(``R_g``, ``V_g``, VaR, ...) from three scalars only.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import distributions as dist
from . import linalg, rng as rngmod
from .errors import DegenerateDof, DomainError, SingularSampleCovariance
from .estimators import sample_moments
from .model import (
    LinearCombination,
    LinearTargets,
    PopulationModel,
    PortfolioKind,
    PortfolioSpec,
    _frontier_from_moments,
    _g_array,
    characteristic_values,
    frontier_quantities,
    linear_targets,
)

logger = logging.getLogger(__name__)

__all__ = [
    "CharacteristicsDraw",
    "DrawBatch",
    "JointDraw",
    "SamplerInputs",
    "brute_force_batch",
    "characteristics_batch",
    "draw_brute_force",
    "draw_characteristics",
    "draw_joint",
    "draw_weights",
    "representation_batch",
    "simulate_returns",
]

MAX_VIOLATION_RATE = 0.5


@dataclass(frozen=True, eq=False)
class SamplerInputs:
    """Population objects the exact representation needs, computed once."""

    model: PopulationModel
    lincomb: LinearCombination
    n: int
    frontier: object
    targets: LinearTargets
    lql_sqrt: np.ndarray
    lql_inv_sqrt: np.ndarray
    noncentrality: float
    dof3: int

    @classmethod
    def build(cls, model: PopulationModel, lincomb: LinearCombination, n: int) -> "SamplerInputs":
        p, k = model.p, lincomb.k
        if lincomb.p != p:
            raise ValueError(f"L has {lincomb.p} columns but the model has {p} assets")
        if n <= p:
            raise ValueError(f"need n > p, got n={n}, p={p}")
        dof3 = p - k - 1
        if dof3 < 1:
            raise DegenerateDof(f"p - k - 1 = {dof3} < 1")
        frontier = frontier_quantities(model)
        targets = linear_targets(frontier, lincomb)
        lql_sqrt = linalg.sym_sqrt(targets.lql).matrix
        lql_inv_sqrt = linalg.sym_sqrt(targets.lql, inverse=True).matrix
        return cls(
            model=model,
            lincomb=lincomb,
            n=int(n),
            frontier=frontier,
            targets=targets,
            lql_sqrt=lql_sqrt,
            lql_inv_sqrt=lql_inv_sqrt,
            noncentrality=n * targets.mu_a_mu,
            dof3=dof3,
        )

    @property
    def p(self) -> int:
        return self.model.p

    @property
    def k(self) -> int:
        return self.lincomb.k


@dataclass(frozen=True, eq=False)
class JointDraw:
    v_hat: float
    r_hat: float
    theta_hat: np.ndarray
    s_hat: float
    eta_hat: np.ndarray
    f: float


@dataclass(frozen=True, eq=False)
class WeightDraw:
    joint: JointDraw
    lw_hat: np.ndarray
    domain_violation: bool


@dataclass(eq=False)
class DrawBatch:
    """Columnar store of ``b`` joint draws plus weights and characteristics."""

    v_hat: np.ndarray
    r_hat: np.ndarray
    s_hat: np.ndarray
    theta_hat: np.ndarray
    eta_hat: np.ndarray
    lw_hat: np.ndarray
    characteristics: np.ndarray
    domain_violation: np.ndarray
    f: np.ndarray
    seed: int
    provenance: str
    spec: PortfolioSpec = field(default_factory=PortfolioSpec)

    def __post_init__(self):
        b = self.v_hat.shape[0]
        for name in ("r_hat", "s_hat", "theta_hat", "eta_hat", "lw_hat", "characteristics", "domain_violation", "f"):
            if getattr(self, name).shape[0] != b:
                raise ValueError(f"column {name} has length {getattr(self, name).shape[0]}, expected {b}")
        if self.provenance not in ("stochastic_rep", "brute_force"):
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @property
    def b(self) -> int:
        return self.v_hat.shape[0]

    @property
    def k(self) -> int:
        return self.theta_hat.shape[1]

    @property
    def violation_rate(self) -> float:
        return float(np.mean(self.domain_violation)) if self.b else 0.0

    def columns(self) -> list[str]:
        k = self.k
        return (
            ["draw_index", "v_hat", "r_hat", "s_hat"]
            + [f"theta_hat_{i + 1}" for i in range(k)]
            + [f"eta_hat_{i + 1}" for i in range(k)]
            + [f"lw_hat_{i + 1}" for i in range(k)]
            + ["r_g", "v_g", "var_g", "cvar_g", "vor_g", "cvor_g", "domain_violation"]
        )

    def column(self, name: str) -> np.ndarray:
        """One named column, e.g. ``"theta_hat_1"`` or ``"cvar_g"``."""
        if name in ("v_hat", "r_hat", "s_hat"):
            return getattr(self, name)
        for prefix, arr in (("theta_hat_", self.theta_hat), ("eta_hat_", self.eta_hat), ("lw_hat_", self.lw_hat)):
            if name.startswith(prefix):
                return arr[:, int(name[len(prefix):]) - 1]
        names = ("r_g", "v_g", "var_g", "cvar_g", "vor_g", "cvor_g")
        if name in names:
            return self.characteristics[:, names.index(name)]
        if name == "domain_violation":
            return self.domain_violation
        raise KeyError(name)

    def to_csv(self, path) -> None:
        """Write the batch with a header row, 17 significant digits, C locale."""
        body = np.column_stack(
            [
                np.arange(self.b),
                self.v_hat,
                self.r_hat,
                self.s_hat,
                self.theta_hat,
                self.eta_hat,
                self.lw_hat,
                self.characteristics,
                self.domain_violation.astype(int),
            ]
        )
        ncol = body.shape[1]
        fmt = ["%d"] + ["%.17g"] * (ncol - 2) + ["%d"]
        np.savetxt(path, body, fmt=fmt, delimiter=",", header=",".join(self.columns()), comments="", newline="\n")

    @classmethod
    def concatenate(cls, parts: list["DrawBatch"]) -> "DrawBatch":
        first = parts[0]
        cat = {
            name: np.concatenate([getattr(p, name) for p in parts])
            for name in ("v_hat", "r_hat", "s_hat", "theta_hat", "eta_hat", "lw_hat", "characteristics", "domain_violation", "f")
        }
        return cls(**cat, seed=first.seed, provenance=first.provenance, spec=first.spec)


# --- stochastic representation -------------------------------------------


def _draw_latents(inputs: SamplerInputs, rng: np.random.Generator, size: int) -> dict:
    n, p, k = inputs.n, inputs.p, inputs.k
    # draw order is part of the determinism contract
    return {
        "xi1": dist.sample_chi2(rng, n - p, size),
        "xi2": dist.sample_chi2(rng, n - p + 2, size),
        "xi3": dist.sample_noncentral_chi2(rng, inputs.dof3, inputs.noncentrality, size),
        "z1": rng.standard_normal(size),
        "z2": dist.sample_gaussian_vector(rng, inputs.lql_sqrt, size),
        "t1": dist.sample_student_t(rng, n - p + 1, size),
        "t2": dist.sample_mv_t(rng, k, n - p + 2, size),
        "t3": dist.sample_mv_t(rng, k, n - p + 3, size),
    }


def _assemble(inputs: SamplerInputs, lat: dict) -> dict:
    n, p = inputs.n, inputs.p
    fr, tg = inputs.frontier, inputs.targets
    m1, m2, m3 = n - p + 1, n - p + 2, n - p + 3
    xi1, xi2, xi3 = lat["xi1"], lat["xi2"], lat["xi3"]
    z1, z2, t1, t2, t3 = lat["z1"], lat["z2"], lat["t1"], lat["t2"], lat["t3"]

    y = tg.s_eta + z2 / np.sqrt(n)
    f = xi3 / n + np.einsum("ij,jk,ik->i", y, tg.lql_inv, y)
    sqrt_f = np.sqrt(f)
    sqrt_v = np.sqrt(fr.v_gmv)
    tt = t1 / np.sqrt(m1)
    r1 = np.sqrt(1.0 + tt * tt)
    b = y / sqrt_f[:, None]
    # 1 - b^T (LQL^T)^{-1} b equals xi3 / (n f) exactly
    one_minus_x = xi3 / (n * f)

    def root_apply(vecs):
        return linalg.sqrt_downdate_apply(inputs.lql_sqrt, inputs.lql_inv_sqrt, b, vecs, one_minus_x)

    v_hat = fr.v_gmv * xi1 / (n - 1)
    r_hat = fr.r_gmv + sqrt_v * (z1 / np.sqrt(n) + sqrt_f * tt)
    theta_hat = tg.theta + sqrt_v * (b * tt[:, None] + root_apply(t2) * (r1 / np.sqrt(m2))[:, None])
    s_hat = (n - 1) * (1.0 + tt * tt) * f / xi2

    d = t2 * np.sqrt(f / m2)[:, None]
    bracket = t2 * (tt / (r1 * np.sqrt(m2)))[:, None] + linalg.sqrt_update_identity_apply(d, t3) / np.sqrt(m3)
    eta_hat = y / f[:, None] + root_apply(bracket) / sqrt_f[:, None]
    return {"v_hat": v_hat, "r_hat": r_hat, "theta_hat": theta_hat, "s_hat": s_hat, "eta_hat": eta_hat, "f": f}


def _weights_from(spec: PortfolioSpec, q: dict):
    if spec.kind is PortfolioKind.GMV:
        return q["theta_hat"].copy(), np.zeros(q["v_hat"].shape, dtype=bool)
    g, ok = _g_array(spec, q["r_hat"], q["v_hat"], q["s_hat"])
    lw = q["theta_hat"] + g[:, None] * q["eta_hat"]
    return lw, ~ok


def draw_joint(inputs: SamplerInputs, rng: np.random.Generator) -> JointDraw:
    """One exact draw of the plug-in ``(V, R, theta, s, eta)``."""
    q = _assemble(inputs, _draw_latents(inputs, rng, 1))
    return JointDraw(
        v_hat=float(q["v_hat"][0]),
        r_hat=float(q["r_hat"][0]),
        theta_hat=q["theta_hat"][0],
        s_hat=float(q["s_hat"][0]),
        eta_hat=q["eta_hat"][0],
        f=float(q["f"][0]),
    )


def draw_weights(inputs: SamplerInputs, spec: PortfolioSpec, rng: np.random.Generator) -> WeightDraw:
    """One exact draw of ``L w_g`` built from the same latents as :func:`draw_joint`.

    Given the same generator state, ``draw_weights(...).joint`` equals
    ``draw_joint(...)``.  Off-domain draws are NaN with ``domain_violation``
    set.
    """
    q = _assemble(inputs, _draw_latents(inputs, rng, 1))
    lw, bad = _weights_from(spec, q)
    joint = JointDraw(
        v_hat=float(q["v_hat"][0]),
        r_hat=float(q["r_hat"][0]),
        theta_hat=q["theta_hat"][0],
        s_hat=float(q["s_hat"][0]),
        eta_hat=q["eta_hat"][0],
        f=float(q["f"][0]),
    )
    return WeightDraw(joint=joint, lw_hat=lw[0], domain_violation=bool(bad[0]))


def _finish_batch(parts: list[dict], spec: PortfolioSpec, seed: int, provenance: str) -> DrawBatch:
    q = {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}
    lw, bad = _weights_from(spec, q)
    chars = characteristic_values(spec, q["r_hat"], q["v_hat"], q["s_hat"])
    batch = DrawBatch(
        v_hat=q["v_hat"],
        r_hat=q["r_hat"],
        s_hat=q["s_hat"],
        theta_hat=q["theta_hat"],
        eta_hat=q["eta_hat"],
        lw_hat=lw,
        characteristics=chars,
        domain_violation=bad,
        f=q["f"],
        seed=seed,
        provenance=provenance,
        spec=spec,
    )
    if batch.violation_rate > MAX_VIOLATION_RATE:
        raise DomainError(
            f"{batch.violation_rate:.1%} of draws fall outside the domain of g for {spec.kind.value}"
        )
    if batch.violation_rate > 0:
        logger.info("%d of %d draws outside the domain of g", int(bad.sum()), batch.b)
    return batch


def representation_batch(inputs: SamplerInputs, b: int, seed: int, spec: PortfolioSpec | None = None) -> DrawBatch:
    """``b`` exact draws through the stochastic representation.

    Chunk ``i`` of :data:`rng.CHUNK` draws uses substream ``(seed, JOINT, i)``,
    so the result is a pure function of ``(inputs, b, seed, spec)``.
    """
    spec = spec or PortfolioSpec()
    parts = []
    for i, start, stop in rngmod.chunks(b):
        gen = rngmod.substream(seed, rngmod.JOINT, i)
        parts.append(_assemble(inputs, _draw_latents(inputs, gen, stop - start)))
    return _finish_batch(parts, spec, seed, "stochastic_rep")


# --- characteristics representation ---------------------------------------


@dataclass(frozen=True, eq=False)
class CharacteristicsDraw:
    r_hat: np.ndarray
    v_hat: np.ndarray
    s_hat: np.ndarray
    values: np.ndarray
    domain_violation: np.ndarray


def draw_characteristics(r_gmv, v_gmv, s, n, p, spec: PortfolioSpec, rng, size=None) -> CharacteristicsDraw:
    """Plug-in ``(R_GMV, V_GMV, s)`` and the six characteristics from three
    independent scalars: a chi-square, a noncentral F and a normal."""
    if n <= p:
        raise ValueError("need n > p")
    if s < 0:
        raise ValueError("slope must be >= 0")
    m = 1 if size is None else size
    xi = dist.sample_chi2(rng, n - p, m)
    psi = dist.sample_noncentral_f(rng, p - 1, n - p + 1, n * s, m)
    z = rng.standard_normal(m)
    v_hat = v_gmv * xi / (n - 1)
    r_hat = r_gmv + np.sqrt(v_gmv / n * (1.0 + psi * (p - 1) / (n - p + 1))) * z
    s_hat = (n - 1) * (p - 1) / (n * (n - p + 1)) * psi
    _, ok = _g_array(spec, r_hat, v_hat, s_hat)
    values = characteristic_values(spec, r_hat, v_hat, s_hat)
    if size is None:
        return CharacteristicsDraw(r_hat[0], v_hat[0], s_hat[0], values[0], ~ok[0])
    return CharacteristicsDraw(r_hat, v_hat, s_hat, values, ~ok)


def characteristics_batch(r_gmv, v_gmv, s, n, p, spec: PortfolioSpec, b: int, seed: int) -> CharacteristicsDraw:
    parts = []
    for i, start, stop in rngmod.chunks(b):
        gen = rngmod.substream(seed, rngmod.CHARACTERISTICS, i)
        parts.append(draw_characteristics(r_gmv, v_gmv, s, n, p, spec, gen, stop - start))
    return CharacteristicsDraw(
        *(np.concatenate([getattr(x, name) for x in parts]) for name in ("r_hat", "v_hat", "s_hat", "values", "domain_violation"))
    )


# --- brute force -----------------------------------------------------------


def simulate_returns(mu, sigma_chol, n, rng, scenario="normal", t_dof=10):
    """``n x p`` i.i.d. returns with mean ``mu`` and covariance ``L L^T``.

    ``scenario="student_t"`` draws a multivariate t with ``t_dof`` degrees of
    freedom and scale ``(d-2)/d * Sigma`` so the covariance stays ``Sigma``.
    """
    p = mu.size
    z = rng.standard_normal((n, p))
    if scenario == "student_t":
        if t_dof <= 2:
            raise ValueError("t_dof must exceed 2 for a finite covariance")
        w = rng.chisquare(t_dof, n)
        z *= (np.sqrt((t_dof - 2) / t_dof) / np.sqrt(w / t_dof))[:, None]
    elif scenario != "normal":
        raise ValueError(f"unknown scenario {scenario!r}")
    return mu + z @ sigma_chol.T


def _plugin_draw(x: np.ndarray, l: np.ndarray) -> dict:
    mu_hat, sigma_hat = sample_moments(x)
    fr = _frontier_from_moments(mu_hat, sigma_hat, SingularSampleCovariance)
    return {
        "v_hat": np.array([fr.v_gmv]),
        "r_hat": np.array([fr.r_gmv]),
        "theta_hat": (l @ fr.w_gmv)[None, :],
        "s_hat": np.array([fr.s]),
        "eta_hat": (l @ fr.v_sf)[None, :],
        "f": np.array([np.nan]),
    }


def draw_brute_force(model, lincomb, n, spec, rng, scenario="normal", t_dof=10, sigma_chol=None):
    """One oracle draw: simulate ``n`` returns and evaluate the plug-in estimators.

    Returns ``(JointDraw, lw_hat, characteristics, domain_violation)``.
    """
    if sigma_chol is None:
        sigma_chol = np.linalg.cholesky(model.sigma)
    q = _plugin_draw(simulate_returns(model.mu, sigma_chol, n, rng, scenario, t_dof), lincomb.l)
    lw, bad = _weights_from(spec, q)
    chars = characteristic_values(spec, q["r_hat"], q["v_hat"], q["s_hat"])
    joint = JointDraw(
        v_hat=float(q["v_hat"][0]),
        r_hat=float(q["r_hat"][0]),
        theta_hat=q["theta_hat"][0],
        s_hat=float(q["s_hat"][0]),
        eta_hat=q["eta_hat"][0],
        f=float("nan"),
    )
    return joint, lw[0], chars[0], bool(bad[0])


def brute_force_batch(model, lincomb, n, b, seed, spec=None, scenario="normal", t_dof=10) -> DrawBatch:
    """``b`` oracle draws; draw ``i`` uses substream ``(seed, BRUTE_FORCE, i)``."""
    spec = spec or PortfolioSpec()
    if n <= model.p + 2 and scenario == "student_t":
        raise ValueError("need n > p + 2")
    sigma_chol = np.linalg.cholesky(model.sigma)
    parts = []
    for i in range(b):
        gen = rngmod.substream(seed, rngmod.BRUTE_FORCE, i)
        x = simulate_returns(model.mu, sigma_chol, n, gen, scenario, t_dof)
        try:
            parts.append(_plugin_draw(x, lincomb.l))
        except SingularSampleCovariance as exc:
            raise SingularSampleCovariance(f"replication {i}: {exc}") from exc
    return _finish_batch(parts, spec, seed, "brute_force")
