"""Simulation study: scenario construction, batch generation and diagnostics.

A scenario fixes one population ``(mu, Sigma)`` per experiment: ``Sigma`` has
a prescribed eigenvalue multiset and Haar-random eigenvectors, ``mu`` is
uniform.  Draws from the exact representation (normal returns only) and
from the brute-force oracle are standardised by the limit laws and
summarised by KS distances, QQ fits and moment ratios.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special, stats

from . import linalg, rng as rngmod
from .asymptotics import AsymptoticLaw, omega_lg, omega_lg_consistent, xi_matrix
from .errors import ConfigError, FrontierError, NonpositiveSlopeEstimate
from .estimators import (
    confidence_region,
    consistent_estimates,
    omega_hat_plugin,
    sample_estimates,
    test_weights,
)
from .model import (
    LinearCombination,
    PopulationModel,
    PortfolioKind,
    PortfolioSpec,
    frontier_quantities,
    linear_targets,
    weights,
)
from .samplers import DrawBatch, SamplerInputs, brute_force_batch, representation_batch, simulate_returns

logger = logging.getLogger(__name__)

__all__ = [
    "CoverageTable",
    "DiagnosticsReport",
    "ExperimentConfig",
    "QuantityRecord",
    "build_scenario",
    "eigen_counts",
    "emit_qq",
    "emit_qq_values",
    "ks_critical_value",
    "qq_fit",
    "read_qq",
    "run_coverage",
    "run_experiment",
]

SCENARIOS = ("normal", "student_t")
DEFAULT_EIGEN_SPEC = ((0.2, 0.2), (0.4, 1.0), (0.4, 5.0))


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "normal"
    t_dof: int = 10
    n: int = 1000
    c: float = 0.5
    gamma: float = 20.0
    lincomb: tuple = (0,)
    b_draws: int = 5000
    seed: int = 0
    mu_law: tuple = (-0.2, 0.2)
    eigen_spec: tuple = DEFAULT_EIGEN_SPEC
    portfolio: PortfolioSpec | None = None
    outputs: tuple = ("draws", "report", "qq")
    form: str = "literal"
    slope_mode: str = "verbatim"
    beta: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "lincomb", tuple(int(i) for i in self.lincomb))
        object.__setattr__(self, "mu_law", tuple(float(x) for x in self.mu_law))
        object.__setattr__(self, "eigen_spec", tuple((float(a), float(b)) for a, b in self.eigen_spec))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if self.portfolio is None:
            object.__setattr__(self, "portfolio", PortfolioSpec(PortfolioKind.EU, gamma=self.gamma))
        self.validate()

    @property
    def p(self) -> int:
        # round half up; Python's round() would send 0.5 to the even neighbour
        return int(math.floor(self.c * self.n + 0.5))

    @property
    def c_effective(self) -> float:
        return self.p / self.n

    def validate(self) -> None:
        def bad(msg):
            raise ConfigError(msg)

        if self.scenario not in SCENARIOS:
            bad(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if self.scenario == "student_t" and self.t_dof <= 2:
            bad("t_dof must exceed 2")
        if not 0.0 < self.c < 1.0:
            bad(f"c must lie in (0, 1), got {self.c}")
        if self.n < 4:
            bad("n too small")
        p = self.p
        if p < 2:
            bad(f"p = round(c n) = {p} < 2")
        if self.n <= p + 2:
            bad(f"need n > p + 2, got n={self.n}, p={p}")
        if self.b_draws < 1:
            bad("b_draws must be >= 1")
        if not self.lincomb or len(set(self.lincomb)) != len(self.lincomb):
            bad("lincomb must list distinct asset indices")
        if min(self.lincomb) < 0 or max(self.lincomb) >= p:
            bad(f"lincomb indices must lie in [0, {p})")
        if len(self.lincomb) >= p - 1:
            bad("need k < p - 1")
        lo, hi = self.mu_law
        if not lo < hi:
            bad("mu_law must be (low, high) with low < high")
        props = [a for a, _ in self.eigen_spec]
        if abs(sum(props) - 1.0) > 1e-12 or min(props) < 0:
            bad("eigen_spec proportions must be non-negative and sum to 1")
        if min(b for _, b in self.eigen_spec) <= 0:
            bad("eigen_spec values must be positive")
        if self.form not in ("literal", "derived"):
            bad("form must be 'literal' or 'derived'")
        if self.slope_mode not in ("verbatim", "centering_exact"):
            bad("slope_mode must be 'verbatim' or 'centering_exact'")
        if not 0.0 < self.beta < 1.0:
            bad("beta must lie in (0, 1)")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["portfolio"] = self.portfolio.to_dict()
        d["lincomb"] = list(self.lincomb)
        d["mu_law"] = {"low": self.mu_law[0], "high": self.mu_law[1]}
        d["eigen_spec"] = [list(x) for x in self.eigen_spec]
        d["outputs"] = list(self.outputs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        try:
            if isinstance(d.get("mu_law"), dict):
                d["mu_law"] = (d["mu_law"]["low"], d["mu_law"]["high"])
            if isinstance(d.get("portfolio"), dict):
                port = dict(d["portfolio"])
                port.setdefault("gamma", d.get("gamma", 20.0))
                d["portfolio"] = PortfolioSpec.from_dict(port)
            elif isinstance(d.get("portfolio"), str):
                d["portfolio"] = PortfolioSpec(d["portfolio"], gamma=d.get("gamma", 20.0))
            for key in ("n", "b_draws", "seed", "t_dof"):
                if key in d and (isinstance(d[key], bool) or not isinstance(d[key], int)):
                    raise ConfigError(f"{key} must be an integer")
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def eigen_counts(p: int, proportions) -> list[int]:
    """Split ``p`` by proportions with the largest-remainder rule."""
    raw = [p * a for a in proportions]
    counts = [int(math.floor(x)) for x in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: p - sum(counts)]:
        counts[i] += 1
    return counts


def build_scenario(config: ExperimentConfig, rng=None) -> PopulationModel:
    """``Sigma = U diag(lambda) U'`` with Haar ``U`` and ``mu ~ U(low, high)``."""
    if rng is None:
        rng = rngmod.substream(config.seed, rngmod.SCENARIO, 0)
    p = config.p
    counts = eigen_counts(p, [a for a, _ in config.eigen_spec])
    lam = np.concatenate([np.full(cnt, val) for cnt, (_, val) in zip(counts, config.eigen_spec)])
    u = linalg.haar_orthogonal(p, rng)
    sigma = (u * lam) @ u.T
    sigma = 0.5 * (sigma + sigma.T)
    mu = rng.uniform(config.mu_law[0], config.mu_law[1], p)
    return PopulationModel(mu, sigma)


# --- statistics ---------------------------------------------------------------


def ks_critical_value(alpha: float, n1: int, n2: int | None = None) -> float:
    """Asymptotic Kolmogorov critical value (one- or two-sample)."""
    n_eff = n1 if n2 is None else n1 * n2 / (n1 + n2)
    return float(special.kolmogi(alpha) / math.sqrt(n_eff))


def blom_quantiles(b: int) -> np.ndarray:
    i = np.arange(1, b + 1)
    return stats.norm.ppf((i - 0.375) / (b + 0.25))


def qq_fit(z) -> tuple[float, float]:
    """OLS slope and intercept of sorted ``z`` on normal Blom quantiles."""
    zs = np.sort(np.asarray(z, dtype=float))
    q = blom_quantiles(zs.size)
    qc = q - q.mean()
    slope = float(qc @ (zs - zs.mean()) / (qc @ qc))
    return slope, float(zs.mean() - slope * q.mean())


@dataclass
class QuantityRecord:
    name: str
    ks_statistic_vs_asymptotic: float
    ks_pvalue_vs_asymptotic: float
    ks_statistic_vs_oracle: float
    qq_slope: float
    qq_intercept: float
    mean_bias: float
    mean_bias_se: float
    variance_ratio: float
    domain_violation_rate: float
    n_draws: int


@dataclass
class DiagnosticsReport:
    records: list
    runtime_seconds: float
    timings: dict
    representation_valid: bool
    p: int
    c_effective: float
    provenance: str
    notes: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def record(self, name: str) -> QuantityRecord:
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [r.name for r in self.records]

    @property
    def worst_quantity(self) -> str:
        """Quantity with the largest one-sample KS distance to its limit law."""
        return max(self.records, key=lambda r: r.ks_statistic_vs_asymptotic).name

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["worst_quantity"] = self.worst_quantity
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=float)


def _laws(config: ExperimentConfig, model: PopulationModel, lincomb: LinearCombination):
    frontier = frontier_quantities(model)
    targets = linear_targets(frontier, lincomb)
    xi = xi_matrix(frontier, targets, config.n, config.p, form=config.form)
    om = omega_lg(config.portfolio, frontier, targets, config.n, config.p, form=config.form)
    return [xi, om]


def _standardized(batch: DrawBatch, laws) -> dict:
    out = {}
    for law in laws:
        sd = np.sqrt(np.diag(law.cov)) / law.scale
        for j, name in enumerate(law.labels):
            x = batch.column(name)
            out[name] = (x - law.center[j]) / sd[j]
    return out


def _record(name, z, other, violation_rate) -> QuantityRecord:
    z = z[np.isfinite(z)]
    ks = stats.kstest(z, "norm")
    ks_oracle = float("nan")
    if other is not None:
        o = other[np.isfinite(other)]
        ks_oracle = float(stats.ks_2samp(z, o).statistic)
    slope, intercept = qq_fit(z)
    return QuantityRecord(
        name=name,
        ks_statistic_vs_asymptotic=float(ks.statistic),
        ks_pvalue_vs_asymptotic=float(ks.pvalue),
        ks_statistic_vs_oracle=ks_oracle,
        qq_slope=slope,
        qq_intercept=intercept,
        mean_bias=float(z.mean()),
        mean_bias_se=float(z.std(ddof=1) / math.sqrt(z.size)),
        variance_ratio=float(z.var(ddof=1)),
        domain_violation_rate=violation_rate,
        n_draws=int(z.size),
    )


def run_experiment(config: ExperimentConfig, out_dir=None, *, oracle: bool = False) -> DiagnosticsReport:
    """Draw ``b_draws`` replications and compare them with the limit laws.

    Normal returns use the exact representation (and, with ``oracle``, the
    brute-force path as well).  Student-t returns use brute force only, since
    the representation assumes normality.
    """
    t0 = time.perf_counter()
    model = build_scenario(config)
    lincomb = LinearCombination.unit(config.p, config.lincomb)
    laws = _laws(config, model, lincomb)
    spec = config.portfolio
    timings: dict = {}
    notes = []
    fast = brute = None
    representation_valid = config.scenario == "normal"
    if representation_valid:
        inputs = SamplerInputs.build(model, lincomb, config.n)
        with linalg.FACTORIZATIONS.track() as count:
            t = time.perf_counter()
            fast = representation_batch(inputs, config.b_draws, config.seed, spec)
            timings["stochastic_rep_seconds"] = time.perf_counter() - t
        timings["stochastic_rep_factorizations"] = count[0]
    else:
        notes.append("student_t returns: the exact representation assumes normality; brute force only")
    if oracle or not representation_valid:
        with linalg.FACTORIZATIONS.track() as count:
            t = time.perf_counter()
            try:
                brute = brute_force_batch(
                    model, lincomb, config.n, config.b_draws, config.seed, spec, config.scenario, config.t_dof
                )
            except FrontierError as exc:
                raise type(exc)(f"brute-force path: {exc}") from exc
            timings["brute_force_seconds"] = time.perf_counter() - t
        timings["brute_force_factorizations"] = count[0]
    primary = fast if fast is not None else brute
    z_primary = _standardized(primary, laws)
    z_other = _standardized(brute, laws) if (fast is not None and brute is not None) else {}
    records = []
    for name, z in z_primary.items():
        rate = primary.violation_rate if name.startswith("lw_hat") else 0.0
        records.append(_record(name, z, z_other.get(name), rate))
    report = DiagnosticsReport(
        records=records,
        runtime_seconds=time.perf_counter() - t0,
        timings=timings,
        representation_valid=representation_valid,
        p=config.p,
        c_effective=config.c_effective,
        provenance=primary.provenance,
        notes=notes,
        config=config.to_dict(),
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if "draws" in config.outputs:
            for batch in (fast, brute):
                if batch is not None:
                    batch.to_csv(out / f"draws_{batch.provenance}.csv")
        if "qq" in config.outputs:
            emit_qq(primary, laws, out / "qq.csv")
        if "report" in config.outputs:
            (out / "report.json").write_text(report.to_json() + "\n")
            (out / "laws.json").write_text(
                json.dumps({law.labels[0] if law.dim == 1 else "joint": json.loads(law.to_json()) for law in laws}, indent=2) + "\n"
            )
    return report


# --- QQ data -----------------------------------------------------------------

QQ_HEADER = ("quantity", "order_index", "empirical_quantile_standardized", "theoretical_normal_quantile")


def emit_qq_values(standardized: dict, path) -> None:
    """Write sorted standardized draws against normal Blom quantiles."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(QQ_HEADER)
        for name, z in standardized.items():
            zs = np.sort(np.asarray(z, dtype=float)[np.isfinite(z)])
            q = blom_quantiles(zs.size)
            for i, (a, b) in enumerate(zip(zs, q)):
                w.writerow((name, i, "%.17g" % a, "%.17g" % b))


def emit_qq(batch: DrawBatch, law, path) -> None:
    """QQ table of every quantity labelled in ``law`` (one law or a list)."""
    laws = [law] if isinstance(law, AsymptoticLaw) else list(law)
    emit_qq_values(_standardized(batch, laws), path)


def read_qq(path) -> dict:
    """Read a QQ table back as ``{quantity: (empirical, theoretical)}``."""
    data: dict = {}
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if tuple(header) != QQ_HEADER:
            raise ValueError(f"unexpected header {header}")
        for name, _, e, t in r:
            data.setdefault(name, ([], []))
            data[name][0].append(float(e))
            data[name][1].append(float(t))
    return {k: (np.array(a), np.array(b)) for k, (a, b) in data.items()}


# --- coverage ----------------------------------------------------------------


@dataclass
class CoverageTable:
    """Coverage rows plus, per portfolio, the truth and the per-replication
    corrected weights and covariance estimates (NaN where ``s_c <= 0``)."""

    rows: list
    reps: int
    replicates: dict = field(default_factory=dict)

    def row(self, portfolio: str, level: float) -> dict:
        for r in self.rows:
            if r["portfolio"] == portfolio and abs(r["level"] - level) < 1e-12:
                return r
        raise KeyError((portfolio, level))

    def to_csv(self, path) -> None:
        if not self.rows:
            raise ValueError("empty coverage table")
        cols = list(self.rows[0])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.rows:
                w.writerow(["%.17g" % v if isinstance(v, float) else v for v in (r[c] for c in cols)])


POWER_SHIFTS = (1.0, 2.0, 3.0, 5.0)


def run_coverage(
    config: ExperimentConfig,
    reps: int,
    portfolios=None,
    betas=None,
    out_dir=None,
) -> CoverageTable:
    """Coverage of the confidence region and size/power of the dual test.

    Every replication simulates ``n`` returns from the fixed population; all
    portfolios and levels are evaluated on the same replications.  Power uses
    alternatives ``truth + d * sd`` on the first coordinate, with ``sd`` from
    the population limit law.
    """
    if reps < 1:
        raise ConfigError("reps must be >= 1")
    if portfolios is None:
        portfolios = [config.portfolio, PortfolioSpec(PortfolioKind.GMV)]
    betas = (config.beta,) if betas is None else tuple(betas)
    model = build_scenario(config)
    n, p = config.n, config.p
    lincomb = LinearCombination.unit(p, config.lincomb)
    frontier = frontier_quantities(model)
    targets = linear_targets(frontier, lincomb)
    sigma_chol = np.linalg.cholesky(model.sigma)
    info = []
    for spec in portfolios:
        truth = lincomb.l @ weights(spec, model, frontier)
        law = omega_lg_consistent(spec, frontier, targets, n, p, form=config.form)
        sd = law.sd()[0]
        info.append((spec, truth, sd, law.cov))
    k = lincomb.k
    reps_lw = np.full((len(info), reps, k), np.nan)
    reps_omega = np.full((len(info), reps, k, k), np.nan)
    tallies = {
        (i, b): {"covered": 0, "reject": 0, "valid": 0, "duality_violations": 0, "power": np.zeros(len(POWER_SHIFTS))}
        for i in range(len(info))
        for b in betas
    }
    for rep in range(reps):
        gen = rngmod.substream(config.seed, rngmod.COVERAGE, rep)
        x = simulate_returns(model.mu, sigma_chol, n, gen, config.scenario, config.t_dof)
        try:
            sample = sample_estimates(x)
        except FrontierError as exc:
            raise type(exc)(f"replication {rep}: {exc}") from exc
        for i, (spec, truth, sd, _) in enumerate(info):
            cons = consistent_estimates(sample, lincomb, spec, config.slope_mode)
            try:
                omega = omega_hat_plugin(spec, cons, form=config.form)
            except NonpositiveSlopeEstimate:
                continue
            reps_lw[i, rep] = cons.lw_c
            reps_omega[i, rep] = omega
            for b in betas:
                tally = tallies[(i, b)]
                region = confidence_region(cons, omega, b)
                covered = region.contains(truth)
                test = test_weights(cons, omega, truth, b)
                tally["valid"] += 1
                tally["covered"] += covered
                tally["reject"] += test.reject
                tally["duality_violations"] += test.reject == covered
                for j, d in enumerate(POWER_SHIFTS):
                    alt = truth.copy()
                    alt[0] += d * sd
                    tally["power"][j] += not region.contains(alt)
    rows = []
    for (i, b), t in tallies.items():
        spec = info[i][0]
        valid = max(t["valid"], 1)
        row = {
            "portfolio": spec.kind.value,
            "level": 1.0 - b,
            "reps": reps,
            "valid_reps": t["valid"],
            "coverage": t["covered"] / valid,
            "size": t["reject"] / valid,
            "duality_violations": t["duality_violations"],
        }
        for j, d in enumerate(POWER_SHIFTS):
            row[f"power_{d:g}sd"] = float(t["power"][j] / valid)
        rows.append(row)
    replicates = {
        spec.kind.value: {"truth": truth, "omega": cov, "lw_c": reps_lw[i], "omega_hat": reps_omega[i]}
        for i, (spec, truth, _, cov) in enumerate(info)
    }
    table = CoverageTable(rows, reps, replicates)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        table.to_csv(Path(out_dir) / "coverage.csv")
    return table
