"""Two closed forms for the weight-estimator covariance against Monte Carlo.

``form="literal"`` keeps the displayed expressions; ``form="derived"`` uses the
delta method on the full joint law.  The ratio of variances tells which one
the exact draws follow.

Run: python demos/05_covariance_forms.py
"""
# %%
import numpy as np

from frontier_sampler import (
    ExperimentConfig,
    LinearCombination,
    PortfolioSpec,
    SamplerInputs,
    build_scenario,
    frontier_quantities,
    linear_targets,
    omega_lg,
    representation_batch,
)

cfg = ExperimentConfig(n=1600, c=0.5, seed=4, mu_law=(-0.02, 0.02))
model = build_scenario(cfg)
lincomb = LinearCombination.unit(cfg.p)
fr = frontier_quantities(model)
tg = linear_targets(fr, lincomb)
inputs = SamplerInputs.build(model, lincomb, cfg.n)
print(f"s = {fr.s:.3f}")

# %%
scale = cfg.n - cfg.p
for spec in (PortfolioSpec("EU", gamma=5), PortfolioSpec("MV", mu0=fr.r_gmv + 0.05), PortfolioSpec("MVaR", alpha=0.95)):
    try:
        batch = representation_batch(inputs, 20000, seed=2, spec=spec)
    except ValueError as exc:
        print(spec.kind.value, "skipped:", exc)
        continue
    mc = np.nanvar(batch.column("lw_hat_1")) * scale
    literal = omega_lg(spec, fr, tg, cfg.n, cfg.p).cov[0, 0]
    derived = omega_lg(spec, fr, tg, cfg.n, cfg.p, form="derived").cov[0, 0]
    print(f"{spec.kind.value:5s} MC/literal {mc / literal:.3f}   MC/derived {mc / derived:.3f}")
