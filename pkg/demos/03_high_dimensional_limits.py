"""How well the normal limits describe finite samples, at c = 0.5 and 0.9.

Run: python demos/03_high_dimensional_limits.py
"""
# %%
import numpy as np

from frontier_sampler import ExperimentConfig, LinearCombination, build_scenario, frontier_quantities, linear_targets, run_experiment, xi_matrix

np.set_printoptions(precision=3, suppress=True)

# %% Limit covariance of (V, R, theta, s, eta) at c = 0.5.
cfg = ExperimentConfig(n=1000, c=0.5)
fr = frontier_quantities(build_scenario(cfg))
tg = linear_targets(fr, LinearCombination.unit(cfg.p))
law = xi_matrix(fr, tg, cfg.n, cfg.p)
print(law.labels)
print(law.cov)

# %% QQ slopes and KS distances of the standardized draws.
for c in (0.5, 0.9):
    report = run_experiment(cfg.replace(c=c, outputs=()))
    print(f"c={c}: worst quantity {report.worst_quantity}")
    for r in report.records:
        print(f"   {r.name:12s} qq_slope={r.qq_slope:.3f}  ks={r.ks_statistic_vs_asymptotic:.4f}  bias={r.mean_bias:+.3f}")
