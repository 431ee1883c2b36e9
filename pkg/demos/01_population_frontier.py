"""Population frontier and the nine optimal portfolios.

Run: python demos/01_population_frontier.py
"""
# %%
import numpy as np

from frontier_sampler import ExperimentConfig, PortfolioSpec, build_scenario, characteristics, frontier_quantities, weights

np.set_printoptions(precision=4, suppress=True)

# %% A 50-asset population with the three-block spectrum used throughout.
cfg = ExperimentConfig(n=100, c=0.5, seed=2024)
model = build_scenario(cfg)
fr = frontier_quantities(model)
print(f"p={model.p}  R_GMV={fr.r_gmv:.4f}  V_GMV={fr.v_gmv:.4f}  s={fr.s:.4f}")
print("eigenvalue counts:", np.unique(np.round(np.linalg.eigvalsh(model.sigma), 6), return_counts=True))

# %% Every portfolio is w_GMV plus g times the self-financing direction.
specs = [
    PortfolioSpec("GMV"),
    PortfolioSpec("MV", mu0=0.1),
    PortfolioSpec("EU", gamma=20),
    PortfolioSpec("T", rf=-0.2),
    PortfolioSpec("SR"),
    PortfolioSpec("MVaR", alpha=0.95),
    PortfolioSpec("MCVaR", alpha=0.95),
    PortfolioSpec("MVoR", alpha=0.95, v0=0.5),
    PortfolioSpec("MCVoR", alpha=0.95, k0=0.3),
]
print(f"{'kind':6s} {'sum w':>7s} {'R_g':>8s} {'V_g':>8s} {'VaR':>8s} {'CVaR':>8s}")
for spec in specs:
    try:
        w = weights(spec, model, fr)
        ch = characteristics(spec, fr.r_gmv, fr.v_gmv, fr.s)
    except ValueError as exc:
        print(f"{spec.kind.value:6s} undefined here: {exc}")
        continue
    print(f"{spec.kind.value:6s} {w.sum():7.4f} {ch.r_g:8.4f} {ch.v_g:8.4f} {ch.var_g:8.4f} {ch.cvar_g:8.4f}")

# %% The frontier parabola: V = V_GMV + (R - R_GMV)^2 / s.
r = np.linspace(fr.r_gmv - 0.5, fr.r_gmv + 0.5, 5)
print("R:", r)
print("V:", fr.v_gmv + (r - fr.r_gmv) ** 2 / fr.s)
