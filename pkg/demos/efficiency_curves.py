"""Efficiency of pairwise likelihood for Gaussian time series.

For an AR(1) series the full likelihood is available, so the loss from
using only pairs at a set of lags can be measured exactly.  The sandwich
variance is estimated by simulation and compared with the exact value.

    python demos/efficiency_curves.py
"""
from stxtreme.efficiency import are_curve, family_lags

lam, T = 0.6, 500
kw = dict(n_mc=16, series_length=20_000)
curves = {kind: are_curve("ar1", kind, 10, lam, 1.0, T, seed=1, **kw)
          for kind in ("all", "powers")}

print(f"AR(1), lambda = {lam}: efficiency of the pairwise estimator relative to the MLE\n")
print(f"{'K':>3s}  {'consecutive lags':>18s}  {'powers of 2':>18s}  largest lag")
for k in range(10):
    a, c = curves["all"][k], curves["powers"][k]
    print(f"{k + 1:3d}  {a.are:10.3f} +- {a.mc_se:.3f}  {c.are:10.3f} +- {c.mc_se:.3f}"
          f"  {family_lags('powers', k + 1)[-1]:5d}")
print("\nAdding consecutive lags lowers the efficiency until it levels off near 0.65;")
print("spreading the lags geometrically keeps it near 0.85.")
