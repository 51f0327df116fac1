"""Relaxation on position-momentum space and the rate-function ledger.

For ou1d the flux-dependent rate function phi(x) + delta_t y^2 never increases
along the relaxation dynamics. The ledger splits its rate into a flux term
and two production terms, and the sum must equal the slope of phi along the
trajectory.

Run:  python demos/eit_relaxation_ledger.py
"""
import numpy as np

from ldthermo import builtin_model
from ldthermo.eit import EITDynamicsConfig, eit_linearization, eit_relaxation

model = builtin_model("ou1d")
for alpha in (0.0, 1.0):
    run = eit_relaxation(model, None, EITDynamicsConfig(0.1, step=1e-3, alpha=alpha), [1.5], [-1.0], 4.0)
    slope = np.gradient(run.phi, run.t)
    print(f"alpha={alpha}: phi {run.phi[0]:.4f} -> {run.phi[-1]:.2e}, "
          f"largest increase {run.cumulative_increase:.1e}, "
          f"ledger vs slope {np.max(np.abs(slope[1:-1] - run.dphi_dt[1:-1])):.1e}")
    for k in (0, 500, 1000, 2000):
        print(f"   t={run.t[k]:.1f}  flux {run.flux_term[k]: .4f}  cit {run.production_cit[k]: .4f}"
              f"  eit {run.production_eit[k]: .4f}")

_, eig = eit_linearization(model, None, [0.0], 0.1)
print("eigenvalues at the fixed point:", np.round(eig, 4))
