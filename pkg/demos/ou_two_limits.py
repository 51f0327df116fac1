"""Two ways to shrink the noise in an Ornstein-Uhlenbeck process.

The transition density from x' = 1 to x = 0 after t = 1 carries a variance
sigma^2 e^{-2t} from an uncertain start plus eps (1 - e^{-2t}) of fresh noise.
Sending eps to zero first leaves the start spread in place, so -eps ln p tends
to zero. Sending the start spread to zero first leaves a sharp start, and
-eps ln p tends to the finite-time rate function instead.

Run:  python demos/ou_two_limits.py
"""
import numpy as np

from ldthermo import builtin_model
from ldthermo.action import minimize_action
from ldthermo.ou import DoubleLimitSpec, OUParams, ou_double_limit, ou_neg_eps_log_density

P = OUParams(1.0, 1.0)

print("-eps ln p(x=0, t=1 | x'=1) along the two orders")
print(f"{'eps':>8} {'sigma=0.3':>12} {'sigma=0':>12}")
for eps in (1e-1, 1e-2, 1e-3, 1e-4, 1e-6):
    a = ou_neg_eps_log_density(P, 0.3, eps, 1.0, 0.0, 1.0)
    b = ou_neg_eps_log_density(P, 0.0, eps, 1.0, 0.0, 1.0)
    print(f"{eps:8.0e} {a:12.6f} {b:12.6f}")

e_first = ou_double_limit(DoubleLimitSpec(0.0, 0.0, 1.0, 0.0, 1.0, "eps-first", P))
s_first = ou_double_limit(DoubleLimitSpec(0.0, 0.0, 1.0, 0.0, 1.0, "sigma-first", P))
print(f"\nlimit values: eps first -> {e_first}, sigma first -> {s_first:.6f}")

# the sigma-first value is the cheapest action of a path from 1 to 0 in unit time
res = minimize_action(builtin_model("ou1d"), [1.0], [0.0], 1.0, 256)
print(f"minimum action over paths 1 -> 0 in t=1: {res.action:.6f} (EL residual {res.el_residual:.1e})")
mid = res.path.nodes[len(res.path.nodes) // 2, 0]
print(f"optimal path at t=1/2: {mid:.4f}  (closed form sinh(1/2)/sinh(1) = {np.sinh(0.5) / np.sinh(1):.4f})")
