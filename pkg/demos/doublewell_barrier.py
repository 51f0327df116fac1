"""Escape over a barrier: quasipotential of the double well from the right minimum.

For b = x - x^3 with D = 1 the stationary rate function is (x^2 - 1)^2 / 4, so the
cost of climbing from x = 1 to the saddle at 0 is 1/4. The minimum-action
sweep grows the horizon until the action settles.

Run:  python demos/doublewell_barrier.py
"""
from ldthermo import builtin_model
from ldthermo.action import quasipotential

model = builtin_model("doublewell1d")
for target in (0.75, 0.5, 0.25, 0.0):
    value, path = quasipotential(model, [1.0], [target])
    exact = (target ** 2 - 1) ** 2 / 4
    print(f"1 -> {target:4.2f}: action {value:.6f}  exact {exact:.6f}  horizon {path.horizon:g}")
