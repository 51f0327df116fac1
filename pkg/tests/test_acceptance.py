"""Acceptance suite: one test per criterion, each tagged with ``criterion(n, title)``.

A pass/fail line per criterion is printed in the terminal summary.
"""
import time

import numpy as np
import pytest
from scipy.integrate import quad

from ldthermo import Grid, builtin_model
from ldthermo.action import minimize_action, quasipotential
from ldthermo.cit import drift_decomposition, epr_breakdown, gibbs_entropy, meso_eit_entropy, phi_from_density
from ldthermo.eit import EITDynamicsConfig, build_eit_field, conditional_densities, contract, eit_relaxation
from ldthermo.errors import NotDetailedBalance
from ldthermo.fpe import FPEConfig, evolve_fpe, near_delta, probability_flux, stationary_density
from ldthermo.hamjac import canonical_transform, hamiltonian, integrate_canonical, integrate_hamiltonian, lorentz_power
from ldthermo.ou import DoubleLimitSpec, OUParams, ou_double_limit, ou_finite_time_rate, ou_transition
from ldthermo.sde import EnsembleConfig, empirical_ldrf, histogram_density, simulate_ensemble, velocity_stats
from ldthermo import DensityEstimate, GriddedField

P = OUParams(1.0, 1.0)
criterion = pytest.mark.criterion
quiet_box = pytest.mark.filterwarnings("ignore:analytic boundary mass")


@pytest.fixture
def note(record_property):
    def _note(**kv):
        record_property("detail", " ".join(f"{k}={v:.3g}" if isinstance(v, float) else f"{k}={v}"
                                           for k, v in kv.items()))
    return _note


@criterion(1, "OU quasipotential")
def test_ou_quasipotential(ou, note):
    start = time.perf_counter()
    worst = 0.0
    for x in (0.5, 1.0, 1.5, 2.0):
        value, _ = quasipotential(ou, [0.0], [x])
        worst = max(worst, abs(value - x * x / 2) / (x * x / 2))
    elapsed = time.perf_counter() - start
    note(max_rel_err=worst, seconds=elapsed)
    assert worst <= 0.01 and elapsed < 60


@criterion(2, "finite-time rate")
def test_finite_time_rate(ou, note):
    errs = []
    for T in (0.5, 1.0, 2.0):
        res = minimize_action(ou, [0.0], [1.0], T, 256)
        ref = ou_finite_time_rate(P, 1.0, T, 0.0)
        errs.append(abs(res.action - ref) / ref)
    note(max_rel_err=max(errs))
    assert max(errs) <= 5e-3


@quiet_box
@criterion(3, "Pythagorean EPR identity")
def test_pythagorean_identity(lin2, rng, note):
    x = rng.uniform(-2, 2, (1000, 2))
    r = epr_breakdown(lin2, x=x, tol=np.inf)
    analytic = float(np.max(np.abs(r.residual)))
    grid = Grid.uniform(-2, 2, 161, dim=2)
    phi_hat = phi_from_density(stationary_density(lin2, FPEConfig(grid, 0.05, method="implicit")))
    pts = grid.points()
    inner = pts[np.all(np.abs(pts) <= 1.0, axis=1)]
    numeric = epr_breakdown(lin2, phi_hat, inner).relative_residual
    note(analytic_abs=analytic, fpe_relative=numeric)
    assert analytic <= 1e-10 and numeric <= 0.05


@criterion(4, "orthogonality")
def test_orthogonality(lin2, ou, dwell, rng, note):
    x2 = rng.uniform(-2, 2, (1000, 2))
    ortho = drift_decomposition(lin2, x=x2).orthogonality_residual
    x1 = rng.uniform(-2, 2, (1000, 1))
    gam = max(float(np.max(np.abs(drift_decomposition(m, x=x1).gamma))) for m in (ou, dwell))
    note(linear2d=ortho, max_gamma_1d=gam)
    assert ortho <= 1e-12 and gam == 0.0


@criterion(5, "WKB convergence")
def test_wkb_convergence(ou, note):
    grid = Grid.uniform(-3, 3, 241)
    x = grid.axes[0]
    inner = np.abs(x) <= 1.0
    errs = []
    for eps in (0.2, 0.1, 0.05):
        phi_hat = phi_from_density(stationary_density(ou, FPEConfig(grid, eps, method="implicit"))).values
        errs.append(float(np.max(np.abs(phi_hat - x ** 2 / 2)[inner])))
    # the scheme reproduces exp(-x^2/2eps) to round-off, so monotonicity is checked above a 1e-9 floor
    monotone = all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))
    note(errors=[float(f"{e:.2e}") for e in errs])
    assert monotone and errs[-1] <= 0.05


@criterion(6, "Monte Carlo LDRF")
def test_monte_carlo_ldrf(ou, note):
    start = time.perf_counter()
    eps = 0.02
    cfg = EnsembleConfig(epsilon=eps, step=0.01, horizon=6.0, n_paths=1_000_000, seed=2024, record_stride=600)
    final = simulate_ensemble(ou, [0.0], cfg).final()
    grid = Grid.uniform(-1, 1, 41)
    phi = empirical_ldrf(histogram_density(final, grid, eps))
    err = np.abs(phi - grid.axes[0] ** 2 / 2)
    elapsed = time.perf_counter() - start
    note(sup_err=float(err.max()), bins_used=int(phi.count()), seconds=elapsed)
    assert float(err.max()) <= 0.1 and elapsed < 300


@criterion(7, "Hamiltonian conservation")
def test_hamiltonian_conservation(note):
    drifts, ratios = [], []
    for name in ("ou1d", "linear2d"):
        m = builtin_model(name)
        x0, y0 = [0.5] * m.dim, [0.3] * m.dim
        drifts.append(integrate_hamiltonian(m, x0, y0, 2.0, 1e-3).energy_drift)
        ratios.append(integrate_hamiltonian(m, x0, y0, 2.0, 0.1).energy_drift
                      / integrate_hamiltonian(m, x0, y0, 2.0, 0.05).energy_drift)
    note(max_drift=max(drifts), min_halving_ratio=min(ratios))
    assert max(drifts) <= 1e-8 and min(ratios) >= 4


@criterion(8, "canonical transformation")
def test_canonical_transformation(rng, lin2, note):
    odd, flow = 0.0, 0.0
    for name in ("ou1d", "doublewell1d"):
        m = builtin_model(name)
        form = canonical_transform(m)
        q = rng.uniform(-2, 2, (1000, 1))
        p = rng.normal(size=(1000, 1))
        odd = max(odd, float(np.max(np.abs(form.hamiltonian(q, p) - form.hamiltonian(q, -p)))))
        ref = integrate_hamiltonian(m, [0.5], [0.1], 1.0, 1e-3)
        can = integrate_canonical(form, *form.to_canonical([0.5], [0.1]), 1.0, 1e-3)
        x, y = form.from_canonical(can.x, can.y)
        flow = max(flow, float(np.max(np.abs(x - ref.x))), float(np.max(np.abs(y - ref.y))))
    with pytest.raises(NotDetailedBalance):
        canonical_transform(lin2)
    note(odd_part=odd, flow_gap=flow)
    assert odd <= 1e-12 and flow <= 1e-8


@criterion(9, "Lorentz zero work")
def test_lorentz_zero_work(lin2, rng, note):
    split = lorentz_power(lin2, rng.uniform(-2, 2, (1000, 2)), rng.uniform(-2, 2, (1000, 2)))
    worst = float(np.max(np.abs(split.lorentz_power)))
    note(max_power=worst)
    assert worst <= 1e-10


@criterion(10, "contraction")
def test_contraction(note):
    worst = 0.0
    for name in ("ou1d", "linear2d", "doublewell1d"):
        m = builtin_model(name)
        grid = m.validation_grid(21 if m.dim == 2 else 81)
        for dt in (0.01, 0.1, 1.0):
            c = contract(build_eit_field(m, None, grid, dt, epsilon=0.05, y_count=21))
            assert np.all(c.argmin_y == 0) and np.all(c.grid_argmin_y == 0)
            worst = max(worst, float(np.max(np.abs(c.grid_min - m.phi(grid.mesh())))))
    note(max_gap=worst)
    assert worst <= 1e-14


@criterion(11, "velocity and momentum laws")
def test_velocity_momentum_laws(note):
    eps, dt = 0.05, 0.002
    worst = 0.0
    for name, x in (("ou1d", [1.0]), ("linear2d", [0.5, -0.5])):
        m = builtin_model(name)
        cfg = EnsembleConfig(epsilon=eps, step=dt / 10, horizon=dt, n_paths=100_000, seed=5, record_stride=10)
        vs = velocity_stats(simulate_ensemble(m, x, cfg), x, 1e-12, dt)
        vel, mom = conditional_densities(m, x, eps, dt)
        z = [np.abs(vs.mean_xdot - vel.mean.reshape(-1)) / vs.se_mean_xdot,
             np.abs(vs.cov_xdot - vel.cov.reshape(m.dim, m.dim)) / vs.se_cov_xdot,
             np.abs(vs.mean_y - mom.mean.reshape(-1)) / vs.se_mean_y,
             np.abs(vs.cov_y - mom.cov.reshape(m.dim, m.dim)) / vs.se_cov_y]
        worst = max(worst, max(float(np.max(v)) for v in z))
        assert vs.n_samples == 100_000
    note(max_standard_errors=worst)
    assert worst <= 3.0


@criterion(12, "EIT relaxation Lyapunov")
def test_eit_lyapunov(ou, rng, note):
    dt = 0.1
    inc, gap = 0.0, 0.0
    for x0, y0 in rng.uniform(-2, 2, (10, 2)):
        r = eit_relaxation(ou, None, EITDynamicsConfig(dt, alpha=0.0), [x0], [y0], 5.0)
        inc = max(inc, r.cumulative_increase)
        x, y = r.x[:, 0], r.y[:, 0]
        gap = max(gap, float(np.max(np.abs(r.dissipation - (x ** 2 + dt * y ** 2)))))
    note(max_increase=inc, max_dissipation_gap=gap)
    assert inc <= 1e-6 and gap <= 1e-8


@criterion(13, "double limit")
def test_double_limit(note):
    e = ou_double_limit(DoubleLimitSpec(0.0, 0.0, 1.0, 0.0, 1.0, "eps-first", P))
    s = ou_double_limit(DoubleLimitSpec(0.0, 0.0, 1.0, 0.0, 1.0, "sigma-first", P))
    note(eps_first=e, sigma_first=s)
    assert e == 0.0
    assert s == pytest.approx(np.exp(-2) / (2 * (1 - np.exp(-2))), rel=1e-14)
    assert s == pytest.approx(0.07825, abs=1e-5) and s != e


@quiet_box
@criterion(14, "Hill flux identity")
def test_hill_identity(ou, lin2, dwell, note):
    g1 = Grid.uniform(-3, 3, 241)
    g2 = Grid.uniform(-2, 2, 61, dim=2)
    cases = [(ou, 0.1, stationary_density(ou, FPEConfig(g1, 0.1, method="implicit"))),
             (dwell, 0.1, stationary_density(dwell, FPEConfig(g1, 0.1, method="implicit"))),
             (ou, 0.1, evolve_fpe(ou, FPEConfig(g1, 0.1), near_delta(g1, [1.0], 0.1), 0.5)),
             (lin2, 0.2, stationary_density(lin2, FPEConfig(g2, 0.2, method="implicit"))),
             (lin2, 0.2, evolve_fpe(lin2, FPEConfig(g2, 0.2), near_delta(g2, [1.0, 0.0], 0.2), 0.5))]
    worst = 0.0
    for m, eps, p in cases:
        f = probability_flux(m, eps, p)
        worst = max(worst, f.identity_residual / (np.finfo(float).eps * f.scale))
    stat = probability_flux(ou, 0.1, cases[0][2]).max_interface
    note(identity_in_ulps=worst, ou_stationary_flux=stat)
    assert worst <= 1e3 and stat <= 1e-8


@criterion(15, "Chapman-Kolmogorov")
def test_chapman_kolmogorov(ou, note):
    eps, xp = 0.2, 0.5
    gap = 0.0
    for x in (-0.5, 0.0, 0.7):
        mid, _ = quad(lambda z: ou_transition(P, eps, x, 0.6, z) * ou_transition(P, eps, z, 0.4, xp), -8, 8,
                      epsabs=1e-14, epsrel=1e-12)
        gap = max(gap, abs(mid - float(ou_transition(P, eps, x, 1.0, xp))))
    grid = Grid.uniform(-3, 3, 241)
    cfg = FPEConfig(grid, 0.1, time_step=0.01, method="implicit")
    p0 = near_delta(grid, [1.0], 0.1)
    once = evolve_fpe(ou, cfg, p0, 1.0)
    twice = evolve_fpe(ou, cfg, evolve_fpe(ou, cfg, p0, 0.3), 0.7)
    fgap = float(np.max(np.abs(once.values - twice.values)))
    note(kernel_gap=gap, fpe_gap=fgap)
    assert gap <= 1e-8 and fgap <= 1e-8


@criterion(16, "Gibbs and mesoscopic entropy")
def test_entropies(note):
    gap_g, gap_m = 0.0, 0.0
    for eps in (0.05, 0.1, 0.3):
        s = np.sqrt(eps)
        grid = Grid.uniform(-12 * s, 12 * s, 4001)
        d = DensityEstimate.gaussian(grid, [0.0], [[eps]], eps)
        gap_g = max(gap_g, abs(gibbs_entropy(d) - (0.5 + 0.5 * np.log(2 * np.pi * eps))))
        for Dval in (0.5, 1.0, 2.0):
            m = builtin_model("ou1d", {"b": 1.0, "D": Dval})
            for dt in (0.001, 0.01):
                r = meso_eit_entropy(m, eps, d, dt)
                gap_m = max(gap_m, abs(r.difference - (0.5 + 0.5 * np.log(4 * np.pi * eps * Dval * dt))))
    note(gibbs_gap=gap_g, meso_gap=gap_m)
    assert gap_g <= 1e-6 and gap_m <= 1e-6
