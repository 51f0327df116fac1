import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldthermo import Grid, GriddedField, builtin_model, custom_model
from ldthermo.errors import BlowUp, NotDetailedBalance, SingularDiffusion
from ldthermo.hamjac import (canonical_transform, hamiltonian, hamiltonian_vector_field, hje_residual,
                             integrate_canonical, integrate_hamiltonian, lagrangian, lorentz_power,
                             stationary_hje_residual)
from ldthermo.ou import OUParams, ou_reference_dynamics

coord = st.floats(-2, 2)


@settings(max_examples=60, deadline=None)
@given(coord, coord, coord, coord)
def test_legendre_duality(x1, x2, v1, v2):
    # L(x, xdot) = xdot . y - H(x, y) at the conjugate momentum, and y maximizes it
    m = builtin_model("linear2d")
    x, v = np.array([x1, x2]), np.array([v1, v2])
    L, y = lagrangian(m, x, v)
    assert L == pytest.approx(float(v @ y - hamiltonian(m, x, y)), abs=1e-10)
    assert L >= -1e-14
    dx, _ = hamiltonian_vector_field(m, x, y)
    assert np.allclose(dx, v, atol=1e-12)
    for dy in np.eye(2) * 0.1:
        assert v @ (y + dy) - hamiltonian(m, x, y + dy) <= L + 1e-12


def test_lagrangian_vanishes_on_flow(dwell):
    x = np.linspace(-1.5, 1.5, 11)[:, None]
    L, y = lagrangian(dwell, x, dwell.b(x))
    assert np.all(L == 0) and np.all(y == 0)


def test_ou_characteristics_match_closed_form(ou):
    tr = integrate_hamiltonian(ou, [0.4], [0.7], 2.0, 1e-3)
    _, xr, yr = ou_reference_dynamics(OUParams(1, 1), "hamiltonian", 0.4, 0.7, 2.0, n=len(tr.t))
    assert np.max(np.abs(tr.x[:, 0] - xr)) < 1e-9
    assert np.max(np.abs(tr.y[:, 0] - yr)) < 1e-9


@pytest.mark.parametrize("name", ["ou1d", "linear2d"])
def test_energy_conservation_and_order(name):
    m = builtin_model(name)
    x0, y0 = [0.5] * m.dim, [0.3] * m.dim
    assert integrate_hamiltonian(m, x0, y0, 2.0, 1e-3).energy_drift <= 1e-8
    coarse = integrate_hamiltonian(m, x0, y0, 2.0, 0.1).energy_drift
    fine = integrate_hamiltonian(m, x0, y0, 2.0, 0.05).energy_drift
    assert coarse / fine >= 4


def test_blowup(dwell):
    with pytest.raises(BlowUp):
        integrate_hamiltonian(dwell, [0.5], [0.3], 2.0, 1e-3)


def test_zero_momentum_is_deterministic_flow(lin2):
    tr = integrate_hamiltonian(lin2, [1.0, 0.0], [0.0, 0.0], 1.0, 1e-3)
    assert np.all(tr.y == 0)
    assert np.all(tr.H == 0)


@pytest.mark.parametrize("name", ["ou1d", "doublewell1d"])
def test_canonical_even_and_equivalent(name, rng):
    m = builtin_model(name)
    form = canonical_transform(m)
    q = rng.uniform(-2, 2, (1000, 1))
    p = rng.normal(size=(1000, 1))
    assert np.max(np.abs(form.hamiltonian(q, p) - form.hamiltonian(q, -p))) <= 1e-12
    y = form.from_canonical(q, p)[1]
    assert np.allclose(form.hamiltonian(q, p), hamiltonian(m, q, y), atol=1e-12)
    a = integrate_hamiltonian(m, [0.5], [0.1], 1.0, 1e-3)
    c = integrate_canonical(form, *form.to_canonical([0.5], [0.1]), 1.0, 1e-3)
    x, y = form.from_canonical(c.x, c.y)
    assert np.max(np.abs(x - a.x)) < 1e-8 and np.max(np.abs(y - a.y)) < 1e-8


def test_canonical_rejects_circulation(lin2):
    with pytest.raises(NotDetailedBalance):
        canonical_transform(lin2)
    rot = custom_model(["-x1 + 2*x2", "-2*x1 - x2"], [["1", "0"], ["0", "1"]])
    with pytest.raises(NotDetailedBalance):
        canonical_transform(rot)
    grad = custom_model(["-x1", "-2*x2"], [["1", "0"], ["0", "2"]])
    canonical_transform(grad)


def test_lorentz_zero_power(lin2, rng):
    x = rng.uniform(-2, 2, (1000, 2))
    v = rng.uniform(-2, 2, (1000, 2))
    split = lorentz_power(lin2, x, v)
    assert np.max(np.abs(split.lorentz_power)) <= 1e-10
    A = np.array([[-1.0, 2.0], [-2.0, -1.0]])
    expected = v @ (A - A.T).T + x @ (A.T @ A).T
    assert np.allclose(split.acceleration, expected, atol=1e-12)


def test_lorentz_zero_power_state_dependent_diffusion(rng):
    m = custom_model(["-x1 + x2", "-x2 - x1"], [["1 + x1^2/4", "0"], ["0", "1 + x2^2/4"]])
    x = rng.uniform(-1, 1, (200, 2))
    v = rng.uniform(-1, 1, (200, 2))
    assert np.max(np.abs(lorentz_power(m, x, v).lorentz_power)) <= 1e-10


def test_singular_diffusion_rejected():
    m = custom_model(["-x1"], [["x1^2"]])
    with pytest.raises(SingularDiffusion):
        lagrangian(m, [0.0], [1.0])


def test_stationary_hje(ou, lin2, dwell, rng):
    for m in (ou, lin2, dwell):
        x = rng.uniform(-1.5, 1.5, (200, m.dim))
        assert np.max(np.abs(stationary_hje_residual(m, None, x))) < 1e-12
    grid = Grid.uniform(-1, 1, 201)
    res = hje_residual(ou, grid, GriddedField(grid, grid.axes[0] ** 2 / 2))
    assert np.max(np.abs(res[1:-1])) < 1e-12
