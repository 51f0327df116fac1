import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ldthermo import Grid, builtin_model, custom_model, model_from_config, validate_model
from ldthermo.errors import (DecompositionMismatch, DegenerateDiffusion, ExpressionError, InvalidParam,
                             UnknownModel)
from ldthermo.expressions import Expression
from ldthermo.models import ModelSpec


def test_ou1d_values(ou):
    assert ou.b([1.0])[0] == -1.0
    assert ou.phi([1.0]) == pytest.approx(0.5, abs=1e-15)
    assert np.all(ou.gamma(np.linspace(-3, 3, 7)[:, None]) == 0)


def test_linear2d_gamma_and_orthogonality(lin2):
    assert np.allclose(lin2.gamma([1.0, 0.0]), [0.0, -2.0])
    x = lin2.validation_grid().points()
    dots = np.einsum("ki,ki->k", lin2.gamma(x), lin2.grad_phi(x))
    assert np.max(np.abs(dots)) == 0.0


def test_doublewell_minimum_at_wells(dwell):
    x = np.linspace(-2, 2, 4001)[:, None]
    phi = dwell.phi(x)
    assert dwell.phi([1.0]) - phi.min() == pytest.approx(0.0, abs=1e-15)
    assert dwell.phi([-1.0]) == dwell.phi([1.0])


def test_doublewell_phi_reconstructed_from_drift(dwell):
    # Independent oracle: integrate -D^{-1} b from the well at x = 1.
    from scipy.integrate import quad

    for x in (-0.3, 0.0, 0.5, 1.7):
        val, _ = quad(lambda s: -float(dwell.b([s])[0]), 1.0, x)
        assert dwell.phi([x]) == pytest.approx(val, abs=1e-12)


def test_validate_ou_and_linear2d(ou, lin2):
    rep = validate_model(ou, Grid.uniform(-3, 3, 41))
    assert rep.passed and rep.spd_margin == 1.0
    rep2 = validate_model(lin2, Grid.uniform(-2, 2, 41, 2))
    assert rep2.passed and rep2.decomposition_residual <= 1e-12


def test_degenerate_diffusion_detected():
    m = custom_model(["-x1"], [["x1^2"]], domain=((-1.0,), (1.0,)))
    with pytest.raises(DegenerateDiffusion):
        validate_model(m, Grid.uniform(-1, 1, 41))
    rep = validate_model(m, Grid.uniform(-1, 1, 41), raise_errors=False)
    assert not rep.passed


def test_decomposition_mismatch_detected():
    bad = ModelSpec(
        name="bad", dim=1, drift=lambda x: -2 * x, diffusion=lambda x: np.ones(x.shape + (1,)),
        analytic_phi_ss=lambda x: 0.5 * x[..., 0] ** 2, grad_phi_ss=lambda x: x,
        analytic_gamma=lambda x: np.zeros_like(x), constant_diffusion=True, domain=((-1.0,), (1.0,)))
    with pytest.raises(DecompositionMismatch):
        validate_model(bad)


def test_stationary_hje_residual_all_builtins(ou, lin2, dwell):
    for m in (ou, lin2, dwell):
        x = m.validation_grid().points()
        g = m.grad_phi(x)
        res = np.einsum("ki,ki->k", g, np.einsum("kij,kj->ki", m.D(x), g) + m.b(x))
        assert np.max(np.abs(res)) <= 1e-10


def test_unknown_and_invalid():
    with pytest.raises(UnknownModel):
        builtin_model("lorenz")
    with pytest.raises(InvalidParam):
        builtin_model("ou1d", {"b": 0.0})
    with pytest.raises(InvalidParam):
        builtin_model("ou1d", {"D": -1.0})
    with pytest.raises(InvalidParam):
        builtin_model("ou1d", {"c": 1.0})


def test_builtin_is_pure():
    a = builtin_model("linear2d", {"omega": 3.0})
    b = builtin_model("linear2d", {"omega": 3.0})
    x = np.random.default_rng(0).normal(size=(20, 2))
    assert a.params == b.params
    assert np.array_equal(a.b(x), b.b(x)) and np.array_equal(a.D(x), b.D(x))


def test_param_aliases():
    m = builtin_model("linear2d", {"k": 2.0, "w": 0.5})
    assert m.params["kappa"] == 2.0 and m.params["omega"] == 0.5


def test_model_from_config_custom():
    cfg = {
        "model.name": "custom",
        "model.params.a": "2",
        "model.drift_expr[0]": "-a*x1 + x2",
        "model.drift_expr[1]": "-x2",
        "model.diffusion_expr[0][0]": "1",
        "model.diffusion_expr[0][1]": "0",
        "model.diffusion_expr[1][0]": "0",
        "model.diffusion_expr[1][1]": "1 + 0.5*cos(x1)^2",
        "model.domain": "-1:1,-2:2",
    }
    m = model_from_config(cfg)
    assert m.dim == 2 and m.domain == ((-1.0, -2.0), (1.0, 2.0))
    assert np.allclose(m.b([1.0, 1.0]), [-1.0, -1.0])
    assert m.D([0.0, 0.0])[1, 1] == pytest.approx(1.5)
    assert validate_model(m).passed


def test_expression_rejects_unsafe_code():
    for src in ("__import__('os')", "x1.real", "[x1]", "x3", "lambda: 1", "abs(x1)"):
        with pytest.raises(ExpressionError):
            Expression(src, 2)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.1, 3))
def test_expression_matches_python(x1, x2, c):
    e = Expression("c*x1^2 - exp(-x2)/2 + sin(x1)*cos(x2)", 2, {"c": c})
    ref = c * x1 ** 2 - np.exp(-x2) / 2 + np.sin(x1) * np.cos(x2)
    assert e(np.array([x1, x2])) == pytest.approx(ref, rel=1e-12, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 5), st.floats(-3, 3))
def test_linear2d_decomposition_any_params(kappa, omega):
    m = builtin_model("linear2d", {"kappa": kappa, "omega": omega})
    x = m.validation_grid(9).points()
    assert np.allclose(m.b(x), -np.einsum("kij,kj->ki", m.D(x), m.grad_phi(x)) + m.gamma(x), atol=1e-12)


def test_fd_derivatives_match_analytic(lin2):
    from ldthermo.models import _fd_vector_jacobian

    x = np.random.default_rng(1).normal(size=(5, 2))
    assert np.allclose(_fd_vector_jacobian(lin2.b, x), lin2.jac_b(x), atol=1e-8)
