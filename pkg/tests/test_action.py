import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ldthermo import builtin_model, custom_model
from ldthermo.action import (DiscretePath, action_gradient, check_attractor, minimize_action, node_lagrangian,
                             path_action, quasipotential, quasipotential_field)
from ldthermo.errors import InvalidParam, NoConvergence
from ldthermo.ou import OUParams, ou_finite_time_rate

VARD = custom_model(["-x1 + x2/2", "-x2 - x1/2"], [["1 + x1^2/4", "x1*x2/10"], ["x1*x2/10", "1 + x2^2/4"]])


def test_straight_path_action(ou):
    # L = (xdot + x)^2 / 4 along x = t gives 7/12
    S = path_action(ou, DiscretePath.linear([0.0], [1.0], 1.0, 2000))
    assert S == pytest.approx(7 / 12, rel=1e-6)


@settings(max_examples=25, deadline=None)
@given(arrays(float, (9, 2), elements=st.floats(-1.5, 1.5)))
def test_gradient_matches_finite_differences(nodes):
    path = DiscretePath(np.linspace(0, 1, 9), nodes)
    g = action_gradient(VARD, path)
    h = 1e-6
    fd = np.zeros_like(nodes)
    for k in range(9):
        for i in range(2):
            up, dn = nodes.copy(), nodes.copy()
            up[k, i] += h
            dn[k, i] -= h
            fd[k, i] = (path_action(VARD, DiscretePath(path.times, up))
                        - path_action(VARD, DiscretePath(path.times, dn))) / (2 * h)
    assert np.allclose(g, fd, atol=2e-5 * max(1.0, np.abs(fd).max()))


@settings(max_examples=40, deadline=None)
@given(arrays(float, 12, elements=st.floats(-2, 2)), st.floats(0.1, 5))
def test_time_reversal_identity(nodes, T):
    # for a gradient model S(path) - S(reversed path) = phi(end) - phi(start), exactly in the discretization
    m = builtin_model("ou1d")
    t = np.linspace(0, T, 12)
    fwd = path_action(m, DiscretePath(t, nodes))
    rev = path_action(m, DiscretePath(t, nodes[::-1]))
    assert fwd - rev == pytest.approx((nodes[-1] ** 2 - nodes[0] ** 2) / 2, abs=1e-9 * max(1, abs(fwd)))


@pytest.mark.parametrize("T", [0.5, 1.0, 2.0])
def test_finite_time_rate(ou, T):
    res = minimize_action(ou, [0.0], [1.0], T, 256)
    assert res.converged and res.el_residual <= 1e-6
    assert res.action == pytest.approx(ou_finite_time_rate(OUParams(1, 1), 1.0, T, 0.0), rel=5e-3)


def test_minimizer_is_below_straight_line(lin2):
    res = minimize_action(lin2, [0, 0], [0.5, 0.5], 2.0, 128)
    assert res.action <= path_action(lin2, DiscretePath.linear([0, 0], [0.5, 0.5], 2.0, 128))
    assert res.path.nodes[0].tolist() == [0, 0] and res.path.nodes[-1].tolist() == [0.5, 0.5]
    assert np.all(node_lagrangian(lin2, res.path) >= -1e-6)


def test_nonconvergence_reports_best_path(ou):
    with pytest.raises(NoConvergence) as info:
        minimize_action(ou, [0.0], [1.0], 1.0, 64, maxiter=2, tol=1e-14)
    assert info.value.result is not None and not info.value.result.converged
    res = minimize_action(ou, [0.0], [1.0], 1.0, 64, maxiter=2, tol=1e-14, raise_on_failure=False)
    assert not res.converged and np.isfinite(res.action)


def test_argument_checks(ou, dwell):
    with pytest.raises(InvalidParam):
        minimize_action(ou, [0.0], [1.0], 1.0, 4)
    with pytest.raises(InvalidParam):
        minimize_action(ou, [0.0], [1.0], -1.0, 16)
    with pytest.raises(InvalidParam):
        check_attractor(ou, [0.5])
    with pytest.raises(InvalidParam):
        check_attractor(dwell, [0.0])  # unstable fixed point
    assert check_attractor(dwell, [1.0]).tolist() == [1.0]


def test_quasipotential_ou(ou):
    vals = quasipotential_field(ou, [0.0], [[0.0], [1.0], [-1.5]])
    assert vals[0] == 0.0
    assert vals[1:] == pytest.approx([0.5, 1.125], rel=1e-3)


def test_quasipotential_linear2d(lin2):
    value, path = quasipotential(lin2, [0, 0], [1.0, 0.0])
    assert value == pytest.approx(0.5, rel=2e-3)
    assert np.allclose(path.nodes[-1], [1, 0])
