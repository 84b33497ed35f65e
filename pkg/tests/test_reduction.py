import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import bisect

from adiabat.errors import ConvergenceError, ModelDomainError
from adiabat.model import ExampleSystem, GenericSlowFast, f_envelope, xy_from_flowbox
from adiabat.reduction import (
    FlowBoxChart,
    build_flowbox,
    example_chart,
    isoenergetic_reduce,
    jacobian_det,
    slow_hamiltonian,
)

EXAMPLE = ExampleSystem()
GENERIC = EXAMPLE.as_generic()


def nonlinear_system():
    zero = lambda *a: 0.0 * sum(a)  # noqa: E731
    return GenericSlowFast(
        H0=lambda I, y, x: I + I**2 / 10 + 0.5 * y**2 + np.exp(-x),
        H1=lambda I, phi, y, x: np.cos(phi) * np.exp(-x) * (1 + 0.1 * I),
        dH0_dI=lambda I, y, x: 1 + I / 5 + 0 * (y + x),
        dH0_dy=lambda I, y, x: y + 0 * (I + x),
        dH0_dx=lambda I, y, x: -np.exp(-x) + 0 * (I + y),
        dH1_dI=lambda I, phi, y, x: 0.1 * np.cos(phi) * np.exp(-x),
        dH1_dphi=lambda I, phi, y, x: -np.sin(phi) * np.exp(-x) * (1 + 0.1 * I),
        dH1_dy=zero,
        dH1_dx=lambda I, phi, y, x: -np.cos(phi) * np.exp(-x) * (1 + 0.1 * I),
        box={"I": (-2.0, 4.0), "y": (-5.0, 5.0), "x": (-5.0, 30.0)},
    )


@pytest.fixture(scope="module")
def built_chart():
    return build_flowbox(GENERIC, 0.0, np.linspace(-11, 11, 45), np.linspace(0.8, 3.2, 25))


# ---------------------------------------------------------------- reduction


def test_linear_reduction_is_exact_in_one_step():
    phi, y, x, h0, eps = 0.7, 0.4, -0.3, 3.0, 0.1
    I, iters, res = isoenergetic_reduce(GENERIC, phi, y, x, h0, eps, full_output=True)
    eta = 0.5 * y * y + math.exp(-x)
    f = math.exp(-x)  # e^(-x) is the envelope along the chart
    assert I == pytest.approx((h0 - eta - eps * f * math.cos(phi)) / 1.0, abs=1e-13)
    assert iters <= 1
    assert abs(res) <= 1e-12


def test_zero_eps_reduction_ignores_angle():
    vals = [isoenergetic_reduce(nonlinear_system(), phi, 0.3, 0.2, 2.5, 0.0)
            for phi in np.linspace(0, 2 * math.pi, 17)]
    assert max(vals) - min(vals) <= 1e-12


def test_nonlinear_reduction_matches_bisection():
    s = nonlinear_system()
    phi, y, x, h0, eps = 1.1, -0.6, 0.5, 2.0, 0.05

    def H(I):
        return s.H0(I, y, x) + eps * s.H1(I, phi, y, x) - h0

    oracle = bisect(H, -2.0, 4.0, xtol=1e-15, maxiter=400)
    assert isoenergetic_reduce(s, phi, y, x, h0, eps) == pytest.approx(oracle, abs=1e-12)


@settings(max_examples=60)
@given(st.floats(0, 6.3), st.floats(-2, 2), st.floats(-1, 3), st.floats(1.0, 4.0), st.floats(0, 0.2))
def test_reduction_is_right_inverse(phi, y, x, h0, eps):
    s = nonlinear_system()
    try:
        I = isoenergetic_reduce(s, phi, y, x, h0, eps)
    except ConvergenceError:
        return  # level not attained in the action box
    assert abs(s.H0(I, y, x) + eps * s.H1(I, phi, y, x) - h0) <= 1e-12


def test_reduction_reports_unattainable_level():
    with pytest.raises(ConvergenceError, match="outside box"):
        isoenergetic_reduce(nonlinear_system(), 0.0, 0.0, 0.0, 100.0, 0.0)


def test_slow_hamiltonian_of_example():
    y, x = np.array([0.3, -1.0]), np.array([0.2, 1.5])
    np.testing.assert_allclose(slow_hamiltonian(GENERIC, y, x, 0.0), 0.5 * y**2 + np.exp(-x), rtol=1e-14)


# ---------------------------------------------------------------- jacobian


def test_closed_form_chart_is_canonical_at_point():
    assert jacobian_det(example_chart(), (0.7, 2.0)) == pytest.approx(1.0, abs=1e-7)


def test_identity_chart():
    chart = FlowBoxChart(lambda a, b: (a, b), None, (-5, 5), (-5, 5))
    assert jacobian_det(chart, (0.3, -1.2)) == pytest.approx(1.0, abs=1e-9)


def test_scaled_chart():
    base = example_chart()
    chart = FlowBoxChart(lambda a, b: (base.forward(a, b)[0], 2 * base.forward(a, b)[1]),
                         None, base.xi_bounds, base.eta_bounds)
    assert jacobian_det(chart, (0.7, 2.0)) == pytest.approx(2.0, abs=1e-7)


def test_closed_form_chart_grid():
    XI, ETA = np.meshgrid(np.linspace(-10, 10, 40), np.linspace(1, 3, 40))
    det = jacobian_det(example_chart(), (XI, ETA))
    assert np.max(np.abs(det - 1)) <= 1e-6


@pytest.mark.parametrize("omega,h0", [(2.0, 0.5), (0.5, -1.0)])
def test_scaled_reduced_chart_is_canonical(omega, h0):
    chart = example_chart(omega=omega, h0=h0)
    assert jacobian_det(chart, (1.5, 3.0)) == pytest.approx(1.0, abs=1e-7)


def test_jacobian_refuses_edge_points():
    with pytest.raises(ModelDomainError, match="edge"):
        jacobian_det(example_chart(xi_bounds=(-1, 1)), (1.0, 2.0))


# ---------------------------------------------------------------- built chart


def test_built_chart_matches_closed_form(built_chart):
    XI, ETA = np.meshgrid(np.linspace(-10, 10, 40), np.linspace(1, 3, 40))
    x, y = built_chart.forward(XI, ETA)
    xc, yc = xy_from_flowbox(XI, ETA)
    assert np.max(np.abs(x - xc)) <= 1e-8
    assert np.max(np.abs(y - yc)) <= 1e-8


def test_built_chart_rows_are_level_sets(built_chart):
    F0 = slow_hamiltonian(GENERIC, built_chart.grid_y, built_chart.grid_x, 0.0)
    rows = F0 - built_chart.grid_eta[:, None]
    assert np.max(np.abs(rows)) <= 1e-10


def test_built_chart_is_canonical(built_chart):
    rng = np.random.default_rng(7)
    xi = rng.uniform(-10, 10, 50)
    eta = rng.uniform(1, 3, 50)
    det = jacobian_det(built_chart, (xi, eta))
    assert np.max(np.abs(det - 1)) <= 1e-6


def test_built_chart_inverse_round_trips(built_chart):
    for xi, eta in [(0.3, 1.7), (-6.2, 2.9), (9.0, 1.1)]:
        x, y = built_chart.forward(xi, eta)
        xi2, eta2 = built_chart.inverse(x, y)
        assert xi2 == pytest.approx(xi, abs=1e-10)
        assert eta2 == pytest.approx(eta, abs=1e-10)


def test_built_chart_for_nonlinear_frequency():
    """Level sets of F0 for H0 = I + I^2/10 + slow energy stay level sets."""
    s = nonlinear_system()
    chart = build_flowbox(s, 2.0, np.linspace(-3, 3, 13), np.linspace(-1.5, -0.5, 6))
    F0 = slow_hamiltonian(s, chart.grid_y, chart.grid_x, 2.0)
    assert np.max(np.abs(F0 - chart.grid_eta[:, None])) <= 1e-10
    det = jacobian_det(chart, (np.array([0.5, -1.0]), np.array([-1.0, -0.8])))
    np.testing.assert_allclose(det, 1.0, atol=1e-6)


def test_chart_csv(tmp_path, built_chart):
    path = tmp_path / "chart.csv"
    built_chart.to_csv(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["xi", "eta", "x", "y"]
    assert len(rows) == 1 + 45 * 25


def test_envelope_tail_is_the_perturbation_decay():
    """Along the chart the perturbation e^(-x) equals the envelope f and decays exponentially."""
    xi = np.linspace(-15, 15, 31)
    x, _ = xy_from_flowbox(xi, 2.0)
    np.testing.assert_allclose(np.exp(-x), f_envelope(xi, 2.0), rtol=1e-12)
