import math

import numpy as np
import pytest

from lab.core import analytic
from lab.core.analytic import GridFunction, ModelSpec
from lab.core.errors import ConfigError, DomainViolation

SMALL_H = 0.01
SMALL_T_MAX = 15.0


@pytest.fixture
def coalescing() -> ModelSpec:
    return ModelSpec.coalescing()


@pytest.fixture
def voter() -> ModelSpec:
    return ModelSpec.voter()


def test_model_polynomials(coalescing, voter):
    assert coalescing.f(0.5) == pytest.approx(0.75)
    assert voter.f(1.0) == pytest.approx(1.0)
    assert voter.f(0.5) == pytest.approx(0.59375)
    assert coalescing.energy == pytest.approx(1 / 6)
    assert voter.energy == pytest.approx(1 / 16)
    for model in (coalescing, voter):
        assert model.slope(0.0) == pytest.approx(0.0, abs=1e-15)
        assert model.slope(1.0) == pytest.approx(0.0, abs=1e-15)


def test_tail_rates(coalescing, voter):
    assert coalescing.tail_rate == pytest.approx(1.0)
    assert voter.tail_rate == pytest.approx(0.5)
    assert ModelSpec.general(3).tail_rate == pytest.approx(1.0)


def test_model_validation():
    with pytest.raises(ConfigError):
        ModelSpec.from_name("potts")
    with pytest.raises(ConfigError):
        ModelSpec.general(1)
    with pytest.raises(ConfigError):
        ModelSpec("general", 2, np.polynomial.Polynomial([0.0, 2.0]))


def test_closed_form_values():
    assert analytic.closed_form_rho_inf(0.0) == pytest.approx(0.0, abs=1e-12)
    assert analytic.closed_form_rho_inf(1.0) == pytest.approx(0.509938, abs=1e-5)
    gap = 1.0 - analytic.closed_form_rho_inf(20.0)
    assert gap * math.exp(20.0) == pytest.approx(12 - 6 * math.sqrt(3), rel=1e-5)
    values = analytic.closed_form_rho_inf(np.array([0.5, 1.0, 2.0]))
    assert values.shape == (3,)
    assert np.all(np.diff(values) > 0)
    with pytest.raises(ConfigError):
        analytic.closed_form_rho_inf(-0.1)


def test_chi_of_zero_is_zero(coalescing):
    zero = GridFunction(SMALL_H, np.zeros(analytic.grid_size(SMALL_H, 5.0)), 0.0)
    assert np.all(analytic.chi_apply(coalescing, zero).values == 0.0)


def test_chi_vanishes_at_the_origin(voter):
    image = analytic.chi_apply(voter, analytic.maximal_element(voter, SMALL_H, 5.0))
    assert image.values[0] == 0.0
    assert image.tail_rate == analytic.MAXIMAL_TAIL_RATE


def test_first_iterate_is_one_application(coalescing):
    top = analytic.maximal_element(coalescing, SMALL_H, 5.0)
    first = analytic.chi_iterate(coalescing, 1, SMALL_H, 5.0)[0]
    assert np.array_equal(first.values, analytic.chi_apply(coalescing, top).values)


def test_iterates_decrease(coalescing):
    iterates = analytic.chi_iterate(coalescing, 10, SMALL_H, SMALL_T_MAX)
    for prev, nxt in zip(iterates, iterates[1:]):
        assert np.all(nxt.values <= prev.values + analytic.DOMAIN_SLACK)


def test_chi_is_monotone(voter):
    top = analytic.maximal_element(voter, SMALL_H, SMALL_T_MAX)
    lower = GridFunction(SMALL_H, 0.5 * top.values, top.tail_rate)
    assert np.all(analytic.chi_apply(voter, lower).values <= analytic.chi_apply(voter, top).values + 1e-12)


def test_iterates_approach_the_closed_form(coalescing):
    limit = analytic.chi_iterate(coalescing, 200, SMALL_H, SMALL_T_MAX)[-1]
    exact = analytic.closed_form_grid(SMALL_H, SMALL_T_MAX)
    assert analytic.sup_distance(limit, exact, upto=10.0) < 5e-3
    assert np.all(limit.values >= exact.values - 1e-4)


def test_rho_n_indexing(coalescing, voter):
    top = analytic.maximal_element(coalescing, SMALL_H, 5.0)
    assert top.tail_rate == 1.0
    assert np.array_equal(analytic.rho_n(voter, 0, SMALL_H, 5.0).values, top.values)
    assert np.array_equal(analytic.rho_n(coalescing, 1, SMALL_H, 5.0).values, top.values)
    second = analytic.rho_n(coalescing, 2, SMALL_H, 5.0)
    assert np.array_equal(second.values, analytic.chi_apply(coalescing, top).values)
    with pytest.raises(ConfigError):
        analytic.rho_n(coalescing, 0)
    bar = analytic.rho_bar_n(voter, 0, SMALL_H, 5.0)
    assert analytic.grid_value(bar, 1.0) == pytest.approx(math.exp(-1.0), abs=1e-4)


def test_grid_value_uses_the_tail(coalescing):
    top = analytic.maximal_element(coalescing, SMALL_H, 5.0)
    assert analytic.grid_value(top, 8.0) == pytest.approx(-math.expm1(-8.0), rel=1e-12)
    assert analytic.grid_value(top, np.array([0.0, 8.0])).shape == (2,)


def test_heteroclinic_matches_closed_form(coalescing):
    rho = analytic.solve_heteroclinic(coalescing, 1e-3, SMALL_T_MAX)
    slope = (rho.values[1] - rho.values[0]) / rho.step
    assert slope == pytest.approx(math.sqrt(2 * coalescing.energy), abs=1e-4)
    assert analytic.sup_distance(rho, analytic.closed_form_grid(1e-3, SMALL_T_MAX)) < 1e-6
    assert analytic.energy_drift(coalescing, rho) < 1e-8


def test_voter_heteroclinic_decay_rate(voter):
    rho = analytic.solve_heteroclinic(voter, SMALL_H, 25.0)
    assert analytic.log_decay_slope(rho, 10.0, 20.0) == pytest.approx(-0.5, abs=1e-2)
    assert np.all(np.diff(rho.values) >= 0)


def test_residuals(coalescing):
    exact = analytic.closed_form_grid(SMALL_H, SMALL_T_MAX)
    assert analytic.ode_residual(coalescing, exact) < 1e-3
    assert analytic.fixed_point_residual(coalescing, exact) < 1e-4
    size = analytic.grid_size(SMALL_H, 2.0)
    assert analytic.ode_residual(coalescing, GridFunction(SMALL_H, np.zeros(size), 0.0)) == 0.0
    assert analytic.ode_residual(coalescing, GridFunction(SMALL_H, np.ones(size), 0.0)) == 0.0


def test_domain_violations_report_their_index(coalescing):
    top = analytic.maximal_element(coalescing, SMALL_H, 2.0)
    dropping = top.values.copy()
    dropping[5] = dropping[4] - 0.01
    with pytest.raises(DomainViolation) as err:
        analytic.chi_apply(coalescing, GridFunction(SMALL_H, dropping, 1.0))
    assert err.value.index == 5

    too_high = top.values.copy()
    too_high[-1] += 0.1
    with pytest.raises(DomainViolation) as err:
        analytic.check_domain(GridFunction(SMALL_H, too_high, 1.0))
    assert err.value.index == len(too_high) - 1


def test_cumulative_simpson_is_exact_on_cubics():
    h = 0.1
    t = np.arange(12) * h
    y = 1 + 2 * t - 3 * t**2 + t**3
    exact = t + t**2 - t**3 + t**4 / 4
    approx = analytic.cumulative_simpson(y, h)
    assert approx[0] == 0.0
    assert np.allclose(approx[2:], exact[2:], atol=1e-13)
    assert approx[1] == pytest.approx(exact[1], abs=h**3)


def test_simpson_weights_need_even_intervals():
    assert analytic.simpson_weights(4).sum() == pytest.approx(4.0)
    with pytest.raises(ConfigError):
        analytic.simpson_weights(3)


def test_grid_size():
    assert analytic.grid_size(0.01, 15.0) == 1501
    with pytest.raises(ConfigError):
        analytic.grid_size(0.3, 1.0)


def test_grid_csv_keeps_metadata(tmp_path, voter):
    rho = analytic.chi_iterate(voter, 2, 0.05, 3.0)[-1]
    path = analytic.write_grid_csv(tmp_path / "voter.grid.csv", voter, rho)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0].startswith("# model=voter;d=3;h=0.05;")
    assert lines[0].endswith(";lambda=1.0")
    assert lines[1] == "T,value"
    model, back = analytic.read_grid_csv(path)
    assert (model.kind, model.branching) == ("voter", 3)
    assert back.step == rho.step and back.tail_rate == rho.tail_rate
    assert np.array_equal(back.values, rho.values)


def test_grid_csv_rejects_missing_metadata(tmp_path):
    path = tmp_path / "bare.csv"
    path.write_text("T,value\n0.0,0.0\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        analytic.read_grid_csv(path)


def test_fixed_point_residual_separates_fixed_points(coalescing):
    zero = GridFunction(SMALL_H, np.zeros(analytic.grid_size(SMALL_H, 5.0)), 0.0)
    assert analytic.fixed_point_residual(coalescing, zero) == 0.0
    top = analytic.maximal_element(coalescing, SMALL_H, SMALL_T_MAX)
    assert analytic.fixed_point_residual(coalescing, top) > 1e-2


def test_top_tail_matches_its_closed_form(voter):
    top = analytic.maximal_element(voter, SMALL_H, 5.0)
    for t in (6.0, 9.0):
        assert analytic.grid_value(top, t) == pytest.approx(-math.expm1(-t), rel=1e-12)


@pytest.mark.parametrize("kind", ["coalescing", "voter"])
def test_potential_slope_is_the_derivative(kind):
    model = ModelSpec.from_name(kind)
    delta = 1e-6
    for rho in (0.1, 0.3, 0.5, 0.7, 0.9):
        central = (analytic.potential(model, rho + delta) - analytic.potential(model, rho - delta)) / (2 * delta)
        assert analytic.potential_slope(model, rho) == pytest.approx(central, abs=1e-7)
    assert analytic.potential(model, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert analytic.potential(model, 1.0) == pytest.approx(model.energy, rel=1e-12)
    assert analytic.potential_slope(model, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert analytic.potential_slope(model, 1.0) == pytest.approx(0.0, abs=1e-15)


def test_potential_accepts_arrays(coalescing):
    rho = np.linspace(0.0, 1.0, 11)
    values = analytic.potential(coalescing, rho)
    assert values.shape == (11,)
    assert np.all(np.diff(values) >= -1e-15)
