import math

from lab.core import analytic
from lab.core.errors import ConfigError
from lab.core.protocol import ExperimentConfig, Table


def _model(config: ExperimentConfig) -> analytic.ModelSpec:
    return analytic.ModelSpec.from_name(config.model, config.d)


def analytic_iterate(config: ExperimentConfig) -> dict:
    model = _model(config)
    iterates = analytic.chi_iterate(model, config.iterations, config.h, config.t_max)
    rows = [(k, T, analytic.grid_value(rho, T)) for k, rho in enumerate(iterates, start=1) for T in config.T]
    last_change = analytic.sup_distance(iterates[-1], iterates[-2]) if len(iterates) > 1 else None
    summary = {
        "model": model.kind,
        "d": model.branching,
        "iterations": config.iterations,
        "last_sup_change": last_change,
        "fixed_point_residual": analytic.fixed_point_residual(model, iterates[-1]),
    }
    return {
        "status": "ok",
        "code": 0,
        "payload": {
            "tables": [Table("iterates", ("iteration", "T", "value"), rows)],
            "grids": [("iterate", model, iterates[-1])],
            "summary": summary,
        },
    }


def analytic_ode(config: ExperimentConfig) -> dict:
    model = _model(config)
    solution = analytic.solve_heteroclinic(model, config.h, config.t_max)
    rows = [(T, analytic.grid_value(solution, T)) for T in config.T]
    summary = {
        "model": model.kind,
        "d": model.branching,
        "initial_slope": math.sqrt(2 * model.energy),
        "energy_drift": analytic.energy_drift(model, solution),
        "ode_residual": analytic.ode_residual(model, solution),
        "tail_rate": model.tail_rate,
    }
    return {
        "status": "ok",
        "code": 0,
        "payload": {
            "tables": [Table("heteroclinic", ("T", "value"), rows)],
            "grids": [("heteroclinic", model, solution)],
            "summary": summary,
        },
    }


def analytic_closed_form(config: ExperimentConfig) -> dict:
    if config.model != "coalescing" or config.d != 2:
        raise ConfigError("the closed form is known for the coalescing model with d = 2 only")
    rows = [(T, analytic.closed_form_rho_inf(T)) for T in config.T]
    return {
        "status": "ok",
        "code": 0,
        "payload": {"tables": [Table("closed_form", ("T", "value"), rows)], "summary": {"beta": analytic.CLOSED_FORM_BETA}},
    }


def analytic_residual(config: ExperimentConfig) -> dict:
    """Residual diagnostics of the best available candidate for rho_inf."""
    model = _model(config)
    rows = []
    if model.kind == "coalescing" and model.branching == 2:
        closed = analytic.closed_form_grid(config.h, config.t_max)
        rows.append(("closed_form", "fixed_point", analytic.fixed_point_residual(model, closed)))
        rows.append(("closed_form", "ode", analytic.ode_residual(model, closed)))
    solution = analytic.solve_heteroclinic(model, config.h, config.t_max)
    rows.append(("heteroclinic", "fixed_point", analytic.fixed_point_residual(model, solution)))
    rows.append(("heteroclinic", "ode", analytic.ode_residual(model, solution)))
    rows.append(("heteroclinic", "energy", analytic.energy_drift(model, solution)))
    summary = {"model": model.kind, "d": model.branching, "worst_fixed_point": max(r[2] for r in rows if r[1] == "fixed_point")}
    return {
        "status": "ok",
        "code": 0,
        "payload": {"tables": [Table("residuals", ("candidate", "kind", "value"), rows)], "summary": summary},
    }
