from loguru import logger

from lab.core.coalescing import estimate_rho, lattice_density_decay
from lab.core.errors import ConfigError
from lab.core.protocol import ExperimentConfig, Table
from lab.core.voter import estimate_autocorr_curve

_RHO_COLUMNS = ("n", "T", "samples", "estimate", "ci_low", "ci_high", "seed")
_RHO_BAR_COLUMNS = ("n", "T", "samples", "rho_bar", "ci", "seed")


def simulate_coalescing(config: ExperimentConfig) -> dict:
    rows = []
    errors = []
    for T in config.T:
        est = estimate_rho(
            config.n, T, config.samples, config.seed, arity=config.d, workers=config.workers, guards=config.guards
        )
        rows.append((config.n, T, est.samples, est.value, est.ci_low, est.ci_high, config.seed))
        errors.append(est.standard_error)
    summary = {"curve": "rho_n(T)", "d": config.d, "standard_errors": errors}
    return {
        "status": "ok",
        "code": 0,
        "payload": {"tables": [Table("rho", _RHO_COLUMNS, rows)], "summary": summary},
    }


def simulate_voter(config: ExperimentConfig) -> dict:
    estimates = estimate_autocorr_curve(
        config.n, config.T, config.samples, config.seed, workers=config.workers, guards=config.guards
    )
    rows = [
        (config.n, T, est.samples, est.value, est.half_width, config.seed) for T, est in zip(config.T, estimates)
    ]
    summary = {"curve": "rho_bar_n(T)", "d": 3, "standard_errors": [est.standard_error for est in estimates]}
    return {
        "status": "ok",
        "code": 0,
        "payload": {"tables": [Table("rho_bar", _RHO_BAR_COLUMNS, rows)], "summary": summary},
    }


def simulate_lattice(config: ExperimentConfig) -> dict:
    horizon = config.horizon
    if horizon is not None:
        if not float(horizon).is_integer():
            raise ConfigError(f"lattice-demo runs whole sweeps; horizon must be an integer, got {horizon}")
        horizon = int(horizon)
    density = lattice_density_decay(config.side, config.dim, horizon, config.seed, guards=config.guards)
    rows = [(t, float(v)) for t, v in enumerate(density)]
    non_increasing = all(b <= a for a, b in zip(density, density[1:]))
    if not non_increasing:
        logger.warning(f"lattice density increased (side={config.side}, seed={config.seed})")
    summary = {"final_density": float(density[-1]), "non_increasing": non_increasing, "sites": config.side**config.dim}
    return {
        "status": "ok",
        "code": 0,
        "payload": {"tables": [Table("density", ("t", "density"), rows)], "summary": summary},
    }
