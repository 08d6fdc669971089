from dataclasses import dataclass, field, asdict, fields
from typing import Any, Literal

import lab.core.config as cfg

# Command families and the actions each accepts.
SIMULATE = "simulate"
ISING = "ising"
ANALYTIC = "analytic"
VERIFY = "verify"

COMMANDS: dict[str, tuple[str, ...]] = {
    SIMULATE: ("coalescing", "voter", "lattice-demo"),
    ISING: ("coupled", "infection", "rate-sum"),
    ANALYTIC: ("iterate", "ode", "closed-form", "residual"),
    VERIFY: ("fast", "full"),
}

# Commands that draw random numbers and therefore need a seed.
STOCHASTIC = {
    (SIMULATE, "coalescing"),
    (SIMULATE, "voter"),
    (SIMULATE, "lattice-demo"),
    (ISING, "coupled"),
    (ISING, "infection"),
}


@dataclass(frozen=True)
class GuardSettings:
    """
    Cost guards applied before a run starts.
    :param max_coalescing_depth: largest layer depth n for coalescing estimates
    :param max_voter_depth: largest layer depth n for voter estimates
    :param max_node_visits: recursive vertex visits allowed per sample
    :param max_lattice_sites: largest torus size L^dim for the lattice demo
    :param max_ising_depth: deepest window for the coupled voter/Ising chain
    :param max_infection_depth: deepest truncation for the infection process
    :param max_horizon: longest simulated time horizon
    """
    max_coalescing_depth: int = cfg.MAX_COALESCING_DEPTH
    max_voter_depth: int = cfg.MAX_VOTER_DEPTH
    max_node_visits: int = cfg.MAX_NODE_VISITS
    max_lattice_sites: int = cfg.MAX_LATTICE_SITES
    max_ising_depth: int = cfg.MAX_ISING_DEPTH
    max_infection_depth: int = cfg.MAX_INFECTION_DEPTH
    max_horizon: float = cfg.MAX_HORIZON


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Fully resolved parameters of one CLI run.
    :param command: command family (simulate, ising, analytic, verify)
    :param action: sub-command, or the suite name for verify
    :param n: layer depth of the estimated vertex
    :param d: branching number for the coalescing / general models
    :param T: durations at which curves are evaluated
    :param beta: inverse temperature of the Ising model
    :param schedule: coupling schedule id
    :param depth: window depth K for the Ising simulations
    :param horizon: simulated time horizon
    :param tol: tolerance of the infection rate series
    :param side: torus side length L for the lattice demo
    :param dim: torus dimension for the lattice demo
    :param model: analytic model (coalescing, voter, general)
    :param iterations: number of integral-transform iterations
    :param samples: Monte Carlo sample count
    :param seed: master seed; mandatory for stochastic commands
    :param workers: worker processes for sample maps
    :param h: grid step of the analytic module
    :param t_max: grid horizon of the analytic module
    :param out: report directory
    :param fmt: report format
    :param guards: cost guards in force
    """
    command: str
    action: str
    n: int | None = None
    d: int = 2
    T: tuple[float, ...] = (1.0,)
    beta: float | None = None
    schedule: str = "ksq"
    depth: int | None = None
    horizon: float | None = None
    tol: float = 1e-6
    side: int = 32
    dim: int = 2
    model: str = "coalescing"
    iterations: int | None = None
    samples: int | None = None
    seed: int | None = None
    workers: int = cfg.DEFAULT_WORKERS
    h: float = cfg.GRID_STEP
    t_max: float = cfg.GRID_T_MAX
    out: str = "reports"
    fmt: Literal["csv", "json"] = "csv"
    guards: GuardSettings = field(default_factory=GuardSettings)


def config_to_dict(config: ExperimentConfig) -> dict[str, Any]:
    data = asdict(config)
    data["T"] = list(config.T)
    return data


def config_from_dict(data: dict[str, Any]) -> ExperimentConfig:
    """Rebuild a config from its report form; unknown keys are ignored."""
    known = {f.name for f in fields(ExperimentConfig)}
    values = {k: v for k, v in data.items() if k in known}
    if "T" in values:
        values["T"] = tuple(float(x) for x in values["T"])
    if isinstance(values.get("guards"), dict):
        values["guards"] = GuardSettings(**values["guards"])
    return ExperimentConfig(**values)


@dataclass(frozen=True)
class Estimate:
    """
    Monte Carlo mean with a 95% confidence interval.
    :param value: point estimate
    :param ci_low: lower end of the interval
    :param ci_high: upper end of the interval
    :param samples: number of samples behind the estimate
    :param standard_error: estimated standard error of `value`
    """
    value: float
    ci_low: float
    ci_high: float
    samples: int
    standard_error: float

    @property
    def half_width(self) -> float:
        return (self.ci_high - self.ci_low) / 2

    def within(self, target: float, z: float = 3.0) -> bool:
        """True if `target` lies within z standard errors of the estimate."""
        return abs(self.value - target) <= z * self.standard_error + 1e-12


@dataclass(frozen=True)
class CheckResult:
    """
    Outcome of one acceptance check.
    :param name: check identifier
    :param passed: whether the check met its tolerance
    :param measured: measured value(s)
    :param tolerance: tolerance or threshold the measurement was held to
    :param detail: optional human-readable note
    """
    name: str
    passed: bool
    measured: Any
    tolerance: Any
    detail: str = ""


def check_to_dict(check: CheckResult) -> dict[str, Any]:
    return asdict(check)


@dataclass(frozen=True)
class Table:
    """
    One rectangular result table; written as `<stem>.<name>.csv`.
    :param name: table identifier
    :param columns: column names, in output order
    :param rows: one sequence of cell values per row
    """
    name: str
    columns: tuple[str, ...]
    rows: list[tuple[Any, ...]]


def table_to_dict(table: Table) -> dict[str, Any]:
    return {"columns": list(table.columns), "rows": [list(r) for r in table.rows]}
