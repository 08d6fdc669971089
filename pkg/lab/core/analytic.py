"""
Deterministic numerics for the flow / autocorrelation curves.

Both models share one integral transform

    chi(rho)(T) = int_0^inf e^{-s} ds int_0^T e^{t-T} f(rho(t+s)) dt,

whose maximal fixed point rho_inf also solves rho'' = rho - f(rho) with rho(0) = 0 and rho -> 1.
The models differ only in the polynomial f. Functions of T live on a uniform grid with an
exponential tail beyond the last node.
"""
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from loguru import logger
from numpy.lib.stride_tricks import sliding_window_view
from numpy.polynomial import Polynomial

import lab.core.config as cfg
from lab.core.errors import ConfigError, DomainViolation, NumericalFailure
from lab.util.report import format_value, render_csv, write_text
from lab.util.validator import require_non_negative, require_positive
from shared.logger import add_error_sink, ensure_global_logger

ensure_global_logger()
add_error_sink("analytic.py")

MODEL_KINDS = ("coalescing", "voter", "general")

DOMAIN_SLACK = 1e-9
# Inner integral over s is cut where e^{-s} drops below this.
TAIL_CUTOFF = 1e-10
# Below this distance from 1 the heteroclinic solution follows its linearisation.
LINEAR_SWITCH = 1e-6
RADICAND_SLACK = 1e-12
MAXIMAL_TAIL_RATE = 1.0

# Constant of the closed-form coalescing solution.
CLOSED_FORM_BETA = math.sqrt(3) - 2

_ONE_MINUS_X = Polynomial([1.0, -1.0])


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """
    :param kind: coalescing, voter or general
    :param branching: number of children per vertex
    :param f: polynomial with f(0) = 0, f(1) = 1, increasing on [0, 1]
    """
    kind: str
    branching: int
    f: Polynomial

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model '{self.kind}' (known: {', '.join(MODEL_KINDS)})")
        if abs(self.f(0.0)) > 1e-12 or abs(self.f(1.0) - 1.0) > 1e-12:
            raise ConfigError(f"model {self.kind}: f must fix 0 and 1")
        if np.any(self.f.deriv()(np.linspace(0.0, 1.0, 257)) < -1e-12):
            raise ConfigError(f"model {self.kind}: f is not increasing on [0, 1]")

    @classmethod
    def coalescing(cls, d: int = 2) -> "ModelSpec":
        return cls("coalescing", d, 1 - _ONE_MINUS_X**d)

    @classmethod
    def voter(cls) -> "ModelSpec":
        # 2 M(rho / 2), M the majority of three independent +-1 votes
        return cls("voter", 3, Polynomial([0.0, 1.5, -0.75, 0.25]))

    @classmethod
    def general(cls, d: int) -> "ModelSpec":
        if d < 2:
            raise ConfigError(f"branching must be >= 2, got {d}")
        return cls("general", d, 1 - _ONE_MINUS_X**d)

    @classmethod
    def from_name(cls, kind: str, d: int = 2) -> "ModelSpec":
        if kind == "voter":
            return cls.voter()
        if kind == "coalescing":
            return cls.coalescing(d)
        if kind == "general":
            return cls.general(d)
        raise ConfigError(f"unknown model '{kind}' (known: {', '.join(MODEL_KINDS)})")

    @property
    def slope(self) -> Polynomial:
        """V'(rho) = f(rho) - rho."""
        return self.f - Polynomial([0.0, 1.0])

    @property
    def potential(self) -> Polynomial:
        return self.slope.integ()

    @property
    def energy(self) -> float:
        return float(self.potential(1.0))

    @property
    def tail_rate(self) -> float:
        """Exponential rate at which 1 - rho decays near the equilibrium rho = 1."""
        return math.sqrt(1.0 - float(self.f.deriv()(1.0)))

    def well(self) -> Polynomial:
        """W(u) = V(1) - V(1 - u); its constant and linear terms vanish."""
        coef = (self.energy - self.potential(_ONE_MINUS_X)).coef.copy()
        coef[: min(2, len(coef))] = 0.0
        return Polynomial(coef)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """
    Values of a function of T at T = 0, h, ..., T_max, continued beyond T_max by
    1 - (1 - v_N) e^{-lambda (T - T_max)}. A tail rate of 0 continues the last value.
    """
    step: float
    values: np.ndarray
    tail_rate: float

    @property
    def size(self) -> int:
        return len(self.values)

    @property
    def t_max(self) -> float:
        return self.step * (self.size - 1)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.size) * self.step

    def extended(self, extra: int) -> np.ndarray:
        """Grid values followed by `extra` tail values at the next grid nodes."""
        if extra <= 0:
            return self.values.copy()
        gap = 1.0 - self.values[-1]
        tail = 1.0 - gap * np.exp(-self.tail_rate * self.step * np.arange(1, extra + 1))
        return np.concatenate([self.values, tail])

    def complement(self) -> "GridFunction":
        return GridFunction(self.step, 1.0 - self.values, self.tail_rate)


def grid_size(h: float, t_max: float) -> int:
    require_positive("h", h)
    require_non_negative("t_max", t_max)
    steps = round(t_max / h)
    if abs(steps * h - t_max) > 1e-9 * max(1.0, t_max):
        raise ConfigError(f"t_max={t_max} is not a multiple of h={h}")
    return steps + 1


def maximal_element(model: ModelSpec, h: float = cfg.GRID_STEP, t_max: float = cfg.GRID_T_MAX) -> GridFunction:
    """
    The top of the domain of chi, T -> 1 - e^{-T}. It is the same for every model; `model` keeps
    the signature in line with the other grid constructors. Its gap closes at rate 1, and chi
    carries that tail over to every iterate.
    """
    n = grid_size(h, t_max)
    return GridFunction(h, -np.expm1(-np.arange(n) * h), MAXIMAL_TAIL_RATE)


def grid_value(rho: GridFunction, T):
    """Evaluate a grid function at arbitrary T >= 0: linear inside the grid, tail model beyond."""
    t = np.asarray(T, dtype=float)
    inside = np.interp(t, rho.times, rho.values)
    beyond = 1.0 - (1.0 - rho.values[-1]) * np.exp(-rho.tail_rate * np.clip(t - rho.t_max, 0.0, None))
    out = np.where(t <= rho.t_max, inside, beyond)
    return float(out) if out.ndim == 0 else out


def check_domain(rho: GridFunction) -> None:
    """Raise DomainViolation unless rho is non-decreasing and below 1 - e^{-T}."""
    v = rho.values
    if v.size and (v[0] < -DOMAIN_SLACK):
        raise DomainViolation("negative value", 0)
    drops = np.flatnonzero(np.diff(v) < -DOMAIN_SLACK)
    if drops.size:
        raise DomainViolation("input decreases", int(drops[0]) + 1)
    above = np.flatnonzero(v > -np.expm1(-rho.times) + DOMAIN_SLACK)
    if above.size:
        raise DomainViolation("input exceeds 1 - e^{-T}", int(above[0]))


def simpson_weights(intervals: int) -> np.ndarray:
    """Composite Simpson weights (without the factor h) for an even number of intervals."""
    if intervals < 2 or intervals % 2:
        raise ConfigError(f"Simpson rule needs an even number of intervals, got {intervals}")
    w = np.ones(intervals + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / 3.0


def cumulative_simpson(y: np.ndarray, h: float) -> np.ndarray:
    """
    Integral of y from the first node to every node. Even nodes use composite Simpson, odd nodes
    Simpson followed by the 3/8 rule on the last three intervals, node 1 the trapezoid rule. All
    weights are positive.
    """
    n = len(y)
    out = np.zeros(n)
    if n < 2:
        return out
    out[1] = h * (y[0] + y[1]) / 2
    pairs = h / 3 * (y[0:-2:2] + 4 * y[1:-1:2] + y[2::2])
    out[2::2] = np.cumsum(pairs)
    if n > 3:
        odd = np.arange(3, n, 2)
        three_eighths = 3 * h / 8 * (y[odd - 3] + 3 * y[odd - 2] + 3 * y[odd - 1] + y[odd])
        out[odd] = out[odd - 3] + three_eighths
    return out


def inner_average(model: ModelSpec, rho: GridFunction) -> np.ndarray:
    """g(t) = int_0^inf e^{-s} f(rho(t+s)) ds at every grid node."""
    h = rho.step
    span = math.ceil(-math.log(TAIL_CUTOFF) / h)
    span += span % 2
    fvals = model.f(rho.extended(span))
    weights = simpson_weights(span) * h * np.exp(-np.arange(span + 1) * h)
    windows = sliding_window_view(fvals, span + 1)
    return windows @ weights + math.exp(-span * h) * fvals[span:]


def chi_apply(model: ModelSpec, rho: GridFunction, *, check: bool = True) -> GridFunction:
    if check:
        check_domain(rho)
    times = rho.times
    g = inner_average(model, rho)
    values = np.exp(-times) * cumulative_simpson(np.exp(times) * g, rho.step)
    return GridFunction(rho.step, values, rho.tail_rate)


def chi_iterate(
    model: ModelSpec,
    iterations: int,
    h: float = cfg.GRID_STEP,
    t_max: float = cfg.GRID_T_MAX,
    *,
    start: GridFunction | None = None,
) -> list[GridFunction]:
    """
    chi^1(start), ..., chi^iterations(start); start defaults to the maximal element 1 - e^{-T}.
    Each iterate must lie below its predecessor.
    """
    require_positive("iterations", iterations)
    current = start if start is not None else maximal_element(model, h, t_max)
    out: list[GridFunction] = []
    for k in range(1, iterations + 1):
        nxt = chi_apply(model, current)
        rise = nxt.values - current.values
        worst = int(np.argmax(rise))
        if rise[worst] > DOMAIN_SLACK:
            raise NumericalFailure(
                f"chi iterate {k} rose above its predecessor by {rise[worst]:.3g} at T={worst * h:.4g}"
            )
        logger.debug(f"chi iterate {k} ({model.kind}): sup change {float(-rise.min()):.3e}")
        out.append(nxt)
        current = nxt
    logger.info(f"{iterations} chi iterates for {model.kind} d={model.branching} on h={h}, T_max={t_max}")
    return out


def rho_n(model: ModelSpec, n: int, h: float = cfg.GRID_STEP, t_max: float = cfg.GRID_T_MAX) -> GridFunction:
    """
    Law of layer depth n in each model's own indexing: for coalescing (and general d)
    rho_1 = 1 - e^{-T} and rho_n = chi^{n-1}(rho_1); for the voter model rho_0 = 1 - e^{-T}
    and rho_n = chi^n(rho_0).
    """
    first = 0 if model.kind == "voter" else 1
    if n < first:
        raise ConfigError(f"n must be >= {first} for the {model.kind} model, got {n}")
    start = maximal_element(model, h, t_max)
    if n == first:
        return start
    return chi_iterate(model, n - first, h, t_max, start=start)[-1]


def rho_bar_n(model: ModelSpec, n: int, h: float = cfg.GRID_STEP, t_max: float = cfg.GRID_T_MAX) -> GridFunction:
    return rho_n(model, n, h, t_max).complement()


def closed_form_rho_inf(T):
    """rho_inf(T) = 1 + 6 b e^{-T} / (b e^{-T} - 1)^2 with b = sqrt(3) - 2 (coalescing, d = 2)."""
    t = np.asarray(T, dtype=float)
    if np.any(t < 0):
        raise ConfigError("T must be non-negative")
    x = CLOSED_FORM_BETA * np.exp(-t)
    out = 1.0 + 6.0 * x / (x - 1.0) ** 2
    return float(out) if out.ndim == 0 else out


def closed_form_grid(h: float = cfg.GRID_STEP, t_max: float = cfg.GRID_T_MAX) -> GridFunction:
    n = grid_size(h, t_max)
    return GridFunction(h, closed_form_rho_inf(np.arange(n) * h), 1.0)


def potential(model: ModelSpec, rho):
    return model.potential(rho)


def potential_slope(model: ModelSpec, rho):
    return model.slope(rho)


def solve_heteroclinic(model: ModelSpec, h: float = cfg.GRID_STEP, t_max: float = cfg.GRID_T_MAX) -> GridFunction:
    """
    Solution of rho'' = rho - f(rho) from 0 to 1 at energy V(1), integrated as u' = -sqrt(2 W(u))
    for u = 1 - rho with classical RK4, and as u' = -lambda u once u < LINEAR_SWITCH.
    """
    n = grid_size(h, t_max)
    well = model.well()
    lam = model.tail_rate
    if model.energy <= 0:
        raise NumericalFailure(f"model {model.kind} has no positive energy level V(1)")

    def speed(u: float) -> float:
        radicand = 2.0 * float(well(u))
        if radicand < -RADICAND_SLACK:
            raise NumericalFailure(f"negative radicand {radicand:.3g} at 1 - rho = {u:.6g}")
        return -math.sqrt(max(radicand, 0.0))

    u = np.empty(n)
    u[0] = 1.0
    switch = None
    for i in range(1, n):
        prev = u[i - 1]
        if switch is None and prev < LINEAR_SWITCH:
            switch = i - 1
        if switch is not None:
            u[i] = u[switch] * math.exp(-lam * h * (i - switch))
            continue
        k1 = speed(prev)
        k2 = speed(prev + h / 2 * k1)
        k3 = speed(prev + h / 2 * k2)
        k4 = speed(prev + h * k3)
        u[i] = prev + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    if switch is not None:
        logger.debug(f"heteroclinic solution linearised from T={switch * h:.4g}")
    return GridFunction(h, 1.0 - u, lam)


def energy_drift(model: ModelSpec, rho: GridFunction) -> float:
    """Sup of |rho'^2 / 2 + V(rho) - V(1)| over nodes with a five-point derivative stencil."""
    v, h = rho.values, rho.step
    if len(v) < 5:
        return 0.0
    deriv = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
    energy = deriv**2 / 2 + model.potential(v[2:-2]) - model.energy
    return float(np.abs(energy).max())


def ode_residual(model: ModelSpec, rho: GridFunction) -> float:
    v, h = rho.values, rho.step
    if len(v) < 3:
        return 0.0
    second = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
    inner = v[1:-1]
    return float(np.abs(second - (inner - model.f(inner))).max())


def fixed_point_residual(model: ModelSpec, rho: GridFunction) -> float:
    return float(np.abs(chi_apply(model, rho).values - rho.values).max())


def sup_distance(a: GridFunction, b: GridFunction, upto: float | None = None) -> float:
    """Sup-norm distance on the common grid, optionally restricted to T <= upto."""
    if abs(a.step - b.step) > 1e-15:
        raise ConfigError(f"grid steps differ: {a.step} vs {b.step}")
    n = min(a.size, b.size)
    if upto is not None:
        n = min(n, int(round(upto / a.step)) + 1)
    return float(np.abs(a.values[:n] - b.values[:n]).max())


def log_decay_slope(rho: GridFunction, lo: float, hi: float) -> float:
    """Least-squares slope of log(1 - rho(T)) over lo <= T <= hi."""
    t = rho.times
    mask = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    gap = 1.0 - rho.values[mask]
    if mask.sum() < 2 or np.any(gap <= 0):
        raise NumericalFailure(f"cannot fit a decay slope on [{lo}, {hi}]")
    return float(np.polyfit(t[mask], np.log(gap), 1)[0])


def _meta_line(model: ModelSpec, rho: GridFunction) -> str:
    parts = {
        "model": model.kind,
        "d": model.branching,
        "h": rho.step,
        "t_max": rho.t_max,
        "lambda": rho.tail_rate,
    }
    return "# " + ";".join(f"{k}={format_value(v)}" for k, v in parts.items()) + "\n"


def render_grid_csv(model: ModelSpec, rho: GridFunction) -> str:
    rows = [(round(float(t), 12), float(v)) for t, v in zip(rho.times, rho.values)]
    return _meta_line(model, rho) + render_csv(("T", "value"), rows)


def write_grid_csv(path: Path, model: ModelSpec, rho: GridFunction) -> Path:
    return write_text(Path(path), render_grid_csv(model, rho))


def read_grid_csv(path: Path) -> tuple[ModelSpec, GridFunction]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ConfigError(f"{path}: missing grid metadata line")
    meta = dict(item.split("=", 1) for item in lines[0][1:].strip().split(";"))
    if lines[1:2] != ["T,value"]:
        raise ConfigError(f"{path}: unexpected header {lines[1:2]}")
    values = np.array([float(line.split(",")[1]) for line in lines[2:] if line])
    model = ModelSpec.from_name(meta["model"], int(meta["d"]))
    return model, GridFunction(float(meta["h"]), values, float(meta["lambda"]))
