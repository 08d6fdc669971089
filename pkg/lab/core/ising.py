"""
Glauber dynamics with layer-dependent couplings on the ternary tree, coupled to the voter process.

Layers are numbered as in the tree: the window root x_0 sits in layer 0 and its descendants in
negative layers. The edge from a vertex of layer k to its parent carries coupling J_k, so a
vertex of layer k sees J_k towards its parent and J_{k-1} towards each child.
"""
import heapq
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from loguru import logger
from scipy.special import expit

from lab.core.clocks import ClockStream, derive_seed
from lab.core.errors import ConfigError, DivergenceError, GuardError, ScheduleError
from lab.core.protocol import GuardSettings
from lab.core.tree import TreeWindow
from lab.core.voter import OpinionQuery, majority3, opinion
from lab.util.validator import require_non_negative, require_positive, require_seed, require_within
from shared.logger import add_error_sink, ensure_global_logger

ensure_global_logger()
add_error_sink("ising.py")

_COUPLED_STREAM = 0x15E6
_INFECTION_STREAM = 0x1F3C


def _square(k: int) -> float:
    return float(k * k)


def _cube(k: int) -> float:
    return float(abs(k) ** 3)


def _triangular(k: int) -> float:
    j = abs(k)
    return j * (j + 1) / 2


@dataclass(frozen=True)
class CouplingSchedule:
    """
    Couplings J_k for k <= 0; J_k = 0 for k >= 1.
    :param name: schedule id used in reports
    :param rule: k -> J_k, evaluated only for k <= 0
    :param growth_horizon: number of gaps checked against J_{-j-1} - J_{-j} >= j
    """
    name: str
    rule: Callable[[int], float]
    growth_horizon: int = 64

    def __post_init__(self):
        self.validate()

    def coupling(self, k: int) -> float:
        return 0.0 if k >= 1 else float(self.rule(k))

    def gap(self, k: int) -> float:
        """J_{k-1} - J_k."""
        return self.coupling(k - 1) - self.coupling(k)

    def validate(self) -> None:
        for j in range(self.growth_horizon):
            if self.coupling(-j) < 0:
                raise ScheduleError(f"schedule {self.name}: negative coupling J_{-j}")
            delta = self.gap(-j)
            if delta < 0:
                raise ScheduleError(f"schedule {self.name}: J_{-j - 1} < J_{-j}")
            if delta < j:
                raise ScheduleError(f"schedule {self.name}: gap J_{-j - 1} - J_{-j} = {delta} < {j}")


SCHEDULES: dict[str, Callable[[int], float]] = {
    "ksq": _square,
    "kcube": _cube,
    "triangular": _triangular,
}


def schedule_by_id(name: str) -> CouplingSchedule:
    rule = SCHEDULES.get(name)
    if rule is None:
        raise ConfigError(f"unknown schedule '{name}' (known: {', '.join(sorted(SCHEDULES))})")
    return CouplingSchedule(name, rule)


def glauber_plus_prob(
    layer: int,
    parent_spin: int | None,
    child_spins: list[int] | tuple[int, ...],
    beta: float,
    schedule: CouplingSchedule,
) -> float:
    """
    Heat-bath probability that a vertex of `layer` is set to +1. A missing parent contributes no
    field; so do children outside the window.
    """
    field_ = schedule.coupling(layer) * (parent_spin or 0) + schedule.coupling(layer - 1) * sum(child_spins)
    return float(expit(2 * beta * field_))


def disagreement_bound(layer: int, beta: float, schedule: CouplingSchedule) -> float:
    """
    Upper bound on the chance that a Glauber update at `layer` disagrees with the majority of
    children that both chains agree on.
    """
    delta = schedule.gap(layer)
    if delta < 0:
        raise ScheduleError(f"schedule {schedule.name} decreases at layer {layer}")
    return float(expit(-2 * beta * delta))


@dataclass
class CoupledRun:
    """
    Result of one coupled voter/Glauber trajectory.
    :param depth: window depth K; layers 0..-K are simulated, layer -K resamples by coin
    :param times: sample times of the disagreement count
    :param disagreements: |D_t| at each sample time
    :param opportunities: per layer, updates at which both chains agreed on all children
    :param creations: per layer, opportunities after which the chains disagreed at the vertex
    :param creation_log: (time, path, layer) of every creation
    :param boundary_creations: disagreements created by base-layer resampling
    """
    depth: int
    beta: float
    schedule: str
    times: list[float] = field(default_factory=list)
    disagreements: list[int] = field(default_factory=list)
    opportunities: dict[int, int] = field(default_factory=dict)
    creations: dict[int, int] = field(default_factory=dict)
    creation_log: list[tuple[float, tuple[int, ...], int]] = field(default_factory=list)
    boundary_creations: int = 0
    final_voter: np.ndarray | None = None
    final_glauber: np.ndarray | None = None


def coupled_simulate(
    depth: int,
    beta: float,
    schedule: CouplingSchedule,
    horizon: float,
    seed: int,
    *,
    guards: GuardSettings = GuardSettings(),
) -> CoupledRun:
    """
    Run the voter chain B and the Glauber chain F on a shared set of clocks over [0, horizon).
    Both start from the same exact voter sample at time 0. Each ring's uniform U drives F
    (+1 iff U < P(+)); B takes the children's majority, or the ring's coin on the base layer.
    """
    require_positive("depth", depth)
    require_positive("beta", beta)
    require_non_negative("horizon", horizon)
    require_seed(seed)
    require_within("depth", depth, guards.max_ising_depth)
    require_within("horizon", horizon, guards.max_horizon)

    window = TreeWindow(3, 0, -depth)
    size = window.subtree_size()
    clock = ClockStream(derive_seed(seed, _COUPLED_STREAM))
    # The voter window shares paths (hence clocks) with the Ising window, shifted so its coin
    # layer is layer 0.
    voter_window = TreeWindow(3, depth, 0)
    vq = OpinionQuery(voter_window, clock, max_node_visits=guards.max_node_visits)
    vertices = [window.vertex_at(i) for i in range(size)]
    voter = np.array([opinion(vq, voter_window.vertex(v.path), 0.0) for v in vertices], dtype=np.int8)
    glauber = voter.copy()

    run = CoupledRun(depth=depth, beta=beta, schedule=schedule.name)
    for k in range(0, -depth, -1):
        run.opportunities[k] = 0
        run.creations[k] = 0

    streams = [[(r.time, i, r.index) for r in clock.rings_in(v, 0.0, horizon)] for i, v in enumerate(vertices)]
    first_leaf = window.layer_offset(depth)
    mismatched = 0
    next_sample = 0.0
    for time, i, ring_index in heapq.merge(*streams):
        while next_sample <= time:
            run.times.append(next_sample)
            run.disagreements.append(mismatched)
            next_sample += 1.0
        v = vertices[i]
        before = voter[i] != glauber[i]
        u = clock.uniform_at(v, ring_index)
        parent = glauber[(i - 1) // 3] if i > 0 else None
        if i >= first_leaf:
            voter[i] = clock.coin_at(v, ring_index)
            glauber[i] = 1 if u < glauber_plus_prob(v.layer, parent, (), beta, schedule) else -1
            if voter[i] != glauber[i] and not before:
                run.boundary_creations += 1
        else:
            kids = range(3 * i + 1, 3 * i + 4)
            agreed = all(voter[c] == glauber[c] for c in kids)
            voter[i] = majority3(*(int(voter[c]) for c in kids))
            p_plus = glauber_plus_prob(v.layer, parent, [int(glauber[c]) for c in kids], beta, schedule)
            glauber[i] = 1 if u < p_plus else -1
            if agreed:
                run.opportunities[v.layer] += 1
                if voter[i] != glauber[i]:
                    run.creations[v.layer] += 1
                    run.creation_log.append((time, v.path, v.layer))
        mismatched += int(voter[i] != glauber[i]) - int(before)
    while next_sample <= horizon:
        run.times.append(next_sample)
        run.disagreements.append(mismatched)
        next_sample += 1.0
    run.final_voter = voter
    run.final_glauber = glauber
    logger.info(
        f"coupled run depth={depth} beta={beta} schedule={schedule.name} T={horizon}: "
        f"{sum(run.creations.values())} creations, |D_T|={mismatched}"
    )
    return run


def voter_marginal_matches(run: CoupledRun, horizon: float, seed: int) -> bool:
    """
    Whether the voter chain of a coupled run equals the exact voter sampler at `horizon` on the
    same clocks; both describe one process.
    """
    depth = run.depth
    voter_window = TreeWindow(3, depth, 0)
    q = OpinionQuery(voter_window, ClockStream(derive_seed(seed, _COUPLED_STREAM)))
    window = TreeWindow(3, 0, -depth)
    for i in range(window.subtree_size()):
        v = voter_window.vertex(window.vertex_at(i).path)
        if opinion(q, v, horizon) != run.final_voter[i]:
            return False
    return True


@dataclass
class InfectionRun:
    """
    Result of one run of the dominating infection process on the descendants of x_0.
    :param depth: truncation depth K (layers 0..-K)
    :param times: event times, starting with 0
    :param counts: infected count right after each event
    :param time_average: time-averaged infected count over [0, horizon]
    :param violations: events after which an infected vertex had an uninfected parent
    """
    depth: int
    horizon: float
    times: list[float] = field(default_factory=list)
    counts: list[int] = field(default_factory=list)
    time_average: float = 0.0
    originations: int = 0
    cures: int = 0
    max_jump: int = 0
    violations: int = 0


class _InfectedSet:
    """Infected vertices keyed by path, with the curable ones (no infected child) kept indexable."""

    def __init__(self):
        self.children: dict[tuple[int, ...], int] = {}
        self.curable: list[tuple[int, ...]] = []
        self._slot: dict[tuple[int, ...], int] = {}

    def __len__(self) -> int:
        return len(self.children)

    def _mark(self, path):
        self._slot[path] = len(self.curable)
        self.curable.append(path)

    def _unmark(self, path):
        slot = self._slot.pop(path)
        last = self.curable.pop()
        if last != path:
            self.curable[slot] = last
            self._slot[last] = slot

    def infect_path(self, path: tuple[int, ...]) -> int:
        """Infect path and all its ancestors; returns the number of newly infected vertices."""
        added = 0
        for cut in range(len(path) + 1):
            prefix = path[:cut]
            if prefix in self.children:
                continue
            self.children[prefix] = 0
            added += 1
            if cut > 0:
                parent = prefix[:-1]
                if self.children[parent] == 0:
                    self._unmark(parent)
                self.children[parent] += 1
            self._mark(prefix)
        return added

    def cure(self, path: tuple[int, ...]) -> None:
        self._unmark(path)
        del self.children[path]
        if path:
            parent = path[:-1]
            self.children[parent] -= 1
            if self.children[parent] == 0:
                self._mark(parent)

    def parent_closed(self) -> bool:
        return all(p[:-1] in self.children for p in self.children if p)


def origination_rates(depth: int, beta: float, schedule: CouplingSchedule) -> np.ndarray:
    """Per-vertex origination rate for layers 0, -1, ..., -depth."""
    return np.array([math.exp(-2 * beta * schedule.gap(-j)) for j in range(depth + 1)])


def infection_simulate(
    depth: int,
    beta: float,
    schedule: CouplingSchedule,
    horizon: float,
    seed: int,
    *,
    check_invariants: bool = True,
    guards: GuardSettings = GuardSettings(),
) -> InfectionRun:
    """
    Event-driven simulation of the infection process: an infection originates at each vertex of
    layer k at rate exp(-2 beta (J_{k-1} - J_k)) and infects the whole path up to x_0; an infected
    vertex without infected children is cured at rate 1/2.
    """
    require_non_negative("depth", depth)
    require_positive("beta", beta)
    require_non_negative("horizon", horizon)
    require_seed(seed)
    require_within("depth", depth, guards.max_infection_depth)
    require_within("horizon", horizon, guards.max_horizon)

    per_vertex = origination_rates(depth, beta, schedule)
    layer_rates = per_vertex * 3.0 ** np.arange(depth + 1)
    birth_rate = float(layer_rates.sum())
    if not math.isfinite(birth_rate):
        raise GuardError(f"origination rate overflow for schedule {schedule.name}")
    if birth_rate > 0:
        layer_weights = layer_rates / birth_rate
    else:
        # every origination rate underflowed; the empty set stays empty
        logger.warning(f"origination rates underflow at beta={beta} for schedule {schedule.name}")
        layer_weights = np.zeros(depth + 1)

    rng = np.random.Generator(np.random.Philox(key=derive_seed(seed, _INFECTION_STREAM)))
    infected = _InfectedSet()
    run = InfectionRun(depth=depth, horizon=horizon, times=[0.0], counts=[0])
    t = 0.0
    area = 0.0
    while True:
        total = birth_rate + 0.5 * len(infected.curable)
        if total == 0:
            area += len(infected) * (horizon - t)
            break
        dt = rng.exponential(1 / total)
        if t + dt >= horizon:
            area += len(infected) * (horizon - t)
            break
        area += len(infected) * dt
        t += dt
        if rng.random() * total < birth_rate:
            j = int(rng.choice(depth + 1, p=layer_weights))
            path = tuple(int(c) for c in rng.integers(0, 3, size=j))
            added = infected.infect_path(path)
            run.originations += 1
            run.max_jump = max(run.max_jump, added)
        else:
            victim = infected.curable[int(rng.integers(len(infected.curable)))]
            infected.cure(victim)
            run.cures += 1
        run.times.append(t)
        run.counts.append(len(infected))
        if check_invariants and not infected.parent_closed():
            run.violations += 1
            logger.error(f"infected set lost parent closure at t={t}")
    run.time_average = area / horizon if horizon > 0 else 0.0
    logger.info(
        f"infection depth={depth} beta={beta} schedule={schedule.name} T={horizon}: "
        f"average {run.time_average:.5f}, {run.originations} originations, {run.cures} cures"
    )
    return run


@dataclass(frozen=True)
class RateSum:
    """
    :param value: partial sum of the infection-rate series
    :param terms: number of terms summed
    :param bounded: whether the rate is strictly below the cure rate 1/2
    """
    value: float
    terms: int
    bounded: bool


def infection_rate_sum(
    beta: float,
    schedule: CouplingSchedule,
    tol: float,
    *,
    max_terms: int = 100_000,
    patience: int = 50,
) -> RateSum:
    """
    Sum over j >= 0 of (j+1) 3^j exp(-2 beta (J_{-j-1} - J_{-j})), stopping once the geometric
    tail bound a_{J+1} / (1 - r) drops below `tol`.
    """
    require_positive("beta", beta)
    require_positive("tol", tol)

    def log_term(j: int) -> float:
        return math.log(j + 1) + j * math.log(3) - 2 * beta * schedule.gap(-j)

    total = 0.0
    growing = 0
    current = log_term(0)
    for j in range(max_terms):
        if current > 700:
            raise DivergenceError(f"rate series term {j} overflows (beta={beta}, schedule={schedule.name})")
        total += math.exp(current)
        following = log_term(j + 1)
        ratio = math.exp(following - current)
        if ratio < 1:
            growing = 0
            if math.exp(following) / (1 - ratio) < tol:
                logger.debug(f"rate sum converged after {j + 1} terms, ratio {ratio:.3g}")
                return RateSum(total, j + 1, total < 0.5)
        else:
            growing += 1
            if growing >= patience:
                raise DivergenceError(
                    f"rate series diverges: term ratio {ratio:.4f} >= 1 for {patience} terms "
                    f"(beta={beta}, schedule={schedule.name})"
                )
        current = following
    raise DivergenceError(f"rate series did not converge within {max_terms} terms")
