"""
Exact sampling of the stationary coalescing-particles process with an all-occupied base layer.

A vertex above the base layer holds a particle just before time t iff, since its parent last
rang, its own clock rang at a moment when at least one of its children held a particle. Base
vertices always hold a particle. Resolving that rule recursively from the queried vertex down
to the base layer gives the exact stationary state without simulating from a finite start time.
"""
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from loguru import logger
from scipy import stats

import lab.core.config as cfg
from lab.core.clocks import ClockStream, Ring, derive_seed
from lab.core.errors import ContractViolation, GuardError
from lab.core.protocol import Estimate, GuardSettings
from lab.core.tree import TreeWindow, VertexRef
from lab.util.parallel import sample_map
from lab.util.validator import require_non_negative, require_positive, require_seed, require_within
from shared.logger import add_error_sink, ensure_global_logger

ensure_global_logger()
add_error_sink("coalescing.py")

# Keeps lattice-demo randomness apart from tree sample seeds.
_LATTICE_STREAM = 0x1A77


@dataclass
class ParticleQuery:
    """
    One sample of the process on a window.
    :param window: tree window; its base layer is always occupied
    :param clock: clocks driving the sample
    :param memo: cache keyed by (vertex path, index of the parent ring being resolved); None disables it
    :param max_node_visits: guard on recursive visits for this sample
    """
    window: TreeWindow
    clock: ClockStream
    memo: dict[tuple[tuple[int, ...], int], bool] | None = field(default_factory=dict)
    max_node_visits: int = cfg.MAX_NODE_VISITS
    node_visits: int = 0
    max_depth: int = 0


def _occupied_at_pull(q: ParticleQuery, v: VertexRef, pull: Ring) -> bool:
    """State of v just before `pull`, a ring of v's parent."""
    w = q.window
    depth = w.anchor_layer - v.layer
    if depth > q.max_depth:
        q.max_depth = depth
    if v.layer <= w.base_layer:
        return True
    key = (v.path, pull.index)
    if q.memo is not None and key in q.memo:
        return q.memo[key]
    q.node_visits += 1
    if q.node_visits > q.max_node_visits:
        raise GuardError(f"sample exceeded {q.max_node_visits} node visits")
    previous = q.clock.last_ring_before(w.parent(v), pull.time)
    result = _pulled_between(q, v, previous.time, pull.time)
    if q.memo is not None:
        q.memo[key] = result
    return result


def _pulled_between(q: ParticleQuery, v: VertexRef, lo: float, hi: float) -> bool:
    """Whether v pulled a particle from one of its children at some ring in (lo, hi)."""
    kids = q.window.children(v)
    for ring in q.clock.rings_in(v, lo, hi):
        if ring.time <= lo:
            continue
        if any(_occupied_at_pull(q, c, ring) for c in kids):
            return True
    return False


def has_particle(q: ParticleQuery, v: VertexRef, t: float) -> bool:
    """
    State of the stationary process at v at time t- (a ring exactly at t is excluded).
    """
    w = q.window
    if v.layer <= w.base_layer:
        return True
    parent = w.parent(v)
    if parent is None:
        raise ContractViolation("the window root has no parent in the window; use flow_event")
    previous = q.clock.last_ring_before(parent, t)
    return _pulled_between(q, v, previous.time, t)


def flow_event(q: ParticleQuery, T: float) -> bool:
    """
    Whether particles flowed into the window root during [0, T).
    """
    require_non_negative("T", T)
    root = q.window.root()
    kids = q.window.children(root)
    for ring in q.clock.rings_in(root, 0.0, T):
        if any(_occupied_at_pull(q, c, ring) for c in kids):
            return True
    return False


def _flow_chunk(window: TreeWindow, T: float, seed: int, max_node_visits: int, lo: int, hi: int) -> int:
    hits = 0
    for i in range(lo, hi):
        q = ParticleQuery(window, ClockStream(derive_seed(seed, i)), max_node_visits=max_node_visits)
        hits += flow_event(q, T)
    return hits


def wilson_estimate(hits: int, samples: int) -> Estimate:
    p = hits / samples
    ci = stats.binomtest(hits, samples).proportion_ci(confidence_level=0.95, method="wilson")
    se = math.sqrt(max(p * (1 - p), 0.0) / samples)
    return Estimate(p, float(ci.low), float(ci.high), samples, se)


def estimate_rho(
    n: int,
    T: float,
    samples: int,
    seed: int,
    *,
    arity: int = 2,
    workers: int = 1,
    guards: GuardSettings = GuardSettings(),
) -> Estimate:
    """
    Monte Carlo estimate of the probability that particles flow into a vertex n layers above the
    base layer during a window of length T.
    """
    require_positive("n", n)
    require_positive("samples", samples)
    require_non_negative("T", T)
    require_seed(seed)
    require_within("n", n, guards.max_coalescing_depth)
    window = TreeWindow(arity, n, 0)
    fn = partial(_flow_chunk, window, float(T), seed, guards.max_node_visits)
    hits = sum(sample_map(fn, samples, workers=workers))
    est = wilson_estimate(hits, samples)
    logger.info(f"rho_{n}({T}) d={arity}: {est.value:.6f} +/- {est.half_width:.6f} ({samples} samples, seed {seed})")
    return est


def coupling_violations(samples: int, shallow: int, deep: int, T: float, seed: int, *, arity: int = 2) -> int:
    """
    Count shared-clock samples where the vertex with the deeper base layer saw a flow but the one
    with the shallower base layer did not. Monotonicity of the coupling makes this zero.
    """
    if not 1 <= shallow <= deep:
        raise ContractViolation(f"need 1 <= shallow <= deep, got {shallow}, {deep}")
    near = TreeWindow(arity, shallow, 0)
    far = TreeWindow(arity, deep, 0)
    violations = 0
    for i in range(samples):
        clock = ClockStream(derive_seed(seed, i))
        flow_far = flow_event(ParticleQuery(far, clock), T)
        flow_near = flow_event(ParticleQuery(near, clock), T)
        if flow_far and not flow_near:
            violations += 1
            logger.error(f"coupling violation at sample {i}: depth {deep} flowed, depth {shallow} did not")
    return violations


def sibling_block_correlation(n: int, samples: int, seed: int, *, arity: int = 2) -> tuple[float, float]:
    """
    Empirical correlation of time-0 occupation at two vertices of layer n that lie in different
    sibling blocks. Returns (correlation, standard error under independence).
    """
    require_positive("n", n)
    if samples < 2:
        raise ContractViolation("need at least two samples for a correlation")
    window = TreeWindow(arity, n + 2, 0)
    left, right = window.vertex((0, 0)), window.vertex((1, 0))
    draws = np.zeros((samples, 2))
    for i in range(samples):
        q = ParticleQuery(window, ClockStream(derive_seed(seed, i)))
        draws[i] = has_particle(q, left, 0.0), has_particle(q, right, 0.0)
    corr = np.corrcoef(draws, rowvar=False)[0, 1]
    return float(np.nan_to_num(corr)), 1 / math.sqrt(samples)


def _torus_neighbours(side: int, dim: int) -> np.ndarray:
    index = np.arange(side**dim).reshape((side,) * dim)
    cols = [np.roll(index, shift, axis).ravel() for axis in range(dim) for shift in (1, -1)]
    return np.stack(cols, axis=1)


def lattice_density_decay(
    side: int,
    dim: int,
    horizon: int,
    seed: int,
    *,
    guards: GuardSettings = GuardSettings(),
) -> np.ndarray:
    """
    Particle density at times 0, 1, ..., horizon for the undirected analogue on the torus
    (Z/side Z)^dim started fully occupied: when x rings, particles on its neighbours move to x.
    """
    require_positive("side", side)
    require_positive("dim", dim)
    require_non_negative("horizon", horizon)
    require_seed(seed)
    sites = side**dim
    require_within("side**dim", sites, guards.max_lattice_sites)
    require_within("horizon", horizon, guards.max_horizon)
    rng = np.random.Generator(np.random.Philox(key=derive_seed(seed, _LATTICE_STREAM)))
    neighbours = _torus_neighbours(side, dim)
    occupied = np.ones(sites, dtype=bool)
    density = [1.0]
    for _ in range(int(horizon)):
        # rings in one unit of time: Poisson count, sites i.i.d. uniform in time order
        for x in rng.integers(0, sites, size=rng.poisson(sites)):
            nb = neighbours[x]
            if occupied[nb].any():
                occupied[nb] = False
                occupied[x] = True
        density.append(float(occupied.mean()))
    logger.info(f"lattice demo side={side} dim={dim}: density {density[-1]:.4f} at t={horizon}")
    return np.asarray(density)
