"""
Exact sampling of the stationary majority voter process on the ternary directed tree.

Above the base layer a ringing vertex adopts the majority opinion of its three children; at or
below it a ringing vertex takes a fresh fair coin. The opinion of v at time t is therefore the
value set at v's last ring before t, which is either that ring's coin or the majority of the
children's opinions at the ring time.
"""
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from loguru import logger
from numpy.polynomial import Polynomial
from scipy import stats

import lab.core.config as cfg
from lab.core.clocks import ClockStream, Ring, derive_seed
from lab.core.errors import ConfigError, GuardError
from lab.core.protocol import Estimate, GuardSettings
from lab.core.tree import TreeWindow, VertexRef
from lab.util.parallel import sample_map
from lab.util.validator import require_non_negative, require_positive, require_seed, require_within
from shared.logger import add_error_sink, ensure_global_logger

ensure_global_logger()
add_error_sink("voter.py")

# Probability that the majority of three fair coins changes when each is flipped w.p. p.
MAJORITY_FLIP = Polynomial([0.0, 1.5, -1.5, 1.0])


@dataclass
class OpinionQuery:
    """
    One sample of the voter process on a ternary window with its base layer at layer 0.
    :param window: tree window; boundary vertices resample by fair coin
    :param clock: clocks and coins driving the sample
    :param memo: cache keyed by (vertex path, ring index); None disables it
    """
    window: TreeWindow
    clock: ClockStream
    memo: dict[tuple[tuple[int, ...], int], int] | None = field(default_factory=dict)
    max_node_visits: int = cfg.MAX_NODE_VISITS
    node_visits: int = 0


def majority3(a: int, b: int, c: int) -> int:
    return 1 if a + b + c > 0 else -1


def majority_flip_prob(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"p must lie in [0, 1], got {p}")
    return float(MAJORITY_FLIP(p))


def _opinion_set_at(q: OpinionQuery, v: VertexRef, ring: Ring) -> int:
    """Opinion v adopted at its ring `ring`."""
    key = (v.path, ring.index)
    if q.memo is not None and key in q.memo:
        return q.memo[key]
    q.node_visits += 1
    if q.node_visits > q.max_node_visits:
        raise GuardError(f"sample exceeded {q.max_node_visits} node visits")
    if q.window.is_boundary(v):
        value = q.clock.coin_at(v, ring.index)
    else:
        a, b, c = q.window.children(v)
        first = opinion(q, a, ring.time)
        second = opinion(q, b, ring.time)
        # the third child only matters on a split vote
        value = first if first == second else majority3(first, second, opinion(q, c, ring.time))
    if q.memo is not None:
        q.memo[key] = value
    return value


def opinion(q: OpinionQuery, v: VertexRef, t: float) -> int:
    """Opinion (+1/-1) held by v at time t."""
    return _opinion_set_at(q, v, q.clock.last_ring_before(v, t))


def _autocorr_chunk(
    window: TreeWindow, times: tuple[float, ...], seed: int, max_node_visits: int, lo: int, hi: int
) -> list[int]:
    totals = [0] * len(times)
    root = window.root()
    for i in range(lo, hi):
        q = OpinionQuery(window, ClockStream(derive_seed(seed, i)), max_node_visits=max_node_visits)
        now = opinion(q, root, 0.0)
        for k, T in enumerate(times):
            totals[k] += now * opinion(q, root, T)
    return totals


def _autocorr_estimate(n: int, T: float, total: int, samples: int, seed: int) -> Estimate:
    mean = total / samples
    var = (1 - mean * mean) * samples / (samples - 1) if samples > 1 else 1.0
    se = math.sqrt(max(var, 0.0) / samples)
    z = float(stats.norm.ppf(0.975))
    est = Estimate(mean, max(-1.0, mean - z * se), min(1.0, mean + z * se), samples, se)
    logger.info(f"rho_bar_{n}({T}): {mean:.6f} +/- {est.half_width:.6f} ({samples} samples, seed {seed})")
    return est


def estimate_autocorr_curve(
    n: int,
    times: list[float] | tuple[float, ...],
    samples: int,
    seed: int,
    *,
    workers: int = 1,
    guards: GuardSettings = GuardSettings(),
) -> list[Estimate]:
    """
    Estimates of E[B_0(x_n) B_T(x_n)] for several T from the same samples.
    Each sample's clocks and coins are shared across the times, so the estimates are correlated.
    """
    require_non_negative("n", n)
    require_positive("samples", samples)
    for T in times:
        require_non_negative("T", T)
    require_seed(seed)
    require_within("n", n, guards.max_voter_depth)
    window = TreeWindow(3, n, 0)
    fn = partial(_autocorr_chunk, window, tuple(float(T) for T in times), seed, guards.max_node_visits)
    totals = np.zeros(len(times), dtype=np.int64)
    for chunk in sample_map(fn, samples, workers=workers):
        totals += chunk
    return [_autocorr_estimate(n, T, int(total), samples, seed) for T, total in zip(times, totals)]


def estimate_autocorr(
    n: int,
    T: float,
    samples: int,
    seed: int,
    *,
    workers: int = 1,
    guards: GuardSettings = GuardSettings(),
) -> Estimate:
    """
    Monte Carlo estimate of E[B_0(x_n) B_T(x_n)] for the vertex n layers above the coin layer.
    """
    return estimate_autocorr_curve(n, (T,), samples, seed, workers=workers, guards=guards)[0]


def layer_opinions(n: int, m: int, samples: int, seed: int) -> np.ndarray:
    """
    Time-0 opinions of the first m vertices of layer n (which have disjoint descendant sets),
    one row per sample.
    """
    require_positive("m", m)
    lift = 0
    while 3**lift < m:
        lift += 1
    window = TreeWindow(3, n + lift, 0)
    vertices = list(window.layer_vertices(n))[:m]
    out = np.zeros((samples, m), dtype=np.int8)
    for i in range(samples):
        q = OpinionQuery(window, ClockStream(derive_seed(seed, i)))
        out[i] = [opinion(q, v, 0.0) for v in vertices]
    return out


def layer_independence_stat(n: int, m: int, samples: int, seed: int) -> float:
    """
    Largest absolute pairwise correlation between time-0 opinions of m vertices of layer n.
    With a single vertex the only pair is the vertex with itself, whose correlation is 1.
    """
    require_non_negative("n", n)
    require_positive("m", m)
    require_positive("samples", samples)
    if m == 1:
        return 1.0
    corr = np.corrcoef(layer_opinions(n, m, samples, seed), rowvar=False)
    off = np.abs(corr[~np.eye(m, dtype=bool)])
    return float(np.nan_to_num(off).max())
