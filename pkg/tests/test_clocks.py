import numpy as np
import pytest
from scipy import stats

from lab.core.clocks import ClockStream, derive_seed, stream_key
from lab.core.errors import ContractViolation
from lab.core.tree import VertexRef

ROOT = VertexRef((), 0)
LEFT = VertexRef((0,), -1)


def test_same_seed_same_rings():
    a, b = ClockStream(99), ClockStream(99)
    assert a.rings_in(ROOT, -5.0, 5.0) == b.rings_in(ROOT, -5.0, 5.0)
    assert ClockStream(100).rings_in(ROOT, 0.0, 5.0) != a.rings_in(ROOT, 0.0, 5.0)


def test_rings_do_not_depend_on_query_order():
    a, b = ClockStream(7), ClockStream(7)
    a.rings_in(ROOT, -3.0, 3.0)
    a.last_ring_before(LEFT, -10.0)
    assert a.rings_in(LEFT, -2.0, 2.0) == b.rings_in(LEFT, -2.0, 2.0)
    assert a.vertices_touched == 2


def test_rings_in_is_sorted_and_indexed(clock):
    rings = clock.rings_in(ROOT, -4.0, 4.0)
    times = [r.time for r in rings]
    assert times == sorted(times)
    assert all(-4.0 <= t < 4.0 for t in times)
    indices = [r.index for r in rings]
    assert indices == list(range(indices[0], indices[0] + len(indices)))
    forward = [r for r in rings if r.time > 0]
    if forward:
        assert forward[0].index == 1
    assert all(r.index <= 0 for r in rings if r.time < 0)


def test_last_and_next_ring_bracket_t(clock):
    for t in (-3.3, -0.1, 0.0, 0.7, 12.5):
        last = clock.last_ring_before(ROOT, t)
        nxt = clock.first_ring_at_or_after(ROOT, t)
        assert last.time < t <= nxt.time
        assert nxt.index == last.index + 1
        assert clock.rings_in(ROOT, last.time, t) == [last]


def test_aux_draws_need_generated_rings():
    fresh = ClockStream(5)
    with pytest.raises(ContractViolation):
        fresh.coin_at(ROOT, 1000)
    ring = fresh.last_ring_before(ROOT, 1.0)
    assert fresh.coin_at(ROOT, ring.index) in (-1, 1)
    assert 0.0 <= fresh.uniform_at(ROOT, ring.index) < 1.0


def test_negated_coins_mirror_the_stream():
    plain, negated = ClockStream(11), ClockStream(11, negate_coins=True)
    for ring in plain.rings_in(ROOT, -2.0, 2.0):
        negated.rings_in(ROOT, -2.0, 2.0)
        assert negated.coin_at(ROOT, ring.index) == -plain.coin_at(ROOT, ring.index)
        assert negated.uniform_at(ROOT, ring.index) == plain.uniform_at(ROOT, ring.index)


def test_gaps_are_unit_exponential():
    clock = ClockStream(2024)
    times = np.array([r.time for r in clock.rings_in(ROOT, 0.0, 2000.0)])
    gaps = np.diff(np.concatenate([[0.0], times]))
    assert stats.kstest(gaps, "expon").pvalue > 1e-3
    assert abs(len(times) - 2000) < 5 * np.sqrt(2000)


def test_rings_in_rejects_reversed_interval(clock):
    with pytest.raises(ContractViolation):
        clock.rings_in(ROOT, 2.0, 1.0)


def test_derive_seed_separates_keys():
    seeds = {derive_seed(1, k) for k in range(100)}
    assert len(seeds) == 100
    assert all(0 <= s < 2**128 for s in seeds)
    assert derive_seed(1, 3) == derive_seed(1, 3)


def _leaves(count: int, depth: int = 10) -> list[VertexRef]:
    return [VertexRef(tuple(int(c) for c in np.base_repr(k, 3).zfill(depth)), -depth) for k in range(count)]


def test_stream_keys_separate_direction_and_path():
    keys = {
        stream_key(1, which, path).tobytes()
        for which in (0, 1)
        for path in [(), (0,), (1,), (0, 0), (0, 1), (1, 0)]
    }
    assert len(keys) == 12
    assert stream_key(1, 0, (2,)).tobytes() != stream_key(2, 0, (2,)).tobytes()
    assert stream_key(2**127 + 5, 1, (0, 2)).shape == (2,)


def test_coins_are_fair():
    clock = ClockStream(31)
    coins = np.array([clock.coin_at(ROOT, r.index) for r in clock.rings_in(ROOT, 0.0, 100_000.0)])
    assert len(coins) > 99_000
    assert abs(coins.mean()) < 4 / np.sqrt(len(coins))


def test_uniforms_are_uniform():
    clock = ClockStream(32)
    rings = clock.rings_in(ROOT, -5_000.0, 5_000.0)
    uniforms = np.array([clock.uniform_at(ROOT, r.index) for r in rings])
    assert len(uniforms) > 9_000
    assert stats.kstest(uniforms, "uniform").pvalue > 1e-3


def test_last_ring_before_one_precedes_zero_with_probability_e_inverse():
    clock = ClockStream(33)
    leaves = _leaves(20_000)
    before_zero = np.array([clock.last_ring_before(v, 1.0).time < 0 for v in leaves])
    se = np.sqrt(np.exp(-1.0) * (1 - np.exp(-1.0)) / len(leaves))
    assert abs(before_zero.mean() - np.exp(-1.0)) < 4 * se


def test_ring_counts_are_poisson_across_zero():
    clock = ClockStream(34)
    leaves = _leaves(20_000)
    counts = np.array([len(clock.rings_in(v, -1.0, 1.0)) for v in leaves])
    assert abs(counts.mean() - 2.0) < 4 * np.sqrt(2.0 / len(counts))
    assert abs(counts.var(ddof=1) - 2.0) < 4 * np.sqrt(10.0 / len(counts))


def test_sibling_clocks_are_independent():
    clock = ClockStream(35)
    parents = _leaves(10_000, depth=9)
    left = [VertexRef(p.path + (0,), p.layer - 1) for p in parents]
    right = [VertexRef(p.path + (1,), p.layer - 1) for p in parents]
    counts = np.array([[len(clock.rings_in(v, 0.0, 2.0)) for v in pair] for pair in zip(left, right)])
    assert abs(np.corrcoef(counts, rowvar=False)[0, 1]) < 4 / np.sqrt(len(parents))

    def coin_now(v: VertexRef) -> int:
        return clock.coin_at(v, clock.last_ring_before(v, 0.0).index)

    coins = np.array([[coin_now(v) for v in pair] for pair in zip(left, right)])
    assert abs(np.corrcoef(coins, rowvar=False)[0, 1]) < 4 / np.sqrt(len(parents))
