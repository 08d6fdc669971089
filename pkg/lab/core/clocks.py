import hashlib
import threading
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from lab.core.errors import ContractViolation
from lab.core.tree import VertexRef

# Rings drawn per refill of a vertex stream; changing it changes every stream.
BLOCK = 16

_FORWARD = 0
_BACKWARD = 1

_SEED_MASK = 2**128 - 1
_EMPTY_BUFFER = np.zeros(4, dtype=np.uint64)


def derive_seed(seed: int, *keys: int) -> int:
    """
    Hash a master seed and a tuple of non-negative integers into an independent 128-bit seed.
    Used for per-sample and per-window seeds so any of them is addressable without generating others.
    """
    state = np.random.SeedSequence(entropy=seed, spawn_key=keys).generate_state(2, dtype=np.uint64)
    return int(state[0]) | (int(state[1]) << 64)


def stream_key(seed: int, which: int, path: tuple[int, ...]) -> np.ndarray:
    """
    Philox key of one direction of one vertex: a keyed BLAKE2b digest of (direction, path).
    Entries are fixed-width so distinct paths never share an encoding.
    """
    digest = hashlib.blake2b(
        np.asarray((which, *path), dtype=np.uint32).tobytes(),
        digest_size=16,
        key=(seed & _SEED_MASK).to_bytes(16, "little"),
    ).digest()
    return np.frombuffer(digest, dtype=np.uint64).copy()


class Ring(NamedTuple):
    time: float
    index: int


@dataclass
class _Direction:
    """
    One direction (forward from 0, or backward from 0) of a vertex's ring sequence.
    Refill r reads the Philox blocks whose top counter word is r, so refills never overlap.
    """
    key: np.ndarray
    refills: int = 0
    offsets: list[float] = field(default_factory=list)  # |ring time|, increasing
    coins: list[int] = field(default_factory=list)
    uniforms: list[float] = field(default_factory=list)

    def refill(self, rng: np.random.Generator) -> None:
        rng.bit_generator.state = {
            "bit_generator": "Philox",
            "state": {"counter": np.array([0, 0, 0, self.refills], dtype=np.uint64), "key": self.key},
            "buffer": _EMPTY_BUFFER,
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        self.refills += 1
        gaps = rng.standard_exponential(BLOCK)
        aux = rng.random((BLOCK, 2))
        last = self.offsets[-1] if self.offsets else 0.0
        for gap, (c, u) in zip(gaps, aux):
            last += float(gap)
            self.offsets.append(last)
            self.coins.append(1 if c < 0.5 else -1)
            self.uniforms.append(float(u))


class _VertexClock:
    def __init__(self, seed: int, path: tuple[int, ...]):
        self._seed = seed
        self._path = path
        self._dirs: dict[int, _Direction] = {}

    def direction(self, which: int) -> _Direction:
        d = self._dirs.get(which)
        if d is None:
            d = _Direction(stream_key(self._seed, which, self._path))
            self._dirs[which] = d
        return d


class ClockStream:
    """
    Rate-1 Poisson clocks on every vertex, with per-ring fair coins and uniforms.

    Ring 1 is the first ring after time 0, ring 0 the last ring before it; forward rings carry
    indices 1, 2, ... and backward rings 0, -1, -2, .... Each direction is a Philox stream keyed
    by (seed, direction, vertex path), so a vertex's rings do not depend on which other vertices
    were queried or in which order. Auxiliary draws are attached to ring indices. All directions
    share one bit generator whose key and counter are reset before every refill.

    A stream is meant to be used by one worker; extensions are serialised by `lock`.
    """

    def __init__(self, seed: int, *, negate_coins: bool = False):
        self.seed = seed
        self.negate_coins = negate_coins
        self.lock = threading.Lock()
        self._rng = np.random.Generator(np.random.Philox(key=0))
        self._clocks: dict[tuple[int, ...], _VertexClock] = {}
    def _clock(self, v: VertexRef) -> _VertexClock:
        clock = self._clocks.get(v.path)
        if clock is None:
            clock = _VertexClock(self.seed, v.path)
            self._clocks[v.path] = clock
        return clock

    def _covered(self, v: VertexRef, which: int, offset: float) -> _Direction:
        """Extend one direction until its last ring lies strictly beyond `offset`."""
        d = self._clock(v).direction(which)
        with self.lock:
            while not d.offsets or d.offsets[-1] <= offset:
                d.refill(self._rng)
        return d

    @property
    def vertices_touched(self) -> int:
        return len(self._clocks)

    def rings_in(self, v: VertexRef, s: float, t: float) -> list[Ring]:
        """All rings of v in [s, t), sorted by time."""
        if s > t:
            raise ContractViolation(f"rings_in called with s={s} > t={t}")
        rings: list[Ring] = []
        if s < 0:
            back = self._covered(v, _BACKWARD, -s)
            # backward ring j sits at -offsets[j]; keep those with s <= time < min(t, 0)
            hi = bisect_right(back.offsets, -s)
            lo = bisect_right(back.offsets, -t) if t < 0 else 0
            for j in range(hi - 1, lo - 1, -1):
                rings.append(Ring(-back.offsets[j], -j))
        if t > 0:
            fwd = self._covered(v, _FORWARD, t)
            lo = bisect_left(fwd.offsets, max(s, 0.0))
            hi = bisect_left(fwd.offsets, t)
            for j in range(lo, hi):
                rings.append(Ring(fwd.offsets[j], j + 1))
        return rings

    def last_ring_before(self, v: VertexRef, t: float) -> Ring:
        """Greatest ring strictly before t; extends the past as far as needed."""
        if t > 0:
            fwd = self._covered(v, _FORWARD, t)
            j = bisect_left(fwd.offsets, t)
            if j > 0:
                return Ring(fwd.offsets[j - 1], j)
            t = 0.0
        back = self._covered(v, _BACKWARD, -t)
        j = bisect_right(back.offsets, -t)
        return Ring(-back.offsets[j], -j)

    def first_ring_at_or_after(self, v: VertexRef, t: float) -> Ring:
        """Smallest ring time >= t."""
        if t <= 0:
            back = self._covered(v, _BACKWARD, -t)
            j = bisect_right(back.offsets, -t)
            if j > 0:
                return Ring(-back.offsets[j - 1], -(j - 1))
            t = 0.0
        fwd = self._covered(v, _FORWARD, t)
        j = bisect_left(fwd.offsets, t)
        return Ring(fwd.offsets[j], j + 1)

    def _direction_for(self, v: VertexRef, index: int) -> tuple[_Direction, int]:
        if index >= 1:
            d, j = self._clock(v).direction(_FORWARD), index - 1
        else:
            d, j = self._clock(v).direction(_BACKWARD), -index
        if j >= len(d.offsets):
            raise ContractViolation(f"ring {index} of vertex {v.path} has not been generated")
        return d, j

    def coin_at(self, v: VertexRef, index: int) -> int:
        d, j = self._direction_for(v, index)
        coin = d.coins[j]
        return -coin if self.negate_coins else coin

    def uniform_at(self, v: VertexRef, index: int) -> float:
        d, j = self._direction_for(v, index)
        return d.uniforms[j]
