from dataclasses import dataclass
from typing import Iterator

from lab.core.errors import ContractViolation, GuardError

# Vertex counts above this no longer fit the int64 arrays used by the simulators.
MAX_REPRESENTABLE = 2**63 - 1


@dataclass(frozen=True)
class VertexRef:
    """
    Address of a vertex inside a finite tree window.
    :param path: child indices descending from the window root; empty for the root
    :param layer: layer of the vertex, equal to anchor layer minus len(path)
    """
    path: tuple[int, ...]
    layer: int

    @property
    def depth(self) -> int:
        return len(self.path)


@dataclass(frozen=True)
class TreeWindow:
    """
    Finite window of the directed tree where every vertex has one parent and `arity` children.
    The root sits at `anchor_layer`; vertices at or below `base_layer` follow a boundary rule and are
    never expanded.
    :param arity: number of children per vertex (d >= 2)
    :param anchor_layer: layer of the window root
    :param base_layer: layer at or below which boundary conditions apply
    """
    arity: int
    anchor_layer: int
    base_layer: int

    def __post_init__(self):
        if self.arity < 2:
            raise ContractViolation(f"arity must be >= 2, got {self.arity}")
        if self.base_layer > self.anchor_layer:
            raise ContractViolation(f"base layer {self.base_layer} above anchor layer {self.anchor_layer}")

    @property
    def height(self) -> int:
        """Number of layers between the root and the base layer."""
        return self.anchor_layer - self.base_layer

    def root(self) -> VertexRef:
        return VertexRef((), self.anchor_layer)

    def vertex(self, path: tuple[int, ...]) -> VertexRef:
        path = tuple(path)
        if any(i < 0 or i >= self.arity for i in path):
            raise ContractViolation(f"child index out of range in path {path} (arity {self.arity})")
        if len(path) > self.height:
            raise ContractViolation(f"path {path} descends below the base layer")
        return VertexRef(path, self.anchor_layer - len(path))

    def is_boundary(self, v: VertexRef) -> bool:
        return v.layer <= self.base_layer

    def children(self, v: VertexRef) -> list[VertexRef]:
        if v.layer <= self.base_layer:
            raise ContractViolation(f"children of boundary vertex {v.path} (layer {v.layer}) requested")
        layer = v.layer - 1
        return [VertexRef(v.path + (i,), layer) for i in range(self.arity)]

    def parent(self, v: VertexRef) -> VertexRef | None:
        if not v.path:
            return None
        return VertexRef(v.path[:-1], v.layer + 1)

    def subtree_size(self) -> int:
        """Number of vertices in the window, sum of d^j for j = 0..height."""
        size = sum(self.arity**j for j in range(self.height + 1))
        if size > MAX_REPRESENTABLE:
            raise GuardError(f"window of arity {self.arity} and height {self.height} has {size} vertices")
        return size

    def layer_vertices(self, layer: int) -> Iterator[VertexRef]:
        """Vertices of one layer in lexicographic path order."""
        depth = self.anchor_layer - layer
        if depth < 0 or depth > self.height:
            return
        for index in range(self.layer_offset(depth), self.layer_offset(depth + 1)):
            yield self.vertex_at(index)

    # Breadth-first numbering: root is 0, child j of index i is i*d + 1 + j.

    def layer_offset(self, depth: int) -> int:
        return (self.arity**depth - 1) // (self.arity - 1)

    def index_of(self, v: VertexRef) -> int:
        index = 0
        for i in v.path:
            index = index * self.arity + 1 + i
        return index

    def vertex_at(self, index: int) -> VertexRef:
        path: list[int] = []
        while index > 0:
            index, rem = divmod(index - 1, self.arity)
            path.append(rem)
        path.reverse()
        return VertexRef(tuple(path), self.anchor_layer - len(path))
