"""Data indirection graphs: which arrays the prefetcher walks and how."""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from enum import Enum


class EdgeKind(str, Enum):
    SINGLE_VALUED = "single-valued"  # loaded value is an index into dst
    RANGED = "ranged"  # consecutive values bound a range of dst
    SAME_INDEX = "same-index"  # dst element at the same index


class DigError(ValueError):
    pass


@dataclass
class DigNode:
    node_id: int
    array_id: str
    base_address: int
    length: int
    element_size: int
    is_trigger: bool = False
    values: object = None  # functional payload, read on fills

    @property
    def end_address(self) -> int:
        return self.base_address + self.length * self.element_size

    def element_of(self, address: int) -> int:
        return (address - self.base_address) // self.element_size

    def address_of(self, index: int) -> int:
        return self.base_address + index * self.element_size


@dataclass(frozen=True)
class DigEdge:
    src: int
    dst: int
    kind: EdgeKind


@dataclass
class DIG:
    nodes: list[DigNode] = field(default_factory=list)
    edges: list[DigEdge] = field(default_factory=list)

    def __post_init__(self):
        ids = {n.node_id for n in self.nodes}
        for e in self.edges:
            if e.src not in ids or e.dst not in ids:
                raise DigError(f"edge {e} references a missing node")
        self._bases = sorted((n.base_address, n.node_id) for n in self.nodes)
        self._by_id = {n.node_id: n for n in self.nodes}
        self._out = {n.node_id: [e for e in self.edges if e.src == n.node_id] for n in self.nodes}

    def node(self, node_id: int) -> DigNode:
        return self._by_id[node_id]

    def node_by_array(self, array_id: str) -> DigNode:
        for n in self.nodes:
            if n.array_id == array_id:
                return n
        raise KeyError(array_id)

    def out_edges(self, node_id: int) -> list[DigEdge]:
        return self._out[node_id]

    def is_leaf(self, node_id: int) -> bool:
        return not self._out[node_id]

    def triggers(self) -> list[DigNode]:
        return [n for n in self.nodes if n.is_trigger]

    def locate(self, address: int):
        """Return (node, element index) holding ``address``, or None."""
        i = bisect.bisect_right(self._bases, (address, float("inf"))) - 1
        if i < 0:
            return None
        node = self._by_id[self._bases[i][1]]
        if address >= node.end_address:
            return None
        return node, node.element_of(address)
