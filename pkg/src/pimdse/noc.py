"""2D mesh network model with dimension-order routing.

Links are directed; each carries one flit per cycle. Routing goes along
the X dimension (column index) first, then Y (row index), so the link
sequence for any pair is unique and load accounting is deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Coord = tuple[int, int]  # (row, col)


@dataclass
class Mesh:
    rows: int
    cols: int
    flit_bits: int

    def __post_init__(self):
        links = []
        for r in range(self.rows):
            for c in range(self.cols):
                if c + 1 < self.cols:
                    links.append(((r, c), (r, c + 1)))
                    links.append(((r, c + 1), (r, c)))
                if r + 1 < self.rows:
                    links.append(((r, c), (r + 1, c)))
                    links.append(((r + 1, c), (r, c)))
        self.links: list[tuple[Coord, Coord]] = links
        self.link_id: dict[tuple[Coord, Coord], int] = {lk: i for i, lk in enumerate(links)}
        self._route_cache: dict[tuple[Coord, Coord], np.ndarray] = {}

    @property
    def n_links(self) -> int:
        return len(self.links)

    def zero_loads(self) -> np.ndarray:
        return np.zeros(len(self.links))


def route(mesh: Mesh, src: Coord, dst: Coord) -> list[int]:
    """Link ids along the X-then-Y path from src to dst."""
    r, c = src
    rd, cd = dst
    path = []
    while c != cd:
        step = 1 if cd > c else -1
        path.append(mesh.link_id[((r, c), (r, c + step))])
        c += step
    while r != rd:
        step = 1 if rd > r else -1
        path.append(mesh.link_id[((r, c), (r + step, c))])
        r += step
    return path


def route_array(mesh: Mesh, src: Coord, dst: Coord) -> np.ndarray:
    """Memoized route as an index array; schedulers hit the same pairs a lot."""
    key = (src, dst)
    got = mesh._route_cache.get(key)
    if got is None:
        got = np.array(route(mesh, src, dst), dtype=np.intp)
        mesh._route_cache[key] = got
    return got


def hops(src: Coord, dst: Coord) -> int:
    return abs(src[0] - dst[0]) + abs(src[1] - dst[1])


def path_indicator(mesh: Mesh, src: Coord, dst: Coord) -> np.ndarray:
    """0/1 vector over directed links used by the (src, dst) path."""
    ind = np.zeros(mesh.n_links)
    ind[route(mesh, src, dst)] = 1.0
    return ind


def add_transfer(mesh: Mesh, loads: np.ndarray, src: Coord, dst: Coord, bits: float) -> float:
    """Accumulate one transfer onto the load vector; returns bits*hops."""
    path = route(mesh, src, dst)
    for lk in path:
        loads[lk] += bits
    return bits * len(path)


def transfer_metrics(mesh: Mesh, loads: np.ndarray, hop_bits: float,
                     e_noc_pj_per_bit_hop: float) -> tuple[int, float]:
    """Latency cycles (pipeline-abstracted) and energy for a transfer bundle.

    The bottleneck link forwards one flit per cycle, so cycles is the
    ceiling of the worst per-link load over the flit width. Energy counts
    every bit through every hop.
    """
    worst = float(loads.max()) if len(loads) else 0.0
    cycles = int(math.ceil(worst / mesh.flit_bits)) if worst > 0 else 0
    return cycles, hop_bits * e_noc_pj_per_bit_hop
