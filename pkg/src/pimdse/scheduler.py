"""Data-sharing scheduler for sharing-sets on the node mesh.

A sharing-set is a group of nodes that all need the same tensor slice,
which they initially hold in equal parts. The transfer runs as an
all-gather along a Hamilton cycle of the set: with N members, N-1 rounds
move one chunk per cycle edge per round, so every directed cycle edge
carries (N-1)*chunk_bits in total, spread over its routed mesh links.

Strategies:

* schedule_ilp: joint min-max-link-load over the Hamilton cycles of all
  sets. Solved exactly by branch-and-bound (loads only grow along a
  partial assignment, so the running max prunes) when the joint
  permutation space is small; otherwise coordinate descent over sets with
  exact sub-solves for small sets and 2-opt local search for large ones,
  seeded with the TSP orders among other starts.
* schedule_tsp: per-set minimum total hop length cycle (classic TSP on
  Manhattan distances), ignoring congestion.
* schedule_shp: no cycle; every member broadcasts its chunk along
  shortest paths. Hop-optimal, congestion-oblivious.

Weight-sharing sets are emitted per replication group; output sets charge
a ring all-reduce for channel-partitioned psums (chunk pre-scaled so the
same edge-load formula applies).
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .costmodel import LOOPS, part_layer
from .noc import Mesh, hops, route_array
from .workload import Layer

Coord = tuple[int, int]


@dataclass(frozen=True)
class SharingSet:
    payload: str  # "input" | "weight" | "output"
    members: tuple[Coord, ...]
    chunk_bits: float


@dataclass
class ScheduleResult:
    method: str
    sets: list[SharingSet]
    orders: list[tuple[Coord, ...] | None]
    loads: np.ndarray
    max_load_bits: float
    hop_bits: float


# ---- sharing-set construction ----


def _digits(idx: int, radices: list[int]) -> tuple[int, ...]:
    out = []
    for r in reversed(radices):
        out.append(idx % r)
        idx //= r
    return tuple(reversed(out))


def _balanced_groups(items: list, n_groups: int) -> list[list]:
    """Split into n contiguous groups with sizes as even as possible."""
    n = len(items)
    base, extra = divmod(n, n_groups)
    out = []
    at = 0
    for g in range(n_groups):
        size = base + (1 if g < extra else 0)
        out.append(items[at:at + size])
        at += size
    return out


def build_sharing_sets(layer: Layer, lm, wr: int, region) -> list[SharingSet]:
    """Sharing-sets a part-layer needs before compute starts.

    Input sets group nodes that differ only along the K-partition (same
    ifmap slice); weight sets group replication partners among nodes that
    differ only along B/P/Q (emitted when WR forces each to hold a
    fraction); output sets group nodes that differ only along C (partial
    sums must be reduced; chunk holds the 2x ring all-reduce factor).
    """
    if layer.kind == "aux":
        return []
    ph = {l: lm.parts[l][0] for l in LOOPS}
    pw = {l: lm.parts[l][1] for l in LOOPS}
    order = tuple(lm.order)
    h_rad = [ph[l] for l in order]
    w_rad = [pw[l] for l in order]

    digits = {}
    for i in range(region.rows):
        hd = _digits(i, h_rad)
        for j in range(region.cols):
            wd = _digits(j, w_rad)
            coord = (region.row0 + i, region.col0 + j)
            digits[coord] = {l: (hd[t], wd[t]) for t, l in enumerate(order)}

    part = part_layer(layer, {l: ph[l] * pw[l] for l in LOOPS})
    sets: list[SharingSet] = []

    n_k = ph["K"] * pw["K"]
    if n_k > 1:
        groups: dict = defaultdict(list)
        for coord, d in digits.items():
            groups[tuple(d[l] for l in ("B", "P", "Q", "C"))].append(coord)
        slice_bits = part.B * part.C * part.H * part.W * layer.data_width_bits
        for key in sorted(groups):
            mem = tuple(sorted(groups[key]))
            if len(mem) >= 2:
                sets.append(SharingSet("input", mem, slice_bits / len(mem)))

    n_bpq = 1
    for l in ("B", "P", "Q"):
        n_bpq *= ph[l] * pw[l]
    share_div = math.ceil(n_bpq / max(1, wr))
    if layer.weight_bits > 0 and share_div > 1:
        part_w_bits = part.K * part.C * part.HK * part.WK * layer.data_width_bits
        kc_groups: dict = defaultdict(list)
        for coord, d in digits.items():
            kc_groups[(d["K"], d["C"])].append((tuple(d[l] for l in ("B", "P", "Q")), coord))
        n_groups = max(1, n_bpq // share_div)
        for key in sorted(kc_groups):
            members = [coord for _, coord in sorted(kc_groups[key])]
            for grp in _balanced_groups(members, n_groups):
                if len(grp) >= 2:
                    sets.append(SharingSet("weight", tuple(grp), part_w_bits / len(grp)))

    n_c = ph["C"] * pw["C"]
    if n_c > 1:
        groups = defaultdict(list)
        for coord, d in digits.items():
            groups[tuple(d[l] for l in ("B", "P", "Q", "K"))].append(coord)
        psum_bits = part.B * part.K * part.P * part.Q * layer.psum_width_bits
        for key in sorted(groups):
            mem = tuple(sorted(groups[key]))
            if len(mem) >= 2:
                sets.append(SharingSet("output", mem, 2.0 * psum_bits / len(mem)))

    return sets


def weight_share_fraction(lm, wr: int) -> float:
    """Fraction of its part weights a node holds before gathering."""
    n_bpq = 1
    for l in ("B", "P", "Q"):
        n_bpq *= lm.parts[l][0] * lm.parts[l][1]
    return 1.0 / math.ceil(n_bpq / max(1, wr))


# ---- load accounting ----


def _cycle_loads(mesh: Mesh, members: tuple[Coord, ...], chunk_bits: float):
    """Load vector and bits*hops for one all-gather cycle order."""
    loads = mesh.zero_loads()
    m = len(members)
    edge_bits = (m - 1) * chunk_bits
    total_hops = 0
    paths = []
    for i in range(m):
        p = route_array(mesh, members[i], members[(i + 1) % m])
        paths.append(p)
        total_hops += len(p)
    if paths:
        np.add.at(loads, np.concatenate(paths), edge_bits)
    return loads, edge_bits * total_hops


def _result_from_orders(method: str, mesh: Mesh, sets, orders) -> ScheduleResult:
    loads = mesh.zero_loads()
    hop_bits = 0.0
    for s, order in zip(sets, orders):
        lv, hb = _cycle_loads(mesh, order, s.chunk_bits)
        loads += lv
        hop_bits += hb
    return ScheduleResult(method=method, sets=list(sets), orders=list(orders),
                          loads=loads, max_load_bits=float(loads.max(initial=0.0)),
                          hop_bits=hop_bits)


def evaluate_schedule(result: ScheduleResult, mesh: Mesh,
                      e_noc_pj_per_bit_hop: float) -> tuple[int, float]:
    cycles = int(math.ceil(result.max_load_bits / mesh.flit_bits)) if result.max_load_bits > 0 else 0
    return cycles, result.hop_bits * e_noc_pj_per_bit_hop


# ---- order construction ----


def snake_order(members: tuple[Coord, ...]) -> tuple[Coord, ...]:
    """Boustrophedon walk over the member grid rows; a cheap short cycle."""
    rows = sorted({r for r, _ in members})
    out = []
    for i, r in enumerate(rows):
        cols = sorted([m for m in members if m[0] == r], key=lambda m: m[1])
        out.extend(cols if i % 2 == 0 else cols[::-1])
    return tuple(out)


def _tour_length(members) -> int:
    return sum(hops(members[i], members[(i + 1) % len(members)])
               for i in range(len(members)))


def _tsp_exact(members: tuple[Coord, ...]) -> tuple[Coord, ...]:
    """Branch-and-bound over fixed-start permutations, min total hops."""
    members = tuple(sorted(members))
    start = members[0]
    rest = list(members[1:])
    best_order = snake_order(members)
    best_len = _tour_length(best_order)
    min_edge = {m: min(hops(m, o) for o in members if o != m) for m in members}

    path = [start]

    def dfs(length: int, remaining: list):
        nonlocal best_order, best_len
        if not remaining:
            total = length + hops(path[-1], start)
            if total < best_len:
                best_len = total
                best_order = tuple(path)
            return
        bound = length + sum(min_edge[m] for m in remaining)
        if bound >= best_len:
            return
        for idx in range(len(remaining)):
            nxt = remaining[idx]
            d = hops(path[-1], nxt)
            if length + d >= best_len:
                continue
            path.append(nxt)
            rem = remaining[:idx] + remaining[idx + 1:]
            dfs(length + d, rem)
            path.pop()

    dfs(0, rest)
    return best_order


def _tsp_heuristic(members: tuple[Coord, ...]) -> tuple[Coord, ...]:
    """Nearest neighbour + 2-opt on tour length."""
    members = tuple(sorted(members))
    cur = members[0]
    left = set(members[1:])
    order = [cur]
    while left:
        cur = min(left, key=lambda m: (hops(cur, m), m))
        order.append(cur)
        left.remove(cur)
    improved = True
    while improved:
        improved = False
        n = len(order)
        for i in range(n - 1):
            for j in range(i + 2, n):
                if i == 0 and j == n - 1:
                    continue
                a, b = order[i], order[i + 1]
                c, d = order[j], order[(j + 1) % n]
                delta = hops(a, c) + hops(b, d) - hops(a, b) - hops(c, d)
                if delta < 0:
                    order[i + 1:j + 1] = order[i + 1:j + 1][::-1]
                    improved = True
    return tuple(order)


def schedule_tsp(sets: list[SharingSet], mesh: Mesh, exact_limit: int = 10) -> ScheduleResult:
    """Per-set minimum-hop-length cycles; loads evaluated afterwards."""
    orders = []
    for s in sets:
        if len(s.members) <= exact_limit:
            orders.append(_tsp_exact(s.members))
        else:
            orders.append(_tsp_heuristic(s.members))
    return _result_from_orders("tsp", mesh, sets, orders)


def schedule_shp(sets: list[SharingSet], mesh: Mesh) -> ScheduleResult:
    """Every member broadcasts its chunk along shortest paths; no cycle."""
    loads = mesh.zero_loads()
    hop_bits = 0.0
    for s in sets:
        for src in s.members:
            for dst in s.members:
                if src == dst:
                    continue
                path = route_array(mesh, src, dst)
                np.add.at(loads, path, s.chunk_bits)
                hop_bits += s.chunk_bits * len(path)
    return ScheduleResult(method="shp", sets=list(sets), orders=[None] * len(sets),
                          loads=loads, max_load_bits=float(loads.max(initial=0.0)),
                          hop_bits=hop_bits)


# ---- min-max-link-load search ----


def _objective(loads: np.ndarray, hop_bits: float) -> tuple[float, float]:
    return (float(loads.max(initial=0.0)), hop_bits)


def _joint_exact(sets, mesh: Mesh) -> list[tuple[Coord, ...]]:
    """Joint branch-and-bound over all sets' cycle orders.

    Minimizes the worst link load exactly (loads only grow along a partial
    assignment, so pruning on the running max is safe). Total bits*hops is
    a secondary tie-break among visited assignments only, not optimal.
    """
    set_edges = []  # per set: dict (a,b) -> (np link indices, hop count)
    for s in sets:
        cache = {}
        for a in s.members:
            for b in s.members:
                if a != b:
                    p = route_array(mesh, a, b)
                    cache[(a, b)] = (p, len(p))
        set_edges.append(cache)

    best_orders = [snake_order(s.members) for s in sets]
    best = _objective(*_accumulate(mesh, sets, best_orders))
    tsp_orders = [_tsp_exact(s.members) if len(s.members) <= 10 else _tsp_heuristic(s.members)
                  for s in sets]
    cand = _objective(*_accumulate(mesh, sets, tsp_orders))
    if cand < best:
        best, best_orders = cand, tsp_orders

    loads = mesh.zero_loads()
    hop_box = [0.0]
    orders_now: list[list[Coord]] = []

    def place_set(si: int):
        nonlocal best, best_orders
        if si == len(sets):
            obj = (float(loads.max(initial=0.0)), hop_box[0])
            if obj < best:
                best = obj
                best_orders = [tuple(o) for o in orders_now]
            return
        s = sets[si]
        members = tuple(sorted(s.members))
        edge_bits = (len(members) - 1) * s.chunk_bits
        edges = set_edges[si]

        def add_edge(a, b, sign):
            idx, h = edges[(a, b)]
            loads[idx] += sign * edge_bits
            hop_box[0] += sign * edge_bits * h

        order = [members[0]]
        remaining = list(members[1:])

        def extend():
            nonlocal best, best_orders
            if float(loads.max(initial=0.0)) >= best[0]:
                return  # loads only grow; prune on the running max
            if not remaining:
                add_edge(order[-1], order[0], +1)
                orders_now.append(order)
                place_set(si + 1)
                orders_now.pop()
                add_edge(order[-1], order[0], -1)
                return
            for i in range(len(remaining)):
                nxt = remaining.pop(i)
                add_edge(order[-1], nxt, +1)
                order.append(nxt)
                extend()
                order.pop()
                add_edge(order[-1], nxt, -1)
                remaining.insert(i, nxt)

        extend()

    place_set(0)
    return list(best_orders)


def _accumulate(mesh, sets, orders):
    loads = mesh.zero_loads()
    hop_bits = 0.0
    for s, order in zip(sets, orders):
        lv, hb = _cycle_loads(mesh, order, s.chunk_bits)
        loads += lv
        hop_bits += hb
    return loads, hop_bits


def _improve_set(mesh, s: SharingSet, order: tuple, bg_loads: np.ndarray,
                 exact_limit: int) -> tuple:
    """Best cycle for one set against fixed background loads."""
    members = tuple(sorted(s.members))
    m = len(members)

    def score(o):
        lv, hb = _cycle_loads(mesh, o, s.chunk_bits)
        tot = bg_loads + lv
        return (float(tot.max(initial=0.0)), hb)

    if m <= exact_limit and math.factorial(m - 1) <= 50000:
        best_o, best_v = order, score(order)
        start = members[0]
        for perm in itertools.permutations(members[1:]):
            cand = (start,) + perm
            v = score(cand)
            if v < best_v:
                best_v, best_o = v, cand
        return best_o

    cur = list(order)
    cur_v = score(tuple(cur))
    improved = True
    while improved:
        improved = False
        n = len(cur)
        for i in range(n - 1):
            for j in range(i + 2, n):
                if i == 0 and j == n - 1:
                    continue
                cand = cur[:i + 1] + cur[i + 1:j + 1][::-1] + cur[j + 1:]
                v = score(tuple(cand))
                if v < cur_v:
                    cur, cur_v = cand, v
                    improved = True
    return tuple(cur)


def schedule_ilp(sets: list[SharingSet], mesh: Mesh, exact_limit: int = 10,
                 seed: int = 0, joint_limit: float = 1e6) -> ScheduleResult:
    """Joint min-max-link-load Hamilton cycles over all sets.

    Exact when the joint space is small enough; otherwise multi-start
    coordinate descent that always includes the TSP orders as one start,
    so the result never scores worse than schedule_tsp on this objective.
    """
    if not sets:
        return ScheduleResult("ilp", [], [], mesh.zero_loads(), 0.0, 0.0)
    sets = sorted(sets, key=lambda s: (s.payload, s.members))
    sizes = [len(s.members) for s in sets]
    joint = 1.0
    for m in sizes:
        joint *= math.factorial(m - 1)
    if all(m <= exact_limit for m in sizes) and joint <= joint_limit:
        orders = _joint_exact(sets, mesh)
        return _result_from_orders("ilp", mesh, sets, orders)

    rng = np.random.default_rng(seed)
    starts = []
    starts.append([snake_order(s.members) for s in sets])
    starts.append([
        _tsp_exact(s.members) if len(s.members) <= exact_limit else _tsp_heuristic(s.members)
        for s in sets])
    for _ in range(2):
        shuffled = []
        for s in sets:
            mem = list(s.members)
            rng.shuffle(mem)
            shuffled.append(tuple(mem))
        starts.append(shuffled)

    best_orders = None
    best_v = None
    for start in starts:
        orders = [tuple(o) for o in start]
        per_set = [_cycle_loads(mesh, o, s.chunk_bits) for s, o in zip(sets, orders)]
        for _pass in range(4):
            changed = False
            for i, s in enumerate(sets):
                bg = mesh.zero_loads()
                for j, (lv, _) in enumerate(per_set):
                    if j != i:
                        bg += lv
                new_o = _improve_set(mesh, s, orders[i], bg, exact_limit)
                if new_o != orders[i]:
                    orders[i] = new_o
                    per_set[i] = _cycle_loads(mesh, new_o, s.chunk_bits)
                    changed = True
            if not changed:
                break
        loads = mesh.zero_loads()
        hop_bits = 0.0
        for lv, hb in per_set:
            loads += lv
            hop_bits += hb
        v = _objective(loads, hop_bits)
        if best_v is None or v < best_v:
            best_v = v
            best_orders = list(orders)
    return _result_from_orders("ilp", mesh, sets, best_orders)


def greedy_schedule(sets: list[SharingSet], mesh: Mesh) -> ScheduleResult:
    """Snake-order cycles; the fast placement-sensitive candidate estimate."""
    if not sets:
        return ScheduleResult("greedy", [], [], mesh.zero_loads(), 0.0, 0.0)
    orders = [snake_order(s.members) for s in sets]
    return _result_from_orders("greedy", mesh, sets, orders)
