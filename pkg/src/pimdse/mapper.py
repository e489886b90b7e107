"""Mapping search for one network on one hardware configuration.

The search alternates over four coupled choices:

* SM: branches of each segment grouped onto rectangular node regions
  (grouping by longest-processing-time, rectangle split by recursive
  bisection proportional to MAC counts).
* LM: per-layer partitioning of the B/P/Q/K/C loops over a region's rows
  and columns plus the loop nesting order that places the digits.
* WR: weight replication degree; fewer replicas shrink the per-node
  stored share but add gather traffic before compute.
* DL: DRAM data layout per tensor, shared between producer and consumers.

Selection across segments runs as an exact DP over quantized per-node
capacity: each layer contributes a small (size, latency) candidate curve,
regions fold by knapsack, parallel regions by pointwise max, segment
alternatives by pointwise min, and segments by min-plus convolution.
The alternation re-runs selection with layout-aware DRAM costs and keeps
the best fully evaluated scheme across iterations.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .arch import KIB, HwConstraints, HwParams, derive_node_props, validate_params
from .costmodel import (
    LOOPS,
    InfeasibleTiling,
    aux_cost,
    combine_layer_cost,
    layout_choices,
    node_cost,
    parse_layout,
    part_layer,
)
from .noc import Mesh
from .scheduler import (
    build_sharing_sets,
    evaluate_schedule,
    greedy_schedule,
    schedule_ilp,
    schedule_shp,
    schedule_tsp,
)
from .workload import DnnGraph, Segment, _effective_edges, segment_dnn


class InfeasibleMapping(ValueError):
    pass


# ---- mapping descriptors ----


@dataclass(frozen=True)
class Region:
    row0: int
    col0: int
    rows: int
    cols: int

    @property
    def n_nodes(self) -> int:
        return self.rows * self.cols

    def nodes(self) -> list[tuple[int, int]]:
        return [(self.row0 + i, self.col0 + j)
                for i in range(self.rows) for j in range(self.cols)]


@dataclass(frozen=True)
class LayerMapping:
    """Per-loop (row, col) split factors plus the digit nesting order."""

    pairs: tuple[tuple[int, int], ...]  # aligned with LOOPS
    order: tuple[str, ...]

    @property
    def parts(self) -> dict:
        return {l: self.pairs[i] for i, l in enumerate(LOOPS)}

    def n(self, loop: str) -> int:
        ph, pw = self.pairs[LOOPS.index(loop)]
        return ph * pw

    @property
    def products(self) -> tuple[int, ...]:
        return tuple(ph * pw for ph, pw in self.pairs)

    @property
    def n_bpq(self) -> int:
        return self.n("B") * self.n("P") * self.n("Q")


def share_divisor(lm: LayerMapping, wr: int) -> int:
    """How many ways each part-layer's weights are split across holders."""
    return math.ceil(lm.n_bpq / max(1, wr))


def wr_values(n_nodes: int, n_can: int = 5) -> list[int]:
    """Geometric replication ladder from 1 (fully split) to n (replicated)."""
    if n_nodes <= 1:
        return [1]
    vals = {int(round(n_nodes ** (k / (n_can - 1)))) for k in range(n_can)}
    return sorted(max(1, min(n_nodes, v)) for v in vals)


@dataclass(frozen=True)
class LayerChoice:
    """One (WR, LM) candidate with its DP-visible size and latency."""

    wr: int
    lm: LayerMapping | None
    size_quanta: int
    size_bytes: float
    latency_cycles: float
    energy_pj: float


@dataclass(frozen=True)
class SmCandidate:
    regions: tuple[Region, ...]
    groups: tuple[tuple[int, ...], ...]  # branch indices per region


# ---- selection space containers (also the dp_select input format) ----


@dataclass
class LayerSpace:
    layer_id: str
    cands: list[LayerChoice]


@dataclass
class RegionSpace:
    region: Region | None
    branch_indices: tuple[int, ...]
    layers: list[LayerSpace]
    aux_ids: tuple[str, ...] = ()
    base_latency_cycles: float = 0.0
    base_energy_pj: float = 0.0


@dataclass
class SmSpace:
    sm: SmCandidate | None
    regions: list[RegionSpace]


@dataclass
class SegmentSpace:
    index: int
    sms: list[SmSpace]


@dataclass
class SegPick:
    sm_index: int
    budget_quanta: int
    layer_choice: dict  # layer_id -> candidate index


# ---- SM candidates ----


def _lpt_groups(weights: list[float], k: int) -> list[list[int]]:
    """Longest-processing-time greedy grouping into k load-balanced groups."""
    order = sorted(range(len(weights)), key=lambda i: (-weights[i], i))
    loads = [0.0] * k
    groups: list[list[int]] = [[] for _ in range(k)]
    for i in order:
        g = min(range(k), key=lambda j: (loads[j], j))
        groups[g].append(i)
        loads[g] += weights[i]
    return [sorted(g) for g in groups if g]


def _slice_rect(region: Region, weights: list[float]) -> list[Region] | None:
    """Recursive bisection of a rectangle proportional to group weights."""
    if len(weights) == 1:
        return [region]
    if region.n_nodes < len(weights):
        return None
    total = sum(weights)
    best_i, best_gap = 1, float("inf")
    for i in range(1, len(weights)):
        gap = abs(sum(weights[:i]) - (total - sum(weights[:i])))
        if gap < best_gap:
            best_i, best_gap = i, gap
    wl = sum(weights[:best_i])
    nl, nr = best_i, len(weights) - best_i
    along_rows = region.rows > region.cols
    extent = region.rows if along_rows else region.cols
    other = region.cols if along_rows else region.rows
    k = int(round(extent * wl / total)) if total > 0 else extent // 2
    lo = max(1, math.ceil(nl / other))
    hi = extent - max(1, math.ceil(nr / other))
    if lo > hi:
        return None
    k = min(max(k, lo), hi)
    if along_rows:
        a = Region(region.row0, region.col0, k, region.cols)
        b = Region(region.row0 + k, region.col0, region.rows - k, region.cols)
    else:
        a = Region(region.row0, region.col0, region.rows, k)
        b = Region(region.row0, region.col0 + k, region.rows, region.cols - k)
    left = _slice_rect(a, weights[:best_i])
    right = _slice_rect(b, weights[best_i:])
    if left is None or right is None:
        return None
    return left + right


def gen_sm_candidates(segment: Segment, graph: DnnGraph, rows: int, cols: int,
                      max_regions: int = 4) -> list[SmCandidate]:
    """Branch-to-region assignments for one segment on a rows x cols grid."""
    weights = []
    for br in segment.branches:
        weights.append(float(sum(graph.layer(lid).macs for lid in br.layers)) or 1.0)
    n_br = len(weights)
    out: list[SmCandidate] = []
    seen = set()
    for k in range(1, min(n_br, max_regions, rows * cols) + 1):
        groups = _lpt_groups(weights, k)
        group_w = [sum(weights[i] for i in g) for g in groups]
        ordering = sorted(range(len(groups)), key=lambda i: (group_w[i], groups[i]))
        groups = [groups[i] for i in ordering]
        group_w = [group_w[i] for i in ordering]
        regions = _slice_rect(Region(0, 0, rows, cols), group_w)
        if regions is None:
            continue
        cand = SmCandidate(tuple(regions), tuple(tuple(g) for g in groups))
        sig = (cand.regions, cand.groups)
        if sig not in seen:
            seen.add(sig)
            out.append(cand)
    return out


# ---- LM enumeration ----


def _divisors(n: int) -> list[int]:
    return [d for d in range(1, n + 1) if n % d == 0]


def _divisor_tuples(n: int, caps: list[int]) -> list[tuple[int, ...]]:
    """Ordered factor tuples with product n, each factor within its cap.

    Caps are the layer dims: splitting a loop beyond its extent only clones
    work. If the caps make n unreachable the caps are dropped entirely.
    """
    def rec(i: int, rem: int, capped: bool):
        if i == len(caps) - 1:
            if rem <= (caps[i] if capped else rem):
                yield (rem,)
            return
        for f in _divisors(rem):
            if capped and f > caps[i]:
                continue
            for tail in rec(i + 1, rem // f, capped):
                yield (f,) + tail

    res = list(rec(0, n, True))
    if not res:
        res = list(rec(0, n, False))
    return res


def _orders_for(nontrivial: tuple[str, ...], max_orders: int) -> list[tuple[str, ...]]:
    """Loop orders that differ on the partitioned loops; trivial loops inner."""
    rest = tuple(l for l in LOOPS if l not in nontrivial)
    perms = [p + rest for p in itertools.permutations(nontrivial)]
    if not perms:
        perms = [tuple(LOOPS)]
    if len(perms) > max_orders:
        step = len(perms) / max_orders
        perms = [perms[int(i * step)] for i in range(max_orders)]
    return perms


def _dl_key(dls) -> tuple:
    if dls is None:
        return (None, None)
    din, dout = dls
    return (din.label if din else None, dout.label if dout else None)


def _cached_cost(layer, products: tuple[int, ...], share_div: int, dls,
                 params, cons, cache: dict):
    key = ("cost", layer.id, products, share_div, _dl_key(dls))
    got = cache.get(key)
    if got is None:
        part = part_layer(layer, dict(zip(LOOPS, products)))
        din, dout = dls if dls is not None else (None, None)
        try:
            comp, acc, traffic = node_cost(part, params, cons, 1.0 / share_div, din, dout)
        except InfeasibleTiling:
            got = (None, None, None, None)
            cache[key] = got
            return got
        got = (part, comp, acc, traffic)
        cache[key] = got
    return got


def _cached_noc(layer, lm: LayerMapping, wr: int, region: Region, mesh: Mesh,
                cons: HwConstraints, cache: dict, method: str = "greedy",
                exact_limit: int = 8, seed: int = 0):
    key = ("noc", layer.id, region, lm.pairs, lm.order, wr, method)
    got = cache.get(key)
    if got is None:
        sets = build_sharing_sets(layer, lm, wr, region)
        if method == "greedy":
            res = greedy_schedule(sets, mesh)
        elif method == "ilp":
            res = schedule_ilp(sets, mesh, exact_limit=exact_limit, seed=seed)
        elif method == "tsp":
            res = schedule_tsp(sets, mesh, exact_limit=exact_limit)
        elif method == "shp":
            res = schedule_shp(sets, mesh)
        else:
            raise ValueError(f"unknown schedule method '{method}'")
        got = evaluate_schedule(res, mesh, cons.e_noc_pj_per_bit_hop)
        cache[key] = got
    return got


def enumerate_lm(layer, region: Region, wr: int, params: HwParams,
                 cons: HwConstraints, mesh: Mesh, cache: dict, dls=None,
                 top_parts: int = 12, max_orders: int = 24):
    """Ranked (LayerMapping, CostReport) list for one layer on one region.

    Stage one ranks split-factor tuples on compute+DRAM latency alone;
    stage two adds nesting orders and the greedy sharing-traffic estimate
    for the best few. Both stages share the cost cache.
    """
    caps = {"B": layer.B, "P": layer.P, "Q": layer.Q, "K": layer.K, "C": layer.C}
    rows_t = _divisor_tuples(region.rows, [caps[l] for l in LOOPS])
    cols_t = _divisor_tuples(region.cols, [caps[l] for l in LOOPS])

    scored = []
    for rt in rows_t:
        for ct in cols_t:
            pairs = tuple(zip(rt, ct))
            products = tuple(r * c for r, c in pairs)
            n_bpq = products[0] * products[1] * products[2]
            sd = math.ceil(n_bpq / max(1, wr))
            part, comp, acc, traffic = _cached_cost(layer, products, sd, dls,
                                                    params, cons, cache)
            if part is None:
                continue
            scored.append((max(comp, acc.cycles), acc.pj, pairs, products, sd))
    if not scored:
        raise InfeasibleMapping(
            f"layer '{layer.id}': no feasible loop split on a "
            f"{region.rows}x{region.cols} region")
    scored.sort(key=lambda t: (t[0], t[1], t[2]))

    results = []
    for _, _, pairs, products, sd in scored[:top_parts]:
        part, comp, acc, traffic = _cached_cost(layer, products, sd, dls,
                                                params, cons, cache)
        nontrivial = tuple(l for i, l in enumerate(LOOPS) if products[i] > 1)
        for order in _orders_for(nontrivial, max_orders):
            lm = LayerMapping(pairs, order)
            noc_c, noc_pj = _cached_noc(layer, lm, wr, region, mesh, cons, cache)
            rep = combine_layer_cost(part, region.n_nodes, comp, acc, traffic,
                                     noc_c, noc_pj, cons)
            results.append((rep.latency_cycles, rep.total_energy_pj,
                            (pairs, order), lm, rep))
    results.sort(key=lambda t: (t[0], t[1], t[2]))
    return [(lm, rep) for _, _, _, lm, rep in results]


def stored_weight_bytes(layer, lm: LayerMapping, wr: int) -> float:
    """Per-node pinned weight bytes under this split and replication."""
    part = part_layer(layer, dict(zip(LOOPS, lm.products)))
    return part.weight_bits / 8.0 / share_divisor(lm, wr)


def gen_layer_choices(layer, region: Region, params: HwParams, cons: HwConstraints,
                      mesh: Mesh, cache: dict, dls, quantum_bytes: int,
                      top_parts: int = 12, max_orders: int = 24) -> list[LayerChoice]:
    """Per-WR best-LM candidate curve for the selection DP."""
    key = ("choices", layer.id, region, _dl_key(dls))
    got = cache.get(key)
    if got is not None:
        return got
    cands: dict[int, LayerChoice] = {}
    for wr in wr_values(region.n_nodes):
        ranked = enumerate_lm(layer, region, wr, params, cons, mesh, cache, dls,
                              top_parts=top_parts, max_orders=max_orders)
        lm, rep = ranked[0]
        size = stored_weight_bytes(layer, lm, wr)
        quanta = int(math.ceil(size / quantum_bytes)) if size > 0 else 0
        cand = LayerChoice(wr=wr, lm=lm, size_quanta=quanta, size_bytes=size,
                           latency_cycles=rep.latency_cycles,
                           energy_pj=rep.total_energy_pj)
        cur = cands.get(quanta)
        if cur is None or (cand.latency_cycles, cand.energy_pj) < (cur.latency_cycles,
                                                                   cur.energy_pj):
            cands[quanta] = cand
    out = [cands[q] for q in sorted(cands, reverse=True)]
    cache[key] = out
    return out


# ---- selection DP ----


def _knapsack_curve(cand_lists: list[list[LayerChoice]], budget: int):
    """min total latency at each quanta budget; argmin table for recovery."""
    f = np.zeros(budget + 1)
    choices = np.full((len(cand_lists), budget + 1), -1, dtype=np.int32)
    for i, cands in enumerate(cand_lists):
        g = np.full(budget + 1, np.inf)
        arg = np.full(budget + 1, -1, dtype=np.int32)
        for ci, c in enumerate(cands):
            s = int(c.size_quanta)
            if s > budget:
                continue
            cand = np.full(budget + 1, np.inf)
            cand[s:] = f[:budget + 1 - s] + c.latency_cycles
            better = cand < g
            g[better] = cand[better]
            arg[better] = ci
        f = g
        choices[i] = arg
    return f, choices


def dp_select(spaces: list[SegmentSpace], budget_quanta: int) -> tuple[float, list[SegPick]]:
    """Exact min-latency selection under the summed per-node capacity bound.

    Semantics: within a segment the regions run in parallel (latency is the
    max, stored size is the max); across segments both add up. Sizes are in
    capacity quanta, pre-ceiled per layer.
    """
    Q = int(budget_quanta)
    if Q < 0:
        raise InfeasibleMapping("negative capacity budget")

    seg_curves = []
    seg_tables = []  # per segment: (sm argmin array, per-sm region tables)
    for space in spaces:
        sm_curves = []
        sm_tables = []
        for smsp in space.sms:
            curve = np.zeros(Q + 1)
            region_tables = []
            for rsp in smsp.regions:
                ids = [lsp.layer_id for lsp in rsp.layers]
                r_curve, r_choices = _knapsack_curve([lsp.cands for lsp in rsp.layers], Q)
                r_curve = r_curve + rsp.base_latency_cycles
                curve = np.maximum(curve, r_curve)
                region_tables.append((ids, r_choices))
            sm_curves.append(curve)
            sm_tables.append(region_tables)
        stack = np.stack(sm_curves)
        arg = np.argmin(stack, axis=0)
        seg_curves.append(stack[arg, np.arange(Q + 1)])
        seg_tables.append((arg, sm_tables))

    F = np.zeros(Q + 1)
    fold_args = []
    for curve in seg_curves:
        G = np.full(Q + 1, np.inf)
        B = np.full(Q + 1, -1, dtype=np.int32)
        for b in range(Q + 1):
            v = curve[b]
            if not np.isfinite(v):
                continue
            cand = np.full(Q + 1, np.inf)
            cand[b:] = F[:Q + 1 - b] + v
            better = cand < G
            G[better] = cand[better]
            B[better] = b
        F = G
        fold_args.append(B)

    if not np.isfinite(F[Q]):
        worst, worst_q = None, -1
        for space, curve in zip(spaces, seg_curves):
            finite = np.flatnonzero(np.isfinite(curve))
            if len(finite) == 0:
                raise InfeasibleMapping(
                    f"segment {space.index} does not fit the per-node capacity "
                    f"at any replication")
            if int(finite[0]) > worst_q:
                worst, worst_q = space.index, int(finite[0])
        raise InfeasibleMapping(
            f"segments exceed per-node capacity together; tightest is segment "
            f"{worst} needing {worst_q} quanta alone")

    picks: list[SegPick] = []
    q = Q
    for si in range(len(spaces) - 1, -1, -1):
        b = int(fold_args[si][q])
        arg, sm_tables = seg_tables[si]
        sm_idx = int(arg[b])
        smsp = spaces[si].sms[sm_idx]
        layer_choice: dict = {}
        for rsp, (ids, r_choices) in zip(smsp.regions, sm_tables[sm_idx]):
            qq = b
            for i in range(len(ids) - 1, -1, -1):
                ci = int(r_choices[i][qq])
                layer_choice[ids[i]] = ci
                qq -= int(rsp.layers[i].cands[ci].size_quanta)
        picks.append(SegPick(sm_index=sm_idx, budget_quanta=b, layer_choice=layer_choice))
        q -= b
    picks.reverse()
    return float(F[Q]), picks


# ---- scheme assembly and evaluation ----


@dataclass
class LayerPlan:
    layer_id: str
    region: Region
    wr: int
    lm: LayerMapping
    size_bytes: float


@dataclass
class RegionPlan:
    region: Region
    branch_indices: tuple[int, ...]
    layer_ids: tuple[str, ...]
    aux_ids: tuple[str, ...]


@dataclass
class SegmentPlan:
    regions: list[RegionPlan]
    layer_plans: dict


@dataclass
class MappingResult:
    params: HwParams
    segments: list[SegmentPlan]
    layouts: dict  # layer_id -> (DataLayout, DataLayout)
    latency_cycles: float
    energy_pj: float
    per_layer: dict  # layer_id -> CostReport
    history: list

    @property
    def edp(self) -> float:
        return self.latency_cycles * self.energy_pj


def build_spaces(graph: DnnGraph, segs: list[Segment], params: HwParams,
                 cons: HwConstraints, mesh: Mesh, cache: dict, dls_by_layer,
                 quantum_bytes: int, max_regions: int = 4,
                 top_parts: int = 12, max_orders: int = 24) -> list[SegmentSpace]:
    node = derive_node_props(params, cons)
    spaces = []
    for si, seg in enumerate(segs):
        sms = gen_sm_candidates(seg, graph, params.na_row, params.na_col, max_regions)
        if not sms:
            raise InfeasibleMapping(
                f"segment {si}: no branch-to-region assignment fits the "
                f"{params.na_row}x{params.na_col} grid")
        sm_spaces = []
        for sm in sms:
            region_spaces = []
            for region, group in zip(sm.regions, sm.groups):
                layers = []
                aux: list[str] = []
                base_lat = 0.0
                base_en = 0.0
                for bi in group:
                    br = seg.branches[bi]
                    for lid in br.layers:
                        dls = dls_by_layer.get(lid) if dls_by_layer else None
                        cands = gen_layer_choices(graph.layer(lid), region, params,
                                                  cons, mesh, cache, dls, quantum_bytes,
                                                  top_parts=top_parts,
                                                  max_orders=max_orders)
                        layers.append(LayerSpace(lid, cands))
                    for aid in br.epilogues:
                        rep = aux_cost(graph.layer(aid), region.n_nodes, node, cons)
                        aux.append(aid)
                        base_lat += rep.latency_cycles
                        base_en += rep.total_energy_pj
                region_spaces.append(RegionSpace(
                    region=region, branch_indices=tuple(group), layers=layers,
                    aux_ids=tuple(aux), base_latency_cycles=base_lat,
                    base_energy_pj=base_en))
            sm_spaces.append(SmSpace(sm, region_spaces))
        spaces.append(SegmentSpace(si, sm_spaces))
    return spaces


def assemble_plans(spaces: list[SegmentSpace], picks: list[SegPick]) -> list[SegmentPlan]:
    out = []
    for space, pick in zip(spaces, picks):
        smsp = space.sms[pick.sm_index]
        regions = []
        layer_plans = {}
        for rsp in smsp.regions:
            ids = []
            for lsp in rsp.layers:
                c = lsp.cands[pick.layer_choice[lsp.layer_id]]
                layer_plans[lsp.layer_id] = LayerPlan(
                    layer_id=lsp.layer_id, region=rsp.region, wr=c.wr, lm=c.lm,
                    size_bytes=c.size_bytes)
                ids.append(lsp.layer_id)
            regions.append(RegionPlan(region=rsp.region,
                                      branch_indices=rsp.branch_indices,
                                      layer_ids=tuple(ids), aux_ids=rsp.aux_ids))
        out.append(SegmentPlan(regions=regions, layer_plans=layer_plans))
    return out


def evaluate_scheme(graph: DnnGraph, seg_plans: list[SegmentPlan], params: HwParams,
                    cons: HwConstraints, mesh: Mesh, layouts, cache: dict,
                    method: str = "ilp", exact_limit: int = 8, seed: int = 0):
    """Full cost of an assembled scheme with the given scheduling method.

    Returns (latency_cycles, energy_pj, per_layer CostReports). Regions of a
    segment run in parallel; layers inside a region serialize.
    """
    node = derive_node_props(params, cons)
    total_lat = 0.0
    total_en = 0.0
    per_layer = {}
    for sp in seg_plans:
        seg_lat = 0.0
        for rp in sp.regions:
            lat_r = 0.0
            for lid in rp.layer_ids:
                plan = sp.layer_plans[lid]
                layer = graph.layer(lid)
                dls = layouts.get(lid) if layouts else None
                sd = share_divisor(plan.lm, plan.wr)
                part, comp, acc, traffic = _cached_cost(layer, plan.lm.products, sd,
                                                        dls, params, cons, cache)
                if part is None:
                    raise InfeasibleMapping(
                        f"layer '{lid}': chosen split no longer fits its buffers")
                noc_c, noc_pj = _cached_noc(layer, plan.lm, plan.wr, rp.region, mesh,
                                            cons, cache, method=method,
                                            exact_limit=exact_limit, seed=seed)
                rep = combine_layer_cost(part, rp.region.n_nodes, comp, acc, traffic,
                                         noc_c, noc_pj, cons)
                per_layer[lid] = rep
                lat_r += rep.latency_cycles
                total_en += rep.total_energy_pj
            for aid in rp.aux_ids:
                rep = aux_cost(graph.layer(aid), rp.region.n_nodes, node, cons)
                per_layer[aid] = rep
                lat_r += rep.latency_cycles
                total_en += rep.total_energy_pj
            seg_lat = max(seg_lat, lat_r)
        total_lat += seg_lat
    return total_lat, total_en, per_layer


# ---- data layout assignment ----


class _UnionFind:
    def __init__(self):
        self.parent = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def optimize_dl(graph: DnnGraph, seg_plans: list[SegmentPlan], params: HwParams,
                cons: HwConstraints, cache: dict, max_passes: int = 3):
    """Pick one DRAM layout per tensor, shared by producer and consumers.

    Tensors co-consumed by one layer are unified (a layer reads its whole
    input in one layout). A topological greedy pass seeds the assignment;
    coordinate sweeps then re-pick each tensor's layout against the total
    access cycle/energy score of the layers it touches.
    """
    node = derive_node_props(params, cons)
    plans = {}
    for sp in seg_plans:
        plans.update(sp.layer_plans)
    compute, edges = _effective_edges(graph)
    compute = [lid for lid in compute if lid in plans]
    preds: dict = {lid: [] for lid in compute}
    for u, vs in edges.items():
        for v in vs:
            if u in plans and v in plans:
                preds[v].append(u)
    for v in preds:
        preds[v].sort()

    uf = _UnionFind()
    for lid in compute:
        uf.find(("out", lid))
        if not preds[lid]:
            uf.find(("in", lid))
        for a, b in zip(preds[lid], preds[lid][1:]):
            uf.union(("out", a), ("out", b))

    def in_tensor(lid):
        if preds[lid]:
            return uf.find(("out", preds[lid][0]))
        return uf.find(("in", lid))

    choice_list = {lid: layout_choices(node, graph.layer(lid).data_width_bits)
                   for lid in compute}
    assign: dict = {}

    def score(lid, din, dout):
        plan = plans[lid]
        sd = share_divisor(plan.lm, plan.wr)
        part, comp, acc, _ = _cached_cost(graph.layer(lid), plan.lm.products, sd,
                                          (din, dout), params, cons, cache)
        if part is None:
            return (math.inf, math.inf)
        return (max(comp, acc.cycles), acc.pj)

    for lid in compute:
        t_in, t_out = in_tensor(lid), uf.find(("out", lid))
        in_opts = [assign[t_in]] if t_in in assign else choice_list[lid]
        out_opts = [assign[t_out]] if t_out in assign else choice_list[lid]
        best = None
        for din in in_opts:
            for dout in out_opts:
                if t_in == t_out and din.label != dout.label:
                    continue  # one tensor class: both ends share the layout
                s = score(lid, din, dout) + (din.label, dout.label)
                if best is None or s < best:
                    best = s
                    assign[t_in], assign[t_out] = din, dout

    readers: dict = {}
    writers: dict = {}
    for lid in compute:
        readers.setdefault(in_tensor(lid), []).append(lid)
        writers.setdefault(uf.find(("out", lid)), []).append(lid)

    def total_score(lids):
        lat = en = 0.0
        for lid in lids:
            s = score(lid, assign[in_tensor(lid)], assign[uf.find(("out", lid))])
            lat += s[0]
            en += s[1]
        return (lat, en)

    tensors = sorted(set(readers) | set(writers))
    for _ in range(max_passes):
        changed = False
        for t in tensors:
            touched = sorted(set(readers.get(t, []) + writers.get(t, [])))
            opts = choice_list[touched[0]]
            cur = assign[t]
            best_dl, best_s = cur, total_score(touched) + (cur.label,)
            for dl in opts:
                assign[t] = dl
                s = total_score(touched) + (dl.label,)
                if s < best_s:
                    best_dl, best_s = dl, s
            assign[t] = best_dl
            if best_dl.label != cur.label:
                changed = True
        if not changed:
            break

    return {lid: (assign[in_tensor(lid)], assign[uf.find(("out", lid))])
            for lid in compute}


# ---- capacity audit ----


def stored_weight_map(seg_plans: list[SegmentPlan], rows: int, cols: int) -> np.ndarray:
    """Per-node pinned weight bytes summed over all segments."""
    arr = np.zeros((rows, cols))
    for sp in seg_plans:
        for rp in sp.regions:
            r = rp.region
            for lid in rp.layer_ids:
                arr[r.row0:r.row0 + r.rows, r.col0:r.col0 + r.cols] += \
                    sp.layer_plans[lid].size_bytes
    return arr


# ---- top-level flows ----


def map_dnn(graph: DnnGraph, params: HwParams, cons: HwConstraints,
            quantum_kib: int = 64, max_iters: int = 3, exact_limit: int = 8,
            seed: int = 0, top_parts: int = 12, max_orders: int = 24,
            max_regions: int = 4, schedule_method: str = "ilp",
            cache: dict | None = None) -> MappingResult:
    """Alternating mapping search for one network.

    Iteration one selects SM/LM/WR with layout-blind DRAM estimates, picks
    layouts for that scheme, then later iterations re-select with
    layout-aware costs. The best fully evaluated scheme by latency*energy
    wins; the search stops early when the selection stops changing.
    """
    bad = validate_params(params, cons)
    if bad:
        raise InfeasibleMapping("; ".join(bad))
    node = derive_node_props(params, cons)
    mesh = Mesh(params.na_row, params.na_col, node.flit_bits)
    segs = segment_dnn(graph)
    quantum_bytes = quantum_kib * KIB
    budget = node.cap_bytes // quantum_bytes
    if cache is None:
        cache = {}

    layouts = None
    best = None
    history = []
    prev_sig = None
    for it in range(max_iters):
        spaces = build_spaces(graph, segs, params, cons, mesh, cache, layouts,
                              quantum_bytes, max_regions=max_regions,
                              top_parts=top_parts, max_orders=max_orders)
        est_lat, picks = dp_select(spaces, budget)
        seg_plans = assemble_plans(spaces, picks)
        layouts = optimize_dl(graph, seg_plans, params, cons, cache)
        lat, en, per_layer = evaluate_scheme(graph, seg_plans, params, cons, mesh,
                                             layouts, cache, method=schedule_method,
                                             exact_limit=exact_limit, seed=seed)
        history.append({"iteration": it, "estimated_latency": est_lat,
                        "latency_cycles": lat, "energy_pj": en, "edp": lat * en})
        if best is None or lat * en < best[0]:
            best = (lat * en, seg_plans, layouts, lat, en, per_layer)
        sig = (tuple((p.sm_index, tuple(sorted(p.layer_choice.items()))) for p in picks),
               tuple(sorted((lid, d[0].label, d[1].label) for lid, d in layouts.items())))
        if sig == prev_sig:
            break
        prev_sig = sig

    _, seg_plans, layouts, lat, en, per_layer = best
    return MappingResult(params=params, segments=seg_plans, layouts=layouts,
                         latency_cycles=lat, energy_pj=en, per_layer=per_layer,
                         history=history)


def baseline_map(graph: DnnGraph, params: HwParams, cons: HwConstraints,
                 quantum_kib: int = 64, exact_limit: int = 8, seed: int = 0,
                 cache: dict | None = None) -> MappingResult:
    """Reference flow: whole-array regions, latency-best LM at maximum
    replication, replication stepped down on the largest layers until the
    capacity fits, and one global layout for every tensor."""
    bad = validate_params(params, cons)
    if bad:
        raise InfeasibleMapping("; ".join(bad))
    node = derive_node_props(params, cons)
    mesh = Mesh(params.na_row, params.na_col, node.flit_bits)
    segs = segment_dnn(graph)
    quantum_bytes = quantum_kib * KIB
    budget = node.cap_bytes // quantum_bytes
    if cache is None:
        cache = {}

    whole = Region(0, 0, params.na_row, params.na_col)
    n = whole.n_nodes
    seg_plans = []
    for seg in segs:
        regions = []
        layer_plans = {}
        ids_all = []
        aux_all = []
        for br in seg.branches:
            ids_all.extend(br.layers)
            aux_all.extend(br.epilogues)
        for lid in ids_all:
            lm, _ = enumerate_lm(graph.layer(lid), whole, n, params, cons, mesh,
                                 cache, None)[0]
            layer_plans[lid] = LayerPlan(layer_id=lid, region=whole, wr=n, lm=lm,
                                         size_bytes=stored_weight_bytes(
                                             graph.layer(lid), lm, n))
        regions.append(RegionPlan(region=whole,
                                  branch_indices=tuple(range(len(seg.branches))),
                                  layer_ids=tuple(ids_all), aux_ids=tuple(aux_all)))
        seg_plans.append(SegmentPlan(regions=regions, layer_plans=layer_plans))

    def used_quanta():
        tot = 0
        for sp in seg_plans:
            for rp in sp.regions:
                for lid in rp.layer_ids:
                    sz = sp.layer_plans[lid].size_bytes
                    tot += int(math.ceil(sz / quantum_bytes)) if sz > 0 else 0
        return tot

    while used_quanta() > budget:
        cand_plan = None
        for sp in seg_plans:
            for plan in sp.layer_plans.values():
                sd = share_divisor(plan.lm, plan.wr)
                if sd >= plan.lm.n_bpq:
                    continue  # already fully split
                if cand_plan is None or plan.size_bytes > cand_plan.size_bytes:
                    cand_plan = plan
        if cand_plan is None:
            raise InfeasibleMapping(
                "baseline: weights exceed per-node capacity even fully split")
        sd = share_divisor(cand_plan.lm, cand_plan.wr)
        new_wr = max(1, math.ceil(cand_plan.lm.n_bpq / (sd + 1)))
        cand_plan.wr = new_wr
        cand_plan.size_bytes = stored_weight_bytes(
            graph.layer(cand_plan.layer_id), cand_plan.lm, new_wr)

    best = None
    for label in ("BCHW", "BHWC", "BCHW[C8]"):
        dl = parse_layout(label)
        layouts = {lid: (dl, dl) for sp in seg_plans for lid in sp.layer_plans}
        lat, en, per_layer = evaluate_scheme(graph, seg_plans, params, cons, mesh,
                                             layouts, cache, method="greedy")
        if best is None or (lat, en, label) < best[:3]:
            best = (lat, en, label, layouts)
    _, _, label, layouts = best

    lat, en, per_layer = evaluate_scheme(graph, seg_plans, params, cons, mesh,
                                         layouts, cache, method="ilp",
                                         exact_limit=exact_limit, seed=seed)
    history = [{"iteration": 0, "latency_cycles": lat, "energy_pj": en,
                "edp": lat * en, "layout": label}]
    return MappingResult(params=params, segments=seg_plans, layouts=layouts,
                         latency_cycles=lat, energy_pj=en, per_layer=per_layer,
                         history=history)
