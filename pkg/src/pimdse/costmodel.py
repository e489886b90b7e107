"""Analytical per-layer cost model: PE time, DRAM traffic and access cost.

Model assumptions, in one place:

* Compute. The PE array maps output channels on rows and input channels on
  columns; everything else is temporal. Cycles are the product of the
  ceiling-divided channel dims and the remaining loop extents (padding from
  ceiling division is charged as real work).

* DRAM traffic. An output-stationary tiling is chosen per layer: the psum
  tile lives in the output buffer while input channels accumulate, weight
  tiles stream through the weight buffer, ifmap tiles through the input
  buffer. The tile is the total-traffic argmin over a power-of-two grid of
  per-loop tile counts, so enlarging any buffer can only enlarge the
  feasible candidate set and never increases traffic. Weights are re-read
  once per output tile group unless they fit the weight buffer or the whole
  ifmap is buffer-resident (then the loop order flips weight-major and each
  filter is read once). Ifmaps are re-read per K tile when the channel dim
  is tiled. Tiled reads charge the halo footprint (padding read as real
  data); resident reads charge the true tensor once. Psum spill is not
  modeled; the output buffer constraint enforces the accumulation tile.

* DRAM access cost. Element addresses follow the tensor's layout (order
  BCHW or BHWC, optionally with a grouped dim moved innermost, e.g.
  BCHW[C2]). A fetch stream issues port-width-aligned bursts; a
  single-element hole inside a stream is read through, a larger hole starts
  a new burst. Row activations are charged whenever the stream crosses into
  a DRAM row that is not currently open (row size = row_bytes per bank x
  banks per node). Weights are pre-arranged to the access pattern, so they
  stream sequentially regardless of layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .arch import HwConstraints, HwParams, NodeProps, derive_node_props
from .workload import Layer

LOOPS = ("B", "P", "Q", "K", "C")


class InfeasibleTiling(ValueError):
    """Buffers cannot hold even a minimal tile of this layer."""


# ---- data layout patterns ----


@dataclass(frozen=True)
class DataLayout:
    order: str = "BCHW"  # "BCHW" | "BHWC"
    group_dim: str = "none"  # "none" | "C" | "W"
    group_factor: int = 1

    def __post_init__(self):
        if self.order not in ("BCHW", "BHWC"):
            raise ValueError(f"unknown layout order {self.order!r}")
        if self.group_dim not in ("none", "C", "W"):
            raise ValueError(f"unknown group dim {self.group_dim!r}")
        if (self.group_factor == 1) != (self.group_dim == "none"):
            raise ValueError("group_factor must be 1 exactly when group_dim is none")
        if self.group_factor < 1:
            raise ValueError("group_factor must be >= 1")

    @property
    def label(self) -> str:
        if self.group_dim == "none":
            return self.order
        return f"{self.order}[{self.group_dim}{self.group_factor}]"


def parse_layout(text: str) -> DataLayout:
    text = text.strip()
    if "[" in text:
        order, rest = text.split("[", 1)
        if not rest.endswith("]"):
            raise ValueError(f"malformed layout {text!r}")
        body = rest[:-1]
        dim, factor = body[0], body[1:]
        return DataLayout(order=order, group_dim=dim, group_factor=int(factor))
    return DataLayout(order=text)


def layout_choices(node: NodeProps, data_width_bits: int,
                   max_factor: int = 16) -> list[DataLayout]:
    """Candidate layouts for one tensor: plain orders plus grouped variants.

    Group factors are powers of two; a group must fit within one DRAM port
    word (group_factor * data_width <= dram_width).
    """
    cap = max(1, node.dram_width_bits // data_width_bits)
    out = [DataLayout("BCHW"), DataLayout("BHWC")]
    g = 2
    while g <= min(cap, max_factor):
        out.append(DataLayout("BCHW", "C", g))
        out.append(DataLayout("BHWC", "W", g))
        g *= 2
    return out


# ---- address streams and burst counting ----


@dataclass(frozen=True)
class Footprint:
    """A rectangular sub-block of a (B, C, H, W) tensor, fetched as a unit."""

    dims: tuple[int, int, int, int]
    origin: tuple[int, int, int, int]
    extent: tuple[int, int, int, int]
    elem_bits: int
    fetches: float = 1.0

    def __post_init__(self):
        for d, o, e in zip(self.dims, self.origin, self.extent):
            if not (0 <= o and o + e <= d and e >= 1):
                raise ValueError(f"footprint {self.origin}+{self.extent} outside dims {self.dims}")


def _axis_layout(dims, layout: DataLayout):
    """Layout axes as (name, size, selected) outer-to-inner with strides."""
    b, c, h, w = dims
    sizes = {"B": b, "C": c, "H": h, "W": w}
    order = list(layout.order)
    axes = []
    if layout.group_dim == "none":
        axes = [(name, sizes[name]) for name in order]
    else:
        g = layout.group_factor
        d = layout.group_dim
        for name in order:
            if name == d:
                axes.append((name + "g", -(-sizes[name] // g)))
            else:
                axes.append((name, sizes[name]))
        axes.append((d + "l", g))
    # strides, innermost has 1
    strides = {}
    acc = 1
    for name, size in reversed(axes):
        strides[name] = acc
        acc *= size
    return axes, strides


def footprint_runs(fp: Footprint, layout: DataLayout) -> tuple[np.ndarray, np.ndarray]:
    """Maximal contiguous element-address runs of a footprint, ascending.

    Returns (starts, lengths) arrays. Grouped layouts split the grouped dim
    into (major, lane); the footprint's slice of that dim covers whole lane
    ranges per major, which stay contiguous runs.
    """
    axes, strides = _axis_layout(fp.dims, layout)
    sel = {"B": (fp.origin[0], fp.extent[0]), "C": (fp.origin[1], fp.extent[1]),
           "H": (fp.origin[2], fp.extent[2]), "W": (fp.origin[3], fp.extent[3])}

    if layout.group_dim == "none":
        outer = [a for a, _ in axes[:-1]]
        inner = axes[-1][0]
        off_sets = []
        for name in outer:
            o, e = sel[name]
            off_sets.append(np.arange(o, o + e) * strides[name])
        base = np.zeros(1, dtype=np.int64)
        for offs in off_sets:
            base = (base[:, None] + offs[None, :]).ravel()
        o, e = sel[inner]
        starts = base + o * strides[inner]
        lens = np.full(starts.shape, e, dtype=np.int64)
    else:
        g = layout.group_factor
        d = layout.group_dim
        o, e = sel[d]
        # per grouped-major lane window: (major, lane_start, lane_len)
        pieces = []
        m = o // g
        while m * g < o + e:
            lo = max(o, m * g)
            hi = min(o + e, (m + 1) * g)
            pieces.append((m, lo - m * g, hi - lo))
            m += 1
        outer = [a for a, _ in axes[:-1]]  # includes the grouped major axis
        starts_list = []
        lens_list = []
        for major, lane0, lane_len in pieces:
            base = np.zeros(1, dtype=np.int64)
            for name in outer:
                if name == d + "g":
                    base = base + major * strides[name]
                else:
                    oo, ee = sel[name]
                    base = (base[:, None] + (np.arange(oo, oo + ee) * strides[name])[None, :]).ravel()
            starts_list.append(base + lane0)
            lens_list.append(np.full(base.shape, lane_len, dtype=np.int64))
        starts = np.concatenate(starts_list)
        lens = np.concatenate(lens_list)

    idx = np.argsort(starts, kind="stable")
    starts = starts[idx]
    lens = lens[idx]
    # merge runs that touch (full-extent inner dims chain into longer runs)
    ends = starts + lens
    breaks = np.nonzero(starts[1:] > ends[:-1])[0]
    seg_start = np.concatenate(([0], breaks + 1))
    seg_end = np.concatenate((breaks, [len(starts) - 1]))
    merged_starts = starts[seg_start]
    merged_ends = ends[seg_end]
    return merged_starts, merged_ends - merged_starts


def stream_access_cost(fp: Footprint, layout: DataLayout, port_bits: int,
                       row_bytes_eff: int, read_through_gap: int = 1) -> tuple[int, int]:
    """Aligned-burst and row-activation counts for one footprint fetch.

    Runs separated by at most `read_through_gap` elements are fetched
    through as one stream (the wasted elements ride along in the burst);
    larger gaps start a new burst. Bursts are aligned to the port width.
    """
    starts, lens = footprint_runs(fp, layout)
    ends = starts + lens
    port_elems = max(1, port_bits // fp.elem_bits)
    # coalesce across small gaps
    gaps = starts[1:] - ends[:-1]
    breaks = np.nonzero(gaps > read_through_gap)[0]
    s_idx = np.concatenate(([0], breaks + 1))
    e_idx = np.concatenate((breaks, [len(starts) - 1]))
    s = starts[s_idx]
    e = ends[e_idx]
    accesses = int(np.sum((e - 1) // port_elems - s // port_elems + 1))

    row_elems = row_bytes_eff * 8 // fp.elem_bits
    if row_elems < 1:
        row_elems = 1
    row_s = s * fp.elem_bits // (row_bytes_eff * 8)
    row_e = (e * fp.elem_bits - 1) // (row_bytes_eff * 8)
    acts = int(row_e[0] - row_s[0] + 1)
    for i in range(1, len(s)):
        lo = row_s[i]
        if lo == row_e[i - 1]:
            lo += 1
        acts += int(max(0, row_e[i] - lo + 1))
    return accesses, acts


# ---- tiling and DRAM traffic ----


@dataclass(frozen=True)
class TilePlan:
    b: int
    k: int
    c: int
    p: int
    q: int
    n_b: int
    n_k: int
    n_c: int
    n_p: int
    n_q: int
    ifmap_resident: bool
    weights_resident: bool


@dataclass(frozen=True)
class TrafficReport:
    ifmap_read_bytes: float
    weight_read_bytes: float
    ofmap_write_bytes: float
    weight_write_bytes: float
    plan: TilePlan

    @property
    def total_bytes(self) -> float:
        return (self.ifmap_read_bytes + self.weight_read_bytes
                + self.ofmap_write_bytes + self.weight_write_bytes)


def _pow2_tile_sizes(dim: int) -> np.ndarray:
    """Distinct tile sizes from power-of-two tile counts, descending."""
    sizes = []
    n = 1
    while True:
        sizes.append(-(-dim // n))
        if sizes[-1] == 1:
            break
        n *= 2
    return np.array(sorted(set(sizes), reverse=True), dtype=np.int64)


def _halo_extent(dim_out: int, tile: int, stride: int, window: int) -> np.ndarray:
    """Total input rows/cols fetched across a tiled output dim (vectorized)."""
    tile = np.asarray(tile, dtype=np.int64)
    n = -(-dim_out // tile)
    last = dim_out - (n - 1) * tile
    full = (tile - 1) * stride + window
    tail = (last - 1) * stride + window
    return (n - 1) * full + tail


def dram_traffic(layer: Layer, params: HwParams, cons: HwConstraints,
                 wr_share_fraction: float = 1.0) -> TrafficReport:
    """Bytes moved between DRAM and the node buffers for one part-layer.

    wr_share_fraction is the fraction of this node's weights initially
    resident in local DRAM; the gathered remainder is written back once
    before compute. Raises InfeasibleTiling when no tile fits the buffers.
    """
    data_bytes = layer.data_width_bits / 8
    psum_bytes = layer.psum_width_bits / 8
    ibuf = params.ibuf_kib * 1024
    wbuf = params.wbuf_kib * 1024
    obuf = params.obuf_kib * 1024

    B, K, C, P, Q = layer.B, layer.K, layer.C, layer.P, layer.Q
    HK, WK, sh, sw = layer.HK, layer.WK, layer.stride_h, layer.stride_w

    ifmap_bytes_true = layer.ifmap_bits / 8
    weight_bytes = layer.weight_bits / 8
    ofmap_bytes = layer.ofmap_bits / 8
    ifmap_resident = ifmap_bytes_true <= ibuf
    weights_resident = weight_bytes <= wbuf

    bs = _pow2_tile_sizes(B)
    ks = _pow2_tile_sizes(K)
    cs = _pow2_tile_sizes(C)
    ps = _pow2_tile_sizes(P)
    qs = _pow2_tile_sizes(Q)
    bt, kt, ct, pt, qt = [a.ravel() for a in np.broadcast_arrays(
        bs[:, None, None, None, None], ks[None, :, None, None, None],
        cs[None, None, :, None, None], ps[None, None, None, :, None],
        qs[None, None, None, None, :])]

    ht = (pt - 1) * sh + HK
    wt = (qt - 1) * sw + WK
    ok_psum = bt * kt * pt * qt * psum_bytes <= obuf
    ok_w = kt * ct * HK * WK * data_bytes <= wbuf
    ok_i = ifmap_resident | (bt * ct * ht * wt * data_bytes <= ibuf)
    feas = ok_psum & ok_w & ok_i
    if not feas.any():
        raise InfeasibleTiling(
            f"layer '{layer.id}': buffers (i={params.ibuf_kib}K w={params.wbuf_kib}K "
            f"o={params.obuf_kib}K) cannot hold a minimal tile")

    n_b = -(-B // bt)
    n_k = -(-K // kt)
    n_c = -(-C // ct)
    n_p = -(-P // pt)
    n_q = -(-Q // qt)

    halo_rows = _halo_extent(P, pt, sh, HK)
    halo_cols = _halo_extent(Q, qt, sw, WK)
    halo_bytes = B * C * halo_rows * halo_cols * data_bytes

    if ifmap_resident:
        if_read = np.full(bt.shape, ifmap_bytes_true)
        w_read = np.full(bt.shape, weight_bytes)
    else:
        if_factor = np.where(n_c > 1, n_k, 1)
        if_read = halo_bytes * if_factor
        w_read = weight_bytes * np.where(weights_resident, 1, n_b * n_p * n_q)

    total = if_read + w_read
    total = np.where(feas, total, np.inf)
    best = int(np.argmin(total))  # ravel order is the deterministic tie-break

    plan = TilePlan(
        b=int(bt[best]), k=int(kt[best]), c=int(ct[best]),
        p=int(pt[best]), q=int(qt[best]),
        n_b=int(n_b[best]), n_k=int(n_k[best]), n_c=int(n_c[best]),
        n_p=int(n_p[best]), n_q=int(n_q[best]),
        ifmap_resident=bool(ifmap_resident),
        weights_resident=bool(weights_resident),
    )
    share = min(max(wr_share_fraction, 0.0), 1.0)
    return TrafficReport(
        ifmap_read_bytes=float(if_read[best]),
        weight_read_bytes=float(w_read[best]),
        ofmap_write_bytes=float(ofmap_bytes),
        weight_write_bytes=float((1.0 - share) * weight_bytes),
        plan=plan,
    )


# ---- compute latency ----


def compute_latency(layer: Layer, params: HwParams) -> int:
    """PE-array cycles for one part-layer; K on rows, C on columns."""
    if layer.kind == "aux":
        return 0
    k_steps = -(-layer.K // params.pea_row)
    c_steps = -(-layer.C // params.pea_col)
    return k_steps * c_steps * layer.B * layer.P * layer.Q * layer.HK * layer.WK


# ---- DRAM access cost ----


@dataclass(frozen=True)
class AccessGeometry:
    """Streams a part-layer drives against its node's DRAM."""

    ifmap: Footprint | None = None
    ofmap: Footprint | None = None
    weight_read_bytes: float = 0.0
    weight_write_bytes: float = 0.0


@dataclass(frozen=True)
class AccessReport:
    dram_accesses: float
    row_activations: float
    cycles: float
    pj: float


def _sequential_cost(bytes_amount: float, node: NodeProps, cons: HwConstraints):
    if bytes_amount <= 0:
        return 0.0, 0.0
    accesses = math.ceil(bytes_amount * 8 / node.dram_width_bits)
    rows = math.ceil(bytes_amount / (cons.row_bytes * node.banks_per_node))
    return float(accesses), float(rows)


def dram_access_cost(bytes_by_tensor: dict, dl_in: DataLayout, dl_out: DataLayout,
                     geometry: AccessGeometry, node: NodeProps,
                     cons: HwConstraints) -> AccessReport:
    """Port-quantized access count, row activations, cycles and energy.

    Cycles charge one cycle per access plus t_rc per row activation; energy
    charges e_dram per transferred bit plus e_act per activation.
    """
    row_eff = cons.row_bytes * node.banks_per_node
    accesses = 0.0
    acts = 0.0
    if geometry.ifmap is not None:
        a, r = stream_access_cost(geometry.ifmap, dl_in, node.dram_width_bits, row_eff)
        accesses += a * geometry.ifmap.fetches
        acts += r * geometry.ifmap.fetches
    if geometry.ofmap is not None:
        a, r = stream_access_cost(geometry.ofmap, dl_out, node.dram_width_bits, row_eff)
        accesses += a * geometry.ofmap.fetches
        acts += r * geometry.ofmap.fetches
    a, r = _sequential_cost(geometry.weight_read_bytes, node, cons)
    accesses += a
    acts += r
    a, r = _sequential_cost(geometry.weight_write_bytes, node, cons)
    accesses += a
    acts += r

    total_bytes = float(sum(bytes_by_tensor.values()))
    cycles = accesses + acts * cons.t_rc_cycles
    pj = total_bytes * 8 * cons.e_dram_pj_per_bit + acts * cons.e_act_pj
    return AccessReport(dram_accesses=accesses, row_activations=acts,
                        cycles=cycles, pj=pj)


def estimate_access_cost(bytes_by_tensor: dict, node: NodeProps,
                         cons: HwConstraints) -> AccessReport:
    """Layout-blind estimate used before any data layout has been chosen."""
    total_bytes = float(sum(bytes_by_tensor.values()))
    accesses = math.ceil(total_bytes * 8 / node.dram_width_bits)
    acts = math.ceil(total_bytes / (cons.row_bytes * node.banks_per_node))
    cycles = accesses + acts * cons.t_rc_cycles
    pj = total_bytes * 8 * cons.e_dram_pj_per_bit + acts * cons.e_act_pj
    return AccessReport(dram_accesses=float(accesses), row_activations=float(acts),
                        cycles=float(cycles), pj=pj)


# ---- part-layer construction and aggregation ----


@dataclass(frozen=True)
class CostReport:
    latency_cycles: float
    compute_cycles: float
    dram_cycles: float
    noc_cycles: float
    energy_pj: dict
    dram_accesses: float
    row_activations: float

    @property
    def total_energy_pj(self) -> float:
        return float(sum(self.energy_pj.values()))


def part_layer(layer: Layer, parts: dict) -> Layer:
    """Ceiling-divided per-node slice of a layer; all nodes charged alike.

    Parts lose the padding attribute: interior slices read halos from real
    neighbours, so the slice ifmap is (P_p-1)*stride + HK on its own.
    """
    def cut(v, name):
        return -(-v // max(1, parts.get(name, 1)))

    return replace(
        layer,
        B=cut(layer.B, "B"), K=cut(layer.K, "K"), C=cut(layer.C, "C"),
        P=cut(layer.P, "P"), Q=cut(layer.Q, "Q"),
        pad_h=0, pad_w=0,
    )


def tile_footprints(part: Layer, plan: TilePlan, traffic: TrafficReport):
    """Ifmap/ofmap stream footprints implied by a tile plan."""
    if_dims = (part.B, part.C, part.H, part.W)
    if plan.ifmap_resident:
        if_fp = Footprint(if_dims, (0, 0, 0, 0), if_dims, part.data_width_bits, fetches=1.0)
    else:
        ext = (min(plan.b, part.B), min(plan.c, part.C),
               min((plan.p - 1) * part.stride_h + part.HK, part.H),
               min((plan.q - 1) * part.stride_w + part.WK, part.W))
        if_fp = Footprint(if_dims, (0, 0, 0, 0), ext, part.data_width_bits)
        tile_bytes = ext[0] * ext[1] * ext[2] * ext[3] * part.data_width_bits / 8
        fetches = traffic.ifmap_read_bytes / tile_bytes if tile_bytes else 0.0
        if_fp = replace(if_fp, fetches=fetches)

    of_dims = (part.B, part.K, part.P, part.Q)
    ext = (min(plan.b, part.B), min(plan.k, part.K), min(plan.p, part.P), min(plan.q, part.Q))
    of_fp = Footprint(of_dims, (0, 0, 0, 0), ext, part.data_width_bits)
    tile_bytes = ext[0] * ext[1] * ext[2] * ext[3] * part.data_width_bits / 8
    fetches = traffic.ofmap_write_bytes / tile_bytes if tile_bytes else 0.0
    of_fp = replace(of_fp, fetches=fetches)
    return if_fp, of_fp


def aux_cost(layer: Layer, n_nodes: int, node: NodeProps, cons: HwConstraints) -> CostReport:
    """Aux layers: zero PE time, sequential DRAM traffic for their operands."""
    in_bytes = layer.ifmap_bits / 8 / n_nodes
    out_bytes = layer.ofmap_bits / 8 / n_nodes
    acc_r, rows_r = _sequential_cost(in_bytes, node, cons)
    acc_w, rows_w = _sequential_cost(out_bytes, node, cons)
    accesses = acc_r + acc_w
    acts = rows_r + rows_w
    cycles = accesses + acts * cons.t_rc_cycles
    total_bytes = in_bytes + out_bytes
    dram_pj = (total_bytes * 8 * cons.e_dram_pj_per_bit + acts * cons.e_act_pj) * n_nodes
    sram_pj = total_bytes * cons.e_sram_pj_per_byte * n_nodes
    return CostReport(
        latency_cycles=cycles, compute_cycles=0.0, dram_cycles=cycles, noc_cycles=0.0,
        energy_pj={"pe": 0.0, "sram": sram_pj, "dram": dram_pj, "noc": 0.0},
        dram_accesses=accesses * n_nodes, row_activations=acts * n_nodes,
    )


def node_cost(part: Layer, params: HwParams, cons: HwConstraints,
              wr_share_fraction: float, dl_in: DataLayout | None,
              dl_out: DataLayout | None) -> tuple:
    """Per-node (compute_cycles, dram AccessReport, traffic) for a part-layer.

    Passing dl_in=None scores the DRAM side with the layout-blind estimate.
    """
    node = derive_node_props(params, cons)
    comp = compute_latency(part, params)
    traffic = dram_traffic(part, params, cons, wr_share_fraction)
    by_tensor = {
        "ifmap": traffic.ifmap_read_bytes,
        "weight": traffic.weight_read_bytes + traffic.weight_write_bytes,
        "ofmap": traffic.ofmap_write_bytes,
    }
    if dl_in is None or dl_out is None:
        acc = estimate_access_cost(by_tensor, node, cons)
    else:
        if_fp, of_fp = tile_footprints(part, traffic.plan, traffic)
        geom = AccessGeometry(
            ifmap=if_fp, ofmap=of_fp,
            weight_read_bytes=traffic.weight_read_bytes,
            weight_write_bytes=traffic.weight_write_bytes,
        )
        acc = dram_access_cost(by_tensor, dl_in, dl_out, geom, node, cons)
    return comp, acc, traffic


def combine_layer_cost(part: Layer, n_nodes: int, comp_cycles: float,
                       acc: AccessReport, traffic: TrafficReport,
                       noc_cycles: float, noc_pj: float,
                       cons: HwConstraints) -> CostReport:
    """Fold per-node compute/DRAM and the sharing prologue into one report.

    Latency overlaps compute with DRAM streaming (max of the two) after the
    sharing prologue completes; energy sums every node.
    """
    latency = noc_cycles + max(comp_cycles, acc.cycles)
    macs = part.macs
    pe_pj = macs * cons.e_mac_pj * n_nodes
    sram_bytes = traffic.total_bytes + macs * 2 * part.data_width_bits / 8
    sram_pj = sram_bytes * cons.e_sram_pj_per_byte * n_nodes
    dram_pj = acc.pj * n_nodes
    return CostReport(
        latency_cycles=latency,
        compute_cycles=comp_cycles,
        dram_cycles=acc.cycles,
        noc_cycles=noc_cycles,
        energy_pj={"pe": pe_pj, "sram": sram_pj, "dram": dram_pj, "noc": noc_pj},
        dram_accesses=acc.dram_accesses * n_nodes,
        row_activations=acc.row_activations * n_nodes,
    )


def total_cost(per_dnn: list[tuple[float, float, float]], alpha: float, beta: float) -> float:
    """Design-goal objective: sum over DNNs of energy^alpha * latency^beta * gamma.

    per_dnn holds (energy_pj, latency_cycles, gamma) triples.
    """
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be non-negative")
    out = 0.0
    for energy, latency, gamma in per_dnn:
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        out += (energy ** alpha) * (latency ** beta) * gamma
    return out
