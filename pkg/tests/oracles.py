"""Independent reference implementations the tests check the package against.

Everything here is deliberately written from the model definitions rather
than from the package sources: plain-Python address replay for DRAM bursts,
a dict-based XY router for link loads, joint enumeration over ring orders,
a loop-interpreter for the tiling traffic argmin, and a direct enumeration
of the capacity-budgeted selection problem. Slow is fine; independent is
the point.
"""

import itertools
import math


# ---- data layout address replay ----

def layout_address_fn(dims, layout):
    """(b, c, h, w) -> linear element address under the given layout.

    Derived directly from the layout definition as a mixed-radix number:
    the order string gives the digit sequence outer-to-inner; a grouped dim
    contributes its major digit in place and its lane digit innermost.
    """
    b_, c_, h_, w_ = dims
    size = {"B": b_, "C": c_, "H": h_, "W": w_}
    if layout.group_dim == "none":
        names = list(layout.order)
        exts = [size[n] for n in names]

        def at(b, c, h, w):
            vals = {"B": b, "C": c, "H": h, "W": w}
            a = 0
            for n, e in zip(names, exts):
                a = a * e + vals[n]
            return a

        return at

    g = layout.group_factor
    d = layout.group_dim
    names = []
    exts = []
    for n in layout.order:
        if n == d:
            names.append("major")
            exts.append(-(-size[n] // g))
        else:
            names.append(n)
            exts.append(size[n])

    def at(b, c, h, w):
        vals = {"B": b, "C": c, "H": h, "W": w}
        a = 0
        for n, e in zip(names, exts):
            a = a * e + (vals[d] // g if n == "major" else vals[n])
        return a * g + vals[d] % g

    return at


def footprint_addresses(fp, layout):
    """All element addresses of a footprint, unsorted."""
    at = layout_address_fn(fp.dims, layout)
    (ob, oc, oh, ow), (eb, ec, eh, ew) = fp.origin, fp.extent
    return [at(b, c, h, w)
            for b in range(ob, ob + eb)
            for c in range(oc, oc + ec)
            for h in range(oh, oh + eh)
            for w in range(ow, ow + ew)]


def replay_access_cost(addrs, elem_bits, port_bits, row_bytes_eff, gap=1):
    """Replay a fetch of the given element addresses; count words and rows.

    Consecutive sorted addresses more than `gap` holes apart start a new
    burst; holes up to `gap` wide are read through. Each burst fetches every
    aligned port word it overlaps (counted by literal enumeration). A row
    stays open across bursts until the walk enters a different row.
    """
    addrs = sorted(set(addrs))
    port_elems = max(1, port_bits // elem_bits)
    row_bits = row_bytes_eff * 8
    bursts = []
    s = prev = addrs[0]
    for a in addrs[1:]:
        if a - prev > gap + 1:
            bursts.append((s, prev + 1))
            s = a
        prev = a
    bursts.append((s, prev + 1))

    words = 0
    acts = 0
    open_row = -1
    for lo, hi in bursts:
        words += len({x // port_elems for x in range(lo, hi)})
        r0 = lo * elem_bits // row_bits
        r1 = (hi * elem_bits - 1) // row_bits
        for r in range(r0, r1 + 1):
            if r != open_row:
                acts += 1
                open_row = r
    return words, acts


# ---- XY routing and ring all-gather loads ----

def xy_links(src, dst):
    """Directed (node, node) hops, column index settled first."""
    r, c = src
    links = []
    while c != dst[1]:
        nc = c + (1 if dst[1] > c else -1)
        links.append(((r, c), (r, nc)))
        c = nc
    while r != dst[0]:
        nr = r + (1 if dst[0] > r else -1)
        links.append(((r, c), (nr, c)))
        r = nr
    return links


def ring_link_loads(orders_chunks):
    """Per directed link bits for ring all-gathers given as (order, chunk)."""
    loads = {}
    for order, chunk in orders_chunks:
        m = len(order)
        for i in range(m):
            for lk in xy_links(order[i], order[(i + 1) % m]):
                loads[lk] = loads.get(lk, 0.0) + (m - 1) * chunk
    return loads


def min_max_load_enumeration(sets):
    """Exact min over all joint cycle orders of the worst directed link load.

    First member of each set is pinned (cycles are rotation invariant).
    Returns (best_max_load, best_orders).
    """
    per_set = []
    for s in sets:
        mem = tuple(sorted(s.members))
        per_set.append([(mem[0],) + p for p in itertools.permutations(mem[1:])])
    best = (math.inf, None)
    for combo in itertools.product(*per_set):
        loads = ring_link_loads([(o, s.chunk_bits) for o, s in zip(combo, sets)])
        worst = max(loads.values()) if loads else 0.0
        if worst < best[0]:
            best = (worst, combo)
    return best


# ---- tiling traffic ----

def _pow2_tiles(dim):
    out = set()
    n = 1
    while True:
        t = -(-dim // n)
        out.add(t)
        if t == 1:
            break
        n *= 2
    return sorted(out)


def _halo_sum(dim_out, tile, stride, window):
    """Input extent fetched across all tiles of one output dim, by loop."""
    total = 0
    at = 0
    while at < dim_out:
        size = min(tile, dim_out - at)
        total += (size - 1) * stride + window
        at += size
    return total


def traffic_read_min(layer, ibuf, wbuf, obuf):
    """Minimum (ifmap+weight) read bytes over the power-of-two tile grid.

    Returns None when no tile candidate fits the buffers. Mirrors the
    documented traffic model: resident tensors are read once; tiled ifmaps
    charge the halo footprint re-read per K tile when C is tiled; streamed
    weights re-read once per output tile.
    """
    data = layer.data_width_bits / 8
    psum = layer.psum_width_bits / 8
    ifmap_bytes = layer.ifmap_bits / 8
    weight_bytes = layer.weight_bits / 8
    ifmap_resident = ifmap_bytes <= ibuf
    weights_resident = weight_bytes <= wbuf

    best = None
    for bt in _pow2_tiles(layer.B):
        for kt in _pow2_tiles(layer.K):
            for ct in _pow2_tiles(layer.C):
                for pt in _pow2_tiles(layer.P):
                    for qt in _pow2_tiles(layer.Q):
                        ht = (pt - 1) * layer.stride_h + layer.HK
                        wt = (qt - 1) * layer.stride_w + layer.WK
                        if bt * kt * pt * qt * psum > obuf:
                            continue
                        if kt * ct * layer.HK * layer.WK * data > wbuf:
                            continue
                        if not ifmap_resident and bt * ct * ht * wt * data > ibuf:
                            continue
                        if ifmap_resident:
                            reads = ifmap_bytes + weight_bytes
                        else:
                            n_k = -(-layer.K // kt)
                            n_c = -(-layer.C // ct)
                            halo = (layer.B * layer.C
                                    * _halo_sum(layer.P, pt, layer.stride_h, layer.HK)
                                    * _halo_sum(layer.Q, qt, layer.stride_w, layer.WK)
                                    * data)
                            reads = halo * (n_k if n_c > 1 else 1)
                            if weights_resident:
                                reads += weight_bytes
                            else:
                                n_b = -(-layer.B // bt)
                                n_p = -(-layer.P // pt)
                                n_q = -(-layer.Q // qt)
                                reads += weight_bytes * n_b * n_p * n_q
                        if best is None or reads < best:
                            best = reads
    return best


# ---- capacity-budgeted selection ----

def brute_force_select(spaces, cap):
    """Direct enumeration of the segment/SM/candidate selection problem.

    Within a segment the regions run in parallel: a joint choice costs the
    max over regions of (base latency + sum of layer latencies) and stores
    the max over regions of the summed quanta. Budgets add across segments.
    Returns the optimal total latency, or None when nothing fits `cap`.
    """
    curves = []
    for space in spaces:
        curve = [math.inf] * (cap + 1)
        for smsp in space.sms:
            layers = [(ri, lsp) for ri, rsp in enumerate(smsp.regions)
                      for lsp in rsp.layers]
            for combo in itertools.product(*[range(len(lsp.cands))
                                             for _, lsp in layers]):
                size_r = [0] * len(smsp.regions)
                lat_r = [rsp.base_latency_cycles for rsp in smsp.regions]
                for (ri, lsp), ci in zip(layers, combo):
                    c = lsp.cands[ci]
                    size_r[ri] += int(c.size_quanta)
                    lat_r[ri] += c.latency_cycles
                need = max(size_r) if size_r else 0
                lat = max(lat_r) if lat_r else 0.0
                if need > cap:
                    continue
                for b in range(need, cap + 1):
                    if lat < curve[b]:
                        curve[b] = lat
        curves.append(curve)

    total = [0.0] * (cap + 1)
    for curve in curves:
        nxt = [math.inf] * (cap + 1)
        for b in range(cap + 1):
            for used in range(b + 1):
                v = total[b - used] + curve[used]
                if v < nxt[b]:
                    nxt[b] = v
        total = nxt
    return None if math.isinf(total[cap]) else total[cap]
