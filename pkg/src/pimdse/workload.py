"""DNN workload description and graph segmentation.

A workload is a DAG of layers. Compute layers (``conv``, ``matmul``) occupy
the PE arrays; auxiliary layers (``aux``: pooling, elementwise add, concat,
activation blocks fused out of the compute path) cost DRAM traffic for their
operands but no PE time. Matrix multiplication is expressed in convolution
form with a 1x1 window and 1x1 output map, so one loop nest covers both.

Segmentation slices the graph into serially executed pieces. Every layer
through which all compute paths pass becomes its own single-branch segment;
the independent chains between two such synchronization layers form one
multi-branch segment that runs its branches in parallel on disjoint node
regions. Aux layers ride along as epilogues of the branch that produces
their input.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

KINDS = ("conv", "matmul", "aux")


class WorkloadError(ValueError):
    pass


@dataclass(frozen=True)
class Layer:
    id: str
    kind: str
    B: int
    K: int
    C: int
    P: int
    Q: int
    HK: int = 1
    WK: int = 1
    stride_h: int = 1
    stride_w: int = 1
    pad_h: int = 0
    pad_w: int = 0
    data_width_bits: int = 16
    psum_width_bits: int = 32
    preds: tuple[str, ...] = ()

    @property
    def H(self) -> int:
        """Input rows covered by the output sweep (pre-padding excluded)."""
        return (self.P - 1) * self.stride_h + self.HK - 2 * self.pad_h

    @property
    def W(self) -> int:
        return (self.Q - 1) * self.stride_w + self.WK - 2 * self.pad_w

    @property
    def macs(self) -> int:
        if self.kind == "aux":
            return 0
        return self.B * self.K * self.C * self.P * self.Q * self.HK * self.WK

    @property
    def ifmap_bits(self) -> int:
        return self.B * self.C * self.H * self.W * self.data_width_bits

    @property
    def weight_bits(self) -> int:
        if self.kind == "aux":
            return 0
        return self.K * self.C * self.HK * self.WK * self.data_width_bits

    @property
    def ofmap_bits(self) -> int:
        return self.B * self.K * self.P * self.Q * self.data_width_bits


@dataclass
class Branch:
    """One serial chain of compute layers plus trailing aux epilogues."""

    layers: list[str]
    epilogues: list[str] = field(default_factory=list)


@dataclass
class Segment:
    branches: list[Branch]

    def layer_ids(self) -> list[str]:
        out = []
        for br in self.branches:
            out.extend(br.layers)
            out.extend(br.epilogues)
        return out


@dataclass
class DnnGraph:
    name: str
    gamma: float
    layers: dict[str, Layer]

    def layer(self, lid: str) -> Layer:
        return self.layers[lid]

    def succs(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {lid: [] for lid in self.layers}
        for lid, ly in self.layers.items():
            for p in ly.preds:
                out[p].append(lid)
        return out

    def topo_order(self) -> list[str]:
        indeg = {lid: len(ly.preds) for lid, ly in self.layers.items()}
        succs = self.succs()
        ready = [lid for lid, d in indeg.items() if d == 0]
        order: list[str] = []
        while ready:
            lid = ready.pop(0)
            order.append(lid)
            for s in succs[lid]:
                indeg[s] -= 1
                if indeg[s] == 0:
                    ready.append(s)
        if len(order) != len(self.layers):
            raise WorkloadError(f"dependency cycle in graph '{self.name}'")
        return order


def _as_pair(value, name: str) -> tuple[int, int]:
    if isinstance(value, int):
        return value, value
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return int(value[0]), int(value[1])
    raise WorkloadError(f"field '{name}' must be an int or [h, w] pair, got {value!r}")


def _validate_layer(ly: Layer) -> None:
    if ly.kind not in KINDS:
        raise WorkloadError(f"layer '{ly.id}': unknown kind '{ly.kind}'")
    for name in ("B", "K", "C", "P", "Q", "HK", "WK", "stride_h", "stride_w"):
        if getattr(ly, name) < 1:
            raise WorkloadError(f"layer '{ly.id}': field '{name}' must be >= 1")
    if min(ly.pad_h, ly.pad_w) < 0:
        raise WorkloadError(f"layer '{ly.id}': negative padding")
    if ly.kind == "matmul" and (ly.P, ly.Q, ly.HK, ly.WK) != (1, 1, 1, 1):
        raise WorkloadError(f"layer '{ly.id}': matmul requires P=Q=HK=WK=1")
    if ly.H < 1 or ly.W < 1:
        raise WorkloadError(f"layer '{ly.id}': derived ifmap {ly.H}x{ly.W} is empty")


def parse_dnn(text: str) -> DnnGraph:
    """Parse a workload JSON document into a validated DnnGraph.

    Schema: {"name": str, "gamma": float, "batch": int, "layers": [
    {"id", "kind", "K", "C", "P", "Q", "HK", "WK", "stride", "pad",
    "preds", "data_width_bits"}]}. HK/WK default to 1, stride to 1,
    pad to 0; stride and pad accept an int or an [h, w] pair.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise WorkloadError(f"invalid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise WorkloadError("top-level document must be an object")
    for req in ("name", "layers"):
        if req not in doc:
            raise WorkloadError(f"missing top-level field '{req}'")
    batch = int(doc.get("batch", 1))
    if batch < 1:
        raise WorkloadError("field 'batch' must be >= 1")
    gamma = float(doc.get("gamma", 1.0))
    if gamma <= 0:
        raise WorkloadError("field 'gamma' must be > 0")

    layers: dict[str, Layer] = {}
    for entry in doc["layers"]:
        if "id" not in entry:
            raise WorkloadError("layer entry missing field 'id'")
        lid = str(entry["id"])
        if lid in layers:
            raise WorkloadError(f"duplicate layer id '{lid}'")
        kind = str(entry.get("kind", ""))
        required = ("kind", "K", "C") if kind == "matmul" else ("kind", "K", "C", "P", "Q")
        for req in required:
            if req not in entry:
                raise WorkloadError(f"layer '{lid}': missing field '{req}'")
        sh, sw = _as_pair(entry.get("stride", 1), "stride")
        ph, pw = _as_pair(entry.get("pad", 0), "pad")
        ly = Layer(
            id=lid,
            kind=str(entry["kind"]),
            B=batch,
            K=int(entry["K"]),
            C=int(entry["C"]),
            P=int(entry.get("P", 1)),
            Q=int(entry.get("Q", 1)),
            HK=int(entry.get("HK", 1)),
            WK=int(entry.get("WK", 1)),
            stride_h=sh,
            stride_w=sw,
            pad_h=ph,
            pad_w=pw,
            data_width_bits=int(entry.get("data_width_bits", 16)),
            psum_width_bits=int(entry.get("psum_width_bits", 32)),
            preds=tuple(str(p) for p in entry.get("preds", [])),
        )
        _validate_layer(ly)
        layers[lid] = ly
    for lid, ly in layers.items():
        for p in ly.preds:
            if p not in layers:
                raise WorkloadError(f"layer '{lid}': unknown pred '{p}'")
    graph = DnnGraph(name=str(doc["name"]), gamma=gamma, layers=layers)
    graph.topo_order()  # raises on cycles
    if not any(ly.kind != "aux" for ly in layers.values()):
        raise WorkloadError("graph has no compute layers")
    return graph


# ---- segmentation ----


def _effective_edges(graph: DnnGraph) -> tuple[list[str], dict[str, set[str]]]:
    """Compute-layer DAG with aux layers contracted into edges."""
    succs = graph.succs()
    compute = [lid for lid in graph.topo_order() if graph.layer(lid).kind != "aux"]
    edges: dict[str, set[str]] = {lid: set() for lid in compute}
    for lid in compute:
        seen = set()
        stack = list(succs[lid])
        while stack:
            s = stack.pop()
            if s in seen:
                continue
            seen.add(s)
            if graph.layer(s).kind == "aux":
                stack.extend(succs[s])
            else:
                edges[lid].add(s)
    return compute, edges


def _reachability(nodes: list[str], edges: dict[str, set[str]]) -> dict[str, set[str]]:
    """Descendant sets, computed in reverse topological order."""
    desc: dict[str, set[str]] = {}
    for lid in reversed(nodes):
        d: set[str] = set()
        for s in edges[lid]:
            d.add(s)
            d |= desc[s]
        desc[lid] = d
    return desc


def _is_chain(nodes: list[str], edges: dict[str, set[str]]) -> bool:
    node_set = set(nodes)
    indeg = {n: 0 for n in nodes}
    outdeg = {n: 0 for n in nodes}
    for n in nodes:
        for s in edges[n] & node_set:
            outdeg[n] += 1
            indeg[s] += 1
    heads = [n for n in nodes if indeg[n] == 0]
    return (
        len(heads) == 1
        and all(v <= 1 for v in indeg.values())
        and all(v <= 1 for v in outdeg.values())
    )


def _chain_order(nodes: list[str], edges: dict[str, set[str]]) -> list[str]:
    node_set = set(nodes)
    indeg = {n: 0 for n in nodes}
    for n in nodes:
        for s in edges[n] & node_set:
            indeg[s] += 1
    cur = next(n for n in nodes if indeg[n] == 0)
    out = [cur]
    while True:
        nxt = [s for s in edges[cur] & node_set if s != cur]
        if not nxt:
            return out
        cur = nxt[0]
        out.append(cur)


def _components(nodes: list[str], edges: dict[str, set[str]]) -> list[list[str]]:
    node_set = set(nodes)
    pos = {n: i for i, n in enumerate(nodes)}
    adj: dict[str, set[str]] = {n: set() for n in nodes}
    for n in nodes:
        for s in edges[n] & node_set:
            adj[n].add(s)
            adj[s].add(n)
    seen: set[str] = set()
    comps = []
    for n in nodes:
        if n in seen:
            continue
        comp = []
        stack = [n]
        seen.add(n)
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        comps.append(sorted(comp, key=pos.get))
    return comps


def _segment_nodes(nodes: list[str], edges: dict[str, set[str]]) -> list[list[list[str]]]:
    """Return segments as lists of branch chains over compute-layer ids."""
    if not nodes:
        return []
    desc = _reachability(nodes, edges)
    anc: dict[str, set[str]] = {n: set() for n in nodes}
    for n in nodes:
        for d in desc[n]:
            anc[d].add(n)
    total = len(nodes)
    # synchronization layers are comparable to every other layer
    syncs = [n for n in nodes if len(desc[n]) + len(anc[n]) == total - 1]
    sync_set = set(syncs)

    segments: list[list[list[str]]] = []

    def emit_interval(interval: list[str]) -> None:
        if not interval:
            return
        comps = _components(interval, edges)
        if all(_is_chain(c, edges) for c in comps):
            segments.append([_chain_order(c, edges) for c in comps])
            return
        # nested branching: fall back to serializing each component
        if len(comps) == 1 and len(syncs) == 0 and len(interval) == len(nodes):
            # irreducible: one serial segment per layer
            for n in interval:
                segments.append([[n]])
            return
        for c in comps:
            sub_edges = {n: edges[n] & set(c) for n in c}
            segments.extend(_segment_nodes(c, sub_edges))

    pending: list[str] = []
    for n in nodes:
        if n in sync_set:
            emit_interval(pending)
            pending = []
            segments.append([[n]])
        else:
            pending.append(n)
    emit_interval(pending)
    return segments


def segment_dnn(graph: DnnGraph) -> list[Segment]:
    """Slice the graph into serially ordered segments of parallel branches.

    Every compute layer lands in exactly one branch of one segment. Aux
    layers become epilogues of the branch holding their most recent compute
    producer. Branches within a segment are ordered by the topological
    position of their first layer.
    """
    topo = graph.topo_order()
    pos = {lid: i for i, lid in enumerate(topo)}
    compute, edges = _effective_edges(graph)
    raw = _segment_nodes(compute, edges)

    segments = []
    for chains in raw:
        chains = sorted(chains, key=lambda ch: pos[ch[0]])
        segments.append(Segment(branches=[Branch(layers=list(ch)) for ch in chains]))

    # attach aux layers to the branch of their latest compute producer
    branch_of: dict[str, Branch] = {}
    for seg in segments:
        for br in seg.branches:
            for lid in br.layers:
                branch_of[lid] = br
    for lid in topo:
        ly = graph.layer(lid)
        if ly.kind != "aux":
            continue
        producers = []
        stack = list(ly.preds)
        seen: set[str] = set()
        while stack:
            p = stack.pop()
            if p in seen:
                continue
            seen.add(p)
            if graph.layer(p).kind == "aux":
                stack.extend(graph.layer(p).preds)
            else:
                producers.append(p)
        if not producers:
            raise WorkloadError(f"aux layer '{lid}' has no compute producer")
        anchor = max(producers, key=pos.get)
        branch_of[anchor].epilogues.append(lid)
        branch_of[lid] = branch_of[anchor]
    return segments


def scale_batch(graph: DnnGraph, batch: int) -> DnnGraph:
    """Return a copy of the graph with every layer's batch replaced."""
    layers = {lid: replace(ly, B=batch) for lid, ly in graph.layers.items()}
    return DnnGraph(name=graph.name, gamma=graph.gamma, layers=layers)
