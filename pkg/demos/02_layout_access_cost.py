"""Show how data layout changes DRAM burst and row-activation counts.

A strided sub-tensor fetch is replayed against several linearizations
of the same 4-D tensor; channel-grouped layouts pack the accessed
elements into fewer aligned bursts. The second half prices a full conv
layer's tile traffic under two buffer sizes.
"""

from pathlib import Path

from pimdse.arch import HwConstraints, HwParams, derive_node_props
from pimdse.costmodel import (Footprint, dram_traffic, footprint_runs,
                              parse_layout, stream_access_cost)
from pimdse.workload import parse_dnn

ROOT = Path(__file__).resolve().parents[1]


def main():
    # a 2-channel 3x3 corner of a 3x5x5 activation tensor, batch 1
    fp = Footprint(dims=(1, 3, 5, 5), origin=(0, 0, 0, 0),
                   extent=(1, 2, 3, 3), elem_bits=16)
    port_bits = 64
    row_bytes = 256

    print("fetch: 2 channels x 3 rows x 3 cols from a 3x5x5 tensor, 64-bit port")
    print(f"{'layout':<12}{'runs':>6}{'bursts':>8}{'row acts':>10}")
    for text in ("BCHW", "BHWC", "BCHW[C2]"):
        dl = parse_layout(text)
        starts, lens = footprint_runs(fp, dl)
        acc, acts = stream_access_cost(fp, dl, port_bits, row_bytes)
        print(f"{text:<12}{len(starts):>6}{acc:>8}{acts:>10}")

    cons = HwConstraints()
    params = HwParams(4, 4, 32, 32, 128, 128, 128)
    node = derive_node_props(params, cons)
    graph = parse_dnn((ROOT / "workloads" / "toy_cnn.json").read_text())
    layer = graph.layer("conv3")

    print(f"\nlayer {layer.id}: K={layer.K} C={layer.C} "
          f"P={layer.P} Q={layer.Q} kernel {layer.HK}x{layer.WK}")
    print(f"node: {node.banks_per_node} banks, {node.dram_width_bits}-bit port, "
          f"{node.cap_bytes >> 20} MiB local DRAM")
    for label, p in (("128 KiB buffers", params),
                     ("8 KiB buffers", HwParams(4, 4, 32, 32, 8, 8, 8))):
        t = dram_traffic(layer, p, cons)
        pl = t.plan
        print(f"  {label}: tile B{pl.b} K{pl.k} C{pl.c} P{pl.p} Q{pl.q}, "
              f"ifmap read {t.ifmap_read_bytes:.0f} B, "
              f"weight read {t.weight_read_bytes:.0f} B, "
              f"ofmap write {t.ofmap_write_bytes:.0f} B")


if __name__ == "__main__":
    main()
