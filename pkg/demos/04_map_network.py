"""Map the toy CNN onto a 4x4 node array and inspect the result.

Runs the alternating mapping search (space mapping, loop mapping, and
weight replication selected by capacity-budgeted DP, then data layouts
refined), prints the per-iteration trajectory, the per-layer plan and
cost breakdown, the stored-weight occupancy per node, and the gain over
the untuned reference flow.
"""

import json
import sys
from pathlib import Path

from pimdse.arch import HwConstraints, derive_node_props, params_from_dict
from pimdse.mapper import baseline_map, map_dnn, stored_weight_map
from pimdse.workload import parse_dnn

ROOT = Path(__file__).resolve().parents[1]


def main():
    # pass "dense" for the 8x8-array design; bigger search, takes a minute
    design = "design_dense" if "dense" in sys.argv[1:] else "design_small"
    cons = HwConstraints()
    params = params_from_dict(json.loads(
        (ROOT / "configs" / f"{design}.json").read_text()))
    graph = parse_dnn((ROOT / "workloads" / "toy_cnn.json").read_text())
    node = derive_node_props(params, cons)
    rows, cols = params.na_row, params.na_col

    res = map_dnn(graph, params, cons, seed=0)
    print(f"array {rows}x{cols}, node cap {node.cap_bytes >> 20} MiB")
    for h in res.history:
        print(f"  iter {h['iteration']}: estimated latency "
              f"{h['estimated_latency']:.3e}, measured {h['latency_cycles']:.3e} "
              f"cycles, EDP {h['edp']:.3e}")

    print(f"\n{'layer':<8}{'region':<10}{'WR':>3}  {'split (-> rows x cols)':<26}"
          f"{'cycles':>10}{'energy pJ':>12}")
    for sp in res.segments:
        for lid, lp in sp.layer_plans.items():
            rep = res.per_layer[lid]
            reg = lp.region
            split = " ".join(f"{l}{h}x{w}" for l, (h, w) in lp.lm.parts.items()
                             if h * w > 1) or "none"
            print(f"{lid:<8}{reg.rows}x{reg.cols}@({reg.row0},{reg.col0})"
                  f"{lp.wr:>4}  {split:<26}{rep.latency_cycles:>10.0f}"
                  f"{rep.total_energy_pj:>12.0f}")

    print("\nstored weights per node (KiB), max segment over time:")
    kib = stored_weight_map(res.segments, rows, cols) / 1024.0
    for r in range(rows):
        print("  " + " ".join(f"{kib[r, c]:7.1f}" for c in range(cols)))

    base = baseline_map(graph, params, cons, seed=0)
    print(f"\ntuned  EDP {res.edp:.4e}  (latency {res.latency_cycles:.3e}, "
          f"energy {res.energy_pj:.3e})")
    print(f"ref    EDP {base.edp:.4e}  (ratio {res.edp / base.edp:.3f})")


if __name__ == "__main__":
    main()
