"""Walk through workload parsing and graph segmentation.

Loads the bundled toy CNN description, prints the derived layer
geometry, and shows how the graph splits into pipeline segments with
parallel branches and auxiliary epilogues.
"""

from pathlib import Path

from pimdse.workload import parse_dnn, segment_dnn, scale_batch

ROOT = Path(__file__).resolve().parents[1]


def main():
    text = (ROOT / "workloads" / "toy_cnn.json").read_text()
    graph = parse_dnn(text)

    print(f"network: {graph.name}  (gamma={graph.gamma})")
    print(f"{'layer':<10}{'kind':<10}{'K':>5}{'C':>5}{'P':>5}{'Q':>5}"
          f"{'HKxWK':>7}{'in HxW':>9}  preds")
    for lid in graph.topo_order():
        ly = graph.layers[lid]
        print(f"{ly.id:<10}{ly.kind:<10}{ly.K:>5}{ly.C:>5}{ly.P:>5}{ly.Q:>5}"
              f"{ly.HK:>4}x{ly.WK:<2}{ly.H:>5}x{ly.W:<3}  {','.join(ly.preds) or '-'}")

    print("\nsegments (branches run in parallel, epilogues ride along):")
    for i, seg in enumerate(segment_dnn(graph)):
        for j, br in enumerate(seg.branches):
            epi = f" +epi {br.epilogues}" if br.epilogues else ""
            print(f"  seg{i} branch{j}: {br.layers}{epi}")

    big = scale_batch(graph, 8)
    ly0 = big.layers[big.topo_order()[0]]
    print(f"\nscale_batch(8): first layer B={ly0.B} "
          f"(ifmap {ly0.B * ly0.C * ly0.H * ly0.W * ly0.data_width_bits // 8} bytes)")


if __name__ == "__main__":
    main()
