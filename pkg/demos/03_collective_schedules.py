"""Compare collective scheduling methods across traffic regimes.

Ring all-gathers (greedy / tsp / ilp orderings) carry (m-1) chunks per
cycle edge; shp replaces rings with per-member XY broadcasts. Three
cases show where each wins: a full-region gather (rings flatten load),
interleaved small sets (broadcasts dodge ring stacking), and two
overlapping rings where only the joint branch-and-bound search finds
the order that halves the worst link.
"""

from pimdse.mapper import LayerMapping, Region
from pimdse.noc import Mesh
from pimdse.scheduler import (SharingSet, build_sharing_sets,
                              greedy_schedule, schedule_ilp, schedule_shp,
                              schedule_tsp)
from pimdse.workload import Layer

METHODS = (("greedy", greedy_schedule), ("shp", schedule_shp),
           ("tsp", schedule_tsp), ("ilp", schedule_ilp))


def table(sets, mesh):
    print(f"  {'method':<8}{'max link load':>14}{'bit-hops':>12}")
    for name, fn in METHODS:
        res = fn(sets, mesh)
        print(f"  {name:<8}{res.max_load_bits:>14.0f}{res.hop_bits:>12.0f}")


def main():
    layer = Layer(id="conv", kind="conv", B=2, K=32, C=16, P=24, Q=24,
                  HK=3, WK=3)
    region = Region(0, 0, 4, 4)
    mesh = Mesh(4, 4, flit_bits=1024)

    # pairs align with (B, P, Q, K, C)
    print("case A: weight gather, B/P/Q split 4x4 over the region, WR=1")
    lm = LayerMapping(pairs=((2, 1), (2, 2), (1, 2), (1, 1), (1, 1)),
                      order=("B", "P", "Q", "K", "C"))
    table(build_sharing_sets(layer, lm, 1, region), mesh)

    print("\ncase B: K and C each split 2x2 (interleaved 4-node sets)")
    lm = LayerMapping(pairs=((1, 1), (1, 1), (1, 1), (2, 2), (2, 2)),
                      order=("K", "C", "B", "P", "Q"))
    table(build_sharing_sets(layer, lm, 16, region), mesh)

    print("\ncase C: two overlapping 4-node gathers on a 4x3 mesh")
    sets = [SharingSet("input", ((0, 1), (0, 2), (1, 1), (3, 0)), 448.0),
            SharingSet("input", ((0, 0), (1, 1), (2, 0), (2, 2)), 448.0)]
    table(sets, Mesh(4, 3, flit_bits=64))


if __name__ == "__main__":
    main()
