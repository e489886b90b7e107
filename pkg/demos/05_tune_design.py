"""Model-guided design search versus random search.

The tuner screens candidates with an area-legality filter, fits a
deep-kernel GP surrogate to evaluated costs, and spends its budget on
the surrogate's best suggestions. To keep the demo quick the objective
is an analytic stand-in with the same shape as the real evaluator
(compute-bound term, memory-bound term, energy product); the final
section prices the winning design on a real workload with the full
mapping stack.
"""

import math
from pathlib import Path

from pimdse.arch import HwConstraints, area_model, derive_node_props
from pimdse.tuner import make_cost_evaluator, random_search, tune_loop
from pimdse.workload import parse_dnn

ROOT = Path(__file__).resolve().parents[1]
BUDGET = 48


def pseudo_cost(p):
    """Latency-times-energy surrogate of the full evaluator, in arbitrary units."""
    n = p.na_row * p.na_col
    pe = p.pea_row * p.pea_col
    mem = p.ibuf_kib + p.wbuf_kib + p.obuf_kib
    compute = 5e8 / (n * pe)
    memory = 4e5 / math.sqrt(mem) + 80.0 * math.log2(p.wbuf_kib + 1)
    energy = 0.018 * n * pe + 0.85 * mem + 3e4 / n
    return (compute + memory) * energy


def main():
    cons = HwConstraints()

    rnd = random_search(cons, pseudo_cost, budget=BUDGET, seed=7)
    tuned = tune_loop(cons, pseudo_cost, budget=BUDGET, seed=7)
    print(f"budget {BUDGET} evaluations")
    print(f"  random search best cost {rnd.best_cost:.4e}  {rnd.best_params}")
    print(f"  tuned search  best cost {tuned.best_cost:.4e}  {tuned.best_params}")
    print(f"  filter false-negative rate {tuned.filter_false_negative_rate:.2f}")

    print("\nbest-so-far trajectory (every 8th evaluation):")
    for i in range(7, BUDGET, 8):
        rb = min(c for _, c in rnd.evaluations[:i + 1])
        tb = min(c for _, c in tuned.evaluations[:i + 1])
        print(f"  eval {i + 1:>3}: random {rb:.4e}   tuned {tb:.4e}")

    best = tuned.best_params
    node = derive_node_props(best, cons)
    print(f"\nwinner: {best}")
    print(f"  array {best.na_row}x{best.na_col}, "
          f"node {node.cap_bytes >> 20} MiB / {node.dram_width_bits}-bit port, "
          f"die area {area_model(best, cons):.1f} mm2")

    graph = parse_dnn((ROOT / "workloads" / "mlp_chain.json").read_text())
    evaluate = make_cost_evaluator([graph], cons, alpha=1.0, beta=1.0)
    print(f"  full-stack cost on {graph.name}: {evaluate(best):.4e}")


if __name__ == "__main__":
    main()
