"""Command-line front end.

Subcommands:

* evaluate: check one design (area, node properties) and optionally run
  the full mapping search on workloads to report cost.
* map: map one workload onto one design; writes mapping.json/layers.csv.
* schedule: score a sharing-set scenario file with each strategy.
* tune: search the design space for the given workloads.

All outputs are deterministic for a fixed seed: JSON keys are sorted and
floats are formatted with repr-stable precision. Errors print one
`error: ...` line on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .arch import (
    HwConstraints,
    HwParams,
    area_model,
    derive_node_props,
    load_constraints,
    node_area_mm2,
    params_from_dict,
    validate_params,
)
from .costmodel import total_cost
from .mapper import InfeasibleMapping, baseline_map, map_dnn, stored_weight_map
from .noc import Mesh
from .scheduler import (
    SharingSet,
    evaluate_schedule,
    greedy_schedule,
    schedule_ilp,
    schedule_shp,
    schedule_tsp,
)
from .tuner import make_cost_evaluator, random_search, tune_loop
from .workload import WorkloadError, parse_dnn


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def _load_cons(path: str | None) -> HwConstraints:
    if path is None:
        return HwConstraints()
    return load_constraints(Path(path).read_text())


def _load_params(path: str) -> HwParams:
    return params_from_dict(json.loads(Path(path).read_text()))


def _load_workloads(paths: list[str]):
    return [parse_dnn(Path(p).read_text()) for p in paths]


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _mapping_doc(graph, result) -> dict:
    layers = {}
    for lid, rep in sorted(result.per_layer.items()):
        layers[lid] = {
            "latency_cycles": rep.latency_cycles,
            "compute_cycles": rep.compute_cycles,
            "dram_cycles": rep.dram_cycles,
            "noc_cycles": rep.noc_cycles,
            "energy_pj": rep.total_energy_pj,
        }
    segments = []
    for sp in result.segments:
        regions = []
        for rp in sp.regions:
            regions.append({
                "region": [rp.region.row0, rp.region.col0, rp.region.rows, rp.region.cols],
                "layers": list(rp.layer_ids),
                "aux": list(rp.aux_ids),
            })
        plans = {}
        for lid, plan in sorted(sp.layer_plans.items()):
            plans[lid] = {
                "wr": plan.wr,
                "parts": {l: list(p) for l, p in plan.lm.parts.items()},
                "order": list(plan.lm.order),
                "stored_weight_bytes": plan.size_bytes,
            }
        segments.append({"regions": regions, "plans": plans})
    layouts = {lid: [d[0].label, d[1].label] for lid, d in sorted(result.layouts.items())}
    return {
        "network": graph.name,
        "latency_cycles": result.latency_cycles,
        "energy_pj": result.energy_pj,
        "edp": result.edp,
        "segments": segments,
        "layouts": layouts,
        "layers": layers,
        "history": result.history,
    }


def _write_layers_csv(path: Path, result) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["layer", "latency_cycles", "compute_cycles", "dram_cycles",
                    "noc_cycles", "energy_pj"])
        for lid, rep in sorted(result.per_layer.items()):
            w.writerow([lid, _fmt(rep.latency_cycles), _fmt(rep.compute_cycles),
                        _fmt(rep.dram_cycles), _fmt(rep.noc_cycles),
                        _fmt(rep.total_energy_pj)])


def cmd_evaluate(args) -> int:
    cons = _load_cons(args.constraints)
    params = _load_params(args.params)
    bad = validate_params(params, cons)
    print(f"design na={params.na_row}x{params.na_col} "
          f"pea={params.pea_row}x{params.pea_col} "
          f"bufs={params.ibuf_kib}/{params.wbuf_kib}/{params.obuf_kib}KiB")
    print(f"area_mm2={_fmt(area_model(params, cons))} "
          f"node_area_mm2={_fmt(node_area_mm2(params, cons))} "
          f"legal={not bad}")
    if bad:
        for b in bad:
            print(f"violation: {b}")
        return 1
    node = derive_node_props(params, cons)
    print(f"node banks={node.banks_per_node} dram_width_bits={node.dram_width_bits} "
          f"cap_bytes={node.cap_bytes} flit_bits={node.flit_bits}")
    doc = {"params": dict(zip(
        ("na_row", "na_col", "pea_row", "pea_col", "ibuf_kib", "wbuf_kib", "obuf_kib"),
        params.astuple())),
        "area_mm2": area_model(params, cons), "legal": True, "workloads": {}}
    if args.workloads:
        graphs = _load_workloads(args.workloads)
        per = []
        for g in graphs:
            r = map_dnn(g, params, cons, quantum_kib=args.quantum_kib,
                        exact_limit=args.exact_limit, seed=args.seed)
            per.append((r.energy_pj, r.latency_cycles, g.gamma))
            print(f"workload={g.name} latency_cycles={_fmt(r.latency_cycles)} "
                  f"energy_pj={_fmt(r.energy_pj)} edp={_fmt(r.edp)}")
            doc["workloads"][g.name] = {"latency_cycles": r.latency_cycles,
                                        "energy_pj": r.energy_pj, "edp": r.edp}
        cost = total_cost(per, args.alpha, args.beta)
        print(f"cost={_fmt(cost)} alpha={_fmt(args.alpha)} beta={_fmt(args.beta)}")
        doc["cost"] = cost
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "evaluate.json", doc)
    return 0


def cmd_map(args) -> int:
    cons = _load_cons(args.constraints)
    params = _load_params(args.params)
    graphs = _load_workloads(args.workloads)
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    for g in graphs:
        fn = baseline_map if args.baseline else map_dnn
        kwargs = {"quantum_kib": args.quantum_kib, "exact_limit": args.exact_limit,
                  "seed": args.seed}
        result = fn(g, params, cons, **kwargs)
        stored = stored_weight_map(result.segments, params.na_row, params.na_col)
        node = derive_node_props(params, cons)
        print(f"workload={g.name} latency_cycles={_fmt(result.latency_cycles)} "
              f"energy_pj={_fmt(result.energy_pj)} edp={_fmt(result.edp)} "
              f"max_stored_bytes={_fmt(float(stored.max()))} "
              f"cap_bytes={node.cap_bytes}")
        if out:
            prefix = f"{g.name}_baseline" if args.baseline else g.name
            _write_json(out / f"{prefix}_mapping.json", _mapping_doc(g, result))
            _write_layers_csv(out / f"{prefix}_layers.csv", result)
    return 0


def cmd_schedule(args) -> int:
    cons = _load_cons(args.constraints)
    doc = json.loads(Path(args.scenario).read_text())
    try:
        mesh_doc = doc["mesh"]
        mesh = Mesh(int(mesh_doc["rows"]), int(mesh_doc["cols"]),
                    int(mesh_doc["flit_bits"]))
        sets = [SharingSet(payload=str(s.get("payload", "input")),
                           members=tuple((int(r), int(c)) for r, c in s["members"]),
                           chunk_bits=float(s["chunk_bits"]))
                for s in doc["sets"]]
    except (KeyError, TypeError, ValueError) as e:
        raise WorkloadError(f"bad scenario file: {e}") from e
    methods = [args.method] if args.method else ["ilp", "tsp", "shp", "greedy"]
    rows = []
    for m in methods:
        if m == "ilp":
            r = schedule_ilp(sets, mesh, exact_limit=args.exact_limit, seed=args.seed)
        elif m == "tsp":
            r = schedule_tsp(sets, mesh, exact_limit=args.exact_limit)
        elif m == "shp":
            r = schedule_shp(sets, mesh)
        elif m == "greedy":
            r = greedy_schedule(sets, mesh)
        else:
            raise WorkloadError(f"unknown method '{m}'")
        cycles, pj = evaluate_schedule(r, mesh, cons.e_noc_pj_per_bit_hop)
        print(f"method={m} cycles={cycles} energy_pj={_fmt(pj)} "
              f"max_load_bits={_fmt(r.max_load_bits)} hop_bits={_fmt(r.hop_bits)}")
        rows.append({"method": m, "cycles": cycles, "energy_pj": pj,
                     "max_load_bits": r.max_load_bits, "hop_bits": r.hop_bits})
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "schedule.json", {"results": rows})
    return 0


def cmd_tune(args) -> int:
    cons = _load_cons(args.constraints)
    graphs = _load_workloads(args.workloads)
    evaluate = make_cost_evaluator(graphs, cons, alpha=args.alpha, beta=args.beta,
                                   quantum_kib=args.quantum_kib,
                                   exact_limit=args.exact_limit, seed=args.seed)
    fn = random_search if args.random else tune_loop
    result = fn(cons, evaluate, budget=args.budget, seed=args.seed)
    if result.best_params is None:
        raise InfeasibleMapping("no legal design could be evaluated")
    p = result.best_params
    print(f"best na={p.na_row}x{p.na_col} pea={p.pea_row}x{p.pea_col} "
          f"bufs={p.ibuf_kib}/{p.wbuf_kib}/{p.obuf_kib}KiB "
          f"cost={_fmt(result.best_cost)} area_mm2={_fmt(area_model(p, cons))} "
          f"evaluations={len(result.evaluations)}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "best_design.json", {
            "params": dict(zip(("na_row", "na_col", "pea_row", "pea_col",
                                "ibuf_kib", "wbuf_kib", "obuf_kib"), p.astuple())),
            "cost": result.best_cost,
            "area_mm2": area_model(p, cons),
            "filter_false_negative_rate": result.filter_false_negative_rate,
        })
        with (out / "tune_history.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["evaluation", "cost", "best_cost"])
            for row in result.history:
                w.writerow([row["evaluation"], _fmt(row["cost"]), _fmt(row["best_cost"])])
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pimdse",
                                 description="design-space tools for in-memory "
                                             "neural accelerator grids")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, workloads=False, params=False):
        p.add_argument("--constraints", help="constraints JSON file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", help="output directory")
        p.add_argument("--exact-limit", type=int, default=8, dest="exact_limit")
        p.add_argument("--quantum-kib", type=int, default=64, dest="quantum_kib")
        p.add_argument("--alpha", type=float, default=1.0)
        p.add_argument("--beta", type=float, default=1.0)
        if workloads:
            p.add_argument("--workloads", action="append", default=[],
                           help="workload JSON file (repeatable)")
        if params:
            p.add_argument("--params", required=True, help="design JSON file")

    p = sub.add_parser("evaluate", help="score one design")
    common(p, workloads=True, params=True)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("map", help="map workloads onto one design")
    common(p, workloads=True, params=True)
    p.add_argument("--baseline", action="store_true",
                   help="use the reference whole-array flow")
    p.set_defaults(fn=cmd_map)

    p = sub.add_parser("schedule", help="score a sharing-set scenario")
    common(p)
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--method", choices=["ilp", "tsp", "shp", "greedy"],
                   help="single strategy (default: all)")
    p.set_defaults(fn=cmd_schedule)

    p = sub.add_parser("tune", help="search designs for the workloads")
    common(p, workloads=True)
    p.add_argument("--budget", type=int, default=32, help="evaluator calls")
    p.add_argument("--random", action="store_true",
                   help="random search instead of the model-guided loop")
    p.set_defaults(fn=cmd_tune)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "workloads", None) is not None and args.command in ("map", "tune"):
        if not args.workloads:
            print("error: at least one --workloads file is required", file=sys.stderr)
            return 2
    try:
        return args.fn(args)
    except (WorkloadError, InfeasibleMapping, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
