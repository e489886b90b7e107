import json
import math

import numpy as np
import pytest

from pimdse.arch import HwParams, derive_node_props
from pimdse.costmodel import LOOPS
from pimdse.mapper import (
    InfeasibleMapping, LayerChoice, LayerMapping, LayerSpace, Region,
    RegionSpace, SegmentSpace, SmSpace, baseline_map, dp_select, enumerate_lm,
    gen_layer_choices, gen_sm_candidates, map_dnn, share_divisor,
    stored_weight_map, wr_values, _divisor_tuples, _orders_for,
)
from pimdse.noc import Mesh
from pimdse.workload import parse_dnn, segment_dnn
from pimdse.arch import KIB

from oracles import brute_force_select


# ---- small pieces ----

def test_wr_values_ladder():
    assert wr_values(16) == [1, 2, 4, 8, 16]
    assert wr_values(12) == [1, 2, 3, 6, 12]
    assert wr_values(2) == [1, 2]
    assert wr_values(1) == [1]


def test_share_divisor():
    pairs = {"B": (1, 1), "P": (2, 1), "Q": (1, 2), "K": (1, 1), "C": (1, 1)}
    lm = LayerMapping(pairs=tuple(pairs[l] for l in LOOPS), order=tuple(LOOPS))
    assert lm.n_bpq == 4
    assert share_divisor(lm, 1) == 4
    assert share_divisor(lm, 3) == 2
    assert share_divisor(lm, 16) == 1


def test_divisor_tuples_products_and_caps():
    tups = _divisor_tuples(12, [4, 4, 4])
    assert len(set(tups)) == len(tups) == 9
    for t in tups:
        assert math.prod(t) == 12 and all(f <= 4 for f in t)
    # caps that block every factorization are dropped entirely
    fallback = _divisor_tuples(5, [1, 1])
    assert sorted(fallback) == [(1, 5), (5, 1)]


def test_orders_cap():
    few = _orders_for(("K", "C"), 24)
    # trivial loops ride along innermost
    assert sorted(few) == [("C", "K", "B", "P", "Q"), ("K", "C", "B", "P", "Q")]
    many = _orders_for(("B", "P", "Q", "K", "C"), 24)
    assert len(many) == 24 and len(set(many)) == 24
    for order in many:
        assert sorted(order) == sorted(LOOPS)


def test_region_nodes():
    r = Region(1, 2, 2, 3)
    assert r.n_nodes == 6
    assert r.nodes()[0] == (1, 2) and r.nodes()[-1] == (2, 4)


# ---- SM candidates ----

def two_branch_graph(ratio=3):
    doc = {"name": "t", "layers": [
        {"id": "a", "kind": "conv", "K": 8, "C": 8, "P": 8, "Q": 8},
        {"id": "b", "kind": "conv", "K": 8, "C": 8, "P": 8, "Q": 8, "HK": 1,
         "preds": ["a"]},
        {"id": "c", "kind": "conv", "K": 8 * ratio, "C": 8, "P": 8, "Q": 8,
         "HK": 1, "preds": ["a"]},
        {"id": "d", "kind": "conv", "K": 8, "C": 8, "P": 8, "Q": 8,
         "preds": ["b", "c"]},
    ]}
    return parse_dnn(json.dumps(doc))


def test_sm_candidates_split_proportionally():
    graph = two_branch_graph(ratio=3)
    seg = [s for s in segment_dnn(graph) if len(s.branches) == 2][0]
    cands = gen_sm_candidates(seg, graph, 4, 4)
    assert len(cands) == 2
    whole = cands[0]
    assert whole.regions == (Region(0, 0, 4, 4),)
    assert sorted(whole.groups[0]) == [0, 1]
    split = cands[1]
    areas = sorted(r.n_nodes for r in split.regions)
    assert areas == [4, 12]  # 1:3 MAC ratio
    # regions tile the grid without overlap
    cells = [n for r in split.regions for n in r.nodes()]
    assert sorted(cells) == Region(0, 0, 4, 4).nodes()


def test_sm_candidates_respect_max_regions():
    graph = two_branch_graph()
    seg = [s for s in segment_dnn(graph) if len(s.branches) == 2][0]
    only_whole = gen_sm_candidates(seg, graph, 4, 4, max_regions=1)
    assert len(only_whole) == 1 and len(only_whole[0].regions) == 1


# ---- LM enumeration ----

def test_enumerate_lm_products_and_order(cons, small_params):
    graph = two_branch_graph()
    layer = graph.layer("a")
    region = Region(0, 0, 2, 2)
    mesh = Mesh(4, 4, derive_node_props(small_params, cons).flit_bits)
    ranked = enumerate_lm(layer, region, 4, small_params, cons, mesh, {})
    assert ranked
    lats = [rep.latency_cycles for _, rep in ranked]
    assert lats == sorted(lats)
    for lm, _ in ranked:
        rows = math.prod(ph for ph, _ in lm.pairs)
        cols = math.prod(pw for _, pw in lm.pairs)
        assert rows == region.rows and cols == region.cols
        assert sorted(lm.order) == sorted(LOOPS)


def test_enumerate_lm_infeasible_raises(cons):
    doc = {"name": "t", "layers": [
        {"id": "big", "kind": "conv", "K": 1, "C": 1, "P": 1, "Q": 1,
         "HK": 32, "WK": 32}]}
    graph = parse_dnn(json.dumps(doc))
    tiny = HwParams(na_row=2, na_col=2, pea_row=8, pea_col=8,
                    ibuf_kib=1, wbuf_kib=1, obuf_kib=1)
    mesh = Mesh(2, 2, 64)
    with pytest.raises(InfeasibleMapping, match="big"):
        enumerate_lm(graph.layer("big"), Region(0, 0, 1, 1), 1, tiny, cons, mesh, {})


def test_gen_layer_choices_shape(cons, small_params):
    graph = two_branch_graph()
    region = Region(0, 0, 4, 4)
    mesh = Mesh(4, 4, derive_node_props(small_params, cons).flit_bits)
    cands = gen_layer_choices(graph.layer("a"), region, small_params, cons, mesh,
                              {}, None, 64 * KIB)
    assert cands
    quanta = [c.size_quanta for c in cands]
    assert quanta == sorted(quanta, reverse=True)
    assert len(set(quanta)) == len(quanta)
    assert all(c.wr in wr_values(16) for c in cands)
    assert all(c.latency_cycles > 0 for c in cands)


# ---- the selection DP against direct enumeration ----

def random_spaces(rng, force_big=False):
    spaces = []
    for si in range(int(rng.integers(1, 4))):
        sms = []
        for _ in range(int(rng.integers(1, 4))):
            regions = []
            for ri in range(int(rng.integers(1, 3))):
                layers = []
                for li in range(int(rng.integers(1, 3))):
                    cands = []
                    for _ in range(int(rng.integers(1, 5))):
                        size = int(rng.integers(3, 7)) if force_big \
                            else int(rng.integers(0, 7))
                        cands.append(LayerChoice(
                            wr=1, lm=None, size_quanta=size,
                            size_bytes=size * 65536.0,
                            latency_cycles=float(rng.integers(1, 100)),
                            energy_pj=float(rng.integers(1, 100))))
                    layers.append(LayerSpace(f"s{si}r{ri}l{li}", cands))
                regions.append(RegionSpace(
                    region=None, branch_indices=(ri,), layers=layers,
                    base_latency_cycles=float(rng.integers(0, 20))))
            sms.append(SmSpace(None, regions))
        spaces.append(SegmentSpace(si, sms))
    return spaces


def reconstruct(spaces, picks):
    total_lat, total_size = 0.0, 0
    for space, pick in zip(spaces, picks):
        smsp = space.sms[pick.sm_index]
        seg_lat, seg_size = 0.0, 0
        for rsp in smsp.regions:
            lat, size = rsp.base_latency_cycles, 0
            for lsp in rsp.layers:
                c = lsp.cands[pick.layer_choice[lsp.layer_id]]
                lat += c.latency_cycles
                size += int(c.size_quanta)
            assert size <= pick.budget_quanta
            seg_lat = max(seg_lat, lat)
            seg_size = max(seg_size, size)
        total_lat += seg_lat
        total_size += seg_size
    return total_lat, total_size


def test_dp_select_matches_enumeration():
    rng = np.random.default_rng(23)
    feasible = infeasible = 0
    for _ in range(30):
        spaces = random_spaces(rng)
        cap = int(rng.integers(0, 21))
        want = brute_force_select(spaces, cap)
        if want is None:
            with pytest.raises(InfeasibleMapping):
                dp_select(spaces, cap)
            infeasible += 1
            continue
        got, picks = dp_select(spaces, cap)
        assert got == pytest.approx(want)
        lat, size = reconstruct(spaces, picks)
        assert lat == pytest.approx(got)
        assert size <= cap
        feasible += 1
    assert feasible >= 5 and infeasible >= 1


def test_dp_select_names_tightest_segment():
    rng = np.random.default_rng(29)
    spaces = random_spaces(rng, force_big=True)
    with pytest.raises(InfeasibleMapping, match="segment"):
        dp_select(spaces, 0)


def test_dp_select_rejects_negative_budget():
    with pytest.raises(InfeasibleMapping):
        dp_select([], -1)


# ---- end-to-end mapping ----

def test_map_dnn_mlp(cons, small_params, mlp_graph):
    res = map_dnn(mlp_graph, small_params, cons)
    assert res.latency_cycles > 0 and res.energy_pj > 0
    assert 1 <= len(res.history) <= 3
    compute = [lid for lid, ly in mlp_graph.layers.items() if ly.kind != "aux"]
    assert set(res.layouts) == set(compute)
    assert set(res.per_layer) == set(mlp_graph.layers)
    # capacity audit
    node = derive_node_props(small_params, cons)
    stored = stored_weight_map(res.segments, small_params.na_row, small_params.na_col)
    assert stored.max() <= node.cap_bytes


def test_map_dnn_deterministic(cons, small_params, mlp_graph):
    a = map_dnn(mlp_graph, small_params, cons, seed=1)
    b = map_dnn(mlp_graph, small_params, cons, seed=1)
    assert a.latency_cycles == b.latency_cycles
    assert a.energy_pj == b.energy_pj
    assert {k: (v[0].label, v[1].label) for k, v in a.layouts.items()} == \
           {k: (v[0].label, v[1].label) for k, v in b.layouts.items()}


def test_map_dnn_latency_is_consistent_with_reports(cons, small_params, mlp_graph):
    res = map_dnn(mlp_graph, small_params, cons)
    total = 0.0
    for sp in res.segments:
        seg = 0.0
        for rp in sp.regions:
            lat = sum(res.per_layer[lid].latency_cycles
                      for lid in rp.layer_ids + rp.aux_ids)
            seg = max(seg, lat)
        total += seg
    assert total == pytest.approx(res.latency_cycles)
    en = sum(res.per_layer[lid].total_energy_pj for lid in res.per_layer)
    assert en == pytest.approx(res.energy_pj)


def test_map_dnn_rejects_illegal_params(cons, mlp_graph):
    bad = HwParams(na_row=3, na_col=4, pea_row=32, pea_col=32,
                   ibuf_kib=128, wbuf_kib=128, obuf_kib=128)
    with pytest.raises(InfeasibleMapping, match="na_row"):
        map_dnn(mlp_graph, bad, cons)


def test_baseline_not_better_than_search(cons, small_params, mlp_graph):
    cache = {}
    tuned = map_dnn(mlp_graph, small_params, cons, cache=cache)
    base = baseline_map(mlp_graph, small_params, cons, cache=cache)
    assert tuned.edp <= base.edp * (1 + 1e-9)
    assert base.latency_cycles > 0


def test_stored_weight_map_sums_segments():
    plans = map_plans_fixture()
    arr = stored_weight_map(plans, 4, 4)
    assert arr.shape == (4, 4)
    # both segments pin their bytes on the shared top-left node
    assert arr[0, 0] == pytest.approx(100.0 + 40.0)
    assert arr[3, 3] == pytest.approx(40.0)


def map_plans_fixture():
    from pimdse.mapper import LayerPlan, RegionPlan, SegmentPlan
    pairs = tuple((1, 1) for _ in LOOPS)
    lm = LayerMapping(pairs=pairs, order=tuple(LOOPS))
    r_small = Region(0, 0, 2, 2)
    r_whole = Region(0, 0, 4, 4)
    sp1 = SegmentPlan(
        regions=[RegionPlan(r_small, (0,), ("x",), ())],
        layer_plans={"x": LayerPlan("x", r_small, 1, lm, 100.0)})
    sp2 = SegmentPlan(
        regions=[RegionPlan(r_whole, (0,), ("y",), ())],
        layer_plans={"y": LayerPlan("y", r_whole, 1, lm, 40.0)})
    return [sp1, sp2]
