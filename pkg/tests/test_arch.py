import json

import pytest

from pimdse.arch import (
    HwConstraints, HwParams, area_model, derive_node_props, dump_constraints,
    legal_na_values, load_constraints, node_area_mm2, params_from_dict,
    validate_params,
)


def params(**kw):
    base = dict(na_row=4, na_col=4, pea_row=32, pea_col=32,
                ibuf_kib=128, wbuf_kib=128, obuf_kib=128)
    base.update(kw)
    return HwParams(**base)


def test_legal_na_values_divide_bank_array(cons):
    assert legal_na_values(cons) == [2, 4, 8, 16]
    assert legal_na_values(cons, 12) == [2, 3, 4, 6, 12]


def test_node_props_4x4(cons):
    node = derive_node_props(params(), cons)
    # 16 banks per node: 16x16 bank array split 4x4
    assert node.banks_per_node == 16
    assert node.dram_width_bits == 16 * 128
    assert node.cap_bytes == 16 * 8 * 1024 * 1024
    assert node.flit_bits == node.dram_width_bits // 2


def test_node_props_16x16(cons):
    node = derive_node_props(params(na_row=16, na_col=16), cons)
    assert node.banks_per_node == 1
    assert node.dram_width_bits == 128
    assert node.cap_bytes == 8 * 1024 * 1024
    assert node.flit_bits == 64


def test_area_model_is_linear_per_node(cons):
    p = params()
    per_node = node_area_mm2(p, cons)
    assert area_model(p, cons) == pytest.approx(16 * per_node)
    expect = cons.a_pe_mm2 * 1024 + cons.a_sram_mm2_per_kib * 384 + cons.a_fixed_mm2
    assert per_node == pytest.approx(expect)


def test_reference_design_fits_budget(cons, small_params):
    assert validate_params(small_params, cons) == []
    assert area_model(small_params, cons) <= cons.cstr_area_mm2


def test_oversized_design_violates_area(cons):
    p = params(pea_row=256, pea_col=256, ibuf_kib=2048, wbuf_kib=2048, obuf_kib=2048)
    bad = validate_params(p, cons)
    assert len(bad) == 1 and "area" in bad[0]


def test_validate_names_offending_fields(cons):
    bad = validate_params(params(na_row=3, pea_row=0, ibuf_kib=4096), cons)
    joined = " ".join(bad)
    assert "na_row=3" in joined and "pea_row=0" in joined and "ibuf_kib=4096" in joined


def test_na_must_divide_bank_array(cons):
    bad = validate_params(params(na_row=6, na_col=6), cons)
    assert any("divide" in b for b in bad)


def test_constraints_json_roundtrip(cons):
    text = dump_constraints(cons)
    assert load_constraints(text) == cons
    with pytest.raises(ValueError, match="unknown constraint fields"):
        load_constraints(json.dumps({"bogus": 1}))


def test_params_from_dict_validation():
    doc = dict(na_row=4, na_col=4, pea_row=32, pea_col=32,
               ibuf_kib=128, wbuf_kib=128, obuf_kib=128)
    assert params_from_dict(doc) == params()
    with pytest.raises(ValueError, match="missing"):
        params_from_dict({"na_row": 4})
    with pytest.raises(ValueError, match="unknown"):
        params_from_dict(dict(doc, extra=1))


def test_params_astuple_order():
    assert params().astuple() == (4, 4, 32, 32, 128, 128, 128)
