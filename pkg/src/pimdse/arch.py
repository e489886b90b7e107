"""Hardware parameter space, node derivation and the area model.

A design point picks the node-array shape, PE-array shape and the three
SRAM buffer sizes. Fixed platform constraints (bank geometry, port widths,
energies, area budget) live in HwConstraints and come from a JSON config.

Area is linear per node: a_pe_mm2 per PE, a_sram_mm2_per_kib per KiB of
buffer, plus a_fixed_mm2 for the controller and router. The default
coefficients (0.0006 / 0.002 / 0.05) are calibrated so that a 4x4 node
array with 32x32 PEs and 3x128 KiB buffers fits the 48 mm2 budget while a
256x256-PE node with 3x2048 KiB buffers exceeds it on its own.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

KIB = 1024
MIB = 1024 * 1024


@dataclass(frozen=True)
class HwConstraints:
    ba_row: int = 16
    ba_col: int = 16
    width_bank_bits: int = 128
    cap_bank_bytes: int = 8 * MIB
    cstr_area_mm2: float = 48.0
    clock_hz: float = 400e6
    e_dram_pj_per_bit: float = 0.88
    e_noc_pj_per_bit_hop: float = 1.1
    e_act_pj: float = 1024 * 0.88  # one activation, charged per row open
    e_mac_pj: float = 0.5
    e_sram_pj_per_byte: float = 0.3
    a_pe_mm2: float = 0.0006
    a_sram_mm2_per_kib: float = 0.002
    a_fixed_mm2: float = 0.05
    row_bytes: int = 2048  # per bank
    t_rc_cycles: int = 3
    na_min: int = 2
    na_max: int = 16
    pea_min: int = 1
    pea_max: int = 256
    buf_min_kib: int = 1
    buf_max_kib: int = 2048


@dataclass(frozen=True)
class HwParams:
    na_row: int
    na_col: int
    pea_row: int
    pea_col: int
    ibuf_kib: int
    wbuf_kib: int
    obuf_kib: int

    def astuple(self):
        return (self.na_row, self.na_col, self.pea_row, self.pea_col,
                self.ibuf_kib, self.wbuf_kib, self.obuf_kib)


@dataclass(frozen=True)
class NodeProps:
    banks_per_node: int
    dram_width_bits: int
    cap_bytes: int
    flit_bits: int


def legal_na_values(cons: HwConstraints, ba_extent: int | None = None) -> list[int]:
    """Node-array extents must divide the bank array: {2,4,8,16} for 16x16."""
    ba = cons.ba_row if ba_extent is None else ba_extent
    return [d for d in range(cons.na_min, cons.na_max + 1) if ba % d == 0]


def node_area_mm2(p: HwParams, cons: HwConstraints) -> float:
    buf_kib = p.ibuf_kib + p.wbuf_kib + p.obuf_kib
    return (cons.a_pe_mm2 * p.pea_row * p.pea_col
            + cons.a_sram_mm2_per_kib * buf_kib
            + cons.a_fixed_mm2)


def area_model(p: HwParams, cons: HwConstraints) -> float:
    """Total die area in mm2 across all nodes."""
    return p.na_row * p.na_col * node_area_mm2(p, cons)


def validate_params(p: HwParams, cons: HwConstraints) -> list[str]:
    """Return a list of violated constraints; empty means legal."""
    out = []
    for name, v in (("na_row", p.na_row), ("na_col", p.na_col)):
        if not (cons.na_min <= v <= cons.na_max):
            out.append(f"{name}={v} outside [{cons.na_min},{cons.na_max}]")
    if cons.ba_row % p.na_row != 0:
        out.append(f"na_row={p.na_row} does not divide bank rows {cons.ba_row}")
    if cons.ba_col % p.na_col != 0:
        out.append(f"na_col={p.na_col} does not divide bank cols {cons.ba_col}")
    for name, v in (("pea_row", p.pea_row), ("pea_col", p.pea_col)):
        if not (cons.pea_min <= v <= cons.pea_max):
            out.append(f"{name}={v} outside [{cons.pea_min},{cons.pea_max}]")
    for name, v in (("ibuf_kib", p.ibuf_kib), ("wbuf_kib", p.wbuf_kib),
                    ("obuf_kib", p.obuf_kib)):
        if not (cons.buf_min_kib <= v <= cons.buf_max_kib):
            out.append(f"{name}={v} outside [{cons.buf_min_kib},{cons.buf_max_kib}]")
    if out:
        return out
    area = area_model(p, cons)
    if area > cons.cstr_area_mm2 + 1e-9:
        out.append(f"area {area:.3f} mm2 exceeds budget {cons.cstr_area_mm2} mm2")
    return out


def derive_node_props(p: HwParams, cons: HwConstraints) -> NodeProps:
    banks = (cons.ba_row // p.na_row) * (cons.ba_col // p.na_col)
    width = banks * cons.width_bank_bits
    return NodeProps(
        banks_per_node=banks,
        dram_width_bits=width,
        cap_bytes=banks * cons.cap_bank_bytes,
        flit_bits=width // 2,
    )


def load_constraints(text: str) -> HwConstraints:
    doc = json.loads(text)
    known = {f.name for f in fields(HwConstraints)}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown constraint fields: {sorted(unknown)}")
    return HwConstraints(**doc)


def dump_constraints(cons: HwConstraints) -> str:
    return json.dumps({f.name: getattr(cons, f.name) for f in fields(HwConstraints)},
                      indent=2) + "\n"


def params_from_dict(doc: dict) -> HwParams:
    known = {f.name for f in fields(HwParams)}
    missing = known - set(doc)
    if missing:
        raise ValueError(f"missing hardware parameter fields: {sorted(missing)}")
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown hardware parameter fields: {sorted(unknown)}")
    return HwParams(**{k: int(v) for k, v in doc.items()})
