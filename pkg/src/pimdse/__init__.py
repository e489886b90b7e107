"""Design-space exploration toolkit for in-memory neural accelerator grids.

The pipeline: parse a workload (`workload`), fix hardware constraints and
a candidate configuration (`arch`), search the mapping space for each
network (`mapper`, backed by `costmodel`, `noc`, `scheduler`), and search
the configuration space across networks (`tuner`). `cli` exposes the same
flows as subcommands.
"""

from .arch import (
    HwConstraints,
    HwParams,
    NodeProps,
    area_model,
    derive_node_props,
    legal_na_values,
    load_constraints,
    node_area_mm2,
    params_from_dict,
    validate_params,
)
from .costmodel import (
    CostReport,
    DataLayout,
    InfeasibleTiling,
    layout_choices,
    parse_layout,
    total_cost,
)
from .mapper import (
    InfeasibleMapping,
    LayerMapping,
    MappingResult,
    Region,
    baseline_map,
    dp_select,
    map_dnn,
    stored_weight_map,
)
from .noc import Mesh
from .scheduler import (
    ScheduleResult,
    SharingSet,
    build_sharing_sets,
    evaluate_schedule,
    greedy_schedule,
    schedule_ilp,
    schedule_shp,
    schedule_tsp,
)
from .tuner import (
    Surrogate,
    TuneResult,
    decode,
    encode,
    make_cost_evaluator,
    random_search,
    surrogate_fit,
    surrogate_rank,
    tune_loop,
)
from .workload import DnnGraph, Layer, WorkloadError, parse_dnn, scale_batch, segment_dnn

__version__ = "0.1.0"

__all__ = [
    "HwConstraints", "HwParams", "NodeProps", "area_model", "derive_node_props",
    "legal_na_values", "load_constraints", "node_area_mm2", "params_from_dict",
    "validate_params",
    "CostReport", "DataLayout", "InfeasibleTiling", "layout_choices", "parse_layout",
    "total_cost",
    "InfeasibleMapping", "LayerMapping", "MappingResult", "Region", "baseline_map",
    "dp_select", "map_dnn", "stored_weight_map",
    "Mesh",
    "ScheduleResult", "SharingSet", "build_sharing_sets", "evaluate_schedule",
    "greedy_schedule", "schedule_ilp", "schedule_shp", "schedule_tsp",
    "Surrogate", "TuneResult", "decode", "encode", "make_cost_evaluator",
    "random_search", "surrogate_fit", "surrogate_rank", "tune_loop",
    "DnnGraph", "Layer", "WorkloadError", "parse_dnn", "scale_batch", "segment_dnn",
]
