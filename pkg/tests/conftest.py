import json
import pathlib

import pytest

from pimdse import HwConstraints, params_from_dict, parse_dnn

ROOT = pathlib.Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def cons():
    return HwConstraints()


@pytest.fixture(scope="session")
def small_params(cons):
    doc = json.loads((ROOT / "configs" / "design_small.json").read_text())
    return params_from_dict(doc)


@pytest.fixture(scope="session")
def dense_params(cons):
    doc = json.loads((ROOT / "configs" / "design_dense.json").read_text())
    return params_from_dict(doc)


@pytest.fixture(scope="session")
def toy_graph():
    return parse_dnn((ROOT / "workloads" / "toy_cnn.json").read_text())


@pytest.fixture(scope="session")
def mlp_graph():
    return parse_dnn((ROOT / "workloads" / "mlp_chain.json").read_text())
