import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from qaoa_warmstart.config import AppConfig
from qaoa_warmstart.engine import ParameterVector
from qaoa_warmstart.generators import load_schedules
from qaoa_warmstart.graphs import parse_graph


@pytest.fixture(scope="session")
def schedules():
    return load_schedules()


@pytest.fixture(scope="session")
def app_config():
    return AppConfig()


@pytest.fixture
def single_edge_graph():
    return parse_graph({"J": [[0, 1]], "c": [1]})


@pytest.fixture
def single_edge_optimum():
    return ParameterVector.from_values([np.pi / 4, 3 * np.pi / 8])


@pytest.fixture
def paper_example_graph():
    return parse_graph({"J": [[5, 9], [1, 2], [8, 11]], "c": [5, 6, 7]})
