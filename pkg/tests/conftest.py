"""Общие фикстуры: малые сетки и поля коэффициентов."""
import numpy as np
import pytest

from msfem.coefficient import CoefficientField, constant_field, synthetic_field
from msfem.mesh import build_grids


@pytest.fixture
def grids():
    """H = 1/4, n = 4: мелкая сетка 16x16."""
    return build_grids(4, 4)


@pytest.fixture
def unit_field(grids):
    return constant_field(grids.fine, 1.0)


@pytest.fixture
def random_field(grids):
    """Логнормальное поле с умеренным контрастом."""
    rng = np.random.default_rng(1234)
    return CoefficientField(np.exp(rng.normal(0.0, 1.0, size=(grids.fine.ny, grids.fine.nx))))


@pytest.fixture
def contrast_field(grids):
    return synthetic_field(grids.fine, 'inclusions', 1.0e4, 5)


def interior_node(grids):
    """Центральный грубый узел."""
    middle = grids.coarse.nx // 2
    return middle + middle * (grids.coarse.nx + 1)
