import numpy as np
import pytest

from msfem import WaveletError
from msfem.wavelets import (
    HAAR,
    HIERARCHICAL,
    WaveletSpec,
    edge_basis,
    haar_function,
    haar_labels,
    hierarchical_function,
    hierarchical_labels,
    hierarchical_surplus,
    interval_means,
    project_L2,
    projection_error,
    reconstruct,
)

from conftest import interior_node


def test_haar_mother_wavelet_values():
    assert haar_function(0, 0, 0.3) == 1.0
    assert haar_function(1, 0, 0.25) == 1.0
    assert haar_function(1, 0, 0.75) == -1.0
    assert haar_function(1, 0, 1.0) == -1.0
    assert haar_function(2, 1, 0.6) == pytest.approx(np.sqrt(2.0))
    assert haar_function(2, 0, 0.6) == 0.0


@pytest.mark.parametrize('level, j', [(0, 1), (2, 2), (1, -1)])
def test_haar_rejects_invalid_index(level, j):
    with pytest.raises(WaveletError):
        haar_function(level, j, 0.5)


def test_haar_basis_is_orthonormal():
    level = 4
    m = 2 ** 8
    midpoints = (np.arange(m) + 0.5) / m
    samples = np.array([haar_function(lvl, j, midpoints) for lvl, j in haar_labels(level)])
    gram = samples @ samples.T / m
    assert np.allclose(gram, np.eye(len(samples)), atol=1e-12)


def test_hierarchical_function_values():
    assert hierarchical_function(0, 0, 0.25) == pytest.approx(0.75)
    assert hierarchical_function(0, 1, 0.25) == pytest.approx(0.25)
    assert hierarchical_function(2, 1, 0.25) == pytest.approx(1.0)
    assert hierarchical_function(2, 1, 0.5) == pytest.approx(0.0)
    with pytest.raises(WaveletError):
        hierarchical_function(2, 2, 0.5)


def test_labels_dimension():
    assert len(haar_labels(3)) == WaveletSpec(HAAR, 3).dimension == 8
    assert len(hierarchical_labels(3)) == WaveletSpec(HIERARCHICAL, 3).dimension == 9


def test_wavelet_spec_validation():
    with pytest.raises(WaveletError):
        WaveletSpec('daubechies', 1)
    with pytest.raises(WaveletError):
        WaveletSpec(HAAR, -1)


def test_projection_reconstructs_interval_means():
    x = np.linspace(0.0, 1.0, 2 ** 7 + 1)
    v = np.exp(x) * np.cos(3.0 * x)
    for level in range(4):
        values = reconstruct(project_L2(v, level), level, 2 ** level)
        assert np.allclose(values, interval_means(v, level), atol=1e-12)


def test_projection_of_constant():
    coefficients = project_L2(np.full(33, 2.0), 3)
    assert coefficients[0] == pytest.approx(2.0)
    assert np.allclose(coefficients[1:], 0.0, atol=1e-14)


def test_sine_projection_rate():
    x = np.linspace(0.0, 1.0, 2 ** 12 + 1)
    v = np.sin(np.pi * x)
    errors = [projection_error(v, level) for level in range(2, 8)]
    ratios = [errors[k + 1] / errors[k] for k in range(len(errors) - 1)]
    assert all(0.45 <= r <= 0.55 for r in ratios)


@pytest.mark.parametrize('level', range(1, 6))
def test_projection_error_of_identity_closed_form(level):
    x = np.linspace(0.0, 1.0, 2 ** 6 + 1)
    width = 2.0 ** -level
    assert projection_error(x, level) == pytest.approx(width / (2.0 * np.sqrt(3.0)), rel=1e-10)
    projected = reconstruct(project_L2(x, level), level, 2 ** level)
    assert np.allclose(projected, (np.arange(2 ** level) + 0.5) * width, atol=1e-12)


def test_projection_requires_dyadic_samples():
    with pytest.raises(WaveletError):
        project_L2(np.ones(10), 1)
    with pytest.raises(WaveletError):
        project_L2(np.ones(5), 3)


def test_hierarchical_surplus_of_single_hat():
    x = np.linspace(0.0, 1.0, 9)
    v = hierarchical_function(1, 1, x)
    assert np.allclose(hierarchical_surplus(v, 2), [0.0, 0.0, 1.0, 0.0, 0.0])


def test_hierarchical_interpolant_reproduces_dyadic_values():
    x = np.linspace(0.0, 1.0, 17)
    v = x ** 3 - x
    level = 2
    coefficients = hierarchical_surplus(v, level)
    interpolant = sum(c * hierarchical_function(m, j, x)
                      for c, (m, j) in zip(coefficients, hierarchical_labels(level)))
    nodes = np.arange(0, 17, 4)
    assert np.allclose(interpolant[nodes], v[nodes], atol=1e-14)


def test_haar_edge_basis_nodal_data(grids):
    edge = grids.neighborhood(interior_node(grids)).edges[0]
    basis = edge_basis(edge, WaveletSpec(HAAR, 2))
    assert basis.samples.shape == (4, 8)
    nodal = basis.nodal_data()
    assert nodal.shape == (4, 9)
    # концы ребра получают половину значения крайнего отрезка
    assert nodal[0, 0] == pytest.approx(0.5)
    assert nodal[0, -1] == pytest.approx(0.5)
    assert np.allclose(nodal[0, 1:-1], 1.0)


def test_hierarchical_edge_basis(grids):
    edge = grids.neighborhood(interior_node(grids)).edges[1]
    basis = edge_basis(edge, WaveletSpec(HIERARCHICAL, 1))
    nodal = basis.nodal_data()
    assert nodal.shape == (3, 9)
    assert np.allclose(nodal.sum(axis=0)[[0, -1]], 1.0)
    assert nodal[2, 4] == pytest.approx(1.0)


def test_edge_basis_rejects_too_fine_level(grids):
    edge = grids.neighborhood(interior_node(grids)).edges[0]
    with pytest.raises(WaveletError):
        edge_basis(edge, WaveletSpec(HAAR, 4))
    truncated = grids.neighborhood(0).edges[0]
    with pytest.raises(WaveletError):
        edge_basis(truncated, WaveletSpec(HAAR, 3))
