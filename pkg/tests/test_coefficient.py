import numpy as np
import pytest
import scipy.sparse as sp

from msfem import CoefficientError
from msfem.coefficient import (
    CoefficientField,
    constant_field,
    load_raster,
    preset_field,
    preset_names,
    save_raster,
    synthetic_field,
    weighted_coefficient,
)
from msfem.local_solvers import PouBasis, build_pou
from msfem.mesh import build_grids


def test_field_rejects_non_positive_values():
    with pytest.raises(CoefficientError):
        CoefficientField(np.array([[1.0, 0.0]]))
    with pytest.raises(CoefficientError):
        CoefficientField(np.array([[1.0, np.nan]]))
    with pytest.raises(CoefficientError):
        constant_field(None, -1.0)


def test_field_values_are_read_only(random_field):
    with pytest.raises(ValueError):
        random_field.values[0, 0] = 5.0


def test_constant_field(grids):
    field = constant_field(grids.fine, 3.0)
    assert field.shape == (16, 16)
    assert field.contrast == 1.0


@pytest.mark.parametrize('kind', ['channels', 'inclusions', 'mixed'])
def test_synthetic_field_is_reproducible(grids, kind):
    first = synthetic_field(grids.fine, kind, 1.0e3, 42)
    second = synthetic_field(grids.fine, kind, 1.0e3, 42)
    assert first.fingerprint() == second.fingerprint()
    assert set(np.unique(first.values)) <= {1.0, 1.0e3}
    assert first.beta == 1.0e3 and first.alpha == 1.0


def test_synthetic_field_depends_on_seed(grids):
    first = synthetic_field(grids.fine, 'inclusions', 1.0e4, 1)
    second = synthetic_field(grids.fine, 'inclusions', 1.0e4, 2)
    assert first.fingerprint() != second.fingerprint()


def test_synthetic_field_validation(grids):
    with pytest.raises(CoefficientError):
        synthetic_field(grids.fine, 'spe10', 10.0, 0)
    with pytest.raises(CoefficientError):
        synthetic_field(grids.fine, 'channels', 0.5, 0)


def test_presets(grids):
    assert {'model1-analogue', 'model3-analogue', 'channels', 'inclusions-sweep'} <= set(preset_names())
    default = preset_field('inclusions-sweep', grids.fine)
    lowered = preset_field('inclusions-sweep', grids.fine, contrast=1.0e2)
    # та же геометрия, другой контраст
    assert np.array_equal(default.values > 1.0, lowered.values > 1.0)
    assert lowered.beta == 1.0e2
    with pytest.raises(CoefficientError):
        preset_field('model2', grids.fine)


def test_raster_round_trip(tmp_path, contrast_field, grids):
    path = tmp_path / 'kappa.txt'
    save_raster(contrast_field, path)
    loaded = load_raster(path, grids.fine)
    assert np.array_equal(loaded.values, contrast_field.values)


def test_raster_nearest_cell_resampling(tmp_path, grids):
    path = tmp_path / 'coarse.txt'
    path.write_text("2 2\n1 2\n3 4\n", encoding='utf-8')
    field = load_raster(path, grids.fine)
    assert field.values[0, 0] == 1.0
    assert field.values[0, 15] == 2.0
    assert field.values[15, 0] == 3.0
    assert field.values[15, 15] == 4.0
    assert np.all(field.values[:8, :8] == 1.0)


@pytest.mark.parametrize('text', [
    "",
    "2\n1 2\n",
    "2 2\n1 2 3\n",
    "2 2\n1 2 3 -4\n",
    "2 2\n1 2 x 4\n",
])
def test_raster_errors(tmp_path, grids, text):
    path = tmp_path / 'bad.txt'
    path.write_text(text, encoding='utf-8')
    with pytest.raises(CoefficientError):
        load_raster(path, grids.fine)


def test_missing_raster(tmp_path, grids):
    with pytest.raises(CoefficientError):
        load_raster(tmp_path / 'absent.txt', grids.fine)


def test_weighted_coefficient_positive_and_inverse(grids, random_field):
    pou = build_pou(grids, random_field)
    weighted = weighted_coefficient(random_field, pou)
    assert weighted.values.shape == random_field.shape
    assert np.all(weighted.values > 0.0)
    assert np.allclose(weighted.values * weighted.inverse, 1.0)


def test_weighted_coefficient_scales_with_kappa(grids, random_field):
    scaled_field = random_field.scaled(7.0)
    base = weighted_coefficient(random_field, build_pou(grids, random_field))
    scaled = weighted_coefficient(scaled_field, build_pou(grids, scaled_field))
    assert np.allclose(scaled.values, 7.0 * base.values, rtol=1e-8)


def _bilinear_hat(xy, X, Y, H):
    return np.maximum(0.0, 1.0 - np.abs(xy[:, 0] - X) / H) * np.maximum(0.0, 1.0 - np.abs(xy[:, 1] - Y) / H)


def _triangle_gradient(xy, values, triangle):
    p0, p1, p2 = triangle
    edges = np.array([xy[p1] - xy[p0], xy[p2] - xy[p0]])
    return np.linalg.solve(edges, [values[p1] - values[p0], values[p2] - values[p0]])


def test_weighted_coefficient_matches_hand_assembly():
    grids = build_grids(2, 2)
    fine, H = grids.fine, grids.H
    field = constant_field(fine, 1.0)
    xy = fine.coordinates
    hats = [_bilinear_hat(xy, X * H, Y * H, H) for Y in range(3) for X in range(3)]
    expected = np.zeros((fine.ny, fine.nx))
    for cy in range(fine.ny):
        for cx in range(fine.nx):
            n0 = cy * (fine.nx + 1) + cx
            n1, n2, n3 = n0 + 1, n0 + fine.nx + 2, n0 + fine.nx + 1
            total = 0.0
            for triangle in ((n0, n1, n2), (n0, n2, n3)):
                total += sum(np.sum(_triangle_gradient(xy, hat, triangle) ** 2) for hat in hats)
            expected[cy, cx] = H ** 2 * 0.5 * total
    pou = build_pou(grids, field)
    assert np.allclose(pou.matrix.toarray(), np.column_stack(hats), atol=1e-12)
    weighted = weighted_coefficient(field, pou)
    assert np.allclose(weighted.values, expected, atol=1e-10)


def test_weighted_coefficient_inverse_is_one_where_zero():
    grids = build_grids(2, 2)
    field = constant_field(grids.fine, 1.0)
    corner = _bilinear_hat(grids.fine.coordinates, 0.0, 0.0, grids.H)
    matrix = np.zeros((grids.fine.n_nodes, grids.coarse.n_nodes))
    matrix[:, 0] = corner
    weighted = weighted_coefficient(field, PouBasis(grids, sp.csc_matrix(matrix)))
    zero = weighted.values == 0.0
    assert zero.any() and (~zero).any()
    assert np.all(weighted.inverse[zero] == 1.0)
    assert np.allclose(weighted.inverse[~zero], 1.0 / weighted.values[~zero])
