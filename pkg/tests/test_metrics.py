import numpy as np
import pytest

from msfem import MetricError
from msfem.coefficient import CoefficientField
from msfem.fem_core import FineFunction, fine_reference
from msfem.mesh import FineGrid
from msfem.metrics import energy_error, error_report, weighted_l2_error


def _quadrature_norms(grid, kappa, w):
    """Интегралы ∫κ w^2 и ∫κ|∇w|^2 по правилу середин рёбер и явным градиентам."""
    xy = grid.coordinates
    l2 = energy = 0.0
    for t, triangle in enumerate(grid.triangles):
        p = xy[triangle]
        k = kappa.ravel()[t // 2]
        area = 0.5 * abs(np.linalg.det(np.column_stack([p[1] - p[0], p[2] - p[0]])))
        values = w[triangle]
        midpoints = [0.5 * (values[a] + values[b]) for a, b in ((0, 1), (1, 2), (2, 0))]
        l2 += k * area / 3.0 * sum(m ** 2 for m in midpoints)
        plane = np.linalg.solve(np.column_stack([np.ones(3), p]), values)
        energy += k * area * (plane[1] ** 2 + plane[2] ** 2)
    return l2, energy


@pytest.fixture
def small():
    grid = FineGrid(2, 2, 0.5, 0, 0, 2)
    rng = np.random.default_rng(42)
    field = CoefficientField(rng.uniform(0.5, 5.0, size=(2, 2)))
    u_h = FineFunction(grid, rng.normal(size=grid.n_nodes))
    u_ms = FineFunction(grid, rng.normal(size=grid.n_nodes))
    return grid, field, u_ms, u_h


def test_identical_solutions_have_zero_error(grids, random_field):
    u_h = fine_reference(grids, random_field, 1.0)
    assert weighted_l2_error(u_h, u_h, random_field) == 0.0
    assert energy_error(u_h, u_h, random_field) == 0.0


def test_homogeneity(grids, random_field):
    u_h = fine_reference(grids, random_field, 1.0)
    doubled = FineFunction(u_h.grid, 2.0 * u_h.values)
    zero = FineFunction(u_h.grid, np.zeros_like(u_h.values))
    assert weighted_l2_error(doubled, u_h, random_field) == pytest.approx(1.0, abs=1e-14)
    assert energy_error(zero, u_h, random_field) == pytest.approx(1.0, abs=1e-14)


def test_matches_quadrature_oracle(small):
    grid, field, u_ms, u_h = small
    diff = u_ms.values - u_h.values
    l2_num, energy_num = _quadrature_norms(grid, field.values, diff)
    l2_den, energy_den = _quadrature_norms(grid, field.values, u_h.values)
    report = error_report(u_ms, u_h, field)
    assert report.l2_numerator == pytest.approx(l2_num, rel=1e-12)
    assert report.l2_denominator == pytest.approx(l2_den, rel=1e-12)
    assert report.energy_numerator == pytest.approx(energy_num, rel=1e-12)
    assert report.energy_denominator == pytest.approx(energy_den, rel=1e-12)
    assert report.e_L2 == pytest.approx(np.sqrt(l2_num / l2_den), rel=1e-12)
    assert report.e_H1 == pytest.approx(np.sqrt(energy_num / energy_den), rel=1e-12)


def test_invariant_under_coefficient_scaling(small):
    _, field, u_ms, u_h = small
    scaled = field.scaled(37.0)
    assert weighted_l2_error(u_ms, u_h, scaled) == pytest.approx(weighted_l2_error(u_ms, u_h, field), rel=1e-12)
    assert energy_error(u_ms, u_h, scaled) == pytest.approx(energy_error(u_ms, u_h, field), rel=1e-12)


def test_zero_reference_is_rejected(small):
    grid, field, u_ms, _ = small
    zero = FineFunction(grid, np.zeros(grid.n_nodes))
    with pytest.raises(MetricError):
        weighted_l2_error(u_ms, zero, field)
    with pytest.raises(MetricError):
        energy_error(u_ms, zero, field)


def test_mismatched_grids_are_rejected(small, grids, random_field):
    _, _, u_ms, _ = small
    u_h = fine_reference(grids, random_field, 1.0)
    with pytest.raises(MetricError):
        energy_error(u_ms, u_h, random_field)


def test_broken_restriction_of_reference_has_zero_error(grids, random_field):
    u_h = fine_reference(grids, random_field, 1.0)
    layout = grids.broken
    broken = FineFunction(grids.fine, layout.restriction @ u_h.values, layout)
    assert weighted_l2_error(broken, u_h, random_field) == pytest.approx(0.0, abs=1e-14)
    assert energy_error(broken, u_h, random_field) == pytest.approx(0.0, abs=1e-14)


def test_broken_energy_ignores_cellwise_constants(grids, random_field):
    u_h = fine_reference(grids, random_field, 1.0)
    layout = grids.broken
    values = layout.restriction @ u_h.values
    # сдвиг одной грубой ячейки на константу: разрыв без изменения градиентов
    local = (grids.n + 1) ** 2
    values[5 * local:6 * local] += 1.0
    broken = FineFunction(grids.fine, values, layout)
    report = error_report(broken, u_h, random_field)
    # a(1, 1) на ячейке равно нулю с точностью до округления относительно a(u_h, u_h)
    assert report.energy_numerator <= 1e-12 * report.energy_denominator
    assert weighted_l2_error(broken, u_h, random_field) > 0.0
