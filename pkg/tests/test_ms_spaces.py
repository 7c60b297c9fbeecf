import numpy as np
import pytest
import scipy.sparse as sp

from msfem import SolverError
from msfem.coefficient import preset_field, synthetic_field
from msfem.fem_core import fine_reference
from msfem.local_solvers import LocalProblem, build_pou
from msfem.mesh import build_grids
from msfem.metrics import energy_error, error_report
from msfem.ms_spaces import (
    MultiscaleSpace,
    OfflineContext,
    build_esmsfem_space,
    build_msfem_space,
    build_wemsfem_space,
    coarse_solve,
    space_operators,
)
from msfem.wavelets import WaveletSpec

from conftest import interior_node


def _solve(space, field, f=1.0):
    return coarse_solve(space, field, f)


def _spaces(grids, field):
    context = OfflineContext(grids, field)
    return [
        build_esmsfem_space(grids, field, 3, context=context),
        build_wemsfem_space(grids, field, WaveletSpec('haar', 1), context=context),
        build_wemsfem_space(grids, field, WaveletSpec('hierarchical', 1), context=context),
        build_msfem_space(grids, field, 'none', context=context),
    ]


def test_esmsfem_single_function_is_source(grids, random_field):
    space = build_esmsfem_space(grids, random_field, 1)
    assert space.dimension == grids.coarse.n_nodes
    assert {kind for _, kind, _ in space.provenance} == {'source'}


def test_esmsfem_dimension_counts_every_neighborhood(grids, random_field):
    space = build_esmsfem_space(grids, random_field, 2)
    assert space.pruned == 0
    assert space.dimension == 2 * grids.coarse.n_nodes
    assert np.isfinite(space.Lambda) and space.Lambda > 0.0


def test_esmsfem_rejects_too_many_modes(grids, random_field):
    with pytest.raises(SolverError):
        build_esmsfem_space(grids, random_field, 8)
    with pytest.raises(ValueError):
        build_esmsfem_space(grids, random_field, 0)


def test_wemsfem_haar_functions_per_interior_neighborhood(grids, random_field):
    space = build_wemsfem_space(grids, random_field, WaveletSpec('haar', 2))
    i = interior_node(grids)
    tags = [tag for tag in space.provenance if tag[0] == i]
    assert len(tags) == 17
    assert sum(kind == 'source' for _, kind, _ in tags) == 1


def test_wemsfem_level_zero_span_contains_pou(grids, random_field):
    space = build_wemsfem_space(grids, random_field, WaveletSpec('haar', 0))
    pou = build_pou(grids, random_field)
    basis = space.basis.toarray()
    for i in grids.coarse.interior_nodes:
        chi = pou.function(i).values
        coefficients, *_ = np.linalg.lstsq(basis, chi, rcond=None)
        assert np.abs(basis @ coefficients - chi).max() <= 1e-8


def test_context_must_match_grids_and_field(grids, random_field, unit_field):
    context = OfflineContext(grids, unit_field)
    with pytest.raises(ValueError):
        build_esmsfem_space(grids, random_field, 2, context=context)


def test_basis_vanishes_on_domain_boundary(grids, random_field):
    boundary = grids.fine.boundary_nodes
    for space in _spaces(grids, random_field):
        assert space.basis[boundary].nnz == 0
        solution = _solve(space, random_field)
        assert np.all(solution.u_ms.values[boundary] == 0.0)


def test_galerkin_orthogonality_and_pythagoras(grids, random_field):
    u_h = fine_reference(grids, random_field, 1.0)
    for space in _spaces(grids, random_field):
        solution = _solve(space, random_field)
        stiffness, load = space_operators(space, random_field, 1.0)
        residual = space.basis.T @ (stiffness @ (u_h.values - solution.u_ms.values))
        assert np.abs(residual).max() <= 1e-8 * np.linalg.norm(load), space.method
        report = error_report(solution.u_ms, u_h, random_field)
        u_ms = solution.u_ms.values
        ratio = (u_ms @ (stiffness @ u_ms)) / report.energy_denominator
        assert report.e_H1 ** 2 + ratio == pytest.approx(1.0, abs=1e-8), space.method


def test_oversampled_solution_satisfies_normal_equations(grids, random_field):
    space = build_msfem_space(grids, random_field, 'half')
    solution = _solve(space, random_field)
    stiffness, load = space_operators(space, random_field, 1.0)
    residual = space.basis.T @ (load - stiffness @ solution.u_ms.values)
    assert np.abs(residual).max() <= 1e-8 * np.linalg.norm(load)
    assert solution.u_ms.broken


def test_offline_context_builds_each_local_problem_once(grids, random_field, monkeypatch):
    built = []

    class CountingProblem(LocalProblem):
        def __init__(self, patch, field):
            built.append(patch.index)
            super().__init__(patch, field)

    monkeypatch.setattr('msfem.ms_spaces.LocalProblem', CountingProblem)
    context = OfflineContext(grids, random_field, workers=4)
    sources = context.sources
    assert sorted(built) == list(range(grids.coarse.n_nodes))
    assert len(sources) == grids.coarse.n_nodes
    build_esmsfem_space(grids, random_field, 2, context=context, workers=4)
    build_wemsfem_space(grids, random_field, WaveletSpec('haar', 1), context=context, workers=4)
    assert len(built) == grids.coarse.n_nodes


def test_energy_error_decreases_with_level(grids, random_field):
    u_h = fine_reference(grids, random_field, 1.0)
    context = OfflineContext(grids, random_field)
    for kind in ('haar', 'hierarchical'):
        errors = [
            energy_error(_solve(build_wemsfem_space(grids, random_field, WaveletSpec(kind, level),
                                                    context=context), random_field).u_ms, u_h, random_field)
            for level in range(3)
        ]
        assert all(b <= a + 1e-10 for a, b in zip(errors, errors[1:])), (kind, errors)


def test_energy_error_decreases_with_modes(grids, random_field):
    u_h = fine_reference(grids, random_field, 1.0)
    context = OfflineContext(grids, random_field)
    errors, lambdas = [], []
    for N_b in range(1, 5):
        space = build_esmsfem_space(grids, random_field, N_b, context=context)
        errors.append(energy_error(_solve(space, random_field).u_ms, u_h, random_field))
        lambdas.append(space.Lambda)
    assert all(b <= a + 1e-10 for a, b in zip(errors, errors[1:]))
    assert all(b >= a for a, b in zip(lambdas, lambdas[1:]))


def test_wemsfem_level_zero_beats_msfem_for_unit_coefficient(grids, unit_field):
    u_h = fine_reference(grids, unit_field, 1.0)
    context = OfflineContext(grids, unit_field)
    wavelet = build_wemsfem_space(grids, unit_field, WaveletSpec('haar', 0), context=context)
    msfem = build_msfem_space(grids, unit_field, 'none', context=context)
    assert (energy_error(_solve(wavelet, unit_field).u_ms, u_h, unit_field)
            <= energy_error(_solve(msfem, unit_field).u_ms, u_h, unit_field) + 1e-10)


def test_msfem_without_oversampling_is_pou(grids, contrast_field):
    space = build_msfem_space(grids, contrast_field, 'none')
    interior = list(grids.coarse.interior_nodes)
    expected = build_pou(grids, contrast_field).matrix[:, interior].toarray()
    assert space.dimension == len(interior)
    assert np.array_equal(space.basis.toarray(), expected)
    assert not space.broken


@pytest.mark.parametrize('mode', ['half', 'full'])
def test_oversampling_with_unit_coefficient_gives_bilinear_basis(grids, unit_field, mode):
    space = build_msfem_space(grids, unit_field, mode)
    interior = list(grids.coarse.interior_nodes)
    pou = build_pou(grids, unit_field).matrix[:, interior]
    expected = (grids.broken.restriction @ pou).toarray()
    assert space.broken
    assert space.fallbacks == []
    assert np.allclose(space.basis.toarray(), expected, atol=1e-9)


def test_oversampled_basis_is_nodal_at_cell_corners(grids, random_field):
    space = build_msfem_space(grids, random_field, 'full')
    n = grids.n
    local = (n + 1) ** 2
    corner_rows = [0, n, (n + 1) * (n + 1) - 1, n * (n + 1)]
    column_of = {int(i): k for k, i in enumerate(grids.coarse.interior_nodes)}
    basis = space.basis.toarray()
    for K in range(grids.coarse.n_cells):
        for a, c in enumerate(grids.coarse.cell_corners(K)):
            row = basis[K * local + corner_rows[a]]
            expected = np.zeros(space.dimension)
            if int(c) in column_of:
                expected[column_of[int(c)]] = 1.0
            assert np.allclose(row, expected, atol=1e-9)


def test_reference_in_space_is_recovered(grids, random_field):
    u_h = fine_reference(grids, random_field, 1.0)
    space = MultiscaleSpace('reference', grids, sp.csc_matrix(u_h.values[:, None]), [(0, 'reference', 0)])
    solution = _solve(space, random_field)
    assert solution.shift == 0.0
    assert np.allclose(solution.u_ms.values, u_h.values, atol=1e-12 * np.abs(u_h.values).max())
    assert energy_error(solution.u_ms, u_h, random_field) <= 1e-10


def test_zero_column_gets_tikhonov_shift(grids, random_field):
    u_h = fine_reference(grids, random_field, 1.0)
    basis = sp.csc_matrix(np.column_stack([u_h.values, np.zeros(grids.fine.n_nodes)]))
    space = MultiscaleSpace('reference', grids, basis, [(0, 'reference', 0), (0, 'reference', 1)])
    solution = _solve(space, random_field)
    assert solution.shift > 0.0
    assert energy_error(solution.u_ms, u_h, random_field) <= 1e-10


def test_empty_space_is_rejected(grids, random_field):
    space = MultiscaleSpace('empty', grids, sp.csc_matrix((grids.fine.n_nodes, 0)), [])
    with pytest.raises(SolverError):
        _solve(space, random_field)


@pytest.fixture(scope='module')
def model_grids():
    return build_grids(16, 16)


@pytest.fixture(scope='module')
def model_field(model_grids):
    return preset_field('model1-analogue', model_grids.fine)


@pytest.mark.slow
def test_wemsfem_error_decays_with_level_on_model_field(model_grids, model_field):
    u_h = fine_reference(model_grids, model_field, 1.0)
    context = OfflineContext(model_grids, model_field)
    errors = [
        energy_error(_solve(build_wemsfem_space(model_grids, model_field, WaveletSpec('haar', level),
                                                context=context), model_field).u_ms, u_h, model_field)
        for level in range(4)
    ]
    assert all(b <= 0.9 * a for a, b in zip(errors, errors[1:])), errors


@pytest.mark.slow
def test_wemsfem_error_decays_with_coarse_size(model_field):
    errors = []
    for nx in (8, 16, 32):
        grids = build_grids(nx, 256 // nx)
        u_h = fine_reference(grids, model_field, 1.0)
        space = build_wemsfem_space(grids, model_field, WaveletSpec('haar', 2))
        errors.append(energy_error(_solve(space, model_field).u_ms, u_h, model_field))
    assert errors[0] > errors[1] > errors[2], errors


@pytest.mark.slow
def test_esmsfem_error_and_lambda_trends_on_model_field(model_grids, model_field):
    u_h = fine_reference(model_grids, model_field, 1.0)
    context = OfflineContext(model_grids, model_field)
    errors, lambdas = [], []
    for N_b in (2, 4, 6, 8):
        space = build_esmsfem_space(model_grids, model_field, N_b, context=context)
        errors.append(energy_error(_solve(space, model_field).u_ms, u_h, model_field))
        lambdas.append(space.Lambda)
    assert all(b <= a + 1e-10 for a, b in zip(errors, errors[1:])), errors
    assert all(b >= a for a, b in zip(lambdas, lambdas[1:])), lambdas


@pytest.mark.slow
@pytest.mark.parametrize('nx', [8, 16])
@pytest.mark.parametrize('preset', ['model1-analogue', 'model3-analogue', 'channels', 'inclusions-sweep'])
def test_wemsfem_contains_msfem_on_presets(nx, preset):
    grids = build_grids(nx, 256 // nx)
    field = preset_field(preset, grids.fine)
    u_h = fine_reference(grids, field, 1.0)
    context = OfflineContext(grids, field)
    wavelet = build_wemsfem_space(grids, field, WaveletSpec('haar', 0), context=context)
    msfem = build_msfem_space(grids, field, 'none', context=context)
    assert (energy_error(_solve(wavelet, field).u_ms, u_h, field)
            <= energy_error(_solve(msfem, field).u_ms, u_h, field) + 1e-10)


@pytest.mark.slow
def test_wemsfem_error_is_robust_to_contrast(model_grids):
    errors = []
    for contrast in (1.0e2, 1.0e4, 1.0e6):
        field = synthetic_field(model_grids.fine, 'inclusions', contrast, 7)
        u_h = fine_reference(model_grids, field, 1.0)
        space = build_wemsfem_space(model_grids, field, WaveletSpec('haar', 2))
        errors.append(energy_error(_solve(space, field).u_ms, u_h, field))
    assert max(errors) < 3.0 * min(errors), errors
