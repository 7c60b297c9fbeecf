"""
Модуль локальных решателей на грубых окрестностях.

Функции разбиения единицы χ_i, κ-гармоническое продолжение, задача Стеклова
на собственные значения и специальное решение v^i с источником κ̃.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from msfem import DegenerateSourceError, SolverError
from msfem.fem_core import (
    FineFunction,
    assemble_boundary_mass,
    assemble_cell_load,
    assemble_mass,
    assemble_stiffness,
)
from msfem.workers import map_neighborhoods

logger = logging.getLogger('msfem.local_solvers')

# Допуск невязки условия совместности задачи Неймана
COMPATIBILITY_TOL = 1e-12


@dataclass
class PouBasis:
    """
    Разбиение единицы {χ_i}.

    Attributes:
        grids (GridPair): Пара сеток
        matrix (sp.csc_matrix): (мелкие узлы, грубые узлы), столбец i содержит χ_i
    """
    grids: object
    matrix: sp.csc_matrix

    def function(self, i):
        return FineFunction(self.grids.fine, self.matrix[:, i].toarray().ravel())

    def restrict(self, i, patch):
        """Значения χ_i в узлах локальной области."""
        return self.matrix[:, i].toarray().ravel()[patch.global_nodes]


@dataclass
class SteklovDecomposition:
    """
    Собственные пары задачи Стеклова на ω_i по возрастанию λ.

    Attributes:
        index (int): Номер окрестности
        eigenvalues (np.ndarray): λ_1 <= λ_2 <= ...
        boundary_vectors (np.ndarray): (граничные узлы, count), ортонормированы в M_∂
        functions (np.ndarray): κ-гармонические продолжения (локальные узлы, count)
    """
    index: int
    eigenvalues: np.ndarray
    boundary_vectors: np.ndarray
    functions: np.ndarray


@dataclass
class LocalSourceSolution:
    """
    Решение v^i локальной задачи с источником κ̃/∫κ̃ и потоком -|∂ω_i|^{-1}.

    Attributes:
        index (int): Номер окрестности
        values (np.ndarray): Значения в локальных узлах
        compatibility (float): |∫ источник + ∫ поток| собранных векторов
    """
    index: int
    values: np.ndarray
    compatibility: float


class LocalProblem:
    """
    Локальная κ-задача на прямоугольной области с разложенным внутренним блоком.

    Разложение внутреннего блока переиспользуется всеми продолжениями,
    задачей Стеклова и построением базисов на этой области.
    """

    def __init__(self, patch, field):
        self.patch = patch
        grid = patch.grid
        self.kappa = field.values.ravel()[patch.global_cells].reshape(grid.ny, grid.nx)
        self.stiffness = assemble_stiffness(grid, self.kappa)
        interior = patch.interior
        self._a_ib = self.stiffness[interior][:, patch.boundary].tocsc()
        self._lu = splu(self.stiffness[interior][:, interior].tocsc()) if interior.size else None

    @property
    def n_nodes(self):
        return self.patch.grid.n_nodes

    def extend(self, boundary_values):
        """
        κ-гармоническое продолжение граничных данных внутрь области.

        Args:
            boundary_values (np.ndarray): Значения в patch.boundary, вектор или матрица (граница, k)

        Returns:
            np.ndarray: Значения во всех локальных узлах
        """
        g = np.asarray(boundary_values, dtype=float)
        single = g.ndim == 1
        g = g.reshape(len(self.patch.boundary), -1)
        result = np.zeros((self.n_nodes, g.shape[1]))
        result[self.patch.boundary] = g
        if self._lu is not None:
            result[self.patch.interior] = self._lu.solve(-(self._a_ib @ g))
        return result[:, 0] if single else result

    def steklov(self, count):
        """
        Наименьшие собственные пары дискретной задачи Стеклова.

        Внутренние узлы исключаются дополнением Шура S, на граничных узлах
        решается обобщённая задача S w = λ M_∂ w.

        Args:
            count (int): Число собственных пар

        Returns:
            SteklovDecomposition: Собственные значения по возрастанию и продолжения
        """
        patch = self.patch
        trace = patch.trace
        if count > trace.size:
            raise SolverError(
                f"Запрошено {count} собственных пар, на границе окрестности {patch.index} "
                f"только {trace.size} узлов", neighborhood=patch.index)
        interior = patch.interior
        a_bb = self.stiffness[trace][:, trace].toarray()
        a_ib = self.stiffness[interior][:, trace].toarray()
        if self._lu is not None:
            coupling = self._lu.solve(a_ib)
            schur = a_bb - a_ib.T @ coupling
        else:
            coupling = np.zeros((0, trace.size))
            schur = a_bb
        schur = 0.5 * (schur + schur.T)
        mass = assemble_boundary_mass(patch.grid, patch.boundary_segments)[trace][:, trace].toarray()
        try:
            eigenvalues, vectors = scipy.linalg.eigh(schur, mass, subset_by_index=[0, count - 1])
        except (np.linalg.LinAlgError, ValueError) as e:
            raise SolverError(f"Задача Стеклова в окрестности {patch.index} не решена: {e}",
                              neighborhood=patch.index) from e
        # детерминированный знак: первая существенная компонента положительна
        for k in range(vectors.shape[1]):
            column = vectors[:, k]
            pivot = np.flatnonzero(np.abs(column) > 1e-12 * np.abs(column).max())[0]
            if column[pivot] < 0:
                vectors[:, k] = -column
        functions = np.zeros((self.n_nodes, count))
        functions[trace] = vectors
        if interior.size:
            functions[interior] = -(coupling @ vectors)
        logger.debug(f"Окрестность {patch.index}: λ_1..λ_{count} = {eigenvalues[0]:.3e}..{eigenvalues[-1]:.3e}")
        return SteklovDecomposition(patch.index, eigenvalues, vectors, functions)

    def source(self, kappa_tilde):
        """
        Решение v^i с источником κ̃/∫κ̃ и выходящим потоком |∂ω_i|^{-1}.

        Для окрестности внутреннего узла задача Неймана решается с условием
        нулевого среднего через множитель Лагранжа; у усечённой окрестности
        на части ∂D задан нуль, и решение единственно.

        Args:
            kappa_tilde (WeightedCoefficient): Взвешенный коэффициент на всей сетке

        Returns:
            LocalSourceSolution: Решение v^i
        """
        patch = self.patch
        grid = patch.grid
        weights = kappa_tilde.values.ravel()[patch.global_cells]
        total = float(weights.sum()) * grid.h ** 2
        if not total > 0.0:
            raise DegenerateSourceError(
                f"Вырожденный взвешенный источник: ∫κ̃ = 0 в окрестности {patch.index}",
                neighborhood=patch.index)
        source_load = assemble_cell_load(grid, weights / total)
        boundary_mass = assemble_boundary_mass(grid, patch.boundary_segments)
        flux_load = -(boundary_mass @ np.ones(grid.n_nodes)) / patch.boundary_length
        compatibility = abs(source_load.sum() + flux_load.sum())
        if compatibility > COMPATIBILITY_TOL:
            raise SolverError(f"Нарушено условие совместности в окрестности {patch.index}: {compatibility:.2e}",
                              neighborhood=patch.index)
        load = source_load + flux_load
        values = np.zeros(grid.n_nodes)
        if patch.truncated:
            free = np.setdiff1d(np.arange(grid.n_nodes), patch.dirichlet)
            values[free] = splu(self.stiffness[free][:, free].tocsc()).solve(load[free])
        else:
            mean_row = assemble_mass(grid) @ np.ones(grid.n_nodes)
            bordered = sp.bmat([
                [self.stiffness, sp.csr_matrix(mean_row[:, None])],
                [sp.csr_matrix(mean_row[None, :]), None],
            ]).tocsc()
            solution = splu(bordered).solve(np.append(load, 0.0))
            values = solution[:-1]
        return LocalSourceSolution(patch.index, values, compatibility)


def local_problem(grids, field, i):
    """Локальная задача на окрестности ω_i."""
    return LocalProblem(grids.neighborhood(i), field)


def _bilinear_data(coordinates, corner, H):
    return np.clip(1.0 - np.abs(coordinates[:, 0] - corner[0]) / H, 0.0, None) * \
        np.clip(1.0 - np.abs(coordinates[:, 1] - corner[1]) / H, 0.0, None)


def _cell_pou(grids, field, K):
    patch = grids.cell_patch(K)
    problem = LocalProblem(patch, field)
    corners = grids.coarse.cell_corners(K)
    coords = patch.grid.coordinates[patch.boundary]
    data = np.column_stack([
        _bilinear_data(coords, grids.coarse.node_coordinates[c], grids.H) for c in corners
    ])
    return patch, corners, problem.extend(data)


def build_pou(grids, field, workers=1):
    """
    Разбиение единицы из стандартных многомасштабных базисных функций.

    На каждой грубой ячейке K решаются κ-гармонические задачи с данными,
    аффинными на каждом ребре ∂K и равными δ_ij в углах; решения склеиваются
    и нормируются так, чтобы Σ_i χ_i = 1 в каждом узле.

    Args:
        grids (GridPair): Пара сеток
        field (CoefficientField): Коэффициент κ
        workers (int): Число потоков

    Returns:
        PouBasis: Функции χ_i для всех грубых узлов
    """
    results = map_neighborhoods(lambda K: _cell_pou(grids, field, K), range(grids.coarse.n_cells), workers)
    rows, cols, vals = [], [], []
    for patch, corners, values in results:
        for k, c in enumerate(corners):
            column = values[:, k]
            nonzero = np.flatnonzero(column != 0.0)
            rows.append(patch.global_nodes[nonzero])
            cols.append(np.full(nonzero.size, c))
            vals.append(column[nonzero])
    rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    # общие узлы соседних ячеек имеют одинаковые значения: оставляем первое вхождение
    n_coarse = grids.coarse.n_nodes
    _, first = np.unique(rows * n_coarse + cols, return_index=True)
    matrix = sp.csr_matrix((vals[first], (rows[first], cols[first])),
                           shape=(grids.fine.n_nodes, n_coarse))
    sums = np.asarray(matrix.sum(axis=1)).ravel()
    matrix = sp.diags(1.0 / sums) @ matrix
    logger.info(f"Разбиение единицы построено: {n_coarse} функций, "
                f"поправка нормировки {np.abs(sums - 1.0).max():.2e}")
    return PouBasis(grids, matrix.tocsc())


def harmonic_extend(grids, field, i, boundary_data):
    """
    κ-гармоническое продолжение L_i^{-1} граничных данных в ω_i.

    Args:
        grids (GridPair): Пара сеток
        field (CoefficientField): Коэффициент κ
        i (int): Номер грубого узла
        boundary_data (np.ndarray): Значения в узлах ∂ω_i (нули на ∂D усечённой окрестности)

    Returns:
        FineFunction: Продолжение на подсетке ω_i
    """
    problem = local_problem(grids, field, i)
    return FineFunction(problem.patch.grid, problem.extend(boundary_data))


def steklov_eigens(grids, field, i, count):
    """
    Наименьшие count собственных пар задачи Стеклова на ω_i.

    Args:
        grids (GridPair): Пара сеток
        field (CoefficientField): Коэффициент κ
        i (int): Номер грубого узла
        count (int): Число собственных пар

    Returns:
        SteklovDecomposition: Собственные пары
    """
    return local_problem(grids, field, i).steklov(count)


def local_source(grids, field, i, kappa_tilde):
    """
    Специальное локальное решение v^i на ω_i.

    Args:
        grids (GridPair): Пара сеток
        field (CoefficientField): Коэффициент κ
        i (int): Номер грубого узла
        kappa_tilde (WeightedCoefficient): Взвешенный коэффициент

    Returns:
        LocalSourceSolution: Решение v^i
    """
    return local_problem(grids, field, i).source(kappa_tilde)
