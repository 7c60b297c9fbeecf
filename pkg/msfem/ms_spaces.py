"""
Модуль глобальных многомасштабных пространств.

Строит пространства ESMsFEM (моды Стеклова), WEMsFEM (вейвлеты на рёбрах)
и базис MsFEM с передискретизацией, решает грубую задачу Галёркина.
"""
import logging
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from msfem import SingularSystemError, SolverError
from msfem.coefficient import weighted_coefficient
from msfem.fem_core import FineFunction, assemble_load, assemble_stiffness
from msfem.local_solvers import LocalProblem, build_pou
from msfem.wavelets import WaveletSpec, edge_basis
from msfem.workers import map_neighborhoods

logger = logging.getLogger('msfem.ms_spaces')

# Относительный порог собственных значений нормированной матрицы Грама
PRUNE_TOL = 1e-12
# Размер редуцированной системы, до которого используется плотное разложение Холецкого
DENSE_LIMIT = 3000
# Порог обусловленности угловой матрицы при передискретизации
CORNER_COND_LIMIT = 1e12

OVERSAMPLING = ('none', 'half', 'full')


@dataclass
class MultiscaleSpace:
    """
    Глобальное многомасштабное пространство V_off.

    Attributes:
        method (str): Метка метода ('esmsfem', 'wemsfem-haar', 'msfem-none', ...)
        grids (GridPair): Пара сеток
        basis (sp.csc_matrix): Базисные функции по столбцам (степени свободы, dim)
        provenance (list): Для каждого столбца (грубый узел, вид, номер)
        layout (BrokenLayout | None): Разрывная раскладка неконформного базиса
        Lambda (float | None): min_i λ_{N_b+1}^{(i)} для ESMsFEM
        pruned (int): Число функций, удалённых как линейно зависимые
        fallbacks (list): Грубые ячейки, где передискретизация заменена обычным базисом
    """
    method: str
    grids: object
    basis: sp.csc_matrix
    provenance: list
    layout: object = None
    Lambda: float = None
    pruned: int = 0
    fallbacks: list = field(default_factory=list)

    @property
    def dimension(self):
        return self.basis.shape[1]

    @property
    def broken(self):
        return self.layout is not None

    def function(self, k):
        """k-я базисная функция."""
        values = self.basis[:, k].toarray().ravel()
        return FineFunction(self.grids.fine, values, self.layout)


@dataclass
class CoarseSolution:
    """
    Решение грубой задачи Галёркина.

    Attributes:
        space (MultiscaleSpace): Пространство
        coefficients (np.ndarray): Коэффициенты c по базису
        u_ms (FineFunction): Восстановленное решение Σ c_k φ_k
        shift (float): Сдвиг Тихонова (0, если разложение прошло без него)
    """
    space: MultiscaleSpace
    coefficients: np.ndarray
    u_ms: FineFunction
    shift: float = 0.0


class OfflineContext:
    """
    Общие для всех пространств данные одной пары (сетки, поле).

    Хранит разбиение единицы, взвешенный коэффициент κ̃, локальные задачи
    на окрестностях и решения v^i, чтобы серия пространств с разными ℓ и N_b
    не повторяла локальные разложения.
    """

    def __init__(self, grids, field, workers=1):
        self.grids = grids
        self.field = field
        self.workers = workers
        self._pou = None
        self._kappa_tilde = None
        self._problems = None
        self._sources = None
        # свойства строятся один раз, даже если их читают из нескольких потоков
        self._lock = threading.RLock()

    @property
    def indices(self):
        return range(self.grids.coarse.n_nodes)

    @property
    def pou(self):
        with self._lock:
            if self._pou is None:
                self._pou = build_pou(self.grids, self.field, self.workers)
            return self._pou

    @property
    def kappa_tilde(self):
        with self._lock:
            if self._kappa_tilde is None:
                self._kappa_tilde = weighted_coefficient(self.field, self.pou)
            return self._kappa_tilde

    @property
    def problems(self):
        with self._lock:
            if self._problems is None:
                grids, field_ = self.grids, self.field
                problems = map_neighborhoods(
                    lambda i: LocalProblem(grids.neighborhood(i), field_), self.indices, self.workers)
                self._problems = dict(zip(self.indices, problems))
            return self._problems

    @property
    def sources(self):
        with self._lock:
            if self._sources is None:
                kappa_tilde = self.kappa_tilde
                problems = self.problems
                sources = map_neighborhoods(lambda i: problems[i].source(kappa_tilde), self.indices, self.workers)
                self._sources = dict(zip(self.indices, sources))
            return self._sources

    def prepare(self):
        """Вычисляет все общие офлайн-данные."""
        _ = self.sources
        logger.info(f"Офлайн-данные готовы: {self.grids.coarse.n_nodes} окрестностей")
        return self

    def chi(self, i):
        return self.pou.restrict(i, self.grids.neighborhood(i))


def _context(grids, field, context, workers):
    if context is None:
        return OfflineContext(grids, field, workers)
    if context.grids is not grids or context.field is not field:
        raise ValueError("Офлайн-данные построены для другой пары сеток или другого поля")
    return context


def _prune(local_stiffness, columns, tags):
    """
    Удаляет линейно зависимые локальные функции по собственным числам нормированной матрицы Грама.

    Returns:
        tuple: (столбцы, метки, число удалённых)
    """
    gram = columns.T @ (local_stiffness @ columns)
    diag = np.diag(gram).copy()
    nonzero = diag > PRUNE_TOL * max(diag.max(), np.finfo(float).tiny)
    columns, diag = columns[:, nonzero], diag[nonzero]
    gram = gram[nonzero][:, nonzero]
    tags = [t for t, keep in zip(tags, nonzero) if keep]
    dropped = int((~nonzero).sum())
    if not tags:
        return columns, tags, dropped
    scale = 1.0 / np.sqrt(diag)
    normalized = scale[:, None] * gram * scale[None, :]
    normalized = 0.5 * (normalized + normalized.T)
    eigenvalues, vectors = np.linalg.eigh(normalized)
    keep = eigenvalues > PRUNE_TOL * eigenvalues.max()
    if keep.all():
        return columns, tags, dropped
    node = tags[0][0]
    modes = (columns * scale[None, :]) @ vectors[:, keep]
    mode_tags = [(node, 'mode', k) for k in range(int(keep.sum()))]
    return modes, mode_tags, dropped + int((~keep).sum())


def _assemble_space(method, grids, blocks, n_dofs=None, layout=None):
    """
    Собирает разреженную матрицу базиса из локальных блоков.

    Args:
        blocks (list): Кортежи (глобальные номера строк, локальные столбцы, метки);
            столбцы задаются плотным массивом или разреженной матрицей
    """
    rows, cols, vals, provenance = [], [], [], []
    offset = 0
    for dofs, columns, tags in blocks:
        block = sp.coo_matrix(columns)
        rows.append(dofs[block.row])
        cols.append(block.col + offset)
        vals.append(block.data)
        provenance.extend(tags)
        offset += columns.shape[1]
    n_dofs = grids.fine.n_nodes if n_dofs is None else n_dofs
    if offset == 0:
        raise SolverError(f"Пространство {method} пусто")
    basis = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n_dofs, offset))
    # функции пространства обращаются в нуль на ∂D
    if layout is None:
        boundary = grids.fine.boundary_nodes
    else:
        boundary = np.flatnonzero(layout.restriction[:, grids.fine.boundary_nodes].getnnz(axis=1))
    mask = np.ones(n_dofs)
    mask[boundary] = 0.0
    basis = (sp.diags(mask) @ basis).tocsc()
    basis.eliminate_zeros()
    return MultiscaleSpace(method, grids, basis, provenance, layout)


def _weighted_block(context, i, local_functions, tags, pruned_total):
    problem = context.problems[i]
    columns = context.chi(i)[:, None] * local_functions
    columns, tags, dropped = _prune(problem.stiffness, columns, tags)
    if dropped:
        logger.warning(f"Окрестность {i}: удалено {dropped} линейно зависимых функций")
    pruned_total.append(dropped)
    return problem.patch.global_nodes, columns, tags


def build_esmsfem_space(grids, field, N_b, context=None, workers=1):
    """
    Пространство ESMsFEM: N_b - 1 мод Стеклова и v^i в каждой окрестности, умноженные на χ_i.

    Args:
        grids (GridPair): Пара сеток
        field (CoefficientField): Коэффициент κ
        N_b (int): Число локальных функций на окрестность
        context (OfflineContext, optional): Переиспользуемые офлайн-данные
        workers (int): Число потоков

    Returns:
        MultiscaleSpace: Пространство с Λ = min_i λ_{N_b+1}^{(i)}
    """
    if int(N_b) != N_b or N_b < 1:
        raise ValueError(f"N_b должно быть целым не меньше 1, получено {N_b}")
    N_b = int(N_b)
    context = _context(grids, field, context, workers)
    sources = context.sources

    def eigens(i):
        problem = context.problems[i]
        available = problem.patch.trace.size
        if N_b > available:
            raise SolverError(f"N_b={N_b} превышает число граничных степеней свободы {available} "
                              f"окрестности {i}", neighborhood=i)
        return problem.steklov(min(N_b + 1, available))

    decompositions = map_neighborhoods(eigens, context.indices, context.workers)
    pruned = []
    blocks = []
    lambdas = []
    for i, decomposition in zip(context.indices, decompositions):
        modes = decomposition.functions[:, :N_b - 1]
        if decomposition.eigenvalues.size > N_b:
            lambdas.append(decomposition.eigenvalues[N_b])
        local = np.column_stack([modes, sources[i].values])
        tags = [(i, 'spectral', k) for k in range(N_b - 1)] + [(i, 'source', 0)]
        blocks.append(_weighted_block(context, i, local, tags, pruned))
    space = _assemble_space('esmsfem', grids, blocks)
    space.Lambda = float(min(lambdas)) if lambdas else float('nan')
    space.pruned = int(sum(pruned))
    logger.info(f"Пространство ESMsFEM N_b={N_b}: размерность {space.dimension}, Λ={space.Lambda:.4g}")
    return space


def _wavelet_data(patch, spec):
    """Граничные данные всех вейвлетов рёбер окрестности, продолженные нулём на остальную границу."""
    position = {int(node): k for k, node in enumerate(patch.boundary)}
    dirichlet = [position[int(node)] for node in patch.dirichlet]
    columns = []
    labels = []
    for e, edge in enumerate(patch.edges):
        nodal = edge_basis(edge, spec).nodal_data()
        where = np.array([position[int(node)] for node in edge.nodes])
        for k, values in enumerate(nodal):
            data = np.zeros(len(patch.boundary))
            data[where] = values
            data[dirichlet] = 0.0
            columns.append(data)
            labels.append((e, k))
    return np.column_stack(columns), labels


def build_wemsfem_space(grids, field, spec, context=None, workers=1):
    """
    Пространство WEMsFEM: κ-гармонические продолжения вейвлетов рёбер и v^i, умноженные на χ_i.

    Args:
        grids (GridPair): Пара сеток
        field (CoefficientField): Коэффициент κ
        spec (WaveletSpec): Вид вейвлетов и уровень ℓ
        context (OfflineContext, optional): Переиспользуемые офлайн-данные
        workers (int): Число потоков

    Returns:
        MultiscaleSpace: Пространство после удаления линейно зависимых функций
    """
    if not isinstance(spec, WaveletSpec):
        spec = WaveletSpec(*spec)
    context = _context(grids, field, context, workers)
    sources = context.sources

    def extensions(i):
        problem = context.problems[i]
        data, labels = _wavelet_data(problem.patch, spec)
        return problem.extend(data), labels

    extended = map_neighborhoods(extensions, context.indices, context.workers)
    pruned = []
    blocks = []
    kind = f"wavelet-{spec.kind}"
    for i, (functions, labels) in zip(context.indices, extended):
        local = np.column_stack([functions, sources[i].values])
        tags = [(i, kind, k) for k in range(len(labels))] + [(i, 'source', 0)]
        blocks.append(_weighted_block(context, i, local, tags, pruned))
    space = _assemble_space(f"wemsfem-{spec.kind}", grids, blocks)
    space.pruned = int(sum(pruned))
    logger.info(f"Пространство WEMsFEM {spec.kind} ℓ={spec.level}: размерность {space.dimension}, "
                f"удалено {space.pruned}")
    return space


def _bilinear_corner_data(patch):
    """Билинейные данные четырёх углов прямоугольной области на её границе."""
    grid = patch.grid
    ij = grid.node_ij[patch.boundary].astype(float)
    s = ij[:, 0] / grid.nx
    t = ij[:, 1] / grid.ny
    return np.column_stack([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t])


def _oversampled_cell(context, K, extra):
    grids = context.grids
    patch, inner = grids.oversampled_patch(K, extra)
    problem = LocalProblem(patch, context.field)
    psi = problem.extend(_bilinear_corner_data(patch))[inner]
    n = grids.n
    # локальные номера углов K в порядке cell_corners: (0,0), (n,0), (n,n), (0,n)
    corner_rows = [0, n, (n + 1) * (n + 1) - 1, n * (n + 1)]
    corner_values = psi[corner_rows]
    if np.linalg.cond(corner_values) > CORNER_COND_LIMIT:
        return None
    return np.linalg.solve(corner_values.T, psi.T).T


def build_msfem_space(grids, field, oversampling='none', context=None, workers=1):
    """
    Базис MsFEM: χ_i внутренних грубых узлов или склеенный базис с передискретизацией K+.

    Args:
        grids (GridPair): Пара сеток
        field (CoefficientField): Коэффициент κ
        oversampling (str): 'none', 'half' (K+ = K + n/2) или 'full' (K+ = K + n)
        context (OfflineContext, optional): Переиспользуемые офлайн-данные
        workers (int): Число потоков

    Returns:
        MultiscaleSpace: Конформное пространство при 'none', разрывное иначе
    """
    if oversampling not in OVERSAMPLING:
        raise ValueError(f"Неизвестный режим передискретизации: {oversampling}")
    context = _context(grids, field, context, workers)
    coarse = grids.coarse
    interior = np.array(coarse.interior_nodes, dtype=np.int64)
    if oversampling == 'none':
        space = _assemble_space('msfem-none', grids, [
            (np.arange(grids.fine.n_nodes), context.pou.matrix[:, interior], [(int(i), 'msfem', 0) for i in interior])
        ])
        logger.info(f"Пространство MsFEM без передискретизации: размерность {space.dimension}")
        return space

    extra = grids.n // 2 if oversampling == 'half' else grids.n
    layout = grids.broken
    local = (grids.n + 1) ** 2
    cells = range(coarse.n_cells)
    matched = map_neighborhoods(lambda K: _oversampled_cell(context, K, extra), cells, context.workers)
    fallbacks = []
    column_of = {int(i): k for k, i in enumerate(interior)}
    rows, cols, vals = [], [], []
    for K, phi in zip(cells, matched):
        corners = coarse.cell_corners(K)
        if phi is None:
            logger.warning(f"Ячейка {K}: угловая матрица вырождена, используется базис без передискретизации")
            fallbacks.append(K)
            phi = context.pou.matrix[layout.cell_dofs[K]][:, list(corners)].toarray()
        for a, c in enumerate(corners):
            if c not in column_of:
                continue
            rows.append(K * local + np.arange(local))
            cols.append(np.full(local, column_of[c]))
            vals.append(phi[:, a])
    block = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(layout.n_dofs, len(interior)))
    space = _assemble_space(f"msfem-{oversampling}", grids, [
        (np.arange(layout.n_dofs), block, [(int(i), 'msfem', 0) for i in interior])
    ], n_dofs=layout.n_dofs, layout=layout)
    space.fallbacks = fallbacks
    logger.info(f"Пространство MsFEM с передискретизацией {oversampling}: размерность {space.dimension}, "
                f"замен базиса {len(fallbacks)}")
    return space


def space_operators(space, field, f):
    """
    Матрица жёсткости и вектор нагрузки в раскладке пространства.

    Returns:
        tuple: (A, b) для непрерывной или разрывной нумерации
    """
    fine = space.grids.fine
    if space.layout is None:
        return assemble_stiffness(fine, field), assemble_load(fine, f)
    layout = space.layout
    return (assemble_stiffness(fine, field, layout.triangles, layout.n_dofs),
            assemble_load(fine, f, layout.triangles, layout.n_dofs))


def _dependent_indices(reduced):
    eigenvalues, vectors = np.linalg.eigh(reduced)
    small = eigenvalues <= PRUNE_TOL * max(abs(eigenvalues).max(), np.finfo(float).tiny)
    return sorted({int(np.argmax(np.abs(vectors[:, k]))) for k in np.flatnonzero(small)})


def _solve_dense(reduced, rhs):
    try:
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(reduced), rhs), 0.0
    except np.linalg.LinAlgError:
        pass
    shift = 1e-14 * np.trace(reduced) / reduced.shape[0]
    logger.warning(f"Разложение Холецкого не удалось, добавлен сдвиг Тихонова {shift:.3e}")
    try:
        shifted = reduced + shift * np.eye(reduced.shape[0])
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(shifted), rhs), shift
    except np.linalg.LinAlgError:
        raise SingularSystemError("Редуцированная система вырождена после сдвига Тихонова",
                                  _dependent_indices(reduced)) from None


def _solve_sparse(reduced, rhs):
    try:
        return splu(reduced.tocsc()).solve(rhs), 0.0
    except RuntimeError:
        pass
    dim = reduced.shape[0]
    shift = 1e-14 * reduced.diagonal().sum() / dim
    logger.warning(f"Разреженное разложение не удалось, добавлен сдвиг Тихонова {shift:.3e}")
    try:
        return splu((reduced + shift * sp.identity(dim)).tocsc()).solve(rhs), shift
    except RuntimeError:
        raise SingularSystemError("Редуцированная система вырождена после сдвига Тихонова") from None


def coarse_solve(space, field, f):
    """
    Решает грубую задачу Галёркина a(u_ms, v) = (f, v) для всех v из V_off.

    Args:
        space (MultiscaleSpace): Пространство
        field (CoefficientField): Коэффициент κ
        f: Правая часть (число, f(x, y) или массив по мелким узлам)

    Returns:
        CoarseSolution: Коэффициенты и восстановленное решение u_ms
    """
    if space.dimension == 0:
        raise SolverError("Пустое многомасштабное пространство")
    stiffness, load = space_operators(space, field, f)
    basis = space.basis
    reduced = (basis.T @ (stiffness @ basis)).tocsc()
    rhs = basis.T @ load
    if space.dimension <= DENSE_LIMIT:
        dense = reduced.toarray()
        coefficients, shift = _solve_dense(0.5 * (dense + dense.T), rhs)
    else:
        coefficients, shift = _solve_sparse(reduced, rhs)
    u_ms = FineFunction(space.grids.fine, basis @ coefficients, space.layout)
    logger.info(f"Грубая система {space.method} размерности {space.dimension} решена")
    return CoarseSolution(space, coefficients, u_ms, shift)
