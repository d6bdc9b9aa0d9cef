"""Regular lattices over coordinate boxes and exterior calculus on sampled forms.

Derivatives are second order everywhere: central differences in the interior,
one-sided second-order stencils on the boundary, wrap-around differences on
periodic boxes. A NaN entry (masked node) contaminates every stencil that
reads it, so masks propagate through derivatives on their own.
"""

from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
from scipy import ndimage

from .errors import InputError

FloatArray = npt.NDArray[np.float64]

MIN_NODES = 3
DIMENSION = 3


@dataclass(frozen=True)
class Grid:
    """Равномерная решётка в координатном параллелепипеде.

    На периодической решётке правая граница не входит в узлы (тор).
    """

    lower: tuple[float, float, float]
    upper: tuple[float, float, float]
    shape: tuple[int, int, int]
    periodic: bool = False

    def __post_init__(self) -> None:
        if len(self.lower) != DIMENSION or len(self.upper) != DIMENSION or len(self.shape) != DIMENSION:
            raise InputError("grid needs three axes")
        for lo, hi, n in zip(self.lower, self.upper, self.shape):
            if not hi > lo:
                raise InputError(f"empty grid axis [{lo}, {hi}]")
            if n < MIN_NODES:
                raise InputError(f"grid axis needs at least {MIN_NODES} nodes, got {n}")

    @property
    def spacing(self) -> tuple[float, float, float]:
        """Шаг по каждой оси."""
        cells = [n if self.periodic else n - 1 for n in self.shape]
        return tuple((hi - lo) / c for lo, hi, c in zip(self.lower, self.upper, cells))  # type: ignore[return-value]

    @property
    def h(self) -> float:
        """Наибольший шаг решётки."""
        return max(self.spacing)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def axis(self, k: int) -> FloatArray:
        """Координаты узлов вдоль оси k."""
        return self.lower[k] + self.spacing[k] * np.arange(self.shape[k], dtype=np.float64)

    def coordinates(self) -> tuple[FloatArray, FloatArray, FloatArray]:
        """Координатные массивы x1, x2, x3 формы shape."""
        x1, x2, x3 = np.meshgrid(self.axis(0), self.axis(1), self.axis(2), indexing='ij')
        return x1, x2, x3

    def points(self) -> FloatArray:
        """Узлы решётки, форма (*shape, 3)."""
        return np.stack(self.coordinates(), axis=-1)

    def refined(self) -> "Grid":
        """Двоичное измельчение: шаг уменьшается вдвое."""
        if self.periodic:
            shape = tuple(2 * n for n in self.shape)
        else:
            shape = tuple(2 * n - 1 for n in self.shape)
        return Grid(self.lower, self.upper, shape, self.periodic)  # type: ignore[arg-type]

    def index_of(self, fractions: tuple[float, float, float]) -> tuple[int, int, int]:
        """Ближайший узел к точке, заданной долями длины осей."""
        index = []
        for frac, n in zip(fractions, self.shape):
            last = n if self.periodic else n - 1
            index.append(int(np.clip(round(frac * last), 0, n - 1)))
        return index[0], index[1], index[2]

    def partial(self, values: FloatArray, k: int) -> FloatArray:
        """Частная производная по x_k поля с формой (*shape, ...)."""
        values = np.asarray(values, dtype=np.float64)
        step = self.spacing[k]
        if self.periodic:
            return (np.roll(values, -1, axis=k) - np.roll(values, 1, axis=k)) / (2.0 * step)
        return np.asarray(np.gradient(values, step, axis=k, edge_order=2))

    def gradient(self, values: FloatArray) -> FloatArray:
        """Координатный градиент скалярного поля: компоненты dx_k в последней оси."""
        return np.stack([self.partial(values, k) for k in range(DIMENSION)], axis=-1)

    def neighbour_pairs(self, axis: int) -> tuple[tuple[slice, ...], tuple[slice, ...]]:
        """Срезы (p, q) соседних узлов вдоль оси; на торе без замыкающего ребра."""
        here = [slice(None)] * DIMENSION
        there = [slice(None)] * DIMENSION
        here[axis] = slice(0, -1)
        there[axis] = slice(1, None)
        return tuple(here), tuple(there)


@dataclass
class SampledForm:
    """Дифференциальная форма степени 0..3, заданная компонентами в узлах.

    1-формы: компоненты при dx1, dx2, dx3; 2-формы: при dx2∧dx3, dx3∧dx1,
    dx1∧dx2; 0- и 3-формы: одно число на узел.
    """

    degree: int
    components: FloatArray
    grid: Grid
    label: str = field(default="")

    def __post_init__(self) -> None:
        self.components = np.asarray(self.components, dtype=np.float64)
        expected = self.grid.shape if self.degree in (0, 3) else (*self.grid.shape, DIMENSION)
        if self.components.shape != expected:
            raise InputError(
                f"{self.degree}-form components have shape {self.components.shape}, expected {expected}"
            )

    @property
    def mask(self) -> npt.NDArray[np.bool_]:
        """Узлы, где форма не определена."""
        finite = np.isfinite(self.components)
        if self.degree in (1, 2):
            finite = np.all(finite, axis=-1)
        return ~finite

    def d(self) -> "SampledForm":
        return exterior_derivative(self)

    def wedge(self, other: "SampledForm") -> "SampledForm":
        """Внешнее произведение форм степеней 1∧1 и 1∧2 (2∧1)."""
        if self.degree == 1 and other.degree == 1:
            return SampledForm(2, np.cross(self.components, other.components), self.grid)
        if {self.degree, other.degree} == {1, 2}:
            top = np.einsum('...i,...i->...', self.components, other.components)
            return SampledForm(3, top, self.grid)
        if self.degree == 0:
            scale = self.components if other.degree in (0, 3) else self.components[..., None]
            return SampledForm(other.degree, scale * other.components, self.grid)
        raise InputError(f"wedge of degrees {self.degree} and {other.degree} is not supported")

    def sup(self) -> float:
        """Наибольшая величина компонент по немаскированным узлам."""
        magnitude = np.abs(self.components) if self.degree in (0, 3) else np.linalg.norm(self.components, axis=-1)
        magnitude = magnitude[~self.mask]
        return float(np.max(magnitude)) if magnitude.size else 0.0


def exterior_derivative(form: SampledForm) -> SampledForm:
    """Внешний дифференциал: градиент, ротор или дивергенция компонент."""
    grid = form.grid
    c = form.components
    if form.degree == 0:
        return SampledForm(1, grid.gradient(c), grid)
    if form.degree == 1:
        curl = np.stack([
            grid.partial(c[..., 2], 1) - grid.partial(c[..., 1], 2),
            grid.partial(c[..., 0], 2) - grid.partial(c[..., 2], 0),
            grid.partial(c[..., 1], 0) - grid.partial(c[..., 0], 1),
        ], axis=-1)
        return SampledForm(2, curl, grid)
    if form.degree == 2:  # noqa: PLR2004
        div = grid.partial(c[..., 0], 0) + grid.partial(c[..., 1], 1) + grid.partial(c[..., 2], 2)
        return SampledForm(3, div, grid)
    raise InputError("d of a 3-form vanishes identically in three dimensions")


def connected_components(mask: npt.NDArray[np.bool_], grid: Grid) -> tuple[npt.NDArray[np.int_], int]:
    """Метки связных областей узлов mask по шести соседям; 0 вне mask.

    На периодической решётке области, смыкающиеся через шов, объединяются.
    """
    labels, _ = ndimage.label(mask)
    if grid.periodic:
        merged = True
        while merged:
            merged = False
            for axis in range(mask.ndim):
                first = np.take(labels, 0, axis=axis)
                last = np.take(labels, -1, axis=axis)
                seam = (first > 0) & (last > 0) & (first != last)
                if np.any(seam):
                    a, b = int(first[seam][0]), int(last[seam][0])
                    labels[labels == max(a, b)] = min(a, b)
                    merged = True
    names = np.unique(labels[labels > 0])
    relabel = np.zeros(int(labels.max()) + 1, dtype=np.int_)
    relabel[names] = np.arange(1, names.size + 1)
    return relabel[labels], int(names.size)
