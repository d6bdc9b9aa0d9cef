"""Исключения численного ядра."""


class GeometryError(Exception):
    """Базовая ошибка численного ядра."""
    pass


class InputError(GeometryError):
    """Некорректные входные данные (отвергаются, а не исправляются)."""
    pass


class NonPositiveMetricError(InputError):
    """Метрика не является симметричной положительно определённой."""
    pass


class NonUnitCovectorError(InputError):
    """Ковектор должен иметь единичную норму."""
    pass


class NotSelfAdjointError(InputError):
    """Оператор не самосопряжён относительно метрики."""
    pass


class DomainError(InputError):
    """Точка вне области определения отображения."""
    pass


class DegenerateMapError(GeometryError):
    """Якобиан отображения вырожден."""
    pass


class RepeatedEigenvalueError(GeometryError):
    """Спектр оператора не является простым."""
    pass


class InapplicableError(GeometryError):
    """Проверка неприменима к данному входу."""
    pass


class HolonomyError(GeometryError):
    """Согласование знаков репера невозможно (нетривиальная голономия)."""
    pass


class FrameError(GeometryError):
    """Подвижный репер не ортонормирован или не ориентирован."""
    pass


class LeafMixingError(GeometryError):
    """Отображение не сохраняет слои слоения."""
    pass


class BeltramiError(GeometryError):
    """Ошибка решения уравнения Бельтрами."""
    pass


class SolverConvergenceError(BeltramiError):
    """Итерационный решатель не сошёлся за отведённое число итераций."""
    pass
