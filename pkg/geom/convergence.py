"""Observed convergence orders of refinement studies."""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Ошибки ниже порога считаются точными (нулевыми с точностью округления)
EXACT_FLOOR = 1e-12


@dataclass(frozen=True)
class RefinementStudy:
    """Шаги, ошибки и наблюдаемые порядки между соседними уровнями."""

    spacings: tuple[float, ...]
    errors: tuple[float, ...]
    orders: tuple[float, ...]
    order: float

    @property
    def exact(self) -> bool:
        return all(e <= EXACT_FLOOR for e in self.errors)

    def as_dict(self) -> dict[str, object]:
        return {
            'spacings': list(self.spacings),
            'errors': list(self.errors),
            'orders': [None if not np.isfinite(o) else o for o in self.orders],
            'order': None if not np.isfinite(self.order) else self.order,
            'exact': self.exact,
        }


def observed_orders(spacings: Sequence[float], errors: Sequence[float]) -> list[float]:
    """Порядок между соседними уровнями; точный результат даёт бесконечность."""
    orders = []
    for (h0, e0), (h1, e1) in zip(zip(spacings, errors), zip(spacings[1:], errors[1:])):
        if e1 <= EXACT_FLOOR:
            orders.append(float('inf'))
        elif e0 <= EXACT_FLOOR:
            orders.append(0.0)
        else:
            orders.append(float(np.log(e0 / e1) / np.log(h0 / h1)))
    return orders


def convergence_order(spacings: Sequence[float], errors: Sequence[float]) -> float:
    """Наклон log e от log h по методу наименьших квадратов.

    Уровни с ошибкой ниже EXACT_FLOOR отбрасываются; если их осталось меньше
    двух, результат считается точным (inf).
    """
    points = [(h, e) for h, e in zip(spacings, errors) if e > EXACT_FLOOR]
    if len(points) < 2:  # noqa: PLR2004
        return float('inf')
    log_h = np.log([p[0] for p in points])
    log_e = np.log([p[1] for p in points])
    slope, _ = np.polyfit(log_h, log_e, 1)
    return float(slope)


def refinement_study(spacings: Sequence[float], errors: Sequence[float]) -> RefinementStudy:
    return RefinementStudy(
        spacings=tuple(float(h) for h in spacings),
        errors=tuple(float(e) for e in errors),
        orders=tuple(observed_orders(spacings, errors)),
        order=convergence_order(spacings, errors),
    )
