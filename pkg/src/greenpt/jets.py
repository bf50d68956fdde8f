"""Truncated power series in the expansion parameter ``lambda``.

A :class:`SeriesJet` holds coefficients ``c_0 .. c_K`` (scalars, vectors or
matrices) of ``sum_k c_k lambda^k``; products are truncated at ``K``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


class SeriesJet:
    """Coefficients of a power series truncated at ``order``."""

    __slots__ = ("coefficients", "order")

    def __init__(self, coefficients: Sequence, order: int | None = None):
        coeffs = [np.asarray(c) if not np.isscalar(c) else c for c in coefficients]
        if order is None:
            order = len(coeffs) - 1
        if order < 0:
            raise ValueError("truncation order must be non-negative")
        zero = 0.0 * coeffs[0] if coeffs else 0.0
        coeffs = (coeffs + [zero] * (order + 1))[: order + 1]
        self.coefficients = coeffs
        self.order = order

    def __getitem__(self, k):
        return self.coefficients[k]

    def __len__(self):
        return self.order + 1

    def __repr__(self):
        return f"SeriesJet(order={self.order})"

    def _pair(self, other):
        order = min(self.order, other.order)
        return order, self.coefficients[: order + 1], other.coefficients[: order + 1]

    def __add__(self, other):
        if not isinstance(other, SeriesJet):
            return SeriesJet([self[0] + other] + self.coefficients[1:], self.order)
        order, a, b = self._pair(other)
        return SeriesJet([x + y for x, y in zip(a, b)], order)

    __radd__ = __add__

    def __neg__(self):
        return SeriesJet([-c for c in self.coefficients], self.order)

    def __sub__(self, other):
        return self + (-other)

    def _cauchy(self, other, mul):
        order, a, b = self._pair(other)
        out = []
        for k in range(order + 1):
            acc = mul(a[0], b[k])
            for i in range(1, k + 1):
                acc = acc + mul(a[i], b[k - i])
            out.append(acc)
        return SeriesJet(out, order)

    def __mul__(self, other):
        if not isinstance(other, SeriesJet):
            return SeriesJet([c * other for c in self.coefficients], self.order)
        return self._cauchy(other, lambda x, y: x * y)

    def __rmul__(self, other):
        return SeriesJet([other * c for c in self.coefficients], self.order)

    def __matmul__(self, other):
        return self._cauchy(other, lambda x, y: x @ y)

    def shift(self, k: int = 1) -> "SeriesJet":
        """Multiply by ``lambda^k`` (coefficients beyond the order are dropped)."""
        zero = 0.0 * self.coefficients[0]
        return SeriesJet([zero] * k + self.coefficients[: self.order + 1 - k], self.order)

    def truncate(self, order: int) -> "SeriesJet":
        return SeriesJet(self.coefficients[: order + 1], order)

    def evaluate(self, lam: float):
        """Partial sum ``sum_k c_k lam^k``."""
        total = self.coefficients[0]
        for k in range(1, self.order + 1):
            total = total + self.coefficients[k] * lam**k
        return total

    def partial_sums(self, lam: float = 1.0) -> list:
        out, total = [], None
        for k, c in enumerate(self.coefficients):
            total = c * lam**k if total is None else total + c * lam**k
            out.append(total)
        return out


def compose(taylor: Sequence, shift: SeriesJet) -> SeriesJet:
    """``f(x0 + s(lambda))`` from Taylor coefficients ``taylor[j] = f^(j)(x0)/j!``.

    ``shift`` is a scalar jet with zero constant term, so ``s^j`` starts at
    ``lambda^j`` and only ``order + 1`` Taylor coefficients are needed.
    """
    if shift[0] != 0:
        raise ValueError("composition needs a jet with vanishing constant term")
    order = shift.order
    if len(taylor) < order + 1:
        raise ValueError(f"need {order + 1} Taylor coefficients, got {len(taylor)}")
    result = SeriesJet([taylor[0]], order)
    power = SeriesJet([1.0], order)
    for j in range(1, order + 1):
        power = power * shift
        result = result + power * taylor[j]
    return result
