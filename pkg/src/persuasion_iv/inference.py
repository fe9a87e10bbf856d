"""
Delta-method and Anderson-Rubin inference for Wald ratios.
"""

import logging
import math
from typing import Callable, List, Optional, Tuple, Type

import attrs
import numpy as np
from scipy import optimize, stats

from .constants import APP_NAME, DENOMINATOR_GUARD
from .exceptions import (
    DegenerateDenominatorError,
    DegenerateGridError,
    DegenerateVarianceError,
    NumericalError,
    WeakFirstStageError,
)
from .moments import WaldComponents, wald_ratio
from .types import FloatArray


__all__ = [
    "RatioInference",
    "ARTest",
    "ARResult",
    "GridSpec",
    "delta_inference",
    "ar_statistic",
    "ar_test",
    "ar_confidence_set",
]


LOGGER = logging.getLogger(APP_NAME)

#: Width of the default AR grid in standard errors on either side
GRID_HALF_WIDTH = 10.0
#: Number of points of the default AR grid
GRID_POINTS = 2001
#: Tolerance of the interval endpoints
ENDPOINT_TOL = 1e-6

_MAX_DOUBLINGS = 60


def _check_alpha(alpha: float) -> None:
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


@attrs.frozen
class RatioInference:
    """
    A ratio estimate with its delta-method standard error and symmetric
    normal confidence interval at level ``1 - alpha``.
    """

    estimate: float
    se: float
    ci_lo: float
    ci_hi: float
    alpha: float


def delta_inference(
    c: WaldComponents,
    alpha: float = 0.05,
    guard: float = DENOMINATOR_GUARD,
    error: Type[DegenerateDenominatorError] = WeakFirstStageError,
) -> RatioInference:
    """
    Delta-method inference for ``beta1 / beta2``.

    Raise:
        WeakFirstStageError: (or *error*) If ``|beta2|`` is below *guard*.
    """
    _check_alpha(alpha)
    estimate = wald_ratio(c, guard, error, what="denominator")
    b1, b2 = c.beta1, c.beta2
    var = c.var1 / b2**2 - 2 * b1 * c.cov12 / b2**3 + b1**2 * c.var2 / b2**4
    se = math.sqrt(max(var, 0.0))
    half = float(stats.norm.ppf(1 - alpha / 2)) * se
    return RatioInference(estimate, se, estimate - half, estimate + half, alpha)


def _gamma(c: WaldComponents, p0: FloatArray) -> FloatArray:
    return c.var1 - 2 * p0 * c.cov12 + p0**2 * c.var2


def _residual(c: WaldComponents, p0: FloatArray, guard: float) -> FloatArray:
    # beta2 * (ratio - p0) is exactly 0 at the point estimate.
    if abs(c.beta2) >= guard:
        return c.beta2 * (c.beta1 / c.beta2 - p0)
    return c.beta1 - p0 * c.beta2


def ar_statistic(
    c: WaldComponents, p0: float, guard: float = DENOMINATOR_GUARD
) -> float:
    """
    The AR statistic ``(beta1 - p0 beta2)**2 / gamma(p0)`` with
    ``gamma(p0) = Var(beta1) - 2 p0 Cov + p0**2 Var(beta2)``.

    Raise:
        DegenerateVarianceError: If ``gamma(p0) <= 0``.
    """
    gamma = float(_gamma(c, np.float64(p0)))
    if not gamma > 0:
        raise DegenerateVarianceError(
            f"AR variance gamma({p0:.6g}) = {gamma:.6g} is not positive"
        )
    return float(_residual(c, np.float64(p0), guard) ** 2 / gamma)


@attrs.frozen
class ARTest:
    """
    The result of an AR test of ``beta1 / beta2 = p0``.
    """

    statistic: float
    reject: bool
    p_value: float


def ar_test(c: WaldComponents, p0: float, alpha: float = 0.05) -> ARTest:
    """
    Test ``H0: beta1 / beta2 = p0`` with the weak-identification robust
    Anderson-Rubin test.

    Raise:
        DegenerateVarianceError: If ``gamma(p0) <= 0``.
    """
    _check_alpha(alpha)
    statistic = ar_statistic(c, p0)
    critical = float(stats.chi2.ppf(1 - alpha, 1))
    return ARTest(statistic, statistic > critical, float(stats.chi2.sf(statistic, 1)))


@attrs.frozen
class GridSpec:
    """
    The grid of hypothesized values that is inverted.
    """

    lo: float
    hi: float
    points: int = GRID_POINTS

    def values(self) -> FloatArray:
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise DegenerateGridError(
                f"Grid bounds must be finite: {self.lo}, {self.hi}"
            )
        if not self.hi > self.lo or self.points < 2:
            raise DegenerateGridError(
                f"Degenerate grid [{self.lo}, {self.hi}] with {self.points} points"
            )
        return np.linspace(self.lo, self.hi, self.points)


@attrs.frozen
class ARResult:
    """
    The AR confidence set and the test of a null value.

    Args:
        statistic: The AR statistic at *null_value*, or ``None`` if its
            variance vanishes there.
        p_value: Its p-value (``None`` with the statistic).
        null_value: The tested value.
        intervals: Disjoint closed intervals ``(lo, hi)`` sorted ascending;
            unbounded ends are infinite.
        bounded: ``False`` if the set is unbounded.
        alpha: The level.
    """

    statistic: Optional[float]
    p_value: Optional[float]
    null_value: float
    intervals: Tuple[Tuple[float, float], ...]
    bounded: bool
    alpha: float

    def contains(self, value: float) -> bool:
        return any(lo <= value <= hi for lo, hi in self.intervals)


def _default_grid(c: WaldComponents, alpha: float) -> GridSpec:
    try:
        delta = delta_inference(c, alpha)
    except NumericalError as e:
        raise DegenerateGridError(
            f"Cannot center the default grid ({e}); pass an explicit grid"
        ) from e
    if not delta.se > 0 or not math.isfinite(delta.se):
        raise DegenerateGridError(
            f"The standard error is {delta.se}; pass an explicit grid"
        )
    half = GRID_HALF_WIDTH * delta.se
    return GridSpec(delta.estimate - half, delta.estimate + half)


def ar_confidence_set(
    c: WaldComponents,
    alpha: float = 0.05,
    grid: Optional[GridSpec] = None,
    null_value: float = 0.0,
) -> ARResult:
    """
    Invert the AR test over a grid of hypothesized values.

    Runs of non-rejected grid points become intervals whose ends are refined by
    bisection.  A run that reaches the edge of the grid is unbounded if the
    acceptance region is (the leading coefficient ``beta2**2 - c Var(beta2)``
    is negative); otherwise the grid is extended outward until a rejected
    point is found.

    Args:
        c: The Wald components.
        alpha: The level.
        grid: The grid; by default the estimate ``± 10`` standard errors with
            2001 points.
        null_value: The value whose test is reported.

    Raise:
        DegenerateGridError: If the grid is degenerate or the default grid
            cannot be built.
        DegenerateVarianceError: If ``gamma(p0) <= 0`` on the grid.
    """
    _check_alpha(alpha)
    grid = grid or _default_grid(c, alpha)
    values = grid.values()
    critical = float(stats.chi2.ppf(1 - alpha, 1))

    def excess(p0: float) -> float:
        return ar_statistic(c, p0) - critical

    gamma = _gamma(c, values)
    if not (gamma > 0).all():
        bad = float(values[np.argmax(~(gamma > 0))])
        raise DegenerateVarianceError(f"AR variance is not positive at p0 = {bad:.6g}")
    accepted = _residual(c, values, DENOMINATOR_GUARD) ** 2 / gamma <= critical
    leading = c.beta2**2 - critical * c.var2

    def outer(edge: float, direction: float) -> float:
        if leading < 0:
            return direction * math.inf
        inside = edge
        step = grid.hi - grid.lo
        for _ in range(_MAX_DOUBLINGS):
            candidate = edge + direction * step
            if excess(candidate) > 0:
                return _refine(excess, inside, candidate)
            inside = candidate
            step *= 2
        return direction * math.inf

    intervals: List[Tuple[float, float]] = []
    i = 0
    n = len(values)
    while i < n:
        if not accepted[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and accepted[j + 1]:
            j += 1
        if i == 0:
            lo = outer(float(values[0]), -1.0)
        else:
            lo = _refine(excess, float(values[i]), float(values[i - 1]))
        if j == n - 1:
            hi = outer(float(values[-1]), 1.0)
        else:
            hi = _refine(excess, float(values[j]), float(values[j + 1]))
        intervals.append((lo, hi))
        i = j + 1

    merged = _merge(intervals)
    bounded = all(math.isfinite(v) for iv in merged for v in iv)
    if not bounded:
        LOGGER.warning(f"The AR confidence set is unbounded: {merged}")
    statistic: Optional[float] = None
    p_value: Optional[float] = None
    try:
        test = ar_test(c, null_value, alpha)
        statistic, p_value = test.statistic, test.p_value
    except DegenerateVarianceError as e:
        LOGGER.warning(f"No AR test of {null_value:g}: {e}")
    return ARResult(
        statistic=statistic,
        p_value=p_value,
        null_value=null_value,
        intervals=tuple(merged),
        bounded=bounded,
        alpha=alpha,
    )


def _refine(
    excess: Callable[[float], float], inside: float, outside: float
) -> float:
    """
    Locate the boundary between an accepted and a rejected point.
    """
    if excess(inside) == 0:
        return inside
    return float(optimize.bisect(excess, inside, outside, xtol=ENDPOINT_TOL))


def _merge(intervals: List[Tuple[float, float]]) -> List[Tuple[float, float]]:
    merged: List[Tuple[float, float]] = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged
