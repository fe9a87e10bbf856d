"""
Instrument-arm means and Wald-form estimands.

Every estimand in this package is a ratio of two instrument-arm mean
differences, ``beta1 / beta2``.  This module computes those differences and the
heteroskedasticity-robust covariance of the pair, on observed samples as well
as on weighted population tables.
"""

import logging
from typing import Sequence, Tuple, Type

import attrs
import numpy as np

from .constants import APP_NAME, DENOMINATOR_GUARD
from .exceptions import (
    DegenerateDenominatorError,
    SampleValidationError,
    WeakFirstStageError,
)
from .types import ArmData, FloatArray, RowTransform


__all__ = [
    "TransformSpec",
    "WaldComponents",
    "require_binary",
    "instrument_share",
    "arm_mean",
    "contrast",
    "wald_components",
    "mixed_wald_components",
    "single_arm_components",
    "wald_ratio",
]


LOGGER = logging.getLogger(APP_NAME)


@attrs.frozen
class TransformSpec:
    """
    The numerator transform *f(y, t, x)* and denominator transform *h(y, t, x)*
    of a Wald estimand.
    """

    f: RowTransform
    h: RowTransform


def _readonly_cov(value: FloatArray) -> FloatArray:
    arr = np.array(value, dtype=np.float64).reshape(2, 2)
    arr.setflags(write=False)
    return arr


@attrs.frozen(eq=False)
class WaldComponents:
    """
    The coefficients of a Wald estimand and their joint covariance.

    Args:
        beta1: Numerator coefficient (difference in arm means of *f*).
        beta2: Denominator coefficient (difference in arm means of *h*).
        cov: 2x2 covariance of *(beta1, beta2)*, already divided by the arm
            sizes.
        n: Sample size (nominal for population tables).
        pz1: Share of rows with ``z == 1``.
    """

    beta1: float
    beta2: float
    cov: FloatArray = attrs.field(converter=_readonly_cov)
    n: int
    pz1: float

    @property
    def var1(self) -> float:
        return float(self.cov[0, 0])

    @property
    def var2(self) -> float:
        return float(self.cov[1, 1])

    @property
    def cov12(self) -> float:
        return float(self.cov[0, 1])


def require_binary(data: ArmData) -> None:
    """
    Check that the instrument is coded 0/1 and both arms are non-empty.

    Raise:
        SampleValidationError: If not.
    """
    levels = set(np.unique(data.z).tolist())
    if not levels <= {0, 1}:
        raise SampleValidationError(
            f"Instrument levels {sorted(levels)} are not binary; "
            f"restrict the sample to a pair of levels first"
        )
    for arm in (0, 1):
        if arm not in levels:
            raise SampleValidationError(f"Instrument arm z={arm} is empty")


def _weights(data: ArmData) -> FloatArray:
    if data.weights is None:
        return np.ones(data.z.shape[0])
    return np.asarray(data.weights, dtype=np.float64)


def instrument_share(data: ArmData) -> float:
    """
    The (weighted) share of rows with ``z == 1``.
    """
    w = _weights(data)
    return float(w[data.z == 1].sum() / w.sum())


def _evaluate(data: ArmData, transforms: Sequence[RowTransform]) -> FloatArray:
    n = data.z.shape[0]
    rows = [
        np.broadcast_to(np.asarray(fn(data.y, data.t, data.x), dtype=np.float64), (n,))
        for fn in transforms
    ]
    return np.vstack(rows)


def _arm_stats(
    data: ArmData, values: FloatArray, arm: int
) -> Tuple[FloatArray, FloatArray]:
    """
    Mean vector and covariance of the mean vector for one arm.
    """
    mask = data.z == arm
    k = values.shape[0]
    block = values[:, mask]
    if block.shape[1] == 0:
        raise SampleValidationError(f"Instrument arm z={arm} is empty")

    if data.weights is None:
        size = block.shape[1]
        mean = block.mean(axis=1)
        if size == 1:
            LOGGER.warning(f"Arm z={arm} has a single row; its variance is set to 0")
            return mean, np.zeros((k, k))
        return mean, np.cov(block, ddof=1).reshape(k, k) / size

    w = _weights(data)
    wa = w[mask]
    mass = wa.sum()
    mean = block @ wa / mass
    dev = block - mean[:, None]
    # Asymptotic covariance at the nominal sample size.
    share = mass / w.sum()
    cov = (dev * wa) @ dev.T / mass / (data.n * share)
    return mean, cov


def arm_mean(data: ArmData, g: RowTransform, arm: int) -> float:
    """
    The (weighted) mean of *g* over the rows with ``z == arm``.

    Raise:
        SampleValidationError: If the arm is empty.
    """
    values = _evaluate(data, [g])
    mean, _ = _arm_stats(data, values, arm)
    return float(mean[0])


def contrast(
    data: ArmData, transforms: Sequence[RowTransform]
) -> Tuple[FloatArray, FloatArray]:
    """
    Differences in arm means (``z=1`` minus ``z=0``) of several transforms and
    their joint robust covariance.

    The covariance is the sum of the within-arm covariances of the means
    (sample covariances with ``n - 1`` denominators divided by the arm size).

    Return:
        A tuple *(delta, cov)* with shapes *(k,)* and *(k, k)*.
    """
    require_binary(data)
    values = _evaluate(data, transforms)
    mean1, cov1 = _arm_stats(data, values, 1)
    mean0, cov0 = _arm_stats(data, values, 0)
    return mean1 - mean0, cov1 + cov0


def wald_components(data: ArmData, spec: TransformSpec) -> WaldComponents:
    """
    Compute the Wald coefficients of *spec* and their robust covariance.

    Raise:
        SampleValidationError: If an instrument arm is empty.
    """
    delta, cov = contrast(data, [spec.f, spec.h])
    return WaldComponents(
        beta1=float(delta[0]),
        beta2=float(delta[1]),
        cov=cov,
        n=data.n,
        pz1=instrument_share(data),
    )


def mixed_wald_components(
    data: ArmData, f0: RowTransform, f1: RowTransform, h: RowTransform
) -> WaldComponents:
    """
    Wald components of ``(1 - q) * delta(f0) / delta(h) + q * delta(f1) / delta(h)``
    where *q* is the share of ``z == 1``.

    This is the form of every profile whose function is evaluated at the
    instrument value: *f0* and *f1* are the numerator transforms with the
    function evaluated at ``z = 0`` and ``z = 1``.

    The variance of the numerator adds ``(delta(f1) - delta(f0))**2 q (1-q) / n``
    for the estimated share, whose influence function is uncorrelated with the
    arm mean differences.
    """
    require_binary(data)
    values = _evaluate(data, [f0, f1, h])
    mean1, cov1 = _arm_stats(data, values, 1)
    mean0, cov0 = _arm_stats(data, values, 0)
    delta = mean1 - mean0
    stacked = cov1 + cov0
    q = instrument_share(data)

    if np.array_equal(values[0], values[1]):
        beta1 = float(delta[0])
    else:
        beta1 = float((1 - q) * delta[0] + q * delta[1])
    jac = np.array([[1 - q, q, 0.0], [0.0, 0.0, 1.0]])
    cov = jac @ stacked @ jac.T
    cov[0, 0] += (delta[1] - delta[0]) ** 2 * q * (1 - q) / data.n
    return WaldComponents(beta1=beta1, beta2=float(delta[2]), cov=cov, n=data.n, pz1=q)


def single_arm_components(
    data: ArmData, f: RowTransform, h: RowTransform, arm: int
) -> WaldComponents:
    """
    Components of the within-arm ratio ``E[f | Z=arm] / E[h | Z=arm]``.

    Used for conditional means on events that only occur in one arm (e.g.
    always-takers are the treated rows of arm 0).
    """
    require_binary(data)
    values = _evaluate(data, [f, h])
    mean, cov = _arm_stats(data, values, arm)
    return WaldComponents(
        beta1=float(mean[0]),
        beta2=float(mean[1]),
        cov=cov,
        n=data.n,
        pz1=instrument_share(data),
    )


def wald_ratio(
    c: WaldComponents,
    guard: float = DENOMINATOR_GUARD,
    error: Type[DegenerateDenominatorError] = WeakFirstStageError,
    what: str = "first stage",
) -> float:
    """
    Return ``beta1 / beta2``.

    Args:
        c: The Wald components.
        guard: Smallest admissible ``|beta2|``.
        error: The error class raised below the guard.
        what: Name of the denominator in the error message.

    Raise:
        WeakFirstStageError: (or *error*) If ``|beta2| < guard``.
    """
    if not abs(c.beta2) >= guard:
        raise error(f"The {what} is degenerate: |{c.beta2:.6g}| < {guard:g}")
    return c.beta1 / c.beta2
