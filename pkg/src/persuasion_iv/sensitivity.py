"""
Sensitivity of the complier outcome distribution to demobilised voters.

Without monotone treatment response the complier marginals do not pin down the
joint distribution of *(Y(0), Y(1))*.  Postulating the share *delta* of
demobilised compliers closes the system.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import attrs
import numpy as np
import pandas as pd

from .constants import APP_NAME
from .estimands import MarginalPO
from .exceptions import AdmissibleRangeError


__all__ = [
    "SensitivityPoint",
    "TABLE_COLUMNS",
    "admissible_range",
    "default_deltas",
    "sensitivity_curve",
    "sensitivity_table",
]


LOGGER = logging.getLogger(APP_NAME)

#: Number of points of the default delta grid
DEFAULT_POINTS = 6

#: Columns of :func:`sensitivity_table`
TABLE_COLUMNS = (
    "delta",
    "always_voter",
    "never_voter",
    "mobilised",
    "demobilised",
    "out_of_range",
)

_RANGE_TOL = 1e-12


@attrs.frozen
class SensitivityPoint:
    """
    The complier joint distribution for a postulated demobilised share
    *delta*.  *out_of_range* flags components outside ``[0, 1]``.
    """

    delta: float
    p11: float
    p00: float
    p01: float
    out_of_range: bool


def admissible_range(marginals: MarginalPO) -> Tuple[float, float]:
    """
    ``[0, min(P[Y(0)=1|C], P[Y(1)=0|C])]``.
    """
    return 0.0, max(0.0, min(marginals.p_y0[1], marginals.p_y1[0]))


def default_deltas(marginals: MarginalPO, points: int = DEFAULT_POINTS) -> List[float]:
    """
    Evenly spaced values covering the admissible range.
    """
    lo, hi = admissible_range(marginals)
    return [float(v) for v in np.linspace(lo, hi, points)]


def sensitivity_curve(
    marginals: MarginalPO, deltas: Optional[Sequence[float]] = None
) -> List[SensitivityPoint]:
    """
    Solve for *(p11, p00, p01)* at every *delta*.

    Raise:
        AdmissibleRangeError: If a delta lies outside :func:`admissible_range`.
    """
    lo, hi = admissible_range(marginals)
    if deltas is None:
        deltas = default_deltas(marginals)
    bad = [d for d in deltas if not lo - _RANGE_TOL <= d <= hi + _RANGE_TOL]
    if bad:
        raise AdmissibleRangeError(
            f"delta {', '.join(f'{d:g}' for d in bad)} outside the admissible "
            f"interval [{lo:g}, {hi:.6g}]"
        )
    a, b = marginals.p_y0[1], marginals.p_y1[0]
    points = []
    for delta in deltas:
        p11 = a - delta
        p00 = b - delta
        p01 = 1 - p11 - p00 - delta
        out = not all(0 <= v <= 1 for v in (p11, p00, p01))
        if out:
            LOGGER.warning(f"Sensitivity point delta={delta:g} lies outside [0, 1]")
        points.append(SensitivityPoint(float(delta), p11, p00, p01, out))
    return points


def sensitivity_table(points: Sequence[SensitivityPoint]) -> pd.DataFrame:
    """
    The curve as a table with one row per delta.
    """
    return pd.DataFrame(
        [(p.delta, p.p11, p.p00, p.p01, p.delta, p.out_of_range) for p in points],
        columns=list(TABLE_COLUMNS),
    )
