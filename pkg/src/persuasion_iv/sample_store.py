"""
Loading, validation and partitioning of experiment data.

A sample holds a binary outcome *y*, a binary treatment *t*, an integer-coded
instrument *z* and a (possibly empty) vector of real covariates *x* per row.
Samples are immutable: all arrays are read-only and every operation returns a
new sample.
"""

import itertools
import logging
import math
import re
import warnings
from pathlib import Path
from typing import (
    IO,
    Dict,
    Iterator,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import attrs
import numpy as np
import pandas as pd

from .constants import APP_NAME
from .exceptions import InstrumentOrientationWarning, SampleValidationError
from .types import ArmData, FloatArray, IntArray


__all__ = [
    "ObservedRow",
    "ObservedSample",
    "CsvSchema",
    "Interval",
    "BinSpec",
    "Cell",
    "CellPartition",
    "load_csv",
    "write_csv",
    "restrict_pair",
    "partition_cells",
    "parse_bins",
]


LOGGER = logging.getLogger(APP_NAME)

_INT_RE = re.compile(r"^[+-]?\d+$")


def _readonly_int(value: Sequence[int]) -> IntArray:
    arr = np.array(value, dtype=np.int64)
    arr.setflags(write=False)
    return arr


def _readonly_x(value: Union[Sequence[Sequence[float]], FloatArray]) -> FloatArray:
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    arr.setflags(write=False)
    return arr


@attrs.frozen
class ObservedRow:
    """
    A single observation.
    """

    y: int
    t: int
    z: int
    x: Tuple[float, ...] = ()


@attrs.frozen(eq=False)
class ObservedSample:
    """
    An immutable sample of *(y, t, z, x)* rows stored column-wise.

    Args:
        y: Binary outcomes.
        t: Binary treatments.
        z: Integer instrument codes.
        x: An *(n, p)* matrix of covariates (*p* may be 0).
        covariates: The covariate names (one per column of *x*).
        level_labels: Original instrument codes of the current levels, set by
            :func:`restrict_pair`.  ``None`` for raw data.
    """

    y: IntArray = attrs.field(converter=_readonly_int)
    t: IntArray = attrs.field(converter=_readonly_int)
    z: IntArray = attrs.field(converter=_readonly_int)
    x: FloatArray = attrs.field(converter=_readonly_x)
    covariates: Tuple[str, ...] = attrs.field(default=(), converter=tuple)
    level_labels: Optional[Tuple[int, ...]] = None

    #: Observed samples are unweighted (see the ``ArmData`` protocol).
    weights = None

    def __attrs_post_init__(self) -> None:
        n = self.y.shape[0]
        if n < 1:
            raise SampleValidationError("A sample needs at least one row")
        if self.y.ndim != 1 or self.t.shape != (n,) or self.z.shape != (n,):
            raise SampleValidationError("y, t and z must be vectors of equal length")
        if self.x.shape[0] != n:
            raise SampleValidationError(
                f"x has {self.x.shape[0]} rows but the sample has {n}"
            )
        if self.x.shape[1] != len(self.covariates):
            raise SampleValidationError(
                f"x has {self.x.shape[1]} columns but {len(self.covariates)} "
                f"covariate names were given"
            )
        for name, col in (("y", self.y), ("t", self.t)):
            if not np.isin(col, (0, 1)).all():
                row = int(np.argmax(~np.isin(col, (0, 1)))) + 1
                raise SampleValidationError(
                    f"row {row}, column {name!r}: expected 0 or 1, "
                    f"got {int(col[row - 1])}"
                )
        if not np.isfinite(self.x).all():
            raise SampleValidationError("Covariates must be finite")

    @classmethod
    def from_rows(
        cls, rows: Sequence[ObservedRow], covariates: Sequence[str] = ()
    ) -> "ObservedSample":
        """
        Build a sample from a list of rows.
        """
        p = len(covariates)
        if any(len(r.x) != p for r in rows):
            raise SampleValidationError(f"Every row needs exactly {p} covariates")
        x = np.array([r.x for r in rows], dtype=np.float64).reshape(len(rows), p)
        return cls(
            y=[r.y for r in rows],
            t=[r.t for r in rows],
            z=[r.z for r in rows],
            x=x,
            covariates=tuple(covariates),
        )

    @property
    def n(self) -> int:
        """
        The number of rows.
        """
        return int(self.y.shape[0])

    @property
    def instrument_levels(self) -> Tuple[int, ...]:
        """
        The sorted distinct instrument codes.
        """
        return tuple(int(v) for v in np.unique(self.z))

    @property
    def labels(self) -> Tuple[int, ...]:
        """
        The original codes of :attr:`instrument_levels`.
        """
        if self.level_labels is None:
            return self.instrument_levels
        return self.level_labels

    def rows(self) -> Iterator[ObservedRow]:
        """
        Iterate over the sample row by row.
        """
        for i in range(self.n):
            yield ObservedRow(
                int(self.y[i]),
                int(self.t[i]),
                int(self.z[i]),
                tuple(float(v) for v in self.x[i]),
            )

    def take(self, index: IntArray) -> "ObservedSample":
        """
        Return the rows at *index* (e.g., a subsample) as a new sample.
        """
        return ObservedSample(
            y=self.y[index],
            t=self.t[index],
            z=self.z[index],
            x=self.x[index],
            covariates=self.covariates,
            level_labels=self.level_labels,
        )


@attrs.frozen
class CsvSchema:
    """
    Column names of a sample file.

    Args:
        outcome: Name of the outcome column.
        treatment: Name of the treatment column.
        instrument: Name of the instrument column.
        covariates: Covariate columns.  ``None`` uses all remaining columns in
            file order.
    """

    outcome: str = "y"
    treatment: str = "t"
    instrument: str = "z"
    covariates: Optional[Tuple[str, ...]] = None


def load_csv(path: Union[str, Path], schema: CsvSchema = CsvSchema()) -> ObservedSample:
    """
    Load and validate a sample from a UTF-8 CSV file with a header row.

    Row order is preserved.  Lines starting with "#" (such as the config
    header of simulated samples) are skipped.  Rows are numbered from 1 (the
    first data row) in error messages.

    Args:
        path: The CSV file.
        schema: The column names to use.

    Return:
        The validated sample.

    Raise:
        SampleValidationError: If the file is missing or empty, a column is
            missing, or an entry is invalid or missing.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(
            path, dtype=str, keep_default_na=False, comment="#", encoding="utf-8"
        )
    except FileNotFoundError as e:
        raise SampleValidationError(f"No such file: {path}") from e
    except pd.errors.EmptyDataError as e:
        raise SampleValidationError(f"{path}: empty file") from e
    except (UnicodeDecodeError, pd.errors.ParserError) as e:
        raise SampleValidationError(f"{path}: cannot parse CSV: {e}") from e

    if frame.shape[0] == 0:
        raise SampleValidationError(f"{path}: no data rows")

    required = (schema.outcome, schema.treatment, schema.instrument)
    if schema.covariates is None:
        covariates = tuple(c for c in frame.columns if c not in required)
    else:
        covariates = schema.covariates
    missing = [c for c in (*required, *covariates) if c not in frame.columns]
    if missing:
        raise SampleValidationError(
            f"{path}: missing column(s): {', '.join(repr(c) for c in missing)}"
        )

    def column(name: str) -> List[str]:
        return [v.strip() for v in frame[name].tolist()]

    def fail(row: int, name: str, problem: str) -> SampleValidationError:
        return SampleValidationError(f"{path}: row {row}, column {name!r}: {problem}")

    binary: Dict[str, List[int]] = {}
    for name in (schema.outcome, schema.treatment):
        values = []
        for row, raw in enumerate(column(name), start=1):
            if raw == "":
                raise fail(row, name, "missing value")
            if raw not in ("0", "1"):
                raise fail(row, name, f"expected 0 or 1, got {raw!r}")
            values.append(int(raw))
        binary[name] = values

    z = []
    for row, raw in enumerate(column(schema.instrument), start=1):
        if raw == "":
            raise fail(row, schema.instrument, "missing value")
        if not _INT_RE.match(raw):
            raise fail(row, schema.instrument, f"expected an integer, got {raw!r}")
        z.append(int(raw))

    x = np.empty((frame.shape[0], len(covariates)), dtype=np.float64)
    for j, name in enumerate(covariates):
        for row, raw in enumerate(column(name), start=1):
            if raw == "":
                raise fail(row, name, "missing value")
            try:
                value = float(raw)
            except ValueError:
                raise fail(row, name, f"expected a number, got {raw!r}") from None
            if not math.isfinite(value):
                raise fail(row, name, f"expected a finite number, got {raw!r}")
            x[row - 1, j] = value

    sample = ObservedSample(
        y=binary[schema.outcome],
        t=binary[schema.treatment],
        z=z,
        x=x,
        covariates=covariates,
    )
    LOGGER.info(
        f"Loaded {sample.n} rows with {len(covariates)} covariate(s) from {path}"
    )
    return sample


def write_csv(sample: ObservedSample, path: Union[str, Path, IO[str]]) -> None:
    """
    Write *sample* as CSV so that :func:`load_csv` restores it bit for bit.

    Covariates are written with :func:`repr`, the shortest representation that
    round-trips.  Instrument codes are the current (possibly recoded) ones.
    """
    columns: Dict[str, List[str]] = {
        "y": [str(int(v)) for v in sample.y],
        "t": [str(int(v)) for v in sample.t],
        "z": [str(int(v)) for v in sample.z],
    }
    for j, name in enumerate(sample.covariates):
        columns[name] = [repr(float(v)) for v in sample.x[:, j]]
    pd.DataFrame(columns).to_csv(path, index=False, lineterminator="\n")


def restrict_pair(sample: ObservedSample, z_lo: int, z_hi: int) -> ObservedSample:
    """
    Keep the rows with instrument *z_lo* or *z_hi* and recode them to 0/1.

    *z_lo* becomes 0 and *z_hi* becomes 1.  If that orientation gives a
    negative first stage, the codes are swapped and an
    :class:`.InstrumentOrientationWarning` is issued.  Restricting a sample
    again to the same pair returns it unchanged.

    Args:
        sample: The sample (levels are looked up by their original codes).
        z_lo: Instrument level mapped to 0.
        z_hi: Instrument level mapped to 1.

    Raise:
        SampleValidationError: If the levels are equal or one is absent.
    """
    if z_lo == z_hi:
        raise SampleValidationError(
            f"Instrument levels must differ, got ({z_lo}, {z_hi})"
        )
    labels = sample.labels
    for level in (z_lo, z_hi):
        if level not in labels:
            available = ", ".join(str(v) for v in labels)
            raise SampleValidationError(
                f"Instrument level {level} not present (available: {available})"
            )
    if sample.level_labels is not None and set(labels) == {z_lo, z_hi}:
        return sample

    levels = sample.instrument_levels
    code_lo = levels[labels.index(z_lo)]
    code_hi = levels[labels.index(z_hi)]
    keep = np.flatnonzero((sample.z == code_lo) | (sample.z == code_hi))
    z = (sample.z[keep] == code_hi).astype(np.int64)
    t = sample.t[keep]
    first_stage = t[z == 1].mean() - t[z == 0].mean()
    new_labels = (z_lo, z_hi)
    if first_stage < 0:
        msg = (
            f"Instrument pair ({z_lo}, {z_hi}) has a negative first stage "
            f"({first_stage:.6g}); using ({z_hi}, {z_lo}) instead"
        )
        LOGGER.warning(msg)
        warnings.warn(msg, InstrumentOrientationWarning, stacklevel=2)
        z = 1 - z
        new_labels = (z_hi, z_lo)

    return ObservedSample(
        y=sample.y[keep],
        t=t,
        z=z,
        x=sample.x[keep],
        covariates=sample.covariates,
        level_labels=new_labels,
    )


@attrs.frozen
class Interval:
    """
    A half-open covariate bin ``[lo, hi)``.
    """

    lo: float
    hi: float

    def __attrs_post_init__(self) -> None:
        if not self.lo < self.hi:
            raise SampleValidationError(f"Empty bin: [{self.lo}, {self.hi})")

    def contains(self, values: FloatArray) -> np.ndarray:
        return (values >= self.lo) & (values < self.hi)

    def __str__(self) -> str:
        return f"[{self.lo:g}, {self.hi:g})"


def parse_bins(text: str) -> Tuple[Interval, ...]:
    """
    Parse bins like ``"18:30,30:65,65:inf"``.
    """
    bins = []
    for part in text.split(","):
        lo, sep, hi = part.strip().partition(":")
        try:
            if not sep:
                raise ValueError(part)
            bins.append(Interval(float(lo), float(hi)))
        except ValueError:
            raise SampleValidationError(
                f"Invalid bin {part.strip()!r}, expected 'lo:hi'"
            ) from None
    return tuple(bins)


@attrs.frozen
class BinSpec:
    """
    Which covariates define the cells and how they are binned.

    Args:
        covariates: Covariates whose (binned) values are fully interacted.  No
            covariates means a single cell.
        bins: Explicit bins per covariate.  Covariates without bins get one
            cell per observed level.
    """

    covariates: Tuple[str, ...] = attrs.field(default=(), converter=tuple)
    bins: Mapping[str, Tuple[Interval, ...]] = attrs.field(factory=dict)


Condition = Tuple[int, Union[float, Interval]]


@attrs.frozen
class Cell:
    """
    A cell of a partition: the conjunction of one condition per covariate.
    """

    index: int
    label: str
    conditions: Tuple[Condition, ...]

    def contains(self, x: FloatArray) -> np.ndarray:
        member = np.ones(x.shape[0], dtype=bool)
        for col, cond in self.conditions:
            if isinstance(cond, Interval):
                member &= cond.contains(x[:, col])
            else:
                member &= x[:, col] == cond
        return member


@attrs.frozen
class CellPartition:
    """
    Mutually exclusive, exhaustive cells over the covariate values.
    """

    cells: Tuple[Cell, ...]
    covariates: Tuple[str, ...] = ()

    @property
    def K(self) -> int:  # noqa: N802
        return len(self.cells)

    def assign(self, x: FloatArray) -> IntArray:
        """
        Return the cell index of every row of *x*.

        Raise:
            SampleValidationError: If a row lies in no cell.
        """
        out = np.full(x.shape[0], -1, dtype=np.int64)
        for cell in self.cells:
            out[cell.contains(x)] = cell.index
        if (out < 0).any():
            row = int(np.argmax(out < 0)) + 1
            raise SampleValidationError(f"Row {row} lies in no cell of the partition")
        return out

    def counts(self, x: FloatArray) -> IntArray:
        """
        The number of rows per cell.
        """
        return np.bincount(self.assign(x), minlength=self.K).astype(np.int64)

    def masses(self, x: FloatArray, weights: Optional[FloatArray] = None) -> FloatArray:
        """
        The (weighted) share of rows per cell.
        """
        cells = self.assign(x)
        if weights is None:
            weights = np.ones(x.shape[0])
        mass = np.bincount(cells, weights=weights, minlength=self.K)
        return np.asarray(mass / weights.sum(), dtype=np.float64)


def partition_cells(
    sample: ArmData, spec: BinSpec = BinSpec(), discrete_only: bool = False
) -> CellPartition:
    """
    Partition the covariate space into cells.

    Every selected covariate contributes its bins (or one cell per observed
    level), and the cells are the full interaction in the order of
    ``spec.covariates``.  Cells are ordered lexicographically, with levels
    and bins ascending.

    Args:
        sample: The sample or population.
        spec: The selected covariates and their bins.
        discrete_only: Reject covariates with non-integer values unless they
            are binned (the falsifier needs discrete cells).

    Raise:
        SampleValidationError: If a covariate is unknown, user bins overlap
            or miss an observed value, or *discrete_only* is set and an
            unbinned covariate is continuous.
    """
    unknown = [c for c in (*spec.covariates, *spec.bins) if c not in sample.covariates]
    if unknown:
        raise SampleValidationError(
            f"Unknown covariate(s): {', '.join(repr(c) for c in unknown)}"
        )
    unused = [c for c in spec.bins if c not in spec.covariates]
    if unused:
        raise SampleValidationError(
            f"Bins given for unselected covariate(s): {', '.join(unused)}"
        )

    axes: List[List[Tuple[str, Condition]]] = []
    for name in spec.covariates:
        col = sample.covariates.index(name)
        values = sample.x[:, col]
        if name in spec.bins:
            bins = sorted(spec.bins[name], key=lambda b: b.lo)
            for a, b in zip(bins, bins[1:]):
                if a.hi > b.lo:
                    raise SampleValidationError(
                        f"Overlapping bins for {name!r}: {a} and {b}"
                    )
            covered = np.zeros(values.shape[0], dtype=bool)
            for b in bins:
                covered |= b.contains(values)
            if not covered.all():
                value = float(values[np.argmax(~covered)])
                raise SampleValidationError(
                    f"Bins for {name!r} do not cover the observed value {value:g}"
                )
            axes.append([(f"{name}∈{b}", (col, b)) for b in bins])
        else:
            if discrete_only and not np.array_equal(values, np.round(values)):
                raise SampleValidationError(
                    f"Covariate {name!r} has non-integer values; "
                    f"bin it, e.g. {name}=lo:mid,mid:hi"
                )
            levels = np.unique(values)
            if levels.size > 50:
                LOGGER.warning(
                    f"Covariate {name!r} has {levels.size} levels; "
                    f"consider explicit bins"
                )
            axes.append([(f"{name}={v:g}", (col, float(v))) for v in levels])

    cells = []
    for index, combo in enumerate(itertools.product(*axes)):
        label = ", ".join(lbl for lbl, _ in combo) or "all"
        cells.append(Cell(index, label, tuple(cond for _, cond in combo)))
    return CellPartition(tuple(cells), tuple(spec.covariates))
