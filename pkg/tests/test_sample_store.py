"""
Tests for "persuasion_iv.sample_store".
"""

import textwrap
import warnings
from pathlib import Path

import numpy as np
import pytest

from persuasion_iv.exceptions import InstrumentOrientationWarning, SampleValidationError
from persuasion_iv.sample_store import (
    BinSpec,
    CsvSchema,
    Interval,
    ObservedRow,
    ObservedSample,
    load_csv,
    parse_bins,
    partition_cells,
    restrict_pair,
    write_csv,
)


def write(tmp_path: Path, text: str) -> Path:
    path = tmp_path.joinpath("data.csv")
    path.write_text(textwrap.dedent(text), encoding="utf-8")
    return path


class TestLoadCsv:
    """Tests for "load_csv"."""

    def test_load(self, tmp_path: Path) -> None:
        """
        Columns are parsed and row order is kept.
        """
        path = write(
            tmp_path,
            """\
            y,t,z,age,female
            1,1,1,34,0
            0,0,0,51.5,1
            0,1,0,22,1
            """,
        )
        sample = load_csv(path)
        assert sample.n == 3
        assert sample.covariates == ("age", "female")
        assert sample.y.tolist() == [1, 0, 0]
        assert sample.t.tolist() == [1, 0, 1]
        assert sample.z.tolist() == [1, 0, 0]
        assert sample.x.tolist() == [[34.0, 0.0], [51.5, 1.0], [22.0, 1.0]]

    def test_comment_lines(self, tmp_path: Path) -> None:
        """
        Lines starting with "#" are skipped.
        """
        path = write(
            tmp_path,
            """\
            # config: {"command": "simulate", "seed": 3}
            y,t,z,x
            1,1,1,0.0
            0,0,0,1.0
            """,
        )
        sample = load_csv(path)
        assert sample.n == 2
        assert sample.covariates == ("x",)

    def test_schema(self, tmp_path: Path) -> None:
        """
        Column names and the covariate selection come from the schema.
        """
        path = write(
            tmp_path,
            """\
            voted,treated,letter,age,female
            1,1,2,34,0
            """,
        )
        schema = CsvSchema("voted", "treated", "letter", ("female",))
        sample = load_csv(path, schema)
        assert sample.covariates == ("female",)
        assert sample.z.tolist() == [2]

    @pytest.mark.parametrize(
        "text, problem",
        [
            ("y,t,z\n", "no data rows"),
            ("y,t\n1,1\n", "missing column(s): 'z'"),
            ("y,t,z\n1,1,1\n2,1,1\n", "row 2, column 'y': expected 0 or 1, got '2'"),
            ("y,t,z\n1,,1\n", "row 1, column 't': missing value"),
            ("y,t,z\n1,1,0.5\n", "row 1, column 'z': expected an integer"),
            ("y,t,z,age\n1,1,1,old\n", "row 1, column 'age': expected a number"),
            ("y,t,z,age\n1,1,1,inf\n", "expected a finite number"),
        ],
    )
    def test_invalid(self, text: str, problem: str, tmp_path: Path) -> None:
        """
        Invalid files are rejected with the row and column of the problem.
        """
        path = write(tmp_path, text)
        with pytest.raises(SampleValidationError) as exc_info:
            load_csv(path)
        assert problem in str(exc_info.value)

    def test_missing_file(self, tmp_path: Path) -> None:
        """
        A missing file is a validation error.
        """
        with pytest.raises(SampleValidationError, match="No such file"):
            load_csv(tmp_path.joinpath("missing.csv"))

    def test_write_load_is_exact(self, sample: ObservedSample, tmp_path: Path) -> None:
        """
        Writing and loading a sample restores it bit for bit.
        """
        noisy = ObservedSample(
            y=sample.y,
            t=sample.t,
            z=sample.z,
            x=sample.x + np.linspace(0, 1 / 3, sample.n)[:, None],
            covariates=sample.covariates,
        )
        path = tmp_path.joinpath("out.csv")
        write_csv(noisy, path)
        loaded = load_csv(path)
        assert loaded.covariates == noisy.covariates
        assert np.array_equal(loaded.x, noisy.x)
        assert np.array_equal(loaded.y, noisy.y)
        assert np.array_equal(loaded.z, noisy.z)


class TestObservedSample:
    """Tests for "ObservedSample"."""

    def test_from_rows(self) -> None:
        """
        Samples can be built row by row and iterated.
        """
        rows = [ObservedRow(1, 0, 1, (2.0,)), ObservedRow(0, 1, 0, (3.0,))]
        sample = ObservedSample.from_rows(rows, ["age"])
        assert list(sample.rows()) == rows

    def test_immutable(self, sample: ObservedSample) -> None:
        """
        Columns are read-only.
        """
        with pytest.raises(ValueError):
            sample.y[0] = 1

    def test_non_binary(self) -> None:
        """
        Outcomes must be 0/1.
        """
        with pytest.raises(SampleValidationError, match="column 'y'"):
            ObservedSample(y=[0, 3], t=[0, 1], z=[0, 1], x=np.zeros((2, 0)))


class TestRestrictPair:
    """Tests for "restrict_pair"."""

    @pytest.fixture
    def three_levels(self) -> ObservedSample:
        return ObservedSample(
            y=[0, 1, 1, 0, 1, 0],
            t=[0, 1, 1, 0, 1, 1],
            z=[1, 3, 3, 1, 5, 5],
            x=np.zeros((6, 0)),
        )

    def test_relabel(self, three_levels: ObservedSample) -> None:
        """
        The two levels are recoded to 0/1 and the others dropped.
        """
        restricted = restrict_pair(three_levels, 1, 3)
        assert restricted.z.tolist() == [0, 1, 1, 0]
        assert restricted.labels == (1, 3)
        assert restricted.instrument_levels == (0, 1)

    def test_idempotent(self, three_levels: ObservedSample) -> None:
        """
        Restricting to the same pair again returns the sample unchanged.
        """
        restricted = restrict_pair(three_levels, 1, 3)
        assert restrict_pair(restricted, 1, 3) is restricted

    def test_swap_negative_first_stage(self, three_levels: ObservedSample) -> None:
        """
        A negative first stage swaps the orientation with a warning.
        """
        with pytest.warns(InstrumentOrientationWarning):
            restricted = restrict_pair(three_levels, 3, 1)
        assert restricted.labels == (1, 3)
        assert restricted.z.tolist() == [0, 1, 1, 0]

    def test_no_warning_when_positive(self, three_levels: ObservedSample) -> None:
        """
        No warning is issued for a positive first stage.
        """
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            restrict_pair(three_levels, 1, 5)

    @pytest.mark.parametrize("pair", [(1, 1), (1, 7)])
    def test_invalid(self, three_levels: ObservedSample, pair: tuple) -> None:
        """
        Levels must differ and be present.
        """
        with pytest.raises(SampleValidationError):
            restrict_pair(three_levels, *pair)


class TestCells:
    """Tests for bins and cell partitions."""

    def test_parse_bins(self) -> None:
        """
        Bins are half-open intervals.
        """
        assert parse_bins("18:30, 30:inf") == (
            Interval(18.0, 30.0),
            Interval(30.0, float("inf")),
        )

    @pytest.mark.parametrize("text", ["18-30", "30:18", "a:b"])
    def test_parse_bins_invalid(self, text: str) -> None:
        """
        Malformed or empty bins are rejected.
        """
        with pytest.raises(SampleValidationError):
            parse_bins(text)

    def test_single_cell(self, sample: ObservedSample) -> None:
        """
        Without covariates there is one cell.
        """
        partition = partition_cells(sample)
        assert partition.K == 1
        assert partition.cells[0].label == "all"
        assert partition.counts(sample.x).tolist() == [sample.n]

    def test_levels_and_bins(self) -> None:
        """
        Covariates are fully interacted, levels and bins ascending.
        """
        sample = ObservedSample(
            y=[0, 1, 0, 1],
            t=[0, 1, 1, 0],
            z=[0, 1, 0, 1],
            x=[[1.0, 20.0], [0.0, 40.0], [1.0, 70.0], [0.0, 25.0]],
            covariates=("female", "age"),
        )
        spec = BinSpec(("female", "age"), {"age": parse_bins("18:30,30:65,65:99")})
        partition = partition_cells(sample, spec)
        assert partition.K == 6
        assert partition.cells[0].label == "female=0, age∈[18, 30)"
        assert partition.assign(sample.x).tolist() == [3, 1, 5, 0]
        assert partition.masses(sample.x).tolist() == [0.25, 0.25, 0, 0.25, 0, 0.25]

    def test_continuous_needs_bins(self) -> None:
        """
        Discrete cells require continuous covariates to be binned.
        """
        sample = ObservedSample(
            y=[0, 1, 0, 1],
            t=[0, 1, 1, 0],
            z=[0, 1, 0, 1],
            x=[[21.5], [40.0], [70.2], [25.0]],
            covariates=("age",),
        )
        assert partition_cells(sample, BinSpec(("age",))).K == 4
        with pytest.raises(SampleValidationError, match="'age' has non-integer"):
            partition_cells(sample, BinSpec(("age",)), discrete_only=True)
        binned = BinSpec(("age",), {"age": parse_bins("18:30,30:99")})
        assert partition_cells(sample, binned, discrete_only=True).K == 2

    def test_integer_levels_are_discrete(self, sample: ObservedSample) -> None:
        """
        Integer-valued covariates give one cell per level.
        """
        partition = partition_cells(sample, BinSpec(("x",)), discrete_only=True)
        assert [cell.label for cell in partition.cells] == ["x=0", "x=1"]

    @pytest.mark.parametrize(
        "spec, problem",
        [
            (BinSpec(("income",)), "Unknown covariate"),
            (BinSpec((), {"x": parse_bins("0:1")}), "unselected"),
            (BinSpec(("x",), {"x": parse_bins("0:0.5")}), "do not cover"),
            (BinSpec(("x",), {"x": parse_bins("0:0.6,0.5:2")}), "Overlapping"),
        ],
    )
    def test_invalid_spec(
        self, sample: ObservedSample, spec: BinSpec, problem: str
    ) -> None:
        """
        Unknown covariates and bad bins are rejected.
        """
        with pytest.raises(SampleValidationError, match=problem):
            partition_cells(sample, spec)
