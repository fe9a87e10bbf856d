"""
Tests for "persuasion_iv.falsifier".
"""

import attrs
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from persuasion_iv.exceptions import SampleValidationError
from persuasion_iv.falsifier import (
    Restrictions,
    brute_force_residual,
    build_system,
    cell_masses,
    default_subsample_size,
    default_threads,
    project_simplex,
    solve_feasibility,
    subsample_test,
    test_statistic,
)
from persuasion_iv.oracle_sim import (
    LatentDGP,
    PopulationMoments,
    demobilised_dgp,
    draw_sample,
    population_moments,
    random_dgp,
    type_vector,
)
from persuasion_iv.sample_store import (
    BinSpec,
    CellPartition,
    ObservedSample,
    partition_cells,
)


@pytest.fixture
def by_x(population: PopulationMoments) -> CellPartition:
    return partition_cells(population, BinSpec(("x",)))


class TestProjectSimplex:
    """Tests for "project_simplex"."""

    @pytest.mark.parametrize(
        "v, expected",
        [
            ([0.5, 0.5, 0.5], [1 / 3, 1 / 3, 1 / 3]),
            ([2.0, 0.0], [1.0, 0.0]),
            ([0.2, 0.3, 0.5], [0.2, 0.3, 0.5]),
            ([-1.0, 0.5, 0.7], [0.0, 0.4, 0.6]),
        ],
    )
    def test_examples(self, v: list, expected: list) -> None:
        """
        Known projections.
        """
        result = project_simplex(np.array(v))
        assert result == pytest.approx(expected)

    @settings(max_examples=100)
    @given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-10, 10)))
    def test_on_simplex(self, v: np.ndarray) -> None:
        """
        Projections are non-negative, sum to one and are fixed points.
        """
        p = project_simplex(v)
        assert (p >= 0).all()
        assert p.sum() == pytest.approx(1.0)
        assert project_simplex(p) == pytest.approx(p, abs=1e-12)


class TestBuildSystem:
    """Tests for "build_system"."""

    @pytest.mark.parametrize(
        "restrictions, shape",
        [(Restrictions.IA_IV_PLUS_MTR, (8, 9)), (Restrictions.IA_IV_ONLY, (8, 12))],
    )
    def test_single_cell(
        self,
        population: PopulationMoments,
        restrictions: Restrictions,
        shape: tuple,
    ) -> None:
        """
        One cell gives eight rows and one column per latent type.
        """
        sys = build_system(population, partition_cells(population), restrictions)
        assert sys.A.shape == shape
        assert (sys.A.sum(axis=0) == 2).all()
        assert sys.n == 10_000

    def test_two_cells(
        self, population: PopulationMoments, by_x: CellPartition
    ) -> None:
        """
        Every column appears once per arm and the arms are distributions.
        """
        sys = build_system(population, by_x)
        assert sys.A.shape == (16, 18)
        assert (sys.A.sum(axis=0) == 2).all()
        assert set(np.unique(sys.A)) == {0.0, 1.0}
        assert cell_masses(sys) == pytest.approx([0.425, 0.425, 0.575, 0.575])

    def test_row_and_column_keys(
        self, population: PopulationMoments, by_x: CellPartition
    ) -> None:
        """
        Rows are (z, y, t, cell) and columns (outcome, compliance, cell).
        """
        sys = build_system(population, by_x)
        assert sys.rows[:4] == ((0, 0, 0, 0), (0, 0, 1, 0), (0, 1, 0, 0), (0, 1, 1, 0))
        assert sys.columns[0][2] == 0 and sys.columns[-1][2] == 1

    @pytest.mark.parametrize("restrictions", list(Restrictions))
    def test_true_types_solve_system(
        self,
        reference_dgp: LatentDGP,
        population: PopulationMoments,
        by_x: CellPartition,
        restrictions: Restrictions,
    ) -> None:
        """
        The true type probabilities solve the system exactly.
        """
        sys = build_system(population, by_x, restrictions)
        p = type_vector(reference_dgp, sys.columns, by_x)
        assert p is not None
        assert np.allclose(sys.A @ p, sys.b_hat, rtol=0, atol=1e-12)

    def test_demobilised_types_need_more_columns(self) -> None:
        """
        Demobilised types are only representable without monotone response.
        """
        dgp = demobilised_dgp()
        pop = population_moments(dgp)
        partition = partition_cells(pop, BinSpec(("x",)))
        mtr = build_system(pop, partition, Restrictions.IA_IV_PLUS_MTR)
        assert type_vector(dgp, mtr.columns, partition) is None
        only = build_system(pop, partition, Restrictions.IA_IV_ONLY)
        assert type_vector(dgp, only.columns, partition) is not None


class TestSolveFeasibility:
    """Tests for "solve_feasibility"."""

    def test_valid_population(
        self, population: PopulationMoments, by_x: CellPartition
    ) -> None:
        """
        Valid DGPs are (numerically) feasible.
        """
        residual, p = solve_feasibility(build_system(population, by_x))
        assert residual < 1e-8
        assert p.sum() == pytest.approx(1.0)
        assert (p >= 0).all()

    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_random_valid_populations(self, seed: int) -> None:
        """
        Random valid DGPs are feasible in every cell.
        """
        pop = population_moments(random_dgp(seed, levels=3))
        partition = partition_cells(pop, BinSpec(("x",)))
        residual, _ = solve_feasibility(build_system(pop, partition))
        assert residual < 1e-8

    def test_demobilised_population(self) -> None:
        """
        Demobilised compliers make the population infeasible under monotone
        response but not without it.
        """
        pop = population_moments(demobilised_dgp())
        partition = partition_cells(pop, BinSpec(("x",)))
        mtr, _ = solve_feasibility(build_system(pop, partition))
        only, _ = solve_feasibility(
            build_system(pop, partition, Restrictions.IA_IV_ONLY)
        )
        assert mtr > 1e-3
        assert only < 1e-8

    def test_matches_brute_force(self) -> None:
        """
        The accelerated solver agrees with multi-start SLSQP.
        """
        sample = draw_sample(demobilised_dgp(0.2), 800, seed=11)
        partition = partition_cells(sample, BinSpec(("x",)))
        sys = build_system(sample, partition)
        residual, _ = solve_feasibility(sys)
        reference = brute_force_residual(sys, seed=0, starts=10)
        assert residual == pytest.approx(reference, abs=1e-5)

    def test_residual_grows_with_demobilised_share(self) -> None:
        """
        The population residual is positive and increasing in the share of
        demobilised compliers.
        """
        residuals = []
        for share in (0.05, 0.1, 0.15, 0.2):
            pop = population_moments(demobilised_dgp(share))
            residual, _ = solve_feasibility(build_system(pop, partition_cells(pop)))
            residuals.append(residual)
        assert residuals[0] > 1e-4
        assert all(a < b for a, b in zip(residuals, residuals[1:]))

    def test_cells_are_separable(
        self, population: PopulationMoments, by_x: CellPartition
    ) -> None:
        """
        Reordering the cells reorders the blocks of the system and of the
        solution in the same way.
        """
        cells = by_x.cells
        swapped = CellPartition(
            tuple(attrs.evolve(cell, index=1 - cell.index) for cell in cells[::-1]),
            by_x.covariates,
        )
        a = build_system(population, by_x)
        b = build_system(population, swapped)
        rows = np.r_[8:16, 0:8]
        columns = np.r_[9:18, 0:9]
        assert np.array_equal(b.A, a.A[np.ix_(rows, columns)])
        assert np.allclose(b.b_hat, a.b_hat[rows], rtol=0, atol=1e-15)
        residual_a, p_a = solve_feasibility(a)
        residual_b, p_b = solve_feasibility(b)
        assert residual_b == pytest.approx(residual_a, abs=1e-10)
        assert p_b == pytest.approx(p_a[columns], abs=1e-6)

    def test_statistic(self, population: PopulationMoments) -> None:
        """
        The statistic scales the residual by the square root of n.
        """
        sys = build_system(population, partition_cells(population))
        residual, _ = solve_feasibility(sys)
        assert test_statistic(sys, n=400) == pytest.approx(20 * residual)


class TestSubsampleTest:
    """Tests for "subsample_test"."""

    def test_default_size(self) -> None:
        """
        b = ceil(n ** (2/3)).
        """
        assert default_subsample_size(4000) == 252

    @pytest.mark.parametrize("value, expected", [("3", 3), ("0", 1)])
    def test_threads_from_env(
        self, value: str, expected: int, monkeypatch: pytest.MonkeyPatch
    ) -> None:
        """
        The worker count comes from "PERSUASION_THREADS".
        """
        assert default_threads() == 1
        monkeypatch.setenv("PERSUASION_THREADS", value)
        assert default_threads() == expected

    def test_result(self, sample: ObservedSample) -> None:
        """
        The result records the settings and a consistent decision.
        """
        partition = partition_cells(sample, BinSpec(("x",)))
        result = subsample_test(sample, partition, M=20, seed=5)
        assert result.b == 252
        assert len(result.subsample_stats) == 20
        assert result.rejected == (result.statistic > result.critical_value)
        assert result.critical_value in result.subsample_stats
        assert 0 <= result.p_value <= 1
        record = result.to_dict()
        assert record["restrictions"] == "IA_IV_plus_MTR"
        assert len(record["columns"]) == len(record["p_star"]) == 18
        assert record["columns"][0] == {
            "outcome": "00",
            "compliance": "NT",
            "cell": "x=0",
        }

    def test_independent_of_threads(self, sample: ObservedSample) -> None:
        """
        Subsample statistics do not depend on the number of workers.
        """
        partition = partition_cells(sample)
        one = subsample_test(sample, partition, M=16, seed=9, threads=1)
        four = subsample_test(sample, partition, M=16, seed=9, threads=4)
        assert one.subsample_stats == four.subsample_stats
        assert one.critical_value == four.critical_value

    def test_seed_changes_subsamples(self, sample: ObservedSample) -> None:
        """
        Different seeds draw different subsamples.
        """
        partition = partition_cells(sample)
        a = subsample_test(sample, partition, M=8, seed=1)
        b = subsample_test(sample, partition, M=8, seed=2)
        assert a.statistic == b.statistic
        assert a.subsample_stats != b.subsample_stats

    @pytest.mark.parametrize(
        "kwargs, error",
        [
            ({"b": 1}, SampleValidationError),
            ({"b": 4000}, SampleValidationError),
            ({"M": 0}, SampleValidationError),
            ({"alpha": 1.0}, ValueError),
        ],
    )
    def test_invalid(self, kwargs: dict, error: type, sample: ObservedSample) -> None:
        """
        Invalid subsample settings are rejected.
        """
        with pytest.raises(error):
            subsample_test(sample, partition_cells(sample), **kwargs)


@pytest.mark.slow
def test_size_and_power(reference_dgp: LatentDGP) -> None:
    """
    Valid DGPs are rarely rejected; demobilised compliers are detected.
    """
    reps = 200

    def rejection_rate(dgp: LatentDGP) -> float:
        rejections = 0
        for seed in range(reps):
            sample = draw_sample(dgp, 20_000, seed)
            result = subsample_test(sample, partition_cells(sample), M=200, seed=seed)
            rejections += result.rejected
        return rejections / reps

    assert rejection_rate(reference_dgp) <= 0.08
    assert rejection_rate(demobilised_dgp(0.1)) >= 0.8
