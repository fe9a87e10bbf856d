"""
A sharp test of the identification assumptions.

Under instrument independence, exclusion and IV monotonicity (and optionally
monotone treatment response) the within-arm distribution of *(Y, T)* in each
covariate cell is a fixed linear map of the probabilities of the latent types.
The assumptions are compatible with the data iff that linear system has a
solution on the probability simplex.  The distance to feasibility is the test
statistic; its critical value comes from subsampling.
"""

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import attrs
import numpy as np
from scipy import optimize

from .constants import APP_NAME, THREADS_VAR
from .exceptions import ConvergenceError, SampleValidationError
from .moments import require_binary
from .oracle_sim import Compliance, OutcomeType
from .sample_store import CellPartition, ObservedSample
from .types import ArmData, FloatArray


__all__ = [
    "Restrictions",
    "FalsifierSystem",
    "FalsifierResult",
    "build_system",
    "project_simplex",
    "solve_feasibility",
    "test_statistic",
    "default_subsample_size",
    "default_threads",
    "subsample_test",
    "brute_force_residual",
    "cell_masses",
]


LOGGER = logging.getLogger(APP_NAME)

#: Tolerance on the change of the residual norm between iterations
QP_TOL = 1e-12
#: Iteration cap of the QP solver
QP_MAX_ITER = 10_000

_MAX_REDRAWS = 100

# (y, t) order of the four rows of each (cell, arm) block
_OUTCOMES = ((0, 0), (0, 1), (1, 0), (1, 1))
_COMPLIANCE = (Compliance.NEVER_TAKER, Compliance.COMPLIER, Compliance.ALWAYS_TAKER)


class Restrictions(Enum):
    """
    The assumptions whose joint validity is tested.  Both include instrument
    independence, exclusion and IV monotonicity (no defiers).
    """

    IA_IV_ONLY = "IA_IV_only"
    IA_IV_PLUS_MTR = "IA_IV_plus_MTR"

    @property
    def outcome_types(self) -> Tuple[OutcomeType, ...]:
        if self is Restrictions.IA_IV_PLUS_MTR:
            return (OutcomeType.NEVER, OutcomeType.MOBILISED, OutcomeType.ALWAYS)
        return (
            OutcomeType.NEVER,
            OutcomeType.MOBILISED,
            OutcomeType.ALWAYS,
            OutcomeType.DEMOBILISED,
        )


Column = Tuple[OutcomeType, Compliance, int]
Row = Tuple[int, int, int, int]


@attrs.frozen(eq=False)
class FalsifierSystem:
    """
    The linear system ``A p = b_hat`` over latent-type probabilities.

    Args:
        A: 0/1 matrix with one row per *(z, y, t, cell)* and one column per
            *(outcome type, compliance type, cell)*.
        b_hat: Within-arm probabilities ``P[Y=y, T=t, X in cell | Z=z]``.
        columns: Column keys, ordered by cell, compliance type, outcome type.
        rows: Row keys *(z, y, t, cell)*, ordered by cell, arm, *(y, t)*.
        n: Sample size (nominal for population tables).
    """

    A: FloatArray
    b_hat: FloatArray
    columns: Tuple[Column, ...]
    rows: Tuple[Row, ...]
    n: int


def _columns(partition: CellPartition, restrictions: Restrictions) -> List[Column]:
    return [
        (o, c, k)
        for k in range(partition.K)
        for c in _COMPLIANCE
        for o in restrictions.outcome_types
    ]


def _rows(partition: CellPartition) -> List[Row]:
    return [
        (z, y, t, k) for k in range(partition.K) for z in (0, 1) for y, t in _OUTCOMES
    ]


def build_system(
    data: ArmData,
    partition: CellPartition,
    restrictions: Restrictions = Restrictions.IA_IV_PLUS_MTR,
) -> FalsifierSystem:
    """
    Build the feasibility system of *data* for the cells of *partition*.

    Raise:
        SampleValidationError: If an instrument arm is empty or a row lies in
            no cell.
    """
    require_binary(data)
    restrictions = Restrictions(restrictions)
    columns = _columns(partition, restrictions)
    rows = _rows(partition)
    A = np.zeros((len(rows), len(columns)))
    for i, (z, y, t, k) in enumerate(rows):
        for j, (o, c, kk) in enumerate(columns):
            if k == kk and c.treatment(z) == t and o.outcome(t) == y:
                A[i, j] = 1.0

    cells = partition.assign(data.x)
    weights = np.ones(data.z.shape[0]) if data.weights is None else data.weights
    b_hat = np.zeros(len(rows))
    for arm in (0, 1):
        mask = data.z == arm
        total = weights[mask].sum()
        key = cells[mask] * 4 + data.y[mask] * 2 + data.t[mask]
        mass = np.bincount(key, weights=weights[mask], minlength=4 * partition.K)
        for k in range(partition.K):
            for r, (y, t) in enumerate(_OUTCOMES):
                b_hat[k * 8 + arm * 4 + r] = mass[k * 4 + y * 2 + t] / total
    LOGGER.debug(f"Falsifier system: {A.shape[0]} rows, {A.shape[1]} columns")
    return FalsifierSystem(A, b_hat, tuple(columns), tuple(rows), data.n)


def project_simplex(v: FloatArray, a: float = 1.0) -> FloatArray:
    """
    Euclidean projection of *v* onto ``{p >= 0 : sum(p) = a}`` by sorting.
    """
    u = np.sort(v)[::-1]
    ukvals = (np.cumsum(u) - a) / np.arange(1, v.shape[0] + 1)
    k = np.nonzero(ukvals < u)[0][-1]
    return np.asarray(np.clip(v - ukvals[k], 0, None), dtype=np.float64)


def solve_feasibility(
    sys: FalsifierSystem, tol: float = QP_TOL, max_iter: int = QP_MAX_ITER
) -> Tuple[float, FloatArray]:
    """
    Minimize ``||A p - b_hat||`` over the probability simplex.

    Accelerated projected gradient (FISTA) with function-value restarts,
    started from the uniform vector.  It stops once the residual norm changes
    by less than *tol*.

    Return:
        The minimal residual norm and a minimizer (one of possibly many).

    Raise:
        ConvergenceError: After *max_iter* iterations without convergence.
    """
    A, b = sys.A, sys.b_hat
    m = A.shape[1]
    lipschitz = 2 * np.linalg.norm(A, 2) ** 2
    p = np.full(m, 1.0 / m)
    residual = float(np.linalg.norm(A @ p - b))
    y = p.copy()
    step = 1.0
    restarted = False
    for it in range(max_iter):
        grad = 2 * A.T @ (A @ y - b)
        p_new = project_simplex(y - grad / lipschitz)
        res_new = float(np.linalg.norm(A @ p_new - b))
        if res_new > residual:
            if restarted:
                # No descent from the last iterate itself.
                LOGGER.debug(f"QP stalled after {it + 1} iterations: {residual:.3e}")
                return residual, p
            # Restart the momentum from the last iterate.
            step = 1.0
            y = p
            restarted = True
            continue
        restarted = False
        step_new = (1 + math.sqrt(1 + 4 * step**2)) / 2
        y = p_new + ((step - 1) / step_new) * (p_new - p)
        change = residual - res_new
        p, residual, step = p_new, res_new, step_new
        if change < tol:
            LOGGER.debug(f"QP converged after {it + 1} iterations: {residual:.3e}")
            return residual, p
    grad = 2 * A.T @ (A @ p - b)
    mapping = lipschitz * np.linalg.norm(p - project_simplex(p - grad / lipschitz))
    raise ConvergenceError(
        f"QP did not converge in {max_iter} iterations", residual, float(mapping)
    )


def test_statistic(sys: FalsifierSystem, n: Optional[int] = None) -> float:
    """
    ``sqrt(n)`` times the minimal residual norm (*n* defaults to ``sys.n``).
    """
    residual, _ = solve_feasibility(sys)
    return math.sqrt(sys.n if n is None else n) * residual


# Not a test function for pytest.
test_statistic.__test__ = False  # type: ignore[attr-defined]


def default_subsample_size(n: int) -> int:
    """
    ``ceil(n ** (2/3))``.
    """
    return math.ceil(n ** (2 / 3))


def default_threads() -> int:
    """
    Worker threads for subsampling, read from ``PERSUASION_THREADS``.
    """
    return max(1, int(os.getenv(THREADS_VAR, "1")))


def _column_label(col: Column, partition: CellPartition) -> Dict[str, str]:
    o, c, k = col
    return {"outcome": o.value, "compliance": c.value, "cell": partition.cells[k].label}


@attrs.frozen(eq=False)
class FalsifierResult:
    """
    The outcome of the subsampling test.

    Args:
        statistic: ``sqrt(n)`` times the residual of the full sample.
        residual: The minimal residual norm of the full sample.
        p_star: A feasible-closest type distribution.
        columns: Labels of the entries of *p_star*.
        critical_value: The ``1 - alpha`` quantile of the subsample statistics.
        p_value: Share of subsample statistics at least *statistic*.
        subsample_stats: The subsample statistics in subsample order.
        b: Subsample size.
        M: Number of subsamples.
        seed: Seed of the subsample draws.
        alpha: Level.
        rejected: ``statistic > critical_value``.
        restrictions: The tested assumptions.
    """

    statistic: float
    residual: float
    p_star: Tuple[float, ...]
    columns: Tuple[Dict[str, str], ...]
    critical_value: float
    p_value: float
    subsample_stats: Tuple[float, ...]
    b: int
    M: int  # noqa: N815
    seed: int
    alpha: float
    rejected: bool
    restrictions: Restrictions

    def to_dict(self) -> Dict[str, Any]:
        """
        The JSON record of the result (without the subsample statistics).
        """
        return {
            "statistic": self.statistic,
            "critical_value": self.critical_value,
            "p_value": self.p_value,
            "b": self.b,
            "M": self.M,
            "seed": self.seed,
            "alpha": self.alpha,
            "rejected": self.rejected,
            "residual": self.residual,
            "p_star": list(self.p_star),
            "columns": list(self.columns),
            "restrictions": self.restrictions.value,
        }


def _subsample(sample: ObservedSample, b: int, seed: int, index: int) -> ObservedSample:
    for attempt in range(_MAX_REDRAWS):
        rng = np.random.default_rng([seed, index, attempt])
        rows = np.sort(rng.choice(sample.n, size=b, replace=False))
        z = sample.z[rows]
        if z.min() == 0 and z.max() == 1:
            return sample.take(rows)
    raise SampleValidationError(
        f"Subsample {index} has an empty instrument arm after {_MAX_REDRAWS} draws; "
        f"increase b"
    )


def subsample_test(
    sample: ObservedSample,
    partition: CellPartition,
    restrictions: Restrictions = Restrictions.IA_IV_PLUS_MTR,
    alpha: float = 0.05,
    b: Optional[int] = None,
    M: int = 200,  # noqa: N803
    seed: int = 0,
    threads: Optional[int] = None,
) -> FalsifierResult:
    """
    Test the assumptions by subsampling.

    Subsample *i* is drawn without replacement from a generator seeded with
    ``(seed, i)``, so the result does not depend on *threads*.

    Args:
        sample: The observed sample (binary instrument).
        partition: Covariate cells.
        restrictions: The tested assumptions.
        alpha: Level.
        b: Subsample size, ``ceil(n ** (2/3))`` by default.
        M: Number of subsamples.
        seed: Seed of the subsample draws.
        threads: Worker threads; see :func:`default_threads`.

    Raise:
        ValueError: If *alpha* is not in (0, 1).
        SampleValidationError: If *b* or *M* are invalid.
        ConvergenceError: If a QP does not converge.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    restrictions = Restrictions(restrictions)
    n = sample.n
    b = default_subsample_size(n) if b is None else b
    if not 1 < b < n:
        raise SampleValidationError(
            f"Subsample size must satisfy 1 < b < n={n}, got {b}"
        )
    if M < 1:
        raise SampleValidationError(f"M must be at least 1, got {M}")
    threads = default_threads() if threads is None else max(1, threads)

    full = build_system(sample, partition, restrictions)
    residual, p_star = solve_feasibility(full)
    statistic = math.sqrt(n) * residual
    LOGGER.info(f"Falsifier statistic {statistic:.6g} (n={n}, b={b}, M={M})")

    def subsample_statistic(index: int) -> float:
        sub = _subsample(sample, b, seed, index)
        res, _ = solve_feasibility(build_system(sub, partition, restrictions))
        return math.sqrt(b) * res

    with ThreadPoolExecutor(max_workers=threads) as ex:
        stats = np.array(list(ex.map(subsample_statistic, range(M))))

    critical = float(np.quantile(stats, 1 - alpha, method="inverted_cdf"))
    return FalsifierResult(
        statistic=statistic,
        residual=residual,
        p_star=tuple(float(v) for v in p_star),
        columns=tuple(_column_label(col, partition) for col in full.columns),
        critical_value=critical,
        p_value=float(np.mean(stats >= statistic)),
        subsample_stats=tuple(float(v) for v in stats),
        b=b,
        M=M,
        seed=seed,
        alpha=alpha,
        rejected=statistic > critical,
        restrictions=restrictions,
    )


def brute_force_residual(
    sys: FalsifierSystem, seed: int = 0, starts: int = 20
) -> float:
    """
    An independent minimizer of ``||A p - b_hat||`` over the simplex: the best
    of *starts* SLSQP runs from random starting points.
    """
    A, b = sys.A, sys.b_hat
    m = A.shape[1]
    rng = np.random.default_rng(seed)
    best = math.inf
    for _ in range(starts):
        x0 = rng.dirichlet(np.ones(m))
        sol = optimize.minimize(
            lambda p: float(np.sum((A @ p - b) ** 2)),
            x0,
            jac=lambda p: 2 * A.T @ (A @ p - b),
            bounds=[(0.0, 1.0)] * m,
            constraints=[{"type": "eq", "fun": lambda p: np.sum(p) - 1.0}],
            method="SLSQP",
            options={"ftol": 1e-15, "maxiter": 1000},
        )
        p = project_simplex(sol.x)
        best = min(best, float(np.linalg.norm(A @ p - b)))
    return best


def cell_masses(sys: FalsifierSystem) -> List[float]:
    """
    The within-arm cell masses implied by *b_hat*, ordered by cell then arm.
    """
    return [float(v) for v in sys.b_hat.reshape(-1, 4).sum(axis=1)]
