"""
Synthetic data-generating processes over latent compliance and outcome types.

A :class:`LatentDGP` assigns probabilities to combinations of a compliance type
(never-taker, complier, always-taker, defier) and an outcome type
``(Y(0), Y(1))``, each with a discrete covariate distribution.  The instrument
is drawn independently of the type, so independence and exclusion hold by
construction.

From a DGP this module derives exact population moments, ground-truth values
of every estimand, and random samples.
"""

import json
import logging
from enum import Enum
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import attrs
import numpy as np

from .constants import APP_NAME
from .converters import default_converter, dump_json
from .exceptions import DgpSpecError, SampleValidationError
from .sample_store import CellPartition, ObservedSample
from .types import FloatArray, IntArray, KappaFunction, ProfileFunction


__all__ = [
    "Compliance",
    "OutcomeType",
    "CovariatePoint",
    "LatentDGP",
    "PopulationMoments",
    "OracleTruth",
    "BUILTIN_DGPS",
    "dgp1",
    "one_sided_dgp",
    "demobilised_dgp",
    "random_dgp",
    "load_dgp",
    "write_dgp",
    "population_moments",
    "oracle_estimands",
    "draw_sample",
    "type_vector",
]


LOGGER = logging.getLogger(APP_NAME)

_TOL = 1e-9
_UNDEFINED = 1e-12


class Compliance(str, Enum):
    """
    Compliance types, i.e. the pair *(T(0), T(1))*.
    """

    NEVER_TAKER = "NT"
    COMPLIER = "C"
    ALWAYS_TAKER = "AT"
    DEFIER = "DF"

    def treatment(self, z: int) -> int:
        """
        Treatment taken when the instrument is *z*.
        """
        return {"NT": 0, "AT": 1, "C": z, "DF": 1 - z}[self.value]


class OutcomeType(str, Enum):
    """
    Outcome types, i.e. the pair *(Y(0), Y(1))* written as two digits.
    """

    NEVER = "00"
    MOBILISED = "01"
    DEMOBILISED = "10"
    ALWAYS = "11"

    def outcome(self, t: int) -> int:
        """
        Potential outcome *Y(t)*.
        """
        return int(self.value[t])


@attrs.frozen
class CovariatePoint:
    """
    A support point of the covariate distribution and its probability.
    """

    value: Tuple[float, ...]
    prob: float


_NO_COVARIATES = (CovariatePoint((), 1.0),)


@attrs.frozen
class LatentDGP:
    """
    A population over latent types.

    Args:
        q: ``P[Z=1]``.
        pi: Mass of each compliance type.
        outcome_dist: Outcome-type distribution given the compliance type.
        x_dist: Covariate distribution given (compliance, outcome type).
            Required for every type with positive mass if *covariates* is not
            empty.
        covariates: Covariate names.

    Raise:
        DgpSpecError: If the DGP is malformed.
    """

    q: float
    pi: Dict[Compliance, float]
    outcome_dist: Dict[Compliance, Dict[OutcomeType, float]]
    x_dist: Dict[Compliance, Dict[OutcomeType, Tuple[CovariatePoint, ...]]] = (
        attrs.field(factory=dict)
    )
    covariates: Tuple[str, ...] = ()

    def __attrs_post_init__(self) -> None:
        if not 0 < self.q < 1:
            raise DgpSpecError(f"q must lie in (0, 1), got {self.q}")
        _check_distribution("pi", self.pi)
        for c, mass in self.pi.items():
            if mass <= 0:
                continue
            if c not in self.outcome_dist:
                raise DgpSpecError(
                    f"No outcome distribution for compliance type {c.value}"
                )
            _check_distribution(f"outcome_dist[{c.value}]", self.outcome_dist[c])
            if not self.covariates:
                continue
            for o, p_o in self.outcome_dist[c].items():
                if p_o <= 0:
                    continue
                points = self.x_dist.get(c, {}).get(o)
                label = f"x_dist[{c.value}][{o.value}]"
                if not points:
                    raise DgpSpecError(f"Missing covariate distribution {label}")
                _check_distribution(label, {i: pt.prob for i, pt in enumerate(points)})
                if any(len(pt.value) != len(self.covariates) for pt in points):
                    raise DgpSpecError(
                        f"Points in {label} need {len(self.covariates)} value(s)"
                    )

    def types(self) -> Iterator[Tuple[Compliance, OutcomeType, float]]:
        """
        Yield *(compliance, outcome type, probability)* for all types with
        positive mass in a fixed order.
        """
        for c in Compliance:
            mass = self.pi.get(c, 0.0)
            if mass <= 0:
                continue
            for o in OutcomeType:
                p = mass * self.outcome_dist[c].get(o, 0.0)
                if p > 0:
                    yield c, o, p

    def covariate_points(
        self, c: Compliance, o: OutcomeType
    ) -> Tuple[CovariatePoint, ...]:
        """
        The covariate distribution of type *(c, o)*.
        """
        if not self.covariates:
            return _NO_COVARIATES
        return self.x_dist[c][o]

    @property
    def satisfies_assumptions(self) -> bool:
        """
        ``True`` if there are neither defiers nor demobilised types, i.e. the
        data are consistent with IV monotonicity and monotone treatment
        response.
        """
        return all(
            c is not Compliance.DEFIER and o is not OutcomeType.DEMOBILISED
            for c, o, _ in self.types()
        )


def _check_distribution(label: str, dist: Dict) -> None:
    if any(p < 0 for p in dist.values()):
        raise DgpSpecError(f"{label} has negative probabilities")
    total = sum(dist.values())
    if abs(total - 1) > _TOL:
        raise DgpSpecError(f"{label} sums to {total}, not 1")


def _binary_x(p1: float) -> Tuple[CovariatePoint, ...]:
    return (CovariatePoint((0.0,), 1 - p1), CovariatePoint((1.0,), p1))


def dgp1() -> LatentDGP:
    """
    The reference fixture: ``q = 0.5``, a complier share of 0.5 and one binary
    covariate ``x``.
    """
    C, AT, NT = Compliance.COMPLIER, Compliance.ALWAYS_TAKER, Compliance.NEVER_TAKER
    O11, O00, O01 = OutcomeType.ALWAYS, OutcomeType.NEVER, OutcomeType.MOBILISED
    return LatentDGP(
        q=0.5,
        pi={AT: 0.25, C: 0.5, NT: 0.25},
        outcome_dist={
            C: {O11: 0.3, O00: 0.6, O01: 0.1},
            AT: {O11: 0.5, O00: 0.3, O01: 0.2},
            NT: {O11: 0.2, O00: 0.7, O01: 0.1},
        },
        x_dist={
            C: {O11: _binary_x(0.9), O00: _binary_x(0.5), O01: _binary_x(0.8)},
            AT: {o: _binary_x(0.6) for o in (O11, O00, O01)},
            NT: {o: _binary_x(0.4) for o in (O11, O00, O01)},
        },
        covariates=("x",),
    )


def one_sided_dgp() -> LatentDGP:
    """
    No always-takers, and ``Y(0)`` has the same distribution for compliers and
    never-takers, so the approximated and local persuasion rates coincide.
    """
    C, NT = Compliance.COMPLIER, Compliance.NEVER_TAKER
    O11, O00, O01 = OutcomeType.ALWAYS, OutcomeType.NEVER, OutcomeType.MOBILISED
    return LatentDGP(
        q=0.5,
        pi={C: 0.6, NT: 0.4},
        outcome_dist={
            C: {O00: 0.5, O01: 0.2, O11: 0.3},
            NT: {O00: 0.6, O01: 0.1, O11: 0.3},
        },
    )


def demobilised_dgp(share: float = 0.1) -> LatentDGP:
    """
    Like :func:`dgp1` but a *share* of the compliers is demobilised
    (``Y(0)=1, Y(1)=0``) and none are mobilised.  This violates monotone
    treatment response in a way the data reveal.
    """
    base = dgp1()
    C = Compliance.COMPLIER
    O11, O00, O10 = OutcomeType.ALWAYS, OutcomeType.NEVER, OutcomeType.DEMOBILISED
    outcome = dict(base.outcome_dist)
    outcome[C] = {O11: 0.3, O00: 0.7 - share, O10: share}
    x_dist = dict(base.x_dist)
    x_dist[C] = {O11: _binary_x(0.9), O00: _binary_x(0.5), O10: _binary_x(0.8)}
    return attrs.evolve(base, outcome_dist=outcome, x_dist=x_dist)


#: Built-in DGPs by name
BUILTIN_DGPS = {
    "dgp1": dgp1,
    "one_sided": one_sided_dgp,
    "demobilised": demobilised_dgp,
}


def random_dgp(seed: Union[int, Sequence[int]], levels: int = 2) -> LatentDGP:
    """
    Draw a random DGP that satisfies all identification assumptions.

    The complier share is at least 0.2, each complier outcome type has mass of
    at least 0.05, and there is one covariate ``x`` with *levels* values.
    """
    rng = np.random.default_rng(seed)
    outcome_types = (OutcomeType.NEVER, OutcomeType.MOBILISED, OutcomeType.ALWAYS)
    compliance_types = (
        Compliance.NEVER_TAKER,
        Compliance.COMPLIER,
        Compliance.ALWAYS_TAKER,
    )
    q = float(rng.uniform(0.2, 0.8))
    raw = rng.dirichlet([2.0, 2.0, 2.0])
    pi = {c: float(0.8 * m) for c, m in zip(compliance_types, raw)}
    pi[Compliance.COMPLIER] += 0.2
    outcome_dist: Dict[Compliance, Dict[OutcomeType, float]] = {}
    x_dist: Dict[Compliance, Dict[OutcomeType, Tuple[CovariatePoint, ...]]] = {}
    for c in compliance_types:
        probs = rng.dirichlet([1.5, 1.5, 1.5])
        if c is Compliance.COMPLIER:
            probs = 0.85 * probs + 0.05
        outcome_dist[c] = {o: float(p) for o, p in zip(outcome_types, probs)}
        x_dist[c] = {}
        for o in outcome_types:
            px = rng.dirichlet([1.0] * levels)
            x_dist[c][o] = tuple(
                CovariatePoint((float(v),), float(p)) for v, p in enumerate(px)
            )
    return LatentDGP(q, pi, outcome_dist, x_dist, ("x",))


def load_dgp(source: Union[str, Path]) -> LatentDGP:
    """
    Load a DGP from a JSON file or by the name of a built-in DGP.

    Raise:
        DgpSpecError: If the file cannot be read or is malformed.
    """
    if isinstance(source, str) and source in BUILTIN_DGPS:
        return BUILTIN_DGPS[source]()
    path = Path(source)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise DgpSpecError(
            f"No such DGP file or built-in DGP: {source} "
            f"(built-ins: {', '.join(BUILTIN_DGPS)})"
        ) from e
    except (OSError, ValueError) as e:
        raise DgpSpecError(f"{path}: cannot read DGP: {e}") from e
    try:
        return default_converter().structure(data, LatentDGP)
    except DgpSpecError:
        raise
    except Exception as e:
        raise DgpSpecError(f"{path}: invalid DGP: {e!r}") from e


def write_dgp(dgp: LatentDGP, path: Union[str, Path]) -> None:
    """
    Write *dgp* as JSON (the format read by :func:`load_dgp`).
    """
    Path(path).write_text(dump_json(dgp), encoding="utf-8")


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr)
    arr.setflags(write=False)
    return arr


@attrs.frozen(eq=False)
class PopulationMoments:
    """
    The exact distribution of *(y, t, z, x)* as a weighted support table.

    It implements the same interface as an observed sample, so every estimand
    can be evaluated on it.  Covariances derived from it are asymptotic
    covariances at the nominal sample size *n*.
    """

    y: IntArray = attrs.field(converter=_readonly)
    t: IntArray = attrs.field(converter=_readonly)
    z: IntArray = attrs.field(converter=_readonly)
    x: FloatArray = attrs.field(converter=_readonly)
    weights: FloatArray = attrs.field(converter=_readonly)
    covariates: Tuple[str, ...] = ()
    n: int = 1

    def mean(self, values: np.ndarray, arm: int) -> float:
        """
        ``E[values | Z=arm]``.
        """
        mask = self.z == arm
        return float(values[mask] @ self.weights[mask] / self.weights[mask].sum())


def population_moments(dgp: LatentDGP, n: int = 1) -> PopulationMoments:
    """
    Tabulate the exact joint distribution of the observables under *dgp*.

    Args:
        dgp: The DGP.
        n: Nominal sample size used for (asymptotic) covariances.
    """
    y: List[int] = []
    t: List[int] = []
    z: List[int] = []
    x: List[Tuple[float, ...]] = []
    w: List[float] = []
    for arm, q_arm in ((0, 1 - dgp.q), (1, dgp.q)):
        for c, o, p in dgp.types():
            treated = c.treatment(arm)
            for point in dgp.covariate_points(c, o):
                weight = q_arm * p * point.prob
                if weight <= 0:
                    continue
                y.append(o.outcome(treated))
                t.append(treated)
                z.append(arm)
                x.append(point.value)
                w.append(weight)
    p = len(dgp.covariates)
    return PopulationMoments(
        y=np.array(y, dtype=np.int64),
        t=np.array(t, dtype=np.int64),
        z=np.array(z, dtype=np.int64),
        x=np.array(x, dtype=np.float64).reshape(len(w), p),
        weights=np.array(w, dtype=np.float64),
        covariates=dgp.covariates,
        n=n,
    )


@attrs.frozen
class OracleTruth:
    """
    Ground truth of every estimand under a DGP.  Targets that are not defined
    (zero-mass conditioning sets) are ``None`` and listed in *undefined*.

    Profile keys are ``always``, ``never``, ``mobilised``,
    ``marginal(t=..,y=..)``, ``joint(1)`` ... ``joint(6)``, ``at(y=..)`` and
    ``nt(y=..)``.
    """

    first_stage: float
    mean_y: Tuple[float, float]
    p_y0: Dict[int, Optional[float]]
    p_y1: Dict[int, Optional[float]]
    joint: Dict[str, Optional[float]]
    theta_local: Optional[float]
    theta_dk: Optional[float]
    theta_local_untreated: Optional[float]
    profiles: Dict[str, Optional[float]]
    kappa: Dict[int, Optional[float]]
    model_consistent: bool
    undefined: Tuple[str, ...]


# Conditional expectations of the six joint-indicator profiles, as
# (numerator outcome types, denominator outcome types) among compliers.
_JOINT_SETS = {
    1: ({"00"}, {"00", "01"}),
    2: ({"01"}, {"00", "01"}),
    3: ({"11"}, {"11", "10"}),
    4: ({"00"}, {"00", "10"}),
    5: ({"11"}, {"11", "01"}),
    6: ({"01"}, {"11", "01"}),
}


def _one(t: IntArray, x: FloatArray) -> FloatArray:
    return np.ones(t.shape[0])


def oracle_estimands(
    dgp: LatentDGP,
    g: ProfileFunction = _one,
    kappa_g: Optional[KappaFunction] = None,
) -> OracleTruth:
    """
    Evaluate every estimand's definition directly from the type probabilities.

    Args:
        dgp: The DGP.
        g: Profiled function *g(t, x)* for the profile targets.
        kappa_g: Function *g(y, t, x)* for the complier moment of
            *(Y(t), T, X)*.  Skipped if ``None``.
    """
    undefined: List[str] = []

    def ratio(name: str, num: float, den: float) -> Optional[float]:
        if abs(den) < _UNDEFINED:
            undefined.append(name)
            return None
        return num / den

    mean_y = []
    mean_t = []
    for arm in (0, 1):
        mean_y.append(sum(p * o.outcome(c.treatment(arm)) for c, o, p in dgp.types()))
        mean_t.append(sum(p * c.treatment(arm) for c, o, p in dgp.types()))
    first_stage = mean_t[1] - mean_t[0]

    C = Compliance.COMPLIER
    complier = {o.value: 0.0 for o in OutcomeType}
    if dgp.pi.get(C, 0.0) > 0:
        for o, p in dgp.outcome_dist[C].items():
            complier[o.value] = p
    has_compliers = dgp.pi.get(C, 0.0) > 0

    def complier_share(types: set) -> float:
        return sum(complier[o] for o in types)

    def g_at(z: int, point: CovariatePoint) -> float:
        x = np.array([point.value], dtype=np.float64).reshape(1, len(dgp.covariates))
        return float(np.asarray(g(np.array([z]), x), dtype=np.float64).reshape(-1)[0])

    def weighted_g(c: Compliance, types: set, fixed_t: Optional[int] = None) -> float:
        total = 0.0
        for o in OutcomeType:
            if o.value not in types or dgp.outcome_dist.get(c, {}).get(o, 0.0) <= 0:
                continue
            p_o = dgp.outcome_dist[c][o]
            for point in dgp.covariate_points(c, o):
                if fixed_t is None:
                    value = (1 - dgp.q) * g_at(0, point) + dgp.q * g_at(1, point)
                else:
                    value = g_at(fixed_t, point)
                total += p_o * point.prob * value
        return total

    def complier_profile(name: str, num_types: set, den_types: set) -> Optional[float]:
        if not has_compliers:
            undefined.append(name)
            return None
        return ratio(name, weighted_g(C, num_types), complier_share(den_types))

    def complier_marginal(t_slot: int, y: int) -> Optional[float]:
        if not has_compliers:
            undefined.append(f"p_y{t_slot}[{y}]")
            return None
        return sum(complier[o.value] for o in OutcomeType if o.outcome(t_slot) == y)

    p_y0 = {y: complier_marginal(0, y) for y in (0, 1)}
    p_y1 = {y: complier_marginal(1, y) for y in (0, 1)}
    joint: Dict[str, Optional[float]] = {
        k: (v if has_compliers else None) for k, v in complier.items()
    }

    theta_local = None
    theta_untreated = None
    if has_compliers:
        theta_local = ratio("theta_local", complier["01"], complier_share({"00", "01"}))
        # Untreated compliers are the compliers assigned z=0.
        share0 = (1 - dgp.q) * dgp.pi[C]
        theta_untreated = ratio(
            "theta_local_untreated",
            share0 * complier["01"],
            share0 * complier_share({"00", "01"}),
        )
    late = ratio("late", mean_y[1] - mean_y[0], first_stage)
    theta_dk = None
    if late is not None:
        theta_dk = ratio("theta_dk", late, 1 - mean_y[0])

    profiles: Dict[str, Optional[float]] = {
        "always": complier_profile("always", {"11"}, {"11"}),
        "never": complier_profile("never", {"00"}, {"00"}),
        "mobilised": complier_profile("mobilised", {"01"}, {"01"}),
    }
    for t_slot in (0, 1):
        for y in (0, 1):
            types = {o.value for o in OutcomeType if o.outcome(t_slot) == y}
            name = f"marginal(t={t_slot},y={y})"
            profiles[name] = complier_profile(name, types, types)
    for variant, (num_types, den_types) in _JOINT_SETS.items():
        name = f"joint({variant})"
        profiles[name] = complier_profile(name, num_types, den_types)
    for group, fixed_t in ((Compliance.ALWAYS_TAKER, 1), (Compliance.NEVER_TAKER, 0)):
        prefix = "at" if group is Compliance.ALWAYS_TAKER else "nt"
        for y in (0, 1):
            name = f"{prefix}(y={y})"
            if dgp.pi.get(group, 0.0) <= 0:
                undefined.append(name)
                profiles[name] = None
                continue
            types = {o.value for o in OutcomeType if o.outcome(fixed_t) == y}
            den = sum(
                p for o, p in dgp.outcome_dist[group].items() if o.value in types
            )
            profiles[name] = ratio(name, weighted_g(group, types, fixed_t), den)

    kappa: Dict[int, Optional[float]] = {}
    if kappa_g is not None:
        for t_slot in (0, 1):
            if not has_compliers:
                kappa[t_slot] = None
                undefined.append(f"kappa(t={t_slot})")
                continue
            total = 0.0
            for o, p_o in dgp.outcome_dist[C].items():
                for point in dgp.covariate_points(C, o):
                    x = np.array([point.value]).reshape(1, len(dgp.covariates))
                    for z, q_z in ((0, 1 - dgp.q), (1, dgp.q)):
                        value = kappa_g(
                            np.array([o.outcome(t_slot)]), np.array([z]), x
                        )
                        total += q_z * p_o * point.prob * float(np.ravel(value)[0])
            kappa[t_slot] = total

    return OracleTruth(
        first_stage=first_stage,
        mean_y=(mean_y[0], mean_y[1]),
        p_y0=p_y0,
        p_y1=p_y1,
        joint=joint,
        theta_local=theta_local,
        theta_dk=theta_dk,
        theta_local_untreated=theta_untreated,
        profiles=profiles,
        kappa=kappa,
        model_consistent=dgp.satisfies_assumptions,
        undefined=tuple(undefined),
    )


def type_vector(
    dgp: LatentDGP,
    columns: Sequence[Tuple[OutcomeType, Compliance, int]],
    partition: CellPartition,
) -> Optional[FloatArray]:
    """
    The true probabilities of the latent types per cell, ordered as *columns*.

    Return:
        ``None`` if some of the DGP's mass lies on types that *columns* do not
        represent.
    """
    index = {col: i for i, col in enumerate(columns)}
    p = np.zeros(len(columns))
    for c, o, mass in dgp.types():
        for point in dgp.covariate_points(c, o):
            x = np.array([point.value], dtype=np.float64)
            x = x.reshape(1, len(dgp.covariates))
            k = int(partition.assign(x)[0])
            key = (o, c, k)
            if key not in index:
                return None
            p[index[key]] += mass * point.prob
    return p


def draw_sample(
    dgp: LatentDGP, n: int, seed: Union[int, Sequence[int]]
) -> ObservedSample:
    """
    Draw *n* i.i.d. rows from *dgp*; the result only depends on *seed*.

    Types and covariates are drawn first, then ``Z ~ Bernoulli(q)``, and
    finally ``T = T(Z)`` and ``Y = Y(T)``.
    """
    if n < 1:
        raise SampleValidationError(f"n must be at least 1, got {n}")
    rng = np.random.default_rng(seed)
    types = list(dgp.types())
    probs = np.array([p for _, _, p in types])
    idx = rng.choice(len(types), size=n, p=probs / probs.sum())

    x = np.zeros((n, len(dgp.covariates)))
    if dgp.covariates:
        for k, (c, o, _) in enumerate(types):
            rows = np.flatnonzero(idx == k)
            if rows.size == 0:
                continue
            points = dgp.covariate_points(c, o)
            weights = np.array([pt.prob for pt in points])
            pick = rng.choice(len(points), size=rows.size, p=weights / weights.sum())
            x[rows] = np.array([pt.value for pt in points])[pick]

    z = (rng.random(n) < dgp.q).astype(np.int64)
    t0 = np.array([c.treatment(0) for c, _, _ in types])[idx]
    t1 = np.array([c.treatment(1) for c, _, _ in types])[idx]
    y0 = np.array([o.outcome(0) for _, o, _ in types])[idx]
    y1 = np.array([o.outcome(1) for _, o, _ in types])[idx]
    t = np.where(z == 1, t1, t0)
    y = np.where(t == 1, y1, y0)
    return ObservedSample(y=y, t=t, z=z, x=x, covariates=dgp.covariates)
