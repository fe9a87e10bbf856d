"""
Identification formulas for complier outcome distributions, persuasion rates
and the profiles of persuasion types.

Every estimand is a Wald ratio ``beta1 / beta2`` built from a pair of row
transforms.  Profiles of a function *g(t, x)* weight the two ratios with *g*
evaluated at ``t = 0`` and ``t = 1`` by the instrument shares (compliers take
the treatment their instrument assigns).

All functions accept an :class:`~persuasion_iv.sample_store.ObservedSample` or
exact :class:`~persuasion_iv.oracle_sim.PopulationMoments`.
"""

import logging
from enum import Enum
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import attrs
import numpy as np

from .constants import APP_NAME, DENOMINATOR_GUARD, DK_GUARD
from .exceptions import NumericalError, ZeroMassError
from .moments import (
    TransformSpec,
    WaldComponents,
    arm_mean,
    contrast,
    mixed_wald_components,
    require_binary,
    single_arm_components,
    wald_components,
    wald_ratio,
)
from .types import (
    ArmData,
    FloatArray,
    IntArray,
    KappaFunction,
    ProfileFunction,
    RowTransform,
)


__all__ = [
    "ComplierJointPO",
    "MarginalPO",
    "PersuasionRates",
    "OneSided",
    "DkLocalDiagnostic",
    "Target",
    "PersuasionTarget",
    "Group",
    "TypeProfile",
    "marginal_po",
    "joint_po",
    "persuasion_rates",
    "estimand_components",
    "compare_dk_local",
    "kappa_moment",
    "profile_marginal",
    "profile_persuasion",
    "profile_joint_indicator",
    "profile_at_nt",
    "conditional_cdf",
    "covariate",
    "indicator_le",
    "constant",
]


LOGGER = logging.getLogger(APP_NAME)


def _y(y: IntArray, t: IntArray, x: FloatArray) -> FloatArray:
    return y.astype(np.float64)


def _t(y: IntArray, t: IntArray, x: FloatArray) -> FloatArray:
    return t.astype(np.float64)


def _event(y_val: Optional[int], t_val: int) -> RowTransform:
    """
    The indicator ``1{Y=y_val, T=t_val}`` (``y_val=None`` means any *y*).
    """

    def indicator(y: IntArray, t: IntArray, x: FloatArray) -> FloatArray:
        hit = t == t_val
        if y_val is not None:
            hit &= y == y_val
        return hit.astype(np.float64)

    return indicator


def _scaled(fn: RowTransform, factor: float) -> RowTransform:
    def scaled(y: IntArray, t: IntArray, x: FloatArray) -> FloatArray:
        return factor * fn(y, t, x)

    return scaled


# Transforms shared by several estimands.
_Y_UNTREATED = _event(1, 0)  # Y(1-T)
_NOT_Y_TREATED = _event(0, 1)  # (1-Y)T
_NEG_NOT_Y_UNTREATED = _scaled(_event(0, 0), -1.0)  # -(1-Y)(1-T)
_Y_TREATED = _event(1, 1)  # YT


def _clamped(name: str, value: float, clamp: bool) -> float:
    if clamp and not 0 <= value <= 1:
        LOGGER.warning(f"Clamping {name}={value:.6g} to [0, 1]")
        return min(max(value, 0.0), 1.0)
    return value


@attrs.frozen
class ComplierJointPO:
    """
    The joint distribution of *(Y(0), Y(1))* among compliers under monotone
    treatment response.

    Args:
        p11: Share of always-voters.
        p00: Share of never-voters.
        p01: Share of mobilised voters.
        first_stage: The first stage, i.e. the complier share.
        components: Wald components per share, for inference.
    """

    p11: float
    p00: float
    p01: float
    first_stage: float
    components: Mapping[str, WaldComponents] = attrs.field(factory=dict, eq=False)

    @property
    def theta_local(self) -> float:
        """
        ``p01 / (p01 + p00)``.
        """
        return self.p01 / (self.p01 + self.p00)


@attrs.frozen
class MarginalPO:
    """
    The marginal distributions of *Y(0)* and *Y(1)* among compliers.
    """

    p_y0: Mapping[int, float]
    p_y1: Mapping[int, float]
    components: Mapping[str, WaldComponents] = attrs.field(factory=dict, eq=False)

    @classmethod
    def from_shares(cls, p_y0_1: float, p_y1_1: float) -> "MarginalPO":
        """
        Build the marginals from ``P[Y(0)=1|C]`` and ``P[Y(1)=1|C]``.
        """
        return cls({0: 1 - p_y0_1, 1: p_y0_1}, {0: 1 - p_y1_1, 1: p_y1_1})


@attrs.frozen
class PersuasionRates:
    """
    The local persuasion rate, its untreated counterpart and the approximated
    persuasion rate (LATE over ``1 - E[Y|Z=0]``).
    """

    theta_local: float
    theta_dk: float
    theta_local_untreated: float
    components: Mapping[str, WaldComponents] = attrs.field(factory=dict, eq=False)


def _first_stage(data: ArmData) -> WaldComponents:
    c = wald_components(data, TransformSpec(_t, _t))
    wald_ratio(c)
    return c


def _ratio_over_first_stage(
    data: ArmData, f: RowTransform
) -> Tuple[float, WaldComponents]:
    c = wald_components(data, TransformSpec(f, _t))
    return wald_ratio(c), c


def marginal_po(data: ArmData, clamp: bool = False) -> MarginalPO:
    """
    Estimate ``P[Y(t)=y | complier]`` for all *t*, *y*.

    Raise:
        WeakFirstStageError: If the first stage is degenerate.
    """
    _first_stage(data)
    p_y0: Dict[int, float] = {}
    p_y1: Dict[int, float] = {}
    components: Dict[str, WaldComponents] = {}
    for y in (0, 1):
        p_y0[y], components[f"p_y0[{y}]"] = _ratio_over_first_stage(
            data, _scaled(_event(y, 0), -1.0)
        )
        p_y1[y], components[f"p_y1[{y}]"] = _ratio_over_first_stage(data, _event(y, 1))
        p_y0[y] = _clamped(f"P[Y(0)={y}|C]", p_y0[y], clamp)
        p_y1[y] = _clamped(f"P[Y(1)={y}|C]", p_y1[y], clamp)
    return MarginalPO(p_y0, p_y1, components)


def joint_po(data: ArmData, clamp: bool = False) -> ComplierJointPO:
    """
    Estimate the shares of always-voters, never-voters and mobilised voters
    among compliers.

    Raise:
        WeakFirstStageError: If the first stage is degenerate.
    """
    first = _first_stage(data)
    p11, c11 = _ratio_over_first_stage(data, _scaled(_Y_UNTREATED, -1.0))
    p00, c00 = _ratio_over_first_stage(data, _NOT_Y_TREATED)
    p01, c01 = _ratio_over_first_stage(data, _y)
    return ComplierJointPO(
        p11=_clamped("p11", p11, clamp),
        p00=_clamped("p00", p00, clamp),
        p01=_clamped("p01", p01, clamp),
        first_stage=first.beta2,
        components={"p11": c11, "p00": c00, "p01": c01},
    )


def persuasion_rates(data: ArmData, clamp: bool = False) -> PersuasionRates:
    """
    Estimate the local persuasion rate and the approximated persuasion rate.

    Raise:
        WeakFirstStageError: If the first stage or the local rate's
            denominator is degenerate.
        ZeroMassError: If ``E[Y|Z=0]`` is (numerically) one.
    """
    local = wald_components(data, TransformSpec(_y, _NEG_NOT_Y_UNTREATED))
    theta_local = wald_ratio(local, what="share of compliers with Y(0)=0")

    late = wald_components(data, TransformSpec(_y, _t))
    theta_late = wald_ratio(late)
    untreated_mean = arm_mean(data, _y, 0)
    if untreated_mean >= 1 - DK_GUARD:
        raise ZeroMassError(
            f"E[Y|Z=0] = {untreated_mean:.6g}; the approximated rate is undefined"
        )
    theta_dk = theta_late / (1 - untreated_mean)

    theta_local = _clamped("theta_local", theta_local, clamp)
    return PersuasionRates(
        theta_local=theta_local,
        theta_dk=_clamped("theta_dk", theta_dk, clamp),
        theta_local_untreated=theta_local,
        components={"theta_local": local, "late": late},
    )


def estimand_components(data: ArmData) -> Dict[str, WaldComponents]:
    """
    The Wald components of every ratio estimand, keyed ``theta_local``,
    ``late``, ``p11``, ``p00``, ``p01``, ``p_y0[y]`` and ``p_y1[y]``.

    No ratio is formed, so weakly identified estimands can still be tested.
    """
    specs = {
        "theta_local": TransformSpec(_y, _NEG_NOT_Y_UNTREATED),
        "late": TransformSpec(_y, _t),
        "p11": TransformSpec(_scaled(_Y_UNTREATED, -1.0), _t),
        "p00": TransformSpec(_NOT_Y_TREATED, _t),
        "p01": TransformSpec(_y, _t),
    }
    for y in (0, 1):
        specs[f"p_y0[{y}]"] = TransformSpec(_scaled(_event(y, 0), -1.0), _t)
        specs[f"p_y1[{y}]"] = TransformSpec(_event(y, 1), _t)
    return {name: wald_components(data, spec) for name, spec in specs.items()}


class OneSided(str, Enum):
    """
    Detected one-sided non-compliance.
    """

    NONE = "none"
    NO_ALWAYS_TAKERS = "no_always_takers"
    NO_NEVER_TAKERS = "no_never_takers"
    FULL_COMPLIANCE = "full_compliance"


@attrs.frozen
class DkLocalDiagnostic:
    """
    Comparison of the approximated and the local persuasion rate.

    Args:
        theta_dk: The approximated rate (``None`` if undefined).
        theta_local: The local rate (``None`` if undefined).
        gap: ``theta_dk - theta_local``.
        contrast: ``[P(Y=0,T=0|Z=0) - P(Y=0,T=0|Z=1)] - ΔT·P(Y=0|Z=0)``, zero
            iff both rates agree.
        pattern: The detected one-sided non-compliance pattern.
        compared: For a one-sided pattern, the two conditional probabilities
            whose equality makes both rates agree.
        notes: Why values are missing.
    """

    theta_dk: Optional[float]
    theta_local: Optional[float]
    gap: Optional[float]
    contrast: float
    pattern: OneSided
    compared: Optional[Tuple[Optional[float], Optional[float]]]
    notes: Tuple[str, ...] = ()


def _conditional(
    data: ArmData, event: RowTransform, given: RowTransform, arm: int
) -> Optional[float]:
    """
    ``P[event | given, Z=arm]`` or ``None`` if the conditioning set is empty.
    """
    mass = arm_mean(data, given, arm)
    if mass < DENOMINATOR_GUARD:
        return None

    def both(y: IntArray, t: IntArray, x: FloatArray) -> FloatArray:
        return event(y, t, x) * given(y, t, x)

    return arm_mean(data, both, arm) / mass


def compare_dk_local(data: ArmData) -> DkLocalDiagnostic:
    """
    Report both persuasion rates, their gap and the condition under which they
    coincide.

    Numerical failures become ``None`` values and a note; only an invalid
    sample (e.g. an empty instrument arm) raises.
    """
    require_binary(data)
    notes: List[str] = []
    theta_dk: Optional[float] = None
    theta_local: Optional[float] = None
    try:
        rates = persuasion_rates(data)
        theta_dk, theta_local = rates.theta_dk, rates.theta_local
    except NumericalError as e:
        notes.append(f"{type(e).__name__}: {e}")
        try:
            local = wald_components(data, TransformSpec(_y, _NEG_NOT_Y_UNTREATED))
            theta_local = wald_ratio(local)
        except NumericalError as e2:
            notes.append(f"theta_local: {e2}")
    gap = None if theta_dk is None or theta_local is None else theta_dk - theta_local

    delta, _ = contrast(data, [_event(0, 0), _t])
    p_y0_arm0 = 1 - arm_mean(data, _y, 0)
    equivalence = -float(delta[0]) - float(delta[1]) * p_y0_arm0

    always = arm_mean(data, _t, 0)
    never = 1 - arm_mean(data, _t, 1)
    no_at = always <= DK_GUARD
    no_nt = never <= DK_GUARD

    def any_y0(y: IntArray, t: IntArray, x: FloatArray) -> FloatArray:
        return (y == 0).astype(np.float64)

    def every_row(y: IntArray, t: IntArray, x: FloatArray) -> FloatArray:
        return np.ones(y.shape[0])

    compared: Optional[Tuple[Optional[float], Optional[float]]] = None
    if no_at and no_nt:
        pattern = OneSided.FULL_COMPLIANCE
    elif no_at:
        pattern = OneSided.NO_ALWAYS_TAKERS
        compared = (
            _conditional(data, any_y0, _event(None, 0), 1),
            _conditional(data, any_y0, every_row, 0),
        )
    elif no_nt:
        pattern = OneSided.NO_NEVER_TAKERS
        compared = (
            _conditional(data, any_y0, _event(None, 0), 0),
            _conditional(data, any_y0, _event(None, 1), 0),
        )
    else:
        pattern = OneSided.NONE
    LOGGER.debug(f"DK/local comparison: pattern={pattern.value}, gap={gap}")
    return DkLocalDiagnostic(
        theta_dk=theta_dk,
        theta_local=theta_local,
        gap=gap,
        contrast=equivalence,
        pattern=pattern,
        compared=compared,
        notes=tuple(notes),
    )


def _at_instrument(
    g: Callable[..., FloatArray], z: int, event: RowTransform
) -> RowTransform:
    """
    The transform ``g(z, x) * event(y, t, x)`` with *g* evaluated at a fixed
    instrument value.
    """

    def fn(y: IntArray, t: IntArray, x: FloatArray) -> FloatArray:
        fixed = np.full(y.shape[0], z, dtype=np.int64)
        return np.asarray(g(fixed, x), dtype=np.float64) * event(y, t, x)

    return fn


def _weighted_profile(
    data: ArmData, g: ProfileFunction, event: RowTransform, h: RowTransform, what: str
) -> Tuple[float, WaldComponents]:
    c = mixed_wald_components(
        data, _at_instrument(g, 0, event), _at_instrument(g, 1, event), h
    )
    return wald_ratio(c, error=ZeroMassError, what=f"mass of {what}"), c


def kappa_moment(data: ArmData, g: KappaFunction, t: int) -> float:
    """
    The complier mean of *g(Y(t), T, X)*.

    Args:
        data: The sample or population.
        g: A function of a potential outcome, the treatment and covariates.
        t: Which potential outcome is passed to *g* (0 or 1).

    Raise:
        ValueError: If *t* is not 0 or 1.
        WeakFirstStageError: If the first stage is degenerate.
    """
    if t not in (0, 1):
        raise ValueError(f"t must be 0 or 1, got {t!r}")
    _first_stage(data)
    sign = 1.0 if t == 1 else -1.0

    def arm_fn(z: int) -> RowTransform:
        def fn(y: IntArray, tt: IntArray, x: FloatArray) -> FloatArray:
            fixed = np.full(y.shape[0], z, dtype=np.int64)
            value = np.asarray(g(y, fixed, x), dtype=np.float64)
            return sign * value * (tt == t)

        return fn

    c = mixed_wald_components(data, arm_fn(0), arm_fn(1), _t)
    return wald_ratio(c)


class Target(str, Enum):
    """
    The subpopulation a :class:`TypeProfile` describes.
    """

    ALWAYS = "always"
    NEVER = "never"
    MOBILISED = "mobilised"
    MARGINAL = "marginal"
    JOINT = "joint"
    AT = "at"
    NT = "nt"


class PersuasionTarget(str, Enum):
    """
    Persuasion types among compliers.
    """

    ALWAYS = "always"
    NEVER = "never"
    MOBILISED = "mobilised"


class Group(str, Enum):
    """
    Non-complier groups.
    """

    ALWAYS_TAKER = "AT"
    NEVER_TAKER = "NT"


@attrs.frozen
class TypeProfile:
    """
    The mean of a profiled function over a latent subpopulation.

    Args:
        target: The kind of subpopulation.
        value: The estimate.
        components: Wald components of the estimate, for inference.
        params: Parameters of the target, e.g. ``(("t", 0), ("y", 1))``.
    """

    target: Target
    value: float
    components: WaldComponents = attrs.field(eq=False, repr=False)
    params: Tuple[Tuple[str, int], ...] = ()

    @property
    def label(self) -> str:
        if not self.params:
            return self.target.value
        if self.target is Target.JOINT:
            return f"joint({self.params[0][1]})"
        args = ",".join(f"{k}={v}" for k, v in self.params)
        return f"{self.target.value}({args})"


def profile_marginal(data: ArmData, g: ProfileFunction, t: int, y: int) -> TypeProfile:
    """
    Profile compliers with ``Y(t) = y``.

    Raise:
        ZeroMassError: If the subpopulation has no mass.
    """
    event = _event(y, t)
    value, c = _weighted_profile(data, g, event, event, f"compliers with Y({t})={y}")
    return TypeProfile(Target.MARGINAL, value, c, (("t", t), ("y", y)))


_PERSUASION_TRANSFORMS: Dict[PersuasionTarget, Tuple[RowTransform, RowTransform]] = {
    PersuasionTarget.ALWAYS: (_Y_UNTREATED, _Y_UNTREATED),
    PersuasionTarget.NEVER: (_NOT_Y_TREATED, _NOT_Y_TREATED),
    PersuasionTarget.MOBILISED: (_y, _y),
}


def profile_persuasion(
    data: ArmData, g: ProfileFunction, target: PersuasionTarget
) -> TypeProfile:
    """
    Profile always-voters, never-voters or mobilised voters among compliers.

    Raise:
        ZeroMassError: If the persuasion type has no mass.
    """
    target = PersuasionTarget(target)
    event, h = _PERSUASION_TRANSFORMS[target]
    value, c = _weighted_profile(data, g, event, h, f"{target.value} compliers")
    return TypeProfile(Target(target.value), value, c)


# (numerator event, denominator) per variant.  Variant 2 with g = 1 is the
# local persuasion rate.
_JOINT_TRANSFORMS: Dict[int, Tuple[RowTransform, RowTransform]] = {
    1: (_NOT_Y_TREATED, _NEG_NOT_Y_UNTREATED),
    2: (_y, _NEG_NOT_Y_UNTREATED),
    3: (_Y_UNTREATED, _Y_UNTREATED),
    4: (_NOT_Y_TREATED, _NOT_Y_TREATED),
    5: (_scaled(_Y_UNTREATED, -1.0), _Y_TREATED),
    6: (_y, _Y_TREATED),
}

_JOINT_DESCRIPTIONS = {
    1: "E[g 1{Y(1)=0} | Y(0)=0, C]",
    2: "E[g 1{Y(1)=1} | Y(0)=0, C]",
    3: "E[g 1{Y(1)=1} | Y(0)=1, C]",
    4: "E[g 1{Y(0)=0} | Y(1)=0, C]",
    5: "E[g 1{Y(0)=1} | Y(1)=1, C]",
    6: "E[g 1{Y(0)=0} | Y(1)=1, C]",
}


def profile_joint_indicator(
    data: ArmData, g: ProfileFunction, variant: int
) -> TypeProfile:
    """
    Profile a joint outcome indicator given one marginal potential outcome.

    The variants are:

    1. ``E[g 1{Y(1)=0} | Y(0)=0, C]``
    2. ``E[g 1{Y(1)=1} | Y(0)=0, C]``
    3. ``E[g 1{Y(1)=1} | Y(0)=1, C]``
    4. ``E[g 1{Y(0)=0} | Y(1)=0, C]``
    5. ``E[g 1{Y(0)=1} | Y(1)=1, C]``
    6. ``E[g 1{Y(0)=0} | Y(1)=1, C]``

    Raise:
        ValueError: If *variant* is not in 1..6.
        ZeroMassError: If the conditioning set has no mass.
    """
    if variant not in _JOINT_TRANSFORMS:
        raise ValueError(f"variant must be in 1..6, got {variant}")
    event, h = _JOINT_TRANSFORMS[variant]
    value, c = _weighted_profile(
        data, g, event, h, f"the conditioning set of {_JOINT_DESCRIPTIONS[variant]}"
    )
    return TypeProfile(Target.JOINT, value, c, (("variant", variant),))


def profile_at_nt(
    data: ArmData, g: ProfileFunction, group: Group, y: int
) -> TypeProfile:
    """
    Profile always-takers (or never-takers) with ``Y = y``.

    Always-takers are the treated rows of arm ``z=0``; never-takers are the
    untreated rows of arm ``z=1``.  *g* is evaluated at their treatment.

    Raise:
        ZeroMassError: If the conditioning set is empty.
    """
    group = Group(group)
    treated, arm = (1, 0) if group is Group.ALWAYS_TAKER else (0, 1)
    event = _event(y, treated)
    c = single_arm_components(data, _at_instrument(g, treated, event), event, arm)
    value = wald_ratio(
        c, error=ZeroMassError, what=f"share of {group.value} with Y={y} in arm {arm}"
    )
    target = Target.AT if group is Group.ALWAYS_TAKER else Target.NT
    return TypeProfile(target, value, c, (("y", y),))


def conditional_cdf(
    data: ArmData, j: int, target: PersuasionTarget, grid: Sequence[float]
) -> List[Tuple[float, float]]:
    """
    The distribution function of covariate *j* within a persuasion type,
    evaluated at each (sorted) grid point.
    """
    points = sorted(float(v) for v in grid)
    return [
        (v, profile_persuasion(data, indicator_le(j, v), target).value) for v in points
    ]


def covariate(j: int) -> ProfileFunction:
    """
    The profiled function returning covariate column *j*.
    """

    def g(t: IntArray, x: FloatArray) -> FloatArray:
        return x[:, j]

    return g


def indicator_le(j: int, c: float) -> ProfileFunction:
    """
    The profiled function ``1{x_j <= c}``.
    """

    def g(t: IntArray, x: FloatArray) -> FloatArray:
        return (x[:, j] <= c).astype(np.float64)

    return g


def constant(c: float) -> ProfileFunction:
    """
    The profiled function that always returns *c*.
    """

    def g(t: IntArray, x: FloatArray) -> FloatArray:
        return np.full(t.shape[0], c, dtype=np.float64)

    return g
