"""
Identification, estimation, inference and falsification for persuasion
effects with a binary instrument.
"""

from .estimands import (
    compare_dk_local,
    conditional_cdf,
    estimand_components,
    joint_po,
    kappa_moment,
    marginal_po,
    persuasion_rates,
    profile_at_nt,
    profile_joint_indicator,
    profile_marginal,
    profile_persuasion,
)
from .falsifier import Restrictions, build_system, solve_feasibility, subsample_test
from .inference import ar_confidence_set, ar_statistic, ar_test, delta_inference
from .oracle_sim import (
    LatentDGP,
    draw_sample,
    load_dgp,
    oracle_estimands,
    population_moments,
    random_dgp,
    write_dgp,
)
from .sample_store import (
    BinSpec,
    CsvSchema,
    ObservedSample,
    load_csv,
    partition_cells,
    restrict_pair,
    write_csv,
)
from .sensitivity import sensitivity_curve, sensitivity_table
from .settings import load_settings


__all__ = [
    # Data
    "ObservedSample",
    "CsvSchema",
    "BinSpec",
    "load_csv",
    "write_csv",
    "restrict_pair",
    "partition_cells",
    # Estimands
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
    # Inference
    "delta_inference",
    "ar_statistic",
    "ar_test",
    "ar_confidence_set",
    # Falsification
    "Restrictions",
    "build_system",
    "solve_feasibility",
    "subsample_test",
    # Sensitivity
    "sensitivity_curve",
    "sensitivity_table",
    # Simulation
    "LatentDGP",
    "random_dgp",
    "population_moments",
    "oracle_estimands",
    "draw_sample",
    "load_dgp",
    "write_dgp",
    # Settings
    "load_settings",
]
