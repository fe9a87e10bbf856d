"""
Settings of the CLI commands and the pipeline that loads them.

Each command has a frozen attrs class whose fields are declared with
:func:`option()`.  Values are merged from (lowest precedence first) the class
defaults, TOML files, ``PERSUASION_*`` environment variables and the command
line.
"""

import logging
import re
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type

import attrs
import cattrs

from ._file_utils import find
from .constants import (
    APP_NAME,
    CONFIG_FILE,
    CONFIG_SECTION,
    ENV_PREFIX,
    METADATA_KEY,
    SETTINGS_FILES_VAR,
)
from .converters import default_converter
from .dict_utils import merge_settings, set_path
from .exceptions import InvalidSettingsError
from .falsifier import Restrictions
from .loaders import DefaultsLoader, EnvLoader, FileLoader, Loader, TomlFormat
from .types import OptionInfo, OptionList, SettingsDict, ST


__all__ = [
    "option",
    "options_for",
    "OutputFormat",
    "EstimateSettings",
    "ProfileSettings",
    "FalsifySettings",
    "SensitivitySettings",
    "SimulateSettings",
    "ArCiSettings",
    "OracleSettings",
    "COMMANDS",
    "AR_ESTIMANDS",
    "RunConfig",
    "default_loaders",
    "load_settings",
]


LOGGER = logging.getLogger(APP_NAME)


def option(  # type: ignore[no-untyped-def]
    *,
    default=attrs.NOTHING,
    validator=None,
    factory=None,
    help: Optional[str] = None,
    param_decls: Optional[Sequence[str]] = None,
):
    """
    An :func:`attrs.field()` whose metadata holds the CLI help and the option
    names.
    """
    meta: Dict[str, Any] = {"help": help}
    if param_decls:
        meta["param_decls"] = tuple(param_decls)
    return attrs.field(
        default=default,
        validator=validator,
        factory=factory,
        metadata={METADATA_KEY: meta},
    )


def options_for(cls: type) -> OptionList:
    """
    Return the options of the settings class *cls*.
    """
    options = []
    for f in attrs.fields(cls):
        default = f.default
        if isinstance(default, attrs.Factory):  # type: ignore[arg-type]
            default = default.factory()
        options.append(
            OptionInfo(
                path=f.name,
                cls=f.type,
                default=default,
                has_default=f.default is not attrs.NOTHING,
                metadata=dict(f.metadata),
            )
        )
    return tuple(options)


def _unit_interval(instance: Any, attribute: attrs.Attribute, value: float) -> None:
    if not 0 < value < 1:
        raise ValueError(f"{attribute.name} must lie in (0, 1), got {value}")


def _at_least_one(
    instance: Any, attribute: attrs.Attribute, value: Optional[int]
) -> None:
    if value is not None and value < 1:
        raise ValueError(f"{attribute.name} must be at least 1, got {value}")


def _subsample_size(instance: Any, attribute: attrs.Attribute, value: str) -> None:
    if value == "auto":
        return
    try:
        b = int(value)
    except ValueError:
        raise ValueError(f"b must be 'auto' or an integer, got {value!r}") from None
    if b <= 1:
        raise ValueError(f"b must be larger than 1, got {b}")


def _level_pair(
    instance: Any, attribute: attrs.Attribute, value: Optional[Tuple[int, ...]]
) -> None:
    if value is None:
        return
    if len(value) != 2 or value[0] == value[1]:
        raise ValueError(f"{attribute.name} needs two distinct levels, got {value}")


_TARGET_RE = re.compile(
    r"^(always|never|mobilised|marginal\(t=[01],y=[01]\)|joint\([1-6]\)"
    r"|at\(y=[01]\)|nt\(y=[01]\))$"
)


def _targets(instance: Any, attribute: attrs.Attribute, value: Tuple[str, ...]) -> None:
    bad = [v for v in value if not _TARGET_RE.match(v)]
    if bad:
        raise ValueError(f"Unknown profile target(s): {', '.join(bad)}")


#: Estimands whose AR confidence set can be computed
AR_ESTIMANDS = (
    "theta_local",
    "late",
    "p11",
    "p00",
    "p01",
    "p_y0[0]",
    "p_y0[1]",
    "p_y1[0]",
    "p_y1[1]",
)


def _ar_estimand(instance: Any, attribute: attrs.Attribute, value: str) -> None:
    if value not in AR_ESTIMANDS:
        raise ValueError(f"estimand must be one of {', '.join(AR_ESTIMANDS)}")


def _grid_bounds(
    instance: Any, attribute: attrs.Attribute, value: Optional[Tuple[float, ...]]
) -> None:
    if value is not None and len(value) != 2:
        raise ValueError(f"grid needs two bounds 'lo,hi', got {value}")


def _alpha() -> Any:
    return option(
        default=0.05, validator=_unit_interval, help="Level of tests and intervals."
    )


def _output() -> Any:
    return option(default=None, help="Output file (default: stdout).")


def _instrument_pair() -> Any:
    return option(
        default=None,
        validator=_level_pair,
        help="Two instrument levels 'lo,hi' to compare (required for >2 levels).",
    )


def _covariates() -> Any:
    return option(default=(), help="Covariates defining the cells, e.g. 'age,female'.")


def _bins() -> Any:
    return option(
        factory=dict,
        help="Bins per covariate, e.g. 'age=18:30,30:65'.",
    )


class OutputFormat(Enum):
    """
    Table output formats.
    """

    JSON = "json"
    CSV = "csv"


@attrs.frozen
class EstimateSettings:
    """
    Settings of the ``estimate`` command.
    """

    input: Path = option(help="Sample CSV file.")
    alpha: float = _alpha()
    output: Optional[Path] = _output()
    instrument_pair: Optional[Tuple[int, ...]] = _instrument_pair()
    covariates: Tuple[str, ...] = _covariates()
    bins: Dict[str, str] = _bins()
    by_cell: bool = option(default=False, help="Add estimates per covariate cell.")
    clamp: bool = option(default=False, help="Clamp probabilities to [0, 1].")


@attrs.frozen
class ProfileSettings:
    """
    Settings of the ``profile`` command.
    """

    input: Path = option(help="Sample CSV file.")
    covariate: str = option(help="The profiled covariate.")
    targets: Tuple[str, ...] = option(
        default=("always", "never", "mobilised"),
        validator=_targets,
        help=(
            "Targets: always, never, mobilised, marginal(t=T,y=Y), joint(1..6), "
            "at(y=Y), nt(y=Y)."
        ),
    )
    alpha: float = _alpha()
    output: Optional[Path] = _output()
    instrument_pair: Optional[Tuple[int, ...]] = _instrument_pair()
    cdf: bool = option(
        default=False,
        help="Add the covariate's distribution function per persuasion type.",
    )


@attrs.frozen
class FalsifySettings:
    """
    Settings of the ``falsify`` command.
    """

    input: Path = option(help="Sample CSV file.")
    covariates: Tuple[str, ...] = _covariates()
    bins: Dict[str, str] = _bins()
    restrictions: Restrictions = option(
        default=Restrictions.IA_IV_PLUS_MTR, help="The tested assumptions."
    )
    alpha: float = _alpha()
    b: str = option(
        default="auto",
        validator=_subsample_size,
        help="Subsample size or 'auto' for ceil(n^(2/3)).",
        param_decls=("--b", "-b"),
    )
    M: int = option(  # noqa: N815
        default=200,
        validator=_at_least_one,
        help="Number of subsamples.",
        param_decls=("--M", "-M"),
    )
    seed: int = option(default=0, help="Seed of the subsample draws.")
    threads: Optional[int] = option(
        default=None,
        validator=_at_least_one,
        help="Worker threads (default: $PERSUASION_THREADS or 1).",
    )
    output: Optional[Path] = _output()
    instrument_pair: Optional[Tuple[int, ...]] = _instrument_pair()


def _marginal_pair(
    instance: Any, attribute: attrs.Attribute, value: Optional[Tuple[float, ...]]
) -> None:
    if value is None:
        return
    if len(value) != 2 or not all(0 <= v <= 1 for v in value):
        raise ValueError(f"marginals needs two probabilities, got {value}")


@attrs.frozen
class SensitivitySettings:
    """
    Settings of the ``sensitivity`` command.
    """

    input: Optional[Path] = option(
        default=None, help="Sample CSV file to estimate the marginals from."
    )
    marginals: Optional[Tuple[float, ...]] = option(
        default=None,
        validator=_marginal_pair,
        help="Complier marginals 'P[Y(0)=1|C],P[Y(1)=1|C]'.",
    )
    deltas: Tuple[float, ...] = option(
        default=(), help="Demobilised shares (default: 6 over the admissible range)."
    )
    format: OutputFormat = option(default=OutputFormat.JSON, help="Output format.")
    output: Optional[Path] = _output()
    instrument_pair: Optional[Tuple[int, ...]] = _instrument_pair()

    def __attrs_post_init__(self) -> None:
        if (self.input is None) == (self.marginals is None):
            raise ValueError("Pass exactly one of input and marginals")


@attrs.frozen
class SimulateSettings:
    """
    Settings of the ``simulate`` command.
    """

    dgp: str = option(help="DGP JSON file or built-in name (dgp1, one_sided, ...).")
    n: int = option(validator=_at_least_one, help="Sample size.")
    seed: int = option(default=0, help="Seed of the draw.")
    output: Optional[Path] = _output()


@attrs.frozen
class ArCiSettings:
    """
    Settings of the ``ar-ci`` command.
    """

    input: Path = option(help="Sample CSV file.")
    estimand: str = option(
        default="theta_local",
        validator=_ar_estimand,
        help=f"One of: {', '.join(AR_ESTIMANDS)}.",
    )
    alpha: float = _alpha()
    grid: Optional[Tuple[float, ...]] = option(
        default=None,
        validator=_grid_bounds,
        help="Grid bounds 'lo,hi' (default: estimate ± 10 SE).",
    )
    grid_points: int = option(default=2001, help="Number of grid points.")
    null_value: float = option(default=0.0, help="Value whose AR test is reported.")
    output: Optional[Path] = _output()
    instrument_pair: Optional[Tuple[int, ...]] = _instrument_pair()


@attrs.frozen
class OracleSettings:
    """
    Settings of the ``oracle`` command.
    """

    dgp: str = option(help="DGP JSON file or built-in name.")
    output: Optional[Path] = _output()


#: Settings class per command
COMMANDS: Dict[str, type] = {
    "estimate": EstimateSettings,
    "profile": ProfileSettings,
    "falsify": FalsifySettings,
    "sensitivity": SensitivitySettings,
    "simulate": SimulateSettings,
    "ar-ci": ArCiSettings,
    "oracle": OracleSettings,
}


@attrs.frozen
class RunConfig:
    """
    A command and its resolved settings.
    """

    command: str
    settings: Any


def default_loaders(command: str) -> List[Loader]:
    """
    The file and environment loaders of *command*.

    A ``persuasion.toml`` found in the cwd or one of its parents is loaded
    first, then the files listed in ``PERSUASION_SETTINGS``.  Each command
    reads the table ``[persuasion.<command>]``.
    """
    files = []
    found = find(CONFIG_FILE)
    if found is not None:
        LOGGER.info(f"Using config file: {found}")
        files.append(found)
    return [
        FileLoader(
            formats={"*.toml": TomlFormat(f"{CONFIG_SECTION}.{command}")},
            files=files,
            env_var=SETTINGS_FILES_VAR,
        ),
        EnvLoader(ENV_PREFIX),
    ]


def load_settings(
    cls: Type[ST],
    loaders: Sequence[Loader],
    converter: Optional[cattrs.Converter] = None,
) -> ST:
    """
    Load settings for *cls* from the class defaults and *loaders* (lowest
    precedence first).

    Raise:
        InvalidSettingsError: If one or more values cannot be converted; all
            problems are listed.
        ConfigFileNotFoundError, ConfigFileLoadError, InvalidOptionsError: See
            :class:`~persuasion_iv.loaders.FileLoader`.
    """
    converter = converter or default_converter()
    options = options_for(cls)
    loaded = []
    for loader in [DefaultsLoader(), *loaders]:
        result = loader(cls, options)
        if isinstance(result, list):
            loaded.extend(result)
        else:
            loaded.append(result)
    merged = merge_settings(options, loaded)

    by_path = {o.path: o for o in options}
    settings: SettingsDict = {}
    errors: List[str] = []
    for path, (value, meta) in merged.items():
        try:
            converted = converter.structure(value, by_path[path].cls)
        except Exception as e:
            errors.append(
                f"Could not convert value {value!r} for option {path!r} "
                f"from loader {meta.name}: {e!r}"
            )
            continue
        if isinstance(converted, Path) and not converted.is_absolute():
            if meta.base_dir != Path.cwd():
                converted = meta.base_dir / converted
        set_path(settings, path, converted)

    for oinfo in options:
        if oinfo.path not in merged and not oinfo.has_default:
            errors.append(f"No value set for required option {oinfo.path!r}")

    if not errors:
        try:
            return cls(**settings)
        except Exception as e:
            errors.append(f"Invalid settings: {e}")

    errs = "".join(f"\n- {e}" for e in errors)
    raise InvalidSettingsError(
        f"{len(errors)} errors occured while loading the settings "
        f"for {cls.__name__!r}:{errs}"
    )
