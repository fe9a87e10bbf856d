"""
Internal data structures and type aliases.
"""

import dataclasses
from pathlib import Path
from typing import (
    Any,
    Callable,
    Dict,
    NamedTuple,
    Optional,
    Protocol,
    Tuple,
    TypeVar,
    Union,
)

import numpy as np
import numpy.typing as npt


__all__ = [
    "T",
    "ST",
    "FloatArray",
    "IntArray",
    "RowTransform",
    "ProfileFunction",
    "KappaFunction",
    "ArmData",
    "SettingsDict",
    "OptionPath",
    "OptionInfo",
    "OptionList",
    "LoaderMeta",
    "LoadedValue",
    "LoadedSettings",
    "MergedSettings",
]


#: A generic TypeVar
T = TypeVar("T")
#: A TypeVar for settings instances
ST = TypeVar("ST")

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]

RowTransform = Callable[[IntArray, IntArray, FloatArray], FloatArray]
"""
A measurable function of (y, t, x), evaluated row-wise on whole columns.
"""

ProfileFunction = Callable[[IntArray, FloatArray], FloatArray]
"""
A function g(t, x) whose mean over a latent subpopulation is profiled.
"""

KappaFunction = Callable[[IntArray, IntArray, FloatArray], FloatArray]
"""
A function g(y, t, x) of a potential outcome, treatment and covariates.
"""

SettingsDict = Dict[str, Any]
"""
A dict of (possibly nested) option values as returned by a loader.
"""

OptionPath = str


@dataclasses.dataclass(frozen=True)
class OptionInfo:
    """
    Information about a single option of a settings class.
    """

    path: OptionPath
    cls: Any
    default: Any
    has_default: bool
    metadata: Dict[Any, Any] = dataclasses.field(default_factory=dict)


OptionList = Tuple[OptionInfo, ...]


class LoaderMeta:
    """
    Meta data about the loader that loaded a set of option values.

    It is used for error messages and to resolve relative paths in the context
    of the file they were read from.
    """

    def __init__(self, name: Union[str, Any], base_dir: Optional[Path] = None):
        self._name = name if isinstance(name, str) else type(name).__name__
        self._base_dir = base_dir or Path.cwd()

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self._name!r}, {self._base_dir!r})"

    def __eq__(self, other: Any) -> bool:
        return (
            isinstance(other, type(self))
            and self.name == other.name
            and self.base_dir == other.base_dir
        )

    @property
    def name(self) -> str:
        """
        The loader's name.
        """
        return self._name

    @property
    def base_dir(self) -> Path:
        """
        Directory relative paths in the loaded values are resolved against.
        """
        return self._base_dir


class LoadedValue(NamedTuple):
    """
    A loaded option value and the meta data of the loader it came from.
    """

    value: Any
    loader_meta: LoaderMeta


@dataclasses.dataclass(frozen=True)
class LoadedSettings:
    """
    The settings loaded by a single loader and the loader's meta data.
    """

    settings: SettingsDict
    meta: LoaderMeta


MergedSettings = Dict[OptionPath, LoadedValue]
"""
Maps a dotted option path to its loaded value (possibly from different loaders).
"""


class ArmData(Protocol):
    """
    **Protocol** for anything the moment functions can average over.

    Implemented by :class:`~persuasion_iv.sample_store.ObservedSample`
    (unweighted) and :class:`~persuasion_iv.oracle_sim.PopulationMoments`
    (a weighted support table with a nominal sample size).
    """

    @property
    def y(self) -> IntArray: ...

    @property
    def t(self) -> IntArray: ...

    @property
    def z(self) -> IntArray: ...

    @property
    def x(self) -> FloatArray: ...

    @property
    def covariates(self) -> Tuple[str, ...]: ...

    @property
    def weights(self) -> Optional[FloatArray]: ...

    @property
    def n(self) -> int: ...
