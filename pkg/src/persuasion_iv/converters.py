"""
Converters and structure/unstructure hooks.

Loaded option values and DGP files are structured with a :program:`cattrs`
converter.  Result records are unstructured with the same converter and written
as deterministic JSON.
"""

import json
import math
import re
from enum import Enum
from pathlib import Path
from typing import Any, List, Optional, Type

import cattrs
import numpy as np
from cattrs._compat import is_frozenset, is_mutable_set, is_sequence, is_tuple

from .types import T


__all__ = [
    "default_converter",
    "register_strlist_hook",
    "to_bool",
    "to_enum",
    "to_path",
    "to_jsonable",
    "dump_json",
]


def default_converter() -> cattrs.Converter:
    """
    Get a converter which structures the loaded settings and DGP specs and
    unstructures result records.

    Return:
        A :class:`cattrs.Converter` that handles:

        - :class:`bool` (see :func:`to_bool()` for supported inputs)
        - :class:`enum.Enum` by value or by name (see :func:`to_enum()`)
        - :class:`pathlib.Path` (not resolved, see :func:`to_path()`)
        - lists, tuples and sets from ``,``-separated strings
        - :class:`numpy.ndarray` and numpy scalars (unstructured to lists and
          Python numbers)
    """
    converter = cattrs.Converter()
    register_strlist_hook(converter, ",")
    converter.register_structure_hook(bool, to_bool)
    converter.register_structure_hook(Enum, to_enum)  # type: ignore[arg-type]
    converter.register_structure_hook(Path, to_path)
    converter.register_unstructure_hook(Path, str)
    converter.register_unstructure_hook(np.ndarray, lambda a: a.tolist())
    converter.register_unstructure_hook(np.floating, float)
    converter.register_unstructure_hook(np.integer, int)
    converter.register_unstructure_hook(np.bool_, bool)
    return converter


def register_strlist_hook(converter: cattrs.Converter, sep: str) -> None:
    """
    Register a hook factory with *converter* that allows structuring lists,
    (frozen) sets and tuples from strings (which may, e.g., come from
    environment variables or the command line).

    Args:
        converter: The :class:`cattrs.Converter` to register the hook at.
        sep: A separator used for splitting strings.

    Example:
        >>> from typing import Tuple
        >>> converter = default_converter()
        >>> converter.structure("0.1,0.2", Tuple[float, ...])
        (0.1, 0.2)
    """
    collection_types = [
        # Order is important, tuple must be last!
        (is_sequence, converter._structure_list),
        (is_mutable_set, converter._structure_set),
        (is_frozenset, converter._structure_frozenset),
        (is_tuple, converter._structure_tuple),
    ]

    for check, structure_func in collection_types:
        converter.register_structure_hook_factory(
            check, _generate_hook_factory(structure_func, sep)
        )


def _generate_hook_factory(structure_func, sep):  # type: ignore[no-untyped-def]
    def gen_func(typ):  # type: ignore[no-untyped-def]
        def str2collection(val, _):  # type: ignore[no-untyped-def]
            if isinstance(val, str):
                val = _split(val, sep)
            return structure_func(val, typ)

        return str2collection

    return gen_func


def _split(value: str, sep: str) -> List[str]:
    """
    Split *value* at *sep* except inside parentheses, e.g. ``"always,
    marginal(t=0,y=1)"`` has two items.
    """
    if not value.strip():
        return []
    pattern = rf"{re.escape(sep)}(?![^(]*\))"
    return [v.strip() for v in re.split(pattern, value)]


def to_bool(value: Any, _cls: type = bool) -> bool:
    """
    Convert "boolean" strings (e.g., from env. vars.) to real booleans.

    ``true``, ``t``, ``yes``, ``y``, ``on`` and ``1`` (case insensitive) map to
    :code:`True`; ``false``, ``f``, ``no``, ``n``, ``off`` and ``0`` map to
    :code:`False`.

    Raise:
        ValueError: If *value* is any other value.
    """
    if isinstance(value, str):
        value = value.lower()
    truthy = {True, "true", "t", "yes", "y", "on", "1", 1}
    falsy = {False, "false", "f", "no", "n", "off", "0", 0}
    try:
        if value in truthy:
            return True
        if value in falsy:
            return False
    except TypeError:
        # Raised when "value" is not hashable (e.g., lists)
        pass
    raise ValueError(f"Cannot convert value to bool: {value}")


def to_enum(value: Any, cls: Type[T]) -> T:
    """
    Return an instance of the enum *cls* for *value*.

    *value* may be an enum member, a member's value or a member's name.

    Raise:
        ValueError: If *value* does not name a member of *cls*
    """
    if isinstance(value, cls):
        return value
    try:
        return cls(value)  # type: ignore[call-arg]
    except ValueError:
        pass
    try:
        return cls[value]  # type: ignore[index]
    except (KeyError, TypeError):
        choices = ", ".join(repr(m.value) for m in cls)  # type: ignore[attr-defined]
        raise ValueError(f"{value!r} is not one of: {choices}") from None


def to_path(value: Any, _cls: type) -> Path:
    """
    Convert *value* to :class:`~pathlib.Path` without resolving it.
    """
    return Path(value)


def to_jsonable(obj: Any, converter: Optional[cattrs.Converter] = None) -> Any:
    """
    Unstructure *obj* and replace non-finite floats with JSON-safe values.

    ``inf`` and ``-inf`` become the strings ``"inf"``/``"-inf"``, ``nan``
    becomes ``None``.
    """
    if converter is None:
        converter = _CONVERTER
    return _finite(converter.unstructure(obj))


def _finite(value: Any) -> Any:
    if isinstance(value, float):
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {_key(k): _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    return value


def _key(key: Any) -> str:
    if isinstance(key, Enum):
        return str(key.value)
    return str(key)


def dump_json(obj: Any, indent: Optional[int] = 2) -> str:
    """
    Serialize *obj* to a deterministic JSON document (sorted keys, shortest
    round-trip floats, trailing newline).  ``indent=None`` gives one line.
    """
    text = json.dumps(
        to_jsonable(obj), sort_keys=True, indent=indent, allow_nan=False
    )
    return text + "\n"


_CONVERTER = default_converter()
