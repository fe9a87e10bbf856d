import sys


PY_311 = sys.version_info[:2] >= (3, 11)


if PY_311:
    import tomllib
else:
    import tomli as tomllib  # type: ignore[no-redef]


__all__ = ["PY_311", "tomllib"]
