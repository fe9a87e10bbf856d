"""
The ``persuasion-iv`` command line interface.

Options are generated from the settings classes in :mod:`.settings`.  Only
values passed on the command line are forwarded to :func:`.load_settings`, so
TOML files and environment variables are not shadowed by Click defaults.
"""

import io
import json
import logging
import re
import sys
from enum import Enum
from pathlib import Path
from typing import (
    Any,
    Callable,
    Dict,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
    get_args,
    get_origin,
)

import click
import numpy as np
from click.core import ParameterSource

from .constants import APP_NAME, METADATA_KEY
from .converters import dump_json, to_jsonable
from .estimands import (
    Group,
    MarginalPO,
    PersuasionTarget,
    TypeProfile,
    compare_dk_local,
    conditional_cdf,
    constant,
    covariate,
    estimand_components,
    joint_po,
    marginal_po,
    persuasion_rates,
    profile_at_nt,
    profile_joint_indicator,
    profile_marginal,
    profile_persuasion,
)
from .exceptions import (
    NumericalError,
    PersuasionError,
    SampleValidationError,
    ZeroMassError,
)
from .falsifier import subsample_test
from .inference import GridSpec, ar_confidence_set, delta_inference
from .loaders import DictLoader
from .oracle_sim import draw_sample, load_dgp, oracle_estimands
from .sample_store import (
    BinSpec,
    ObservedSample,
    load_csv,
    parse_bins,
    partition_cells,
    restrict_pair,
    write_csv,
)
from .sensitivity import admissible_range, sensitivity_curve, sensitivity_table
from .settings import (
    COMMANDS,
    OutputFormat,
    RunConfig,
    default_loaders,
    load_settings,
    options_for,
)
from .types import FloatArray, IntArray, OptionInfo


__all__ = ["cli", "main", "run", "exit_code"]


LOGGER = logging.getLogger(APP_NAME)

#: Key in ``ctx.obj`` under which command line values are collected
CTX_KEY = "settings"

LOG_LEVELS = ("debug", "info", "warning", "error")

Callback = Callable[[click.Context, click.Parameter, Any], Any]

_HELP = {
    "estimate": "Estimate persuasion rates and complier outcome shares.",
    "profile": "Profile persuasion types by a covariate.",
    "falsify": "Test the identifying assumptions by subsampling.",
    "sensitivity": "Complier outcome shares for postulated demobilised shares.",
    "simulate": "Draw a CSV sample from a DGP.",
    "ar-ci": "Anderson-Rubin confidence set for one estimand.",
    "oracle": "Print the ground truth of a DGP.",
}


def exit_code(error: BaseException) -> int:
    """
    The exit status for *error*: 2 for numerical failures, 1 otherwise.
    """
    return 2 if isinstance(error, NumericalError) else 1


def _echo_error(name: str, message: str) -> None:
    record = {"error": name, "message": message}
    click.echo(json.dumps(record, sort_keys=True), err=True)


def _unwrap(cls: Any) -> Any:
    if get_origin(cls) is Union:
        args = [a for a in get_args(cls) if a is not type(None)]
        if len(args) == 1:
            return args[0]
    return cls


def _mapping_callback(
    ctx: click.Context, param: click.Parameter, value: Optional[Sequence[str]]
) -> Dict[str, str]:
    if not value:
        return {}
    items = {}
    for item in value:
        key, sep, val = item.partition("=")
        if not sep:
            raise click.BadParameter(f"expected KEY=VALUE, got {item!r}")
        items[key] = val
    return items


def _type_kwargs(cls: Any) -> Dict[str, Any]:
    cls = _unwrap(cls)
    origin = get_origin(cls)
    if cls is bool:
        return {"is_flag": True}
    if isinstance(cls, type) and issubclass(cls, Enum):
        return {"type": click.Choice([m.value for m in cls])}
    if origin in (dict, Mapping):
        return {"metavar": "KEY=VALUE", "multiple": True, "callback": _mapping_callback}
    if origin in (tuple, list):
        return {"type": str, "metavar": "A,B,..."}
    if cls is Path:
        return {"type": click.Path(path_type=Path)}
    return {"type": cls}


def _show_default(oinfo: OptionInfo) -> Union[bool, str]:
    default = oinfo.default
    if not oinfo.has_default or default in (None, (), {}):
        return False
    if isinstance(default, Enum):
        return str(default.value)
    if isinstance(default, bool):
        return "true" if default else "false"
    return str(default)


def _mk_option(oinfo: OptionInfo) -> click.Option:
    """
    Create the click option for one settings field.
    """
    user_config = dict(oinfo.metadata.get(METADATA_KEY, {}))
    kwargs = _type_kwargs(oinfo.cls)

    param_decls: Tuple[str, ...] = tuple(user_config.get("param_decls", ()))
    if not param_decls:
        name = oinfo.path.replace("_", "-")
        if kwargs.get("is_flag"):
            param_decls = (f"--{name}/--no-{name}",)
        else:
            param_decls = (f"--{name}",)

    help = user_config.get("help") or ""
    if not oinfo.has_default:
        help = f"{help} [required]".strip()

    kwargs.update(
        default=None if not kwargs.get("multiple") else (),
        show_default=_show_default(oinfo),
        expose_value=False,
        help=help,
        callback=_make_callback(oinfo.path, kwargs.get("callback")),
    )
    return click.Option(param_decls, **kwargs)


def _make_callback(path: str, type_callback: Optional[Callback]) -> Callback:
    """
    Generate a callback that stores values passed on the command line in the
    context.
    """

    def cb(ctx: click.Context, param: click.Parameter, value: Any) -> Any:
        if ctx.get_parameter_source(param.name or "") != ParameterSource.COMMANDLINE:
            return value
        if type_callback is not None:
            value = type_callback(ctx, param, value)
        ctx.ensure_object(dict).setdefault(CTX_KEY, {})[path] = value
        return value

    return cb


def _make_command(name: str, settings_cls: type) -> click.Command:
    def callback() -> None:
        ctx = click.get_current_context()
        values = ctx.ensure_object(dict).get(CTX_KEY, {})
        loaders = [*default_loaders(name), DictLoader(values, "command line")]
        try:
            settings = load_settings(settings_cls, loaders)
            run(RunConfig(name, settings))
        except PersuasionError as e:
            LOGGER.debug(f"{name} failed", exc_info=True)
            _echo_error(type(e).__name__, str(e))
            ctx.exit(exit_code(e))

    params: List[click.Parameter] = [_mk_option(o) for o in options_for(settings_cls)]
    return click.Command(name, callback=callback, params=params, help=_HELP[name])


@click.group(name=APP_NAME)
@click.option(
    "--log-level",
    type=click.Choice(LOG_LEVELS),
    default="warning",
    show_default=True,
    help="Log messages at this level and above to stderr.",
)
def cli(log_level: str) -> None:
    """
    Identification, inference and falsification for binary-instrument
    persuasion models.

    Options can also be set in "persuasion.toml" (table
    [persuasion.<command>]) or with PERSUASION_<OPTION> environment variables.
    """
    logging.basicConfig(stream=sys.stderr)
    LOGGER.setLevel(log_level.upper())


for _name, _cls in COMMANDS.items():
    cli.add_command(_make_command(_name, _cls))


def main(args: Optional[Sequence[str]] = None) -> None:
    """
    Entry point of the console script.

    Exit with 0 on success, 1 on usage and validation errors and 2 on
    numerical failures.  Errors are written to stderr as one JSON object.
    """
    try:
        rv = cli.main(args=args, prog_name=APP_NAME, standalone_mode=False)
    except click.exceptions.Abort:
        _echo_error("Abort", "Aborted")
        sys.exit(1)
    except click.ClickException as e:
        _echo_error(type(e).__name__, e.format_message())
        sys.exit(1)
    except PersuasionError as e:
        _echo_error(type(e).__name__, str(e))
        sys.exit(exit_code(e))
    sys.exit(rv if isinstance(rv, int) else 0)


def run(config: RunConfig) -> None:
    """
    Run *config.command* and write its output to the configured file or to
    stdout.
    """
    text = _RUNNERS[config.command](config)
    output: Optional[Path] = config.settings.output
    if output is None:
        click.echo(text, nl=False)
    else:
        output.write_text(text, encoding="utf-8")
        LOGGER.info(f"Wrote {config.command} output to {output}")


def _config_record(config: RunConfig) -> Dict[str, Any]:
    record = to_jsonable(config.settings)
    record["command"] = config.command
    return record


def _with_config_header(config: RunConfig, table: str) -> str:
    """
    Prefix a CSV *table* with the resolved config as a "#" comment line.
    """
    return f"# config: {dump_json(_config_record(config), indent=None)}{table}"


def _prepare_sample(
    path: Path, instrument_pair: Optional[Tuple[int, ...]]
) -> ObservedSample:
    """
    Load *path* and reduce its instrument to two levels coded 0/1.
    """
    sample = load_csv(path)
    if instrument_pair is not None:
        return restrict_pair(sample, *instrument_pair)
    levels = sample.instrument_levels
    if levels == (0, 1):
        return sample
    if len(levels) == 2:
        return restrict_pair(sample, *levels)
    found = ", ".join(str(v) for v in levels)
    raise SampleValidationError(
        f"{path}: the instrument has the levels {found}; pass --instrument-pair"
    )


def _bin_spec(covariates: Tuple[str, ...], bins: Mapping[str, str]) -> BinSpec:
    return BinSpec(covariates, {k: parse_bins(v) for k, v in bins.items()})


def _error_record(error: PersuasionError) -> Dict[str, str]:
    return {"error": type(error).__name__, "message": str(error)}


def _estimates(sample: ObservedSample, alpha: float, clamp: bool) -> Dict[str, Any]:
    rates = persuasion_rates(sample, clamp)
    joint = joint_po(sample, clamp)
    marginal = marginal_po(sample, clamp)
    ci: Dict[str, Any] = {}
    ar_ci: Dict[str, Any] = {}
    for name, c in estimand_components(sample).items():
        delta = delta_inference(c, alpha)
        ci[name] = {
            "estimate": delta.estimate,
            "se": delta.se,
            "lo": delta.ci_lo,
            "hi": delta.ci_hi,
        }
        try:
            ar = ar_confidence_set(c, alpha)
        except NumericalError as e:
            LOGGER.warning(f"No AR confidence set for {name}: {e}")
            ar_ci[name] = _error_record(e)
        else:
            ar_ci[name] = {"intervals": ar.intervals, "bounded": ar.bounded}
    return {
        "theta_local": rates.theta_local,
        "theta_dk": rates.theta_dk,
        "theta_local_untreated": rates.theta_local_untreated,
        "late": ci["late"]["estimate"],
        "first_stage": joint.first_stage,
        "marginal": {"p_y0": marginal.p_y0, "p_y1": marginal.p_y1},
        "joint": {"p11": joint.p11, "p00": joint.p00, "p01": joint.p01},
        "dk_local": compare_dk_local(sample),
        "ci": ci,
        "ar_ci": ar_ci,
        "alpha": alpha,
        "n": sample.n,
    }


def _run_estimate(config: RunConfig) -> str:
    s = config.settings
    sample = _prepare_sample(s.input, s.instrument_pair)
    record = _estimates(sample, s.alpha, s.clamp)
    record["instrument_levels"] = sample.labels
    if s.by_cell:
        partition = partition_cells(sample, _bin_spec(s.covariates, s.bins))
        assigned = partition.assign(sample.x)
        cells = []
        for cell in partition.cells:
            sub = sample.take(np.flatnonzero(assigned == cell.index))
            entry: Dict[str, Any] = {"cell": cell.label, "n": sub.n}
            try:
                entry.update(_estimates(sub, s.alpha, s.clamp))
            except PersuasionError as e:
                LOGGER.warning(f"No estimates for cell {cell.label}: {e}")
                entry.update(_error_record(e))
            cells.append(entry)
        record["cells"] = cells
    record["config"] = _config_record(config)
    LOGGER.info(f"theta_local = {record['theta_local']:.6g} (n={sample.n})")
    return dump_json(record)


_TARGET_RE = re.compile(r"^(?P<name>[a-z]+)(?:\((?P<args>[^)]*)\))?$")


def _parse_args(args: str) -> Dict[str, int]:
    parsed = {}
    for item in args.split(","):
        key, _, value = item.partition("=")
        parsed[key.strip()] = int(value)
    return parsed


def _profile(
    sample: ObservedSample,
    g: Callable[[IntArray, FloatArray], FloatArray],
    label: str,
) -> TypeProfile:
    """
    Evaluate the profile target *label*, e.g. ``marginal(t=0,y=1)``.
    """
    match = _TARGET_RE.match(label.replace(" ", ""))
    if match is None:
        raise SampleValidationError(f"Unknown profile target: {label!r}")
    name, args = match["name"], match["args"]
    if args is None:
        return profile_persuasion(sample, g, PersuasionTarget(name))
    if name == "joint":
        return profile_joint_indicator(sample, g, int(args))
    params = _parse_args(args)
    if name == "marginal":
        return profile_marginal(sample, g, params["t"], params["y"])
    group = Group.ALWAYS_TAKER if name == "at" else Group.NEVER_TAKER
    return profile_at_nt(sample, g, group, params["y"])


def _run_profile(config: RunConfig) -> str:
    s = config.settings
    sample = _prepare_sample(s.input, s.instrument_pair)
    if s.covariate not in sample.covariates:
        raise SampleValidationError(f"Unknown covariate: {s.covariate!r}")
    j = sample.covariates.index(s.covariate)
    g = covariate(j)

    profiles = {}
    for label in s.targets:
        profile = _profile(sample, g, label)
        delta = delta_inference(profile.components, s.alpha, error=ZeroMassError)
        profiles[profile.label] = {
            "value": profile.value,
            "se": delta.se,
            "ci": (delta.ci_lo, delta.ci_hi),
        }
    record: Dict[str, Any] = {
        "covariate": s.covariate,
        "profiles": profiles,
        "n": sample.n,
        "config": _config_record(config),
    }
    if s.cdf:
        grid = np.unique(sample.x[:, j])
        cdf: Dict[str, Any] = {}
        for target in PersuasionTarget:
            try:
                cdf[target.value] = conditional_cdf(sample, j, target, grid)
            except ZeroMassError as e:
                cdf[target.value] = _error_record(e)
        record["cdf"] = cdf
    return dump_json(record)


def _run_falsify(config: RunConfig) -> str:
    s = config.settings
    sample = _prepare_sample(s.input, s.instrument_pair)
    partition = partition_cells(
        sample, _bin_spec(s.covariates, s.bins), discrete_only=True
    )
    result = subsample_test(
        sample,
        partition,
        restrictions=s.restrictions,
        alpha=s.alpha,
        b=None if s.b == "auto" else int(s.b),
        M=s.M,
        seed=s.seed,
        threads=s.threads,
    )
    record = result.to_dict()
    record["n"] = sample.n
    record["cells"] = [cell.label for cell in partition.cells]
    record["config"] = _config_record(config)
    LOGGER.info(
        f"Falsifier statistic {result.statistic:.6g}, critical value "
        f"{result.critical_value:.6g}, rejected: {result.rejected}"
    )
    return dump_json(record)


def _run_sensitivity(config: RunConfig) -> str:
    s = config.settings
    if s.input is not None:
        marginals = marginal_po(_prepare_sample(s.input, s.instrument_pair))
    else:
        marginals = MarginalPO.from_shares(*s.marginals)
    points = sensitivity_curve(marginals, s.deltas or None)
    if s.format is OutputFormat.CSV:
        table = sensitivity_table(points).to_csv(
            index=False, lineterminator="\n", float_format=lambda v: repr(float(v))
        )
        return _with_config_header(config, table)
    return dump_json(
        {
            "marginals": {"p_y0_1": marginals.p_y0[1], "p_y1_1": marginals.p_y1[1]},
            "admissible_range": admissible_range(marginals),
            "points": points,
            "config": _config_record(config),
        }
    )


def _run_simulate(config: RunConfig) -> str:
    s = config.settings
    sample = draw_sample(load_dgp(s.dgp), s.n, s.seed)
    buffer = io.StringIO()
    write_csv(sample, buffer)
    return _with_config_header(config, buffer.getvalue())


def _run_ar_ci(config: RunConfig) -> str:
    s = config.settings
    sample = _prepare_sample(s.input, s.instrument_pair)
    c = estimand_components(sample)[s.estimand]
    grid = None if s.grid is None else GridSpec(s.grid[0], s.grid[1], s.grid_points)
    ar = ar_confidence_set(c, s.alpha, grid, s.null_value)
    record: Dict[str, Any] = {
        "estimand": s.estimand,
        "ar": ar,
        "n": sample.n,
        "config": _config_record(config),
    }
    try:
        delta = delta_inference(c, s.alpha)
    except NumericalError as e:
        record["estimate"] = None
        record["delta"] = _error_record(e)
    else:
        record["estimate"] = delta.estimate
        record["delta"] = {"se": delta.se, "lo": delta.ci_lo, "hi": delta.ci_hi}
    return dump_json(record)


def _first_covariate(y: IntArray, t: IntArray, x: FloatArray) -> FloatArray:
    return x[:, 0]


def _run_oracle(config: RunConfig) -> str:
    s = config.settings
    dgp = load_dgp(s.dgp)
    if dgp.covariates:
        truth = oracle_estimands(dgp, covariate(0), _first_covariate)
        profiled = dgp.covariates[0]
    else:
        truth = oracle_estimands(dgp, constant(1.0))
        profiled = None
    return dump_json(
        {
            "dgp": s.dgp,
            "profiled_covariate": profiled,
            "satisfies_assumptions": dgp.satisfies_assumptions,
            "truth": truth,
            "config": _config_record(config),
        }
    )


_RUNNERS: Dict[str, Callable[[RunConfig], str]] = {
    "estimate": _run_estimate,
    "profile": _run_profile,
    "falsify": _run_falsify,
    "sensitivity": _run_sensitivity,
    "simulate": _run_simulate,
    "ar-ci": _run_ar_ci,
    "oracle": _run_oracle,
}
