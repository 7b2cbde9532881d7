import argparse
import io
import logging
import os
import sys
from collections.abc import Callable, Mapping, Sequence
from enum import StrEnum
from pathlib import Path
from typing import Any, Literal, Self

import pandas as pd
from pydantic import BaseModel, Field, ValidationError, model_validator

from l0cert._internal.cover import DEFAULT_DEPTH_LIMIT, DEFAULT_LEAF_SIZE, CoverParams, cover_verify
from l0cert._internal.geometry import (
    in_hull_batch,
    in_scaled_l1_batch,
    relative_excess_volumes,
    volume_hull,
    volume_scaled_l1,
)
from l0cert._internal.network import Network, classify, load_input, load_model
from l0cert._internal.oracles import mc_volume
from l0cert._internal.propagation import compute_bounds
from l0cert._internal.seeding import DEFAULT_SEED, derive_seed
from l0cert._internal.types.bounds import Strategy
from l0cert._internal.types.document import FORMAT_VERSION, InputDocument
from l0cert._internal.types.domain import Ball0Spec, BoxDomain, LabeledInput
from l0cert._internal.types.report import Query, VerdictReport, VerdictStatus
from l0cert._internal.verifier import DEFAULT_CORNER_BUDGET, success_rate_experiment, verify
from l0cert.errors import InvalidParameterError, L0CertError, MisclassifiedInputError, ShapeMismatchError

logger = logging.getLogger(__name__)

SEED_ENV_VAR = "L0CERT_SEED"
DEFAULT_MC_SAMPLES = 100_000
DEFAULT_TRIALS = 200

EXIT_OK = 0
EXIT_FALSIFIED = 1
EXIT_USAGE = 2
EXIT_SHAPE = 3
EXIT_UNKNOWN = 4
EXIT_MISCLASSIFIED = 5

_VERDICT_EXIT_CODES = {
    VerdictStatus.VERIFIED: EXIT_OK,
    VerdictStatus.FALSIFIED: EXIT_FALSIFIED,
    VerdictStatus.UNKNOWN: EXIT_UNKNOWN,
}


class Subcommand(StrEnum):
    BOUNDS = "bounds"
    VERIFY = "verify"
    VOLUME = "volume"
    COMPARE = "compare"


class RunConfig(BaseModel):
    subcommand: Subcommand
    model: Path | None = None
    input: Path | None = None
    label: int | None = None
    radii: list[int] = Field(default_factory=lambda: [2])
    subset_sizes: list[int] = Field(default_factory=list)
    strategies: list[Strategy] = Field(default_factory=lambda: list(Strategy))
    pixels: list[int] | None = None
    complete: bool = False
    arity: int | None = None
    leaf_size: int = DEFAULT_LEAF_SIZE
    depth_limit: int = DEFAULT_DEPTH_LIMIT
    trials: int = DEFAULT_TRIALS
    seed: int = DEFAULT_SEED
    jobs: int = 1
    out: Path | None = None
    output_format: Literal["table", "json"] = "table"
    mc: bool = False
    samples: int = DEFAULT_MC_SAMPLES
    corner_cap: int = DEFAULT_CORNER_BUDGET
    lower: float = -1.0
    upper: float = 1.0

    @model_validator(mode="after")
    def required_per_subcommand(self) -> Self:
        if self.subcommand != Subcommand.VOLUME and (self.model is None or self.input is None):
            raise ValueError(f"`{self.subcommand}` needs both --model and --input")
        if self.subcommand in (Subcommand.VOLUME, Subcommand.COMPARE) and not self.subset_sizes:
            raise ValueError(f"`{self.subcommand}` needs at least one value for -k")
        if self.subcommand in (Subcommand.BOUNDS, Subcommand.VERIFY) and len(self.radii) != 1:
            raise ValueError(f"`{self.subcommand}` takes a single radius")
        if any(radius < 1 for radius in self.radii) or any(size < 1 for size in self.subset_sizes):
            raise ValueError("Radii and subset sizes must be positive")
        if self.trials < 1 or self.jobs < 1 or self.samples < 1 or self.corner_cap < 0:
            raise ValueError("Trials, jobs and samples must be positive")
        if not self.lower < self.upper:
            raise ValueError("--lower must be below --upper")

        return self

    @property
    def radius(self) -> int:
        return self.radii[0]


class BoundsDocument(BaseModel):
    format_version: int = FORMAT_VERSION
    config: RunConfig
    rows: list[dict[str, Any]]


class VerifyDocument(BaseModel):
    format_version: int = FORMAT_VERSION
    config: RunConfig
    report: VerdictReport


def resolve_seed(flag: int | None, environ: Mapping[str, str]) -> int:
    if flag is not None:
        return flag

    raw = environ.get(SEED_ENV_VAR)
    if raw is None:
        return DEFAULT_SEED

    try:
        return int(raw)
    except ValueError as error:
        raise InvalidParameterError(message=f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from error


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-v", "--verbose", action="count", default=0, help="More logging (repeatable)")
    parser.add_argument("--seed", type=int, default=None, help=f"Random seed (default: ${SEED_ENV_VAR} or 42)")
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="Worker processes")
    parser.add_argument("--out", type=Path, default=None, help="Write the output document to this path")


def _add_query(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", type=Path, required=True, help="Model document (JSON)")
    parser.add_argument("--input", type=Path, required=True, help="Input document (JSON)")
    parser.add_argument("-t", type=int, dest="radii", nargs=1, default=[2], help="Number of perturbable pixels")
    parser.add_argument("--pixels", type=int, nargs="+", default=None, help="Restrict perturbations to these entries")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="l0cert", description="Few-pixel robustness certification")
    commands = parser.add_subparsers(dest="subcommand", required=True)
    strategies = [strategy.value for strategy in Strategy]

    bounds = commands.add_parser("bounds", help="Per-neuron intervals under every strategy")
    _add_common(bounds)
    _add_query(bounds)
    bounds.add_argument("--strategy", action="append", choices=strategies, dest="strategies")
    bounds.add_argument("--format", choices=["table", "json"], default="table", dest="output_format")

    check = commands.add_parser("verify", help="Robustness verdict for one input")
    _add_common(check)
    _add_query(check)
    check.add_argument("--label", type=int, default=None)
    check.add_argument("--strategy", choices=strategies, default=Strategy.TOP_T.value)
    check.add_argument("--complete", action="store_true", help="Cover-based complete verification")
    check.add_argument("--arity", type=int, default=None, help="Parts per cover (default: 2t)")
    check.add_argument("--leaf-size", type=int, default=DEFAULT_LEAF_SIZE)
    check.add_argument("--depth-limit", type=int, default=DEFAULT_DEPTH_LIMIT)
    check.add_argument("--cap-corners", type=int, default=DEFAULT_CORNER_BUDGET, dest="corner_cap")

    volume = commands.add_parser("volume", help="Closed-form hull and scaled l1 volumes (CSV)")
    _add_common(volume)
    volume.add_argument("-k", type=int, nargs="+", required=True, dest="subset_sizes")
    volume.add_argument("-t", type=int, nargs="+", required=True, dest="radii")
    volume.add_argument("--lower", type=float, default=-1.0)
    volume.add_argument("--upper", type=float, default=1.0)
    volume.add_argument("--mc", action="store_true", help="Append Monte Carlo estimates")
    volume.add_argument("--samples", type=int, default=DEFAULT_MC_SAMPLES)

    compare = commands.add_parser("compare", help="Success rates per strategy over random pixel subsets (CSV)")
    _add_common(compare)
    compare.add_argument("--model", type=Path, required=True)
    compare.add_argument("--input", type=Path, required=True)
    compare.add_argument("--label", type=int, default=None)
    compare.add_argument("-k", type=int, nargs="+", required=True, dest="subset_sizes")
    compare.add_argument("-t", type=int, nargs="+", required=True, dest="radii")
    compare.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    compare.add_argument("--strategy", action="append", choices=strategies, dest="strategies")

    return parser


def config_from_args(args: argparse.Namespace, *, environ: Mapping[str, str]) -> RunConfig:
    values = {key: value for key, value in vars(args).items() if key != "verbose" and value is not None}
    if "strategy" in values:
        values["strategies"] = [values.pop("strategy")]
    values["seed"] = resolve_seed(args.seed, environ)

    return RunConfig.model_validate(values)


def _load_query(config: RunConfig) -> tuple[Network, InputDocument]:
    assert config.model is not None and config.input is not None
    net = load_model(config.model.read_bytes())
    document = load_input(config.input.read_bytes())

    center = document.center_array()
    if center.shape != (net.entries, net.channels):
        raise ShapeMismatchError(expected=(net.entries, net.channels), actual=center.shape, what="input shape")

    return net, document


def _ball(config: RunConfig, document: InputDocument, radius: int) -> Ball0Spec:
    pixels = tuple(config.pixels) if config.pixels is not None else None
    return Ball0Spec(center=document.center_array(), radius=radius, perturbable=pixels)


def _labeled(config: RunConfig, net: Network, document: InputDocument) -> LabeledInput:
    label = config.label if config.label is not None else document.label
    if label is None:
        label = classify(net, document.center_array())
        logger.warning("No label given, using the predicted class %d", label)

    return LabeledInput(center=document.center_array(), label=label)


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        out.write_text(text)
        logger.info("Wrote %s", out)


def cmd_bounds(config: RunConfig) -> int:
    net, document = _load_query(config)
    domain = document.domain()
    ball = _ball(config, document, config.radius)
    ball.check_against(domain)

    frame: pd.DataFrame | None = None
    for strategy in config.strategies:
        bounds = compute_bounds(net=net, ball=ball, domain=domain, strategy=strategy)
        columns = pd.DataFrame(
            [
                {
                    "stage": layer.index,
                    "kind": layer.kind,
                    "neuron": neuron,
                    f"{strategy}_lower": float(layer.bounds.lower[neuron]),
                    f"{strategy}_upper": float(layer.bounds.upper[neuron]),
                }
                for layer in bounds.layers
                for neuron in range(layer.bounds.width)
            ]
        )
        frame = columns if frame is None else frame.merge(columns, on=["stage", "kind", "neuron"])

    assert frame is not None
    bounds_document = BoundsDocument(config=config, rows=frame.to_dict(orient="records"))
    if config.out is not None:
        _emit(bounds_document.model_dump_json(indent=2), config.out)
    if config.output_format == "json":
        _emit(bounds_document.model_dump_json(indent=2), None)
    else:
        _emit(frame.to_string(index=False), None)

    return EXIT_OK


def cmd_verify(config: RunConfig) -> int:
    net, document = _load_query(config)
    domain = document.domain()
    labeled = _labeled(config, net, document)

    if config.complete:
        params = CoverParams(
            arity=config.arity,
            leaf_size=config.leaf_size,
            depth_limit=config.depth_limit,
            seed=config.seed,
            jobs=config.jobs,
            corner_budget=config.corner_cap,
        )
        report, _ = cover_verify(net=net, labeled=labeled, domain=domain, radius=config.radius, params=params)
    else:
        query = Query(
            net=net,
            labeled=labeled,
            ball=_ball(config, document, config.radius),
            domain=domain,
            strategy=config.strategies[0],
        )
        report = verify(query, corner_budget=config.corner_cap, seed=config.seed)

    text = VerifyDocument(config=config, report=report).model_dump_json(indent=2)
    _emit(text, None)
    if config.out is not None:
        _emit(text, config.out)

    return _VERDICT_EXIT_CODES[report.status]


def _write_csv(frame: pd.DataFrame, out: Path | None) -> None:
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False)
    _emit(buffer.getvalue(), out)


def cmd_volume(config: RunConfig) -> int:
    rows: list[dict[str, float | int]] = []
    for entries in config.subset_sizes:
        domain = BoxDomain.uniform(entries=entries, lower=config.lower, upper=config.upper)
        for radius in config.radii:
            if radius > entries:
                continue

            excess_l1, excess_box = relative_excess_volumes(domain=domain, radius=radius)
            row: dict[str, float | int] = {
                "k": entries,
                "t": radius,
                "vol_hull": volume_hull(domain=domain, radius=radius),
                "vol_l1": volume_scaled_l1(domain=domain, radius=radius),
                "excess_l1": excess_l1,
                "excess_box": excess_box,
            }
            if config.mc:
                row |= _mc_columns(domain, radius, samples=config.samples, seed=config.seed)
            rows.append(row)

    _write_csv(pd.DataFrame(rows), config.out)
    return EXIT_OK


def _mc_columns(domain: BoxDomain, radius: int, *, samples: int, seed: int) -> dict[str, float]:
    center = (domain.lower + domain.upper) / 2.0
    ball = Ball0Spec(center=center, radius=radius)
    reach = BoxDomain(lower=center + radius * (domain.lower - center), upper=center + radius * (domain.upper - center))

    hull = mc_volume(
        predicate=lambda points: in_hull_batch(ball=ball, domain=domain, points=points),
        domain=domain,
        samples=samples,
        seed=derive_seed(seed, domain.entries, radius, 0),
    )
    l1 = mc_volume(
        predicate=lambda points: in_scaled_l1_batch(ball=ball, domain=domain, points=points),
        domain=reach,
        samples=samples,
        seed=derive_seed(seed, domain.entries, radius, 1),
    )
    return {"mc_hull": hull.mean, "mc_hull_stderr": hull.std_error, "mc_l1": l1.mean, "mc_l1_stderr": l1.std_error}


def cmd_compare(config: RunConfig) -> int:
    net, document = _load_query(config)
    domain = document.domain()
    labeled = _labeled(config, net, document)

    rows: list[dict[str, Any]] = []
    for subset_size in config.subset_sizes:
        for radius in config.radii:
            if radius > subset_size:
                continue

            rates = success_rate_experiment(
                net=net,
                labeled=labeled,
                domain=domain,
                subset_size=subset_size,
                radius=radius,
                trials=config.trials,
                seed=config.seed,
                strategies=tuple(config.strategies),
                jobs=config.jobs,
            )
            rows.extend(
                {
                    "k": subset_size,
                    "t": radius,
                    "strategy": strategy.value,
                    "trials": rates.trials,
                    "verified": rates.verified[strategy],
                    "rate": rates.rate(strategy),
                }
                for strategy in config.strategies
            )

    _write_csv(pd.DataFrame(rows, columns=["k", "t", "strategy", "trials", "verified", "rate"]), config.out)
    return EXIT_OK


_COMMANDS: dict[Subcommand, Callable[[RunConfig], int]] = {
    Subcommand.BOUNDS: cmd_bounds,
    Subcommand.VERIFY: cmd_verify,
    Subcommand.VOLUME: cmd_volume,
    Subcommand.COMPARE: cmd_compare,
}


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING - 10 * min(verbosity, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.getLogger("l0cert").setLevel(level)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return exit_.code if isinstance(exit_.code, int) else EXIT_USAGE

    _configure_logging(args.verbose)
    try:
        config = config_from_args(args, environ=os.environ)
        return _COMMANDS[config.subcommand](config)
    except ValidationError as error:
        logger.error("Invalid arguments: %s", error)
        return EXIT_USAGE
    except ShapeMismatchError as error:
        logger.error("%s", error)
        return EXIT_SHAPE
    except MisclassifiedInputError as error:
        logger.error("%s", error)
        return EXIT_MISCLASSIFIED
    except L0CertError as error:
        logger.error("%s", error)
        return EXIT_USAGE
    except OSError as error:
        logger.error("Could not read or write a file: %s", error)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
