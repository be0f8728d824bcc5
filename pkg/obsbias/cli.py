"""Command-line interface.

Results go to stdout as one JSON object (or a table with ``--pretty``);
diagnostics go to stderr. Exit codes: 0 success, 2 invalid input,
3 computation or I/O failure.
"""

import argparse
import logging
import os
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from obsbias import __version__
from obsbias.evalue import (
    EffectEstimate,
    Scale,
    TipParameters,
    bias_adjusted_bound,
    evalue,
    lin_adjust,
    observed_covariate_evalue,
    orient,
    tip_rr_ud,
)
from obsbias.exceptions import DomainError, FitError
from obsbias.io_store import (
    PRESETS,
    RunArtifact,
    dumps_json,
    read_config,
    read_csv,
    read_results,
    write_csv,
    write_results,
)
from obsbias.pipeline import analyze
from obsbias.plotting import PlotTheme, love_plot, observed_bias_plot
from obsbias.synth import SynthSpec, generate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_FAILURE = 3
THREADS_ENV = "OBSBIAS_THREADS"


def _emit(result: Dict[str, Any], pretty: bool) -> None:
    if not pretty:
        print(dumps_json(result))
        return
    width = max(len(key) for key in result)
    for key in sorted(result):
        value = result[key]
        text = f"{value:.6g}" if isinstance(value, float) else str(value)
        print(f"{key:<{width}}  {text}")


def _print_table(rows: List[List[str]]) -> None:
    widths = [max(len(row[j]) for row in rows) for j in range(len(rows[0]))]
    for row in rows:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())


def _resolve_workers(value: Optional[int]) -> int:
    if value is None:
        env = os.environ.get(THREADS_ENV)
        if env is None or not env.strip():
            return 1
        try:
            value = int(env)
        except ValueError:
            raise DomainError(
                f"{THREADS_ENV} must be a positive integer, got {env!r}"
            ) from None
    if value < 1:
        raise DomainError(f"workers must be at least 1, got {value}")
    return value


def _write_text(path: str, text: str) -> None:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(text, encoding="utf-8", newline="\n")
    logger.info("Wrote %s", target)


def cmd_evalue(args: argparse.Namespace) -> int:
    effect = EffectEstimate(
        args.estimate,
        args.lcl,
        args.ucl,
        Scale.parse(args.scale),
        outcome_common=args.common_outcome,
    )
    values = evalue(effect)
    _emit({"evalue_point": values.point, "evalue_ci": values.ci}, args.pretty)
    return EXIT_OK


def cmd_oce(args: argparse.Namespace) -> int:
    oce = observed_covariate_evalue(
        args.lb,
        args.ub,
        args.lb_adj,
        args.ub_adj,
        Scale.parse(args.scale),
        args.common_outcome,
    )
    _emit({"oce": oce}, args.pretty)
    return EXIT_OK


def cmd_tip(args: argparse.Namespace) -> int:
    lb = orient(args.lb)
    if args.rr_eu is not None:
        rr_ud = tip_rr_ud(lb, args.rr_eu)
        result = {
            "lb": lb,
            "rr_eu": args.rr_eu,
            "rr_ud": rr_ud,
            "adjusted_bound": bias_adjusted_bound(lb, args.rr_eu, rr_ud),
        }
    elif None not in (args.p0, args.p1, args.rr_ud):
        params = TipParameters.from_prevalences(args.p0, args.p1, args.rr_ud)
        result = {
            "lb": lb,
            "p0": args.p0,
            "p1": args.p1,
            "rr_ud": args.rr_ud,
            "adjusted_bound": lin_adjust(lb, params),
        }
    else:
        raise DomainError("tip needs --rr-eu, or all of --p0, --p1 and --rr-ud")
    _emit(result, args.pretty)
    return EXIT_OK


def _render_figures(artifact: RunArtifact, args: argparse.Namespace) -> None:
    theme = PlotTheme.from_mapping(artifact.config.theme)
    if args.plot:
        _write_text(
            args.plot,
            observed_bias_plot(
                artifact.records,
                artifact.full,
                theme,
                log_axis=args.log_axis,
                labels=artifact.config.labels,
            ),
        )
    if args.love:
        if artifact.balance:
            _write_text(args.love, love_plot(artifact.balance, theme))
        else:
            logger.warning("No covariates, so no Love plot was written")


def cmd_analyze(args: argparse.Namespace) -> int:
    workers = _resolve_workers(args.workers)
    config = read_config(args.config)
    PlotTheme.from_mapping(config.theme)
    dataset = read_csv(args.data, preset=args.preset)

    started = time.perf_counter()
    result = analyze(dataset, config, workers=workers)
    artifact = RunArtifact.from_result(
        result,
        dataset,
        input_name=Path(args.data).name,
        wall_time=time.perf_counter() - started,
    )
    csv_path = write_results(artifact, args.out, include_timing=args.timing)
    _render_figures(artifact, args)

    if args.pretty:
        rows = [["label", "kind", "estimate", "lcl", "ucl", "oce"]]
        for record in [artifact.full] + artifact.records:
            numbers = [record.estimate, record.lcl, record.ucl, record.oce]
            rows.append(
                [record.label, record.kind]
                + ["" if v is None else f"{v:.2f}" for v in numbers]
            )
        _print_table(rows)
        print()
        coefficient_rows = [["term", "hr", "lcl", "ucl"]]
        for row in artifact.coefficients:
            coefficient_rows.append(
                [row.term] + [f"{v:.2f}" for v in (row.hr, row.lcl, row.ucl)]
            )
        _print_table(coefficient_rows)
    else:
        _emit(
            {
                "results": str(args.out),
                "records": str(csv_path),
                "full": artifact.full.as_dict(),
                "coefficients": [row.as_dict() for row in artifact.coefficients],
                "failed": sum(1 for r in artifact.records if not r.ok),
            },
            False,
        )
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    spec = SynthSpec.from_file(args.spec)
    dataset = generate(spec)
    write_csv(dataset, args.out)
    result = {"out": str(args.out), "rows": dataset.n_rows}
    if args.config_out:
        _write_text(args.config_out, dumps_json(spec.analysis_config().to_dict()) + "\n")
        result["config"] = str(args.config_out)
    _emit(result, args.pretty)
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    artifact = read_results(args.results)
    if not args.plot and not args.love:
        raise DomainError("plot needs --plot and/or --love")
    _render_figures(artifact, args)
    _emit({"plot": args.plot, "love": args.love}, args.pretty)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="obsbias",
        description="E-values, Observed Covariate E-values and observed bias plots",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="Log progress to stderr (-vv for debug output)",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    def add_command(name: str, handler, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument("--pretty", action="store_true", help="Human-readable output")
        sub.set_defaults(handler=handler)
        return sub

    def add_scale(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--scale", default="rr", help="rr, or or hr (default: rr)")
        sub.add_argument(
            "--common-outcome",
            action="store_true",
            help="Apply the common-outcome transform for OR and HR",
        )

    sub = add_command("evalue", cmd_evalue, "E-values of an effect estimate")
    sub.add_argument("--estimate", type=float, required=True)
    sub.add_argument("--lcl", type=float, required=True)
    sub.add_argument("--ucl", type=float, required=True)
    add_scale(sub)

    sub = add_command("oce", cmd_oce, "Observed Covariate E-value")
    for flag in ("--lb", "--ub", "--lb-adj", "--ub-adj"):
        sub.add_argument(flag, type=float, required=True)
    add_scale(sub)

    sub = add_command("tip", cmd_tip, "Tipping-point confounder strength")
    sub.add_argument("--lb", type=float, required=True, help="Observed limiting bound")
    sub.add_argument("--rr-eu", type=float, help="Exposure-confounder risk ratio")
    sub.add_argument("--p0", type=float, help="Confounder prevalence, unexposed")
    sub.add_argument("--p1", type=float, help="Confounder prevalence, exposed")
    sub.add_argument("--rr-ud", type=float, help="Confounder-outcome risk ratio")

    sub = add_command("analyze", cmd_analyze, "Run the observed-bias analysis")
    sub.add_argument("--data", required=True, help="Input CSV")
    sub.add_argument("--config", required=True, help="Analysis configuration JSON")
    sub.add_argument("--out", required=True, help="Results JSON path")
    sub.add_argument("--plot", help="Observed bias plot SVG path")
    sub.add_argument("--love", help="Love plot SVG path")
    sub.add_argument(
        "--workers", type=int, help=f"Concurrent refits (default: ${THREADS_ENV} or 1)"
    )
    sub.add_argument("--preset", choices=sorted(PRESETS), help="Named input recoding")
    sub.add_argument("--log-axis", action="store_true", help="Log ratio axis in panel A")
    sub.add_argument(
        "--timing", action="store_true", help="Record wall time in the results JSON"
    )

    sub = add_command("synth", cmd_synth, "Generate a synthetic dataset")
    sub.add_argument("--spec", required=True, help="Synth spec JSON")
    sub.add_argument("--out", required=True, help="Output CSV")
    sub.add_argument("--config-out", help="Also write a matching analysis config")

    sub = add_command("plot", cmd_plot, "Render figures from a results JSON")
    sub.add_argument("--results", required=True, help="Results JSON from analyze")
    sub.add_argument("--plot", help="Observed bias plot SVG path")
    sub.add_argument("--love", help="Love plot SVG path")
    sub.add_argument("--log-axis", action="store_true", help="Log ratio axis in panel A")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )

    try:
        return args.handler(args)
    except np.linalg.LinAlgError as exc:
        # subclass of ValueError, raised by singular systems inside a fit
        message = str(exc)
        code = EXIT_FAILURE
    except (ValueError, FileNotFoundError) as exc:
        message = str(exc)
        code = EXIT_INVALID
    except (FitError, OSError) as exc:
        message = str(exc)
        code = EXIT_FAILURE
    logger.debug("Command %s failed", args.command, exc_info=True)
    print(f"obsbias {args.command}: error: {message}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
