"""Command-line driver for leafwise conformal checks of 3D maps."""

import argparse
import sys
from pathlib import Path

from geom.errors import GeometryError
from lang.evaluator import EvaluationError
from lang.lexer import LexerError
from lang.parser import ParseError
from run.config import FORMATS, STAGES, ConfigError, load_config
from run.report import write_report
from run.stages import Pipeline, Report

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_INPUT = 2

INPUT_ERRORS = (ConfigError, LexerError, ParseError, EvaluationError, GeometryError)


def headline(report: Report) -> list[str]:
    """Короткие строки результата стадии для stdout."""
    result = report.summary.get('result', {})
    assert isinstance(result, dict)
    if report.stage == 'analyze':
        return [f"Nodes: {result['nodes']}, masked: {result['masked']}"]
    if report.stage == 'certify':
        return [f"Verdict {label}: {entry['verdict']}" for label, entry in result.items()]
    if report.stage == 'integrability':
        if 'skipped' in result:
            return [f"Skipped: {result['skipped']}"]
        lines = []
        for label, entry in result['distributions'].items():
            integrable = entry['frobenius']['integrable']
            lines.append(f"Distribution {label}: {'integrable' if integrable else 'not integrable'}")
        return lines
    if report.stage == 'isothermal':
        return [f"Isothermal: {'yes' if result['isothermal'] else 'no'}"]
    return [f"Orientation: {result['orientation']}", f"CR residual: {result['cr_residual_max']:.3e}"]


def add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="Run configuration (INI)")
    parser.add_argument("--out", default=None, help="Output directory (overrides [output] out)")
    parser.add_argument("--format", choices=FORMATS, default=None, help="Output format")
    parser.add_argument("--seed", type=int, default=None, help="Seed for sampled directions")
    parser.add_argument("--refine", type=int, default=None, help="Number of refinement levels")
    parser.add_argument("--plots", action="store_true", help="Write SVG slices")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Leafwise conformal diffeomorphism checks on sampled 3D domains",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        add_common(sub.add_parser(stage, help=f"Run the {stage} stage"))
    add_common(sub.add_parser("pipeline", help="Run the stages listed in [run] stages"))
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sys.stdout.write(f"Reading config: {args.config}\n")
        config = load_config(args.config).with_overrides(
            out=args.out, format=args.format, seed=args.seed, refine=args.refine,
        )
        if config.refine < 0:
            raise ConfigError("must not be negative", 'run', 'refine')
        stages = config.stages if args.command == "pipeline" else (args.command,)
        pipeline = Pipeline(config)
        reports = []
        for stage in stages:
            sys.stdout.write(f"Stage {stage}...\n")
            report = pipeline.run(stage)
            for line in headline(report):
                sys.stdout.write(f"{line}\n")
            for path in write_report(report, config.out, config.format):
                sys.stdout.write(f"Saved: {path.name}\n")
            if args.plots:
                from run.plots import emit_plots
                # Рисунки не влияют на код возврата
                try:
                    written = emit_plots(report, Path(config.out) / "plots")
                    sys.stdout.write(f"Plots: {len(written)}\n")
                except (OSError, ValueError) as exc:
                    sys.stderr.write(f"Warning: plots skipped: {exc}\n")
            reports.append(report)
    except INPUT_ERRORS as exc:
        sys.stderr.write(f"Error: {exc}\n")
        return EXIT_INPUT

    mismatches = [line for report in reports for line in report.mismatches]
    for line in mismatches:
        sys.stderr.write(f"Mismatch: {line}\n")
    if mismatches:
        return EXIT_MISMATCH
    sys.stdout.write("Expectations met\n")
    return EXIT_OK


def main() -> None:
    """Главная функция."""
    sys.exit(run())


if __name__ == "__main__":
    main()
