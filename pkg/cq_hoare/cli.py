"""CLI entry-point for cq-hoare."""

from __future__ import annotations

import json
import logging
import sys
import time
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path

import click
import yaml
from pydantic import BaseModel
from rich.console import Console
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table

from cq_hoare import __version__
from cq_hoare.cases import CASES, build
from cq_hoare.config import Settings
from cq_hoare.formats import read_assertion, read_state
from cq_hoare.hoare import CheckOptions, check, check_semantic, precondition
from cq_hoare.lang import format_program, parse
from cq_hoare.lang.syntax import SourceProgram
from cq_hoare.lang.typecheck import TypecheckError, require_well_typed, typecheck
from cq_hoare.models import CaseReport, RunReport, VerdictReport, WpReport, digest
from cq_hoare.renderer import corpus_files, corpus_text, write_case
from cq_hoare.semantics import initial_state, run as run_program

console = Console()
err_console = Console(stderr=True)

EXIT_REFUTED = 1
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3


def _configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING
    logging.basicConfig(
        level=level,
        format="%(asctime)s  %(levelname)-8s  %(name)s  %(message)s",
        datefmt="%H:%M:%S",
    )
    logging.getLogger("cq_hoare").setLevel(level)


@contextmanager
def _user_errors() -> Iterator[None]:
    """Report parse, type, layout and I/O errors on stderr and exit with status 2."""
    try:
        yield
    except TypecheckError as exc:
        for d in exc.diagnostics:
            err_console.print(f"[red bold]Error:[/red bold] {escape(str(d))}")
        sys.exit(EXIT_USAGE)
    except (ValueError, OSError) as exc:
        err_console.print(f"[red bold]Error:[/red bold] {escape(str(exc))}")
        sys.exit(EXIT_USAGE)


def _settings(**overrides: object) -> Settings:
    settings = Settings(**{k: v for k, v in overrides.items() if v is not None})
    try:
        settings.validate_tolerances()
    except ValueError as exc:
        err_console.print(f"[red bold]Error:[/red bold] {escape(str(exc))}")
        sys.exit(EXIT_USAGE)
    _configure_logging(settings.verbose)
    return settings


def _load_program(path: str) -> tuple[SourceProgram, str]:
    text = Path(path).read_text(encoding="utf-8")
    program = parse(text)
    require_well_typed(program)
    return program, text


def _emit_json(report: BaseModel) -> None:
    click.echo(json.dumps(report.model_dump(mode="json"), indent=2, sort_keys=True))


def _threads_option(fn):  # noqa: ANN001, ANN201
    return click.option(
        "--threads", type=int, default=None, help="Worker threads (default: $CQ_THREADS or 1)."
    )(fn)


@click.group()
@click.version_option(version=__version__, prog_name="cq")
def main() -> None:
    """cq-hoare: classical-quantum programs: simulation, wp/wlp and Hoare checking."""


# ── run ──────────────────────────────────────────────────────────────────


@main.command("run")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--max-steps", type=int, default=None, help="Bound on small-step rounds.")
@click.option("--prune", type=float, default=None, help="Drop branches lighter than this.")
@click.option(
    "--in", "state_file", type=click.Path(exists=True, dir_okay=False), default=None,
    help="Initial cq-state (.cqs); default is all-zero with qvars in |0>.",
)
@click.option("--show", "shown", multiple=True, help="Classical variable to tabulate (repeatable).")
@click.option("--json", "as_json", is_flag=True, help="Emit the report as JSON.")
@click.option("--timing", is_flag=True, help="Include wall-clock time in the report.")
@_threads_option
@click.option("--verbose", "-v", is_flag=True, help="Debug logging on stderr.")
def run_cmd(
    file: str,
    max_steps: int | None,
    prune: float | None,
    state_file: str | None,
    shown: tuple[str, ...],
    as_json: bool,
    timing: bool,
    threads: int | None,
    verbose: bool,
) -> None:
    """Execute FILE and print the distribution of terminated classical outcomes."""
    settings = _settings(max_steps=max_steps, prune=prune, threads=threads, verbose=verbose)
    start = time.perf_counter()
    with _user_errors():
        program, text = _load_program(file)
        inputs = [text]
        if state_file:
            state_text = Path(state_file).read_text(encoding="utf-8")
            delta = read_state(Path(state_file), program)
            inputs.append(state_text)
        else:
            delta = initial_state(program)
        variables = list(shown) or [v.name for v in program.cvars]
        unknown = [v for v in variables if v not in program.types]
        if unknown:
            raise ValueError(f"unknown classical variables {', '.join(unknown)}")
        result = run_program(
            program, delta, settings.max_steps, settings.prune, threads=settings.threads
        )
    report = RunReport.from_result(program.name, digest(*inputs), result, variables)
    if timing:
        report.timing = time.perf_counter() - start

    if as_json:
        _emit_json(report)
    else:
        table = Table(title=f"Outcomes of {program.name}")
        for name in variables:
            table.add_column(name, justify="right")
        table.add_column("probability", justify="right")
        for row in report.outcomes:
            cells = [str(row.values[n]).lower() for n in variables]
            table.add_row(*cells, f"{row.probability:.6f}")
        console.print(table)
        console.print(f"terminated mass: {report.terminated_mass:.6f}")
        console.print(f"residual mass:   {report.residual_mass:.6g}")
        if report.aborted_mass:
            console.print(f"aborted mass:    {report.aborted_mass:.6g}")
        if report.step_bound_hit:
            console.print(f"[yellow]step bound hit after {report.steps} steps[/yellow]")
        if report.timing is not None:
            console.print(f"time: {report.timing:.3f}s")
    if result.step_bound_hit:
        sys.exit(EXIT_NOT_CONVERGED)


# ── wp / wlp ─────────────────────────────────────────────────────────────


def _transform_command(
    command: str,
    file: str,
    post_file: str,
    loop_tol: float | None,
    loop_max: int | None,
    as_json: bool,
    timing: bool,
    threads: int | None,
    verbose: bool,
) -> None:
    settings = _settings(loop_tol=loop_tol, loop_max=loop_max, threads=threads, verbose=verbose)
    start = time.perf_counter()
    with _user_errors():
        program, text = _load_program(file)
        post_text = Path(post_file).read_text(encoding="utf-8")
        post = read_assertion(Path(post_file), program)
        opts = CheckOptions(
            loop_tol=settings.loop_tol, loop_max=settings.loop_max, threads=settings.threads
        )
        mode = "total" if command == "wp" else "partial"
        result, _ = precondition(program, post, mode, opts)
    report = WpReport.from_result(command, program.name, digest(text, post_text), result)
    if timing:
        report.timing = time.perf_counter() - start

    if as_json:
        _emit_json(report)
    else:
        click.echo(report.assertion, nl=False)
        status = "converged" if report.converged else f"not converged ({report.approximation})"
        console.print(f"// {command}: {status}, {report.iterations} loop iterations", markup=False)
        if report.timing is not None:
            console.print(f"// time: {report.timing:.3f}s", markup=False)
    if not result.converged:
        sys.exit(EXIT_NOT_CONVERGED)


def _transform_options(fn):  # noqa: ANN001, ANN201
    fn = click.option("--verbose", "-v", is_flag=True, help="Debug logging on stderr.")(fn)
    fn = _threads_option(fn)
    fn = click.option("--timing", is_flag=True, help="Include wall-clock time.")(fn)
    fn = click.option("--json", "as_json", is_flag=True, help="Emit the report as JSON.")(fn)
    fn = click.option("--loop-max", type=int, default=None, help="Loop iteration cap.")(fn)
    fn = click.option("--loop-tol", type=float, default=None, help="Loop convergence tolerance.")(
        fn
    )
    fn = click.option(
        "--post", "post_file", required=True, type=click.Path(exists=True, dir_okay=False),
        help="Postcondition (.cqa).",
    )(fn)
    return click.argument("file", type=click.Path(exists=True, dir_okay=False))(fn)


@main.command("wp")
@_transform_options
def wp_cmd(**kwargs) -> None:  # noqa: ANN003
    """Weakest precondition of FILE for the postcondition --post."""
    _transform_command("wp", **kwargs)


@main.command("wlp")
@_transform_options
def wlp_cmd(**kwargs) -> None:  # noqa: ANN003
    """Weakest liberal precondition of FILE for the postcondition --post."""
    _transform_command("wlp", **kwargs)


# ── check ────────────────────────────────────────────────────────────────


@main.command("check")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--pre", "pre_file", required=True, type=click.Path(exists=True, dir_okay=False),
    help="Precondition (.cqa).",
)
@click.option(
    "--post", "post_file", required=True, type=click.Path(exists=True, dir_okay=False),
    help="Postcondition (.cqa).",
)
@click.option("--mode", type=click.Choice(["total", "partial"]), default="total")
@click.option(
    "--method", type=click.Choice(["wp", "semantic"]), default="wp",
    help="Compare against wp/wlp, or refute on sampled input states.",
)
@click.option("--samples", type=int, default=None, help="Sampled states for --method semantic.")
@click.option("--seed", type=int, default=None, help="Sampling seed.")
@click.option("--tol", type=float, default=None, help="Refutation threshold on the margin.")
@click.option("--loop-tol", type=float, default=None, help="Loop convergence tolerance.")
@click.option("--loop-max", type=int, default=None, help="Loop iteration cap.")
@click.option("--json", "as_json", is_flag=True, help="Emit the verdict as JSON.")
@click.option("--timing", is_flag=True, help="Include wall-clock time.")
@_threads_option
@click.option("--verbose", "-v", is_flag=True, help="Debug logging on stderr.")
def check_cmd(
    file: str,
    pre_file: str,
    post_file: str,
    mode: str,
    method: str,
    samples: int | None,
    seed: int | None,
    tol: float | None,
    loop_tol: float | None,
    loop_max: int | None,
    as_json: bool,
    timing: bool,
    threads: int | None,
    verbose: bool,
) -> None:
    """Check the correctness formula {PRE} FILE {POST}.

    Exit status is 0 when it holds, 1 when refuted and 3 when loop iteration did not converge.
    """
    settings = _settings(
        samples=samples, seed=seed, hoare_tol=tol, loop_tol=loop_tol, loop_max=loop_max,
        threads=threads, verbose=verbose,
    )
    start = time.perf_counter()
    with _user_errors():
        program, text = _load_program(file)
        pre_text = Path(pre_file).read_text(encoding="utf-8")
        post_text = Path(post_file).read_text(encoding="utf-8")
        pre = read_assertion(Path(pre_file), program)
        post = read_assertion(Path(post_file), program)
        opts = CheckOptions(
            tol=settings.hoare_tol,
            loop_tol=settings.loop_tol,
            loop_max=settings.loop_max,
            max_steps=settings.max_steps,
            samples=settings.samples,
            seed=settings.seed,
            threads=settings.threads,
        )
        if method == "wp":
            verdict = check(pre, program, post, mode, opts)
        else:
            verdict = check_semantic(pre, program, post, mode, opts)
    report = VerdictReport.from_verdict(
        program.name, digest(text, pre_text, post_text), mode, verdict
    )
    if timing:
        report.timing = time.perf_counter() - start

    if as_json:
        _emit_json(report)
    else:
        style = "bold green" if report.holds else "bold red"
        console.print(Panel(
            f"{'holds' if report.holds else 'refuted'}  ({mode} correctness, {report.method})",
            style=style,
        ))
        console.print(f"worst margin: {report.worst_margin:.6g}")
        if report.witness is not None:
            assigns = ", ".join(f"{k}={str(v).lower()}" for k, v in report.witness.items())
            console.print(f"witness: {{{escape(assigns)}}}")
        for line in report.diagnostics:
            console.print(f"  • {escape(line)}")
        if report.timing is not None:
            console.print(f"time: {report.timing:.3f}s")
    if not verdict.converged:
        sys.exit(EXIT_NOT_CONVERGED)
    if not verdict.holds:
        sys.exit(EXIT_REFUTED)


# ── examples ─────────────────────────────────────────────────────────────


def _parse_params(raw: tuple[str, ...]) -> dict[str, str]:
    params: dict[str, str] = {}
    for item in raw:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise click.BadParameter(f"expected k=v, got {item!r}", param_hint="--param")
        params[key.strip()] = value.strip()
    return params


@main.command("examples")
@click.argument("name", required=False)
@click.option("--param", "raw_params", multiple=True, help="Builder parameter k=v (repeatable).")
@click.option(
    "--write", "output_dir", type=click.Path(file_okay=False), default=None,
    help="Write program, pre/postcondition and summary files into this directory.",
)
@click.option(
    "--format", "output_format", type=click.Choice(["text", "json", "yaml"]), default="text"
)
@click.option("--verbose", "-v", is_flag=True, help="Debug logging on stderr.")
def examples_cmd(
    name: str | None,
    raw_params: tuple[str, ...],
    output_dir: str | None,
    output_format: str,
    verbose: bool,
) -> None:
    """Emit a case study (teleport, grover, qft, pe, of, shor) or a shipped corpus file.

    Without NAME, list what is available.
    """
    _settings(output_format=output_format, verbose=verbose)
    if name is None:
        click.echo("case studies: " + ", ".join(CASES))
        click.echo("corpus files: " + ", ".join(corpus_files()))
        return
    params = _parse_params(raw_params)
    with _user_errors():
        if name not in CASES:
            if params:
                raise ValueError(f"corpus file {name!r} takes no parameters")
            text = corpus_text(name)
            if output_dir:
                out = Path(output_dir)
                out.mkdir(parents=True, exist_ok=True)
                (out / name).write_text(text, encoding="utf-8")
            click.echo(text, nl=False)
            return
        case = build(name, params)
        written = write_case(case, Path(output_dir)) if output_dir else []
    report = CaseReport.from_case(case, written)

    if output_format == "json":
        _emit_json(report)
    elif output_format == "yaml":
        click.echo(yaml.safe_dump(report.model_dump(mode="json"), sort_keys=True), nl=False)
    else:
        click.echo(case.source, nl=False)
        table = Table(title=f"{case.name} reference quantities")
        table.add_column("quantity")
        table.add_column("value", justify="right")
        table.add_column("provenance")
        for row in report.references:
            table.add_row(escape(row.name), row.value, escape(row.provenance))
        console.print(table)
        for note in report.notes:
            console.print(f"[yellow]note:[/yellow] {escape(note)}")
        for path in written:
            console.print(f"  • wrote {escape(path)}")


# ── lang ─────────────────────────────────────────────────────────────────


@main.command("typecheck")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
def typecheck_cmd(file: str) -> None:
    """Report every diagnostic of FILE; exit status 2 when there are any."""
    _configure_logging(False)
    with _user_errors():
        program = parse(Path(file).read_text(encoding="utf-8"))
    report = typecheck(program)
    if not report.ok:
        for d in report.diagnostics:
            err_console.print(f"[red bold]Error:[/red bold] {escape(str(d))}")
        sys.exit(EXIT_USAGE)
    console.print(f"{program.name}: ok", markup=False)
    console.print(f"  var:    {', '.join(sorted(report.var)) or '-'}", markup=False)
    console.print(f"  change: {', '.join(sorted(report.change)) or '-'}", markup=False)
    console.print(f"  qv:     {', '.join(sorted(report.qv)) or '-'}", markup=False)


@main.command("fmt")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
def fmt_cmd(file: str) -> None:
    """Pretty-print FILE in canonical layout."""
    _configure_logging(False)
    with _user_errors():
        program = parse(Path(file).read_text(encoding="utf-8"))
    click.echo(format_program(program), nl=False)


if __name__ == "__main__":
    main()
