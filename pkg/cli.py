#!/usr/bin/env python3
"""
AV-node trends CLI
Refractory period and conduction delay estimation from RR series and AFR trends
"""
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

import click
from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TaskProgressColumn, TextColumn
from rich.table import Table

from src.errors import ConfigError, DataError
from src.exporters.record_exporter import RecordExporter
from src.pipeline.stages import (
    patient_status,
    recovery_report,
    reports_dir,
    run_estimate,
    run_ingest,
    run_reduce,
    run_trends,
)
from src.synth.generator import cmd_synth, load_synthetic_spec
from src.utils.config_loader import load_pipeline_config

console = Console()

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

DEFAULT_CONFIG = "config.yaml"


def setup_logging(level: str = "INFO", log_file: Optional[str] = None, fmt: Optional[str] = None):
    """Setup logging configuration"""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file:
        handlers.insert(0, logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format=fmt or "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=handlers,
        force=True,
    )


def _progress() -> Progress:
    return Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TaskProgressColumn(),
        console=console,
    )


class _SegmentProgress:
    """Segment callback that keeps one progress bar per patient"""

    def __init__(self, progress: Progress, verb: str):
        self.progress = progress
        self.verb = verb
        self.tasks: Dict[str, int] = {}

    def __call__(self, patient_id: str, done: int, total: int) -> None:
        if patient_id not in self.tasks:
            self.tasks[patient_id] = self.progress.add_task(f"[cyan]{self.verb} {patient_id}", total=total)
        self.progress.update(self.tasks[patient_id], completed=done)


@click.group()
@click.option("--config", "-c", default=None, help=f"Path to config file (default: {DEFAULT_CONFIG} if present)")
@click.option("--log-level", default=None, help="Logging level (overrides config)")
@click.pass_context
def cli(ctx, config, log_level):
    """AV-node trends - RP and CD estimation with uncertainty from 24-h Holter data"""
    if config is None and Path(DEFAULT_CONFIG).exists():
        config = DEFAULT_CONFIG
    cfg = load_pipeline_config(config)
    setup_logging(log_level or cfg.logging.level, cfg.logging.file, cfg.logging.format)
    if config is None:
        logging.getLogger(__name__).info("No config file, using defaults")
    ctx.obj = cfg


@cli.command()
@click.option("--spec", "-s", "spec_path", required=True, type=click.Path(), help="Synthetic cohort YAML")
@click.option("--output", "-o", required=True, type=click.Path(), help="Output directory (rr/, afr/, truth/)")
@click.option("--seed", type=int, default=None, help="Root seed (default: config seed)")
@click.pass_context
def synth(ctx, spec_path, output, seed):
    """Generate a synthetic cohort with ground-truth manifests"""
    config = ctx.obj
    spec = load_synthetic_spec(spec_path)
    seed = config.seed if seed is None else seed

    console.print(f"\n[cyan]Synthesizing {len(spec.patients)} patients[/cyan] (seed {seed})\n")
    with console.status("[bold green]Simulating recordings..."):
        written = cmd_synth(spec, seed, output)

    table = Table(title="Synthetic cohort")
    table.add_column("Patient", style="cyan")
    table.add_column("RR file", style="green")
    table.add_column("Truth", style="green")
    for patient, paths in zip(spec.patients, written):
        table.add_row(patient.patient_id, str(paths["rr"]), str(paths["truth"]))
    console.print(table)


@cli.command()
@click.option("--force", is_flag=True, help="Re-ingest patients that are already ingested")
@click.pass_context
def ingest(ctx, force):
    """Parse RR and AFR files, segment and annotate"""
    config = ctx.obj
    with console.status("[bold green]Ingesting recordings..."):
        results = run_ingest(config, force=force)

    table = Table(title="Ingest")
    table.add_column("Patient", style="cyan")
    table.add_column("Segments", style="green")
    table.add_column("Hours", style="green")
    table.add_column("Status")
    for result in results:
        status = "[green]accepted[/green]" if result.accepted else "[yellow]rejected[/yellow]"
        table.add_row(result.patient_id, str(len(result.segments)), f"{result.meta['covered_hours']:.1f}", status)
    console.print(table)


@cli.command()
@click.pass_context
def estimate(ctx):
    """Run GA, ABC and reduction over every accepted patient (resumable)"""
    config = ctx.obj
    console.print(f"\n[cyan]Estimating[/cyan] (seed {config.seed}, config {config.hash()[:12]})\n")
    with _progress() as progress:
        counts = run_estimate(config, _SegmentProgress(progress, "Estimating"))

    table = Table(title="Summary")
    table.add_column("Patient", style="cyan")
    table.add_column("Estimated", style="green")
    table.add_column("Unestimated", style="yellow")
    table.add_column("Resumed", style="dim")
    for pid, c in counts.items():
        table.add_row(pid, str(c["estimated"]), str(c["unestimated"]), str(c["skipped"]))
    console.print(table)


@cli.command()
@click.pass_context
def reduce(ctx):
    """Reduce posterior records that have no property record yet"""
    config = ctx.obj
    with _progress() as progress:
        reduced = run_reduce(config, _SegmentProgress(progress, "Reducing"))
    for pid, count in reduced.items():
        console.print(f"  • {pid}: {count} segments reduced")
    console.print(f"[green]✓ Reduced {sum(reduced.values())} segments[/green]")


@cli.command()
@click.pass_context
def trends(ctx):
    """Write per-patient metrics, cohort table and outcome correlations"""
    config = ctx.obj
    with console.status("[bold green]Computing trend statistics..."):
        result = run_trends(config)

    out = reports_dir(config)
    console.print(f"[green]✓ {len(result.metrics)} patients: {out / 'metrics.csv'}[/green]")
    console.print(f"[green]✓ Cohort table: {out / 'cohort.csv'}[/green]")
    if result.correlation is None:
        console.print("[yellow]No outcomes available, correlation report skipped[/yellow]")
    else:
        console.print(f"[green]✓ Correlations: {out / 'correlation.csv'}[/green]")

    table = Table(title="Cohort (24 h)")
    table.add_column("Quantity", style="cyan")
    table.add_column("Property", style="cyan")
    table.add_column("Mean ± std", style="green")
    rows = result.cohort[result.cohort["window"] == "24h"]
    for _, row in rows.iterrows():
        table.add_row(row["quantity"], row["property"], f"{row['mean']:.3g} ± {row['std']:.2g}")
    console.print(table)


@cli.command()
@click.option("--truth", type=click.Path(), default=None, help="Ground-truth manifests from synth; writes a recovery report")
@click.pass_context
def report(ctx, truth):
    """Show per-patient progress (and synthetic recovery)"""
    config = ctx.obj
    status = patient_status(config)
    if status.empty:
        raise DataError("No ingested patients", path=str(config.output_dir))

    table = Table(title="Patients")
    for column in status.columns:
        table.add_column(column, style="cyan" if column == "patient_id" else "green")
    for _, row in status.iterrows():
        table.add_row(*[f"{v:.1f}" if isinstance(v, float) else str(v) for v in row])
    console.print(table)

    if truth:
        with console.status("[bold green]Scoring recovery..."):
            recovery = recovery_report(config, truth)
        output = reports_dir(config) / "recovery.csv"
        RecordExporter.write_csv(recovery, output)
        if recovery.empty:
            console.print("[yellow]No segments with ground truth[/yellow]")
            return
        summary = recovery.groupby("property").agg(in_band=("in_band", "mean"), rel_error=("rel_error", "median"))
        rec_table = Table(title="Recovery")
        rec_table.add_column("Property", style="cyan")
        rec_table.add_column("In band", style="green")
        rec_table.add_column("Median rel. error", style="green")
        for name, row in summary.iterrows():
            rec_table.add_row(name, f"{row['in_band']:.0%}", f"{row['rel_error']:.1%}")
        console.print(rec_table)
        console.print(f"[green]Saved to {output}[/green]")


def run(args: Optional[List[str]] = None) -> int:
    """Invoke the CLI and map errors to exit codes"""
    try:
        result = cli.main(args=args, prog_name="avnode", standalone_mode=False)
        return result if isinstance(result, int) else EXIT_OK
    except click.exceptions.Abort:
        console.print("[red]Aborted[/red]")
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except ConfigError as e:
        console.print(f"[red]Configuration error: {e}[/red]")
        return EXIT_USAGE
    except DataError as e:
        console.print(f"[red]Data error: {e}[/red]")
        return EXIT_DATA
    except Exception as e:
        logging.getLogger(__name__).exception("Internal error")
        console.print(f"[red]Error: {e}[/red]")
        return EXIT_INTERNAL


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
