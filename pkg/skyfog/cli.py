"""Command-line interface for Skyfog."""

import json
import logging
import sys
import time
from typing import List, Optional

import numpy as np
import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from skyfog.config import PRESETS, apply_overrides, create_default_config, expand_sweep, load_config, mission_preset
from skyfog.exceptions import InvalidConfigurationError, SkyfogError
from skyfog.harness import print_replications, print_summary, run_replications, run_scenario
from skyfog.models import OffloadConfig, ScenarioConfig, SolverKind
from skyfog.solvers import create_solver, exact_oracle, load_instance, objective, random_instance
from skyfog.solvers.instance import schedule_summary

app = typer.Typer(
    name="skyfog",
    help="Vehicular fog computing simulator with UAVs, offloading solvers, and a proof-of-stake ledger",
    add_completion=False,
)
console = Console()
err_console = Console(stderr=True)


def setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )


def _fail(error: SkyfogError) -> None:
    """Machine-readable error on stderr, exit code 1."""
    typer.echo(json.dumps(error.details(), default=str), err=True)
    raise typer.Exit(code=1)


def parse_seeds(text: str) -> List[int]:
    """`a..b` (inclusive) or a comma-separated list."""
    try:
        if ".." in text:
            low, high = (int(part) for part in text.split("..", 1))
            if high < low:
                raise ValueError(text)
            return list(range(low, high + 1))
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise InvalidConfigurationError("--seeds", f"expected a..b or a,b,c, got {text!r}") from e


def _scenario(config: Optional[str], preset: Optional[str]) -> ScenarioConfig:
    if preset:
        return mission_preset(preset)
    return load_config(config)


@app.command()
def run(
    config: Optional[str] = typer.Option(None, "--config", "-c", help="Path to scenario file"),
    preset: Optional[str] = typer.Option(None, "--preset", "-p", help="Mission preset instead of a file"),
    seed: Optional[int] = typer.Option(None, "--seed", "-s", help="Master seed"),
    horizon: Optional[float] = typer.Option(None, "--horizon", help="Simulated seconds"),
    solver: Optional[SolverKind] = typer.Option(None, "--solver", help="Offloading solver"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Output directory"),
    dump_links: Optional[bool] = typer.Option(None, "--dump-links", help="Write the per-TTI link table"),
    plots: Optional[bool] = typer.Option(None, "--plots", help="Write SVG plots"),
    verbose: bool = typer.Option(True, "--verbose/--quiet", help="Log progress"),
) -> None:
    """Run a scenario (or every point of its sweep) to the horizon.

    Examples:
        # Default scenario
        skyfog run

        # A mission preset with the greedy solver
        skyfog run --preset offloading --solver greedy --plots
    """
    setup_logging(verbose)
    try:
        scenario = apply_overrides(
            _scenario(config, preset),
            seed=seed,
            horizon=horizon,
            solver=solver,
            output_dir=out,
            dump_links=dump_links,
            plots=plots,
        )
        for point in expand_sweep(scenario):
            metrics = run_scenario(point, console=err_console, show_progress=verbose)
            if verbose:
                print_summary(metrics.summary, console)
            console.print(f"[green]Wrote {point.simulation.output_dir}[/green]")
    except SkyfogError as e:
        _fail(e)


@app.command()
def replicate(
    seeds: str = typer.Option("0..9", "--seeds", help="Seeds as a..b or a,b,c"),
    config: Optional[str] = typer.Option(None, "--config", "-c", help="Path to scenario file"),
    preset: Optional[str] = typer.Option(None, "--preset", "-p", help="Mission preset instead of a file"),
    solver: Optional[SolverKind] = typer.Option(None, "--solver", help="Offloading solver"),
    horizon: Optional[float] = typer.Option(None, "--horizon", help="Simulated seconds"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Output directory"),
    workers: Optional[int] = typer.Option(None, "--workers", "-w", help="Worker processes"),
    verbose: bool = typer.Option(True, "--verbose/--quiet", help="Log progress"),
) -> None:
    """Run a scenario (or every point of its sweep) over several seeds and report mean and spread."""
    setup_logging(verbose)
    try:
        scenario = apply_overrides(_scenario(config, preset), solver=solver, horizon=horizon, output_dir=out)
        seed_list = parse_seeds(seeds)
        for point in expand_sweep(scenario):
            result = run_replications(point, seed_list, workers=workers)
            if scenario.sweep is not None:
                console.print(f"[bold]{point.name}[/bold]")
            print_replications(result, console)
    except SkyfogError as e:
        _fail(e)


@app.command()
def solve(
    instance: Optional[str] = typer.Option(None, "--instance", "-i", help="Offloading instance YAML"),
    solver: SolverKind = typer.Option(SolverKind.WHO, "--solver", help="Solver for --instance"),
    random_count: int = typer.Option(0, "--random", "-r", help="Benchmark all solvers on N random small instances"),
    seed: int = typer.Option(0, "--seed", "-s", help="Seed for --random"),
) -> None:
    """Solve one offloading instance offline, or compare solvers on random ones."""
    setup_logging(False)
    try:
        if instance:
            _solve_instance(instance, solver)
        elif random_count > 0:
            _benchmark(random_count, seed)
        else:
            raise InvalidConfigurationError("solve", "give --instance FILE or --random N")
    except SkyfogError as e:
        _fail(e)


def _solve_instance(path: str, kind: SolverKind) -> None:
    problem = load_instance(path)
    solver = create_solver(kind, OffloadConfig())
    schedule = solver.plan(problem)
    value = objective(schedule, problem)

    table = Table(title=f"{kind.value} on {path}")
    table.add_column("Task", style="cyan")
    table.add_column("Node", style="magenta")
    for task_id, node in schedule_summary(schedule, problem).items():
        table.add_row(task_id, node or "unassigned")
    console.print(table)
    console.print(f"Objective: {value:.6g}")
    console.print(f"Iterations: {schedule.iterations}")
    console.print(f"Wall time: {solver.last_wall_time:.4f} s")


def _benchmark(count: int, seed: int) -> None:
    rng = np.random.default_rng(seed)
    config = OffloadConfig()
    who, greedy = create_solver(SolverKind.WHO, config), create_solver(SolverKind.GREEDY, config)
    oracle_le_who = who_le_greedy = 0
    walls = {"oracle": 0.0, "who": 0.0, "greedy": 0.0}
    for _ in range(count):
        problem = random_instance(rng)
        started = time.perf_counter()
        best, _ = exact_oracle(problem)
        walls["oracle"] += time.perf_counter() - started
        who_value = objective(who.plan(problem), problem)
        walls["who"] += who.last_wall_time
        greedy_value = objective(greedy.plan(problem), problem)
        walls["greedy"] += greedy.last_wall_time
        oracle_le_who += best <= who_value + 1e-6
        who_le_greedy += who_value <= greedy_value + 1e-6

    table = Table(title=f"Solver ordering over {count} random instances (seed {seed})")
    table.add_column("Check", style="cyan")
    table.add_column("Holds", style="magenta")
    table.add_row("oracle <= WHO", f"{oracle_le_who}/{count}")
    table.add_row("WHO <= greedy", f"{who_le_greedy}/{count}")
    for name, wall in walls.items():
        table.add_row(f"{name} mean wall time (s)", f"{wall / count:.4f}")
    console.print(table)


@app.command()
def init(config_path: str = typer.Argument("skyfog.yaml", help="Where to write the scenario")) -> None:
    """Create a commented default scenario file."""
    try:
        if create_default_config(config_path):
            console.print(f"[green]Created configuration file: {config_path}[/green]")
            console.print("\n[yellow]Next steps:[/yellow]")
            console.print("1. Edit the scenario (fleet sizes, solver, attacks)")
            console.print(f"2. skyfog run --config {config_path}")
        else:
            console.print(f"[yellow]{config_path} already exists; left unchanged[/yellow]")
    except OSError as e:
        console.print(f"[red]System error creating configuration file: {e}[/red]")
        sys.exit(1)


@app.command()
def presets() -> None:
    """List mission presets."""
    table = Table(title="Presets")
    table.add_column("Name", style="cyan")
    table.add_column("Description", style="magenta")
    table.add_column("Sweep", style="green")
    for name in PRESETS:
        preset = mission_preset(name)
        sweep = f"{preset.sweep.parameter} = {preset.sweep.values}" if preset.sweep else "-"
        table.add_row(name, preset.description, sweep)
    console.print(table)


@app.command()
def version() -> None:
    """Show version information."""
    from skyfog import __version__

    version_text = Text(f"Skyfog v{__version__}", style="bold blue")
    console.print(Panel(version_text, title="Version", border_style="blue"))


def main_wrapper() -> None:
    """Wrapper for the app: interrupts and unexpected errors exit 1, errors as JSON."""
    try:
        app()
    except (KeyboardInterrupt, EOFError):
        err_console.print("\n[yellow]Operation cancelled by user[/yellow]")
        sys.exit(1)
    except Exception as e:
        typer.echo(json.dumps({"error": type(e).__name__, "message": str(e)}), err=True)
        sys.exit(1)


if __name__ == "__main__":
    main_wrapper()
