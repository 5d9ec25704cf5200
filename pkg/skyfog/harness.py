"""Scenario runs, replications, and the files and tables they produce."""

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd
from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn
from rich.table import Table

from skyfog.config import validate_config
from skyfog.core import World
from skyfog.exceptions import ReplicationError
from skyfog.ledger import export_chain, reputation_frame
from skyfog.models import AggregateStats, MetricsRow, ReplicationResult, RunMetrics, RunSummary, ScenarioConfig
from skyfog.plotting import render_plots

logger = logging.getLogger(__name__)

AGGREGATED_METRICS = [
    "generated",
    "completed",
    "failed",
    "success_ratio",
    "mean_latency",
    "tx_certified",
    "tx_per_second",
    "completions_per_second",
    "blocks",
    "attacks_detected",
    "payments_withheld",
    "energy_tx",
    "energy_comp",
    "energy_fly",
]

LINK_COLUMNS = ["tti", "tx", "rx", "mode", "pl_db", "s_db", "h", "rb_list", "sinr_db", "capacity_bps"]
SOLVER_COLUMNS = ["tti", "solver", "tasks", "nodes", "assigned", "iterations", "objective", "wall_time", "fell_back"]


def summary_json(summary: RunSummary) -> str:
    """Stable JSON for a summary: sorted keys, nulls kept."""
    return json.dumps(summary.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def write_outputs(world: World, out_dir: Path) -> List[Path]:
    """Write everything except the events stream, which is written as the run goes."""
    written = []
    metrics_path = out_dir / "metrics.csv"
    columns = list(MetricsRow.model_fields)
    pd.DataFrame([row.model_dump() for row in world.series], columns=columns).to_csv(metrics_path, index=False)
    written.append(metrics_path)

    summary_path = out_dir / "summary.json"
    summary_path.write_text(summary_json(world.summary()), encoding="utf-8")
    written.append(summary_path)

    chain_path = out_dir / "chain.jsonl"
    export_chain(world.chain, chain_path)
    written.append(chain_path)

    reputation_path = out_dir / "reputation.csv"
    names = {node.id: node.name for node in world.nodes}
    reputation_frame(world.reputation, names).to_csv(reputation_path, index=False)
    written.append(reputation_path)

    solver_path = out_dir / "solver_stats.csv"
    pd.DataFrame(world.solver_log, columns=SOLVER_COLUMNS).to_csv(solver_path, index=False)
    written.append(solver_path)

    if world.config.output.dump_links:
        links_path = out_dir / "links.csv"
        pd.DataFrame(world.link_rows, columns=LINK_COLUMNS).to_csv(links_path, index=False)
        written.append(links_path)

    if world.config.output.plots:
        written.extend(render_plots(metrics_path, out_dir))
    return written


def run_scenario(
    config: ScenarioConfig,
    console: Optional[Console] = None,
    show_progress: bool = False,
) -> RunMetrics:
    """Run a scenario to its horizon and write its output files.

    Args:
        config: Scenario to run; validated before the first TTI.
        console: Console for the progress bar.
        show_progress: Draw a rich progress bar while running.

    Returns:
        The per-TTI series and the final summary.

    Raises:
        ConfigurationError: The scenario is invalid.
    """
    validate_config(config)
    world = World(config)
    out_dir = Path(config.simulation.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    logger.info("Running %s (seed %d, solver %s) into %s", config.name, config.simulation.seed, config.offload.solver.value, out_dir)

    total = world.clock.total_ttis
    with (out_dir / "events.jsonl").open("w", encoding="utf-8") as events:
        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(),
            TextColumn("{task.completed}/{task.total} TTIs"),
            console=console or Console(),
            disable=not show_progress,
            transient=True,
        ) as progress:
            bar = progress.add_task(f"Simulating {config.name}...", total=total)
            while not world.clock.finished:
                for event in world.advance_tti():
                    events.write(event.model_dump_json() + "\n")
                progress.advance(bar)

    write_outputs(world, out_dir)
    summary = world.summary()
    logger.info(
        "%s: %d generated, %d completed, success ratio %.3f",
        config.name,
        summary.generated,
        summary.completed,
        summary.success_ratio,
    )
    return RunMetrics(series=world.series, summary=summary)


def _seeded(config: ScenarioConfig, seed: int, index: int) -> ScenarioConfig:
    data = config.model_dump(mode="json")
    data["simulation"]["seed"] = seed
    data["simulation"]["output_dir"] = str(Path(config.simulation.output_dir) / f"run-{index:03d}-seed-{seed}")
    return ScenarioConfig(**data)


def _run_one(payload: Tuple[Dict[str, Any], int, int]) -> Tuple[int, Optional[Dict[str, Any]], Optional[str]]:
    """Worker entry: exceptions come back as text so they survive pickling."""
    data, seed, index = payload
    try:
        metrics = run_scenario(_seeded(ScenarioConfig(**data), seed, index))
    except Exception as e:  # noqa: BLE001
        return seed, None, f"{type(e).__name__}: {e}"
    return seed, metrics.summary.model_dump(mode="json"), None


def aggregate(summaries: Sequence[RunSummary]) -> Dict[str, AggregateStats]:
    """Mean and population standard deviation of each summary metric."""
    frame = pd.DataFrame([summary.model_dump() for summary in summaries])
    stats = {}
    for metric in AGGREGATED_METRICS:
        values = pd.to_numeric(frame[metric], errors="coerce").dropna()
        if values.empty:
            stats[metric] = AggregateStats(mean=None, std=None)
        else:
            stats[metric] = AggregateStats(mean=float(values.mean()), std=float(values.std(ddof=0)))
    return stats


def run_replications(
    config: ScenarioConfig,
    seeds: Sequence[int],
    workers: Optional[int] = None,
) -> ReplicationResult:
    """Independent runs over several seeds, aggregated.

    Each run writes into its own `run-NNN-seed-S` directory under the scenario's
    output directory; `replications.csv` and `aggregate.json` land beside them.

    Args:
        config: Scenario shared by every run.
        seeds: Master seeds; duplicates are run again.
        workers: Worker processes. 1 runs in this process.

    Raises:
        ReplicationError: The first failing run, with its seed.
    """
    if not seeds:
        raise ReplicationError(-1, "at least one seed is required")
    validate_config(config)
    payloads = [(config.model_dump(mode="json"), int(seed), i) for i, seed in enumerate(seeds)]
    if workers == 1 or len(payloads) == 1:
        outcomes = [_run_one(payload) for payload in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_one, payloads))

    summaries = []
    for seed, summary, error in outcomes:
        if error is not None:
            raise ReplicationError(seed, error)
        summaries.append(RunSummary(**summary))

    result = ReplicationResult(seeds=[int(seed) for seed in seeds], metrics=aggregate(summaries), summaries=summaries)
    out_dir = Path(config.simulation.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pd.DataFrame([summary.model_dump(exclude={"solver_stats", "failures_by_reason"}) for summary in summaries]).to_csv(
        out_dir / "replications.csv",
        index=False,
    )
    (out_dir / "aggregate.json").write_text(
        json.dumps({name: stats.model_dump() for name, stats in result.metrics.items()}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    return result


def _fmt(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(value)


def print_summary(summary: RunSummary, console: Optional[Console] = None) -> None:
    """Print a run summary as a table."""
    console = console or Console()
    table = Table(title=f"Results for {summary.scenario} (seed {summary.seed}, {summary.solver.value})")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", style="magenta")

    table.add_row("Tasks generated", str(summary.generated))
    table.add_row("Tasks completed", str(summary.completed))
    table.add_row("Tasks failed", str(summary.failed))
    table.add_row("In flight", str(summary.in_flight))
    table.add_row("Success ratio", f"{summary.success_ratio:.2%}" + (" (no tasks)" if summary.no_tasks else ""))
    table.add_row("Mean latency (s)", _fmt(summary.mean_latency))
    for reason, count in sorted(summary.failures_by_reason.items()):
        table.add_row(f"  failed: {reason}", str(count))
    table.add_row("Certified tx/s", _fmt(summary.tx_per_second))
    table.add_row("Completions/s", _fmt(summary.completions_per_second))
    table.add_row("Blocks", str(summary.blocks))
    table.add_row("Largest block", str(summary.max_block_size))
    table.add_row("Attacks detected", str(summary.attacks_detected))
    table.add_row("Payments withheld", str(summary.payments_withheld))
    table.add_row("Energy tx/comp/fly (J)", f"{summary.energy_tx:.4g} / {summary.energy_comp:.4g} / {summary.energy_fly:.4g}")
    table.add_row("Planning windows", str(summary.solver_stats.windows))
    table.add_row("Mean AO iterations", _fmt(summary.solver_stats.mean_iterations))
    if summary.solver_stats.oracle_fallbacks:
        table.add_row("Oracle fallbacks", str(summary.solver_stats.oracle_fallbacks))

    console.print(table)


def print_replications(result: ReplicationResult, console: Optional[Console] = None) -> None:
    """Print mean and spread of each metric over the seeds."""
    console = console or Console()
    table = Table(title=f"Replications over {len(result.seeds)} seed(s)")
    table.add_column("Metric", style="cyan")
    table.add_column("Mean", style="magenta")
    table.add_column("Std", style="magenta")
    for name, stats in result.metrics.items():
        table.add_row(name, _fmt(stats.mean), _fmt(stats.std))

    console.print(table)
