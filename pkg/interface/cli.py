import typer
from typing import Dict, List, Optional
from rich.console import Console
from rich.table import Table
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn, BarColumn
from rich import print as rprint
from rich.markup import escape
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from dotenv import load_dotenv
import numpy as np
import logging
import math
import os
import sys

# Add parent directory to path for imports
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.separable_potential import (TwoSolitonParams, DiscreteData, check_commensurate,
                                        potential_function, period_of)
from models.spectral_basis import SpatialGrid, WaveField, BasisContext, local_decay_probe
from models.perturbation_coupling import (PerturbationSpec, DecayPrediction, zero_resonance_guard,
                                          build_coupling, predict_decay, oracle_gate,
                                          convergence_gate, gamma_time_average, first_resonant_index)
from models.pde_solver import SimulationConfig, SpongeParams, run
from models.comparison import compare_runs
from utils.scenario import Scenario, load_scenario, apply_overrides
from utils.persistence import (artifact_name, ensure_dir, write_time_series, read_time_series,
                               write_potential_table, write_table, write_json, read_json)
from utils.fitting import fit_power_law
from utils.errors import BreatherLabError, ScenarioError
from visualizations.potential_plot import plot_potential_heatmap
from visualizations.decay_plot import plot_decay_overlay, plot_phase, plot_decay_probe
from config import *

load_dotenv()

console = Console()
app = typer.Typer(help="🌊 BreatherLab - decay of breather modes in time-periodic potentials")

SCENARIO = typer.Option(None, "--scenario", "-s", help="Scenario file (section.key = value)")
OUT = typer.Option(None, "--out", "-o", help="Output directory (overrides output.dir)")
EPSILON = typer.Option(None, "--epsilon", "-e", help="Detuning; repeat for a sweep")
PARITY = typer.Option(None, "--parity", "-p", help="Parity channel: even or odd")
DROP = typer.Option(False, "--drop-zero-resonance", help="Drop the zero-energy resonance term (even channel)")
NO_SPONGE = typer.Option(False, "--no-sponge", help="Switch the absorbing layer off")
PERIODS = typer.Option(None, "--periods", "-n", help="Number of periods to integrate")
VERBOSE = typer.Option(False, "--verbose", "-v", help="Debug logging")


def _configure_logging(verbose: bool):
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)
        return
    # spinners and numerical INFO chatter do not mix
    for name in ("models", "utils", "visualizations"):
        logging.getLogger(name).setLevel(logging.WARNING)


def _load(scenario_path, out, epsilon, parity, periods, no_sponge, drop) -> Scenario:
    scenario = load_scenario(scenario_path)
    return apply_overrides(scenario, epsilons=epsilon, parity=parity, n_periods=periods,
                           no_sponge=no_sponge, output_dir=out, drop_zero_resonance=drop)


def _two_soliton(scenario: Scenario) -> TwoSolitonParams:
    source = scenario.potential()
    if not isinstance(source, TwoSolitonParams):
        raise ScenarioError("this command needs potential.kind = two-soliton", field="potential.kind")
    return source


def _fail(action: str, error: Exception):
    """Report an error and exit with its code."""
    if isinstance(error, BreatherLabError):
        code = error.exit_code
    elif isinstance(error, ValueError):
        code = EXIT_CONFIG
    else:
        code = 1
    rprint(f"\n[bold red]❌ {action} failed: {escape(str(error))}")
    raise typer.Exit(code)


@app.command()
def construct(
    scenario: Optional[str] = SCENARIO,
    out: Optional[str] = OUT,
    verbose: bool = VERBOSE,
):
    """
    Sample V0(x, t) over one period and write a CSV table and an SVG heatmap.
    """
    _configure_logging(verbose)
    try:
        lab = _load(scenario, out, None, None, None, False, False)
        source = lab.potential()
        with console.status("[bold blue]Sampling the potential...") as status:
            L = lab.period or period_of(source)
            if L is None:
                L = 2.0 * math.pi
                if isinstance(source, DiscreteData) and source.M > 1:
                    rprint("[yellow]⚠️ No common period; sampling over 2π")

            grid = SpatialGrid(*lab.domain, lab.n_points)
            times = L * np.arange(POTENTIAL_TIME_SAMPLES) / POTENTIAL_TIME_SAMPLES
            V = potential_function(source)
            values = np.array([V(grid.x, t) for t in times])

            status.update("[bold blue]Writing tables and charts...")
            output = ensure_dir(lab.output_dir)
            table_path = write_potential_table(output / "potential.csv", grid.x, times, values)
            chart_path = plot_potential_heatmap(grid.x, times, values, path=str(output / "potential.svg"))

        table = Table(title="Potential Well")
        table.add_column("Quantity", style="bold")
        table.add_column("Value", style="green")
        table.add_row("Kind", lab.potential_kind)
        table.add_row("Period L", f"{L:.12g}")
        table.add_row("min V0", f"{values.min():.6f}")
        table.add_row("V0(0, 0)", f"{float(V(np.array([0.0]), 0.0)[0]):.6f}")
        table.add_row("Grid", f"{lab.n_points} points on [{grid.x_min:g}, {grid.x_max:g}]")
        console.print(table)

        rprint(f"[bold green]✅ Wrote {table_path} and {chart_path}")

    except KeyboardInterrupt:
        rprint("\n[bold yellow]⚠️ Construction interrupted by user")
        raise typer.Exit(1)
    except typer.Exit:
        raise
    except Exception as e:
        _fail("Construction", e)


@app.command()
def spectrum(
    scenario: Optional[str] = SCENARIO,
    out: Optional[str] = OUT,
    verbose: bool = VERBOSE,
):
    """
    Period, frequencies, Floquet multipliers and the resonance table sigma_n.
    """
    _configure_logging(verbose)
    try:
        lab = _load(scenario, out, None, None, None, False, False)
        source = lab.potential()
        output = ensure_dir(lab.output_dir)

        if source is None:
            raise ScenarioError("the zero potential has no spectrum to report", field="potential.kind")

        data = source.to_discrete_data() if isinstance(source, TwoSolitonParams) else source
        report = check_commensurate(data)
        summary = {
            "kind": report.kind,
            "period": report.period,
            "frequency": report.frequency,
            "integers": list(report.integers),
            "offset": report.offset,
            "multipliers": [[m.real, m.imag] for m in report.multipliers],
        }

        table = Table(title="Spectrum")
        table.add_column("Quantity", style="bold")
        table.add_column("Value", style="cyan")
        table.add_row("Time dependence", report.kind)
        table.add_row("Period L", f"{report.period:.12g}" if report.period else "n/a")
        table.add_row("Multipliers", ", ".join(f"{m.real:+.6f}{m.imag:+.6f}i" for m in report.multipliers))

        if isinstance(source, TwoSolitonParams):
            p = source
            n0 = first_resonant_index(p)
            summary.update({"omega": p.omega, "beta": p.beta, "n0": n0,
                            "floquet_multiplier": [p.floquet_multiplier.real, p.floquet_multiplier.imag]})
            rows = []
            for n in range(-lab.k_max, lab.k_max + 1):
                sigma = float(p.resonance(n))
                near = abs(sigma) < SIGMA_FLOOR
                rows.append({"n": n, "sigma": sigma, "resonant": sigma > 0,
                             "zero_resonance_even": near, "zero_resonance_odd": False})
            write_table(output / "resonances.csv", rows)
            summary["zero_resonance"] = {"even": any(r["zero_resonance_even"] for r in rows), "odd": False}

            table.add_row("omega", f"{p.omega:.12g}")
            table.add_row("beta", f"{p.beta:.12g}")
            table.add_row("n0", str(n0))
            console.print(table)

            sigma_table = Table(title="Resonances near the continuum edge")
            sigma_table.add_column("n", style="bold")
            sigma_table.add_column("sigma_n", style="green")
            sigma_table.add_column("Flag", style="yellow")
            for row in rows:
                if n0 - 2 <= row["n"] <= n0 + 4:
                    flag = "zero resonance (even)" if row["zero_resonance_even"] else ""
                    sigma_table.add_row(str(row["n"]), f"{row['sigma']:+.6f}", flag)
            console.print(sigma_table)
        else:
            console.print(table)

        write_json(output / "spectrum.json", summary)
        rprint(f"[bold green]✅ Spectrum written to {output}")

    except KeyboardInterrupt:
        rprint("\n[bold yellow]⚠️ Spectrum interrupted by user")
        raise typer.Exit(1)
    except typer.Exit:
        raise
    except Exception as e:
        _fail("Spectrum", e)


@app.command()
def predict(
    scenario: Optional[str] = SCENARIO,
    out: Optional[str] = OUT,
    epsilon: Optional[List[float]] = EPSILON,
    parity: Optional[str] = PARITY,
    drop_zero_resonance: bool = DROP,
    no_gate: bool = typer.Option(False, "--no-gate", help="Skip the oracle and convergence gates"),
    verbose: bool = VERBOSE,
):
    """
    Mean shift, golden-rule decay rate and Lamb shift for every detuning.
    """
    _configure_logging(verbose)
    try:
        lab = _load(scenario, out, epsilon, parity, None, False, drop_zero_resonance)
        p = _two_soliton(lab)
        drop = lab.drop_zero_resonance
        zero_resonance_guard(p, lab.parity, lab.k_max, drop)
        output = ensure_dir(lab.output_dir)

        results = {}
        with Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"),
                      console=console) as progress:
            task = progress.add_task("Computing predictions...", total=len(lab.epsilons))
            for eps in lab.epsilons:
                progress.update(task, description=f"eps={eps:g}: sampling matrix elements...")
                spec = PerturbationSpec.detuning(p, eps)
                coupling = build_coupling(spec, p, lab.parity, k_max=lab.k_max, n_panels=lab.spectral_panels)
                prediction = predict_decay(coupling, drop)

                if not no_gate:
                    progress.update(task, description=f"eps={eps:g}: convergence gates...")
                    oracle = oracle_gate(coupling, prediction)
                    gate = convergence_gate(coupling, prediction, drop)
                    gamma_t, lambda_t = gamma_time_average(coupling, drop_zero_resonance=drop)
                    prediction.convergence = {
                        **gate,
                        "oracle": {str(n): v for n, v in oracle.items()},
                        "time_average": {"Gamma": gamma_t, "Lambda": lambda_t},
                    }

                write_json(output / artifact_name("prediction", lab.parity, eps, "json"), prediction.to_dict())
                results[eps] = prediction
                progress.advance(task)

        _display_predictions(results, lab.parity)
        rprint(f"[bold green]✅ Predictions written to {output}")

    except KeyboardInterrupt:
        rprint("\n[bold yellow]⚠️ Prediction interrupted by user")
        raise typer.Exit(1)
    except typer.Exit:
        raise
    except Exception as e:
        _fail("Prediction", e)


def _display_predictions(results: Dict[float, DecayPrediction], parity: str):
    table = Table(title=f"Golden-Rule Predictions ({parity})")
    table.add_column("epsilon", style="bold")
    table.add_column("Mbar", style="cyan")
    table.add_column("Gamma", style="green")
    table.add_column("Lambda", style="magenta")
    table.add_column("C (small t)", style="cyan")
    table.add_column("K_max")
    for eps, pred in results.items():
        table.add_row(f"{eps:g}", f"{pred.Mbar:.6e}", f"{pred.Gamma:.6e}", f"{pred.Lambda:.6e}",
                      f"{pred.small_time:.6e}", str(pred.k_max))
    console.print(table)

    dropped = sorted({n for pred in results.values() for n in pred.dropped})
    if dropped:
        rprint(f"[yellow]⚠️ Renormalized: resonance terms {dropped} dropped")


def _simulation_config(lab: Scenario, eps: float, n_periods: int, record_every: int) -> SimulationConfig:
    grid = SpatialGrid(*lab.domain, lab.n_points)
    sponge = SpongeParams(damping=lab.sponge_damping, width=lab.sponge_width,
                          margin=lab.sponge_margin, enabled=lab.sponge_enabled)
    return SimulationConfig(
        grid=grid, source=lab.potential(), epsilon=eps, n_periods=n_periods,
        initial_condition=f"{lab.parity}-bound", dt_max=lab.dt_max, dt_min=lab.dt_min,
        sponge=sponge, record_every=record_every, step_tolerance=lab.step_tolerance,
        frame=lab.frame, period=lab.period,
    )


def _run_metadata(lab: Scenario, config: SimulationConfig, series) -> Dict:
    steps = series.schedule[:, 1]
    return {
        "epsilon": config.epsilon,
        "parity": lab.parity,
        "frame": config.frame,
        "n_periods": config.n_periods,
        "record_every": config.record_every,
        "period": config.time_period,
        "grid": {"x_min": config.grid.x_min, "x_max": config.grid.x_max, "points": config.grid.n_points},
        "sponge": {"enabled": config.sponge.enabled, "damping": config.sponge.damping,
                   "width": config.sponge.width, "margin": config.sponge.margin},
        "dt": {"steps": int(steps.size), "min": float(steps.min()), "max": float(steps.max()),
               "mean": float(steps.mean())},
        "step_tolerance": config.step_tolerance,
        "final_abs_B": float(abs(series.B_b[-1])),
        "final_norm": float(series.field_norm[-1]),
    }


@app.command()
def simulate(
    scenario: Optional[str] = SCENARIO,
    out: Optional[str] = OUT,
    epsilon: Optional[List[float]] = EPSILON,
    parity: Optional[str] = PARITY,
    no_sponge: bool = NO_SPONGE,
    periods: Optional[int] = PERIODS,
    small_time: bool = typer.Option(False, "--small-time", help="Also run one densely sampled period"),
    verbose: bool = VERBOSE,
):
    """
    Split-step runs of the detuned equation, one per epsilon, recording B_b(t).
    """
    _configure_logging(verbose)
    try:
        lab = _load(scenario, out, epsilon, parity, periods, no_sponge, False)
        output = ensure_dir(lab.output_dir)
        threads = max(1, int(os.getenv(THREADS_ENV, "1")))

        jobs = [(eps, "series", _simulation_config(lab, eps, lab.n_periods, lab.record_every))
                for eps in lab.epsilons]
        if small_time:
            jobs += [(eps, "smalltime", _simulation_config(lab, eps, 1, SMALL_TIME_RECORDS))
                     for eps in lab.epsilons]

        finals = {}
        with Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"),
                      BarColumn(), console=console) as progress:

            def execute(job):
                eps, kind, config = job
                task = progress.add_task(f"{kind} eps={eps:g}", total=1.0)
                series = run(config, progress=lambda fraction: progress.update(task, completed=fraction))
                write_time_series(output / artifact_name(kind, lab.parity, eps), series)
                write_json(output / artifact_name(f"{kind}_meta", lab.parity, eps, "json"),
                           _run_metadata(lab, config, series))
                return eps, kind, series

            with ThreadPoolExecutor(max_workers=threads) as pool:
                for eps, kind, series in pool.map(execute, jobs):
                    if kind == "series":
                        finals[eps] = series

        table = Table(title=f"Simulations ({lab.parity}, {lab.n_periods} periods)")
        table.add_column("epsilon", style="bold")
        table.add_column("|B_b(T)|", style="green")
        table.add_column("arg B_b(T)", style="cyan")
        table.add_column("norm(T)", style="yellow")
        for eps, series in finals.items():
            table.add_row(f"{eps:g}", f"{abs(series.B_b[-1]):.8f}", f"{np.angle(series.B_b[-1]):+.6f}",
                          f"{series.field_norm[-1]:.8f}")
        console.print(table)
        rprint(f"[bold green]✅ Time series written to {output}")

    except KeyboardInterrupt:
        rprint("\n[bold yellow]⚠️ Simulation interrupted by user")
        raise typer.Exit(1)
    except typer.Exit:
        raise
    except Exception as e:
        _fail("Simulation", e)


@app.command()
def compare(
    scenario: Optional[str] = SCENARIO,
    out: Optional[str] = OUT,
    epsilon: Optional[List[float]] = EPSILON,
    parity: Optional[str] = PARITY,
    verbose: bool = VERBOSE,
):
    """
    Fit the simulated decay and phase and check them against the predictions.
    """
    _configure_logging(verbose)
    try:
        lab = _load(scenario, out, epsilon, parity, None, False, False)
        output = Path(lab.output_dir)

        predictions, series, short_runs = {}, {}, {}
        for eps in lab.epsilons:
            predictions[eps] = DecayPrediction.from_dict(
                read_json(output / artifact_name("prediction", lab.parity, eps, "json")))
            series[eps] = read_time_series(output / artifact_name("series", lab.parity, eps))
            short = output / artifact_name("smalltime", lab.parity, eps)
            if short.exists():
                short_runs[eps] = read_time_series(short)

        report = compare_runs(predictions, series, lab.parity, short_runs)
        write_json(output / artifact_name("comparison", lab.parity, suffix="json"), report.to_dict())

        runs = {}
        for entry in report.entries:
            run_series = series[entry.epsilon]
            runs[entry.epsilon] = {"t": run_series.times, "B": run_series.B_b,
                                   "Gamma": predictions[entry.epsilon].Gamma,
                                   "phase_slope": entry.predicted_phase_slope}
        plot_decay_overlay(runs, lab.parity, str(output / f"decay_{lab.parity}.svg"))
        plot_phase(runs, lab.parity, str(output / f"phase_{lab.parity}.svg"))

        _display_comparison(report)
        if all(value for key, value in report.flags.items() if key in ("slopes", "scaling", "small_time")):
            rprint(f"[bold green]✅ Simulation agrees with theory within {report.tolerance:.0%}")
        else:
            rprint("[bold yellow]⚠️ Some checks are outside tolerance; see the comparison report")

    except KeyboardInterrupt:
        rprint("\n[bold yellow]⚠️ Comparison interrupted by user")
        raise typer.Exit(1)
    except typer.Exit:
        raise
    except Exception as e:
        _fail("Comparison", e)


def _display_comparison(report):
    table = Table(title=f"Simulation vs Theory ({report.parity})")
    table.add_column("epsilon", style="bold")
    table.add_column("fitted slope", style="green")
    table.add_column("-Gamma", style="cyan")
    table.add_column("rel. error", style="yellow")
    table.add_column("phase slope", style="green")
    table.add_column("Lambda - Mbar", style="cyan")
    table.add_column("Pass")
    for e in report.entries:
        error = f"{e.relative_error:.1%}" if e.relative_error is not None else f"fid {e.fidelity:.1e}"
        table.add_row(f"{e.epsilon:g}", f"{e.fitted_slope:.4e}", f"{e.predicted_slope:.4e}", error,
                      f"{e.phase_slope:.4e}", f"{e.predicted_phase_slope:.4e}", "✅" if e.passed else "❌")
    console.print(table)

    if report.scaling:
        scaling = Table(title="epsilon^2 Scaling")
        scaling.add_column("pair", style="bold")
        scaling.add_column("slope ratio", style="green")
        scaling.add_column("expected", style="cyan")
        scaling.add_column("Pass")
        for s in report.scaling:
            scaling.add_row(f"{s['eps_a']:g} / {s['eps_b']:g}", f"{s['ratio']:.4f}", f"{s['expected']:.4f}",
                            "✅" if s["passed"] else "❌")
        console.print(scaling)


def _probe_field(grid: SpatialGrid, parity: str) -> WaveField:
    x = grid.x
    samples = np.exp(-x ** 2 / 8.0) * (x if parity == "odd" else 1.0)
    samples = samples / math.sqrt(grid.dx * np.sum(np.abs(samples) ** 2))
    return WaveField(samples.astype(complex), grid, 0.0)


@app.command("decay-probe")
def decay_probe(
    scenario: Optional[str] = SCENARIO,
    out: Optional[str] = OUT,
    verbose: bool = VERBOSE,
):
    """
    Power-law decay of weighted local norms of the continuum part, per parity.
    """
    _configure_logging(verbose)
    try:
        lab = _load(scenario, out, None, None, None, False, False)
        p = _two_soliton(lab)
        output = ensure_dir(lab.output_dir)
        grid = SpatialGrid(*lab.domain, lab.n_points)
        start, stop = DECAY_WINDOW
        times = np.geomspace(start * p.period, stop * p.period, DECAY_SAMPLES)

        norms, exponents, summary = {}, {}, {"times": times.tolist(), "sigma": DECAY_WEIGHT_EXPONENT}
        with console.status("[bold blue]Probing local decay...") as status:
            for channel in ("odd", "even"):
                status.update(f"[bold blue]Probing the {channel} channel...")
                values = local_decay_probe(_probe_field(grid, channel), BasisContext(p, channel), times)
                fit = fit_power_law(times, values)
                low, high = fit.interval()
                norms[channel] = values
                exponents[channel] = fit.slope
                summary[channel] = {"exponent": fit.slope, "stderr": fit.stderr,
                                    "interval": [low, high], "norms": values}

        write_json(output / "decay_probe.json", summary)
        plot_decay_probe(times, norms, exponents, str(output / "decay_probe.svg"))

        table = Table(title="Local Decay Exponents")
        table.add_column("Parity", style="bold")
        table.add_column("Exponent", style="green")
        table.add_column("95% interval", style="cyan")
        for channel in ("odd", "even"):
            low, high = summary[channel]["interval"]
            table.add_row(channel, f"{exponents[channel]:+.3f}", f"[{low:+.3f}, {high:+.3f}]")
        console.print(table)
        rprint(f"[bold green]✅ Decay probe written to {output}")

    except KeyboardInterrupt:
        rprint("\n[bold yellow]⚠️ Decay probe interrupted by user")
        raise typer.Exit(1)
    except typer.Exit:
        raise
    except Exception as e:
        _fail("Decay probe", e)


@app.command()
def version():
    """Show the lab version."""
    console.print(Panel(f"{APP_NAME} v{VERSION}", border_style="blue"))


if __name__ == "__main__":
    app()
