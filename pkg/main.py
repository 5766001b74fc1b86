import os
import sys
from rich.console import Console
from rich.panel import Panel
from rich import print as rprint

# Add current directory to path for imports
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from interface.cli import app as cli_app
from config import APP_NAME, VERSION

console = Console()


def main():
    """
    Main entry point for BreatherLab.
    Shows the available commands when started without arguments.
    """

    welcome_panel = Panel(
        """[bold blue]🌊 Welcome to BreatherLab - Decay of Breather Modes[/bold blue]

[cyan]Features:[/cyan]
• Exactly solvable time-periodic potentials built from discrete spectral data
• Even/odd bound and continuum eigenfunctions of the two-soliton well
• Fermi golden-rule decay rates and Lamb shifts for detuned wells
• Split-step PDE runs with an absorbing sponge layer
• Simulation-versus-theory reports with SVG overlays

[yellow]Available Commands:[/yellow]
• [bold]construct[/bold] - Sample V0(x, t) over one period
• [bold]spectrum[/bold] - Period, multipliers and resonances
• [bold]predict[/bold] - Golden-rule decay rate and Lamb shift
• [bold]simulate[/bold] - Split-step runs of the detuned equation
• [bold]compare[/bold] - Fitted slopes against the predictions
• [bold]decay-probe[/bold] - Local decay exponents per parity

[green]Example Usage:[/green]
python main.py predict --scenario scenarios/soliton_quarter.txt --epsilon 0.02
        """,
        title=f"{APP_NAME} v{VERSION}",
        border_style="blue"
    )

    console.print(welcome_panel)
    rprint("\n[yellow]No command specified. Use --help to see available commands.[/yellow]")
    rprint("[cyan]Quick start: Try 'python main.py spectrum'[/cyan]")


if __name__ == "__main__":
    # Check if command line arguments are provided
    if len(sys.argv) > 1:
        cli_app()
    else:
        main()
