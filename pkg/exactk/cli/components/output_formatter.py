from contextlib import contextmanager
from typing import Dict, Iterator, Optional

from rich.console import Console, RenderableType
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table
from rich.text import Text


class OutputFormatter:
    """Panels and tables for everything the CLI shows besides log records."""

    @staticmethod
    def _panel(console: Console, body: RenderableType, title: str, style: str, border: str) -> None:
        panel = Panel(
            body,
            title=Text(f" {title} ", style=style),
            border_style=border,
            title_align="left",
            padding=(1, 2),
            width=console.size.width,
        )
        console.print(panel)

    @staticmethod
    def print_banner(console: Console, command: str, version: str) -> None:
        console.print(f"[bold green]exactk {command}[/bold green] [dim]v{version}[/dim]")

    @staticmethod
    def print_error(console: Console, message: str, exception: Optional[Exception] = None) -> None:
        content = f"[bold red]✗ {message}[/bold red]"
        if exception:
            content += f"\n[dim]{type(exception).__name__}: {str(exception)}[/dim]"
        OutputFormatter._panel(console, content, "Error", "white on red", "red")

    @staticmethod
    def print_warning(console: Console, message: str) -> None:
        OutputFormatter._panel(console, f"[bold yellow]▲ {message}[/bold yellow]", "Warning", "black on yellow", "yellow")

    @staticmethod
    def print_outputs(console: Console, outputs: Dict[str, str], title: str = "Written") -> None:
        lines = [f"[green]◊[/green] {name}: [cyan]{path}[/cyan]" for name, path in sorted(outputs.items())]
        OutputFormatter._panel(console, "\n".join(lines), title, "white on green", "green")

    @staticmethod
    def print_table(console: Console, table: Table) -> None:
        console.print(table)

    @staticmethod
    @contextmanager
    def spinner(console: Console, message: str = "Working...") -> Iterator[Progress]:
        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            console=console,
            transient=True,
        ) as progress:
            progress.add_task(description=message, total=None)
            yield progress
