from rich.panel import Panel
from rich.text import Text


class TrainingLog:
    """Live panel of training phase events."""

    def __init__(self, title: str = "Training...") -> None:
        self.logs = []
        self.title = f"[bold cyan]{title}[/bold cyan]"

    def add(self, message: str) -> None:
        self.logs.append(message)

    def complete(self, message: str = "Done") -> None:
        self.title = f"[bold green]{message}[/bold green]"

    def fail(self, message: str = "Failed") -> None:
        self.title = f"[bold red]{message}[/bold red]"

    def __rich_console__(self, console, options):
        log_text = Text("\n".join(self.logs))
        yield Panel(log_text, title=self.title, border_style="cyan")
