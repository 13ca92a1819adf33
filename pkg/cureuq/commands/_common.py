"""Общие опции и вывод для команд."""

from pathlib import Path
from typing import Annotated, Optional

import typer
from rich.console import Console
from rich.table import Table

from cureuq.config import settings

console = Console()

OutOption = Annotated[
    Optional[Path], typer.Option("--out", help="Output directory [CUREUQ_OUTPUT_DIR]")
]
SeedOption = Annotated[
    Optional[int], typer.Option("--seed", min=0, help="Base seed [CUREUQ_SEED]")
]
WorkersOption = Annotated[
    Optional[int], typer.Option("--workers", min=1, help="Worker pool size")
]


def out_dir(value: Path | None) -> Path:
    path = value or settings.output_dir
    path.mkdir(parents=True, exist_ok=True)
    return path


def seed_or_default(value: int | None) -> int:
    return settings.seed if value is None else value


def workers_or_default(value: int | None) -> int:
    return value or settings.workers


def table(title: str, columns: list[str], rows: list[list]) -> None:
    view = Table(title=title)
    for name in columns:
        view.add_column(name)
    for row in rows:
        view.add_row(*[f"{v:.6g}" if isinstance(v, float) else str(v) for v in row])
    console.print(view)
