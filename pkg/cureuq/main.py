import logging
import sys
from typing import Annotated, Optional, Sequence

import typer

try:  # typer >= 0.26 vendors click and raises its own exception classes
    from typer import _click as click
except ImportError:
    import click
from pydantic import ValidationError

from cureuq import __version__
from cureuq.commands import (
    calibrate,
    coverage,
    forward_uq,
    gen_data,
    propagate,
    simulate,
)
from cureuq.commands._common import console
from cureuq.config import configure_logging, settings
from cureuq.exceptions import CureUQError

logger = logging.getLogger("cureuq")

app = typer.Typer(
    name="cureuq",
    help="Калибровка, перенос неопределённости и моделирование отверждения "
    "эпоксидной смолы.",
    add_completion=False,
    no_args_is_help=True,
)


def _print_version(value: bool):
    if value:
        console.print(f"cureuq {__version__}")
        raise typer.Exit()


@app.callback()
def main_callback(
    log_level: Annotated[
        Optional[str], typer.Option("--log-level", help="DEBUG, INFO, WARNING")
    ] = None,
    version: Annotated[
        bool, typer.Option("--version", callback=_print_version, is_eager=True)
    ] = False,
):
    configure_logging((log_level or settings.log_level).upper())


for module in (calibrate, propagate, coverage, simulate, forward_uq, gen_data):
    app.registered_commands.extend(module.router.registered_commands)


def run(argv: Sequence[str] | None = None) -> int:
    """
    Запускает командную строку и возвращает код выхода.

    Возвращает:
    - 0 при успехе, 1 при ошибке предметной области (CureUQError.exit_code),
      2 при ошибке использования или некорректной конфигурации.
    """
    command = typer.main.get_command(app)
    try:
        result = command.main(
            args=list(argv) if argv is not None else None,
            prog_name="cureuq",
            standalone_mode=False,
        )
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Abort:
        console.print("Aborted")
        return 1
    except ValidationError as exc:
        console.print(f"[red]Invalid configuration:[/red] {exc}")
        return 2
    except CureUQError as exc:
        logger.error("%s: %s", type(exc).__name__, exc.detail)
        return exc.exit_code
    return result if isinstance(result, int) else 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
