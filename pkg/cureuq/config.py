import logging
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict
from rich.logging import RichHandler


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env", env_prefix="CUREUQ_", extra="ignore"
    )
    data_dir: Path = Field(Path("data"), description="Default dataset directory")
    output_dir: Path = Field(Path("results"), description="Default result directory")
    seed: int = Field(7, ge=0, description="Base seed of all random streams")
    workers: int = Field(1, ge=1, description="Worker pool size")
    log_level: str = Field("INFO", description="Logging level name")


settings = Settings()


def configure_logging(level: str | int | None = None) -> None:
    """
    Подключает RichHandler к корневому логгеру.

    Параметры:
    - level: Уровень логирования; по умолчанию берётся из настроек.
    """
    logging.basicConfig(
        level=level or settings.log_level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=True, show_path=False)],
        force=True,
    )
