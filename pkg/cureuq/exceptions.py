"""Иерархия ошибок пакета.

Каждая ошибка несёт человекочитаемое сообщение ``detail`` и код выхода
для командной строки, по аналогии с ``HTTPException(status_code, detail)``.
"""


class CureUQError(Exception):
    exit_code: int = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail

    def __str__(self) -> str:
        return self.detail


class DomainError(CureUQError):
    """Недопустимые физические входные данные или моменты распределения."""


class ConvergenceError(CureUQError):
    """Метод наименьших квадратов не сошёлся."""


class IdentifiabilityError(CureUQError):
    """Матрица JᵀJ вырождена: направление параметров не идентифицируемо."""

    def __init__(self, detail: str, direction: dict[str, float] | None = None):
        super().__init__(detail)
        self.direction = direction or {}


class PropagationError(CureUQError):
    """Сбой при распространении неопределённости (FOSM или Монте-Карло)."""


class SimulationError(CureUQError):
    """Сбой интегрирования по времени."""


class ConfigurationError(CureUQError):
    """Некорректная или неполная конфигурация."""
