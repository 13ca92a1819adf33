"""Калибровка и перенос неопределённостей для модели отверждения эпоксидной смолы."""

__version__ = "0.1.0"
