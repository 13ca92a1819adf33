"""Файловый ввод-вывод: CSV-наборы данных, YAML-конфигурации, JSON-результаты
и манифест воспроизводимости.

Диалект CSV один на весь пакет: запятая, десятичная точка, строка заголовка,
UTF-8, окончания строк LF, числа в кратчайшем точном представлении.
"""

import hashlib
import json
import logging
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Iterable, Mapping, TypeVar

import numpy as np
import pandas as pd
import yaml
from pydantic import BaseModel

from cureuq import __version__
from cureuq.core.pipeline import collect_step_datasets
from cureuq.exceptions import ConfigurationError
from cureuq.schemas.calibration import FitResult, StepSpec, UncertainParameterSet
from cureuq.schemas.coverage import CoverageReport
from cureuq.schemas.datasets import Dataset
from cureuq.schemas.simulation import SimResult
from cureuq.schemas.uq import UQResult

logger = logging.getLogger(__name__)

Model = TypeVar("Model", bound=BaseModel)

CSV_OPTIONS = {"sep": ",", "decimal": ".", "encoding": "utf-8"}
TRACKED_PACKAGES = ("numpy", "scipy", "pandas", "pydantic")


def write_frame(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n", **CSV_OPTIONS)
    return path


def read_frame(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, **CSV_OPTIONS)
    except FileNotFoundError:
        raise ConfigurationError(f"Data file '{path}' does not exist") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ConfigurationError(f"Cannot parse '{path}': {exc}") from exc


def read_dataset(path: Path, observation: str | None = None) -> Dataset:
    """
    Читает один CSV-файл в Dataset.

    Параметры:
    - observation: Столбец наблюдений; по умолчанию последний.

    Исключения:
    - ConfigurationError, если файла или столбца нет.
    """
    frame = read_frame(path)
    name = observation or frame.columns[-1]
    if name not in frame.columns:
        raise ConfigurationError(f"'{path}' has no column '{name}'")
    return Dataset(
        label=Path(path).stem,
        predictors={
            col: frame[col].to_numpy(dtype=float)
            for col in frame.columns
            if col != name
        },
        observations=frame[name].to_numpy(dtype=float),
        observation_name=name,
    )


def write_dataset(data: Dataset, path: Path) -> Path:
    columns = {name: col for name, col in data.predictors.items()}
    columns[data.observation_name] = data.observations
    return write_frame(pd.DataFrame(columns), path)


def load_datasets(steps: list[StepSpec], data_dir: Path) -> dict[str, Dataset]:
    """Читает файлы всех шагов из data_dir и собирает данные шагов."""
    files = {}
    for step in steps:
        for name in step.dataset.files:
            key = str(name)
            if key not in files:
                path = Path(data_dir) / name
                files[key] = read_dataset(path, step.dataset.observation)
    return collect_step_datasets(steps, files)


def load_yaml(path: Path, model: type[Model]) -> Model:
    """
    Загружает YAML-файл в pydantic-модель.

    Исключения:
    - ConfigurationError, если файла нет или YAML некорректен.
    - pydantic.ValidationError, если содержимое не проходит проверку.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"Config file '{path}' does not exist") from None
    except yaml.YAMLError as exc:
        raise ConfigurationError(
            f"Config file '{path}' is not valid YAML: {exc}"
        ) from exc
    return model.model_validate(raw or {})


def dump_yaml(data: BaseModel | Mapping, path: Path) -> Path:
    payload = data.model_dump(mode="json") if isinstance(data, BaseModel) else data
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        yaml.safe_dump(payload, fh, sort_keys=False, allow_unicode=True)
    return path


def write_json(data: BaseModel | Mapping, path: Path) -> Path:
    payload = data.model_dump(mode="json") if isinstance(data, BaseModel) else data
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, ensure_ascii=False)
        fh.write("\n")
    return path


def file_hash(path: Path | None) -> str | None:
    if path is None:
        return None
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def package_versions() -> dict[str, str]:
    versions = {"cureuq": __version__}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def write_manifest(
    out_dir: Path,
    command: str,
    seed: int | None,
    config_path: Path | None = None,
    outputs: Iterable[Path] = (),
) -> Path:
    """Манифест запуска: хеш конфигурации, зерно, версии пакетов, время."""
    manifest = {
        "command": command,
        "config": str(config_path) if config_path else None,
        "config_sha256": file_hash(config_path),
        "seed": seed,
        "versions": package_versions(),
        "outputs": sorted(Path(p).name for p in outputs),
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    return write_json(manifest, Path(out_dir) / "manifest.json")


def fit_summary(fit: FitResult) -> dict:
    """κ*, Δκ_NLS и сведения о сходимости без якобиана и остатков."""
    payload = fit.model_dump(mode="json", exclude={"jacobian", "residuals"})
    std = None if fit.covariance is None else np.sqrt(np.diag(fit.covariance)).tolist()
    payload["std"] = std
    return payload


def write_parameter_set(uset: UncertainParameterSet, out_dir: Path) -> list[Path]:
    """JSON набора шага и, для Монте-Карло, CSV эмпирической выборки."""
    out_dir = Path(out_dir)
    paths = [
        write_json(
            uset.model_dump(mode="json", exclude={"empirical", "empirical_noise"}),
            out_dir / f"{uset.step}.json",
        )
    ]
    if uset.empirical is not None:
        frame = pd.DataFrame(uset.empirical, columns=uset.names)
        paths.append(write_frame(frame, out_dir / f"{uset.step}_samples.csv"))
        noise = uset.empirical_noise.reshape(uset.empirical.shape[0], -1)
        noise_cols = [f"cov_{a}_{b}" for a in uset.names for b in uset.names]
        paths.append(
            write_frame(
                pd.DataFrame(noise, columns=noise_cols),
                out_dir / f"{uset.step}_sample_covariances.csv",
            )
        )
    return paths


def read_parameter_set(path: Path) -> UncertainParameterSet:
    """Читает набор шага вместе с выборкой, если рядом лежат её CSV-файлы."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"Parameter set '{path}' does not exist") from None
    raw.pop("covariance_total", None)
    samples = path.with_name(f"{path.stem}_samples.csv")
    if samples.exists():
        k = len(raw["names"])
        raw["empirical"] = read_frame(samples)[raw["names"]].to_numpy(dtype=float)
        noise = read_frame(path.with_name(f"{path.stem}_sample_covariances.csv"))
        raw["empirical_noise"] = noise.to_numpy(dtype=float).reshape(-1, k, k)
    return UncertainParameterSet.model_validate(raw)


def read_parameter_sets(
    directory: Path, steps: Iterable[str] | None = None
) -> list[UncertainParameterSet]:
    """
    Наборы параметров из каталога команды propagate.

    Параметры:
    - steps: Если задан, читаются только файлы <step>.json этих шагов.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigurationError(
            f"Parameter set directory '{directory}' does not exist"
        )
    skip = {"manifest.json"}
    wanted = set(steps) if steps is not None else None
    return [
        read_parameter_set(p)
        for p in sorted(directory.glob("*.json"))
        if p.name not in skip
        and not p.name.endswith("_fit.json")
        and (wanted is None or p.stem in wanted)
    ]


def write_sim_result(result: SimResult, out_dir: Path) -> list[Path]:
    """Ряды проб, принятые шаги и снимки профилей Θ."""
    out_dir = Path(out_dir)
    paths = []
    for name in sorted(result.probes):
        theta, c = result.probe(name)
        frame = pd.DataFrame({"t": result.times, "theta": theta, "c": c})
        paths.append(write_frame(frame, out_dir / f"probe_{name}.csv"))
    steps = pd.DataFrame({"t": result.times[1:], "dt": result.dt})
    paths.append(write_frame(steps, out_dir / "steps.csv"))
    if result.snapshots:
        frame = pd.DataFrame({"cell": np.arange(result.theta.shape[1])})
        for key, profile in result.snapshots.items():
            frame[f"theta_t{key}"] = profile
        paths.append(write_frame(frame, out_dir / "snapshots.csv"))
    return paths


def uq_frame(result: UQResult) -> pd.DataFrame:
    columns = {"t": result.times}
    for probe, quantities in result.outputs.items():
        for quantity, stats in quantities.items():
            columns[f"{probe}_{quantity}_mean"] = stats.mean
            columns[f"{probe}_{quantity}_std"] = stats.std
    return pd.DataFrame(columns)


def write_uq_result(result: UQResult, path: Path) -> Path:
    return write_frame(uq_frame(result), path)


def coverage_frame(report: CoverageReport) -> pd.DataFrame:
    """Строка на параметр: покрытие нормального и t-интервала, с переносом и без."""
    return pd.DataFrame(
        [
            {
                "parameter": p.name,
                "normal": p.normal,
                "student_t": p.student_t,
                "normal_noise_only": p.normal_noise_only,
                "student_t_noise_only": p.student_t_noise_only,
            }
            for p in report.parameters
        ]
    )


def write_coverage_report(report: CoverageReport, path: Path) -> Path:
    return write_frame(coverage_frame(report), path)
