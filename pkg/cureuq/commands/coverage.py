import logging
from enum import Enum
from pathlib import Path
from typing import Annotated, Optional

import typer

from cureuq.commands._common import (
    OutOption,
    SeedOption,
    WorkersOption,
    out_dir,
    seed_or_default,
    table,
    workers_or_default,
)
from cureuq.core.coverage import run_coverage
from cureuq.presets import coverage_presets
from cureuq.schemas.coverage import CaseId, CoverageCase, TruthMode
from cureuq.storage import load_yaml, write_coverage_report, write_json, write_manifest

logger = logging.getLogger(__name__)

router = typer.Typer()

# σ гауссова шума по умолчанию для каждого случая
DEFAULT_SIGMA = {
    CaseId.SPARSE_TG: 4.0,
    CaseId.KINETICS: 4e-5,
    CaseId.HEAT_CAPACITY: 16.3,
}


class NoiseKind(str, Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"
    HETERO = "hetero"


def noise_for(case: CaseId, kind: NoiseKind, sigma: float | None) -> dict:
    """
    Модель шума из опций командной строки.

    Исключения:
    - typer.BadParameter для гетероскедастичного шума в случае sparse_tg.
    """
    sigma = sigma or DEFAULT_SIGMA[case]
    if kind is NoiseKind.GAUSSIAN:
        return {"kind": "gaussian", "sigma": sigma}
    if kind is NoiseKind.UNIFORM:
        return {"kind": "uniform", "sigma_u": 3**0.5 * sigma}
    if case is CaseId.KINETICS:
        return {"kind": "hetero_curing"}
    if case is CaseId.HEAT_CAPACITY:
        return {"kind": "hetero_cp"}
    raise typer.BadParameter(
        "Heteroscedastic noise needs the kinetics or heat_capacity case"
    )


@router.command("coverage", help="Frequentist coverage test of confidence intervals")
def coverage(
    case: Annotated[Optional[CaseId], typer.Option("--case")] = None,
    preset: Annotated[
        Optional[str], typer.Option("--preset", help="Named desk-scale preset")
    ] = None,
    config: Annotated[
        Optional[Path], typer.Option("--config", help="CoverageCase YAML")
    ] = None,
    n_d: Annotated[
        Optional[int],
        typer.Option(
            "--nd", help="Glass-transition points (sparse_tg) or points per curve"
        ),
    ] = None,
    n_d_tg: Annotated[Optional[int], typer.Option("--nd-tg")] = None,
    n_cov: Annotated[Optional[int], typer.Option("--ncov", min=1)] = None,
    noise: Annotated[NoiseKind, typer.Option("--noise")] = NoiseKind.GAUSSIAN,
    sigma: Annotated[Optional[float], typer.Option("--sigma")] = None,
    truth: Annotated[Optional[TruthMode], typer.Option("--truth")] = None,
    propagate: Annotated[bool, typer.Option("--propagate/--no-propagate")] = True,
    fix_upstream: Annotated[bool, typer.Option("--fix-upstream")] = False,
    diagonal_only: Annotated[bool, typer.Option("--diagonal-only")] = False,
    seed: SeedOption = None,
    workers: WorkersOption = None,
    out: OutOption = None,
):
    """
    Повторная калибровка на данных in silico с подсчётом доли интервалов,
    накрывающих истинные параметры.

    Результат:
    - coverage_<case>.csv (строка на параметр, как в таблицах покрытия);
    - coverage_<case>.json и manifest.json.
    """
    if config is not None:
        spec = load_yaml(config, CoverageCase)
    elif preset is not None:
        if preset not in coverage_presets:
            raise typer.BadParameter(
                f"Unknown preset '{preset}'; choose from {sorted(coverage_presets)}"
            )
        spec = CoverageCase.model_validate(coverage_presets[preset]["value"])
    elif case is not None:
        fields = {"case": case, "noise": noise_for(case, noise, sigma)}
        if n_d is not None:
            fields["n_d_tg" if case is CaseId.SPARSE_TG else "n_d"] = n_d
        spec = CoverageCase.model_validate(fields)
    else:
        raise typer.BadParameter("Give one of --case, --preset or --config")

    # опции командной строки поверх пресета или файла
    update = {
        key: value
        for key, value in (
            ("n_cov", n_cov),
            ("n_d_tg", n_d_tg),
            ("truth_mode", truth),
        )
        if value is not None
    }
    if not propagate:
        update["propagate"] = False
    if fix_upstream:
        update["fix_upstream"] = True
    if diagonal_only:
        update["diagonal_only"] = True
    spec = CoverageCase.model_validate({**spec.model_dump(), **update})
    seed = seed_or_default(seed)
    report = run_coverage(spec, seed, workers_or_default(workers))

    target = out_dir(out)
    name = f"coverage_{spec.case.value}"
    outputs = [
        write_coverage_report(report, target / f"{name}.csv"),
        write_json(report, target / f"{name}.json"),
    ]
    write_manifest(target, "coverage", seed, config, outputs)

    def fmt(value):
        return "-" if value is None else f"{100 * value:.1f}%"

    table(
        f"Coverage {spec.case.value} ({report.repetitions} repetitions, "
        f"{report.dropped} dropped)",
        ["parameter", "normal", "t", "normal (noise only)", "t (noise only)"],
        [
            [
                p.name,
                fmt(p.normal),
                fmt(p.student_t),
                fmt(p.normal_noise_only),
                fmt(p.student_t_noise_only),
            ]
            for p in report.parameters
        ],
    )
