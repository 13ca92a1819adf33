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
    workers_or_default,
)
from cureuq.core.forward_uq import FORWARD_STEPS, run_study
from cureuq.schemas.calibration import Method
from cureuq.schemas.simulation import ScenarioConfig
from cureuq.schemas.uq import ForwardStudy, StudyMode
from cureuq.storage import (
    load_yaml,
    read_parameter_sets,
    write_json,
    write_manifest,
    write_uq_result,
)

logger = logging.getLogger(__name__)

router = typer.Typer()


class ForwardMethod(str, Enum):
    FOSM = "fosm"
    MC = "mc"
    BOTH = "both"


@router.command("forward-uq", help="Forward uncertainty propagation")
def forward_uq(
    mode: Annotated[StudyMode, typer.Option("--mode")] = StudyMode.CASE_I,
    k: Annotated[
        Optional[float], typer.Option("--k", min=0, help="Variance inflation factor")
    ] = None,
    n_mc: Annotated[Optional[int], typer.Option("--nmc", min=2)] = None,
    method: Annotated[ForwardMethod, typer.Option("--method")] = ForwardMethod.BOTH,
    scenario: Annotated[
        Optional[Path], typer.Option("--scenario", help="ScenarioConfig YAML")
    ] = None,
    h_c: Annotated[
        Optional[float], typer.Option("--h-c", min=0, help="Reaction enthalpy [J/kg]")
    ] = None,
    sets: Annotated[
        Optional[Path],
        typer.Option("--sets", help="Directory written by 'propagate'"),
    ] = None,
    probes: Annotated[
        Optional[list[str]], typer.Option("--probe", help="Probe name, repeatable")
    ] = None,
    grid_points: Annotated[int, typer.Option("--grid-points", min=2)] = 2000,
    seed: SeedOption = None,
    workers: WorkersOption = None,
    out: OutOption = None,
):
    """
    Случаи I–III: неопределённость параметров материала (с коэффициентом k)
    или граничных условий.

    Результат:
    - forward_<mode>_<method>.csv (t, среднее и σ для Θ и c каждой пробы);
    - forward_<mode>_<method>.json и manifest.json.
    """
    study = ForwardStudy(
        mode=mode,
        k=k,
        n_mc=n_mc,
        seed=seed_or_default(seed),
        probes=probes or ["top"],
        grid_points=grid_points,
    )
    config = load_yaml(scenario, ScenarioConfig) if scenario else ScenarioConfig()
    if h_c is not None:
        config = config.model_copy(update={"h_c": h_c})
    parameter_sets = read_parameter_sets(sets, FORWARD_STEPS) if sets else None

    methods = [Method.FOSM, Method.MC]
    if method is not ForwardMethod.BOTH:
        methods = [Method(method.value)]
    target = out_dir(out)
    outputs = []
    for chosen in methods:
        result = run_study(
            study, config, chosen, parameter_sets, workers_or_default(workers)
        )
        name = f"forward_{mode.value}_{chosen.value}"
        outputs.append(write_uq_result(result, target / f"{name}.csv"))
        outputs.append(write_json(result, target / f"{name}.json"))
        logger.info(
            "%s: %d evaluations, %d failed", name, result.evaluations, result.failed
        )
    write_manifest(target, f"forward-uq:{mode.value}", study.seed, scenario, outputs)
