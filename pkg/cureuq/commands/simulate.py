import logging
from pathlib import Path
from typing import Annotated, Optional

import typer

from cureuq.commands._common import OutOption, out_dir
from cureuq.core.simulate import run_default_scenario
from cureuq.schemas.simulation import ScenarioConfig
from cureuq.storage import load_yaml, write_manifest, write_sim_result

logger = logging.getLogger(__name__)

router = typer.Typer()


@router.command("simulate", help="Run the thermo-chemical curing simulation")
def simulate(
    config: Annotated[
        Optional[Path], typer.Option("--config", help="ScenarioConfig YAML")
    ] = None,
    h_c: Annotated[
        Optional[float],
        typer.Option("--h-c", min=0, help="Specific reaction enthalpy [J/kg]"),
    ] = None,
    out: OutOption = None,
):
    """
    Полный путь отверждения в сценарии по умолчанию.

    Результат:
    - probe_<name>.csv (t, Θ, c), steps.csv (принятые шаги), snapshots.csv;
    - manifest.json.

    Исключения:
    - ConfigurationError, если h_c не задана ни в файле, ни опцией.
    """
    scenario = load_yaml(config, ScenarioConfig) if config else ScenarioConfig()
    overrides = {"h_c": h_c} if h_c is not None else {}
    result = run_default_scenario(scenario, **overrides)

    target = out_dir(out)
    outputs = write_sim_result(result, target)
    write_manifest(target, "simulate", None, config, outputs)
    logger.info(
        "Accepted %d steps (%d rejected), dt from %.3g s to %.3g s",
        result.dt.size,
        result.rejected,
        result.dt.min(),
        result.dt.max(),
    )
