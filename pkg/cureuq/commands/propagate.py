import logging
from pathlib import Path
from typing import Annotated, Optional

import numpy as np
import typer

from cureuq.commands._common import (
    OutOption,
    SeedOption,
    WorkersOption,
    out_dir,
    table,
    workers_or_default,
)
from cureuq.config import settings
from cureuq.core.pipeline import run_pipeline
from cureuq.schemas.calibration import Method, PipelineConfig
from cureuq.storage import (
    load_datasets,
    load_yaml,
    write_manifest,
    write_parameter_set,
)

logger = logging.getLogger(__name__)

router = typer.Typer()


@router.command("propagate", help="Calibrate the pipeline and propagate uncertainty")
def propagate(
    config: Annotated[Path, typer.Option("--config", help="Pipeline YAML")],
    data: Annotated[
        Optional[Path], typer.Option("--data", help="Dataset directory")
    ] = None,
    method: Annotated[
        Optional[Method], typer.Option("--method", help="nls, fosm or mc")
    ] = None,
    n_mc: Annotated[
        Optional[int], typer.Option("--nmc", min=2, help="Monte Carlo sample size")
    ] = None,
    seed: SeedOption = None,
    workers: WorkersOption = None,
    out: OutOption = None,
):
    """
    Калибровка и перенос неопределённости по всем шагам.

    Результат:
    - <step>.json с κ, C_noise, C_prop и C_total;
    - для mc дополнительно <step>_samples.csv и <step>_sample_covariances.csv;
    - manifest.json.
    """
    pipeline = load_yaml(config, PipelineConfig)
    method = method or pipeline.method
    seed = pipeline.seed if seed is None else seed
    data_dir = data or pipeline.data_dir or settings.data_dir
    datasets = load_datasets(pipeline.steps, data_dir)
    sets = run_pipeline(
        pipeline.steps,
        datasets,
        method=method,
        n_mc=n_mc or pipeline.n_mc,
        seed=seed,
        options=pipeline.nls,
        workers=workers_or_default(workers),
    )

    target = out_dir(out)
    outputs, rows = [], []
    for uset in sets.values():
        outputs.extend(write_parameter_set(uset, target))
        noise = np.sqrt(np.diag(uset.covariance_noise))
        total = np.sqrt(np.diag(uset.covariance_total))
        for i, name in enumerate(uset.names):
            rows.append(
                [
                    uset.step,
                    name,
                    float(uset.values[i]),
                    float(noise[i]),
                    float(total[i]),
                ]
            )
    write_manifest(target, f"propagate:{Method(method).value}", seed, config, outputs)
    table(
        f"Pipeline ({Method(method).value})",
        ["step", "parameter", "κ", "Δκ noise", "δκ total"],
        rows,
    )
