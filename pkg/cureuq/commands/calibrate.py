import logging
from pathlib import Path
from typing import Annotated, Optional

import numpy as np
import typer

from cureuq.commands._common import OutOption, out_dir, table
from cureuq.config import settings
from cureuq.core.pipeline import order_steps, run_pipeline_nls
from cureuq.schemas.calibration import PipelineConfig
from cureuq.storage import (
    fit_summary,
    load_datasets,
    load_yaml,
    write_json,
    write_manifest,
)

logger = logging.getLogger(__name__)

router = typer.Typer()


@router.command("calibrate", help="Calibrate every pipeline step by NLS")
def calibrate(
    config: Annotated[Path, typer.Option("--config", help="Pipeline YAML")],
    data: Annotated[
        Optional[Path], typer.Option("--data", help="Dataset directory")
    ] = None,
    out: OutOption = None,
):
    """
    Калибрует шаги конвейера в порядке зависимостей без переноса
    неопределённости.

    Результат:
    - <step>_fit.json с κ*, Δκ_NLS, σ̂² и числом итераций на каждый шаг;
    - manifest.json.
    """
    pipeline = load_yaml(config, PipelineConfig)
    data_dir = data or pipeline.data_dir or settings.data_dir
    steps = order_steps(pipeline.steps)
    datasets = load_datasets(steps, data_dir)
    fits = run_pipeline_nls(steps, datasets, options=pipeline.nls)

    target = out_dir(out)
    outputs, rows = [], []
    for step_id, fit in fits.items():
        outputs.append(write_json(fit_summary(fit), target / f"{step_id}_fit.json"))
        std = np.sqrt(np.diag(fit.covariance)) if fit.covariance is not None else None
        for i, name in enumerate(fit.names):
            rows.append(
                [
                    step_id,
                    name,
                    float(fit.kappa_star[i]),
                    "-" if std is None else float(std[i]),
                ]
            )
    write_manifest(target, "calibrate", pipeline.seed, config, outputs)
    table("NLS calibration", ["step", "parameter", "κ*", "Δκ_NLS"], rows)
    logger.info("Wrote %d step results to %s", len(outputs), target)
