import logging
from enum import Enum
from typing import Annotated, Optional

import typer

from cureuq import presets
from cureuq.commands._common import (
    OutOption,
    SeedOption,
    out_dir,
    seed_or_default,
)
from cureuq.commands.coverage import NoiseKind, noise_for
from cureuq.core.coverage import generate_pipeline_data, insilico_files
from cureuq.core.stats import spawn_rng
from cureuq.schemas.calibration import PipelineConfig
from cureuq.schemas.coverage import CaseId, CoverageCase
from cureuq.storage import dump_yaml, write_dataset, write_manifest

logger = logging.getLogger(__name__)

router = typer.Typer()


class DataCase(str, Enum):
    SPARSE_TG = "sparse_tg"
    KINETICS = "kinetics"
    HEAT_CAPACITY = "heat_capacity"
    PIPELINE = "pipeline"


@router.command("gen-data", help="Write in-silico calibration datasets as CSV")
def gen_data(
    case: Annotated[DataCase, typer.Option("--case")] = DataCase.PIPELINE,
    n_d: Annotated[Optional[int], typer.Option("--nd", min=2)] = None,
    noise: Annotated[NoiseKind, typer.Option("--noise")] = NoiseKind.GAUSSIAN,
    sigma: Annotated[Optional[float], typer.Option("--sigma")] = None,
    noise_scale: Annotated[
        float,
        typer.Option("--noise-scale", min=0, help="Noise multiplier for 'pipeline'"),
    ] = 1.0,
    clean: Annotated[
        bool, typer.Option("--clean", help="Write noise-free data")
    ] = False,
    seed: SeedOption = None,
    out: OutOption = None,
):
    """
    Данные экспериментов in silico при эталонных параметрах.

    Для случаев покрытия файлы совпадают с данными первого пилотного
    повторения generate_insilico при том же зерне; для pipeline рядом
    пишется pipeline.yaml с шагами по умолчанию.
    """
    seed = seed_or_default(seed)
    rng = spawn_rng(seed, 0)
    truth = presets.reference_material()
    target = out_dir(out)
    if case is DataCase.PIPELINE:
        files = generate_pipeline_data(truth, rng, 0.0 if clean else noise_scale)
    else:
        case_id = CaseId(case.value)
        fields = {
            "case": case_id,
            "noise": noise_for(case_id, noise, sigma),
            "n_cov": 1,
        }
        if n_d is not None:
            fields["n_d_tg" if case_id is CaseId.SPARSE_TG else "n_d"] = n_d
        files = insilico_files(CoverageCase.model_validate(fields), truth, rng, clean)

    outputs = [
        write_dataset(data, target / name) for name, data in sorted(files.items())
    ]
    if case is DataCase.PIPELINE:
        config = PipelineConfig(
            steps=presets.default_pipeline_steps(), data_dir=target, seed=seed
        )
        outputs.append(dump_yaml(config, target / "pipeline.yaml"))
    write_manifest(target, f"gen-data:{case.value}", seed, None, outputs)
    logger.info("Wrote %d files to %s", len(outputs), target)
