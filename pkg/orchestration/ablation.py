"""
Recipe ablation: a baseline run plus one run per disabled ingredient.

Runs share the data directory and run directory; outputs are namespaced by
the ingredient, so the resolved configs of a row and the baseline differ in
exactly one recipe switch.
"""

import csv
import logging
import math
from pathlib import Path
from typing import Sequence, Union

from pydantic import BaseModel, Field

from config.models import RecipeSwitches, RunConfig
from orchestration.errors import ConfigError
from orchestration.workflow import RunLayout, decode, score, train_model

logger = logging.getLogger(__name__)

BASELINE = "baseline"
ABLATION_COLUMNS = ["ingredient", "token_error", "wer", "errors"]


class AblationRow(BaseModel):
    """Outcome of one training run of the ablation table."""

    ingredient: str = Field(..., description="Disabled ingredient, or baseline")
    token_error: float = Field(..., description="Held-out token error rate after the last epoch")
    wer: float = Field(..., ge=0, description="Test word error rate")
    errors: int = Field(..., ge=0, description="Absolute word errors on the test set")


def ingredients() -> list[str]:
    return list(RecipeSwitches.model_fields)


def ablation_config(config: RunConfig, ingredient: str) -> RunConfig:
    """
    `config` with one recipe switch turned off.

    Raises:
        ConfigError: If the ingredient is unknown
    """
    if ingredient not in RecipeSwitches.model_fields:
        raise ConfigError(f"Unknown ingredient {ingredient!r}; choose from {ingredients()}")
    recipe = RecipeSwitches.model_validate({**config.recipe.model_dump(), ingredient: False})
    return config.model_copy(update={"recipe": recipe})


def run_one(config: RunConfig, tag: str, split: str, workers: int) -> AblationRow:
    records = train_model(config, tag=tag)
    decode(config, split=split, no_lm=True, tag=tag, workers=workers)
    report = score(config, split=split, tag=tag, workers=workers)
    ter = records[-1].token_error_rate
    row = AblationRow(
        ingredient=tag,
        token_error=ter if ter is not None else math.nan,
        wer=report.wer,
        errors=report.errors,
    )
    logger.info(f"[{tag}] token error {row.token_error:.4f}, WER {row.wer:.2%} ({row.errors} errors)")
    return row


def run_ablation(config: RunConfig, off: Sequence[str] = (), split: str = "test", workers: int = 1) -> list[AblationRow]:
    """
    Train and score the baseline and every single-ingredient-off variant.

    Args:
        off: Ingredients to disable one at a time (all when empty)
    """
    chosen = list(off) or ingredients()
    variants = [(name, ablation_config(config, name)) for name in chosen]
    rows = [run_one(config, BASELINE, split, workers)]
    for name, variant in variants:
        rows.append(run_one(variant, name, split, workers))
    write_ablation_csv(RunLayout.from_config(config).reports / "ablation.csv", rows)
    return rows


def write_ablation_csv(path: Union[str, Path], rows: Sequence[AblationRow]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(ABLATION_COLUMNS)
        for row in rows:
            writer.writerow([row.ingredient, f"{row.token_error:.6f}", f"{row.wer:.6f}", row.errors])
    return path
