from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from loguru import logger as log

from pmnet.core.config import make_config
from pmnet.core.errors import ConfigError
from pmnet.core.utils.chat_formatting import render_table
from pmnet.models.reports import MetricReport
from pmnet.models.run import RunConfig
from pmnet.synthgen.records import SyntheticProcedure
from pmnet.synthgen.storage import read_dataset

from .trainer import Trainer

__all__ = ["VARIANTS", "DEFAULT_VARIANTS", "variant_config", "AblationResult", "run_ablation", "run_ablation_on", "format_ablation"]

# each variant switches one component off; everything else, seed included, is shared
VARIANTS: dict[str, dict[str, Any]] = {
    "full": {},
    "no_mte": {"n_swaps": 0, "masking": False},
    "no_swap": {"n_swaps": 0},
    "no_mask": {"masking": False},
    "no_ssm": {"use_ssm": False},
    "no_cps": {"lambda_cl": 0.0},
    "no_pooling": {"use_pooling": False},
    "no_region": {"use_region": False},
}
DEFAULT_VARIANTS = ("full", "no_mte", "no_ssm", "no_cps")


def variant_config(base: RunConfig, name: str) -> RunConfig:
    if name not in VARIANTS:
        msg = f"unknown ablation variant {name!r}; choose from {', '.join(VARIANTS)}"
        raise ConfigError(msg)
    return make_config(base.dict(), **VARIANTS[name])


@dataclass
class AblationResult:
    variant: str
    report: Optional[MetricReport]
    checkpoint: Optional[Path] = None

    @property
    def macro_jaccard(self) -> Optional[float]:
        return self.report.macro_jaccard if self.report is not None else None


def run_ablation(
    base: RunConfig,
    train_procedures: Sequence[SyntheticProcedure],
    val_procedures: Sequence[SyntheticProcedure],
    *,
    variants: Sequence[str] = DEFAULT_VARIANTS,
    out_dir: Optional[Path] = None,
    epochs: Optional[int] = None,
) -> list[AblationResult]:
    """Train each variant from the same seed and report its best validation scores."""
    configs = {name: variant_config(base, name) for name in variants}
    results = []
    for name, config in configs.items():
        log.info("Ablation variant {}", name)
        out = Path(out_dir) / f"{name}.pt" if out_dir is not None else None
        if out is not None:
            out.parent.mkdir(parents=True, exist_ok=True)
        fit = Trainer(config, train_procedures, val_procedures).fit(out, epochs=epochs)
        results.append(AblationResult(variant=name, report=fit.best_report, checkpoint=out))
    return results


def run_ablation_on(base: RunConfig, dataset_root: Path, **kwargs: Any) -> list[AblationResult]:
    return run_ablation(base, read_dataset(dataset_root, "train"), read_dataset(dataset_root, "val"), **kwargs)


def format_ablation(results: Sequence[AblationResult]) -> str:
    rows = []
    for r in results:
        rep = r.report
        eff = rep.effectiveness if rep is not None else None
        rows.append(
            [
                r.variant,
                r.macro_jaccard,
                rep.accuracy if rep is not None else None,
                eff.accuracy if eff is not None else None,
                eff.jaccard if eff is not None else None,
            ],
        )
    return render_table(rows, ["variant", "macro jaccard", "accuracy", "effect accuracy", "effect jaccard"])
