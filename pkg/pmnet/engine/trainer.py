from __future__ import annotations

import random
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import torch
from loguru import logger as log
from torch.utils.data import DataLoader, RandomSampler

from pmnet.core.errors import ConfigError
from pmnet.core.utils._internal_utils import make_progress
from pmnet.core.utils.chat_formatting import format_value, humanize_number
from pmnet.models.reports import MetricReport
from pmnet.models.run import RunConfig
from pmnet.network.mte import MaskStats
from pmnet.network.model import PmNet
from pmnet.network.objectives import LossReport, contrastive_loss, cross_entropy, total_loss
from pmnet.synthgen.records import SyntheticProcedure
from pmnet.synthgen.storage import read_dataset

from .checkpoint import last_checkpoint_path, save_checkpoint
from .recognizer import evaluate
from .windows import WindowDataset, clip_majority

__all__ = ["seed_everything", "Trainer", "TrainResult", "train"]


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


@dataclass
class TrainResult:
    checkpoint: Optional[Path]
    history: list[dict[str, Any]] = field(default_factory=list)
    best_jaccard: Optional[float] = None
    best_report: Optional[MetricReport] = None


class Trainer:
    """Owns the model, optimizer and prototype bank for one training run.

    Parameters
    ----------
    config : RunConfig
        Hyperparameters and ablation switches.
    train_procedures : Sequence[SyntheticProcedure]
        Windows are sampled from these.
    val_procedures : Sequence[SyntheticProcedure]
        Scored after each ``val_every`` epochs; the train split stands in when empty.

    """

    def __init__(self, config: RunConfig, train_procedures: Sequence[SyntheticProcedure], val_procedures: Sequence[SyntheticProcedure] = ()) -> None:
        if not train_procedures:
            msg = "cannot train without procedures in the train split"
            raise ConfigError(msg)
        seed_everything(config.seed)
        self.config = config
        self.device = torch.device(config.device)
        self.model = PmNet.from_config(config).to(self.device)
        self.optimizer = torch.optim.AdamW(self.model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay)
        self.train_set = WindowDataset(train_procedures, config, augment=True)
        self.val_procedures = list(val_procedures) or list(train_procedures)
        self.pair = config.contrastive_phases
        self.epoch = 0
        self.history: list[dict[str, Any]] = []
        log.info("Model has {} parameters", humanize_number(self.model.n_parameters))

    def loader(self, epoch: int) -> DataLoader:
        self.train_set.set_epoch(epoch)
        generator = torch.Generator().manual_seed(self.config.seed * 1_000_003 + epoch)
        sampler = RandomSampler(self.train_set, replacement=True, num_samples=self.config.steps_per_epoch * self.config.batch_size, generator=generator)
        return DataLoader(self.train_set, batch_size=self.config.batch_size, sampler=sampler, num_workers=self.config.num_workers)

    def train_step(self, batch: dict[str, torch.Tensor]) -> tuple[LossReport, MaskStats]:
        cfg = self.config
        model = self.model
        dtype = model.dtype
        images = batch["images"].to(self.device, dtype)
        boxes = batch["boxes"].to(self.device)
        phases = batch["phases"].to(self.device)
        clip_labels = clip_majority(phases, cfg.clip_width)

        out = model(images, boxes if cfg.use_region else None, clip_labels)
        real = out.frame_mask
        logits = out.phase_logits[:, real, :]
        ce_phase = cross_entropy(torch.softmax(logits, dim=-1).reshape(-1, logits.shape[-1]), phases.reshape(-1))

        has_effect = batch["has_effect"].to(self.device)
        if bool(has_effect.any()):
            effect_probs = torch.softmax(out.effect_logits[has_effect], dim=-1)
            ce_effect = cross_entropy(effect_probs, batch["effect"].to(self.device)[has_effect])
        else:
            ce_effect = out.effect_logits.sum() * 0.0

        clip_preds = out.clip_logits.argmax(dim=-1)
        tp = clip_preds == clip_labels
        model.bank.accumulate_tp(out.clip_pooled[tp], clip_labels[tp])
        if cfg.lambda_cl > 0:
            contrastive, _ = contrastive_loss(out.clip_pooled, clip_labels, clip_preds, model.bank, pair=self.pair)
        else:
            contrastive = out.clip_pooled.sum() * 0.0

        report = total_loss(ce_phase, ce_effect, contrastive, cfg.lambda_cl)
        self.optimizer.zero_grad(set_to_none=True)
        report.total.backward()
        self.optimizer.step()
        return report, model.mte.last_mask_stats if cfg.masking else MaskStats()

    def train_epoch(self, epoch: int) -> dict[str, float]:
        self.model.train()
        totals: dict[str, float] = {}
        stats = MaskStats()
        n = 0
        with make_progress() as bar:
            task = bar.add_task(f"epoch {epoch}", total=self.config.steps_per_epoch)
            for batch in self.loader(epoch):
                report, step_stats = self.train_step(batch)
                for key, value in report.as_floats().items():
                    totals[key] = totals.get(key, 0.0) + value
                stats = stats.merge(step_stats)
                n += 1
                bar.advance(task)
        updated = self.model.bank.flush_ema()
        means = {key: value / max(n, 1) for key, value in totals.items()}
        log.info(
            "epoch {} loss {:.4f} (phase {:.4f}, effect {:.4f}, contrastive {:.4f}); prototypes updated for {} phases",
            epoch,
            means.get("total", 0.0),
            means.get("ce_phase", 0.0),
            means.get("ce_effect", 0.0),
            means.get("contrastive", 0.0),
            len(updated),
        )
        if stats.n_clips:
            log.info(
                "epoch {} masked {:.1%} of clips, {:.1%} of those labelled Knotting/Releasing",
                epoch,
                stats.masked_fraction,
                stats.blocking_masked_fraction,
            )
        return means

    def validate(self) -> MetricReport:
        report, _ = evaluate(self.model, self.val_procedures, progress=False)
        self.model.train()
        return report

    def fit(self, out: Optional[Path] = None, *, epochs: Optional[int] = None) -> TrainResult:
        """Train for ``epochs`` (default from config), keeping the best validation checkpoint at ``out``."""
        epochs = self.config.epochs if epochs is None else epochs
        result = TrainResult(checkpoint=Path(out) if out is not None else None)
        for epoch in range(epochs):
            self.epoch = epoch
            record: dict[str, Any] = {"epoch": epoch, **self.train_epoch(epoch)}
            is_last = epoch == epochs - 1
            if (epoch + 1) % self.config.val_every == 0 or is_last:
                report = self.validate()
                record["val_macro_jaccard"] = report.macro_jaccard
                record["val_accuracy"] = report.accuracy
                log.info("epoch {} validation macro Jaccard {} accuracy {}", epoch, format_value(report.macro_jaccard), format_value(report.accuracy))
                score = report.macro_jaccard if report.macro_jaccard is not None else -1.0
                if result.best_jaccard is None or score > result.best_jaccard:
                    result.best_jaccard = score
                    result.best_report = report
                    if out is not None:
                        save_checkpoint(out, self.model, optimizer=self.optimizer, epoch=epoch, history=self.history + [record], best_jaccard=score)
            self.history.append(record)
            if out is not None:
                save_checkpoint(last_checkpoint_path(out), self.model, optimizer=self.optimizer, epoch=epoch, history=self.history, best_jaccard=result.best_jaccard)
        result.history = list(self.history)
        return result


def train(config: RunConfig, dataset_root: Path, out: Path, *, epochs: Optional[int] = None) -> TrainResult:
    """Train on the ``train`` split of a dataset directory and validate on ``val``."""
    train_procs = read_dataset(dataset_root, "train")
    val_procs = read_dataset(dataset_root, "val")
    log.info("Training on {} procedures, validating on {}", len(train_procs), len(val_procs) or len(train_procs))
    trainer = Trainer(config, train_procs, val_procs)
    return trainer.fit(out, epochs=epochs)
