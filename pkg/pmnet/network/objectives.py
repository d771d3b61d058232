from __future__ import annotations

import math
from collections.abc import Collection
from dataclasses import dataclass
from typing import Optional, Union

import torch
from loguru import logger as log
from torch import Tensor

from pmnet.core.errors import NumericError

from .prototypes import PrototypeBank

__all__ = ["LossReport", "euclid", "contrastive_term", "contrastive_loss", "cross_entropy", "total_loss"]

Scalar = Union[Tensor, float]
LOG_CLAMP = 1e-12


def euclid(u: Tensor, v: Tensor) -> Tensor:
    return torch.linalg.vector_norm(u - v, dim=-1)


def contrastive_term(f: Tensor, p_label: Tensor, p_pred: Tensor, margin: float = 1.0) -> Tensor:
    """Pull ``f`` onto its label prototype, push it out of ``margin`` around the predicted one."""
    pull = 0.5 * euclid(f, p_label) ** 2
    push = 0.5 * torch.clamp(margin - euclid(f, p_pred), min=0.0) ** 2
    return pull + push


def contrastive_loss(
    pooled: Tensor,
    labels: Tensor,
    predictions: Tensor,
    bank: PrototypeBank,
    *,
    pair: Optional[Collection[int]] = None,
) -> tuple[Tensor, int]:
    """Mean contrastive term over the false-positive clips in ``pooled`` ``(n, c)``.

    Clips whose label or predicted prototype is uninitialized are skipped, as are
    pairs outside ``pair`` when a pair restriction is given.

    Returns
    -------
    tuple[Tensor, int]
        The loss (0 without usable false positives) and how many clips contributed.

    """
    labels = labels.reshape(-1)
    predictions = predictions.reshape(-1)
    pooled = pooled.reshape(labels.shape[0], -1)
    fp = labels != predictions
    if pair is not None:
        allowed = torch.tensor(sorted(pair), device=labels.device)
        fp &= torch.isin(labels, allowed) & torch.isin(predictions, allowed)
    usable = fp & bank.initialized[labels] & bank.initialized[predictions]
    skipped = int((fp & ~usable).sum())
    if skipped:
        log.debug("Skipped {} false positives with uninitialized prototypes", skipped)
    n = int(usable.sum())
    if n == 0:
        return pooled.sum() * 0.0, 0
    protos = bank.prototypes.to(pooled.dtype)
    terms = contrastive_term(pooled[usable], protos[labels[usable]], protos[predictions[usable]])
    return terms.sum() / n, n


def cross_entropy(probs: Tensor, labels: Tensor) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under ``(n, K)`` ``probs``."""
    picked = probs.gather(-1, labels.reshape(-1, 1).long()).squeeze(-1)
    return -torch.log(picked.clamp_min(LOG_CLAMP)).mean()


@dataclass
class LossReport:
    ce_phase: Scalar
    ce_effect: Scalar
    contrastive: Scalar
    total: Scalar
    lambda_cl: float = 0.1

    def as_floats(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in ("ce_phase", "ce_effect", "contrastive", "total")}


def _is_finite(value: Scalar) -> bool:
    if isinstance(value, Tensor):
        return bool(torch.isfinite(value).all())
    return math.isfinite(value)


def total_loss(ce_phase: Scalar, ce_effect: Scalar, contrastive: Scalar, lambda_cl: float = 0.1) -> LossReport:
    """Compose the training objective.

    Raises
    ------
    NumericError
        Naming the first term that is not finite.

    """
    for name, value in (("ce_phase", ce_phase), ("ce_effect", ce_effect), ("contrastive", contrastive)):
        if not _is_finite(value):
            msg = f"loss term {name} is not finite ({float(value)!r})"
            raise NumericError(msg, term=name)
    total = ce_phase + ce_effect + lambda_cl * contrastive
    return LossReport(ce_phase=ce_phase, ce_effect=ce_effect, contrastive=contrastive, total=total, lambda_cl=lambda_cl)
