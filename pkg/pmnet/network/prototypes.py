from __future__ import annotations

import torch
from loguru import logger as log
from torch import Tensor, nn

from pmnet.models.synth import N_PHASES, PhaseLabel

__all__ = ["PrototypeBank"]


class PrototypeBank(nn.Module):
    """Per-phase feature prototypes, moved by an exponential moving average of true positives.

    Everything lives in buffers, so the bank is saved with the model state and never
    receives gradients. Accumulated true positives only reach the prototypes on
    :meth:`flush_ema`.

    """

    prototypes: Tensor
    initialized: Tensor
    tp_sum: Tensor
    tp_count: Tensor

    def __init__(self, channels: int, alpha: float = 0.99, n_phases: int = N_PHASES) -> None:
        super().__init__()
        self.alpha = alpha
        self.register_buffer("prototypes", torch.zeros(n_phases, channels))
        self.register_buffer("initialized", torch.zeros(n_phases, dtype=torch.bool))
        self.register_buffer("tp_sum", torch.zeros(n_phases, channels))
        self.register_buffer("tp_count", torch.zeros(n_phases, dtype=torch.long))

    @property
    def ready(self) -> bool:
        """True once every phase has a prototype."""
        return bool(self.initialized.all())

    @torch.no_grad()
    def accumulate_tp(self, pooled: Tensor, phases: Tensor) -> None:
        """Add true-positive pooled clip features ``(n, c)`` with labels ``(n,)``."""
        pooled = pooled.detach().reshape(-1, self.prototypes.shape[-1]).to(self.tp_sum.dtype)
        phases = torch.as_tensor(phases, device=self.tp_count.device).reshape(-1).long()
        self.tp_sum.index_add_(0, phases, pooled)
        self.tp_count.index_add_(0, phases, torch.ones_like(phases))

    @torch.no_grad()
    def flush_ema(self) -> list[int]:
        """Fold the accumulated means into the prototypes and clear the buffers.

        The first flush of a phase sets its prototype to the mean outright.
        Returns the phases that were updated.

        """
        updated = []
        for j in range(self.prototypes.shape[0]):
            n = int(self.tp_count[j])
            if n == 0:
                continue
            mean = self.tp_sum[j] / n
            if self.initialized[j]:
                self.prototypes[j] = (1.0 - self.alpha) * mean + self.alpha * self.prototypes[j]
            else:
                self.prototypes[j] = mean
                self.initialized[j] = True
            updated.append(j)
        missing = [PhaseLabel(j).display_name for j in range(self.prototypes.shape[0]) if not self.initialized[j]]
        if missing:
            log.debug("Prototypes still uninitialized: {}", ", ".join(missing))
        self.tp_sum.zero_()
        self.tp_count.zero_()
        return updated

    @torch.no_grad()
    def set_prototypes(self, prototypes: Tensor, initialized: Tensor | None = None) -> None:
        self.prototypes.copy_(prototypes)
        self.initialized.copy_(torch.ones_like(self.initialized) if initialized is None else initialized)

    def extra_repr(self) -> str:
        return f"n_phases={self.prototypes.shape[0]}, channels={self.prototypes.shape[1]}, alpha={self.alpha}"
