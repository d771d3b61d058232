from __future__ import annotations

import math
from typing import Optional

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from pmnet.core.errors import ConfigError, NumericError

__all__ = ["SelectiveScan", "selective_scan_seq", "selective_scan_chunked", "segsum", "check_finite"]


def check_finite(name: str, value: Tensor, *, channel_dim: Optional[int] = None) -> None:
    """Raise NumericError for a non-finite tensor, naming the first bad channel."""
    bad = ~torch.isfinite(value)
    if not bad.any():
        return
    channel = None
    if channel_dim is not None:
        per_channel = bad.movedim(channel_dim, -1).reshape(-1, value.shape[channel_dim]).any(dim=0)
        channel = int(per_channel.nonzero()[0])
    where = f" in channel {channel}" if channel is not None else ""
    msg = f"non-finite scan parameter {name}{where}"
    raise NumericError(msg, term=name, channel=channel)


def _check_params(delta: Tensor, A: Tensor, B: Tensor, C: Tensor, D: Tensor) -> None:
    check_finite("A", A, channel_dim=0)
    check_finite("D", D, channel_dim=0)
    check_finite("delta", delta, channel_dim=-1)
    check_finite("B", B)
    check_finite("C", C)


def selective_scan_seq(x: Tensor, delta: Tensor, A: Tensor, B: Tensor, C: Tensor, D: Tensor, h0: Optional[Tensor] = None) -> tuple[Tensor, Tensor]:
    """Reference selective scan, one timestep at a time.

    Parameters
    ----------
    x, delta : Tensor
        ``(..., T, c)`` input and positive step sizes.
    A : Tensor
        ``(c, s)`` negative state decay rates.
    B, C : Tensor
        ``(..., T, s)`` input and output projections.
    D : Tensor
        ``(c,)`` skip gain.
    h0 : Optional[Tensor]
        ``(..., c, s)`` carried state, zeros if omitted.

    Returns
    -------
    tuple[Tensor, Tensor]
        Outputs ``(..., T, c)`` and the final state ``(..., c, s)``.

    Raises
    ------
    NumericError
        If any parameter is not finite.

    """
    _check_params(delta, A, B, C, D)
    if h0 is None:
        h0 = x.new_zeros((*x.shape[:-2], x.shape[-1], A.shape[-1]))
    h = h0
    ys = []
    for t in range(x.shape[-2]):
        d_t = delta[..., t, :, None]
        h = torch.exp(d_t * A) * h + d_t * B[..., t, None, :] * x[..., t, :, None]
        ys.append((h * C[..., t, None, :]).sum(dim=-1) + D * x[..., t, :])
    if not ys:
        return x.new_zeros(x.shape), h
    return torch.stack(ys, dim=-2), h


def segsum(x: Tensor) -> Tensor:
    """``out[..., i, j] = x[..., j+1] + ... + x[..., i]`` for ``i >= j``, ``-inf`` above the diagonal.

    Built from a masked cumulative sum rather than differences of prefix sums, so
    large negative decays never subtract into cancellation.

    """
    length = x.shape[-1]
    x = x[..., None].expand(*x.shape, length)
    strict = torch.tril(torch.ones(length, length, dtype=torch.bool, device=x.device), diagonal=-1)
    summed = torch.cumsum(x.masked_fill(~strict, 0), dim=-2)
    lower = torch.tril(torch.ones(length, length, dtype=torch.bool, device=x.device))
    return summed.masked_fill(~lower, float("-inf"))


def selective_scan_chunked(
    x: Tensor,
    delta: Tensor,
    A: Tensor,
    B: Tensor,
    C: Tensor,
    D: Tensor,
    chunk: int,
    h0: Optional[Tensor] = None,
) -> tuple[Tensor, Tensor]:
    """Same recurrence as :func:`selective_scan_seq`, solved in closed form per chunk.

    Each chunk of ``chunk`` steps is computed with one segment-sum decay matrix; the
    state at the end of a chunk is carried into the next.

    """
    if chunk < 1:
        msg = f"scan chunk must be >= 1 (got {chunk})"
        raise ConfigError(msg)
    _check_params(delta, A, B, C, D)
    if h0 is None:
        h0 = x.new_zeros((*x.shape[:-2], x.shape[-1], A.shape[-1]))
    h = h0
    ys = []
    for start in range(0, x.shape[-2], chunk):
        sl = slice(start, start + chunk)
        xs, ds, bs, cs = x[..., sl, :], delta[..., sl, :], B[..., sl, :], C[..., sl, :]
        log_decay = ds[..., :, :, None] * A  # (..., L, c, s)
        drive = ds[..., :, :, None] * bs[..., :, None, :] * xs[..., :, :, None]

        decay = torch.exp(segsum(log_decay.movedim(-3, -1)))  # (..., c, s, L, L)
        inner = (decay * drive.movedim(-3, -1)[..., None, :]).sum(dim=-1).movedim(-1, -3)
        carried = torch.exp(torch.cumsum(log_decay, dim=-3)) * h[..., None, :, :]
        states = inner + carried

        ys.append((states * cs[..., :, None, :]).sum(dim=-1) + D * xs)
        h = states[..., -1, :, :]
    if not ys:
        return x.new_zeros(x.shape), h
    return torch.cat(ys, dim=-2), h


class SelectiveScan(nn.Module):
    """Input-dependent diagonal state-space scan over ``(..., T, c)`` sequences.

    ``A = -exp(A_log)`` and ``delta = softplus(.)`` keep every discretized decay in (0, 1).

    """

    def __init__(self, channels: int, state_dim: int = 16, *, chunk: int = 64, dt_min: float = 1e-3, dt_max: float = 1e-1) -> None:
        super().__init__()
        self.channels = channels
        self.state_dim = state_dim
        self.chunk = chunk
        self.A_log = nn.Parameter(torch.log(torch.arange(1, state_dim + 1, dtype=torch.float32)).repeat(channels, 1))
        self.D = nn.Parameter(torch.ones(channels))
        self.dt_proj = nn.Linear(channels, channels)
        self.B_proj = nn.Linear(channels, state_dim)
        self.C_proj = nn.Linear(channels, state_dim)

        # initial step sizes log-uniform in [dt_min, dt_max]
        with torch.no_grad():
            dt = torch.exp(torch.rand(channels) * (math.log(dt_max) - math.log(dt_min)) + math.log(dt_min))
            self.dt_proj.bias.copy_(dt + torch.log(-torch.expm1(-dt)))

    @property
    def A(self) -> Tensor:
        return -torch.exp(self.A_log)

    def parameters_for(self, x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        return F.softplus(self.dt_proj(x)), self.B_proj(x), self.C_proj(x)

    def forward(self, x: Tensor, h0: Optional[Tensor] = None, *, sequential: bool = False) -> tuple[Tensor, Tensor]:
        delta, B, C = self.parameters_for(x)
        if sequential:
            return selective_scan_seq(x, delta, self.A, B, C, self.D, h0)
        return selective_scan_chunked(x, delta, self.A, B, C, self.D, self.chunk, h0)
