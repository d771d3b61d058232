from __future__ import annotations

from collections.abc import Iterable
from typing import Optional

import numpy as np
from loguru import logger as log

from pmnet.core.errors import ConfigError
from pmnet.core.utils import run_threaded
from pmnet.models.synth import BLOCKING_PHASES, N_PHASES, GeneratorParams, PhaseLabel

from .records import SyntheticProcedure
from .render import ProcedureStyle, render_frames

__all__ = ["segment_lengths", "frame_timestamps", "ineffective_indices", "generate_procedure", "generate_procedures", "procedure_id"]

_INEFFECTIVE_STREAM = 0x1E


def procedure_id(index: int) -> str:
    return f"proc{index:03d}"


def _procedure_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def _largest_remainder(shares: np.ndarray, total: int) -> np.ndarray:
    raw = shares * total
    counts = np.floor(raw).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def segment_lengths(n_frames: int, params: GeneratorParams, rng: np.random.Generator) -> np.ndarray:
    """Split ``n_frames`` into the five contiguous phase segments.

    Shares are drawn from a Dirichlet around ``phase_fractions`` and rounded with the
    largest-remainder method, so the lengths always sum to ``n_frames``. Every phase
    keeps at least one frame, and Knotting plus Releasing are topped up to
    ``min_blocking_frames`` from the longest other phase.

    """
    fractions = np.asarray(params.phase_fractions, dtype=np.float64)
    shares = np.zeros(N_PHASES)
    positive = fractions > 0
    shares[positive] = rng.dirichlet(params.concentration * fractions[positive])
    lengths = _largest_remainder(shares, n_frames)

    for phase in range(N_PHASES):
        if lengths[phase] == 0:
            lengths[int(np.argmax(lengths))] -= 1
            lengths[phase] = 1

    blocking = [int(p) for p in (PhaseLabel.KNOTTING, PhaseLabel.RELEASING)]
    others = [p for p in range(N_PHASES) if p not in blocking]
    turn = 0
    while lengths[blocking].sum() < params.min_blocking_frames:
        donor = max(others, key=lambda p: lengths[p])
        if lengths[donor] <= 1:
            msg = f"cannot fit {params.min_blocking_frames} blocking frames into {n_frames}"
            raise ConfigError(msg)
        lengths[donor] -= 1
        lengths[blocking[turn % 2]] += 1
        turn += 1
    return lengths


def frame_timestamps(phases: np.ndarray, params: GeneratorParams) -> np.ndarray:
    """Dual-rate clock: fast sampling inside Knotting/Releasing, slow elsewhere."""
    blocking = np.isin(phases, [int(p) for p in BLOCKING_PHASES])
    step = np.where(blocking, 1.0 / params.high_rate_fps, 1.0 / params.low_rate_fps)
    step[0] = 0.0
    return np.cumsum(step)


def ineffective_indices(params: GeneratorParams) -> frozenset[int]:
    """Procedure indices with ineffective blocking, a pure function of the seed."""
    n = params.n_procedures
    rng = np.random.default_rng(np.random.SeedSequence([params.seed, _INEFFECTIVE_STREAM]))
    return frozenset(int(i) for i in rng.permutation(n)[: params.n_ineffective])


def generate_procedure(params: GeneratorParams, index: int, *, ineffective: Optional[frozenset[int]] = None) -> SyntheticProcedure:
    """Generate procedure ``index``; deterministic given ``(params.seed, index)``.

    Raises
    ------
    ConfigError
        If the parameters are inconsistent or ``index`` is out of range.

    """
    params.check()
    if not 0 <= index < params.n_procedures:
        msg = f"procedure index {index} out of range for {params.n_procedures} procedures"
        raise ConfigError(msg)
    if ineffective is None:
        ineffective = ineffective_indices(params)
    effective_case = index not in ineffective

    rng = _procedure_rng(params.seed, index)
    n_frames = int(rng.integers(params.frames_min, params.frames_max + 1))
    lengths = segment_lengths(n_frames, params, rng)
    phases = np.repeat(np.arange(N_PHASES, dtype=np.int64), lengths)
    t_seconds = frame_timestamps(phases, params)

    style = ProcedureStyle.sample(rng, params.image_size)
    images = render_frames(
        phases,
        t_seconds,
        style=style,
        effective_case=effective_case,
        darkening_tau=params.darkening_tau,
        size=params.image_size,
        rng=rng,
    )

    effective = np.full(n_frames, -1, dtype=np.int8)
    effective[phases == PhaseLabel.KNOTTING] = 1 if effective_case else 0
    boxes = np.tile(np.asarray(style.box, dtype=np.int64), (n_frames, 1))

    log.debug("Generated {} with {} frames, phase lengths {}, effective={}", procedure_id(index), n_frames, lengths.tolist(), effective_case)
    return SyntheticProcedure(
        id=procedure_id(index),
        images=images,
        phases=phases,
        effective=effective,
        boxes=boxes,
        t_seconds=t_seconds,
        effective_case=effective_case,
    )


def generate_procedures(params: GeneratorParams, indices: Optional[Iterable[int]] = None, *, workers: int = 4) -> list[SyntheticProcedure]:
    """Generate several procedures concurrently; the result is independent of ``workers``."""
    params.check()
    indices = range(params.n_procedures) if indices is None else list(indices)
    ineffective = ineffective_indices(params)
    return run_threaded((lambda i=i: generate_procedure(params, i, ineffective=ineffective) for i in indices), limit=workers)
