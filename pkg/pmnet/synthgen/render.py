from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pmnet.models.synth import PhaseLabel

# Knotting and Releasing share a background so only motion and the patch tell them apart
PHASE_BASE_COLORS = np.array(
    [
        (0.62, 0.48, 0.40),  # Preparing
        (0.70, 0.38, 0.34),  # Knotting
        (0.52, 0.30, 0.28),  # Resecting
        (0.70, 0.38, 0.34),  # Releasing
        (0.46, 0.44, 0.50),  # Postprocessing
    ],
    dtype=np.float64,
)
PHASE_TEXTURE_FREQ = np.array([2.0, 5.0, 3.5, 5.0, 1.5])
PHASE_TEXTURE_ANGLE = np.array([0.2, 1.1, 2.3, 1.1, 0.7])

ISCHEMIA_BRIGHT = np.array((0.85, 0.15, 0.15))
ISCHEMIA_DARK = np.array((0.40, 0.05, 0.10))
GLYPH_COLOR = np.array((0.90, 0.90, 0.95))

TEXTURE_AMPLITUDE = 0.08
BACKGROUND_NOISE = 0.02
PATCH_NOISE = 0.03
KNOT_OSCILLATION_PERIOD = 4.0


@dataclass(frozen=True)
class ProcedureStyle:
    """Per-procedure appearance drawn once from the procedure's RNG."""

    base_colors: np.ndarray
    texture_freq: np.ndarray
    texture_angle: np.ndarray
    drift: float
    box: tuple[int, int, int, int]

    @classmethod
    def sample(cls, rng: np.random.Generator, size: int) -> ProcedureStyle:
        jitter = rng.normal(0.0, 0.03, size=3)
        base = np.clip(PHASE_BASE_COLORS + jitter, 0.0, 1.0)
        freq = PHASE_TEXTURE_FREQ * rng.uniform(0.9, 1.1)
        angle = PHASE_TEXTURE_ANGLE + rng.normal(0.0, 0.1)
        drift = float(rng.uniform(0.05, 0.2))

        w = max(2, int(round(size * rng.uniform(0.22, 0.34))))
        h = max(2, int(round(size * rng.uniform(0.22, 0.34))))
        x = int(rng.integers(0, size - w + 1))
        y = int(rng.integers(0, size - h + 1))
        return cls(base_colors=base, texture_freq=freq, texture_angle=angle, drift=drift, box=(x, y, w, h))


def ischemia_darkness(t_seconds: np.ndarray, knot_start: float, tau: float, effective_case: bool) -> np.ndarray:
    """Darkening factor in [0, 1) of the ischemia patch, 0 before Knotting or without effective blocking."""
    if not effective_case:
        return np.zeros_like(t_seconds, dtype=np.float64)
    elapsed = np.clip(t_seconds - knot_start, 0.0, None)
    return 1.0 - np.exp(-elapsed / tau)


def glyph_positions(phases: np.ndarray, t_seconds: np.ndarray) -> np.ndarray:
    """Horizontal glyph centre in [0, 1] per frame, NaN where no instrument is visible."""
    xs = np.full(phases.shape, np.nan)
    knot = phases == PhaseLabel.KNOTTING
    if knot.any():
        tau = t_seconds[knot] - t_seconds[knot][0]
        xs[knot] = 0.5 + 0.2 * np.sin(2.0 * np.pi * tau / KNOT_OSCILLATION_PERIOD)
    release = phases == PhaseLabel.RELEASING
    if release.any():
        tr = t_seconds[release]
        span = tr[-1] - tr[0]
        progress = (tr - tr[0]) / span if span > 0 else np.zeros_like(tr)
        xs[release] = 0.75 - 0.5 * progress
    return xs


def render_frames(
    phases: np.ndarray,
    t_seconds: np.ndarray,
    *,
    style: ProcedureStyle,
    effective_case: bool,
    darkening_tau: float,
    size: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Render all frames of a procedure at once.

    Returns
    -------
    numpy.ndarray
        ``(N, size, size, 3)`` float32 images clipped to [0, 1].

    """
    n = phases.shape[0]
    grid = (np.arange(size) + 0.5) / size
    yy, xx = np.meshgrid(grid, grid, indexing="ij")

    freq = style.texture_freq[phases][:, None, None]
    angle = style.texture_angle[phases][:, None, None]
    along = xx[None] * np.cos(angle) + yy[None] * np.sin(angle)
    texture = TEXTURE_AMPLITUDE * np.sin(2.0 * np.pi * freq * along + style.drift * t_seconds[:, None, None])

    illumination = rng.uniform(0.9, 1.1, size=n)[:, None, None, None]
    images = style.base_colors[phases][:, None, None, :] * (1.0 + texture[..., None]) * illumination
    images += rng.normal(0.0, BACKGROUND_NOISE, size=images.shape)

    xs = glyph_positions(phases, t_seconds)
    visible = ~np.isnan(xs)
    if visible.any():
        half = max(1, size // 20) / size
        near = np.abs(xx[None] - xs[visible][:, None, None]) <= half
        band = (yy >= 0.15) & (yy <= 0.6)
        mask = near & band[None]
        sub = images[visible]
        sub[mask] = GLYPH_COLOR
        images[visible] = sub

    knot_frames = np.flatnonzero(phases == PhaseLabel.KNOTTING)
    knot_start = float(t_seconds[knot_frames[0]]) if knot_frames.size else np.inf
    darkness = ischemia_darkness(t_seconds, knot_start, darkening_tau, effective_case)
    color = (1.0 - darkness)[:, None] * ISCHEMIA_BRIGHT + darkness[:, None] * ISCHEMIA_DARK
    x, y, w, h = style.box
    patch = color[:, None, None, :] + rng.normal(0.0, PATCH_NOISE, size=(n, h, w, 3))
    images[:, y : y + h, x : x + w, :] = patch

    return np.clip(images, 0.0, 1.0).astype(np.float32)
