from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmnet.core.errors import ConfigError
from pmnet.models.synth import BLOCKING_PHASES, DEFAULT_PHASE_FRACTIONS, N_PHASES, GeneratorParams, PhaseLabel
from pmnet.synthgen.generator import generate_procedure, generate_procedures, ineffective_indices, segment_lengths
from pmnet.synthgen.render import ischemia_darkness

from .conftest import tiny_params


def _lengths_for(params: GeneratorParams, index: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([params.seed, index]))
    n = int(rng.integers(params.frames_min, params.frames_max + 1))
    return segment_lengths(n, params, rng)


def test_default_procedure_frame_count_and_phase_order():
    proc = generate_procedure(GeneratorParams(), 0)
    assert 313 <= len(proc) <= 726
    assert proc.images.shape == (len(proc), 64, 64, 3)
    assert proc.images.dtype == np.float32
    assert np.all(np.diff(proc.phases) >= 0)
    assert set(np.unique(proc.phases)) == set(range(N_PHASES))


def test_phase_label_has_five_values_and_blocking_pair():
    assert len(PhaseLabel) == 5
    assert BLOCKING_PHASES == {PhaseLabel.KNOTTING, PhaseLabel.RELEASING}
    assert PhaseLabel.parse("knotting") is PhaseLabel.KNOTTING
    assert PhaseLabel.parse(3) is PhaseLabel.RELEASING
    with pytest.raises(ConfigError):
        PhaseLabel.parse("suturing")


def test_generation_is_deterministic():
    params = tiny_params()
    assert generate_procedure(params, 1) == generate_procedure(params, 1)
    assert generate_procedure(params, 0) != generate_procedure(params, 1)


def test_worker_count_does_not_change_output():
    params = tiny_params()
    assert generate_procedures(params, workers=1) == generate_procedures(params, workers=3)


def test_zero_ineffective_fraction_means_all_effective():
    params = tiny_params(n_procedures=4, ineffective_fraction=0.0)
    assert all(p.effective_case for p in generate_procedures(params, workers=1))


def test_default_ineffective_count_is_five_of_fifty():
    params = GeneratorParams()
    chosen = ineffective_indices(params)
    assert len(chosen) == 5
    assert all(0 <= i < 50 for i in chosen)
    assert chosen == ineffective_indices(GeneratorParams())


def test_effective_flag_present_only_on_knotting_frames(tiny_procedures):
    for proc in tiny_procedures:
        knot = proc.phases == PhaseLabel.KNOTTING
        assert np.all(proc.effective[knot] >= 0)
        assert np.all(proc.effective[~knot] == -1)
        for frame in proc.frames[:3] + proc.frames[-3:]:
            assert (frame.effective is not None) == (frame.phase is PhaseLabel.KNOTTING)


def test_boxes_lie_inside_images(tiny_procedures):
    for proc in tiny_procedures:
        x, y, w, h = proc.boxes.T
        assert np.all(x >= 0) and np.all(y >= 0)
        assert np.all(x + w <= proc.width) and np.all(y + h <= proc.height)
        assert np.all(w >= 2) and np.all(h >= 2)


def test_dual_rate_timestamps(tiny_procedures):
    for proc in tiny_procedures:
        dt = np.diff(proc.t_seconds)
        assert proc.t_seconds[0] == 0.0
        assert np.all(dt > 0)
        blocking = np.isin(proc.phases[1:], [int(p) for p in BLOCKING_PHASES])
        np.testing.assert_allclose(dt[blocking], 1 / 3.0)
        np.testing.assert_allclose(dt[~blocking], 1 / 0.33)


def test_images_are_in_unit_range(tiny_procedures):
    for proc in tiny_procedures:
        assert proc.images.min() >= 0.0 and proc.images.max() <= 1.0


def test_fifty_procedures_match_phase_fractions():
    params = GeneratorParams()
    totals = np.zeros(N_PHASES)
    for index in range(50):
        lengths = _lengths_for(params, index)
        assert lengths[PhaseLabel.KNOTTING] + lengths[PhaseLabel.RELEASING] >= 30
        totals += lengths
    empirical = totals / totals.sum()
    assert np.all(np.abs(empirical - np.array(DEFAULT_PHASE_FRACTIONS)) <= 0.03)


@given(n_frames=st.integers(min_value=40, max_value=800), seed=st.integers(min_value=0, max_value=2**32 - 1))
def test_segment_lengths_partition_the_procedure(n_frames, seed):
    params = GeneratorParams(frames_min=40, min_blocking_frames=30)
    lengths = segment_lengths(n_frames, params, np.random.default_rng(seed))
    assert lengths.sum() == n_frames
    assert np.all(lengths >= 1)
    assert lengths[PhaseLabel.KNOTTING] + lengths[PhaseLabel.RELEASING] >= 30


def _box_red(proc, index):
    x, y, w, h = proc.boxes[index]
    return float(proc.images[index, y : y + h, x : x + w, 0].mean())


def test_ischemia_patch_darkens_only_for_effective_cases():
    params = tiny_params(n_procedures=2, ineffective_fraction=0.5, frames_min=120, frames_max=140, frames_mean=130, darkening_tau=1.0)
    procs = generate_procedures(params, workers=1)
    assert {p.effective_case for p in procs} == {True, False}
    for proc in procs:
        knot = np.flatnonzero(proc.phases == PhaseLabel.KNOTTING)
        drop = _box_red(proc, knot[0]) - _box_red(proc, knot[-1])
        if proc.effective_case:
            assert drop > 0.1
        else:
            assert abs(drop) < 0.05


def test_darkening_is_monotone():
    t = np.linspace(0, 60, 200)
    dark = ischemia_darkness(t, 10.0, 10.0, True)
    assert np.all(np.diff(dark) >= 0)
    assert np.all(dark[t < 10.0] == 0)
    assert np.all(ischemia_darkness(t, 10.0, 10.0, False) == 0)


@pytest.mark.parametrize(
    "overrides",
    [
        {"phase_fractions": (0.2, 0.2, 0.2, 0.2, 0.3)},
        {"frames_min": 500, "frames_max": 400, "frames_mean": 450},
        {"frames_mean": 800},
    ],
)
def test_invalid_params_raise_config_error(overrides):
    with pytest.raises(ConfigError):
        generate_procedure(GeneratorParams(**overrides), 0)


def test_index_out_of_range_raises_config_error():
    with pytest.raises(ConfigError):
        generate_procedure(tiny_params(), 3)
