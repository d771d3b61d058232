from __future__ import annotations

import os
from collections.abc import Callable, Iterable

import hypothesis
import numpy as np
import pytest
import torch
from torch import Tensor, nn

from pmnet.core._logging import build_logger
from pmnet.models.run import RunConfig
from pmnet.models.synth import GeneratorParams
from pmnet.synthgen.generator import generate_procedures
from pmnet.synthgen.storage import write_dataset

np.seterr(all="warn")

hypothesis.settings.register_profile("default", deadline=None, max_examples=50)
hypothesis.settings.register_profile("fast", deadline=None, max_examples=5)
hypothesis.settings.register_profile("debugger", deadline=None, report_multiple_bugs=False)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))

build_logger("WARNING")


def tiny_params(**overrides) -> GeneratorParams:
    values = {
        "n_procedures": 3,
        "frames_min": 40,
        "frames_max": 48,
        "frames_mean": 44,
        "image_size": 16,
        "min_blocking_frames": 10,
        "seed": 7,
    }
    values.update(overrides)
    return GeneratorParams(**values)


def tiny_config(**overrides) -> RunConfig:
    values = {
        "seed": 3,
        "epochs": 1,
        "batch_size": 2,
        "steps_per_epoch": 2,
        "window": 8,
        "frame_stride": 2,
        "clip_width": 4,
        "channels": 16,
        "region_patch": 8,
        "n_tokens": 2,
        "n_swaps": 1,
        "n_heads": 4,
        "n_blocks": 2,
        "state_dim": 4,
        "scan_chunk": 4,
        "learning_rate": 1e-3,
    }
    values.update(overrides)
    return RunConfig(**values)


@pytest.fixture()
def small_params() -> GeneratorParams:
    return tiny_params()


@pytest.fixture()
def small_config() -> RunConfig:
    return tiny_config()


@pytest.fixture(scope="session")
def tiny_procedures():
    return generate_procedures(tiny_params(), workers=1)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory, tiny_procedures):
    root = tmp_path_factory.mktemp("dataset")
    write_dataset(tiny_procedures, root, generator=tiny_params(), workers=1)
    return root


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def finite_difference_check(
    loss_fn: Callable[[], Tensor],
    tensors: Iterable[Tensor],
    *,
    eps: float = 1e-6,
    rtol: float = 1e-3,
    atol: float = 1e-7,
    samples: int = 8,
    seed: int = 0,
) -> None:
    """Compare autograd gradients of ``loss_fn()`` with central differences.

    Checks ``samples`` random entries of every tensor (all entries for small ones);
    expects float64 tensors that ``loss_fn`` closes over.

    """
    tensors = list(tensors)
    for t in tensors:
        if t.grad is not None:
            t.grad = None
    loss = loss_fn()
    grads = torch.autograd.grad(loss, tensors)
    gen = np.random.default_rng(seed)
    with torch.no_grad():
        for t, g in zip(tensors, grads):
            flat = t.view(-1)
            gflat = g.reshape(-1)
            picks = range(flat.numel()) if flat.numel() <= samples else gen.choice(flat.numel(), size=samples, replace=False)
            for i in picks:
                i = int(i)
                orig = flat[i].item()
                flat[i] = orig + eps
                plus = loss_fn().item()
                flat[i] = orig - eps
                minus = loss_fn().item()
                flat[i] = orig
                numeric = (plus - minus) / (2 * eps)
                analytic = gflat[i].item()
                assert abs(analytic - numeric) <= rtol * max(abs(analytic), abs(numeric)) + atol, (i, analytic, numeric)


def module_parameters(module: nn.Module, *names: str) -> list[Tensor]:
    params = dict(module.named_parameters())
    return [params[n] for n in names] if names else list(params.values())
