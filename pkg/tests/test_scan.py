from __future__ import annotations

import math

import pytest
import torch

from pmnet.core.errors import ConfigError, NumericError
from pmnet.network.scan import SelectiveScan, segsum, selective_scan_chunked, selective_scan_seq


def _random_inputs(seed: int, length: int, channels: int = 3, state: int = 4, *, batch: tuple[int, ...] = ()):
    gen = torch.Generator().manual_seed(seed)

    def rand(*shape):
        return torch.randn(*shape, generator=gen, dtype=torch.float64)

    x = rand(*batch, length, channels)
    delta = torch.nn.functional.softplus(rand(*batch, length, channels))
    A = -torch.exp(rand(channels, state))
    B = rand(*batch, length, state)
    C = rand(*batch, length, state)
    D = rand(channels)
    return x, delta, A, B, C, D


def _scalar_scan(x, delta, A, B, C, D):
    T, c = x.shape
    s = A.shape[1]
    h = [[0.0] * s for _ in range(c)]
    out = []
    for t in range(T):
        row = []
        for i in range(c):
            y = 0.0
            for j in range(s):
                d = float(delta[t, i])
                h[i][j] = math.exp(d * float(A[i, j])) * h[i][j] + d * float(B[t, j]) * float(x[t, i])
                y += h[i][j] * float(C[t, j])
            row.append(y + float(D[i]) * float(x[t, i]))
        out.append(row)
    return torch.tensor(out, dtype=torch.float64)


def test_sequential_scan_matches_scalar_loop():
    args = _random_inputs(0, 7)
    y, _ = selective_scan_seq(*args)
    torch.testing.assert_close(y, _scalar_scan(*args), rtol=0, atol=1e-12)


def test_single_step_is_discretized_input_plus_skip():
    x, delta, A, B, C, D = _random_inputs(1, 1)
    y, h = selective_scan_seq(x, delta, A, B, C, D)
    expected_h = delta[0, :, None] * B[0, None, :] * x[0, :, None]
    torch.testing.assert_close(h, expected_h)
    torch.testing.assert_close(y[0], (expected_h * C[0]).sum(-1) + D * x[0])


def test_strong_decay_forgets_the_past():
    x, delta, _, B, C, D = _random_inputs(2, 12)
    A = torch.full((3, 4), -1e6, dtype=torch.float64)
    memoryless = (delta[..., None] * B[:, None, :] * x[..., None] * C[:, None, :]).sum(-1) + D * x
    for scan in (selective_scan_seq, lambda *a: selective_scan_chunked(*a, chunk=5)):
        y, _ = scan(x, delta, A, B, C, D)
        torch.testing.assert_close(y, memoryless, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("length", [1, 7, 64, 1000])
def test_chunked_scan_matches_sequential(length):
    for seed in range(25):
        args = _random_inputs(seed, length)
        y_seq, h_seq = selective_scan_seq(*args)
        y_chunk, h_chunk = selective_scan_chunked(*args, chunk=16)
        torch.testing.assert_close(y_chunk, y_seq, rtol=1e-10, atol=1e-10)
        torch.testing.assert_close(h_chunk, h_seq, rtol=1e-10, atol=1e-10)


@pytest.mark.parametrize("chunk", [1, 13, 64])
def test_chunk_size_edge_cases(chunk):
    args = _random_inputs(5, 13, batch=(2,))
    y_seq, _ = selective_scan_seq(*args)
    y_chunk, _ = selective_scan_chunked(*args, chunk=chunk)
    torch.testing.assert_close(y_chunk, y_seq, rtol=1e-10, atol=1e-10)


def test_chunk_must_be_positive():
    with pytest.raises(ConfigError):
        selective_scan_chunked(*_random_inputs(0, 4), chunk=0)


def test_carried_state_continues_the_sequence():
    x, delta, A, B, C, D = _random_inputs(6, 20)
    y_full, h_full = selective_scan_seq(x, delta, A, B, C, D)
    y_a, h_a = selective_scan_chunked(x[:8], delta[:8], A, B[:8], C[:8], D, chunk=3)
    y_b, h_b = selective_scan_chunked(x[8:], delta[8:], A, B[8:], C[8:], D, chunk=3, h0=h_a)
    torch.testing.assert_close(torch.cat([y_a, y_b]), y_full, rtol=1e-10, atol=1e-10)
    torch.testing.assert_close(h_b, h_full, rtol=1e-10, atol=1e-10)


def test_non_finite_parameter_names_the_channel():
    x, delta, A, B, C, D = _random_inputs(7, 5)
    A[1, 2] = float("nan")
    with pytest.raises(NumericError) as err:
        selective_scan_seq(x, delta, A, B, C, D)
    assert err.value.channel == 1
    assert err.value.term == "A"


def test_segsum_lower_triangle():
    x = torch.tensor([1.0, 2.0, 3.0, 4.0], dtype=torch.float64)
    out = segsum(x)
    assert out[2, 0] == 5.0
    assert out[3, 1] == 7.0
    assert out[1, 1] == 0.0
    assert torch.isneginf(out[0, 3])


def test_long_sequence_stays_finite():
    torch.manual_seed(0)
    scan = SelectiveScan(8, 4, chunk=64)
    x = torch.randn(1, 10_000, 8)
    with torch.no_grad():
        y, h = scan(x)
    assert torch.isfinite(y).all() and torch.isfinite(h).all()


def test_discretized_decay_is_in_unit_interval():
    torch.manual_seed(1)
    scan = SelectiveScan(6, 5)
    x = torch.randn(2, 30, 6)
    with torch.no_grad():
        delta, _, _ = scan.parameters_for(x)
        decay = torch.exp(delta[..., None] * scan.A)
    assert (delta > 0).all()
    assert (decay > 0).all() and (decay < 1).all()


def test_module_paths_agree():
    torch.manual_seed(2)
    scan = SelectiveScan(4, 3, chunk=5).double()
    x = torch.randn(2, 17, 4, dtype=torch.float64)
    y_seq, h_seq = scan(x, sequential=True)
    y_chunk, h_chunk = scan(x)
    torch.testing.assert_close(y_chunk, y_seq, rtol=1e-10, atol=1e-10)
    torch.testing.assert_close(h_chunk, h_seq, rtol=1e-10, atol=1e-10)
