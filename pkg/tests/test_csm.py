from __future__ import annotations

import pytest
import torch

from pmnet.core.errors import InputError
from pmnet.network.csm import CompressedSequenceModel, CSMBlock, EffectivenessHead, overlap_pool, retrieve

from .conftest import finite_difference_check, module_parameters


def test_pool_matches_explicit_windows():
    x = torch.randn(20, 6, dtype=torch.float64)
    pooled = overlap_pool(x, 4)
    assert pooled.shape == (4, 6)
    for m in range(4):
        torch.testing.assert_close(pooled[m], x[4 * m : 4 * m + 8].mean(dim=0))


def test_pool_batched_matches_unbatched():
    x = torch.randn(3, 20, 6)
    pooled = overlap_pool(x, 4)
    for b in range(3):
        torch.testing.assert_close(pooled[b], overlap_pool(x[b], 4))


def test_pool_of_constant_rows_is_constant():
    x = torch.full((20, 5), 0.25)
    assert torch.all(overlap_pool(x, 4) == 0.25)


def test_pool_single_window_is_global_mean():
    x = torch.randn(8, 6, dtype=torch.float64)
    torch.testing.assert_close(overlap_pool(x, 4), x.mean(dim=0, keepdim=True))


def test_pool_needs_two_frames():
    with pytest.raises(InputError):
        overlap_pool(torch.randn(1, 6), 4)


def test_disabled_pool_is_identity():
    x = torch.randn(20, 6)
    assert overlap_pool(x, 4, enabled=False) is x


def test_memory_shape_and_states():
    torch.manual_seed(0)
    model = CompressedSequenceModel(96, clip_width=4, n_blocks=2, state_dim=8, chunk=4)
    memory = model(torch.randn(20, 96), torch.randn(20, 96))
    assert memory.values.shape == (4, 96)
    assert len(memory) == 4
    assert len(memory.states) == 2
    assert memory.scan_state.shape == (96, 8)
    assert torch.isfinite(memory.scan_state).all()


def test_memory_without_ssm_is_the_pooled_input():
    x = torch.randn(20, 16)
    model = CompressedSequenceModel(16, clip_width=4, use_ssm=False)
    memory = model(x, torch.randn(20, 16))
    torch.testing.assert_close(memory.values, overlap_pool(x, 4))
    assert memory.scan_state is None


def test_zero_region_input_drops_out():
    torch.manual_seed(1)
    block = CSMBlock(16, 4, chunk=3).double()
    with torch.no_grad():
        block.region_proj.bias.zero_()
    fc = torch.randn(5, 16, dtype=torch.float64)
    with_zero, _ = block(fc, torch.zeros_like(fc))
    without, _ = block(fc, None)
    torch.testing.assert_close(with_zero, without, rtol=0, atol=1e-12)


def test_branch_shape_mismatch():
    block = CSMBlock(16, 4)
    with pytest.raises(InputError):
        block(torch.randn(5, 16), torch.randn(4, 16))


def test_sequential_and_chunked_blocks_agree():
    torch.manual_seed(2)
    block = CSMBlock(8, 4, chunk=2).double()
    fc, fr = torch.randn(2, 7, 8, dtype=torch.float64), torch.randn(2, 7, 8, dtype=torch.float64)
    a, h_a = block(fc, fr)
    b, h_b = block(fc, fr, sequential=True)
    torch.testing.assert_close(a, b, rtol=1e-10, atol=1e-10)
    torch.testing.assert_close(h_a, h_b, rtol=1e-10, atol=1e-10)


def test_retrieve_from_single_row():
    query = torch.randn(4, 6)
    memory = torch.randn(1, 6)
    out, weights = retrieve(query, memory, return_weights=True)
    torch.testing.assert_close(out, query + memory)
    assert torch.all(weights == 1)


def test_retrieve_weights_sum_to_one():
    _, weights = retrieve(torch.randn(2, 4, 6), torch.randn(2, 5, 6), return_weights=True)
    torch.testing.assert_close(weights.sum(-1), torch.ones(2, 4), atol=1e-6, rtol=0)


def test_retrieve_matches_dense_computation():
    memory = torch.eye(3, 6, dtype=torch.float64) * torch.tensor([[2.0], [0.5], [3.0]], dtype=torch.float64)
    query = torch.stack([memory[1], torch.randn(6, dtype=torch.float64)])
    out, weights = retrieve(query, memory, return_weights=True)
    for i in range(2):
        q = query[i]
        cosine = torch.stack([(q @ m) / (q.norm() * m.norm()) for m in memory])
        expected = torch.softmax(cosine, dim=0)
        torch.testing.assert_close(weights[i], expected)
        torch.testing.assert_close(out[i], expected @ memory + q)
    assert int(weights[0].argmax()) == 1


def test_retrieved_update_lies_in_memory_row_space():
    gen = torch.Generator().manual_seed(3)
    memory = torch.randn(2, 6, generator=gen, dtype=torch.float64)
    query = torch.randn(4, 6, generator=gen, dtype=torch.float64)
    out, _ = retrieve(query, memory)
    update = out - query
    coeffs = torch.linalg.lstsq(memory.T, update.T).solution
    torch.testing.assert_close(memory.T @ coeffs, update.T, rtol=1e-9, atol=1e-9)


def test_zero_query_attends_uniformly():
    _, weights = retrieve(torch.zeros(1, 6), torch.randn(4, 6), return_weights=True)
    torch.testing.assert_close(weights, torch.full((1, 4), 0.25))


def test_retrieve_from_empty_memory():
    with pytest.raises(InputError):
        retrieve(torch.randn(4, 6), torch.zeros(0, 6))


def test_effectiveness_head_is_mean_invariant():
    torch.manual_seed(4)
    head = EffectivenessHead(16)
    row = torch.randn(1, 16)
    single = head(row)
    repeated = head(row.expand(3, 16))
    assert single.shape == (2,)
    torch.testing.assert_close(single, repeated)


def test_csm_block_gradients():
    torch.manual_seed(5)
    block = CSMBlock(6, 3, chunk=2).double()
    fc = torch.randn(5, 6, dtype=torch.float64)
    fr = torch.randn(5, 6, dtype=torch.float64)

    def loss():
        out, _ = block(fc, fr)
        return (out * torch.linspace(-1, 1, 6, dtype=torch.float64)).sum()

    names = (
        "gate_proj.weight",
        "main_proj.weight",
        "region_proj.weight",
        "out_proj.weight",
        "main_scan.A_log",
        "main_scan.D",
        "main_scan.dt_proj.weight",
        "region_scan.B_proj.weight",
    )
    finite_difference_check(loss, module_parameters(block, *names))


def test_retrieve_gradients():
    gen = torch.Generator().manual_seed(6)
    query = torch.randn(3, 5, generator=gen, dtype=torch.float64, requires_grad=True)
    memory = torch.randn(4, 5, generator=gen, dtype=torch.float64, requires_grad=True)

    def loss():
        out, _ = retrieve(query, memory)
        return out.pow(2).sum()

    finite_difference_check(loss, [query, memory])
