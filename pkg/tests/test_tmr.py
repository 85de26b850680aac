import math

import torch

from models.tensor_models import PlaneFeatures
from network.tmr import (MultiplanarTextEnhancer, PlaneTextAttention, RepeatTextInjector, pool_planes,
                         reconstruct_voxels)


def linear(layer, x):
    return x @ layer.weight.T + layer.bias


def test_constant_volume_pools_to_constant_planes():
    planes = pool_planes(torch.full((1, 3, 2, 4, 5), 1.5))

    for plane in (planes.coronal, planes.sagittal, planes.axial):
        assert torch.equal(plane, torch.full_like(plane, 1.5))


def test_single_voxel_spreads_over_depth():
    f_v = torch.zeros(1, 1, 3, 3, 4)
    f_v[0, 0, 1, 2, 3] = 8.0

    planes = pool_planes(f_v)

    assert planes.coronal[0, 0, 1, 2] == 2.0
    assert planes.sagittal[0, 0, 2, 3] == 8.0 / 3
    assert planes.axial[0, 0, 1, 3] == 8.0 / 3


def test_pooling_matches_explicit_means():
    for seed in range(100):
        f_v = torch.randn(1, 2, 2, 2, 2, generator=torch.Generator().manual_seed(seed))
        planes = pool_planes(f_v)
        for c in range(2):
            for a in range(2):
                for b in range(2):
                    assert abs(planes.coronal[0, c, a, b] - (f_v[0, c, a, b, 0] + f_v[0, c, a, b, 1]) / 2) < 1e-6
                    assert abs(planes.sagittal[0, c, a, b] - (f_v[0, c, 0, a, b] + f_v[0, c, 1, a, b]) / 2) < 1e-6
                    assert abs(planes.axial[0, c, a, b] - (f_v[0, c, a, 0, b] + f_v[0, c, a, 1, b]) / 2) < 1e-6


def test_singleton_plane_attends_to_itself():
    block = PlaneTextAttention(channels=3, text_dim=2, attn_dim=4)
    tokens = torch.randn(1, 1, 3)

    attended, attention = block.self_attention(tokens)

    assert attention.item() == 1.0
    assert torch.allclose(attended, linear(block.self_v, tokens), atol=1e-6)


def test_identical_tokens_attend_uniformly():
    block = PlaneTextAttention(channels=3, text_dim=2, attn_dim=4)
    tokens = torch.randn(1, 1, 3).expand(1, 6, 3)

    _, attention = block.self_attention(tokens)

    assert torch.allclose(attention, torch.full((1, 6, 6), 1 / 6), atol=1e-6)


def test_self_attention_matches_matmul_oracle():
    block = PlaneTextAttention(channels=3, text_dim=2, attn_dim=4).double()
    for seed in range(100):
        tokens = torch.randn(1, 4, 3, dtype=torch.float64, generator=torch.Generator().manual_seed(seed))
        attended, _ = block.self_attention(tokens)

        q, k, v = (linear(layer, tokens[0]) for layer in (block.self_q, block.self_k, block.self_v))
        scores = q @ k.T / math.sqrt(4)
        weights = torch.exp(scores) / torch.exp(scores).sum(dim=1, keepdim=True)
        assert torch.allclose(attended[0], weights @ v, atol=1e-6)


def test_single_class_redistribution_is_rank_one():
    block = PlaneTextAttention(channels=3, text_dim=2, attn_dim=4)
    f_t = torch.randn(1, 2)
    attended = torch.randn(1, 6, 4)

    enhanced, s = block.text_enhance(f_t, attended, (2, 3))

    assert torch.allclose(s.sum(dim=-1), torch.ones(1, 1), atol=1e-6)
    o = s[0] @ linear(block.text_v, attended[0])
    r = s[0].T * o[0]
    assert torch.allclose(enhanced[0].reshape(3, 6).T, linear(block.out_proj, r), atol=1e-6)


def test_zero_text_query_spreads_evenly():
    block = PlaneTextAttention(channels=3, text_dim=2, attn_dim=4)
    with torch.no_grad():
        block.text_q.weight.zero_()
        block.text_q.bias.zero_()

    enhanced, s = block.text_enhance(torch.randn(2, 2), torch.randn(1, 6, 4), (3, 2))

    assert torch.allclose(s, torch.full((1, 2, 6), 1 / 6), atol=1e-6)
    flat = enhanced.reshape(1, 3, 6)
    assert torch.allclose(flat, flat[:, :, :1].expand(1, 3, 6), atol=1e-6)


def test_text_enhancement_matches_matmul_oracle():
    block = PlaneTextAttention(channels=3, text_dim=5, attn_dim=4).double()
    for seed in range(100):
        gen = torch.Generator().manual_seed(seed)
        f_t = torch.randn(2, 5, dtype=torch.float64, generator=gen)
        attended = torch.randn(1, 2, 4, dtype=torch.float64, generator=gen)

        enhanced, _ = block.text_enhance(f_t, attended, (2, 1))

        q = linear(block.text_q, f_t)
        k = linear(block.text_k, attended[0])
        v = linear(block.text_v, attended[0])
        scores = torch.exp(q @ k.T / 2.0)
        s = scores / scores.sum(dim=1, keepdim=True)
        r = s.T @ (s @ v)
        expected = linear(block.out_proj, r).T.reshape(3, 2, 1)
        assert torch.allclose(enhanced[0], expected, atol=1e-6)


def test_zero_plane_weights_return_input_exactly():
    f_v = torch.randn(2, 3, 2, 4, 3)
    planes = PlaneFeatures(torch.randn(2, 3, 2, 4), torch.randn(2, 3, 4, 3), torch.randn(2, 3, 2, 3))

    assert torch.equal(reconstruct_voxels(planes, f_v, torch.zeros(3)), f_v)


def test_coronal_weight_broadcasts_constant():
    planes = PlaneFeatures(torch.ones(1, 2, 2, 3), torch.randn(1, 2, 3, 4), torch.randn(1, 2, 2, 4))

    out = reconstruct_voxels(planes, torch.zeros(1, 2, 2, 3, 4), torch.tensor([1.0, 0.0, 0.0]))

    assert torch.equal(out, torch.ones(1, 2, 2, 3, 4))


def test_reconstruction_matches_voxel_loop():
    for seed in range(100):
        gen = torch.Generator().manual_seed(seed)
        f_v = torch.randn(1, 2, 2, 2, 2, dtype=torch.float64, generator=gen)
        cor, sag, ax = (torch.randn(1, 2, 2, 2, dtype=torch.float64, generator=gen) for _ in range(3))
        w = torch.randn(3, dtype=torch.float64, generator=gen)

        out = reconstruct_voxels(PlaneFeatures(cor, sag, ax), f_v, w)

        for c in range(2):
            for x in range(2):
                for y in range(2):
                    for z in range(2):
                        expected = (w[0] * cor[0, c, x, y] + w[1] * sag[0, c, y, z]
                                    + w[2] * ax[0, c, x, z] + f_v[0, c, x, y, z])
                        assert abs(out[0, c, x, y, z] - expected) < 1e-12


def test_fresh_enhancer_is_residual_identity():
    enhancer = MultiplanarTextEnhancer(channels=4, text_dim=3)
    f_v = torch.randn(2, 4, 2, 2, 2)

    out = enhancer(f_v, torch.randn(2, 3))

    assert torch.equal(out, f_v)


def test_trained_enhancer_keeps_shape():
    enhancer = MultiplanarTextEnhancer(channels=4, text_dim=3, attn_dim=5)
    with torch.no_grad():
        enhancer.plane_weights.fill_(0.5)
    f_v = torch.randn(2, 4, 2, 3, 4)

    out = enhancer(f_v, torch.randn(2, 3))

    assert out.shape == f_v.shape
    assert not torch.equal(out, f_v)


def test_repeat_injection_is_a_drop_in():
    f_v = torch.randn(2, 4, 2, 2, 2)
    f_t = torch.randn(2, 3)
    repeat = RepeatTextInjector(channels=4, text_dim=3, num_classes=2)
    multiplanar = MultiplanarTextEnhancer(channels=4, text_dim=3)

    assert repeat(f_v, f_t).shape == multiplanar(f_v, f_t).shape
    assert torch.equal(repeat(f_v, f_t), f_v)


def _double_enhancer():
    enhancer = MultiplanarTextEnhancer(channels=2, text_dim=3, attn_dim=2).double()
    with torch.no_grad():
        enhancer.plane_weights.copy_(torch.tensor([0.7, -0.4, 1.1], dtype=torch.float64))
    return enhancer


def test_enhancer_input_gradients_match_central_differences():
    enhancer = _double_enhancer()
    f_v = torch.randn(1, 2, 2, 2, 2, dtype=torch.float64, requires_grad=True)
    f_t = torch.randn(2, 3, dtype=torch.float64, requires_grad=True)

    assert torch.autograd.gradcheck(enhancer, (f_v, f_t), eps=1e-6, atol=1e-8, rtol=1e-4)


def test_enhancer_parameter_gradients_match_central_differences():
    enhancer = _double_enhancer()
    f_v = torch.randn(1, 2, 2, 2, 2, dtype=torch.float64)
    f_t = torch.randn(2, 3, dtype=torch.float64)
    names = [name for name, _ in enhancer.named_parameters()]
    params = tuple(p.detach().clone().requires_grad_(True) for _, p in enhancer.named_parameters())
    assert 'plane_weights' in names and 'planes.axial.text_q.weight' in names

    def enhance(*values):
        return torch.func.functional_call(enhancer, dict(zip(names, values)), (f_v, f_t))

    assert torch.autograd.gradcheck(enhance, params, eps=1e-6, atol=1e-8, rtol=1e-4)
