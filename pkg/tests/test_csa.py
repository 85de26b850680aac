import pytest
import torch

from network.csa import ProjectionHead, class_masked_average, cognitive_loss, downsample_prediction
from utils.errors import ValidationError


def loop_average(f_v_p, mask):
    c, h, w, d = f_v_p.shape
    out = torch.zeros(c, dtype=f_v_p.dtype)
    for ch in range(c):
        total = 0.0
        for x in range(h):
            for y in range(w):
                for z in range(d):
                    total += f_v_p[ch, x, y, z] * mask[x, y, z]
        out[ch] = total / (h * w * d)
    return out


def test_full_mask_gives_channel_mean():
    f_v_p = torch.randn(3, 2, 4, 2)

    avg = class_masked_average(f_v_p, torch.ones(2, 4, 2))

    assert torch.allclose(avg, f_v_p.mean(dim=(1, 2, 3)), atol=1e-6)


def test_empty_mask_gives_zero():
    avg = class_masked_average(torch.randn(3, 2, 2, 2), torch.zeros(2, 2, 2))
    assert torch.equal(avg, torch.zeros(3))


def test_masked_average_matches_loop():
    gen = torch.Generator().manual_seed(0)
    for _ in range(20):
        f_v_p = torch.randn(2, 2, 3, 2, dtype=torch.float64, generator=gen)
        mask = torch.rand(2, 3, 2, dtype=torch.float64, generator=gen)
        assert torch.allclose(class_masked_average(f_v_p, mask), loop_average(f_v_p, mask), atol=1e-12)


def test_grid_mismatch_rejected():
    with pytest.raises(ValidationError):
        class_masked_average(torch.randn(3, 2, 2, 2), torch.ones(4, 4, 4))


def test_matching_text_gives_zero_loss():
    f_v_p = torch.randn(1, 3, 2, 2, 2)
    y_hat = torch.ones(1, 1, 2, 2, 2)
    f_t = f_v_p.mean(dim=(2, 3, 4))

    loss = cognitive_loss(f_t, f_v_p, y_hat, y_hat)

    assert loss.item() == pytest.approx(0.0, abs=1e-10)


def test_single_class_closed_form():
    f_v_p = torch.zeros(1, 3, 2, 2, 2)
    f_t = torch.tensor([[1.0, -2.0, 0.5]])
    y_hat = torch.rand(1, 1, 2, 2, 2)

    loss = cognitive_loss(f_t, f_v_p, y_hat, y_hat)

    assert loss.item() == pytest.approx(2 * (1.0 + 4.0 + 0.25), rel=1e-6)


def test_two_class_loss_matches_oracle():
    gen = torch.Generator().manual_seed(1)
    for _ in range(20):
        f_t = torch.randn(2, 3, dtype=torch.float64, generator=gen)
        f_v_p = torch.randn(1, 3, 2, 2, 2, dtype=torch.float64, generator=gen)
        y_hat_1 = torch.softmax(torch.randn(1, 2, 2, 2, 2, dtype=torch.float64, generator=gen), dim=1)
        y_hat_2 = torch.softmax(torch.randn(1, 2, 2, 2, 2, dtype=torch.float64, generator=gen), dim=1)

        expected = 0.0
        for y_hat in (y_hat_1, y_hat_2):
            for k in range(2):
                m = loop_average(f_v_p[0], y_hat[0, k])
                expected += float(((f_t[k] - m) ** 2).sum())

        assert cognitive_loss(f_t, f_v_p, y_hat_1, y_hat_2).item() == pytest.approx(expected, rel=1e-10)


def test_text_gradient_is_twice_the_residuals():
    f_t = torch.randn(2, 3, requires_grad=True)
    f_v_p = torch.randn(1, 3, 2, 2, 2)
    y_hat_1 = torch.softmax(torch.randn(1, 2, 2, 2, 2), dim=1)
    y_hat_2 = torch.softmax(torch.randn(1, 2, 2, 2, 2), dim=1)

    cognitive_loss(f_t, f_v_p, y_hat_1, y_hat_2).backward()

    m1 = class_masked_average(f_v_p[0], y_hat_1[0])
    m2 = class_masked_average(f_v_p[0], y_hat_2[0])
    expected = 2 * (f_t.detach() - m1) + 2 * (f_t.detach() - m2)
    assert torch.allclose(f_t.grad, expected, atol=1e-5)


def test_decoders_are_interchangeable():
    f_t = torch.randn(2, 3)
    f_v_p = torch.randn(2, 3, 2, 2, 2)
    y_hat_1 = torch.softmax(torch.randn(2, 2, 2, 2, 2), dim=1)
    y_hat_2 = torch.softmax(torch.randn(2, 2, 2, 2, 2), dim=1)

    forward = cognitive_loss(f_t, f_v_p, y_hat_1, y_hat_2)
    swapped = cognitive_loss(f_t, f_v_p, y_hat_2, y_hat_1)

    assert forward.item() == pytest.approx(swapped.item(), rel=1e-6)


def test_predictions_pooled_to_bottleneck_grid():
    f_t = torch.randn(2, 3)
    f_v_p = torch.randn(1, 3, 2, 2, 2)
    y_hat = torch.softmax(torch.randn(1, 2, 8, 8, 8), dim=1)

    pooled = downsample_prediction(y_hat, (2, 2, 2))

    assert pooled.shape == (1, 2, 2, 2, 2)
    assert torch.allclose(pooled[0, :, 0, 0, 0], y_hat[0, :, :4, :4, :4].mean(dim=(1, 2, 3)), atol=1e-6)
    assert torch.allclose(cognitive_loss(f_t, f_v_p, y_hat, y_hat),
                          cognitive_loss(f_t, f_v_p, pooled, pooled), atol=1e-6)


def test_loss_is_batch_mean():
    f_t = torch.randn(2, 3)
    f_v_p = torch.randn(3, 3, 2, 2, 2)
    y_hat = torch.softmax(torch.randn(3, 2, 2, 2, 2), dim=1)

    per_sample = [cognitive_loss(f_t, f_v_p[i:i + 1], y_hat[i:i + 1], y_hat[i:i + 1]) for i in range(3)]

    assert cognitive_loss(f_t, f_v_p, y_hat, y_hat).item() == pytest.approx(
        sum(p.item() for p in per_sample) / 3, rel=1e-5)


def test_class_count_mismatch_rejected():
    with pytest.raises(ValidationError):
        cognitive_loss(torch.randn(3, 3), torch.randn(1, 3, 2, 2, 2),
                       torch.ones(1, 2, 2, 2, 2), torch.ones(1, 2, 2, 2, 2))


def test_projection_head_maps_channels():
    head = ProjectionHead(channels=8, text_dim=5)
    assert head(torch.randn(2, 8, 2, 2, 2)).shape == (2, 5, 2, 2, 2)
