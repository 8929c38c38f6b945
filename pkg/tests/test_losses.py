import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from aquacast.losses import (
    ClassificationLossConfig,
    RegressionLossConfig,
    combo_classification_loss,
    downscale,
    huber,
    multiscale_loss,
    total_regression_loss,
    wavelet_loss,
)


def t64(x):
    return torch.as_tensor(np.asarray(x), dtype=torch.float64)


class TestHuber:
    def test_zero_error(self):
        assert huber(t64([0.4]), t64([0.4]), 1.0).item() == 0.0

    def test_quadratic_branch(self):
        # e = delta/2 with delta=1 -> e^2/2 = 0.125
        assert huber(t64([0.5]), t64([0.0]), 1.0).item() == pytest.approx(0.125)

    def test_linear_branch(self):
        # e = 2, delta = 1 -> 1 * (2 - 0.5) = 1.5
        assert huber(t64([2.0]), t64([0.0]), 1.0).item() == pytest.approx(1.5)

    def test_nonpositive_delta_rejected(self):
        with pytest.raises(ValueError):
            huber(t64([0.0]), t64([0.0]), 0.0)

    @given(st.floats(-3, 3), st.floats(0.1, 2))
    def test_symmetric_in_error(self, e, delta):
        tgt = t64([[1.0]])
        a = huber(tgt + e, tgt, delta).item()
        b = huber(tgt - e, tgt, delta).item()
        assert a == pytest.approx(b, abs=1e-12)


class TestDownscale:
    def test_constant_preserved(self):
        x = torch.full((4, 4), 0.3, dtype=torch.float64)
        assert torch.allclose(downscale(x, 2), torch.full((2, 2), 0.3, dtype=torch.float64))

    def test_mean_pool(self):
        x = t64([[0.0, 0.0], [1.0, 1.0]])
        assert downscale(x, 2).item() == pytest.approx(0.5)

    def test_odd_dims_zero_padded(self):
        x = torch.ones(5, 5, dtype=torch.float64)
        out = downscale(x, 2)
        assert out.shape == (3, 3)
        # Padded column/row cells average 2 ones + 2 zeros.
        assert out[0, 2].item() == pytest.approx(0.5)
        assert out[2, 2].item() == pytest.approx(0.25)

    def test_small_factor_rejected(self):
        with pytest.raises(ValueError):
            downscale(torch.ones(4, 4), 1)


class TestMultiscale:
    def test_zero_iff_equal(self):
        rng = np.random.default_rng(0)
        x = t64(rng.normal(size=(8, 8)))
        cfg = RegressionLossConfig()
        assert multiscale_loss(x, x, cfg).item() == 0.0

    def test_constant_offset_single_scale(self):
        # One scale (M=1, s=2): total = (1/1) * (c^2/2 + c^2/2) = c^2.
        c = 0.3
        tgt = t64(np.zeros((8, 8)))
        cfg = RegressionLossConfig(scales=(2,), detail_weights=(1.0, 1.0))
        out = multiscale_loss(tgt + c, tgt, cfg).item()
        assert out == pytest.approx(c * c, abs=1e-12)

    def test_constant_offset_two_scales(self):
        # S={2,4}: (1/2) * 3 * c^2/2.
        c = 0.25
        tgt = t64(np.zeros((8, 8)))
        cfg = RegressionLossConfig(scales=(2, 4))
        out = multiscale_loss(tgt + c, tgt, cfg).item()
        assert out == pytest.approx(1.5 * c * c / 2.0, abs=1e-12)

    def test_invalid_pixels_contribute_nothing(self):
        tgt = t64(np.zeros((4, 4)))
        pred = tgt.clone()
        pred[0, 0] = 100.0  # only at an invalid pixel
        valid = torch.ones(4, 4, dtype=torch.bool)
        valid[0, 0] = False
        cfg = RegressionLossConfig(scales=(2,))
        assert multiscale_loss(pred, tgt, cfg, valid).item() == 0.0


class TestWaveletLoss:
    def test_zero_iff_equal(self):
        rng = np.random.default_rng(1)
        x = t64(rng.normal(size=(8, 8)))
        assert wavelet_loss(x, x, RegressionLossConfig()).item() == 0.0

    def test_constant_offset_analytic(self):
        # Constant offset c: all detail diffs vanish; the level-N approx
        # coefficients differ by c * 2^N, inside the quadratic branch.
        c = 0.1
        levels = 2
        tgt = t64(np.zeros((8, 8)))
        cfg = RegressionLossConfig(wavelet_levels=levels, detail_weights=(1.0, 1.0))
        expected = 0.5 * (c * 2 ** levels) ** 2  # alpha_low = 1
        out = wavelet_loss(tgt + c, tgt, cfg).item()
        assert out == pytest.approx(expected, abs=1e-12)

    def test_single_pixel_flip_hits_details(self):
        rng = np.random.default_rng(2)
        tgt = t64(rng.normal(size=(8, 8)))
        pred = tgt.clone()
        pred[3, 5] += 1.0
        cfg = RegressionLossConfig(alpha_low=0.0)
        assert wavelet_loss(pred, tgt, cfg).item() > 0.0


class TestTotalLoss:
    def test_zero_iff_equal_and_positive_otherwise(self):
        rng = np.random.default_rng(3)
        x = t64(rng.normal(size=(8, 8)))
        cfg = RegressionLossConfig()
        assert total_regression_loss(x, x, cfg).item() == 0.0
        assert total_regression_loss(x + 0.1, x, cfg).item() > 0.0

    def test_alpha_one_is_multiscale(self):
        rng = np.random.default_rng(4)
        pred, tgt = t64(rng.normal(size=(8, 8))), t64(rng.normal(size=(8, 8)))
        cfg = RegressionLossConfig(alpha_total=1.0)
        assert total_regression_loss(pred, tgt, cfg).item() == pytest.approx(
            multiscale_loss(pred, tgt, cfg).item()
        )

    def test_default_alpha_is_half(self):
        assert RegressionLossConfig().alpha_total == 0.5

    @given(hnp.arrays(np.float64, (8, 8), elements=st.floats(-1, 1)))
    def test_symmetric_in_error(self, err):
        tgt = t64(np.linspace(0, 1, 64).reshape(8, 8))
        e = t64(err)
        cfg = RegressionLossConfig()
        a = total_regression_loss(tgt + e, tgt, cfg).item()
        b = total_regression_loss(tgt - e, tgt, cfg).item()
        assert a == pytest.approx(b, rel=1e-12, abs=1e-12)

    def test_finite_difference_gradient(self):
        rng = np.random.default_rng(5)
        tgt = t64(rng.normal(size=(8, 8)) * 0.3)
        pred0 = rng.normal(size=(8, 8)) * 0.3
        valid = torch.from_numpy(rng.random((8, 8)) > 0.15)
        cfg = RegressionLossConfig()

        pred = torch.tensor(pred0, dtype=torch.float64, requires_grad=True)
        loss = total_regression_loss(pred, tgt, cfg, valid)
        loss.backward()
        analytic = pred.grad.numpy()

        eps = 1e-6
        for idx in [(0, 0), (3, 4), (7, 7), (2, 6), (5, 1)]:
            up, down = pred0.copy(), pred0.copy()
            up[idx] += eps
            down[idx] -= eps
            fd = (
                total_regression_loss(t64(up), tgt, cfg, valid).item()
                - total_regression_loss(t64(down), tgt, cfg, valid).item()
            ) / (2 * eps)
            denom = max(abs(fd), abs(analytic[idx]), 1e-8)
            assert abs(fd - analytic[idx]) / denom < 1e-3


class TestComboClassification:
    def test_perfect_saturated_predictions(self):
        gt = torch.tensor([[[0, 1], [1, 0]]])
        logits = torch.where(gt == 1, 50.0, -50.0).unsqueeze(1).double()
        loss = combo_classification_loss(logits, gt)
        assert loss.item() == pytest.approx(0.0, abs=1e-6)

    def test_uniform_logits_balanced_focal_term(self):
        # p = 0.5 everywhere, gamma = 2: focal = 0.25 * ln 2 per pixel; the
        # Dice term at p=0.5 on a balanced mask evaluates in closed form too.
        n = 16
        gt = torch.zeros(1, 4, 4, dtype=torch.long)
        gt.view(-1)[: n // 2] = 1
        logits = torch.zeros(1, 1, 4, 4, dtype=torch.float64)
        cfg = ClassificationLossConfig()
        w = 1.0 / (n / 2) ** 2
        inter = w * (0.5 * n / 2) * 2
        sums = w * (0.5 * n + n / 2) * 2
        dice_expected = 1.0 - (2 * inter + cfg.dice_smooth) / (sums + cfg.dice_smooth)
        expected = dice_expected + 0.25 * math.log(2.0)
        assert combo_classification_loss(logits, gt, config=cfg).item() == pytest.approx(
            expected, abs=1e-9
        )

    def test_all_ignored_raises(self):
        logits = torch.zeros(1, 3, 2, 2)
        mask = torch.full((1, 2, 2), -1, dtype=torch.long)
        with pytest.raises(ValueError, match="empty loss support"):
            combo_classification_loss(logits, mask)

    def test_ignored_pixels_do_not_affect_loss(self):
        rng = np.random.default_rng(6)
        logits = t64(rng.normal(size=(1, 3, 4, 4)))
        mask = torch.from_numpy(rng.integers(0, 3, (1, 4, 4))).long()
        base = combo_classification_loss(logits, mask).item()
        noisy = logits.clone()
        mask2 = mask.clone()
        mask2[0, 0, 0] = -1
        noisy[0, :, 0, 0] = 10.0
        ref = combo_classification_loss(logits.clone(), mask2).item()
        out = combo_classification_loss(noisy, mask2).item()
        assert out == pytest.approx(ref, abs=1e-12)
        assert base != pytest.approx(ref, abs=1e-12)

    def test_three_class_logits(self):
        logits = torch.zeros(1, 3, 2, 2, dtype=torch.float64)
        mask = torch.tensor([[[0, 1], [2, 1]]])
        loss = combo_classification_loss(logits, mask)
        assert loss.item() > 0


class TestConfigValidation:
    def test_bad_scales(self):
        with pytest.raises(ValueError):
            RegressionLossConfig(scales=(1,))

    def test_bad_alpha(self):
        with pytest.raises(ValueError):
            RegressionLossConfig(alpha_total=1.5)

    def test_weights_per_level(self):
        with pytest.raises(ValueError):
            RegressionLossConfig(wavelet_levels=3, detail_weights=(1.0,))

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            RegressionLossConfig(wavelet_family="coif1")
