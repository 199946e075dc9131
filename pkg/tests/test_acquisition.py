"""
Testes da simulação: phantoms, bobinas, máscaras e pares de treino
"""

import numpy as np
import pytest

from spicer.exceptions import ConfigError, ShapeError
from spicer.models.enums import MaskKind
from spicer.models.types import SamplingMask
from spicer.services.acquisition import (
    accel_step,
    build_dataset,
    make_coil_maps,
    make_mask,
    make_phantom,
    make_training_pair,
    mask_preset,
)
from spicer.services.numerics import rss


class TestPhantom:
    """Testes dos phantoms."""

    def test_shepp_logan_range(self):
        x = make_phantom(64, 64, kind="shepp_logan")
        assert x.shape == (64, 64)
        assert np.abs(x).max() <= 1.0
        assert np.abs(x).max() > 0.5

    def test_smooth_random_deterministic(self):
        a = make_phantom(32, 32, seed=4, kind="smooth_random")
        b = make_phantom(32, 32, seed=4, kind="smooth_random")
        c = make_phantom(32, 32, seed=5, kind="smooth_random")
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)
        assert np.abs(a).max() == pytest.approx(1.0)

    def test_too_small(self):
        with pytest.raises(ShapeError):
            make_phantom(16, 16, kind="shepp_logan")


class TestCoilMaps:
    """Testes dos mapas de sensibilidade simulados."""

    @pytest.mark.parametrize("n_c", [2, 8])
    def test_rss_normalized(self, n_c):
        S = make_coil_maps(n_c, 32, 32, seed=1)
        np.testing.assert_allclose(rss(S.maps), 1.0, atol=1e-12)
        assert S.fov.all()

    def test_invalid_coil_count(self):
        with pytest.raises(ConfigError):
            make_coil_maps(1, 32, 32)
        with pytest.raises(ConfigError):
            make_coil_maps(33, 32, 32)


class TestMasks:
    """Testes das máscaras cartesianas."""

    @pytest.mark.parametrize("R,acs,expected", [(4, 24, 0.32), (6, 24, 0.24), (8, 8, 0.15), (10, 5, 0.12)])
    def test_preset_rates(self, R, acs, expected):
        """Família de máscaras: ~32%, 24%, 15% e 12% das linhas em 256."""
        mask = mask_preset(256, R)
        assert mask.acs_lines == tuple(range(128 - acs // 2, 128 - acs // 2 + acs))
        assert mask.sampling_rate == pytest.approx(expected, abs=0.01)

    def test_equispaced_lines(self):
        mask = make_mask(32, 4, 4, offset=1)
        outside = set(mask.selected_lines) - set(mask.acs_lines)
        assert all((r - 1) % 4 == 0 for r in outside)
        assert set(mask.acs_lines) <= set(mask.selected_lines)

    def test_random_matches_line_budget(self):
        eq = make_mask(64, 4, 8)
        rnd = make_mask(64, 4, 8, kind=MaskKind.RANDOM, seed=3)
        assert len(rnd.selected_lines) == len(eq.selected_lines)
        assert rnd.acs_lines == eq.acs_lines

    def test_full_acceleration_one(self):
        assert make_mask(16, 1, 0).sampling_rate == 1.0

    def test_accel_step_rounding(self):
        assert accel_step(2.5) == 3
        assert accel_step(4.0) == 4

    @pytest.mark.parametrize("kwargs", [dict(acs_count=300), dict(accel_R=0.5), dict(offset=4)])
    def test_invalid(self, kwargs):
        params = dict(height=256, accel_R=4, acs_count=24)
        params.update(kwargs)
        with pytest.raises(ConfigError):
            make_mask(**params)

    def test_non_contiguous_acs_rejected(self):
        with pytest.raises(ShapeError):
            SamplingMask(16, 16, (0, 1, 3, 4), (1, 3))

    def test_descriptor_round_trip(self):
        mask = make_mask(32, 4, 6, kind=MaskKind.RANDOM, seed=2)
        assert SamplingMask.from_descriptor(mask.to_descriptor()) == mask


class TestTrainingPairs:
    """Testes dos pares de medidas independentes."""

    def test_complementary_masks_shared_acs(self, phantom_32, coils_32):
        pair = make_training_pair(phantom_32, coils_32, 4, 8, noise_sigma=0.01, seed=1)
        m, m_prime = pair.y.mask, pair.y_prime.mask
        assert m.acs_lines == m_prime.acs_lines
        assert m.selected_lines != m_prime.selected_lines
        assert m_prime.offset == 2

    def test_noise_only_on_sampled_rows(self, phantom_32, coils_32):
        pair = make_training_pair(phantom_32, coils_32, 4, 8, noise_sigma=0.5, seed=1)
        unsampled = ~pair.y.mask.rows
        assert np.all(pair.y.data[:, unsampled, :] == 0)

    def test_noiseless_pair_agrees_on_shared_lines(self, phantom_32, coils_32):
        pair = make_training_pair(phantom_32, coils_32, 4, 8, noise_sigma=0.0, seed=1)
        acs = list(pair.y.mask.acs_lines)
        np.testing.assert_allclose(pair.y.data[:, acs], pair.y_prime.data[:, acs], atol=1e-14)

    def test_build_dataset_deterministic(self):
        a = build_dataset(2, 16, 16, 2, 2, 4, seed=9)
        b = build_dataset(2, 16, 16, 2, 2, 4, seed=9)
        for pa, pb in zip(a, b):
            np.testing.assert_array_equal(pa.y.data, pb.y.data)
            np.testing.assert_array_equal(pa.y_prime.data, pb.y_prime.data)
        assert a[0].ground_truth is not None and a[0].true_csm is not None
