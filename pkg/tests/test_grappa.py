"""
Testes do GRAPPA: calibração no ACS e preenchimento das linhas ausentes
"""

import numpy as np
import pytest

from spicer.exceptions import CalibrationError, ConfigError
from spicer.models.types import CoilSensitivities, SamplingMask
from spicer.services.acquisition import make_coil_maps, make_mask, make_phantom, simulate_kspace
from spicer.services.baselines import zero_filled_recon
from spicer.services.grappa import grappa, grappa_calibrate, minimum_acs
from spicer.services.metrics import psnr
from spicer.services.numerics import complex_normal, seeded_rng
from spicer.services.operators import ForwardModel


def plane_wave_coils(n_c: int, height: int, width: int) -> CoilSensitivities:
    """Rampas de fase ao longo das linhas: cada bobina desloca o k-space de k linhas"""
    rows = np.arange(height)[:, None] * np.ones((1, width))
    maps = np.stack([np.exp(2j * np.pi * k * rows / height) for k in range(n_c)]) / np.sqrt(n_c)
    return CoilSensitivities(maps, np.ones((height, width), dtype=bool))


class TestGrappa:
    """Testes do GRAPPA equiespaçado."""

    def test_minimum_acs(self):
        assert minimum_acs(2, 4) == 7
        assert minimum_acs(4, 4) == 13

    def test_acquired_rows_untouched(self, phantom_32, coils_32):
        mask = make_mask(32, 2, 12)
        y = simulate_kspace(phantom_32, coils_32, mask, 1e-3, seeded_rng(0))
        filled = grappa(y)
        rows = list(mask.selected_lines)
        assert np.array_equal(filled.data[:, rows], y.data[:, rows])
        assert len(filled.mask.selected_lines) == 32

    def test_exact_for_plane_wave_coils(self, rng):
        H = W = 32
        S = plane_wave_coils(4, H, W)
        x = complex_normal(rng, (H, W))
        mask = make_mask(H, 2, 16)
        y = simulate_kspace(x, S, mask, 0.0, rng)

        kernels = grappa_calibrate(y, (5, 4), ridge=1e-12)
        assert kernels[1].residual <= 1e-6

        filled = grappa(y, (5, 4), ridge=1e-12)
        truth = ForwardModel(S, SamplingMask.full(H, W)).apply(x)
        interior = slice(4, H - 6)
        err = np.linalg.norm(filled.data[:, interior] - truth[:, interior])
        assert err / np.linalg.norm(truth[:, interior]) <= 1e-6

    def test_beats_zero_filled(self):
        x = make_phantom(64, 64, kind="shepp_logan")
        S = make_coil_maps(8, 64, 64, seed=4)
        y = simulate_kspace(x, S, make_mask(64, 4, 24), 0.0, seeded_rng(0))
        ref = np.abs(x)
        assert psnr(np.abs(zero_filled_recon(grappa(y))), ref) > psnr(np.abs(zero_filled_recon(y)), ref)

    def test_insufficient_acs(self, phantom_32, coils_32):
        y = simulate_kspace(phantom_32, coils_32, make_mask(32, 4, 8), 0.0, seeded_rng(0))
        with pytest.raises(CalibrationError, match="13"):
            grappa(y, (5, 4))

    def test_full_mask_is_identity(self, phantom_32, coils_32):
        y = simulate_kspace(phantom_32, coils_32, make_mask(32, 1, 32), 0.0, seeded_rng(0))
        np.testing.assert_array_equal(grappa(y).data, y.data)

    def test_random_mask_rejected(self, phantom_32, coils_32):
        mask = make_mask(32, 4, 8, kind="random", seed=1)
        y = simulate_kspace(phantom_32, coils_32, mask, 0.0, seeded_rng(0))
        with pytest.raises(ConfigError):
            grappa(y, (5, 2))
