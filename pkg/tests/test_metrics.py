"""
Testes das métricas de imagem e do NMSE de mapas
"""

import math

import numpy as np
import pytest

from spicer.exceptions import MetricError, ShapeError
from spicer.models.types import CoilSensitivities
from spicer.services.metrics import csm_nmse, image_metrics, nmse, psnr, ssim


@pytest.fixture
def ref(phantom_32):
    return np.abs(phantom_32)


class TestImageMetrics:
    """Testes de PSNR, SSIM e NMSE."""

    def test_identical_images(self, ref):
        assert psnr(ref, ref) == math.inf
        assert nmse(ref, ref) == 0.0
        assert ssim(ref, ref) == pytest.approx(1.0)

    def test_constant_offset_psnr(self):
        ref = np.ones((16, 16))
        assert psnr(ref + 0.1, ref) == pytest.approx(20.0)
        assert nmse(ref + 0.1, ref) == pytest.approx(0.01)

    def test_ssim_symmetric_for_equal_range(self, rng):
        a = rng.uniform(0, 1, (32, 32))
        b = np.clip(a + 0.05 * rng.standard_normal((32, 32)), 0, 1)
        assert ssim(a, b, data_range=1.0) == pytest.approx(ssim(b, a, data_range=1.0))
        assert ssim(a, b) < 1.0

    def test_region_restricts_comparison(self, ref):
        region = np.zeros(ref.shape, dtype=bool)
        region[:16] = True
        damaged = ref.copy()
        damaged[16:] += 1.0
        assert psnr(damaged, ref, region) == math.inf
        assert psnr(damaged, ref) < 10.0

    def test_zero_reference(self):
        zero = np.zeros((8, 8))
        with pytest.raises(MetricError):
            psnr(zero + 1.0, zero)
        with pytest.raises(MetricError):
            nmse(zero + 1.0, zero)

    def test_empty_region(self, ref):
        with pytest.raises(MetricError):
            psnr(ref, ref, np.zeros(ref.shape, dtype=bool))

    def test_shape_mismatch(self, ref):
        with pytest.raises(ShapeError):
            nmse(ref[:16], ref)

    def test_magnitudes_ignore_global_phase(self, phantom_32):
        values = image_metrics(phantom_32 * np.exp(1j * 0.7), phantom_32)
        assert values["psnr"] == math.inf or values["psnr"] > 250
        assert values["nmse"] < 1e-20


class TestCsmNmse:
    """Testes do NMSE dos mapas de sensibilidade."""

    def test_pixelwise_phase_is_removed(self, coils_32, rng):
        phase = np.exp(1j * rng.uniform(-np.pi, np.pi, coils_32.shape))
        rotated = CoilSensitivities(coils_32.maps * phase[None], coils_32.fov)
        assert csm_nmse(rotated, coils_32) < 1e-20

    def test_detects_amplitude_errors(self, coils_32):
        scaled = CoilSensitivities(coils_32.maps * 1.1, coils_32.fov)
        assert csm_nmse(scaled, coils_32) == pytest.approx(0.01)

    def test_empty_fov(self, coils_32):
        with pytest.raises(MetricError):
            csm_nmse(coils_32, coils_32, np.zeros(coils_32.shape, dtype=bool))
