"""
Testes da estimação de mapas de sensibilidade
"""

import logging

import numpy as np
import pytest

from conftest import central_difference, relative_error
from spicer.exceptions import AcsError, CalibrationError, ConfigError
from spicer.ml.cnn import init_cnn
from spicer.models.types import MultiCoilKspace, SamplingMask
from spicer.services.acquisition import make_coil_maps, make_mask, make_phantom, simulate_kspace
from spicer.services.csm import (
    estimate_csm_classical,
    estimate_csm_network,
    extract_acs,
    fov_support,
    rss_normalize,
    rss_normalize_backward,
)
from spicer.services.metrics import csm_nmse
from spicer.services.numerics import complex_normal, rss, seeded_rng


@pytest.fixture
def measurement(phantom_32, coils_32):
    mask = make_mask(32, 4, 8)
    return simulate_kspace(phantom_32, coils_32, mask, 0.0, seeded_rng(0))


class TestAcs:
    """Testes da extração do bloco ACS."""

    def test_only_acs_rows_survive(self, measurement):
        acs = extract_acs(measurement)
        outside = ~acs.mask.rows
        assert np.all(acs.data[:, outside] == 0)
        assert acs.mask.selected_lines == measurement.mask.acs_lines

    def test_missing_acs(self, phantom_32, coils_32):
        y = simulate_kspace(phantom_32, coils_32, make_mask(32, 4, 0), 0.0, seeded_rng(0))
        with pytest.raises(AcsError):
            extract_acs(y)


class TestNormalization:
    """Testes da normalização RSS e do suporte do FOV."""

    def test_rss_one_inside_zero_outside(self, rng):
        maps = complex_normal(rng, (3, 16, 16))
        fov = np.zeros((16, 16), dtype=bool)
        fov[4:12, 4:12] = True
        S = rss_normalize(maps, fov)
        np.testing.assert_allclose(rss(S.maps)[fov], 1.0, atol=1e-12)
        assert np.all(S.maps[:, ~fov] == 0)

    def test_pixels_below_floor_leave_support(self, rng, caplog):
        """RSS nulo dentro do FOV: pixel sai do suporte, fica zerado e é contado no aviso."""
        maps = complex_normal(rng, (3, 16, 16))
        maps[:, 5, 6] = 0
        maps[:, 9, 9] = 0
        fov = np.zeros((16, 16), dtype=bool)
        fov[4:12, 4:12] = True
        with caplog.at_level(logging.WARNING, logger="spicer.services.csm"):
            S = rss_normalize(maps, fov)
        assert not S.fov[5, 6] and not S.fov[9, 9]
        assert S.fov.sum() == fov.sum() - 2
        assert np.all(S.maps[:, 5, 6] == 0)
        np.testing.assert_allclose(rss(S.maps)[S.fov], 1.0, atol=1e-12)
        assert "2 pixels" in caplog.text

    def test_all_pixels_below_floor(self):
        fov = np.ones((8, 8), dtype=bool)
        with pytest.raises(CalibrationError, match="64"):
            rss_normalize(np.zeros((2, 8, 8), dtype=complex), fov)

    def test_fov_threshold_bounds(self):
        with pytest.raises(ConfigError):
            fov_support(np.ones((1, 8, 8)), 1.5)

    def test_fov_closes_small_holes(self):
        img = np.ones((1, 16, 16), dtype=complex)
        img[0, 8, 8] = 0.0
        assert not fov_support(img, 0.1)[8, 8]
        img[0, 8, 8] = 0.05
        assert fov_support(img, 0.1)[8, 8]

    def test_backward_matches_finite_differences(self, rng):
        """Cotangente de q ↦ q/RSS(q) contra diferenças centrais."""
        q = complex_normal(rng, (2, 8, 8)) + 0.5
        fov = np.ones((8, 8), dtype=bool)
        weights = complex_normal(rng, q.shape)

        def objective(qq):
            return float(np.real(np.vdot(weights, rss_normalize(qq, fov).maps)))

        grad = rss_normalize_backward(q, fov, weights)
        analytic, numeric = [], []
        for _ in range(6):
            d = complex_normal(rng, q.shape)
            analytic.append(float(np.real(np.vdot(grad, d))))
            numeric.append(central_difference(lambda t: objective(q + t * d)))
        assert relative_error(numeric, analytic) <= 1e-6


class TestClassicalEstimator:
    """Testes do estimador de razão ACS."""

    def test_full_sampling_recovers_true_maps(self, phantom_32, coils_32):
        """Objeto real positivo e amostragem completa: Ŝ = S* dentro do FOV."""
        y = simulate_kspace(phantom_32, coils_32, SamplingMask.full(32, 32), 0.0, seeded_rng(0))
        S = estimate_csm_classical(y, fov_threshold=0.1)
        np.testing.assert_allclose(S.maps[:, S.fov], coils_32.maps[:, S.fov], atol=1e-10)

    def test_rss_normalized_on_fov(self, measurement):
        S = estimate_csm_classical(measurement)
        np.testing.assert_allclose(rss(S.maps)[S.fov], 1.0, atol=1e-12)
        assert S.fov.any() and not S.fov.all()

    def test_all_zero_acs(self):
        mask = make_mask(16, 2, 4)
        y = MultiCoilKspace(np.zeros((2, 16, 16), dtype=complex), mask)
        with pytest.raises(AcsError):
            estimate_csm_classical(y)

    def test_error_grows_as_acs_shrinks(self):
        x = make_phantom(64, 64, kind="shepp_logan")
        true = make_coil_maps(4, 64, 64, seed=1)
        estimates = [
            estimate_csm_classical(simulate_kspace(x, true, make_mask(64, 4, acs), 0.0, seeded_rng(0)))
            for acs in (24, 8, 5)
        ]
        region = np.logical_and.reduce([S.fov for S in estimates])
        errors = [csm_nmse(S, true, region) for S in estimates]
        assert errors[0] <= errors[1] <= errors[2]


class TestNetworkEstimator:
    """Testes do estimador P_φ."""

    def test_identity_init_matches_classical(self, measurement):
        """Camada final nula + resíduo: P_φ é a identidade e Ŝ coincide com o estimador clássico."""
        phi = init_cnn(8, 8, (4, 8), residual=True, rng=seeded_rng(1))
        learned = estimate_csm_network(measurement, phi)
        classical = estimate_csm_classical(measurement)
        np.testing.assert_array_equal(learned.fov, classical.fov)
        np.testing.assert_allclose(learned.maps, classical.maps, atol=1e-12)

    def test_channel_mismatch(self, measurement):
        phi = init_cnn(4, 4, (4, 8), residual=True, rng=seeded_rng(1))
        with pytest.raises(ConfigError):
            estimate_csm_network(measurement, phi)
