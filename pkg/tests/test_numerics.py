"""
Testes da aritmética complexa: FFT centrada, produtos internos e sementes
"""

import numpy as np
import pytest

from spicer.exceptions import NumericError, ShapeError
from spicer.services.numerics import (
    assert_finite,
    complex_dtype,
    complex_normal,
    fft2c,
    ifft2c,
    inner,
    real_dtype,
    rss,
    seeded_rng,
)


class TestFourier:
    """Testes da DFT centrada ortonormal."""

    def test_delta_at_center_gives_flat_spectrum(self):
        """Impulso no centro vira espectro constante 1/√(HW)."""
        img = np.zeros((16, 16), dtype=complex)
        img[8, 8] = 1.0
        ksp = fft2c(img)
        np.testing.assert_allclose(ksp, np.full((16, 16), 1.0 / 16.0), atol=1e-14)

    def test_constant_image_concentrates_at_dc(self):
        """Imagem constante concentra a energia em (H//2, W//2)."""
        ksp = fft2c(np.ones((8, 12), dtype=complex))
        assert np.argmax(np.abs(ksp)) == np.ravel_multi_index((4, 6), (8, 12))

    @pytest.mark.parametrize("shape", [(16, 16), (3, 32, 16), (8, 24, 40)])
    def test_round_trip_and_parseval(self, rng, shape):
        """ifft2c ∘ fft2c = identidade e a norma é preservada."""
        x = complex_normal(rng, shape)
        ksp = fft2c(x)
        np.testing.assert_allclose(ifft2c(ksp), x, atol=1e-12)
        assert np.linalg.norm(ksp) == pytest.approx(np.linalg.norm(x), rel=1e-12)

    def test_adjoint_identity(self, rng):
        """⟨F a, b⟩ = ⟨a, F⁻¹ b⟩."""
        a = complex_normal(rng, (32, 32))
        b = complex_normal(rng, (32, 32))
        lhs = inner(fft2c(a), b)
        rhs = inner(a, ifft2c(b))
        assert abs(lhs - rhs) <= 1e-10 * abs(lhs)

    def test_per_coil_transform(self, rng):
        """Pilhas multi-bobina transformam cada bobina independentemente."""
        stack = complex_normal(rng, (3, 16, 16))
        out = fft2c(stack)
        for k in range(3):
            np.testing.assert_allclose(out[k], fft2c(stack[k]), atol=1e-14)


class TestInner:
    """Testes do produto interno e do RSS."""

    def test_inner_conjugates_second_argument(self):
        a = np.array([[1 + 1j, 2.0]])
        b = np.array([[1j, 1.0]])
        assert inner(a, b) == pytest.approx((1 + 1j) * (-1j) + 2.0)

    def test_inner_shape_mismatch(self):
        with pytest.raises(ShapeError):
            inner(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_rss(self):
        c = np.stack([np.full((2, 2), 3.0 + 0j), np.full((2, 2), 4j)])
        np.testing.assert_allclose(rss(c), np.full((2, 2), 5.0))


class TestRandomness:
    """Testes dos geradores semeados."""

    def test_same_seed_same_stream(self):
        a = complex_normal(seeded_rng(42), (4, 4))
        b = complex_normal(seeded_rng(42), (4, 4))
        np.testing.assert_array_equal(a, b)

    def test_large_seed_accepted(self):
        """Sementes de 64 bits (e maiores) são mascaradas, não rejeitadas."""
        a = seeded_rng(2 ** 64 + 5).standard_normal(3)
        b = seeded_rng(5).standard_normal(3)
        np.testing.assert_array_equal(a, b)

    def test_complex_normal_variance(self):
        z = complex_normal(seeded_rng(0), 200_000, sigma=2.0)
        assert np.mean(np.abs(z) ** 2) == pytest.approx(4.0, rel=0.02)


class TestPrecision:
    """Testes dos tipos de precisão."""

    def test_dtypes(self):
        assert real_dtype("f32") == np.float32
        assert complex_dtype("f32") == np.complex64
        assert complex_dtype("f64") == np.complex128

    def test_assert_finite(self):
        with pytest.raises(NumericError):
            assert_finite(np.array([1.0, np.nan]), "teste")
