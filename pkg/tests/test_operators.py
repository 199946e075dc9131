"""
Testes dos operadores lineares: adjuntos, modelo direto e gradiente de consistência
"""

import numpy as np
import pytest

from conftest import central_difference, relative_error
from spicer.exceptions import ShapeError
from spicer.models.types import CoilSensitivities, MultiCoilKspace, SamplingMask
from spicer.services.acquisition import make_mask
from spicer.services.numerics import complex_normal, fft2c, ifft2c, inner, seeded_rng
from spicer.services.operators import (
    ForwardModel,
    adjoint,
    coil_combine,
    coil_expand,
    dc_gradient,
    dc_objective,
    forward,
    masked_normal,
)


def _random_instance(seed: int, size: int, n_c: int):
    rng = seeded_rng(seed)
    maps = complex_normal(rng, (n_c, size, size))
    S = CoilSensitivities(maps, np.ones((size, size), dtype=bool))
    mask = make_mask(size, accel_R=float(rng.integers(1, 5)), acs_count=4, offset=0, width=size)
    return rng, S, mask


class TestAdjointIdentities:
    """⟨Op a, b⟩ = ⟨a, Opᴴ b⟩ para expand/combine e A."""

    def test_hundred_seeded_instances(self):
        """100 instâncias com tamanhos {16, 32, 64} e n_c ∈ {2, 4, 8}."""
        sizes, coils = (16, 32, 64), (2, 4, 8)
        for i in range(100):
            rng, S, mask = _random_instance(i, sizes[i % 3], coils[(i // 3) % 3])
            x = complex_normal(rng, S.shape)
            c = complex_normal(rng, S.maps.shape)
            lhs, rhs = inner(coil_expand(x, S), c), inner(x, coil_combine(c, S))
            assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1e-300)

            model = ForwardModel(S, mask)
            y = complex_normal(rng, S.maps.shape)
            lhs, rhs = inner(model.apply(x), y), inner(x, model.apply_adjoint(y))
            assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1e-300)

    def test_masked_normal_is_self_adjoint(self, rng, equispaced_mask_32):
        a = complex_normal(rng, (2, 32, 32))
        b = complex_normal(rng, (2, 32, 32))
        lhs = inner(masked_normal(a, equispaced_mask_32), b)
        rhs = inner(a, masked_normal(b, equispaced_mask_32))
        assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


class TestForwardModel:
    """Testes do modelo direto A = P F S."""

    def test_full_mask_adjoint_recovers_image(self, phantom_32, coils_32):
        """Com máscara cheia e mapas normalizados, AᴴA x = x."""
        model = ForwardModel(coils_32, SamplingMask.full(32, 32))
        np.testing.assert_allclose(model.normal(phantom_32), phantom_32, atol=1e-12)

    def test_unsampled_rows_are_zero(self, phantom_32, coils_32, equispaced_mask_32):
        y = forward(phantom_32, ForwardModel(coils_32, equispaced_mask_32))
        assert isinstance(y, MultiCoilKspace)
        assert np.all(y.data[:, ~equispaced_mask_32.rows, :] == 0)

    def test_adjoint_accepts_kspace_or_array(self, phantom_32, coils_32, equispaced_mask_32):
        model = ForwardModel(coils_32, equispaced_mask_32)
        y = forward(phantom_32, model)
        np.testing.assert_array_equal(adjoint(y, model), adjoint(y.data, model))

    def test_shape_mismatch(self, coils_32):
        with pytest.raises(ShapeError):
            ForwardModel(coils_32, SamplingMask.full(16, 16))
        with pytest.raises(ShapeError):
            coil_expand(np.zeros((16, 16), dtype=complex), coils_32)


class TestDataConsistencyGradient:
    """Gradiente de g(c) = ½‖P F c − y‖²."""

    @pytest.fixture
    def instance(self):
        rng = seeded_rng(99)
        mask = make_mask(16, 2, 4, width=16)
        truth = complex_normal(rng, (2, 16, 16))
        y = MultiCoilKspace(fft2c(truth) * mask.array()[None], mask)
        return rng, y

    def test_matches_central_differences(self, instance):
        """Re⟨∇g, d⟩ coincide com diferenças centrais em várias direções."""
        rng, y = instance
        c = complex_normal(rng, (2, 16, 16))
        grad = dc_gradient(c, y)
        analytic, numeric = [], []
        for _ in range(8):
            d = complex_normal(rng, c.shape)
            analytic.append(float(np.real(np.vdot(grad, d))))
            numeric.append(central_difference(lambda t: dc_objective(c + t * d, y)))
        assert relative_error(numeric, analytic) <= 1e-6

    def test_consistent_data_zero_gradient(self, instance):
        """Imagens cujo k-space amostrado coincide com y têm gradiente nulo."""
        _, y = instance
        c = ifft2c(y.data)
        assert np.max(np.abs(dc_gradient(c, y))) <= 1e-12
