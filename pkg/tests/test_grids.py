import math

import numpy as np
import pytest

from octrecon import (
    InvalidArgumentError,
    ResourceError,
    SpatialGrid,
    WavenumberGrid,
    apply_system_matrix,
    apply_system_matrix_adjoint,
    build_system_matrix,
    system_operator,
)
from octrecon.units import format_length, parse_length

from oracles import cosine_matrix_loop

# Frozen from an independent pure-math evaluation of the 791.6-994.0 nm, 2048-sample grid.
METHODS_K0 = 6321111.97905391
METHODS_DK = 789.5513199788
METHODS_NOMINAL_STEP = 1.9438003952569167e-06
METHODS_IDFT_STEP = 1.94285127397017e-06
METHODS_DEPTH = 0.0019894797045454543


@pytest.fixture
def methods_grid():
    return WavenumberGrid.from_wavelengths(791.6e-9, 994.0e-9, 2048)


class TestWavenumberGrid:
    def test_methods_grid_constants(self, methods_grid):
        assert methods_grid.k0 == pytest.approx(METHODS_K0, rel=1e-13)
        assert methods_grid.delta_k == pytest.approx(METHODS_DK, rel=1e-9)
        assert methods_grid.nominal_resolution == pytest.approx(METHODS_NOMINAL_STEP, rel=1e-9)
        assert methods_grid.idft_step == pytest.approx(METHODS_IDFT_STEP, rel=1e-9)
        assert methods_grid.imaging_depth == pytest.approx(METHODS_DEPTH, rel=1e-9)

    def test_end_points_follow_wavelengths(self, methods_grid):
        assert methods_grid.lambda_max == pytest.approx(994.0e-9, rel=1e-12)
        assert methods_grid.lambda_min == pytest.approx(791.6e-9, rel=1e-12)
        assert methods_grid.values[-1] == pytest.approx(2 * math.pi / 791.6e-9, rel=1e-12)

    def test_reversed_bounds_rejected(self):
        with pytest.raises(InvalidArgumentError, match="strictly smaller"):
            WavenumberGrid.from_wavelengths(994.0e-9, 791.6e-9, 2048)

    @pytest.mark.parametrize("kwargs", [
        dict(k0=-1.0, delta_k=1.0, m_count=4),
        dict(k0=1.0, delta_k=0.0, m_count=4),
        dict(k0=1.0, delta_k=1.0, m_count=1),
        dict(k0=1.0, delta_k=1.0, m_count=2.5),
    ])
    def test_invalid_parameters(self, kwargs):
        with pytest.raises(InvalidArgumentError):
            WavenumberGrid(**kwargs)

    def test_subgrid(self, methods_grid):
        sub = methods_grid.subgrid(10, 100)
        np.testing.assert_allclose(sub.values, methods_grid.values[10:110], rtol=1e-15)
        with pytest.raises(InvalidArgumentError):
            methods_grid.subgrid(2000, 100)


class TestSpatialGrid:
    def test_values_and_support(self):
        z = SpatialGrid(1e-6, 0.5e-6, 4)
        np.testing.assert_allclose(z.values, [1e-6, 1.5e-6, 2e-6, 2.5e-6])
        assert z.support == pytest.approx(2e-6)
        assert z.index_of(1.74e-6) == 1
        assert z.index_of(1.0) == 3

    def test_covering(self):
        z = SpatialGrid.covering(10e-6, 20e-6, 1e-6)
        assert z.z0 == 10e-6 and z.n_count == 11

    @pytest.mark.parametrize("args", [(-1e-6, 1e-6, 3), (0.0, -1e-6, 3), (0.0, 1e-6, 0)])
    def test_invalid(self, args):
        with pytest.raises(InvalidArgumentError):
            SpatialGrid(*args)


class TestSystemMatrix:
    def test_scalar_cosines(self):
        k = WavenumberGrid(1.0e6, 0.5e6, 3)
        z = SpatialGrid(0.0, 1e-6, 3)
        expected = np.array([
            [1.0, -0.4161468365471424, -0.6536436208636119],
            [1.0, -0.9899924966004454, 0.9601702866503661],
            [1.0, -0.6536436208636119, -0.14550003380861354],
        ])
        np.testing.assert_allclose(build_system_matrix(k, z).entries, expected, rtol=0, atol=1e-15)

    def test_matches_loop_oracle(self):
        k = WavenumberGrid(7.0e6, 800.0, 37)
        z = SpatialGrid(3e-6, 0.37e-6, 23)
        dense = build_system_matrix(k, z).entries
        np.testing.assert_allclose(dense, cosine_matrix_loop(k.values, z.values), rtol=0, atol=1e-12)

    def test_dense_is_read_only(self):
        c = build_system_matrix(WavenumberGrid(1e6, 1e3, 4), SpatialGrid(0, 1e-6, 3)).entries
        with pytest.raises(ValueError):
            c[0, 0] = 2.0

    def test_memory_budget(self):
        k = WavenumberGrid(1e6, 1e3, 2048)
        z = SpatialGrid(0, 1e-7, 100_000)
        with pytest.raises(ResourceError, match="implicit operator"):
            build_system_matrix(k, z)

    def test_implicit_handles_grids_too_large_for_dense(self):
        k = WavenumberGrid(7e6, 800.0, 64)
        z = SpatialGrid(0, 1e-8, 3_000_000)
        r = np.zeros(z.n_count)
        r[[5, 1_234_567]] = [1.0, -2.0]
        out = apply_system_matrix(r, k, z)
        expected = np.cos(2 * k.values * z.values[5]) - 2 * np.cos(2 * k.values * z.values[1_234_567])
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_adjoint_identity(self):
        rng = np.random.default_rng(3)
        k = WavenumberGrid(7e6, 900.0, 50)
        z = SpatialGrid(1e-6, 0.3e-6, 70)
        x, y = rng.normal(size=70), rng.normal(size=50)
        lhs = y @ apply_system_matrix(x, k, z)
        rhs = x @ apply_system_matrix_adjoint(y, k, z)
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_linear_operator(self):
        rng = np.random.default_rng(4)
        k = WavenumberGrid(7e6, 900.0, 30)
        z = SpatialGrid(0, 0.5e-6, 40)
        w = rng.uniform(0.5, 1.5, 30)
        op = system_operator(k, z, w)
        dense = w[:, None] * build_system_matrix(k, z).entries
        x = rng.normal(size=40)
        np.testing.assert_allclose(op.matvec(x), dense @ x, atol=1e-12)
        np.testing.assert_allclose(op.rmatvec(x[:30]), dense.T @ x[:30], atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            apply_system_matrix(np.ones(3), WavenumberGrid(1e6, 1e3, 4), SpatialGrid(0, 1e-6, 5))


class TestUnits:
    def test_equivalent_spellings(self):
        values = {parse_length(t) for t in ("892.8nm", "0.8928um", "8.928e-7m", "0.0008928mm", "0.8928µm")}
        assert len(values) == 1
        assert values.pop() == pytest.approx(892.8e-9, rel=1e-15)

    @pytest.mark.parametrize("text", ["892.8", "1 parsec", "nm", "", "1e-3 km"])
    def test_rejects_missing_or_unknown_unit(self, text):
        with pytest.raises(InvalidArgumentError):
            parse_length(text)

    def test_format(self):
        assert format_length(3.4e-6) == "3.4um"
