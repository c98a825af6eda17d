import numpy as np
import pytest

from octrecon import (
    EmissionSpectrum,
    InvalidArgumentError,
    ReflectivityProfile,
    SpatialGrid,
    WavenumberGrid,
    dirichlet_kernel,
    dirichlet_response,
    gaussian_spectrum,
    idft_matrix,
    psf_report,
    reconstruct_idft,
    shift_variance_map,
    simulate_interferogram,
)
from octrecon.forward import Interferogram, simulate_point_reflectors
from octrecon.idft import measure_fwhm

from oracles import dirichlet_direct, dirichlet_two_term_direct, idft_direct

# Exact continuous FWHM of |sum_m s_m exp(j 2 m dk z)| for the 892.8/103.4 nm Gaussian on the
# 791.6-994.0 nm, 2048-sample grid, found by bisection on direct sums.
CLIPPED_FWHM_103NM = 3.5671379804543792e-06


def flat(m, k0=7e6, dk=1000.0):
    k = WavenumberGrid(k0, dk, m)
    return EmissionSpectrum(np.ones(m), k)


class TestReconstruct:
    def test_fft_matches_explicit_matrix(self):
        rng = np.random.default_rng(0)
        k = WavenumberGrid(6.9e6, 1234.5, 64)
        i = Interferogram(rng.normal(size=64), k)
        for oversample, offset in [(1, 0.0), (3, 0.0), (2, 17.3e-6)]:
            fast = reconstruct_idft(i, z_offset=offset, oversample=oversample, positive_only=False)
            dense = idft_matrix(k, offset, oversample) @ i.values
            np.testing.assert_allclose(fast.values, dense, rtol=0, atol=1e-9 * np.abs(dense).max())

    def test_matches_direct_sum(self):
        rng = np.random.default_rng(1)
        k = WavenumberGrid(6.9e6, 800.0, 32)
        i = Interferogram(rng.normal(size=32), k)
        rec = reconstruct_idft(i, z_offset=3e-6, oversample=2)
        np.testing.assert_allclose(rec.values, idft_direct(i.values, k.values, rec.z_grid.values), atol=1e-12)

    def test_positive_half_and_grid(self):
        k = WavenumberGrid(6.9e6, 800.0, 32)
        rec = reconstruct_idft(Interferogram(np.ones(32), k), oversample=4)
        assert rec.values.size == 64
        assert rec.z_grid.delta_z == pytest.approx(k.idft_step / 4)
        assert rec.method == "idft"

    @pytest.mark.parametrize("m", [16, 64, 256])
    def test_matched_grid_identity(self, m):
        s = flat(m)
        z = SpatialGrid(0.0, s.k_grid.idft_step, m)
        for n in (0, 1, m // 3, m // 2 - 1):
            r = np.zeros(m)
            r[n] = 1.0 / z.delta_z
            rec = reconstruct_idft(simulate_interferogram(ReflectivityProfile(r, z), s), positive_only=False)
            mag = rec.magnitude
            expected = np.zeros(m)
            expected[n] += 0.5
            expected[(m - n) % m] += 0.5
            np.testing.assert_allclose(mag, expected, atol=1e-9)

    def test_carrier_phase_changes_phase_only(self):
        k = WavenumberGrid(6.9e6, 800.0, 32)
        i = Interferogram(np.random.default_rng(2).normal(size=32), k)
        a = reconstruct_idft(i)
        b = reconstruct_idft(i, carrier_phase=False)
        np.testing.assert_allclose(a.magnitude, b.magnitude, rtol=1e-12)

    def test_two_reflectors_ten_microns_apart(self):
        k = WavenumberGrid.from_wavelengths(791.6e-9, 994.0e-9, 2048)
        s = gaussian_spectrum(k, 892.8e-9, 103.4e-9)
        i = simulate_point_reflectors([100e-6, 110e-6], [1.0, 1.0], s)
        rec = reconstruct_idft(i, oversample=8)
        mag = rec.magnitude
        window = (rec.z_grid.values > 90e-6) & (rec.z_grid.values < 120e-6)
        zw, mw = rec.z_grid.values[window], mag[window]
        peaks = [j for j in range(1, mw.size - 1) if mw[j] > mw[j - 1] and mw[j] >= mw[j + 1] and mw[j] > 0.5 * mw.max()]
        assert len(peaks) == 2
        assert zw[peaks[1]] - zw[peaks[0]] == pytest.approx(10e-6, abs=rec.z_grid.delta_z)

    def test_too_few_samples(self):
        with pytest.raises(InvalidArgumentError):
            reconstruct_idft(Interferogram(np.ones(4), WavenumberGrid(1e6, 1e3, 4)))

    def test_bad_oversample(self):
        with pytest.raises(InvalidArgumentError):
            reconstruct_idft(Interferogram(np.ones(16), WavenumberGrid(1e6, 1e3, 16)), oversample=0)


class TestPsf:
    def test_flat_spectrum_psf_is_dirichlet_peak(self):
        rep = psf_report(flat(64), oversample=1)
        assert rep.psf[rep.psf.size // 2] == pytest.approx(1.0)
        assert rep.peak_position == pytest.approx(0.0, abs=1e-15)
        off_peak = np.delete(rep.psf, rep.psf.size // 2)
        assert np.max(off_peak) < 1e-12

    def test_clipped_gaussian_fwhm(self):
        k = WavenumberGrid.from_wavelengths(791.6e-9, 994.0e-9, 2048)
        rep = psf_report(gaussian_spectrum(k, 892.8e-9, 103.4e-9))
        assert rep.fwhm == pytest.approx(CLIPPED_FWHM_103NM, rel=2e-3)

    def test_kernel_unit_sum_and_odd(self):
        k = WavenumberGrid.from_wavelengths(791.6e-9, 994.0e-9, 2048)
        rep = psf_report(gaussian_spectrum(k, 892.8e-9, 103.4e-9), oversample=2)
        kern = rep.kernel()
        assert kern.size % 2 == 1
        assert kern.sum() == pytest.approx(1.0)
        assert np.argmax(kern) == kern.size // 2

    def test_zero_spectrum(self):
        with pytest.raises(InvalidArgumentError, match="all zero"):
            psf_report(EmissionSpectrum(np.zeros(32), WavenumberGrid(7e6, 1e3, 32)))

    def test_measure_fwhm_triangle(self):
        y = np.array([0, 1, 2, 3, 4, 3, 2, 1, 0], dtype=float)
        assert measure_fwhm(y, 0.5) == pytest.approx(2.0)

    def test_measure_fwhm_edge(self):
        assert np.isnan(measure_fwhm(np.array([4.0, 3.0, 1.0]), 1.0))


class TestDirichlet:
    def test_closed_form_matches_direct_sum(self):
        k0, dk, m = 7.1e6, 2094.1, 48
        k = WavenumberGrid(k0, dk, m)
        for z_n in (0.0, 4.6e-6, 37.3e-6, k.idft_step * 5):
            closed = dirichlet_response(z_n, k).response
            np.testing.assert_allclose(closed, dirichlet_direct(z_n, k0, dk, m), atol=1e-9 * m)

    def test_two_term_matches_cosine_fringe(self):
        k0, dk, m = 7.1e6, 2094.1, 40
        k = WavenumberGrid(k0, dk, m)
        for z_n in (3.3e-6, 21.7e-6):
            np.testing.assert_allclose(dirichlet_kernel(z_n, k),
                                       dirichlet_two_term_direct(z_n, k0, dk, m), atol=1e-9 * m)

    def test_singularity_limit(self):
        k = WavenumberGrid(7e6, 1000.0, 32)
        g = dirichlet_response(3 * k.idft_step, k)
        mag = g.kernel_magnitude
        assert mag[3] == pytest.approx(32.0, rel=1e-12)
        assert np.max(np.delete(mag, 3)) < 1e-9

    def test_shift_variance_map_shape(self):
        k = WavenumberGrid(7e6, 2094.1, 64)
        grid = shift_variance_map([4.6e-6, 4.8e-6, 5.0e-6], k)
        assert grid.shape == (3, 64)
        with pytest.raises(InvalidArgumentError):
            shift_variance_map([], k)

    def test_negative_depth(self):
        with pytest.raises(InvalidArgumentError):
            dirichlet_response(-1e-6, WavenumberGrid(7e6, 1e3, 16))
