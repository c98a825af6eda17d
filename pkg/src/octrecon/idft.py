"""Direct IDFT reconstruction, axial PSF analysis and the Dirichlet sampling kernel.

The reconstruction of a spectral vector ``i`` on the depth grid
``z'_p = z_offset + p * dz'`` is::

    r_idft[p] = (1/M) * sum_q i[q] * exp(j * 2 * z'_p * k_q)

with ``dz' = pi / (P * M * delta_k)`` for an oversampling (zero-padding)
factor ``P``. The fast path evaluates this with one FFT of length ``P*M``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .forward import EmissionSpectrum, Interferogram
from .grids import SpatialGrid, WavenumberGrid

RECON_METHODS = ("idft", "idft-deconv", "admm")


@dataclass(frozen=True, eq=False)
class ReconResult:
    """Reconstructed depth profile on ``z_grid``.

    ``values`` is complex for IDFT reconstructions and real for ADMM and
    deconvolution outputs; ``magnitude`` is always ``abs(values)``.
    """

    values: np.ndarray
    z_grid: SpatialGrid
    method: str
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in RECON_METHODS:
            raise InvalidArgumentError(f"unknown reconstruction method {self.method!r}")
        if np.shape(self.values) != (self.z_grid.n_count,):
            raise InvalidArgumentError(
                f"reconstruction has shape {np.shape(self.values)}, grid has {self.z_grid.n_count} nodes"
            )

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)


def _check_oversample(oversample):
    if int(oversample) != oversample or oversample < 1:
        raise InvalidArgumentError(f"oversample must be a positive integer, got {oversample}")
    return int(oversample)


def idft_matrix(k: WavenumberGrid, z_offset: float = 0.0, oversample: int = 1, rows=None) -> np.ndarray:
    """Explicit ``(P*M) x M`` IDFT matrix ``exp(j 2 z'_p k_q) / M``.

    Meant for small problems and as a reference for the FFT path.
    """
    oversample = _check_oversample(oversample)
    step = k.idft_step / oversample
    p = np.arange(oversample * k.m_count) if rows is None else np.asarray(rows)
    zp = z_offset + step * p
    return np.exp(2j * np.multiply.outer(zp, k.values)) / k.m_count


def _idft(values: np.ndarray, k: WavenumberGrid, z_offset: float, oversample: int, carrier_phase: bool):
    m = k.m_count
    length = oversample * m
    step = k.idft_step / oversample
    q = np.arange(m)
    shifted = values * np.exp(2j * q * k.delta_k * z_offset) if z_offset else values
    out = np.fft.ifft(shifted, n=length) * oversample
    if carrier_phase:
        out = out * np.exp(2j * k.k0 * (z_offset + step * np.arange(length)))
    return out, step


def reconstruct_idft(
    i: Interferogram,
    z_offset: float = 0.0,
    oversample: int = 1,
    positive_only: bool = True,
    carrier_phase: bool = True,
) -> ReconResult:
    """Direct IDFT reconstruction.

    Parameters
    ----------
    i : Interferogram
        Background-subtracted, k-linear spectral interferogram (``M >= 8``).
    z_offset : float
        Depth of the first reconstruction sample (m).
    oversample : int
        Zero-padding factor; the depth step becomes ``pi / (oversample * M * delta_k)``.
    positive_only : bool
        Keep only the ``oversample * M / 2`` positive-depth samples (mirror suppressed).
    carrier_phase : bool
        Include the ``exp(j 2 k0 z')`` factor of the explicit IDFT matrix. Without it the
        output is the plain baseband inverse FFT, which has the same magnitude.
    """
    if i.k_grid.m_count < 8:
        raise InvalidArgumentError("IDFT reconstruction needs at least 8 spectral samples")
    oversample = _check_oversample(oversample)
    out, step = _idft(i.values, i.k_grid, z_offset, oversample, carrier_phase)
    if positive_only:
        out = out[: out.size // 2]
    grid = SpatialGrid(z_offset, step, out.size)
    return ReconResult(out, grid, "idft", {"oversample": oversample, "z_offset": z_offset})


def measure_fwhm(y: np.ndarray, step: float, peak_index: int | None = None) -> float:
    """FWHM of the peak at ``peak_index`` (global maximum by default).

    Half-maximum crossings are located by linear interpolation between
    samples. Returns ``nan`` if the curve does not fall below half maximum
    on both sides.
    """
    y = np.asarray(y, dtype=float)
    peak = int(np.argmax(y)) if peak_index is None else int(peak_index)
    half = y[peak] / 2
    if not half > 0:
        return float("nan")
    right = peak
    while right < y.size - 1 and y[right] > half:
        right += 1
    left = peak
    while left > 0 and y[left] > half:
        left -= 1
    if y[right] > half or y[left] > half:
        return float("nan")
    z_right = right - 1 + (y[right - 1] - half) / (y[right - 1] - y[right])
    z_left = left + (half - y[left]) / (y[left + 1] - y[left])
    return float((z_right - z_left) * step)


@dataclass(frozen=True, eq=False)
class PsfReport:
    """Axial PSF ``|IDFT(s)|`` centred on zero depth.

    ``psf[j]`` is the PSF at depth offset ``(j - centre) * delta_z`` where
    ``centre = len(psf) // 2``.
    """

    psf: np.ndarray
    fwhm: float
    peak_position: float
    delta_z: float

    @property
    def offsets(self) -> np.ndarray:
        return self.delta_z * (np.arange(self.psf.size) - self.psf.size // 2)

    def kernel(self, half_width: int | None = None) -> np.ndarray:
        """Odd-length centred kernel of ``2*half_width + 1`` samples, normalised to unit sum.

        The default half width spans four FWHM.
        """
        if half_width is None:
            half_width = int(np.ceil(4 * self.fwhm / self.delta_z))
        centre = self.psf.size // 2
        half_width = int(min(half_width, centre - 1))
        kern = self.psf[centre - half_width: centre + half_width + 1].astype(float)
        total = kern.sum()
        if not (np.all(np.isfinite(kern)) and total > 0):
            raise InvalidArgumentError("PSF kernel has no finite positive mass")
        return kern / total


def psf_report(s: EmissionSpectrum, oversample: int = 1, fwhm_oversample: int = 8) -> PsfReport:
    """Axial PSF of an emission spectrum and its FWHM.

    The PSF is sampled on the ``oversample``-times zero-padded reconstruction
    grid; the FWHM is measured on a grid at least ``fwhm_oversample`` times finer
    than the native one.
    """
    if not np.any(s.values > 0):
        raise InvalidArgumentError("emission spectrum is all zero")
    oversample = _check_oversample(oversample)
    fine = max(oversample, _check_oversample(fwhm_oversample))
    spectrum = Interferogram(s.values, s.k_grid)

    fine_psf, fine_step = _idft(spectrum.values, s.k_grid, 0.0, fine, carrier_phase=False)
    fine_psf = np.fft.fftshift(np.abs(fine_psf))
    width = measure_fwhm(fine_psf, fine_step)
    j = int(np.argmax(fine_psf))
    offset = 0.0
    if 0 < j < fine_psf.size - 1:
        a, b, c = fine_psf[j - 1: j + 2]
        denom = a - 2 * b + c
        offset = 0.5 * (a - c) / denom if denom != 0 else 0.0
    peak_position = (j + offset - fine_psf.size // 2) * fine_step

    psf, step = _idft(spectrum.values, s.k_grid, 0.0, oversample, carrier_phase=False)
    return PsfReport(np.fft.fftshift(np.abs(psf)), width, float(peak_position), step)


@dataclass(frozen=True, eq=False)
class DirichletResponse:
    """Positive-half sampling kernel ``g_{z_n,+}(z'_m)`` for one source depth."""

    source_position: float
    response: np.ndarray
    z_grid: SpatialGrid

    @property
    def kernel_magnitude(self) -> np.ndarray:
        return np.abs(self.response)


def _dirichlet_ratio(x: np.ndarray, m: int) -> np.ndarray:
    """``sin(M x) / sin(x)`` with the removable singularities at ``x = j*pi`` filled in."""
    sin_x = np.sin(x)
    singular = np.abs(sin_x) < 1e-12
    safe = np.where(singular, 1.0, sin_x)
    ratio = np.sin(m * x) / safe
    limit = m * np.cos(m * x) / np.cos(x)
    return np.where(singular, limit, ratio)


def _kernel_terms(z_n: float, k: WavenumberGrid):
    m = k.m_count
    idx = np.arange(m)
    centre_k = k.k0 + (m - 1) / 2 * k.delta_k
    plus = np.exp(-2j * centre_k * z_n) * _dirichlet_ratio(k.delta_k * z_n - idx * np.pi / m, m)
    minus = np.exp(2j * centre_k * z_n) * _dirichlet_ratio(k.delta_k * z_n + idx * np.pi / m, m)
    return plus, minus


def dirichlet_response(z_n: float, k: WavenumberGrid) -> DirichletResponse:
    """Closed-form positive-half kernel of a point source at depth ``z_n``.

    ``g(m) = exp(-j 2 (k0 + (M-1)/2 dk) z_n) * sin(M x_m) / sin(x_m)`` with
    ``x_m = dk z_n - m pi / M``, evaluated for ``m = 0..M-1``. It equals the
    centred-index DFT ``sum_q exp(-j 2 k_q z_n) exp(j 2 pi m (q - (M-1)/2) / M)``
    of the analytic fringe.
    """
    if z_n < 0:
        raise InvalidArgumentError("source depth must be non-negative")
    plus, _ = _kernel_terms(z_n, k)
    return DirichletResponse(float(z_n), plus, SpatialGrid(0.0, k.idft_step, k.m_count))


def dirichlet_kernel(z_n: float, k: WavenumberGrid) -> np.ndarray:
    """Both mirrored terms ``g_+ + g_-``: the response to the real fringe ``2 cos(2 k z_n)``."""
    if z_n < 0:
        raise InvalidArgumentError("source depth must be non-negative")
    plus, minus = _kernel_terms(z_n, k)
    return plus + minus


def shift_variance_map(z_values, k: WavenumberGrid) -> np.ndarray:
    """Rows of ``|g_{z,+}(z'_m)|`` for each source depth, shape ``(len(z_values), M)``."""
    z_values = np.atleast_1d(np.asarray(z_values, dtype=float))
    if z_values.size == 0:
        raise InvalidArgumentError("need at least one source depth")
    return np.vstack([dirichlet_response(z, k).kernel_magnitude for z in z_values])
