"""Lucy-Richardson deconvolution of IDFT magnitude profiles."""

import numpy as np
from scipy import ndimage

from .errors import InvalidArgumentError
from .idft import PsfReport, ReconResult

BOUNDARIES = {"reflect": "reflect", "periodic": "wrap"}


def richardson_lucy_1d(data, kernel, iterations=20, tol=1e-4, boundary="reflect", callback=None):
    """Multiplicative Richardson-Lucy iterations on a 1-D non-negative signal.

    Parameters
    ----------
    data : array_like
        Observed non-negative signal.
    kernel : array_like
        Odd-length PSF centred on its middle sample. Normalised to unit sum here.
    iterations : int
        Maximum number of updates.
    tol : float
        Stop once ``max |update - 1|`` over the support of the estimate drops below ``tol``.
    boundary : {"reflect", "periodic"}
        Edge extension. ``"periodic"`` conserves the total flux exactly.
    callback : callable, optional
        Called as ``callback(iteration, estimate)`` after every update.

    Returns
    -------
    estimate : ndarray
    info : dict
        ``iterations_run`` and ``update_norm`` (the last ``max |update - 1|``).
    """
    data = np.asarray(data, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    if kernel.ndim != 1 or kernel.size % 2 == 0:
        raise InvalidArgumentError("PSF kernel must be a 1-D array of odd length")
    total = kernel.sum()
    if not (np.all(np.isfinite(kernel)) and total > 0):
        raise InvalidArgumentError("PSF has non-finite or zero mass")
    if np.any(kernel < 0):
        raise InvalidArgumentError("PSF kernel must be non-negative")
    if not np.all(np.isfinite(data)) or np.any(data < 0):
        raise InvalidArgumentError("data must be finite and non-negative")
    if int(iterations) != iterations or iterations < 1:
        raise InvalidArgumentError("iterations must be a positive integer")
    if boundary not in BOUNDARIES:
        raise InvalidArgumentError(f"boundary must be one of {sorted(BOUNDARIES)}")
    kernel = kernel / total
    mode = BOUNDARIES[boundary]

    estimate = data.copy()
    update_norm = float("inf")
    done = 0
    for done in range(1, int(iterations) + 1):
        blurred = ndimage.convolve1d(estimate, kernel, mode=mode)
        ratio = np.divide(data, blurred, out=np.zeros_like(data), where=blurred > 0)
        update = ndimage.correlate1d(ratio, kernel, mode=mode)
        support = estimate > 1e-12 * estimate.max() if estimate.max() > 0 else np.zeros(data.shape, bool)
        estimate = estimate * update
        update_norm = float(np.max(np.abs(update[support] - 1))) if support.any() else 0.0
        if callback is not None:
            callback(done, estimate)
        if update_norm < tol:
            break
    return estimate, {"iterations_run": done, "update_norm": update_norm}


def lucy_richardson(
    recon: ReconResult,
    psf: PsfReport,
    iterations: int = 20,
    tol: float = 1e-4,
    boundary: str = "reflect",
    half_width: int | None = None,
) -> ReconResult:
    """Deconvolve the magnitude of an IDFT reconstruction by the axial PSF.

    The PSF must be sampled at the reconstruction's depth step. The kernel is
    cut at ``half_width`` samples either side of its centre (four FWHM by default).
    """
    if recon.method != "idft":
        raise InvalidArgumentError(f"expected an idft reconstruction, got {recon.method!r}")
    if not np.isclose(psf.delta_z, recon.z_grid.delta_z, rtol=1e-9, atol=0):
        raise InvalidArgumentError(
            f"PSF step {psf.delta_z} differs from reconstruction step {recon.z_grid.delta_z}"
        )
    if not (np.all(np.isfinite(psf.psf)) and np.sum(psf.psf) > 0):
        raise InvalidArgumentError("PSF has non-finite or zero mass")
    kernel = psf.kernel(half_width)
    estimate, info = richardson_lucy_1d(recon.magnitude, kernel, iterations, tol, boundary)
    diagnostics = dict(recon.diagnostics)
    diagnostics.update(info, kernel_length=kernel.size, boundary=boundary)
    return ReconResult(estimate, recon.z_grid, "idft-deconv", diagnostics)
