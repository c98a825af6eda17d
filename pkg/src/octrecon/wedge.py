"""Air-wedge resolution phantom and the separation-based resolution measurement.

Each A-line of the wedge holds two reflectors whose separation grows
linearly with the lateral index. Every reconstruction is fitted with a
two-term Gaussian model; the fitted separation is compared with a linear fit
of the ground truth, and the resolution is the smallest separation whose
relative error stays below 20 % before the errors break down for good.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, least_squares
from scipy.signal import find_peaks

from .admm import AdmmConfig, AdmmSolver, estimate_support
from .deconv import lucy_richardson
from .errors import InvalidArgumentError
from .forward import (
    EmissionSpectrum,
    NoiseModel,
    ReflectivityProfile,
    gaussian_spectrum,
    simulate_interferogram,
    truncate_bandwidth,
)
from .grids import SpatialGrid, WavenumberGrid
from .idft import RECON_METHODS, measure_fwhm, psf_report, reconstruct_idft

RELATIVE_ERROR_LIMIT = 0.2
FAILURE_RUN_LENGTH = 3


@dataclass(frozen=True)
class AirWedgeSpec:
    """Two-interface wedge: ``lateral_count`` A-lines, separations linear in the index."""

    lateral_count: int = 200
    min_separation: float = 0.5e-6
    max_separation: float = 15e-6
    top_depth: float = 100e-6
    top_reflectivity: float = 1.0
    bottom_reflectivity: float = 1.0

    def __post_init__(self):
        if int(self.lateral_count) != self.lateral_count or self.lateral_count < 1:
            raise InvalidArgumentError("lateral_count must be a positive integer")
        if not 0 <= self.min_separation <= self.max_separation:
            raise InvalidArgumentError("separations must satisfy 0 <= min <= max")
        if self.top_depth < 0:
            raise InvalidArgumentError("top_depth must be non-negative")

    def separations(self) -> np.ndarray:
        return np.linspace(self.min_separation, self.max_separation, int(self.lateral_count))


def synthesize_air_wedge(spec: AirWedgeSpec, z: SpatialGrid) -> list:
    """One two-reflector :class:`ReflectivityProfile` per lateral position.

    Reflectors are placed on the nearest nodes of ``z``; requested and placed
    positions are recorded in each profile's metadata.
    """
    deepest = spec.top_depth + spec.max_separation
    last = z.z0 + (z.n_count - 1) * z.delta_z
    if spec.top_depth < z.z0 or deepest > last:
        raise InvalidArgumentError(
            f"wedge spans [{spec.top_depth}, {deepest}] m but the grid covers [{z.z0}, {last}] m"
        )
    profiles = []
    for index, d in enumerate(spec.separations()):
        profiles.append(ReflectivityProfile.point_reflectors(
            z, [spec.top_depth, spec.top_depth + d],
            [spec.top_reflectivity, spec.bottom_reflectivity],
            lateral_index=index, requested_separation=float(d),
        ))
    return profiles


def placed_separation(profile: ReflectivityProfile) -> float:
    top, bottom = profile.metadata["positions"]
    return bottom - top


def linear_fit(x, y):
    """Least-squares line through ``(x, y)``: returns ``(slope, intercept, r_squared)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.ptp(x) == 0:
        return 0.0, float(np.mean(y)), 1.0
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 if ss_tot == 0 else 1.0 - np.sum((y - fitted) ** 2) / ss_tot
    return float(slope), float(intercept), float(r2)


@dataclass(frozen=True)
class TwoGaussianFit:
    """Result of fitting ``a1 exp(-((z-c1)/w1)^2) + a2 exp(-((z-c2)/w2)^2)``.

    Centres are ordered ``c1 <= c2``. A failed fit has ``success=False`` and
    NaN parameters.
    """

    centers: tuple
    amplitudes: tuple
    widths: tuple
    r_squared: float
    success: bool
    message: str = ""

    @property
    def separation(self) -> float:
        return abs(self.centers[1] - self.centers[0]) if self.success else float("nan")

    @classmethod
    def failed(cls, message: str) -> "TwoGaussianFit":
        nan = float("nan")
        return cls((nan, nan), (nan, nan), (nan, nan), nan, False, message)


def two_gaussians(params, z):
    a1, c1, w1, a2, c2, w2 = params
    return a1 * np.exp(-(((z - c1) / w1) ** 2)) + a2 * np.exp(-(((z - c2) / w2) ** 2))


def _initial_guess(y, x, min_distance):
    """Start from the two largest local maxima, or the main peak +- FWHM/2."""
    peaks, _ = find_peaks(np.r_[0.0, y, 0.0], distance=max(1, int(min_distance)))
    peaks = peaks - 1
    peaks = peaks[np.argsort(y[peaks], kind="stable")[::-1]]
    main = peaks[0] if peaks.size else int(np.argmax(y))
    width = measure_fwhm(np.r_[0.0, y, 0.0], 1.0, main + 1)
    if not np.isfinite(width):
        width = 2.0
    w0 = max(width / (2 * math.sqrt(math.log(2))), 0.5)
    if peaks.size >= 2:
        second = peaks[1]
        return [y[main], x[main], w0, y[second], x[second], w0]
    return [y[main], x[main] - width / 2, w0 / 2, y[main], x[main] + width / 2, w0 / 2]


def fit_two_gaussians(y, z, min_width=None, min_peak_distance=1, restarts=5, seed=0) -> TwoGaussianFit:
    """Bounded nonlinear least-squares two-Gaussian fit of a non-negative profile.

    Parameters
    ----------
    y : array_like
        Non-negative profile samples.
    z : SpatialGrid or array_like
        Sample positions (m), increasing.
    min_width : float, optional
        Lower bound on the Gaussian ``w`` parameters (m). Defaults to a quarter sample.
    min_peak_distance : int
        Minimum index distance between the local maxima used for initialisation.
    restarts : int
        Extra fits from randomly perturbed starting points; the lowest-cost
        successful fit wins. The perturbations are seeded, so results are repeatable.
    """
    y = np.asarray(y, dtype=float)
    zv = np.asarray(z.values if isinstance(z, SpatialGrid) else z, dtype=float)
    if y.ndim != 1 or y.shape != zv.shape:
        raise InvalidArgumentError("profile and positions must be 1-D arrays of equal length")
    if not np.all(np.isfinite(y)) or np.any(y < 0):
        raise InvalidArgumentError("profile must be finite and non-negative")
    if y.size < 6:
        return TwoGaussianFit.failed("fewer samples than model parameters")
    peak = y.max()
    if not peak > 0:
        return TwoGaussianFit.failed("profile is identically zero")

    # Work in sample units with a unit-peak profile so all parameters are O(1).
    step = float(np.mean(np.diff(zv)))
    x = (zv - zv[0]) / step
    yn = y / peak
    span = x[-1]
    wmin = 0.25 if min_width is None else max(min_width / step, 1e-3)
    lower = np.array([0.0, 0.0, wmin, 0.0, 0.0, wmin])
    upper = np.array([np.inf, span, max(span, 2 * wmin), np.inf, span, max(span, 2 * wmin)])

    def residual(p):
        return two_gaussians(p, x) - yn

    start = np.array(_initial_guess(yn, x, min_peak_distance))
    rng = np.random.default_rng(seed)
    best = None
    for attempt in range(1 + int(restarts)):
        p0 = start.copy()
        if attempt:
            p0[[1, 4]] += rng.uniform(-1, 1, 2) * p0[[2, 5]]
            p0[[2, 5]] *= rng.uniform(0.5, 2.0, 2)
            p0[[0, 3]] *= rng.uniform(0.5, 1.5, 2)
        p0 = np.clip(p0, lower + 1e-9, np.where(np.isfinite(upper), upper - 1e-9, np.inf))
        try:
            res = least_squares(residual, p0, bounds=(lower, upper), method="trf")
        except (ValueError, np.linalg.LinAlgError):
            continue
        if res.success and np.all(np.isfinite(res.x)) and (best is None or res.cost < best.cost):
            best = res
    if best is None:
        return TwoGaussianFit.failed("least-squares did not converge from any starting point")

    a1, c1, w1, a2, c2, w2 = best.x
    if c2 < c1:
        a1, c1, w1, a2, c2, w2 = a2, c2, w2, a1, c1, w1
    ss_tot = np.sum((yn - yn.mean()) ** 2)
    r2 = 1.0 - 2 * best.cost / ss_tot if ss_tot > 0 else float("nan")
    to_z = lambda c: float(zv[0] + c * step)  # noqa: E731
    return TwoGaussianFit(
        (to_z(c1), to_z(c2)),
        (float(a1 * peak), float(a2 * peak)),
        (float(w1 * step), float(w2 * step)),
        float(r2), True, str(best.message),
    )


@dataclass(frozen=True)
class SeparationMeasurement:
    lateral_index: int
    fitted_separation: float
    expected_separation: float
    relative_error: float
    fit_quality: float
    fit_success: bool = True

    @property
    def resolved(self) -> bool:
        return bool(self.relative_error < RELATIVE_ERROR_LIMIT)


def separation_measurement(index, fit: TwoGaussianFit, expected) -> SeparationMeasurement:
    if not fit.success or not expected > 0:
        error = float("inf") if expected > 0 else float("nan")
        return SeparationMeasurement(index, fit.separation, float(expected), error, fit.r_squared, fit.success)
    error = abs(fit.separation - expected) / expected
    return SeparationMeasurement(index, fit.separation, float(expected), float(error), fit.r_squared, True)


def resolution_from_errors(separations, relative_errors, limit=RELATIVE_ERROR_LIMIT, run_length=FAILURE_RUN_LENGTH):
    """Smallest passing separation, scanning downward until ``run_length`` consecutive failures.

    Returns NaN when no separation passes.
    """
    separations = np.asarray(separations, dtype=float)
    passed = np.asarray(relative_errors, dtype=float) < limit
    order = np.argsort(separations, kind="stable")[::-1]
    s_sorted, ok = separations[order], passed[order]
    best = float("nan")
    for j in range(s_sorted.size):
        if ok[j]:
            best = float(s_sorted[j])
        elif j + run_length <= s_sorted.size and not ok[j: j + run_length].any():
            break
    return best


@dataclass(frozen=True)
class ResolutionReport:
    method: str
    resolution: float
    per_position: list = field(default_factory=list)
    ground_truth_r_squared: float = 1.0

    def relative_errors(self) -> np.ndarray:
        return np.array([m.relative_error for m in self.per_position])

    def expected_separations(self) -> np.ndarray:
        return np.array([m.expected_separation for m in self.per_position])


@dataclass(frozen=True)
class BenchSettings:
    """Reconstruction and fitting choices shared by every A-line of a benchmark."""

    idft_oversample: int = 1
    deconv_oversample: int = 2
    lr_iterations: int = 20
    support_oversample: int = 4
    support_dilation: int = 10
    admm_peak_distance: float = 0.3e-6
    bandwidth_fraction: float = 1.0
    fit_restarts: int = 5


def _fit_window(rec, start, stop, **fit_kwargs):
    zv = rec.z_grid.values
    sel = (zv >= start) & (zv <= stop)
    if sel.sum() < 6:
        return TwoGaussianFit.failed("fewer than 6 samples in the fit window")
    return fit_two_gaussians(rec.magnitude[sel], zv[sel], **fit_kwargs)


def measure_aline(profile, s, noise, methods, admm_cfg, settings=BenchSettings()):
    """Simulate one A-line, reconstruct it with each method and fit two Gaussians.

    Returns ``{method: TwoGaussianFit}``.
    """
    i = simulate_interferogram(profile, s, noise)
    s_used = s
    if settings.bandwidth_fraction < 1:
        i, s_used = truncate_bandwidth(i, s, settings.bandwidth_fraction)
    window = estimate_support(
        i, step=admm_cfg.recon_grid.delta_z, dilation=settings.support_dilation,
        oversample=settings.support_oversample,
    )
    start, stop = window.z0, window.z0 + (window.n_count - 1) * window.delta_z
    fits = {}
    if "idft" in methods:
        rec = reconstruct_idft(i, oversample=settings.idft_oversample)
        fits["idft"] = _fit_window(rec, start, stop, restarts=settings.fit_restarts)
    if "idft-deconv" in methods:
        rec = reconstruct_idft(i, oversample=settings.deconv_oversample)
        psf = psf_report(s_used, oversample=settings.deconv_oversample)
        deconv = lucy_richardson(rec, psf, iterations=settings.lr_iterations)
        fits["idft-deconv"] = _fit_window(deconv, start, stop, restarts=settings.fit_restarts)
    if "admm" in methods:
        cfg = replace(admm_cfg, recon_grid=window)
        rec = AdmmSolver(s_used, cfg).solve(i)
        distance = max(1, int(round(settings.admm_peak_distance / window.delta_z)))
        fits["admm"] = _fit_window(
            rec, start, stop, min_width=window.delta_z, min_peak_distance=distance,
            restarts=settings.fit_restarts,
        )
    return fits


def _measure_job(args):
    return measure_aline(*args)


def synthesis_grid(spec: AirWedgeSpec, admm_step: float, factor: int = 16, margin: float = 20e-6) -> SpatialGrid:
    """Object grid ``factor`` times finer than the ADMM grid, covering the wedge plus ``margin``."""
    return SpatialGrid.covering(0.0, spec.top_depth + spec.max_separation + margin, admm_step / factor)


def resolution_benchmark(
    spec: AirWedgeSpec,
    s: EmissionSpectrum,
    noise: NoiseModel = NoiseModel(),
    methods=RECON_METHODS,
    admm_cfg: AdmmConfig | None = None,
    settings: BenchSettings = BenchSettings(),
    synthesis_factor: int = 16,
    workers: int = 1,
) -> list:
    """Full wedge protocol; one :class:`ResolutionReport` per requested method.

    The ADMM grid step is ``admm_cfg.recon_grid.delta_z``; its extent is
    replaced per A-line by the support estimated from the IDFT. Reflectors
    are synthesised on a grid ``synthesis_factor`` times finer, so they are
    generally off the ADMM nodes. A-line ``j`` uses noise seed ``noise.seed + j``.
    """
    known = set(RECON_METHODS)
    if not methods or not set(methods) <= known:
        raise InvalidArgumentError(f"methods must be a non-empty subset of {RECON_METHODS}")
    methods = tuple(m for m in RECON_METHODS if m in set(methods))
    if admm_cfg is None:
        admm_cfg = AdmmConfig(recon_grid=SpatialGrid(0.0, 0.1e-6, 1))
    if int(workers) != workers or workers < 1:
        raise InvalidArgumentError("workers must be a positive integer")

    zsyn = synthesis_grid(spec, admm_cfg.recon_grid.delta_z, synthesis_factor)
    profiles = synthesize_air_wedge(spec, zsyn)
    index = np.arange(len(profiles))
    placed = np.array([placed_separation(p) for p in profiles])
    slope, intercept, _ = linear_fit(index, placed)
    expected = slope * index + intercept
    _, _, truth_r2 = linear_fit(index, spec.separations())

    jobs = [
        (p, s, noise.with_seed((noise.seed + j) % 2**64), methods, admm_cfg, settings)
        for j, p in enumerate(profiles)
    ]
    if workers == 1:
        fits = [_measure_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=int(workers)) as pool:
            fits = list(pool.map(_measure_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))

    reports = []
    for method in methods:
        rows = [separation_measurement(j, f[method], expected[j]) for j, f in enumerate(fits)]
        errors = [m.relative_error for m in rows]
        reports.append(ResolutionReport(method, resolution_from_errors(expected, errors), rows, truth_r2))
    return reports


def separation_panel(
    separations,
    s: EmissionSpectrum,
    noise: NoiseModel = NoiseModel(),
    methods=RECON_METHODS,
    admm_cfg: AdmmConfig | None = None,
    settings: BenchSettings = BenchSettings(),
    top_depth: float = 100e-6,
    synthesis_factor: int = 16,
) -> dict:
    """Two-reflector A-lines at the given separations: ``{method: [SeparationMeasurement]}``."""
    if admm_cfg is None:
        admm_cfg = AdmmConfig(recon_grid=SpatialGrid(0.0, 0.1e-6, 1))
    separations = np.atleast_1d(np.asarray(separations, dtype=float))
    methods = tuple(m for m in RECON_METHODS if m in set(methods))
    out = {m: [] for m in methods}
    for j, d in enumerate(separations):
        spec = AirWedgeSpec(1, d, d, top_depth)
        zsyn = synthesis_grid(spec, admm_cfg.recon_grid.delta_z, synthesis_factor)
        (profile,) = synthesize_air_wedge(spec, zsyn)
        fits = measure_aline(profile, s, noise.with_seed((noise.seed + j) % 2**64), methods, admm_cfg, settings)
        for m in methods:
            out[m].append(separation_measurement(j, fits[m], placed_separation(profile)))
    return out


def source_for_fwhm(
    k: WavenumberGrid, target_fwhm: float = 3.40e-6, center_wavelength: float = 892.8e-9, peak: float = 1.0
) -> EmissionSpectrum:
    """Gaussian source whose measured PSF FWHM on grid ``k`` equals ``target_fwhm``.

    The Gaussian is clipped by the finite band, so its measured FWHM exceeds the
    untruncated value; the wavelength FWHM is solved for numerically.
    """
    nominal = 2 * math.log(2) / math.pi * center_wavelength**2 / target_fwhm

    def mismatch(dl):
        return psf_report(gaussian_spectrum(k, center_wavelength, dl, peak)).fwhm - target_fwhm

    dl = brentq(mismatch, 0.5 * nominal, 3.0 * nominal, xtol=1e-15)
    return gaussian_spectrum(k, center_wavelength, dl, peak)

