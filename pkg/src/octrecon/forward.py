"""Spectral interferogram synthesis.

The sampled cross-correlation term is modelled as::

    i[m] = delta_z * s[m] * sum_n r[n] * cos(2 k_m z_n) + noise[m]

``s`` is the *effective* emission spectrum and already contains the factor 2
of the two-sided cosine integral; reference reflectivity and detector
responsivity are 1. DC and autocorrelation terms are never synthesised.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .grids import SpatialGrid, WavenumberGrid, apply_system_matrix

NOISE_KINDS = ("none", "additive-gaussian")


def _frozen_vector(values, length, what):
    arr = np.array(values, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != length:
        raise InvalidArgumentError(f"{what} has shape {arr.shape}, expected ({length},)")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"{what} contains non-finite values")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class EmissionSpectrum:
    """Sampled (effective) source power spectrum on a k grid."""

    values: np.ndarray
    k_grid: WavenumberGrid

    def __post_init__(self):
        values = _frozen_vector(self.values, self.k_grid.m_count, "emission spectrum")
        if np.any(values < 0):
            raise InvalidArgumentError("emission spectrum must be non-negative")
        object.__setattr__(self, "values", values)

    def centroid(self) -> float:
        """Power-weighted mean wavenumber."""
        total = self.values.sum()
        if total <= 0:
            raise InvalidArgumentError("emission spectrum has no positive samples")
        return float(np.dot(self.values, self.k_grid.values) / total)


@dataclass(frozen=True, eq=False)
class ReflectivityProfile:
    """Real reflectivity density on a depth grid.

    A point reflector of integrated reflectivity ``a`` occupying a single node
    carries the sample value ``a / delta_z``, so ``delta_z * values`` does not
    depend on the grid step.
    """

    values: np.ndarray
    z_grid: SpatialGrid
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_vector(self.values, self.z_grid.n_count, "reflectivity"))

    @classmethod
    def point_reflectors(cls, z_grid: SpatialGrid, positions, reflectivities, **metadata):
        """Place reflectors on the nearest grid nodes; requested and actual positions go in metadata."""
        positions = np.atleast_1d(np.asarray(positions, dtype=float))
        reflectivities = np.broadcast_to(np.asarray(reflectivities, dtype=float), positions.shape)
        lo, hi = z_grid.z0, z_grid.z0 + (z_grid.n_count - 1) * z_grid.delta_z
        if np.any(positions < lo - z_grid.delta_z / 2) or np.any(positions > hi + z_grid.delta_z / 2):
            raise InvalidArgumentError(
                f"reflector positions {positions} fall outside the grid support [{lo}, {hi}]"
            )
        values = np.zeros(z_grid.n_count)
        indices = [z_grid.index_of(p) for p in positions]
        for idx, a in zip(indices, reflectivities):
            values[idx] += a / z_grid.delta_z
        placed = z_grid.z0 + z_grid.delta_z * np.asarray(indices, dtype=float)
        meta = {"requested_positions": positions.tolist(), "positions": placed.tolist(),
                "indices": indices, "reflectivities": reflectivities.tolist()}
        meta.update(metadata)
        return cls(values, z_grid, meta)


@dataclass(frozen=True)
class NoiseModel:
    """White Gaussian noise in k-space, reproducible from ``seed``."""

    kind: str = "none"
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise InvalidArgumentError(f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise InvalidArgumentError(f"noise sigma must be >= 0, got {self.sigma}")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgumentError("seed must fit in an unsigned 64-bit integer")

    @classmethod
    def gaussian(cls, sigma: float, seed: int = 0) -> "NoiseModel":
        return cls("additive-gaussian", sigma, seed)

    def sample(self, count: int) -> np.ndarray:
        if self.kind == "none" or self.sigma == 0:
            return np.zeros(count)
        rng = np.random.default_rng(int(self.seed))
        return rng.normal(0.0, self.sigma, count)

    def with_seed(self, seed: int) -> "NoiseModel":
        return NoiseModel(self.kind, self.sigma, seed)


@dataclass(frozen=True, eq=False)
class Interferogram:
    values: np.ndarray
    k_grid: WavenumberGrid
    provenance: str = "synthetic"
    noise: NoiseModel | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_vector(self.values, self.k_grid.m_count, "interferogram"))
        if self.provenance not in ("synthetic", "file"):
            raise InvalidArgumentError(f"unknown provenance {self.provenance!r}")


def simulate_interferogram(
    r: ReflectivityProfile, s: EmissionSpectrum, noise: NoiseModel = NoiseModel()
) -> Interferogram:
    """Discretised forward model ``i = delta_z * (s * (C @ r)) + n``."""
    clean = r.z_grid.delta_z * s.values * apply_system_matrix(r.values, s.k_grid, r.z_grid)
    return Interferogram(clean + noise.sample(s.k_grid.m_count), s.k_grid, "synthetic", noise)


def simulate_point_reflectors(
    positions, reflectivities, s: EmissionSpectrum, noise: NoiseModel = NoiseModel()
) -> Interferogram:
    """Continuous-position reflectors: ``i[m] = s[m] * sum_j a_j cos(2 k_m z_j) + n``.

    Equivalent to :func:`simulate_interferogram` in the limit of a vanishing
    grid step; useful when no synthesis grid is wanted.
    """
    positions = np.atleast_1d(np.asarray(positions, dtype=float))
    a = np.broadcast_to(np.asarray(reflectivities, dtype=float), positions.shape)
    clean = s.values * (np.cos(2.0 * np.multiply.outer(s.k_grid.values, positions)) @ a)
    return Interferogram(clean + noise.sample(s.k_grid.m_count), s.k_grid, "synthetic", noise)


def gaussian_spectrum(
    k: WavenumberGrid, center_wavelength: float, fwhm_wavelength: float, peak: float = 1.0
) -> EmissionSpectrum:
    """Gaussian in k centred on ``2*pi/center_wavelength``.

    The k-space FWHM is ``2*pi*fwhm_wavelength / center_wavelength**2``. Peak
    value is ``peak`` (1 by default). Emits a ``RuntimeWarning`` if the FWHM
    band does not overlap the grid at all.
    """
    if not fwhm_wavelength > 0:
        raise InvalidArgumentError("FWHM must be positive")
    if not (k.lambda_min <= center_wavelength <= k.lambda_max):
        raise InvalidArgumentError(
            f"center wavelength {center_wavelength} outside grid span [{k.lambda_min}, {k.lambda_max}]"
        )
    kc = 2 * np.pi / center_wavelength
    dk_fwhm = 2 * np.pi * fwhm_wavelength / center_wavelength**2
    if not np.any(np.abs(k.values - kc) <= dk_fwhm / 2):
        warnings.warn("no grid sample lies inside the Gaussian FWHM band", RuntimeWarning, stacklevel=2)
    values = peak * np.exp(-4 * math.log(2) * ((k.values - kc) / dk_fwhm) ** 2)
    return EmissionSpectrum(values, k)


def gaussian_resolution(center_wavelength: float, fwhm_wavelength: float) -> float:
    """Coherence-length FWHM ``(2 ln2 / pi) * lambda0**2 / dlambda`` of an untruncated Gaussian source."""
    return 2 * math.log(2) / math.pi * center_wavelength**2 / fwhm_wavelength


def truncate_bandwidth(i: Interferogram, s: EmissionSpectrum, fraction: float):
    """Keep the central ``ceil(fraction * M)`` samples around the spectrum's power centroid.

    The window is shifted inwards if it would run past either end of the grid.
    Returns the shortened ``(Interferogram, EmissionSpectrum)`` pair on a common sub-grid.
    """
    if i.k_grid != s.k_grid:
        raise InvalidArgumentError("interferogram and spectrum are on different k grids")
    if not (0 < fraction <= 1):
        raise InvalidArgumentError(f"fraction must lie in (0, 1], got {fraction}")
    m = s.k_grid.m_count
    count = math.ceil(fraction * m - 1e-9)
    if count < 8:
        raise InvalidArgumentError(f"truncation leaves {count} samples; at least 8 are required")
    if count == m:
        return i, s
    center = (s.centroid() - s.k_grid.k0) / s.k_grid.delta_k
    start = int(np.clip(round(center - (count - 1) / 2), 0, m - count))
    grid = s.k_grid.subgrid(start, count)
    window = slice(start, start + count)
    return (
        Interferogram(i.values[window], grid, i.provenance, i.noise),
        EmissionSpectrum(s.values[window], grid),
    )
