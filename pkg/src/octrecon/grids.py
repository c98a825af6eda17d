"""Sampling lattices in k and z, and the cosine system matrix that links them.

Conventions
-----------
- Wavenumbers are radian wavenumbers, ``k = 2*pi/lambda`` in rad/m.
- Lengths are meters.
- ``C[m, n] = cos(2 * k_m * z_n)``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .errors import InvalidArgumentError, ResourceError

#: Dense system matrices larger than this raise ResourceError.
DEFAULT_MEMORY_BUDGET = 512 * 2**20

# Elements materialised per block by the implicit operator.
_BLOCK_ELEMENTS = 2**21


@dataclass(frozen=True)
class WavenumberGrid:
    """Uniform k-space lattice ``k_m = k0 + m * delta_k``, ``m = 0..M-1``."""

    k0: float
    delta_k: float
    m_count: int

    def __post_init__(self):
        if not (np.isfinite(self.k0) and self.k0 > 0):
            raise InvalidArgumentError(f"k0 must be positive, got {self.k0}")
        if not (np.isfinite(self.delta_k) and self.delta_k > 0):
            raise InvalidArgumentError(f"delta_k must be positive, got {self.delta_k}")
        if int(self.m_count) != self.m_count or self.m_count < 2:
            raise InvalidArgumentError(f"m_count must be an integer >= 2, got {self.m_count}")
        object.__setattr__(self, "m_count", int(self.m_count))

    @classmethod
    def from_wavelengths(cls, lambda_min: float, lambda_max: float, m_count: int) -> "WavenumberGrid":
        if not (lambda_min > 0 and lambda_max > 0):
            raise InvalidArgumentError("wavelength bounds must be positive")
        if not lambda_min < lambda_max:
            raise InvalidArgumentError(
                f"lambda_min ({lambda_min}) must be strictly smaller than lambda_max ({lambda_max})"
            )
        if int(m_count) != m_count or m_count < 2:
            raise InvalidArgumentError(f"m_count must be an integer >= 2, got {m_count}")
        k0 = 2 * np.pi / lambda_max
        k_last = 2 * np.pi / lambda_min
        return cls(k0, (k_last - k0) / (m_count - 1), int(m_count))

    @property
    def values(self) -> np.ndarray:
        return self.k0 + self.delta_k * np.arange(self.m_count)

    @property
    def k_max(self) -> float:
        return self.k0 + self.delta_k * (self.m_count - 1)

    @property
    def span(self) -> float:
        """Total sampled bandwidth ``(M-1) * delta_k``."""
        return self.delta_k * (self.m_count - 1)

    @property
    def wavelengths(self) -> np.ndarray:
        return 2 * np.pi / self.values

    @property
    def lambda_min(self) -> float:
        return 2 * np.pi / self.k_max

    @property
    def lambda_max(self) -> float:
        return 2 * np.pi / self.k0

    @property
    def nominal_resolution(self) -> float:
        """``pi / span``, the textbook IDFT depth step for this bandwidth."""
        return np.pi / self.span

    @property
    def idft_step(self) -> float:
        """Depth spacing ``pi / (M * delta_k)`` of the DFT-consistent reconstruction grid.

        This differs from :attr:`nominal_resolution` by the factor ``(M-1)/M``; it
        is the spacing on which the IDFT of an on-grid reflector is a Kronecker delta.
        """
        return np.pi / (self.m_count * self.delta_k)

    @property
    def imaging_depth(self) -> float:
        """Unambiguous positive depth range ``(M/2) * idft_step``."""
        return self.m_count // 2 * self.idft_step

    def subgrid(self, start: int, count: int) -> "WavenumberGrid":
        if start < 0 or count < 2 or start + count > self.m_count:
            raise InvalidArgumentError(f"sub-grid [{start}, {start + count}) outside [0, {self.m_count})")
        return WavenumberGrid(self.k0 + start * self.delta_k, self.delta_k, count)


def wavenumber_grid_from_wavelengths(lambda_min: float, lambda_max: float, m_count: int) -> WavenumberGrid:
    """k-linear grid whose end points are ``2*pi/lambda_max`` and ``2*pi/lambda_min``."""
    return WavenumberGrid.from_wavelengths(lambda_min, lambda_max, m_count)


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform depth lattice ``z_n = z0 + n * delta_z``, ``n = 0..N-1``."""

    z0: float
    delta_z: float
    n_count: int

    def __post_init__(self):
        if not (np.isfinite(self.z0) and self.z0 >= 0):
            raise InvalidArgumentError(f"z0 must be non-negative, got {self.z0}")
        if not (np.isfinite(self.delta_z) and self.delta_z > 0):
            raise InvalidArgumentError(f"delta_z must be positive, got {self.delta_z}")
        if int(self.n_count) != self.n_count or self.n_count < 1:
            raise InvalidArgumentError(f"n_count must be an integer >= 1, got {self.n_count}")
        object.__setattr__(self, "n_count", int(self.n_count))

    @classmethod
    def covering(cls, start: float, stop: float, step: float) -> "SpatialGrid":
        """Smallest grid with the given step whose support ``[z0, z0 + N*step)`` covers [start, stop]."""
        if step <= 0:
            raise InvalidArgumentError("step must be positive")
        if stop < start:
            raise InvalidArgumentError("stop must not precede start")
        start = max(start, 0.0)
        return cls(start, step, int(np.floor((stop - start) / step)) + 1)

    @property
    def values(self) -> np.ndarray:
        return self.z0 + self.delta_z * np.arange(self.n_count)

    @property
    def support(self) -> float:
        """Support length ``N * delta_z``."""
        return self.n_count * self.delta_z

    @property
    def z_end(self) -> float:
        return self.z0 + self.support

    def index_of(self, z: float) -> int:
        """Index of the node nearest to ``z`` (clipped to the grid)."""
        return int(np.clip(np.rint((z - self.z0) / self.delta_z), 0, self.n_count - 1))


@dataclass(frozen=True, eq=False)
class SystemMatrix:
    entries: np.ndarray
    k_grid: WavenumberGrid
    z_grid: SpatialGrid

    @property
    def shape(self):
        return self.entries.shape


def _cosine_block(k: np.ndarray, z: np.ndarray) -> np.ndarray:
    return np.cos(2.0 * np.multiply.outer(k, z))


def build_system_matrix(
    k: WavenumberGrid, z: SpatialGrid, memory_budget: int = DEFAULT_MEMORY_BUDGET
) -> SystemMatrix:
    """Dense ``M x N`` matrix ``C[m, n] = cos(2 k_m z_n)``.

    Raises
    ------
    ResourceError
        If ``8 * M * N`` bytes exceeds ``memory_budget``. Use
        :func:`apply_system_matrix` or :func:`system_operator` instead.
    """
    nbytes = 8 * k.m_count * z.n_count
    if nbytes > memory_budget:
        raise ResourceError(
            f"dense system matrix {k.m_count}x{z.n_count} needs {nbytes / 2**20:.1f} MiB, "
            f"over the {memory_budget / 2**20:.1f} MiB budget; use the implicit operator "
            "(apply_system_matrix / system_operator)"
        )
    entries = _cosine_block(k.values, z.values)
    entries.flags.writeable = False
    return SystemMatrix(entries, k, z)


def system_matrix_blocks(k: WavenumberGrid, z: SpatialGrid, block_elements: int = _BLOCK_ELEMENTS):
    """Yield ``(column_slice, C[:, column_slice])`` blocks of about ``block_elements`` entries."""
    kv, zv = k.values, z.values
    block = max(1, block_elements // k.m_count)
    for start in range(0, z.n_count, block):
        cols = slice(start, min(start + block, z.n_count))
        yield cols, _cosine_block(kv, zv[cols])


def _profile_values(r, length: int, what: str) -> np.ndarray:
    values = np.asarray(getattr(r, "values", r), dtype=float)
    if values.ndim != 1 or values.shape[0] != length:
        raise InvalidArgumentError(f"{what} has shape {values.shape}, expected ({length},)")
    return values


def apply_system_matrix(r, k: WavenumberGrid, z: SpatialGrid) -> np.ndarray:
    """Matrix-free ``C @ r``; ``C`` is generated block by block and never stored whole."""
    values = _profile_values(r, z.n_count, "reflectivity vector")
    if getattr(r, "z_grid", z) != z:
        raise InvalidArgumentError("reflectivity profile is defined on a different spatial grid")
    kv, zv = k.values, z.values
    out = np.zeros(k.m_count)
    block = max(1, _BLOCK_ELEMENTS // k.m_count)
    for start in range(0, z.n_count, block):
        stop = min(start + block, z.n_count)
        nz = np.flatnonzero(values[start:stop])
        if nz.size == 0:
            continue
        idx = start + nz
        out += _cosine_block(kv, zv[idx]) @ values[idx]
    return out


def apply_system_matrix_adjoint(y, k: WavenumberGrid, z: SpatialGrid) -> np.ndarray:
    """Matrix-free ``C.T @ y``."""
    values = _profile_values(y, k.m_count, "spectral vector")
    kv, zv = k.values, z.values
    out = np.empty(z.n_count)
    block = max(1, _BLOCK_ELEMENTS // k.m_count)
    for start in range(0, z.n_count, block):
        stop = min(start + block, z.n_count)
        out[start:stop] = values @ _cosine_block(kv, zv[start:stop])
    return out


def system_operator(k: WavenumberGrid, z: SpatialGrid, row_weights=None) -> LinearOperator:
    """``diag(row_weights) @ C`` as a scipy LinearOperator (implicit, float64)."""
    w = np.ones(k.m_count) if row_weights is None else np.asarray(row_weights, dtype=float)
    if w.shape != (k.m_count,):
        raise InvalidArgumentError(f"row weights have shape {w.shape}, expected ({k.m_count},)")

    def matvec(x):
        return w * apply_system_matrix(np.ravel(x), k, z)

    def rmatvec(y):
        return apply_system_matrix_adjoint(w * np.ravel(y), k, z)

    return LinearOperator((k.m_count, z.n_count), matvec=matvec, rmatvec=rmatvec, dtype=float)
