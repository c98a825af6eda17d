"""l1-regularised depth reconstruction on a user-defined grid by relaxed ADMM.

Solves the lasso::

    minimize 0.5 * ||i - A r||_2^2 + lam * ||r||_1,    A = delta_z * diag(s) @ C

with the splitting ``r = x = z``:

    x <- (A^T A + rho I)^{-1} (A^T i + rho (z - u))
    x_hat <- alpha * x + (1 - alpha) * z
    z <- S_{lam/rho}(x_hat + u)
    u <- u + x_hat - z

Internally ``A`` is divided by its spectral norm ``c`` so that ``rho`` is
relative to a unit-norm operator; the solution is mapped back at the end.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from .errors import InvalidArgumentError
from .forward import EmissionSpectrum, Interferogram
from .grids import DEFAULT_MEMORY_BUDGET, SpatialGrid, system_matrix_blocks
from .idft import ReconResult, reconstruct_idft

X_UPDATES = ("auto", "direct", "woodbury")

#: 1 um step over a 1 mm support.
DEFAULT_RECON_GRID = SpatialGrid(0.0, 1e-6, 1000)


def soft_threshold(v, kappa):
    """Elementwise ``sign(v) * max(|v| - kappa, 0)``."""
    if kappa < 0:
        raise InvalidArgumentError("threshold must be non-negative")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - kappa, 0.0)


@dataclass(frozen=True)
class AdmmConfig:
    """Solver settings.

    ``lam`` is the absolute l1 weight in interferogram units. When it is
    ``None`` the weight is ``lam_rel * ||A^T i||_inf``, which makes the
    setting independent of the data scale.
    """

    lam: float | None = None
    lam_rel: float = 0.01
    rho: float = 1.0
    alpha: float = 1.6
    max_iterations: int = 1000
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    tol_rel: float = 1e-4
    recon_grid: SpatialGrid = DEFAULT_RECON_GRID
    nonnegative: bool = False
    adaptive_rho: bool = False
    x_update: str = "auto"
    memory_budget: int = DEFAULT_MEMORY_BUDGET

    def __post_init__(self):
        if self.lam is not None and not (np.isfinite(self.lam) and self.lam >= 0):
            raise InvalidArgumentError(f"lambda must be >= 0, got {self.lam}")
        if not (np.isfinite(self.lam_rel) and self.lam_rel >= 0):
            raise InvalidArgumentError(f"relative lambda must be >= 0, got {self.lam_rel}")
        if not (np.isfinite(self.rho) and self.rho > 0):
            raise InvalidArgumentError(f"rho must be positive, got {self.rho}")
        if not 1.0 <= self.alpha <= 1.8:
            raise InvalidArgumentError(f"alpha must lie in [1, 1.8], got {self.alpha}")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise InvalidArgumentError("max_iterations must be a positive integer")
        for name in ("tol_primal", "tol_dual", "tol_rel"):
            if not getattr(self, name) >= 0:
                raise InvalidArgumentError(f"{name} must be non-negative")
        if self.x_update not in X_UPDATES:
            raise InvalidArgumentError(f"x_update must be one of {X_UPDATES}")


@dataclass
class AdmmDiagnostics:
    """Per-iteration residuals (in the solver's normalised units) and objective values."""

    iterations_run: int = 0
    primal_residual_history: list = field(default_factory=list)
    dual_residual_history: list = field(default_factory=list)
    objective_history: list = field(default_factory=list)
    converged: bool = False
    final_rho: float | None = None


def lasso_objective(A, b, r, lam) -> float:
    """``0.5 * ||b - A r||^2 + lam * ||r||_1``."""
    resid = b - A @ r
    return float(0.5 * resid @ resid + lam * np.abs(r).sum())


class NormalEquations:
    """Cached Cholesky solver for ``(A^T A + rho I) x = q``.

    ``"direct"`` factors the ``N x N`` matrix; ``"woodbury"`` factors the
    ``M x M`` matrix ``rho I + A A^T`` and uses
    ``(A^T A + rho I)^{-1} = (I - A^T (rho I + A A^T)^{-1} A) / rho``.
    ``"auto"`` picks the smaller side.
    """

    def __init__(self, A, rho, strategy="auto", gram=None):
        m, n = A.shape
        if strategy == "auto":
            strategy = "direct" if n <= m else "woodbury"
        if strategy not in ("direct", "woodbury"):
            raise InvalidArgumentError(f"unknown x-update strategy {strategy!r}")
        self.A = A
        self.rho = float(rho)
        self.strategy = strategy
        if gram is None:
            gram = A.T @ A if strategy == "direct" else A @ A.T
        self.gram = gram
        size = gram.shape[0]
        self._factor = linalg.cho_factor(gram + self.rho * np.eye(size), lower=True)

    def with_rho(self, rho) -> "NormalEquations":
        return NormalEquations(self.A, rho, self.strategy, self.gram)

    def solve(self, q):
        if self.strategy == "direct":
            return linalg.cho_solve(self._factor, q)
        return (q - self.A.T @ linalg.cho_solve(self._factor, self.A @ q)) / self.rho


def lasso_admm(A, b, lam, *, rho=1.0, alpha=1.6, max_iterations=1000, tol_primal=1e-6,
               tol_dual=1e-6, tol_rel=1e-4, nonnegative=False, adaptive_rho=False,
               x_update="auto", solver=None):
    """Relaxed ADMM for ``min 0.5 ||A r - b||^2 + lam ||r||_1`` on a dense ``A``.

    Returns
    -------
    r : ndarray
        The sparse iterate ``z`` at termination.
    diagnostics : AdmmDiagnostics
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = A.shape[1]
    solver = solver or NormalEquations(A, rho, x_update)
    Atb = A.T @ b
    diag = AdmmDiagnostics(final_rho=solver.rho)
    z = np.zeros(n)
    if lam >= np.max(np.abs(Atb), initial=0.0):
        diag.converged = True
        return z, diag

    u = np.zeros(n)
    sqrt_n = np.sqrt(n)
    kappa = lam / solver.rho
    for it in range(int(max_iterations)):
        x = solver.solve(Atb + solver.rho * (z - u))
        x_hat = alpha * x + (1 - alpha) * z
        z_old = z
        v = x_hat + u
        z = np.maximum(v - kappa, 0.0) if nonnegative else soft_threshold(v, kappa)
        u = u + x_hat - z

        r_norm = float(np.linalg.norm(x - z))
        s_norm = float(solver.rho * np.linalg.norm(z - z_old))
        diag.primal_residual_history.append(r_norm)
        diag.dual_residual_history.append(s_norm)
        diag.objective_history.append(lasso_objective(A, b, z, lam))
        diag.iterations_run = it + 1

        eps_pri = sqrt_n * tol_primal + tol_rel * max(np.linalg.norm(x), np.linalg.norm(z))
        eps_dual = sqrt_n * tol_dual + tol_rel * np.linalg.norm(solver.rho * u)
        if r_norm < eps_pri and s_norm < eps_dual:
            diag.converged = True
            break

        if adaptive_rho:
            if r_norm > 10 * s_norm:
                scale = 2.0
            elif s_norm > 10 * r_norm:
                scale = 0.5
            else:
                continue
            solver = solver.with_rho(solver.rho * scale)
            u = u / scale
            kappa = lam / solver.rho
            diag.final_rho = solver.rho
    return z, diag


def _weighted_system(s: EmissionSpectrum, grid: SpatialGrid, memory_budget: int):
    """Dense ``A = delta_z * diag(s) @ C``, or ``None`` if it exceeds the budget."""
    m, n = s.k_grid.m_count, grid.n_count
    if 8 * m * n > memory_budget:
        return None
    A = np.empty((m, n))
    weights = grid.delta_z * s.values
    for cols, block in system_matrix_blocks(s.k_grid, grid):
        A[:, cols] = weights[:, None] * block
    return A


class AdmmSolver:
    """Reusable solver for one (spectrum, reconstruction grid) pair.

    The operator, its norm and the normal-equation factorisation are computed
    once and never modified, so one instance may serve many A-lines,
    including from several threads.
    """

    def __init__(self, s: EmissionSpectrum, cfg: AdmmConfig):
        self.spectrum = s
        self.cfg = cfg
        A = _weighted_system(s, cfg.recon_grid, cfg.memory_budget)
        if A is None:
            raise InvalidArgumentError(
                f"{s.k_grid.m_count}x{cfg.recon_grid.n_count} operator exceeds the memory budget; "
                "use a coarser grid or a smaller support"
            )
        m, n = A.shape
        small = A.T @ A if n <= m else A @ A.T
        top = linalg.eigvalsh(small, subset_by_index=[small.shape[0] - 1, small.shape[0] - 1])[0]
        if not top > 0:
            raise InvalidArgumentError("system operator is identically zero (empty spectrum?)")
        self.scale = float(np.sqrt(top))
        self.A = A
        self.A_unit = A / self.scale
        strategy = cfg.x_update
        if strategy == "auto":
            strategy = "direct" if n <= m else "woodbury"
        gram = small / top if (strategy == "direct") == (n <= m) else None
        self.normal = NormalEquations(self.A_unit, cfg.rho, strategy, gram)

    def resolve_lambda(self, i: Interferogram) -> float:
        if self.cfg.lam is not None:
            return float(self.cfg.lam)
        return float(self.cfg.lam_rel * np.max(np.abs(self.A.T @ i.values)))

    def solve(self, i: Interferogram) -> ReconResult:
        if i.k_grid != self.spectrum.k_grid:
            raise InvalidArgumentError("interferogram and spectrum are on different k grids")
        cfg = self.cfg
        lam = self.resolve_lambda(i)
        z, diag = lasso_admm(
            self.A_unit, i.values, lam / self.scale, rho=cfg.rho, alpha=cfg.alpha,
            max_iterations=cfg.max_iterations, tol_primal=cfg.tol_primal, tol_dual=cfg.tol_dual,
            tol_rel=cfg.tol_rel, nonnegative=cfg.nonnegative, adaptive_rho=cfg.adaptive_rho,
            solver=self.normal,
        )
        r = z / self.scale
        info = {
            "lambda": lam,
            "rho": cfg.rho,
            "alpha": cfg.alpha,
            "operator_norm": self.scale,
            "x_update": self.normal.strategy,
            "iterations_run": diag.iterations_run,
            "converged": diag.converged,
            "objective": lasso_objective(self.A, i.values, r, lam),
            "admm": diag,
        }
        return ReconResult(r, cfg.recon_grid, "admm", info)


def admm_reconstruct(i: Interferogram, s: EmissionSpectrum, cfg: AdmmConfig = AdmmConfig()) -> ReconResult:
    """Sparse reconstruction of ``i`` on ``cfg.recon_grid``.

    Raises
    ------
    InvalidArgumentError
        For mismatched k grids or an operator over the memory budget.
    """
    if i.k_grid != s.k_grid:
        raise InvalidArgumentError("interferogram and spectrum are on different k grids")
    return AdmmSolver(s, cfg).solve(i)


def estimate_support(
    i: Interferogram,
    step: float = 1e-6,
    threshold: float = 0.1,
    dilation: int = 10,
    oversample: int = 1,
    noise_factor: float = 5.0,
) -> SpatialGrid:
    """Reconstruction grid covering the region where ``|IDFT(i)|`` is significant.

    A sample is significant if it exceeds both ``threshold`` times the peak
    and ``noise_factor`` times the median magnitude (a robust noise-floor
    estimate for sparse profiles). The significant region is widened by
    ``dilation`` IDFT samples on each side and covered with nodes ``step`` apart.
    """
    if not 0 < threshold < 1:
        raise InvalidArgumentError("threshold must lie in (0, 1)")
    if dilation < 0 or noise_factor < 0:
        raise InvalidArgumentError("dilation and noise_factor must be non-negative")
    rec = reconstruct_idft(i, oversample=oversample)
    mag = rec.magnitude
    if not mag.max() > 0:
        raise InvalidArgumentError("interferogram is identically zero; no support to estimate")
    level = max(threshold * mag.max(), noise_factor * float(np.median(mag)))
    above = np.flatnonzero(mag >= min(level, mag.max()))
    dz = rec.z_grid.delta_z
    start = rec.z_grid.z0 + max(above[0] - dilation, 0) * dz
    stop = rec.z_grid.z0 + min(above[-1] + dilation, mag.size - 1) * dz
    return SpatialGrid.covering(start, stop, step)


def with_grid(cfg: AdmmConfig, grid: SpatialGrid) -> AdmmConfig:
    return replace(cfg, recon_grid=grid)
