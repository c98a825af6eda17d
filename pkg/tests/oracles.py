"""Reference implementations that share no code with the package.

Each oracle takes a different computational route from the code under
test: explicit loops instead of vectorised blocks, direct sums instead of
FFTs, proximal gradient instead of ADMM.
"""

import cmath
import math

import numpy as np


def cosine_matrix_loop(k_values, z_values):
    """``C[m, n] = cos(2 k_m z_n)`` by explicit double loop."""
    return np.array([[math.cos(2.0 * k * z) for z in z_values] for k in k_values])


def idft_direct(i_values, k_values, z_values):
    """``(1/M) sum_q i_q exp(j 2 z k_q)`` evaluated sample by sample."""
    m = len(k_values)
    return np.array([
        sum(iq * cmath.exp(2j * z * kq) for iq, kq in zip(i_values, k_values)) / m
        for z in z_values
    ])


def dirichlet_direct(z_n, k0, delta_k, m_count):
    """Centred-index DFT of the analytic fringe ``exp(-j 2 k_q z_n)``.

    ``g(m) = sum_q exp(-j 2 k_q z_n) exp(j 2 pi m (q - (M-1)/2) / M)``.
    """
    half = (m_count - 1) / 2
    out = []
    for m in range(m_count):
        acc = 0j
        for q in range(m_count):
            kq = k0 + q * delta_k
            acc += cmath.exp(-2j * kq * z_n) * cmath.exp(2j * math.pi * m * (q - half) / m_count)
        out.append(acc)
    return np.array(out)


def dirichlet_two_term_direct(z_n, k0, delta_k, m_count):
    """Same centred DFT applied to the real fringe ``2 cos(2 k_q z_n)``."""
    half = (m_count - 1) / 2
    out = []
    for m in range(m_count):
        acc = 0j
        for q in range(m_count):
            kq = k0 + q * delta_k
            acc += 2 * math.cos(2 * kq * z_n) * cmath.exp(2j * math.pi * m * (q - half) / m_count)
        out.append(acc)
    return np.array(out)


def soft_threshold_grid(v, kappa, half_width=10.0, count=200001):
    """argmin_x 0.5 (x - v)^2 + kappa |x| by brute-force search on a fine grid."""
    xs = np.linspace(v - half_width, v + half_width, count)
    xs = np.append(xs, 0.0)
    cost = 0.5 * (xs - v) ** 2 + kappa * np.abs(xs)
    return xs[np.argmin(cost)]


def fista(A, b, lam, iterations=50000, tol=1e-15):
    """Accelerated proximal gradient for ``0.5 ||A x - b||^2 + lam ||x||_1``."""
    A = np.asarray(A, dtype=float)
    step = 1.0 / np.linalg.norm(A, 2) ** 2
    x = np.zeros(A.shape[1])
    y = x.copy()
    t = 1.0
    prev = np.inf
    for _ in range(iterations):
        g = A.T @ (A @ y - b)
        v = y - step * g
        x_new = np.sign(v) * np.maximum(np.abs(v) - step * lam, 0.0)
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        y = x_new + (t - 1) / t_new * (x_new - x)
        # adaptive restart keeps the objective monotone
        if (x_new - x) @ (y - x_new) > 0:
            y = x_new.copy()
            t_new = 1.0
        x, t = x_new, t_new
        obj = 0.5 * np.sum((A @ x - b) ** 2) + lam * np.abs(x).sum()
        if abs(prev - obj) <= tol * max(1.0, abs(obj)):
            break
        prev = obj
    return x


def lasso_value(A, b, x, lam):
    r = A @ x - b
    return 0.5 * float(r @ r) + lam * float(np.abs(x).sum())


def box_fringe(k, z_a, z_b):
    """``integral_{z_a}^{z_b} cos(2 k z) dz`` in closed form."""
    return (np.sin(2 * k * z_b) - np.sin(2 * k * z_a)) / (2 * k)
