"""Duhamel convolutions against the diagonal heat flow.

Every coefficient produced by the series recursions is an exponential
polynomial  sum_{r, p} C[r, p] t^p exp(-r^2 t)  with r = 1..K, because the
initial data decays at rates l^2 and the heat flow only adds rates j^2.
Representing terms this way makes the convolution

    out_j(t) = int_0^t exp(-j^2 (t - s)) g_j(s) ds

exact.  Arrays have trailing shape (K, R, P): output mode, rate index, power.

The alternative ``etd_*`` routines integrate the same recursion on a time
grid with exact exponential weights and a piecewise-linear source.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=32)
def convolution_operator(K: int, P: int) -> np.ndarray:
    """G[j, out, in] over flattened (rate, power) pairs, for output mode j+1."""
    R = K
    G = np.zeros((K, R * P, R * P))
    rates = np.arange(1, R + 1, dtype=float) ** 2
    fact = [math.factorial(p) for p in range(P)]
    for j in range(K):
        mu = rates[j]
        for r in range(R):
            for p in range(P):
                col = r * P + p
                if r == j:
                    if p + 1 < P:
                        G[j, r * P + p + 1, col] += 1.0 / (p + 1)
                    continue
                d = rates[r] - mu
                G[j, j * P, col] += fact[p] / d ** (p + 1)
                for q in range(p + 1):
                    G[j, r * P + q, col] -= fact[p] / (fact[q] * d ** (p + 1 - q))
    G.setflags(write=False)
    return G


def convolve(src: np.ndarray) -> np.ndarray:
    """Exact heat-flow convolution of exponential-polynomial sources.

    ``src`` has shape (..., K, R, P); any top power P-1 in the source is
    assumed absent (it would need power P in the output).
    """
    *lead, K, R, P = src.shape
    G = convolution_operator(K, P)
    flat = src.reshape(*lead, K, R * P)
    out = np.einsum("jxy,...jy->...jx", G, flat)
    return out.reshape(src.shape)


def initial_expsum(phi_coeffs: np.ndarray, P: int) -> np.ndarray:
    """Heat flow of phi as an exponential polynomial, shape (K, R, P)."""
    K = phi_coeffs.size
    C = np.zeros((K, K, P))
    C[np.arange(K), np.arange(K), 0] = phi_coeffs
    return C


def basis_matrix(times, K: int, P: int) -> np.ndarray:
    """E[i, r, p] = t_i^p exp(-(r+1)^2 t_i)."""
    t = np.asarray(times, dtype=float)[:, None, None]
    r = np.arange(1, K + 1, dtype=float)[None, :, None] ** 2
    p = np.arange(P)[None, None, :]
    return t**p * np.exp(-r * t)


def evaluate(C: np.ndarray, times) -> np.ndarray:
    """Values at each time: shape (..., n_times, K)."""
    *lead, K, R, P = C.shape
    E = basis_matrix(times, R, P)
    return np.einsum("...jrp,irp->...ij", C, E)


def refine_grid(t_grid, steps_per_interval: int) -> tuple[np.ndarray, np.ndarray]:
    """Fine grid and the positions of the coarse points inside it."""
    t_grid = np.asarray(t_grid, dtype=float)
    pieces = [t_grid[:1]]
    for a, b in zip(t_grid[:-1], t_grid[1:]):
        pieces.append(np.linspace(a, b, steps_per_interval + 1)[1:])
    fine = np.concatenate(pieces)
    return fine, np.arange(t_grid.size) * steps_per_interval


def _etd_weights(mu: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    z = mu * h
    decay = np.exp(-z)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi1 = -np.expm1(-z) / z
        # (1 - e^{-z}(1+z)) / z^2
        phi2 = (1.0 - decay * (1.0 + z)) / z**2
    small = z < 1e-3
    zs = z[small]
    phi1[small] = 1 - zs / 2 + zs**2 / 6 - zs**3 / 24
    phi2[small] = 0.5 - zs / 3 + zs**2 / 8 - zs**3 / 30
    w0 = h * phi2
    w1 = h * (phi1 - phi2)
    return decay, w0, w1


def etd_convolve(src: np.ndarray, fine: np.ndarray) -> np.ndarray:
    """Convolution on a fine grid: src shape (..., n_fine, K)."""
    K = src.shape[-1]
    mu = np.arange(1, K + 1, dtype=float) ** 2
    out = np.zeros_like(src)
    cache = {}
    for i in range(fine.size - 1):
        h = fine[i + 1] - fine[i]
        key = round(h, 15)
        if key not in cache:
            cache[key] = _etd_weights(mu, h)
        decay, w0, w1 = cache[key]
        out[..., i + 1, :] = decay * out[..., i, :] + w0 * src[..., i, :] + w1 * src[..., i + 1, :]
    return out


def heat_on_grid(phi_coeffs: np.ndarray, fine: np.ndarray) -> np.ndarray:
    K = phi_coeffs.size
    mu = np.arange(1, K + 1, dtype=float) ** 2
    return np.exp(-np.outer(fine, mu)) * phi_coeffs
