"""The deterministic eps^2 gap between the Stratonovich and Wick solutions.

The limit of (u_strat - u_wick) / eps^2 is the action on phi of the kernel
obtained by threading the heat kernel through its own diagonal.  In the sine
basis it reads

    c_j(t) = sum_{k, l} W[j, k, l] T(j^2, k^2, l^2, t) phi_l,

where T is a double exponential convolution and W the y-integral weight.
With untruncated noise W = diag_coeff; with noise truncated to K_noise
modes the covariance delta(y - z) becomes a projection kernel and
W[j, k, l] = sum_{n <= K_noise} B_jnk B_knl.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .noise import NoiseRealization, white_noise_eval
from .spectral import (
    DomainError,
    SineBasis,
    SpectralField,
    _gauss_legendre,
    diag_tensor,
    modes,
    triple_tensor,
)
from .stratonovich import dyson_terms
from .wick import PropagatorTable, wick_series_term

# fallback threshold on the scaled node spread (t * (max - min))
TAYLOR_SPREAD = 0.5
_TAYLOR_TERMS = 40


def _phi1(x: np.ndarray) -> np.ndarray:
    """(1 - e^{-x}) / x with the x -> 0 limit."""
    out = np.ones_like(x)
    nz = x != 0
    out[nz] = -np.expm1(-x[nz]) / x[nz]
    return out


def _dd2_shifted(d1: np.ndarray, d2: np.ndarray) -> np.ndarray:
    """Second divided difference of e^{-w} at (0, d1, d2), 0 <= d1 <= d2."""
    out = np.empty_like(d2)
    taylor = d2 < TAYLOR_SPREAD
    a, b = d1[~taylor], d2[~taylor]
    out[~taylor] = (_phi1(a) - np.exp(-a) * _phi1(b - a)) / b
    # sum_m (-1)^m / m! * h_{m-2}(d1, d2), h = complete homogeneous polynomial
    a, b = d1[taylor], d2[taylor]
    h = np.ones_like(a)
    acc = 0.5 * h
    apow = np.ones_like(a)
    for m in range(3, _TAYLOR_TERMS):
        apow = apow * a
        h = h * b + apow
        acc = acc + (-1) ** m / math.factorial(m) * h
    out[taylor] = acc
    return out


def triple_exp_convolution(a, b, c, t):
    """Double convolution of exp(-a.), exp(-b.), exp(-c.) at time t.

    Equals the second divided difference of lambda -> exp(-lambda t) over the
    nodes {a, b, c}; accepts broadcastable arrays.
    """
    a, b, c, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, c, t)))
    if np.any(t < 0):
        raise DomainError("t must be >= 0")
    nodes = np.sort(np.stack([a, b, c]) * t, axis=0)
    z0 = nodes[0]
    d1 = (nodes[1] - z0).ravel()
    d2 = (nodes[2] - z0).ravel()
    val = _dd2_shifted(d1, d2).reshape(z0.shape) * t**2 * np.exp(-z0)
    return float(val) if val.ndim == 0 else val


def truncated_noise_weights(K_out: int, K_diag: int, noise_modes: int) -> np.ndarray:
    """sum_{n <= noise_modes} B[j, n, k] B[k, n, l] for j, l <= K_out, k <= K_diag."""
    K = max(K_out, K_diag, noise_modes)
    B = triple_tensor(K)
    left = B[:K_out, :noise_modes, :K_diag]
    right = B[:K_diag, :noise_modes, :K_out]
    return np.einsum("jnk,knl->jkl", left, right)


def correction_field(phi: SpectralField, t: float, K_basis: int, K_diag: int,
                     noise_modes: int | None = None) -> SpectralField:
    """Second-order correction field at time t on K_basis output modes.

    ``noise_modes=None`` uses the untruncated diagonal weights; an integer
    gives the exact eps^2 limit of a model whose noise has that many modes.
    """
    if t <= 0:
        raise DomainError(f"correction needs t > 0, got t={t}")
    if noise_modes is None:
        W = diag_tensor(K_basis, K_diag)
    else:
        W = truncated_noise_weights(K_basis, K_diag, noise_modes)
    j = np.arange(1, K_basis + 1, dtype=float)[:, None, None] ** 2
    k = np.arange(1, K_diag + 1, dtype=float)[None, :, None] ** 2
    T = triple_exp_convolution(j, k, j.reshape(1, 1, -1), t)
    phi_c = phi.resized(K_basis).coeffs
    return SpectralField(np.einsum("jkl,jkl,l->j", W, T, phi_c))


def correction_extrapolated(phi: SpectralField, t: float, K_basis: int, K_diag: int) -> SpectralField:
    """K_diag -> infinity estimate by two Richardson steps on {K, 2K, 4K}."""
    f1, f2, f4 = (correction_field(phi, t, K_basis, m * K_diag).coeffs for m in (1, 2, 4))
    r1 = 2 * f2 - f1
    r2 = 2 * f4 - f2
    return SpectralField((4 * r2 - r1) / 3)


def second_order_gap(table: PropagatorTable, phi: SpectralField, nr: NoiseRealization,
                     t: float) -> SpectralField:
    """Stratonovich minus Wick second series term for one realization."""
    if table.N < 2:
        raise ValueError("table must be built to order >= 2")
    nr = nr.truncated(table.K)
    if table.scheme == "exact":
        strat2 = dyson_terms(phi, nr, 2, [t])[2, 0]
    else:
        i = table.time_index(t)
        strat2 = dyson_terms(phi, nr, 2, table.t_grid, scheme="etd",
                             steps=table.steps_per_interval)[2, i]
    return SpectralField(strat2 - wick_series_term(table, 2, t, nr).coeffs)


def ws_integral_gap(f_coeffs: Sequence[SpectralField], nr: NoiseRealization | None = None) -> float:
    """Stratonovich minus Wick integral of f = sum_k f_k xi_k: sum_k <f_k, m_k>."""
    total = 0.0
    for k, fk in enumerate(f_coeffs, start=1):
        if k <= fk.K:
            total += fk.coeffs[k - 1]
    return float(total)


def _pairings(f_coeffs: Sequence[SpectralField], K: int) -> np.ndarray:
    # G[k, n] = <f_k, m_n>
    G = np.zeros((len(f_coeffs), K))
    for i, fk in enumerate(f_coeffs):
        G[i] = fk.resized(K).coeffs
    return G


def strat_integral(f_coeffs: Sequence[SpectralField], nr: NoiseRealization,
                   quadrature_points: int = 256) -> float:
    """Ordinary integral of f(x) V(x) for the smooth truncated potential."""
    x, w = _gauss_legendre(quadrature_points)
    f = sum(nr.xi[k] * fk(x) for k, fk in enumerate(f_coeffs))
    return float(np.sum(w * f * white_noise_eval(nr, x)))


def wick_integral(f_coeffs: Sequence[SpectralField], nr: NoiseRealization) -> float:
    """Skorokhod integral of f = sum_k f_k xi_k against the truncated noise."""
    G = _pairings(f_coeffs, nr.K)
    xi = nr.xi
    n = len(f_coeffs)
    wick_prod = np.outer(xi[:n], xi) - np.eye(n, nr.K)
    return float(np.sum(G * wick_prod))


def first_correction_quadrature(phi: SpectralField, nr: NoiseRealization, t: float,
                                time_nodes: int = 64) -> SpectralField:
    """First-order field by direct quadrature, independent of the series code.

    Evaluates u(s, y) V(y) pointwise, projects it on the K modes, and
    integrates the heat-damped result over s with Gauss-Legendre nodes.
    """
    K = nr.K
    basis = SineBasis(K)
    if t == 0:
        return SpectralField(np.zeros(K))
    y, wy = basis.nodes_weights
    phi_c = phi.resized(K).coeffs
    my = modes(y, K)
    V = white_noise_eval(nr, y)
    lam = np.arange(1, K + 1, dtype=float) ** 2
    g, wg = np.polynomial.legendre.leggauss(time_nodes)
    s = 0.5 * t * (g + 1.0)
    ws = 0.5 * t * wg
    total = np.zeros(K)
    for si, wi in zip(s, ws):
        u = my @ (phi_c * np.exp(-lam * si))
        proj = (wy * u * V) @ my
        total += wi * np.exp(-lam * (t - si)) * proj
    return SpectralField(total)


def write_field_csv(field: SpectralField, x_grid, path) -> None:
    """Write (x, value) rows for a field on the given grid."""
    path = Path(path)
    values = field(np.asarray(x_grid, dtype=float))
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "value"])
            for x, v in zip(x_grid, values):
                w.writerow([format(float(x), ".17g"), format(float(v), ".17g")])
    except OSError as exc:
        raise OSError(f"cannot write correction CSV to {path}: {exc}") from exc
