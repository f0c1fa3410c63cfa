"""Stratonovich Anderson model with a truncated smooth potential.

At truncation level K the potential V = sum_k xi_k m_k is smooth, so the
Stratonovich solution is the classical Galerkin flow

    a'(t) = (-D + eps M) a(t),   D = diag(j^2),  M_ji = sum_k xi_k B_jki,

which is symmetric and solved exactly by eigendecomposition.  Its eps-power
series terms are the Dyson iterates b^(n) = int e^{-D(t-s)} M b^(n-1)(s) ds.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _expsum
from .noise import NoiseRealization
from .spectral import DomainError, SpectralField, sobolev_norm, triple_tensor
from .wick import DEFAULT_STEPS, SeriesResult


class NumericalError(RuntimeError):
    """Linear-algebra failure inside a solver."""


@dataclass(frozen=True)
class GalerkinSystem:
    K: int
    D: np.ndarray
    M: np.ndarray
    eps: float

    @property
    def A(self) -> np.ndarray:
        return np.diag(-self.D) + self.eps * self.M


def interaction_matrix(nr: NoiseRealization, K: int | None = None) -> np.ndarray:
    K = nr.K if K is None else K
    xi = nr.truncated(K).xi
    return np.einsum("jki,k->ji", triple_tensor(K), xi)


def galerkin_system(nr: NoiseRealization, eps: float, K: int | None = None) -> GalerkinSystem:
    K = nr.K if K is None else K
    D = np.arange(1, K + 1, dtype=float) ** 2
    return GalerkinSystem(K, D, interaction_matrix(nr, K), float(eps))


# lru_cache is internally locked, so concurrent callers are safe
@lru_cache(maxsize=256)
def _eigh(xi_bytes: bytes, K: int, eps: float) -> tuple[np.ndarray, np.ndarray]:
    xi = np.frombuffer(xi_bytes, dtype=float)
    M = np.einsum("jki,k->ji", triple_tensor(K), xi)
    A = np.diag(-(np.arange(1, K + 1, dtype=float) ** 2)) + eps * M
    A = 0.5 * (A + A.T)
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed for K={K}, eps={eps}") from exc
    w.setflags(write=False)
    V.setflags(write=False)
    return w, V


def strat_solution(phi: SpectralField, nr: NoiseRealization, eps: float, t: float,
                   K: int | None = None) -> SpectralField:
    """exp(t (-D + eps M)) applied to the coefficients of phi."""
    if t < 0:
        raise DomainError(f"negative time t={t}")
    K = nr.K if K is None else K
    xi = np.ascontiguousarray(nr.truncated(K).xi, dtype=float)
    w, V = _eigh(xi.tobytes(), K, float(eps))
    a0 = phi.resized(K).coeffs
    return SpectralField(V @ (np.exp(w * t) * (V.T @ a0)))


def dyson_terms(phi: SpectralField, nr: NoiseRealization, N: int, times, *,
                scheme: str = "exact", steps: int = DEFAULT_STEPS) -> np.ndarray:
    """Dyson terms b^(n)(t) for n = 0..N; shape (N+1, len(times), K).

    With ``scheme="etd"`` the times must form a grid starting at 0.
    """
    K = nr.K
    M = interaction_matrix(nr)
    phi_c = phi.resized(K).coeffs
    out = np.empty((N + 1, len(np.atleast_1d(times)), K))
    if scheme == "exact":
        P = N + 1
        cur = _expsum.initial_expsum(phi_c, P)
        out[0] = _expsum.evaluate(cur, times)
        for n in range(1, N + 1):
            cur = _expsum.convolve(np.einsum("ji,irp->jrp", M, cur))
            out[n] = _expsum.evaluate(cur, times)
    elif scheme == "etd":
        fine, coarse = _expsum.refine_grid(times, steps)
        cur = _expsum.heat_on_grid(phi_c, fine)
        out[0] = cur[coarse]
        for n in range(1, N + 1):
            cur = _expsum.etd_convolve(cur @ M.T, fine)
            out[n] = cur[coarse]
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return out


def strat_series_term(phi: SpectralField, nr: NoiseRealization, n: int, t: float,
                      steps: int | None = None) -> SpectralField:
    """n-th Dyson term at time t.

    ``steps=None`` uses the exact exponential-polynomial convolution; an
    integer selects the grid integrator on [0, t] with that many substeps.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if steps is None:
        return SpectralField(dyson_terms(phi, nr, n, [t])[n, 0])
    if t == 0:
        return SpectralField(dyson_terms(phi, nr, n, [0.0])[n, 0])
    return SpectralField(dyson_terms(phi, nr, n, [0.0, t], scheme="etd", steps=steps)[n, 1])


def strat_series_solution(phi: SpectralField, nr: NoiseRealization, eps: float, t: float,
                          N: int) -> SeriesResult:
    terms = dyson_terms(phi, nr, N, [t])[:, 0]
    total = np.zeros(nr.K)
    for n in range(N, -1, -1):
        total = total * eps + terms[n]
    return SeriesResult(SpectralField(total), abs(eps) ** N * float(np.linalg.norm(terms[N])))


def hgamma_diagnostic(field: SpectralField, gamma: float, t: float, phi: SpectralField) -> float:
    """||field||_gamma t^(gamma/2) / ||phi||_0, bounded uniformly in t."""
    if t <= 0:
        raise DomainError("diagnostic needs t > 0")
    return sobolev_norm(field, gamma) * t ** (gamma / 2) / phi.l2_norm()
