"""Sine basis on (0, pi) with Dirichlet boundary conditions.

Fields are stored as dense coefficient vectors against the orthonormal modes
m_k(x) = sqrt(2/pi) sin(kx), k = 1..K.  The heat semigroup is diagonal in
this basis, and the coupling tensors used by the solvers have closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

NORM = np.sqrt(2.0 / np.pi)
KERNEL_CUTOFF = 1e-16


class DomainError(ValueError):
    """Argument outside the domain of a spectral operation."""


def modes(x, K: int) -> np.ndarray:
    """Values m_k(x) for k = 1..K; shape ``x.shape + (K,)``."""
    x = np.asarray(x, dtype=float)
    k = np.arange(1, K + 1)
    return NORM * np.sin(x[..., None] * k)


@dataclass(frozen=True)
class SpectralField:
    """A function on [0, pi] given by its sine coefficients."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coeffs must be a non-empty 1-D sequence")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def K(self) -> int:
        return self.coeffs.size

    def __call__(self, x):
        return modes(x, self.K) @ self.coeffs

    def resized(self, K: int) -> "SpectralField":
        """Zero-pad or truncate to K modes."""
        c = np.zeros(K)
        n = min(K, self.K)
        c[:n] = self.coeffs[:n]
        return SpectralField(c)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.dot(self.coeffs, self.coeffs)))

    def __add__(self, other):
        return SpectralField(self.coeffs + _coeffs_of(other))

    def __sub__(self, other):
        return SpectralField(self.coeffs - _coeffs_of(other))

    def __mul__(self, scalar):
        return SpectralField(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(-self.coeffs)


def _coeffs_of(other) -> np.ndarray:
    if isinstance(other, SpectralField):
        return other.coeffs
    raise TypeError(f"expected SpectralField, got {type(other).__name__}")


def unit_field(k: int, K: int) -> SpectralField:
    """The mode m_k as a K-mode field."""
    c = np.zeros(K)
    c[k - 1] = 1.0
    return SpectralField(c)


@dataclass(frozen=True)
class SineBasis:
    """K sine modes with a Gauss-Legendre rule for projections."""

    K: int
    quadrature_points: int = field(default=0)

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.quadrature_points <= 0:
            object.__setattr__(self, "quadrature_points", 4 * self.K + 16)

    @property
    def nodes_weights(self) -> tuple[np.ndarray, np.ndarray]:
        return _gauss_legendre(self.quadrature_points)

    def project(self, f: Callable[[np.ndarray], np.ndarray]) -> SpectralField:
        """Coefficients a_k = integral of f * m_k over (0, pi)."""
        x, w = self.nodes_weights
        vals = np.asarray(f(x), dtype=float)
        if vals.shape != x.shape:
            vals = np.broadcast_to(vals, x.shape)
        bad = ~np.isfinite(vals)
        if bad.any():
            i = int(np.argmax(bad))
            raise ValueError(f"non-finite sample {vals[i]!r} at x={x[i]!r}")
        return SpectralField((w * vals) @ modes(x, self.K))

    def evaluate(self, f: SpectralField, x) -> np.ndarray:
        return modes(x, self.K) @ f.resized(self.K).coeffs

    def gram(self) -> np.ndarray:
        x, w = self.nodes_weights
        m = modes(x, self.K)
        return (m * w[:, None]).T @ m


@lru_cache(maxsize=64)
def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * np.pi * (t + 1.0)
    w = 0.5 * np.pi * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def heat_multipliers(K: int, t: float) -> np.ndarray:
    if t < 0:
        raise DomainError(f"negative time t={t}")
    k = np.arange(1, K + 1)
    return np.exp(-(k * k) * t)


def heat_evolve(f: SpectralField, t: float) -> SpectralField:
    """Apply the Dirichlet heat semigroup for time t."""
    return SpectralField(f.coeffs * heat_multipliers(f.K, t))


def heat_kernel_eval(t: float, x: float, y: float) -> float:
    """Partial sum of the Dirichlet heat kernel p(t, x, y)."""
    if t <= 0:
        raise DomainError(f"heat kernel needs t > 0, got t={t}")
    # smallest k with (2/pi) exp(-k^2 t) < cutoff
    kmax = int(np.ceil(np.sqrt(np.log(2.0 / (np.pi * KERNEL_CUTOFF)) / t))) + 1
    k = np.arange(1, kmax + 1)
    terms = np.exp(-(k * k) * t) * np.sin(k * x) * np.sin(k * y)
    return float(2.0 / np.pi * np.sum(terms))


def sobolev_norm(f: SpectralField, gamma: float) -> float:
    k = np.arange(1, f.K + 1, dtype=float)
    return float(np.sqrt(np.sum(k ** (2.0 * gamma) * f.coeffs**2)))


def triple_coeff(j: int, k: int, l: int) -> float:
    """Integral over (0, pi) of m_j m_k m_l."""
    if min(j, k, l) < 1:
        raise DomainError("mode indices start at 1")
    return float(_triple_closed_form(np.array([[j, k, l]]))[0])


def _triple_closed_form(idx: np.ndarray) -> np.ndarray:
    """Rows (j, k, l) -> integral of m_j m_k m_l; sorted so permutations agree bitwise."""
    a, b, c = np.sort(idx, axis=-1).T.astype(float)

    def sine_integral(n):
        # int_0^pi sin(n x) dx = 2/n for odd n, 0 for even n
        odd = np.abs(n) % 2 == 1
        return np.where(odd, 2.0 / np.where(odd, n, 1.0), 0.0)

    # 4 sin a sin b sin c = sin(a+b-c) + sin(b+c-a) + sin(c+a-b) - sin(a+b+c)
    s = sine_integral(a + b - c) + sine_integral(b + c - a) + sine_integral(c + a - b) - sine_integral(a + b + c)
    return NORM**3 * 0.25 * s


def diag_coeff(j: int, k: int, l: int) -> float:
    """Integral over (0, pi) of m_j(y) (2/pi) sin^2(ky) m_l(y)."""
    if min(j, k, l) < 1:
        raise DomainError("mode indices start at 1")
    # sin^2(ky) = (1 - cos(2ky)) / 2; only full-period cosines survive
    value = (1.0 / np.pi) * (j == l)
    value -= (1.0 / (2.0 * np.pi)) * ((abs(j - l) == 2 * k) - (j + l == 2 * k))
    return float(value)


@lru_cache(maxsize=32)
def triple_tensor(K: int) -> np.ndarray:
    """B[j-1, k-1, l-1] = triple_coeff(j, k, l) for all indices <= K."""
    idx = np.indices((K, K, K)).reshape(3, -1).T + 1
    out = _triple_closed_form(idx).reshape(K, K, K)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=32)
def diag_tensor(K_out: int, K_diag: int) -> np.ndarray:
    """D[j-1, k-1, l-1] = diag_coeff(j, k, l), j, l <= K_out, k <= K_diag."""
    j = np.arange(1, K_out + 1)[:, None, None]
    k = np.arange(1, K_diag + 1)[None, :, None]
    l = np.arange(1, K_out + 1)[None, None, :]
    out = (j == l) / np.pi - ((np.abs(j - l) == 2 * k).astype(float) - (j + l == 2 * k)) / (2 * np.pi)
    out = np.broadcast_to(out, (K_out, K_diag, K_out)).copy()
    out.setflags(write=False)
    return out
