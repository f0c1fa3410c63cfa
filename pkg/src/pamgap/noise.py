"""Truncated Brownian noise on (0, pi) and Wiener chaos functionals.

A realization is the vector xi_k, k = 1..K, of the Gaussian coordinates of
W against the sine modes.  The samples come from a Philox stream keyed by
the seed, one 64-bit counter block per mode, so xi_k does not depend on K.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtri

from .spectral import NORM, DomainError, modes

SEED_MASK = (1 << 64) - 1


def _uniforms(seed: int, K: int) -> np.ndarray:
    raw = np.random.Philox(key=int(seed) & SEED_MASK).random_raw(K)
    # 53-bit midpoint grid, strictly inside (0, 1)
    return ((raw >> np.uint64(11)).astype(float) + 0.5) * 2.0**-53


@dataclass(frozen=True)
class NoiseRealization:
    seed: int
    K: int
    xi: np.ndarray

    def __post_init__(self):
        xi = np.array(self.xi, dtype=float)
        if xi.shape != (self.K,):
            raise ValueError(f"xi must have length K={self.K}")
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)

    def truncated(self, K: int) -> "NoiseRealization":
        if K > self.K:
            return sample(self.seed, K)
        return NoiseRealization(self.seed, K, self.xi[:K])

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "K": self.K, "xi": [float(v) for v in self.xi]})

    @classmethod
    def from_json(cls, text: str) -> "NoiseRealization":
        d = json.loads(text)
        return cls(int(d["seed"]), int(d["K"]), np.array(d["xi"], dtype=float))


def sample(seed: int, K: int) -> NoiseRealization:
    if K < 1:
        raise ValueError("K must be >= 1")
    return NoiseRealization(int(seed), K, ndtri(_uniforms(seed, K)))


def zero_noise(K: int, seed: int = 0) -> NoiseRealization:
    return NoiseRealization(seed, K, np.zeros(K))


def _check_domain(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > np.pi)):
        raise DomainError("x must lie in [0, pi]")
    return x


def brownian_eval(nr: NoiseRealization, x):
    """Truncated Karhunen-Loeve path W_K(x)."""
    x = _check_domain(x)
    k = np.arange(1, nr.K + 1)
    antider = NORM * (1.0 - np.cos(x[..., None] * k)) / k
    return antider @ nr.xi


def white_noise_eval(nr: NoiseRealization, x):
    """Smooth potential V(x) = sum_k xi_k m_k(x), the derivative of W_K."""
    x = _check_domain(x)
    return modes(x, nr.K) @ nr.xi


def hermite(n: int, x):
    """Probabilists' Hermite polynomial He_n by three-term recurrence."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    x = np.asarray(x, dtype=float)
    prev, cur = np.ones_like(x), x.copy()
    if n == 0:
        return prev if prev.ndim else float(prev)
    for m in range(1, n):
        prev, cur = cur, x * cur - m * prev
    return cur if cur.ndim else float(cur)


@dataclass(frozen=True)
class MultiIndex:
    """Dense multi-index alpha = (alpha_1, ..., alpha_K)."""

    entries: tuple[int, ...]

    def __post_init__(self):
        e = tuple(int(a) for a in self.entries)
        if any(a < 0 for a in e):
            raise ValueError("multi-index entries must be nonnegative")
        object.__setattr__(self, "entries", e)

    @property
    def order(self) -> int:
        return sum(self.entries)

    @property
    def K(self) -> int:
        return len(self.entries)

    @property
    def support(self) -> tuple[int, ...]:
        """1-based modes with nonzero entry."""
        return tuple(k + 1 for k, a in enumerate(self.entries) if a)

    def __getitem__(self, k: int) -> int:
        """alpha_k for 1-based k (zero beyond K)."""
        return self.entries[k - 1] if 1 <= k <= len(self.entries) else 0

    def lowered(self, k: int) -> "MultiIndex":
        e = list(self.entries)
        e[k - 1] -= 1
        return MultiIndex(tuple(e))

    @classmethod
    def unit(cls, k: int, K: int) -> "MultiIndex":
        e = [0] * K
        e[k - 1] = 1
        return cls(tuple(e))

    @classmethod
    def zero(cls, K: int) -> "MultiIndex":
        return cls((0,) * K)


def xi_functional(alpha: MultiIndex, nr: NoiseRealization) -> float:
    """Normalized Hermite product over the support of alpha."""
    value = 1.0
    for k in alpha.support:
        if k > nr.K:
            raise IndexError(f"multi-index uses mode {k} but realization has K={nr.K}")
        a = alpha[k]
        value *= hermite(a, nr.xi[k - 1]) / math.sqrt(math.factorial(a))
    return float(value)


def xi_functionals(alphas: Sequence[MultiIndex], nr: NoiseRealization) -> np.ndarray:
    return np.array([xi_functional(a, nr) for a in alphas])


@lru_cache(maxsize=256)
def _enumerate(K: int, n: int) -> tuple[MultiIndex, ...]:
    out = []
    for combo in itertools.combinations_with_replacement(range(K), n):
        e = [0] * K
        for k in combo:
            e[k] += 1
        out.append(tuple(e))
    # descending grevlex at fixed degree == ascending reversed tuple
    out.sort(key=lambda e: e[::-1])
    return tuple(MultiIndex(e) for e in out)


def enumerate_multiindices(K: int, n: int) -> list[MultiIndex]:
    """All multi-indices over K modes with |alpha| = n, graded reverse-lex."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return list(_enumerate(K, n))


def count_multiindices(K: int, n: int) -> int:
    return math.comb(n + K - 1, K - 1)


def sample_many(seeds: Iterable[int], K: int) -> np.ndarray:
    """Stack of xi vectors, one row per seed."""
    return np.array([sample(s, K).xi for s in seeds])
