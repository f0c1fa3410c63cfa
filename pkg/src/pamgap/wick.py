"""Chaos (propagator) solution of the Wick-Ito-Skorokhod Anderson model.

The coefficients u_alpha(t, .) of the Wiener chaos expansion solve a
lower-triangular deterministic system: level 0 is the heat flow of phi and
each level-n coefficient is a Duhamel integral of level-(n-1) coefficients
multiplied by noise modes.  The table of u_alpha is noise-independent; a
realization only enters through the Hermite functionals xi_alpha.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _expsum
from .noise import MultiIndex, NoiseRealization, enumerate_multiindices, xi_functionals
from .spectral import SpectralField, triple_tensor

SCHEMES = ("exact", "etd")
DEFAULT_STEPS = 64
_CHUNK = 4096


class ConfigError(ValueError):
    """Invalid solver configuration."""


class OffGridError(KeyError):
    """Requested time is not on the table grid."""


@dataclass(frozen=True)
class SeriesResult:
    field: SpectralField
    last_term_norm: float


@dataclass
class PropagatorTable:
    """Coefficient fields u_alpha(t_i, .) for |alpha| <= N.

    ``levels[n]`` has shape (count_n, len(t_grid), K), rows in canonical
    multi-index order ``indices[n]``.
    """

    K: int
    N: int
    t_grid: np.ndarray
    indices: list[list[MultiIndex]]
    levels: list[np.ndarray]
    eps: float = 1.0
    scheme: str = "exact"
    steps_per_interval: int = DEFAULT_STEPS

    def time_index(self, t: float) -> int:
        hits = np.flatnonzero(self.t_grid == t)
        if hits.size == 0:
            hits = np.flatnonzero(np.isclose(self.t_grid, t, rtol=0, atol=1e-14))
        if hits.size == 0:
            raise OffGridError(f"t={t} is not on the table grid {self.t_grid.tolist()}")
        return int(hits[0])

    def entry(self, alpha: MultiIndex, t: float) -> SpectralField:
        n = alpha.order
        row = self.indices[n].index(alpha)
        return SpectralField(self.levels[n][row, self.time_index(t)])

    def level_count(self, n: int) -> int:
        return len(self.indices[n])

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "N": self.N,
            "eps": self.eps,
            "scheme": self.scheme,
            "steps_per_interval": self.steps_per_interval,
            "t_grid": self.t_grid.tolist(),
            "entries": [
                {"alpha": list(a.entries), "values": self.levels[n][i].tolist()}
                for n in range(self.N + 1)
                for i, a in enumerate(self.indices[n])
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "PropagatorTable":
        d = json.loads(text)
        K, N = int(d["K"]), int(d["N"])
        indices: list[list[MultiIndex]] = [[] for _ in range(N + 1)]
        rows: list[list] = [[] for _ in range(N + 1)]
        for e in d["entries"]:
            a = MultiIndex(tuple(e["alpha"]))
            indices[a.order].append(a)
            rows[a.order].append(e["values"])
        levels = [np.array(r, dtype=float).reshape(len(r), len(d["t_grid"]), K) for r in rows]
        return cls(K, N, np.array(d["t_grid"], dtype=float), indices, levels,
                   float(d["eps"]), d["scheme"], int(d["steps_per_interval"]))


def _check_grid(t_grid) -> np.ndarray:
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or t_grid[0] != 0.0:
        raise ConfigError("t_grid must be a 1-D sequence starting at 0")
    if np.any(np.diff(t_grid) <= 0):
        raise ConfigError("t_grid must be strictly increasing")
    return t_grid


def _parents(prev: list[MultiIndex], cur: list[MultiIndex], K: int) -> np.ndarray:
    """parent[a, k] = row of alpha - e_k in the previous level, or -1."""
    lookup = {a.entries: i for i, a in enumerate(prev)}
    out = np.full((len(cur), K), -1, dtype=np.int64)
    for i, a in enumerate(cur):
        for k in a.support:
            out[i, k - 1] = lookup[a.lowered(k).entries]
    return out


def _level_source(prev: np.ndarray, cur: list[MultiIndex], parents: np.ndarray,
                  B: np.ndarray, eps: float) -> np.ndarray:
    """sum_k sqrt(alpha_k) B_k u_{alpha - e_k}; prev rows shaped (K, ...)."""
    K = B.shape[0]
    src = np.zeros((len(cur),) + prev.shape[1:])
    for k in range(K):
        rows = np.flatnonzero(parents[:, k] >= 0)
        if rows.size == 0:
            continue
        weight = eps * np.sqrt([cur[i].entries[k] for i in rows])
        mixed = np.einsum("ji,ai...->aj...", B[:, k, :], prev[parents[rows, k]])
        src[rows] += weight.reshape((-1,) + (1,) * (mixed.ndim - 1)) * mixed
    return src


def build_table(phi: SpectralField, K: int, N: int, t_grid, steps_per_interval: int = DEFAULT_STEPS,
                *, eps: float = 1.0, scheme: str = "exact") -> PropagatorTable:
    """Solve the propagator system up to chaos order N.

    ``scheme="exact"`` convolves exponential polynomials in closed form;
    ``scheme="etd"`` steps an exponential integrator with a piecewise-linear
    source on ``steps_per_interval`` substeps per grid interval.
    """
    t_grid = _check_grid(t_grid)
    if N < 0:
        raise ConfigError("N must be >= 0")
    if steps_per_interval < 1:
        raise ConfigError("steps_per_interval must be >= 1")
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}")
    phi_c = phi.resized(K).coeffs
    B = triple_tensor(K)
    indices = [enumerate_multiindices(K, n) for n in range(N + 1)]
    levels = []

    if scheme == "exact":
        # level n carries powers t^0..t^n; sizing by level keeps lower levels independent of N
        prev = _expsum.initial_expsum(phi_c, 1)[None]
        levels.append(_expsum.evaluate(prev, t_grid))
        for n in range(1, N + 1):
            parents = _parents(indices[n - 1], indices[n], K)
            cur_list = indices[n]
            vals = np.empty((len(cur_list), t_grid.size, K))
            keep = n < N
            cur = np.empty((len(cur_list), K, K, n + 1)) if keep else None
            prev = np.concatenate([prev, np.zeros(prev.shape[:-1] + (1,))], axis=-1)
            for lo in range(0, len(cur_list), _CHUNK):
                hi = min(lo + _CHUNK, len(cur_list))
                src = _level_source(prev, cur_list[lo:hi], parents[lo:hi], B, eps)
                block = _expsum.convolve(src)
                vals[lo:hi] = _expsum.evaluate(block, t_grid)
                if keep:
                    cur[lo:hi] = block
            levels.append(vals)
            prev = cur
    else:
        fine, coarse = _expsum.refine_grid(t_grid, steps_per_interval)
        prev = _expsum.heat_on_grid(phi_c, fine)[None]
        levels.append(prev[:, coarse])
        for n in range(1, N + 1):
            parents = _parents(indices[n - 1], indices[n], K)
            # move the mode axis forward so B mixes it
            src = _level_source(np.swapaxes(prev, 1, 2), indices[n], parents, B, eps)
            cur = _expsum.etd_convolve(np.swapaxes(src, 1, 2), fine)
            levels.append(cur[:, coarse])
            prev = cur
    return PropagatorTable(K, N, t_grid, indices, levels, float(eps), scheme, steps_per_interval)


def pairwise_sum(arr: np.ndarray) -> np.ndarray:
    """Tree summation over the first axis in a fixed order."""
    if arr.shape[0] == 0:
        return np.zeros(arr.shape[1:])
    while arr.shape[0] > 1:
        n = arr.shape[0]
        half = n // 2
        merged = arr[: 2 * half : 2] + arr[1 : 2 * half : 2]
        arr = np.concatenate([merged, arr[2 * half :]]) if n % 2 else merged
    return arr[0]


def wick_series_term(table: PropagatorTable, n: int, t: float, nr: NoiseRealization) -> SpectralField:
    """u_wick^(n)(t) = sum over |alpha| = n of xi_alpha u_alpha(t)."""
    if n > table.N or n < 0:
        raise ConfigError(f"chaos level {n} outside table order {table.N}")
    if nr.K < table.K:
        raise IndexError(f"realization has K={nr.K} < table K={table.K}")
    i = table.time_index(t)
    xis = xi_functionals(table.indices[n], nr.truncated(table.K))
    return SpectralField(pairwise_sum(xis[:, None] * table.levels[n][:, i]))


def wick_series_terms(table: PropagatorTable, t: float, nr: NoiseRealization) -> list[SpectralField]:
    return [wick_series_term(table, n, t, nr) for n in range(table.N + 1)]


def wick_solution(table: PropagatorTable, eps: float, t: float, nr: NoiseRealization,
                  N: int | None = None) -> SeriesResult:
    """Partial sum of the eps power series of the Wick solution."""
    N = table.N if N is None else N
    if N > table.N:
        raise ConfigError(f"N={N} exceeds table order {table.N}")
    terms = [wick_series_term(table, n, t, nr) for n in range(N + 1)]
    total = np.zeros(table.K)
    for n in range(N, -1, -1):
        total = total * eps + terms[n].coeffs
    return SeriesResult(SpectralField(total), abs(eps) ** N * terms[N].l2_norm())


def series_decay_diagnostic(table: PropagatorTable, nr: NoiseRealization, t: float) -> list[float]:
    """L2 norms of the Wick series terms at time t, n = 0..N."""
    return [wick_series_term(table, n, t, nr).l2_norm() for n in range(table.N + 1)]


def table_size(K: int, N: int) -> int:
    return sum(math.comb(n + K - 1, K - 1) for n in range(N + 1))
