"""Experiment orchestration: eps ladders, first-order checks, K studies.

Every report carries the hash of the configuration that produced it and is
byte-reproducible: cells are computed per seed (optionally on a thread pool)
and merged in seed order.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import scipy

from . import __version__
from .correction import (
    correction_extrapolated,
    correction_field,
    first_correction_quadrature,
)
from .noise import sample
from .spectral import SineBasis, SpectralField
from .stratonovich import dyson_terms, hgamma_diagnostic, strat_solution
from .wick import SCHEMES, ConfigError, build_table, series_decay_diagnostic, wick_series_terms

log = logging.getLogger(__name__)

FLOOR_FACTOR = 100.0
FIRST_ORDER_TOL = 1e-8
FORMATS = ("csv", "json")


def _default_x_grid() -> tuple[float, ...]:
    return tuple(math.pi * i / 10 for i in range(1, 10))


@dataclass
class ExperimentConfig:
    K: int = 8
    K_diag: int = 32
    N: int = 4
    T: float = 0.5
    t_report: tuple[float, ...] | None = None
    x_grid: tuple[float, ...] = field(default_factory=_default_x_grid)
    eps_ladder: tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    phi: str = "sin"
    phi_coeffs: tuple[float, ...] | None = None
    steps_per_interval: int = 64
    gamma: float = 0.6
    scheme: str = "exact"
    workers: int = 1

    def __post_init__(self):
        for name in ("t_report", "x_grid", "eps_ladder", "seeds", "phi_coeffs"):
            v = getattr(self, name)
            if v is not None and not isinstance(v, tuple):
                setattr(self, name, tuple(v))

    @property
    def times(self) -> tuple[float, ...]:
        return tuple(self.t_report) if self.t_report else (float(self.T),)

    def validate(self) -> "ExperimentConfig":
        if self.K < 1 or self.K_diag < 1:
            raise ConfigError("K and K_diag must be >= 1")
        if self.N < 2:
            raise ConfigError("N must be >= 2")
        if self.T <= 0:
            raise ConfigError("T must be > 0")
        times = self.times
        if any(t <= 0 or t > self.T for t in times) or list(times) != sorted(set(times)):
            raise ConfigError("t_report must be increasing times in (0, T]")
        if not self.x_grid or any(not 0 <= x <= math.pi for x in self.x_grid):
            raise ConfigError("x_grid must be non-empty and inside [0, pi]")
        eps = self.eps_ladder
        if not eps or any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ConfigError("eps_ladder must be strictly decreasing positive values")
        if not self.seeds or any(s < 0 or s >= 2**64 for s in self.seeds):
            raise ConfigError("seeds must be non-empty 64-bit unsigned integers")
        if self.phi not in ("sin", "bump", "coeffs"):
            raise ConfigError(f"unknown phi preset {self.phi!r}")
        if self.phi == "coeffs" and not self.phi_coeffs:
            raise ConfigError("phi='coeffs' needs phi_coeffs")
        if self.steps_per_interval < 1:
            raise ConfigError("steps_per_interval must be >= 1")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("workers")  # execution detail, not part of the experiment
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def bump(x):
    """Smooth bump supported on (pi/4, 3pi/4) with peak 1."""
    r = (np.asarray(x, dtype=float) - np.pi / 2) / (np.pi / 4)
    out = np.zeros_like(r)
    inside = np.abs(r) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


def make_phi(spec: str, K: int, coeffs: Sequence[float] | None = None) -> SpectralField:
    if spec == "sin":
        c = np.zeros(K)
        c[0] = math.sqrt(math.pi / 2)
        return SpectralField(c)
    if spec == "bump":
        return SineBasis(K).project(bump)
    if spec == "coeffs":
        return SpectralField(list(coeffs)).resized(K)
    raise ConfigError(f"unknown phi preset {spec!r}")


def _metadata(config: ExperimentConfig, kind: str) -> dict:
    return {
        "kind": kind,
        "config_hash": config.config_hash(),
        "config": config.to_dict(),
        "seeds": list(config.seeds),
        "versions": {
            "pamgap": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


def _map_seeds(fn: Callable[[int], Any], config: ExperimentConfig) -> list:
    if config.workers == 1 or len(config.seeds) == 1:
        return [fn(s) for s in config.seeds]
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(fn, config.seeds))


@dataclass(frozen=True)
class LadderRow:
    seed: int
    t: float
    x: float
    eps: float
    u_wick: float
    u_strat: float
    gap: float
    scaled_gap: float
    correction_ref: float
    noise_floor: float


LADDER_COLUMNS = [f.name for f in dataclasses.fields(LadderRow)]


@dataclass
class LadderReport:
    rows: list[LadderRow]
    slope_fits: dict[tuple[int, float, float], float | None]
    cross_seed_spread: dict[tuple[float, float, float], float]
    correction_deviation: dict[tuple[int, float, float], float]
    noise_floor: dict[int, float]
    diagnostics: dict
    metadata: dict
    failures: int = 0

    columns = LADDER_COLUMNS

    def csv_rows(self):
        for r in self.rows:
            yield [getattr(r, c) for c in self.columns]

    def max_spread(self, eps: float) -> float:
        return max(v for (t, x, e), v in self.cross_seed_spread.items() if e == eps)

    def max_deviation(self, eps: float) -> float:
        return max(v for (s, t, e), v in self.correction_deviation.items() if e == eps)

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "columns": self.columns,
            "rows": [list(r) for r in self.csv_rows()],
            "slope_fits": [
                {"seed": s, "t": t, "x": x, "slope": v} for (s, t, x), v in self.slope_fits.items()
            ],
            "cross_seed_spread": [
                {"t": t, "x": x, "eps": e, "spread": v} for (t, x, e), v in self.cross_seed_spread.items()
            ],
            "correction_deviation": [
                {"seed": s, "t": t, "eps": e, "rel_sup_error": v}
                for (s, t, e), v in self.correction_deviation.items()
            ],
            "noise_floor": [{"seed": s, "floor": v} for s, v in self.noise_floor.items()],
            "diagnostics": self.diagnostics,
            "failures": self.failures,
        }


def fit_slope(eps: Sequence[float], gaps: Sequence[float], floor: float) -> float | None:
    """Least-squares slope of log|gap| against log eps above the noise floor."""
    pts = [(e, abs(g)) for e, g in zip(eps, gaps) if np.isfinite(g) and abs(g) > FLOOR_FACTOR * floor]
    if len(pts) < 2:
        return None
    le = np.log([p[0] for p in pts])
    lg = np.log([p[1] for p in pts])
    return float(np.polyfit(le, lg, 1)[0])


def run_ladder(config: ExperimentConfig) -> LadderReport:
    """Compare Wick and Stratonovich solutions along the eps ladder."""
    config.validate()
    K, N = config.K, config.N
    phi = make_phi(config.phi, K, config.phi_coeffs)
    times = config.times
    t_grid = (0.0,) + times
    x = np.asarray(config.x_grid, dtype=float)
    table = build_table(phi, K, N, t_grid, config.steps_per_interval, scheme=config.scheme)
    # doubled-resolution rerun for the noise floor; the exact scheme has no resolution knob
    table2 = table if config.scheme == "exact" else build_table(
        phi, K, N, t_grid, 2 * config.steps_per_interval, scheme=config.scheme)
    refs = {t: correction_field(phi, t, K, K, noise_modes=K) for t in times}
    ref_vals = {t: refs[t](x) for t in times}
    eps_max = config.eps_ladder[0]

    def per_seed(seed: int):
        nr = sample(seed, K)
        cells = {}
        fails = 0
        floor = 0.0
        for t in times:
            terms = np.array([f.coeffs for f in wick_series_terms(table, t, nr)])
            for eps in config.eps_ladder:
                try:
                    uw = _horner(terms, eps)
                    us = strat_solution(phi, nr, eps, t).coeffs
                    uw_x = SpectralField(uw)(x)
                    us_x = SpectralField(us)(x)
                    if not (np.all(np.isfinite(uw_x)) and np.all(np.isfinite(us_x))):
                        raise FloatingPointError("non-finite solution value")
                except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
                    log.warning("cell failed seed=%s t=%s eps=%s: %s", seed, t, eps, exc)
                    fails += 1
                    uw_x = us_x = np.full(x.shape, np.nan)
                cells[(t, eps)] = (uw_x, us_x)
                if eps == eps_max:
                    roundoff = 64 * np.finfo(float).eps * float(np.max(np.abs(us_x) + np.abs(uw_x)))
                    refine = 0.0
                    if table2 is not table:
                        terms2 = np.array([f.coeffs for f in wick_series_terms(table2, t, nr)])
                        uw2 = SpectralField(_horner(terms2, eps))(x)
                        refine = float(np.max(np.abs(uw2 - uw_x)))
                    floor = max(floor, roundoff, refine)
        diag = {
            "series_decay": [series_decay_diagnostic(table, nr, t) for t in times],
            "hgamma_max": _hgamma_scan(phi, nr, eps_max, config),
        }
        return seed, cells, floor, fails, diag

    results = _map_seeds(per_seed, config)

    rows: list[LadderRow] = []
    slope_fits = {}
    deviation = {}
    floors = {}
    diagnostics = {"series_decay": {}, "hgamma_max": {}}
    failures = 0
    scaled: dict[tuple[float, float], list[np.ndarray]] = {}
    for seed, cells, floor, fails, diag in results:
        floors[seed] = floor
        failures += fails
        diagnostics["series_decay"][str(seed)] = diag["series_decay"]
        diagnostics["hgamma_max"][str(seed)] = diag["hgamma_max"]
        for t in times:
            ref = ref_vals[t]
            gaps_by_eps = []
            for eps in config.eps_ladder:
                uw_x, us_x = cells[(t, eps)]
                gap = us_x - uw_x
                sg = gap / eps**2
                gaps_by_eps.append(gap)
                scaled.setdefault((t, eps), []).append(sg)
                deviation[(seed, t, eps)] = float(np.max(np.abs(sg - ref)) / np.max(np.abs(ref)))
                for i, xi in enumerate(x):
                    rows.append(LadderRow(seed, t, float(xi), eps, float(uw_x[i]), float(us_x[i]),
                                          float(gap[i]), float(sg[i]), float(ref[i]), floor))
            gaps_by_eps = np.array(gaps_by_eps)
            for i, xi in enumerate(x):
                slope_fits[(seed, t, float(xi))] = fit_slope(config.eps_ladder, gaps_by_eps[:, i], floor)

    spread = {}
    for t in times:
        for eps in config.eps_ladder:
            stack = np.array(scaled[(t, eps)])
            sp = stack.max(axis=0) - stack.min(axis=0)
            for i, xi in enumerate(x):
                spread[(t, float(xi), eps)] = float(sp[i])

    diagnostics["correction_limit"] = {
        str(t): correction_extrapolated(phi, t, K, config.K_diag)(x).tolist() for t in times
    }
    diagnostics["correction_untruncated_noise"] = {
        str(t): correction_field(phi, t, K, K)(x).tolist() for t in times
    }
    meta = _metadata(config, "ladder")
    meta["scheme"] = config.scheme
    meta["floor_factor"] = FLOOR_FACTOR
    return LadderReport(rows, slope_fits, spread, deviation, floors, diagnostics, meta, failures)


def _horner(terms: np.ndarray, eps: float) -> np.ndarray:
    total = np.zeros(terms.shape[1])
    for n in range(terms.shape[0] - 1, -1, -1):
        total = total * eps + terms[n]
    return total


def _hgamma_scan(phi: SpectralField, nr, eps: float, config: ExperimentConfig, levels: int = 20) -> float:
    ratios = [
        hgamma_diagnostic(strat_solution(phi, nr, eps, config.T * 2.0**-m), config.gamma,
                          config.T * 2.0**-m, phi)
        for m in range(levels + 1)
    ]
    return float(max(ratios))


@dataclass
class TableReport:
    """Generic row-oriented report."""

    columns: list[str]
    rows: list[list]
    metadata: dict
    summary: dict
    failures: int = 0

    def csv_rows(self):
        return iter(self.rows)

    def to_dict(self) -> dict:
        return {"metadata": self.metadata, "columns": self.columns, "rows": self.rows,
                "summary": self.summary, "failures": self.failures}


def run_first_order_check(config: ExperimentConfig) -> TableReport:
    """Compare the first series term from the Wick, Dyson and direct paths."""
    config.validate()
    K = config.K
    phi = make_phi(config.phi, K, config.phi_coeffs)
    times = config.times
    table = build_table(phi, K, 1, (0.0,) + times, config.steps_per_interval, scheme=config.scheme)
    x = np.asarray(config.x_grid, dtype=float)

    def per_seed(seed: int):
        nr = sample(seed, K)
        out = []
        if config.scheme == "exact":
            dyson = dyson_terms(phi, nr, 1, times)[1]
        else:
            dyson = dyson_terms(phi, nr, 1, (0.0,) + times, scheme="etd",
                               steps=config.steps_per_interval)[1, 1:]
        for i, t in enumerate(times):
            w = wick_series_terms(table, t, nr)[1]
            s = SpectralField(dyson[i])
            d = first_correction_quadrature(phi, nr, t)
            wx, sx, dx = w(x), s(x), d(x)
            out.append([seed, t,
                        float(max(np.max(np.abs(wx - sx)), np.max(np.abs(w.coeffs - s.coeffs)))),
                        float(max(np.max(np.abs(wx - dx)), np.max(np.abs(w.coeffs - d.coeffs)))),
                        float(max(np.max(np.abs(sx - dx)), np.max(np.abs(s.coeffs - d.coeffs)))),
                        float(np.max(np.abs(dx)))])
        return out

    rows = [r for block in _map_seeds(per_seed, config) for r in block]
    worst = max(max(r[2:5]) for r in rows)
    summary = {"max_difference": worst, "tolerance": FIRST_ORDER_TOL, "passed": worst <= FIRST_ORDER_TOL}
    cols = ["seed", "t", "wick_vs_strat", "wick_vs_direct", "strat_vs_direct", "max_abs_field"]
    return TableReport(cols, rows, _metadata(config, "first-order"), summary)


def run_k_convergence(config: ExperimentConfig, eps: float | None = None,
                      factors: Sequence[int] = (1, 2, 4)) -> TableReport:
    """Sup differences of the Stratonovich solution between K, 2K, 4K."""
    config.validate()
    eps = config.eps_ladder[0] if eps is None else eps
    Ks = [config.K * f for f in factors]
    x = np.asarray(config.x_grid, dtype=float)

    def per_seed(seed: int):
        nr = sample(seed, Ks[-1])
        out = []
        for t in config.times:
            vals = []
            for K in Ks:
                phi = make_phi(config.phi, K, config.phi_coeffs)
                vals.append(strat_solution(phi, nr.truncated(K), eps, t)(x))
            diffs = [float(np.max(np.abs(b - a))) for a, b in zip(vals, vals[1:])]
            for K, d in zip(Ks, diffs):
                out.append([seed, t, eps, K, d])
        return out

    rows = [r for block in _map_seeds(per_seed, config) for r in block]
    decreasing = {}
    for seed in config.seeds:
        for t in config.times:
            d = [r[4] for r in rows if r[0] == seed and r[1] == t]
            decreasing[f"{seed}@{t}"] = all(b <= a for a, b in zip(d, d[1:]))
    summary = {"Ks": Ks, "eps": eps, "decreasing": decreasing}
    return TableReport(["seed", "t", "eps", "K", "diff_to_next"], rows, _metadata(config, "k-convergence"),
                       summary)


def run_correction(config: ExperimentConfig) -> TableReport:
    """Correction field on x_grid at K_diag, plus the extrapolated limit."""
    config.validate()
    phi = make_phi(config.phi, config.K, config.phi_coeffs)
    x = np.asarray(config.x_grid, dtype=float)
    rows = []
    summary = {}
    for t in config.times:
        field_kd = correction_field(phi, t, config.K, config.K_diag)
        limit = correction_extrapolated(phi, t, config.K, config.K_diag)
        truncated = correction_field(phi, t, config.K, config.K, noise_modes=config.K)
        for xi, v, lim, tr in zip(x, field_kd(x), limit(x), truncated(x)):
            rows.append([t, float(xi), float(v), float(lim), float(tr)])
        summary[str(t)] = {"coeffs": field_kd.coeffs.tolist(), "limit_coeffs": limit.coeffs.tolist()}
    cols = ["t", "x", "value", "extrapolated", "truncated_noise"]
    return TableReport(cols, rows, _metadata(config, "correction"), summary)


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def render(report, fmt: str) -> str:
    if fmt not in FORMATS:
        raise ConfigError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=1, sort_keys=False, default=_json_default) + "\n"
    buf = io.StringIO()
    buf.write(f"# config_hash={report.metadata['config_hash']} seeds={','.join(map(str, report.metadata['seeds']))}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(report.columns)
    for row in report.csv_rows():
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def emit(report, fmt: str, path) -> None:
    """Write a report as CSV or JSON; ``path='-'`` writes to stdout."""
    text = render(report, fmt)
    if str(path) == "-":
        sys.stdout.write(text)
        return
    path = Path(path)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Parse an emitted CSV report, skipping the provenance comment."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]
