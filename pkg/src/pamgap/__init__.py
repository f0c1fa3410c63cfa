"""Spectral solvers comparing Wick and Stratonovich parabolic Anderson models."""

__version__ = "0.1.0"

from .spectral import (  # noqa: E402
    SineBasis,
    SpectralField,
    diag_coeff,
    heat_evolve,
    heat_kernel_eval,
    sobolev_norm,
    triple_coeff,
)
from .noise import (  # noqa: E402
    MultiIndex,
    NoiseRealization,
    brownian_eval,
    enumerate_multiindices,
    hermite,
    sample,
    white_noise_eval,
    xi_functional,
)
from .wick import (  # noqa: E402
    PropagatorTable,
    build_table,
    series_decay_diagnostic,
    wick_series_term,
    wick_solution,
)
from .stratonovich import (  # noqa: E402
    galerkin_system,
    hgamma_diagnostic,
    strat_series_solution,
    strat_series_term,
    strat_solution,
)
from .correction import (  # noqa: E402
    correction_field,
    second_order_gap,
    triple_exp_convolution,
    ws_integral_gap,
)

__all__ = [
    "SineBasis", "SpectralField", "diag_coeff", "heat_evolve", "heat_kernel_eval",
    "sobolev_norm", "triple_coeff", "MultiIndex", "NoiseRealization", "brownian_eval",
    "enumerate_multiindices", "hermite", "sample", "white_noise_eval", "xi_functional",
    "PropagatorTable", "build_table", "series_decay_diagnostic", "wick_series_term",
    "wick_solution", "galerkin_system", "hgamma_diagnostic", "strat_series_solution",
    "strat_series_term", "strat_solution", "correction_field", "second_order_gap",
    "triple_exp_convolution", "ws_integral_gap",
]
