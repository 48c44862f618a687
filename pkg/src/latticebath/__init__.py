"""Stochastic wavepacket dynamics coupled to a thermal acoustic lattice.

An electron on a periodic 2D grid evolves under a pair of stochastically
driven Schroedinger equations whose noise statistics reproduce, on average,
the exact reduced dynamics of linear coupling to a harmonic bath. The
package also carries an independent golden-rule rate calculation used to
cross-check the simulated momentum relaxation.
"""
from .materials import (
    CouplingClass,
    DerivedScales,
    Material,
    MaterialError,
    MATERIALS,
    classify_coupling,
    derive_parameters,
    get_material,
    rms_deformation,
)
from .grid import Grid2D, GridError
from .config import ConfigError, PRESETS, RunConfig, RunSetup, make_config, validate
from .propagator import (
    EnsembleError,
    EnsembleResult,
    PropagationError,
    run_ensemble,
    run_trajectory,
)
from .observables import ObservableSeries, fit_relaxation, spread_xi
from .perturbation import (
    QuadratureError,
    RateResult,
    SweepRow,
    rate_full,
    rate_meanfield,
    rate_sweep,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CouplingClass",
    "DerivedScales",
    "EnsembleError",
    "EnsembleResult",
    "Grid2D",
    "GridError",
    "Material",
    "MaterialError",
    "MATERIALS",
    "ObservableSeries",
    "PRESETS",
    "PropagationError",
    "QuadratureError",
    "RateResult",
    "RunConfig",
    "RunSetup",
    "SweepRow",
    "classify_coupling",
    "derive_parameters",
    "fit_relaxation",
    "get_material",
    "make_config",
    "rate_full",
    "rate_meanfield",
    "rate_sweep",
    "rms_deformation",
    "run_ensemble",
    "run_trajectory",
    "spread_xi",
    "validate",
    "__version__",
]
