"""Numerics for transversal families of piecewise expanding unimodal maps
and Monte-Carlo checks of the central limit theorem for t -> int phi d mu_t."""
import json
from importlib import resources

from .errors import (
    AmbiguityError,
    ConstructionError,
    ConvergenceError,
    DomainError,
    NearPeriodicWarning,
    NumericalError,
    ResolutionError,
    ResourceError,
    SpectralError,
    ValidationError,
    VarianceError,
)
from .maps import TentFamily, CustomFamily, BranchSpec, make_family, critical_orbit
from .transfer import DensityGrid, build_ulam, invariant_density, resolvent_zero_mean, saltus_weights
from .quantities import DynQuantities, QuantityConfig, dyn_quantities, get_observable
from .symbolic import n_of, param_partition, phase_partition
from .wild import birkhoff_surrogate, n3_estimate, newton_quotient, wild_integral
from .clt import CltConfig, ks_distance, run_direct_clt, run_surrogate_clt

__version__ = "0.1.0"


def load_expectations():
    """The versioned table of frozen calibration thresholds."""
    return json.loads(resources.files(__name__).joinpath("expectations.json").read_text())
