"""Input-output feedback linearization for tall plants and longitudinal flight."""

from .affine import (
    AffineSystem,
    RelativeDegreeProfile,
    ScalarField,
    find_relative_degree,
    iterated_lie_f,
    lie_f,
    lie_g,
    verify_relative_degree,
)
from .aircraft import AircraftParams, ReferenceSignal, load_default_params
from .iol import LinearizingController, companion_matrices, iol_control, pseudo_inverse
from .sim import Scenario, rk4_step, run_scenario, simulate_closed_loop
from .trim import solve_trim, trim_sweep

__version__ = "0.1.0"
