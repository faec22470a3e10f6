"""Learning the optimal active sets of parametric linear programs by streaming discovery."""
from importlib import resources

from .dcopf import Network, build_dcopf, build_ptdf, dc_power_flow, load_network, parse_network
from .discovery import (
    DiscoveryConfig,
    DiscoveryResult,
    derived_constants,
    discover_mass,
    rate_of_discovery,
    resume,
    window_size,
)
from .lp_core import LpInstance, LpSolution, Status, check_feasibility, enumerate_vertices, solve_lp
from .parametric import (
    ActiveSetKey,
    ParametricProgram,
    ReductionMode,
    Sample,
    extract_active_set,
    instantiate,
    reduced_instance,
    solve_for_sample,
)
from .policy import ensemble_predict, evaluate_policy
from .sampling import DistributionSpec, Kind, draw, make_distribution
from .synthetic import categorical_system, low_complexity_profile, true_unobserved_mass

__version__ = "0.1.0"


def bundled_case(name: str):
    """Path to a network shipped with the package (e.g. ``"case3_demo.m"``)."""
    return resources.files(__package__) / "data" / name
