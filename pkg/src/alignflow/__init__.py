"""Long-time behavior of unidirectional Euler alignment flows.

Lagrangian particle simulation of the pressureless Euler alignment system,
extraction of the limiting flow map and measure, dimension estimates for
the concentrated part, and paired stability runs.
"""

from .dynamics import FlockState, IntegratorConfig, Trajectory, integrate
from .errors import (AlignflowError, ConfigError, IntegrationError, KernelError, LimitError,
                     MeasureError, NoDiameterBoundError, QuadratureError, ScenarioError,
                     SupercriticalError)
from .geometry import DimensionEstimate, box_dimension, local_dimension
from .kernel import ConstantKernel, Kernel, PowerTailKernel, TabulatedKernel, make_kernel
from .limits import (LimitFlowMap, LimitReport, MeasureDecomposition, build_limit_report,
                     limit_flow_map, limit_measure)
from .measure import MassMeasure, lumped_measure, w1_distance_1d
from .scenario import (Scenario, ZeroSet, cantor_scenario, constant_kernel_oracle,
                       from_entropy, from_velocity, generic_scenario, plateau_scenario,
                       powerlaw_scenario, ring_scenario_2d, zero_set)
from .stability import StabilityReport, perturb_velocity, run_pair

__version__ = "0.1.0"

__all__ = [
    "AlignflowError", "ConfigError", "ConstantKernel", "DimensionEstimate", "FlockState",
    "IntegrationError", "IntegratorConfig", "Kernel", "KernelError", "LimitError",
    "LimitFlowMap", "LimitReport", "MassMeasure", "MeasureDecomposition", "MeasureError",
    "NoDiameterBoundError", "PowerTailKernel", "QuadratureError", "Scenario", "ScenarioError",
    "StabilityReport", "SupercriticalError", "TabulatedKernel", "Trajectory", "ZeroSet",
    "box_dimension", "build_limit_report", "cantor_scenario", "constant_kernel_oracle",
    "from_entropy", "from_velocity", "generic_scenario", "integrate", "limit_flow_map",
    "limit_measure", "local_dimension", "lumped_measure", "make_kernel", "perturb_velocity",
    "plateau_scenario", "powerlaw_scenario", "ring_scenario_2d", "run_pair",
    "w1_distance_1d", "zero_set",
]
