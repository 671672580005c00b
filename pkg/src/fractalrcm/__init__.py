"""Random conductance models on nested fractal graphs.

Builds graph approximations of nested fractals from iterated function
systems, computes effective resistances and their renormalization fixed
point, samples heavy-tailed random conductance environments, and
simulates variable- and constant-speed random walks together with their
trap time changes.
"""

from .ifs import (
    IFSMap,
    IFSSpec,
    FractalGraph,
    preset,
    preset_names,
    essential_fixed_points,
    build_graph,
    verify_nesting,
    verify_symmetry,
    sample_self_similar,
)
from .resistance import (
    ConductanceField,
    EdgeNetwork,
    BoundaryForm,
    ResistanceKernel,
    energy,
    trace_to,
    trace_to_level,
    effective_resistance,
    pairwise_resistance,
    kernel_of_form,
    green_kernel,
    expected_hitting_time,
)
from .renorm import (
    RenormResult,
    renorm_map,
    find_fixed_point,
    q_field,
    deterministic_field,
    deterministic_resistance,
)
from .environment import (
    ConductanceLaw,
    TrapMeasure,
    sample_environment,
    nu_measure,
    sample_trap_measure,
    tail_estimate,
)
from .streams import SeededStream
from .walks import (
    WalkConfig,
    WalkResult,
    ScalingReport,
    simulate_vsrw,
    simulate_csrw,
    crossing_oracle,
    scaling_experiment,
)
from .fin import TimeChangedWalkSetup, project_traps, simulate_time_changed, fin_stabilization_check
from .homogenize import random_resistance, estimate_c, run_homogenization

__version__ = "0.1.0"
