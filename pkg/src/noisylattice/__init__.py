"""Classical simulation toolkit for noisy fermionic and bosonic lattices.

Scalable samplers (covariance-matrix trajectories for fermions, truncated
product-state trajectories for bosons), the planners that size their runs,
and a dense small-system oracle for validation and counterexample studies.
"""

__version__ = "0.1.0"

from .model import (ModelSpec, ScheduleEntry, InitialState, DerivedConstants,
                    RunPlan, EpsilonBudget, load_model_spec, derived_constants,
                    check_thresholds, fermion_trotter_plan, boson_trotter_plan,
                    moment_bound, boson_truncation_plan, noise_split_weights)

__all__ = [
    "__version__",
    "ModelSpec", "ScheduleEntry", "InitialState", "DerivedConstants",
    "RunPlan", "EpsilonBudget", "load_model_spec", "derived_constants",
    "check_thresholds", "fermion_trotter_plan", "boson_trotter_plan",
    "moment_bound", "boson_truncation_plan", "noise_split_weights",
]
