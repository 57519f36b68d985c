"""Numerical toolkit for Osgood moduli of continuity in transport equations.

The package bundles six strands of machinery around a single theme: how far
a modulus of continuity weaker than Lipschitz can be pushed before uniqueness
and stability for the transport equation, and for 2D incompressible Euler,
degrade.

- ``growth``: iterated-logarithm growth functions and admissibility audits.
- ``modulus``: the Osgood integral M, its decay profile R, and the propagated
  modulus that measures loss of regularity along a flow.
- ``acm``: a cell-cascade velocity built from shear mixers, with series
  diagnostics for blowup versus boundedness of negative-Sobolev norms.
- ``fields``: periodic grid fields, Besov-type seminorms via finite
  differences, and empirical modulus witnesses.
- ``flow``: ODE particle flow for Osgood fields, back-to-label maps, and
  two-trajectory separation audits.
- ``interp``: a log-interpolation inequality between a Besov seminorm, an
  L2 norm, and a modulus-weighted remainder, with constant-tracking reports.
- ``euler``: a pseudo-spectral 2D Euler solver and a quantitative stability
  audit for vorticities in generalized Yudovich classes.
- ``cli``: a deterministic experiment harness over all of the above.
"""

from .acm import (
    CellFamily,
    Condition2Report,
    SeriesReport,
    cell_norm_bounds,
    condition2_bound,
    make_cells,
    series_condition,
    surrogate_velocity,
)
from .euler import (
    CFLError,
    EulerState,
    StabilityParams,
    StabilityRecord,
    YNormReport,
    advance,
    biot_savart,
    enstrophy,
    fit_bound_constant,
    kinetic_energy,
    make_initial_vorticity,
    make_state,
    stability_bound,
    stability_experiment,
    step,
    y_norm_report,
)
from .fields import (
    GridField,
    A_of_u,
    besov_functional,
    empirical_modulus_witness,
    increment_l2_sq,
    layer_cake_l2_sq,
    lusin_Ds,
    random_band_limited,
    spectral_norm,
)
from .flow import (
    FlowTrace,
    SeparationReport,
    StepUnderflowError,
    VelocityField,
    back_to_label,
    integrate_flow,
    osgood_1d_exact,
    separation_audit,
    standard_field,
    transport_solve,
)
from .growth import GrowthFunction, eval_growth, verify_admissibility
from .interp import (
    EpsilonChoice,
    InterpReport,
    choose_epsilon,
    frequency_split_report,
    interpolation_sides,
    mollifier_kernel,
    mollifier_remainder,
)
from .modulus import (
    Modulus,
    PropagationContext,
    PropagationRangeError,
    R_inverse,
    R_of,
    eval_modulus,
    mu_omega,
    osgood_M,
    propagated_modulus,
    propagated_modulus_extended,
)

__version__ = "0.1.0"

__all__ = [
    "A_of_u",
    "CFLError",
    "CellFamily",
    "Condition2Report",
    "EpsilonChoice",
    "EulerState",
    "FlowTrace",
    "GridField",
    "GrowthFunction",
    "InterpReport",
    "Modulus",
    "PropagationContext",
    "PropagationRangeError",
    "R_inverse",
    "R_of",
    "SeparationReport",
    "SeriesReport",
    "StabilityParams",
    "StabilityRecord",
    "StepUnderflowError",
    "VelocityField",
    "YNormReport",
    "advance",
    "back_to_label",
    "besov_functional",
    "biot_savart",
    "cell_norm_bounds",
    "choose_epsilon",
    "condition2_bound",
    "empirical_modulus_witness",
    "enstrophy",
    "eval_growth",
    "eval_modulus",
    "fit_bound_constant",
    "frequency_split_report",
    "increment_l2_sq",
    "integrate_flow",
    "interpolation_sides",
    "kinetic_energy",
    "layer_cake_l2_sq",
    "lusin_Ds",
    "make_cells",
    "make_initial_vorticity",
    "make_state",
    "mollifier_kernel",
    "mollifier_remainder",
    "mu_omega",
    "osgood_1d_exact",
    "osgood_M",
    "propagated_modulus",
    "propagated_modulus_extended",
    "random_band_limited",
    "separation_audit",
    "series_condition",
    "spectral_norm",
    "stability_bound",
    "stability_experiment",
    "standard_field",
    "step",
    "surrogate_velocity",
    "transport_solve",
    "verify_admissibility",
    "y_norm_report",
]
