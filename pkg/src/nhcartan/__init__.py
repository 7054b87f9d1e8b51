"""Nonholonomic Lagrangian dynamics and conservation-law verification.

The main entry points are :class:`ConstrainedSystem` (a Lagrangian plus a
constraint distribution), :func:`gamma_constrained` for the constrained
field at a state, :func:`integrate` for trajectories, and the checks in
:mod:`nhcartan.conservation`.  Built-in systems come from
:func:`nhcartan.scenarios.builtin`.
"""

from .constraint import ConstrainedSystem, adapted_frame, characteristic_kernel, membership, pullback_omega
from .dynamics import DynamicsSample, Trajectory, gamma0, gamma_constrained, integrate, reaction_form
from .geometry import Chart, DistributionD, FrameQ, TangentState, VectorFieldQ, derived_flag, lie_bracket
from .lagrangian import GeneralLagrangian, MechanicalLagrangian
from .scenarios import builtin, load

__version__ = "0.1.0"

__all__ = [
    "Chart",
    "ConstrainedSystem",
    "DistributionD",
    "DynamicsSample",
    "FrameQ",
    "GeneralLagrangian",
    "MechanicalLagrangian",
    "TangentState",
    "Trajectory",
    "VectorFieldQ",
    "adapted_frame",
    "builtin",
    "characteristic_kernel",
    "derived_flag",
    "gamma0",
    "gamma_constrained",
    "integrate",
    "lie_bracket",
    "load",
    "membership",
    "pullback_omega",
    "reaction_form",
]
