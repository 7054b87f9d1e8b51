"""Symmetries, first integrals and the residual checks that certify them."""

from .cartan import (
    EnergyFunction,
    ExpressionFunction,
    ScalarFunction,
    newfasso_check,
    symmetry_pairing,
    thm_int_check,
    z_f_field,
    z_f_least_squares,
)
from .mechanical import (
    CTensor,
    higher_degree_check,
    induced_connection,
    killing_restricted,
    quadratic_integral_check,
    restricted_tensor_check,
    second_fundamental_form,
)
from .noether import (
    CandidateField,
    noether_terms,
    noether_triple,
    quasi_symmetry_check,
    reaction_annihilator_test,
)
from .report import Channel, ConservationReport

__all__ = [
    "CTensor",
    "CandidateField",
    "Channel",
    "ConservationReport",
    "EnergyFunction",
    "ExpressionFunction",
    "ScalarFunction",
    "higher_degree_check",
    "induced_connection",
    "killing_restricted",
    "newfasso_check",
    "noether_terms",
    "noether_triple",
    "quadratic_integral_check",
    "quasi_symmetry_check",
    "reaction_annihilator_test",
    "restricted_tensor_check",
    "second_fundamental_form",
    "symmetry_pairing",
    "thm_int_check",
    "z_f_field",
    "z_f_least_squares",
]
