"""Canonical-ensemble thermodynamics on finite product spaces and the tail bounds of the entropy method."""

from .space import (
    EnumerationLimitError,
    Marginal,
    ProductSpace,
    SpaceMismatchError,
    TabulatedFunction,
    enumerate_states,
    expectation,
    fiber,
)
from .thermo import (
    ConditionalField,
    ThermalState,
    canonical_entropy,
    conditional_expectation,
    conditional_extrema,
    conditional_thermal,
    derived_statistics,
    free_energy,
    psi,
    thermal_expectation,
    thermal_variance,
)

__version__ = "0.1.0"

__all__ = [
    "ConditionalField", "EnumerationLimitError", "Marginal", "ProductSpace", "SpaceMismatchError",
    "TabulatedFunction", "ThermalState", "canonical_entropy", "conditional_expectation", "conditional_extrema",
    "conditional_thermal", "derived_statistics", "enumerate_states", "expectation", "fiber", "free_energy",
    "psi", "thermal_expectation", "thermal_variance",
]
