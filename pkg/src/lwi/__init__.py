"""Mean-field, cumulant and exact steady states of a microwave-driven
Lambda-system laser, with a two-level reference model."""
from .params import DerivedRates, ModelParams, Observables, ParameterError, derive_rates

__version__ = "0.1.0"

__all__ = ["ModelParams", "DerivedRates", "Observables", "ParameterError", "derive_rates",
           "__version__"]
