"""Pairwise-preference differential evolution of headphone EQ target curves."""

__version__ = "0.1.0"
