"""Inverse-intensity weighting and sensitivity analysis for clinic visits."""
