"""Gamma plume-shine dose toolkit.

Point-kernel reference dosimetry over a Gaussian plume, dataset generation
and shape-preserving densification, from-scratch tree-ensemble surrogates,
evaluation/interpretability reports, and an HTTP comparison service.
"""

__version__ = "0.1.0"
