"""Merging versus cluster-wise ensembling for OLS and centered random forests."""

__version__ = "0.1.0"

from clusterens import datagen, linmodels, theory, weighting  # noqa: F401
