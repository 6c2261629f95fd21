"""Centered random forests built on data-independent dyadic trees."""

from clusterens.cforest._backend import BACKEND
from clusterens.cforest.cdf import MarginalCDF, OutOfSupport
from clusterens.cforest.forest import (
    CenteredForest,
    ensemble_forest_predict,
    forest_predict,
    leaf_means,
    merged_forest_predict,
    tree_predict,
)
from clusterens.cforest.tree import (
    CenteredTree,
    SplitScheme,
    build_tree,
    leaf_box,
    sample_split_coord,
    sample_split_coords,
    tree_depth,
)

__all__ = [
    "BACKEND",
    "MarginalCDF",
    "OutOfSupport",
    "CenteredForest",
    "CenteredTree",
    "SplitScheme",
    "build_tree",
    "leaf_box",
    "leaf_means",
    "sample_split_coord",
    "sample_split_coords",
    "tree_depth",
    "tree_predict",
    "forest_predict",
    "ensemble_forest_predict",
    "merged_forest_predict",
]
