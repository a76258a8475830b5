"""Locally adaptive trend estimation for functional data.

Functional trend filtering (ADMM), the functional HP filter and sparse
functional trend filtering, over chains (time series) and graphs.
"""

from ftrend.diffops import DifferenceOperator, Graph, chain_diff, graph_diff, graph_incidence
from ftrend.fda import BasisSystem, FunctionalDataset, Grid, fpca, inner_product, project, reconstruct
from ftrend.fhp import fit_fhp
from ftrend.ftf import AdmmConfig, FitResult, fit_ftf
from ftrend.sftf import SftfConfig, default_weights, fit_sftf

__version__ = "0.1.0"

__all__ = [
    "AdmmConfig",
    "BasisSystem",
    "DifferenceOperator",
    "FitResult",
    "FunctionalDataset",
    "Graph",
    "Grid",
    "SftfConfig",
    "chain_diff",
    "default_weights",
    "fit_fhp",
    "fit_ftf",
    "fit_sftf",
    "fpca",
    "graph_diff",
    "graph_incidence",
    "inner_product",
    "project",
    "reconstruct",
]
