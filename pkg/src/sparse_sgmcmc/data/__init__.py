from .darcy import DarcyField, darcy_solve, face_kappa, mass_balance_residual, rel_errors
from .kle import KLEBasis, kle_build, sample_permeability
from .regression import RegressionDataset, correlation_matrix, gen_regression

__all__ = [
    "DarcyField",
    "KLEBasis",
    "RegressionDataset",
    "correlation_matrix",
    "darcy_solve",
    "face_kappa",
    "gen_regression",
    "kle_build",
    "mass_balance_residual",
    "rel_errors",
    "sample_permeability",
]
