"""Spectral graph wavelet shape features and PLS weight prediction for triangle meshes."""

from .encoding import Dictionary, FeatureVector, assemble_features, encode, learn_dictionary, pool, soft_assign
from .errors import (
    ArgumentError,
    ContractError,
    MeshParseError,
    MeshWarning,
    NumericalError,
    SimplificationWarning,
    SpectralWeightError,
    StructuralError,
    VersionError,
)
from .mesh import MeshReport, TriangleMesh, geodesic_diameter, load_obj, save_obj, validate, volume
from .pipeline import DatasetManifest, ModelBundle, PipelineConfig, load_manifest
from .regression import EvalReport, PLSModel, fit_pls, loocv, metrics, predict
from .sgws import SignatureMatrix, WaveletFilterBank, compute_signature, design_filter_bank
from .simplify import simplify
from .spectral import CotanLaplacian, EigenSystem, build_laplacian, eigensystem, solve_eigs

__version__ = "0.1.0"

__all__ = [
    "ArgumentError", "ContractError", "CotanLaplacian", "DatasetManifest", "Dictionary", "EigenSystem",
    "EvalReport", "FeatureVector", "MeshParseError", "MeshReport", "MeshWarning", "ModelBundle",
    "NumericalError", "PLSModel", "PipelineConfig", "SignatureMatrix", "SimplificationWarning",
    "SpectralWeightError", "StructuralError", "TriangleMesh", "VersionError", "WaveletFilterBank",
    "assemble_features", "build_laplacian", "compute_signature", "design_filter_bank", "eigensystem",
    "encode", "fit_pls", "geodesic_diameter", "learn_dictionary", "load_manifest", "load_obj", "loocv",
    "metrics", "pool", "predict", "save_obj", "simplify", "soft_assign", "solve_eigs", "validate", "volume",
]
