"""Differentially private synthetic data through a Gaussian copula.

The pipeline: dummy-encode a table, release noisy one-way and two-way counts
under a composed (epsilon, delta) budget, turn them into a latent Gaussian
correlation matrix, and sample synthetic binary rows from it.
"""
from __future__ import annotations

from .copula import CopulaModel, QuasiInverse, build_copula, decode_rows, sample_synthetic
from .dataset import (
    AttributeSchema,
    BinaryDataset,
    DataError,
    GroupMap,
    SchemaError,
    TabularDataset,
    apply_binning,
    dummy_encode,
    load_csv,
)
from .evaluate import ErrorReport, alpha_beta_summary, answer_queries, enumerate_queries, run_baselines
from .pipeline import SynthesisResult, release_statistics, synthesize, synthesize_from_statistics
from .privacy import (
    DEFAULT_DELTA,
    NoiseSource,
    NoisyStatistics,
    PrivacyPlan,
    build_R,
    compose_epsilon,
    solve_per_mechanism_epsilon,
)

__version__ = "0.1.0"

__all__ = [
    "AttributeSchema", "BinaryDataset", "CopulaModel", "DEFAULT_DELTA", "DataError", "ErrorReport",
    "GroupMap", "NoiseSource", "NoisyStatistics", "PrivacyPlan", "QuasiInverse", "SchemaError",
    "SynthesisResult", "TabularDataset", "alpha_beta_summary", "answer_queries", "apply_binning",
    "build_R", "build_copula", "compose_epsilon", "decode_rows", "dummy_encode", "enumerate_queries",
    "load_csv", "release_statistics", "run_baselines", "sample_synthetic",
    "solve_per_mechanism_epsilon", "synthesize", "synthesize_from_statistics",
]


def bundled_path(name: str):
    """Path of a file shipped in the package's data directory (e.g. ``adult.csv``)."""
    from importlib.resources import files

    return files(__name__).joinpath("data", name)
