"""End-to-end synthesis: binary data in, synthetic binary data out."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .copula import CopulaModel, build_copula, sample_synthetic
from .dataset import BinaryDataset
from .privacy import DEFAULT_DELTA, NoiseSource, NoisyStatistics, PrivacyPlan, build_R, mechanism_count


@dataclass(eq=False)
class SynthesisResult:
    synthetic: BinaryDataset
    latent: np.ndarray
    model: CopulaModel
    stats: NoisyStatistics
    plan: PrivacyPlan


def release_statistics(bds: BinaryDataset, epsilon: float, seed: int, delta: float = DEFAULT_DELTA,
                       workers: int = 1, unsafe_zero_noise: bool = False) -> NoisyStatistics:
    """The only step that reads the data.  Spends the whole (epsilon, delta) budget."""
    plan = PrivacyPlan.solve(epsilon, mechanism_count(bds.groups.m), delta)
    noise = NoiseSource(seed, unsafe_zero_noise=unsafe_zero_noise)
    return build_R(bds, plan, noise, workers=workers)


def synthesize_from_statistics(stats: NoisyStatistics, seed: int, n: int | None = None,
                               workers: int = 1) -> SynthesisResult:
    """Post-processing only: copula construction and sampling from released statistics."""
    model = build_copula(stats, workers=workers)
    syn, latent = sample_synthetic(model, n or stats.n, NoiseSource(seed), workers=workers,
                                   return_latent=True)
    return SynthesisResult(syn, latent, model, stats, stats.plan)


def synthesize(bds: BinaryDataset, epsilon: float, seed: int, delta: float = DEFAULT_DELTA,
               workers: int = 1, unsafe_zero_noise: bool = False) -> SynthesisResult:
    """Release DP statistics, then sample a synthetic table of the same size."""
    stats = release_statistics(bds, epsilon, seed, delta, workers, unsafe_zero_noise)
    return synthesize_from_statistics(stats, seed, workers=workers)
