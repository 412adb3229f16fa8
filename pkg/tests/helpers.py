"""Small datasets shared by the tests."""
from __future__ import annotations

import numpy as np
from scipy.special import ndtri

from dpgc.dataset import AttributeSchema, TabularDataset, dummy_encode

TOY_SCHEMA = AttributeSchema.from_dict({"attributes": [
    {"name": "colour", "kind": "categorical", "vocabulary": ["red", "green", "blue"]},
    {"name": "size", "kind": "categorical", "vocabulary": ["small", "large"]},
    {"name": "grade", "kind": "ordinal", "vocabulary": ["a", "b", "c", "d"]},
]})
TOY_LATENT = np.array([[1.0, 0.6, -0.4], [0.6, 1.0, 0.3], [-0.4, 0.3, 1.0]])
TOY_CUTS = ([0.3, 0.7], [0.55], [0.1, 0.4, 0.8])


def planted_toy(n: int = 100_000, seed: int = 0):
    """Three attributes cut from a correlated latent normal; returns (tabular, binary)."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, 3)) @ np.linalg.cholesky(TOY_LATENT).T
    cols = {}
    for k, spec in enumerate(TOY_SCHEMA.attributes):
        codes = np.searchsorted(ndtri(np.array(TOY_CUTS[k])), z[:, k])
        cols[spec.name] = np.array(spec.vocabulary, dtype=object)[codes]
    tab = TabularDataset(TOY_SCHEMA, cols, binned=True)
    return tab, dummy_encode(tab)


def random_tabular(rng, m: int, max_levels: int, n: int):
    """Random categorical table with m attributes of 1..max_levels levels."""
    attrs = []
    cols = {}
    for g in range(m):
        k = int(rng.integers(1, max_levels + 1))
        vocab = [f"v{j}" for j in range(k)]
        attrs.append({"name": f"a{g}", "kind": "categorical", "vocabulary": vocab})
        cols[f"a{g}"] = np.array(vocab, dtype=object)[rng.integers(0, k, n)]
    schema = AttributeSchema.from_dict({"attributes": attrs})
    tab = TabularDataset(schema, cols, binned=True)
    return tab, dummy_encode(tab)


def naive_pair_counts(x: np.ndarray, i: int, j: int) -> tuple[int, int, int, int]:
    """Row-by-row scan for the 2x2 table of columns i and j."""
    c = [0, 0, 0, 0]
    for row in x:
        a, b = int(row[i]), int(row[j])
        c[(1 - a) * 2 + (1 - b)] += 1
    return tuple(c)


def direct_pearson(x, y) -> float:
    return float(np.corrcoef(np.asarray(x, float), np.asarray(y, float))[0, 1])

