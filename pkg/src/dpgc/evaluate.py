"""Query workloads, error metrics and the comparison baselines.

Queries are positive conjunctions over binary columns.  Q1 holds every
single-column count for both bit values, Q2 every pair of columns from
different attributes, Q3 every such triple.  Pairs or triples that touch
two levels of one attribute are structural zeroes and are left out.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .copula import CopulaModel, build_copula, sample_synthetic
from .dataset import BinaryDataset, GroupMap
from .privacy import (
    DEFAULT_DELTA,
    NoiseSource,
    NoisyStatistics,
    PrivacyPlan,
    build_R,
    exact_statistics,
    laplace_noise,
    solve_per_mechanism_epsilon,
)

BETAS = (0.05, 0.01, 0.0)
VARIANTS = ("dpc", "cop", "cop-ID", "cop-1", "no-cor", "Lap")
SYNTHETIC_VARIANTS = ("dpc", "cop", "cop-ID", "cop-1")


@dataclass(frozen=True)
class QuerySpec:
    """A positive conjunction; order-1 queries may also ask for bit 0."""

    order: int
    columns: tuple[int, ...]
    bit: int = 1

    def __post_init__(self):
        if self.order not in (1, 2, 3):
            raise ValueError(f"unsupported query order {self.order}")
        if len(self.columns) != self.order:
            raise ValueError("number of columns must equal the order")
        if self.bit not in (0, 1) or (self.order > 1 and self.bit != 1):
            raise ValueError("only order-1 queries may target bit 0")


def query_table(gm: GroupMap, order: int) -> tuple[np.ndarray, np.ndarray]:
    """All queries of one order as (columns[N, order], bits[N]), lexicographic."""
    if order == 1:
        cols = np.repeat(np.arange(gm.d), 2)[:, None]
        bits = np.tile(np.array([0, 1]), gm.d)
        return cols, bits
    if order == 2:
        i, j = np.nonzero(np.triu(gm.cross_mask(), 1))
        cols = np.stack([i, j], axis=1)
    elif order == 3:
        g = gm.column_group
        parts = []
        for i in range(gm.d):
            j, k = np.nonzero(np.triu(np.ones((gm.d - i - 1,) * 2, dtype=bool), 1))
            j, k = j + i + 1, k + i + 1
            keep = (g[j] != g[i]) & (g[k] != g[i]) & (g[j] != g[k])
            parts.append(np.stack([np.full(keep.sum(), i), j[keep], k[keep]], axis=1))
        cols = np.concatenate(parts) if parts else np.zeros((0, 3), dtype=np.int64)
    else:
        raise ValueError(f"unsupported query order {order}")
    return cols, np.ones(len(cols), dtype=np.int64)


def enumerate_queries(gm: GroupMap, order: int) -> list[QuerySpec]:
    cols, bits = query_table(gm, order)
    return [QuerySpec(order, tuple(int(c) for c in row), int(b)) for row, b in zip(cols, bits)]


def evaluate_query(bds: BinaryDataset, q: QuerySpec) -> int:
    """Number of rows satisfying the conjunction."""
    if q.order == 1:
        return int((bds.columns[:, q.columns[0]] == q.bit).sum())
    return int(np.all(bds.columns[:, list(q.columns)] == 1, axis=1).sum())


def answer_queries(bds: BinaryDataset, order: int) -> np.ndarray:
    """Answers to every query of one order, aligned with :func:`query_table`."""
    X = bds.columns
    gm = bds.groups
    if order == 1:
        ones = X.sum(axis=0, dtype=np.int64)
        return np.stack([bds.n - ones, ones], axis=1).ravel().astype(float)
    if order == 2:
        Xf = X.astype(np.float64)
        G = Xf.T @ Xf
        cols, _ = query_table(gm, 2)
        return G[cols[:, 0], cols[:, 1]]
    if order == 3:
        g = gm.column_group
        out = []
        for i in range(gm.d):
            rest = np.arange(i + 1, gm.d)
            sub = X[X[:, i] == 1][:, rest].astype(np.float32)
            # float32 sums of 0/1 are exact below 2**24 rows
            T = (sub.T @ sub).astype(np.float64)
            j, k = np.nonzero(np.triu(np.ones((len(rest),) * 2, dtype=bool), 1))
            keep = (g[rest[j]] != g[i]) & (g[rest[k]] != g[i]) & (g[rest[j]] != g[rest[k]])
            out.append(T[j[keep], k[keep]])
        return np.concatenate(out) if out else np.zeros(0)
    raise ValueError(f"unsupported query order {order}")


def independent_answers(mu: np.ndarray, n: int, gm: GroupMap, order: int) -> np.ndarray:
    """Answers implied by independent columns with means ``mu``."""
    cols, bits = query_table(gm, order)
    if order == 1:
        m = mu[cols[:, 0]]
        return n * np.where(bits == 1, m, 1 - m)
    return n * np.prod(mu[cols], axis=1)


def alpha_beta_summary(errors, beta: float) -> tuple[float, float]:
    """(mean, max) of the smallest ceil((1 - beta) N) errors."""
    e = np.sort(np.asarray(errors, dtype=float))
    if e.size == 0:
        raise ValueError("no errors to summarise")
    if not 0 <= beta < 1:
        raise ValueError("beta must lie in [0, 1)")
    # rounding first keeps e.g. 0.95 * 100 from ceiling to 96
    k = max(1, math.ceil(round((1 - beta) * e.size, 9)))
    head = e[:k]
    return float(head.mean()), float(head.max())


@dataclass(frozen=True, eq=False)
class ErrorReport:
    """Absolute errors of one variant on one query class."""

    variant: str
    query_class: str
    errors: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "errors", np.sort(np.asarray(self.errors, dtype=float)))

    @classmethod
    def from_answers(cls, variant: str, query_class: str, true, estimate) -> "ErrorReport":
        return cls(variant, query_class, np.abs(np.asarray(estimate, float) - np.asarray(true, float)))

    @property
    def size(self) -> int:
        return int(self.errors.size)

    def summary(self, beta: float) -> tuple[float, float]:
        return alpha_beta_summary(self.errors, beta)

    @property
    def summaries(self) -> dict[float, tuple[float, float]]:
        if self.size == 0:
            return {}
        return {b: self.summary(b) for b in BETAS}

    def cdf(self) -> np.ndarray:
        """Error quantiles at 0%, 1%, ..., 100%."""
        if self.size == 0:
            return np.zeros(0)
        return np.quantile(self.errors, np.linspace(0, 1, 101))

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "query_class": self.query_class,
            "queries": self.size,
            "alpha_beta": [
                {"coverage": f"{round(100 * (1 - b))}%", "avg": avg, "max": mx}
                for b, (avg, mx) in self.summaries.items()
            ],
            "cdf_1pct": self.cdf().tolist(),
        }


def exact_pearson(bds: BinaryDataset) -> np.ndarray:
    """Pearson (phi) matrix of the binary columns; constant columns give 0."""
    X = bds.columns.astype(np.float64)
    mu = X.mean(axis=0)
    cov = X.T @ X / bds.n - np.outer(mu, mu)
    sd = np.sqrt(np.clip(np.diag(cov), 0, None))
    denom = np.outer(sd, sd)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(denom > 1e-12, cov / denom, 0.0)
    np.fill_diagonal(r, np.where(sd > 1e-12, 1.0, 0.0))
    return np.clip(r, -1, 1)


def correlation_split(errors, r, threshold: float = 0.5, variant: str = "",
                      query_class: str = "Q2") -> tuple[ErrorReport, ErrorReport]:
    """(high, low) reports: queries with |r| >= threshold, and the rest.

    ``r`` holds the exact correlation of each query's column pair, aligned
    with ``errors``.  It comes from the original data, so the split is a
    non-private diagnostic.
    """
    errors = np.asarray(errors, dtype=float)
    high = np.abs(np.asarray(r, dtype=float)) >= threshold
    return (ErrorReport(variant, f"{query_class} |r|>={threshold:g}", errors[high]),
            ErrorReport(variant, f"{query_class} |r|<{threshold:g}", errors[~high]))


def lap_answers(true: np.ndarray, eps_prime: float, rng) -> np.ndarray:
    """Each answer plus independent Lap(1/eps'); counting queries have sensitivity 1."""
    return np.asarray(true, dtype=float) + laplace_noise(1.0 / eps_prime, rng, np.shape(true))


def lap_epsilon(k: int, target_epsilon: float = 1.0, delta: float = DEFAULT_DELTA) -> float:
    """Per-query epsilon so that k Laplace answers compose to ``target_epsilon``."""
    return solve_per_mechanism_epsilon(target_epsilon, k, delta)


@dataclass(eq=False)
class VariantResult:
    """Answers of one variant per query order, plus the synthetic data if any."""

    variant: str
    answers: dict[int, np.ndarray]
    synthetic: BinaryDataset | None = None
    model: CopulaModel | None = None


def _copula_from_matrix(stats: NoisyStatistics, P: np.ndarray) -> CopulaModel:
    return CopulaModel.from_correlation(P, stats.f0, stats.groups, stats.n)


def run_baselines(bds: BinaryDataset, variant: str, orders=(1, 2), *,
                  plan: PrivacyPlan | None = None, noise: NoiseSource | None = None,
                  stats: NoisyStatistics | None = None, lap_eps: dict[int, float] | None = None,
                  workers: int = 1) -> VariantResult:
    """Produce one comparison variant's answers.

    ``dpc`` needs ``plan`` and ``noise``.  ``cop``, ``cop-ID``, ``cop-1`` and
    ``no-cor`` use exact statistics and are not private.  ``Lap`` perturbs the
    true answers; ``lap_eps`` gives the per-query epsilon for each order.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}")
    noise = noise or NoiseSource(0)
    if variant == "Lap":
        if not lap_eps:
            raise ValueError("Lap needs a per-query epsilon for each order")
        answers = {o: lap_answers(answer_queries(bds, o), lap_eps[o], noise.stream(f"lap:Q{o}"))
                   for o in orders}
        return VariantResult(variant, answers)
    if variant == "dpc":
        if plan is None:
            raise ValueError("dpc needs a privacy plan")
        stats = build_R(bds, plan, noise, workers=workers)
    elif stats is None:
        stats = exact_statistics(bds)
    if variant == "no-cor":
        mu = bds.columns.mean(axis=0)
        return VariantResult(variant, {o: independent_answers(mu, bds.n, bds.groups, o) for o in orders})
    d = stats.groups.d
    if variant in ("dpc", "cop"):
        model = build_copula(stats, workers=workers)
    elif variant == "cop-ID":
        model = _copula_from_matrix(stats, np.eye(d))
    else:
        model = _copula_from_matrix(stats, np.ones((d, d)))
    syn = sample_synthetic(model, bds.n, noise, workers=workers)
    return VariantResult(variant, {o: answer_queries(syn, o) for o in orders}, syn, model)


def artificial_order_demo(n: int, lam: float) -> tuple[float, float]:
    """(predicted, measured) drop in Pearson r when the first lam*n ranks are reversed.

    The predicted value is 12/(n(n+1)(n-1)) * k(k+1)(k-1)/6 with k = lam*n;
    the measured value compares x = 1..n against itself and against the order
    with its first k entries reversed.
    """
    k = lam * n
    if n < 2 or abs(k - round(k)) > 1e-9 or round(k) < 1 or lam > 1:
        raise ValueError("lam * n must be an integer between 1 and n")
    k = int(round(k))
    # 12/(n(n+1)(n-1)) * k(k+1)(k-1)/6, kept in integers until the final division
    predicted = 2 * k * (k + 1) * (k - 1) / (n * (n + 1) * (n - 1))
    x = np.arange(1, n + 1, dtype=float)
    y = np.concatenate([x[:k][::-1], x[k:]])
    measured = 1.0 - float(np.corrcoef(x, y)[0, 1])
    return predicted, measured
