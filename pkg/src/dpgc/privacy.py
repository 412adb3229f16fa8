"""Laplace noise, budget planning and the noisy statistics behind the copula.

Only this module touches exact counts of the input.  Its output,
:class:`NoisyStatistics`, is everything later stages are allowed to see.
"""
from __future__ import annotations

import hashlib
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import BinaryDataset, GroupMap, PairwiseCounts, PairwiseTable, pairwise_counts

DEFAULT_DELTA = 2.0 ** -30
VARIANCE_FLOOR = 1e-12


class BudgetExhausted(RuntimeError):
    """More mechanisms were charged than the plan was solved for."""


class ConvergenceError(ArithmeticError):
    pass


class UnsafeZeroNoise:
    """Noise source that adds nothing.  Output is NOT differentially private.

    Exists so tests and non-private diagnostics can run the pipeline on exact
    statistics.
    """

    def __repr__(self):
        return "UnsafeZeroNoise()"


def substream(seed: int, label: str) -> np.random.Generator:
    """Counter-based generator keyed by (master seed, label).

    Streams depend only on the label, never on the order in which they are
    requested, so parallel execution stays reproducible.
    """
    digest = hashlib.sha256(f"{int(seed)}:{label}".encode()).digest()
    return np.random.Generator(np.random.Philox(key=int.from_bytes(digest[:16], "little")))


class NoiseSource:
    """Hands out per-mechanism random streams derived from one master seed."""

    def __init__(self, seed: int, *, unsafe_zero_noise: bool = False):
        self.seed = int(seed)
        self.unsafe_zero_noise = unsafe_zero_noise

    def stream(self, label: str):
        if self.unsafe_zero_noise:
            return UnsafeZeroNoise()
        return substream(self.seed, label)

    def sampling_stream(self, label: str) -> np.random.Generator:
        """Stream for post-processing randomness; never suppressed."""
        return substream(self.seed, label)


def laplace_noise(scale: float, rng, size=None):
    """Lap(scale) draws by inverse CDF on open-interval uniforms."""
    if isinstance(rng, UnsafeZeroNoise):
        return 0.0 if size is None else np.zeros(size)
    if not scale > 0:
        raise ValueError(f"Laplace scale must be positive, got {scale}")
    # (k + 0.5) / 2**53 lies strictly inside (0, 1), so the log never sees 0
    u = (rng.integers(0, 2 ** 53, size=size, dtype=np.int64) + 0.5) / 2.0 ** 53 - 0.5
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def sample_laplace(scale: float, rng) -> float:
    return float(laplace_noise(scale, rng))


def compose_epsilon(eps_prime: float, k: int, delta: float) -> float:
    """Total epsilon of k adaptively composed eps_prime-DP mechanisms (advanced composition)."""
    if not eps_prime > 0:
        raise ValueError("eps_prime must be positive")
    if k < 1 or int(k) != k:
        raise ValueError("k must be a positive integer")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return math.sqrt(2 * k * math.log(1 / delta)) * eps_prime + k * eps_prime * math.expm1(eps_prime)


def solve_per_mechanism_epsilon(target_eps: float, k: int, delta: float,
                                tol: float = 1e-8, max_iter: int = 200) -> float:
    """Largest per-mechanism epsilon whose composition lands in [target - tol, target]."""
    if not target_eps > 0:
        raise ValueError("target epsilon must be positive")
    lo, hi = 0.0, float(target_eps)
    while compose_epsilon(hi, k, delta) < target_eps:
        lo, hi = hi, 2 * hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        eps = compose_epsilon(mid, k, delta)
        if eps > target_eps:
            hi = mid
        else:
            lo = mid
            if target_eps - eps <= tol:
                return mid
    raise ConvergenceError(f"no per-mechanism epsilon found for target={target_eps}, k={k}")


def mechanism_count(m: int) -> int:
    """One marginal per attribute plus one joint count per attribute pair."""
    return m + m * (m - 1) // 2


@dataclass
class PrivacyPlan:
    target_epsilon: float
    delta: float
    k: int
    per_mechanism_epsilon: float
    ledger: list[tuple[str, float]] = field(default_factory=list)

    def __post_init__(self):
        self._lock = threading.Lock()

    @classmethod
    def solve(cls, target_epsilon: float, k: int, delta: float = DEFAULT_DELTA) -> "PrivacyPlan":
        if not target_epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        eps = solve_per_mechanism_epsilon(target_epsilon, k, delta)
        return cls(target_epsilon, delta, k, eps)

    @property
    def composed_epsilon(self) -> float:
        return compose_epsilon(self.per_mechanism_epsilon, self.k, self.delta)

    def charge(self, label: str) -> float:
        with self._lock:
            if len(self.ledger) >= self.k:
                raise BudgetExhausted(f"plan allows {self.k} mechanisms; {label!r} would exceed it")
            self.ledger.append((label, self.per_mechanism_epsilon))
        return self.per_mechanism_epsilon

    def to_dict(self) -> dict:
        return {
            "target_epsilon": self.target_epsilon,
            "delta": self.delta,
            "k": self.k,
            "per_mechanism_epsilon": self.per_mechanism_epsilon,
            "composed_epsilon": self.composed_epsilon,
            "mechanisms_charged": len(self.ledger),
            "ledger": [{"mechanism": lab, "epsilon": eps} for lab, eps in self.ledger],
        }


@dataclass(frozen=True)
class NoisyMarginal:
    n0: float
    n1: float

    @property
    def degenerate(self) -> bool:
        return self.n0 + self.n1 <= 0

    @property
    def f0(self) -> float:
        """Noisy mass at 0; 0.5 when both noisy counts clamp to zero."""
        return 0.5 if self.degenerate else self.n0 / (self.n0 + self.n1)

    @property
    def mu(self) -> float:
        return 1.0 - self.f0

    @property
    def var(self) -> float:
        return self.mu * (1.0 - self.mu)


@dataclass(frozen=True)
class NoisyPairExpectation:
    e: float
    degenerate: bool = False


def dp_one_way(counts: tuple[int, int], eps_prime: float, rng) -> NoisyMarginal:
    """Noisy (zeros, ones) of one binary column, each with Lap(2/eps') and clamped at 0."""
    n0, n1 = counts
    noise = laplace_noise(2.0 / eps_prime, rng, size=2)
    return NoisyMarginal(max(0.0, n0 + noise[0]), max(0.0, n1 + noise[1]))


def dp_two_way(pc: PairwiseCounts | tuple, eps_pp: float, rng) -> NoisyPairExpectation:
    """Noisy fraction of rows where both columns are 1.

    All four cells get independent Lap(2/eps'') noise.  If every cell clamps to
    zero the estimate is flagged degenerate (value 0); callers substitute the
    independence product.
    """
    cells = np.asarray(pc.as_tuple() if isinstance(pc, PairwiseCounts) else pc, dtype=float)
    noisy = np.maximum(0.0, cells + laplace_noise(2.0 / eps_pp, rng, size=4))
    total = noisy.sum()
    if total <= 0:
        return NoisyPairExpectation(0.0, degenerate=True)
    return NoisyPairExpectation(float(noisy[0] / total))


def pearson_from_stats(mi: NoisyMarginal, mj: NoisyMarginal, e: NoisyPairExpectation | float) -> float:
    ev = e.e if isinstance(e, NoisyPairExpectation) else float(e)
    if isinstance(e, NoisyPairExpectation) and e.degenerate:
        ev = mi.mu * mj.mu
    return float(_pearson(ev, mi.mu, mj.mu))


def _pearson(e, mu_i, mu_j):
    var_i = mu_i * (1 - mu_i)
    var_j = mu_j * (1 - mu_j)
    ok = (var_i >= VARIANCE_FLOOR) & (var_j >= VARIANCE_FLOOR)
    denom = np.sqrt(np.where(ok, var_i * var_j, 1.0))
    return np.where(ok, np.clip((e - mu_i * mu_j) / denom, -1.0, 1.0), 0.0)


@dataclass(frozen=True, eq=False)
class NoisyStatistics:
    """DP one-way marginals, pairwise positive-conjunction rates and the Pearson matrix.

    ``n0``/``n1`` are the clamped noisy counts per binary column,
    ``expectation`` holds the estimated rate of (1, 1) per column pair (zero
    on same-attribute pairs) and ``correlation`` is the d x d Pearson matrix.
    """

    n0: np.ndarray
    n1: np.ndarray
    expectation: np.ndarray
    correlation: np.ndarray
    groups: GroupMap
    n: int
    plan: PrivacyPlan | None = None

    @property
    def f0(self) -> np.ndarray:
        total = self.n0 + self.n1
        safe = np.where(total > 0, total, 1.0)
        return np.where(total > 0, self.n0 / safe, 0.5)

    @property
    def mu(self) -> np.ndarray:
        return 1.0 - self.f0

    @property
    def var(self) -> np.ndarray:
        mu = self.mu
        return mu * (1 - mu)

    def marginal(self, i: int) -> NoisyMarginal:
        return NoisyMarginal(float(self.n0[i]), float(self.n1[i]))


def _noisy_marginals(ones: np.ndarray, n: int, eps: float, rng) -> tuple[np.ndarray, np.ndarray]:
    counts = np.stack([n - ones, ones], axis=1).astype(float)
    noisy = np.maximum(0.0, counts + laplace_noise(2.0 / eps, rng, size=counts.shape))
    return noisy[:, 0], noisy[:, 1]


def _noisy_pair_block(cells: np.ndarray, eps: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """cells has shape (a, b, 4) ordered (11, 10, 01, 00); returns (rate of 11, degenerate mask)."""
    noisy = np.maximum(0.0, cells + laplace_noise(2.0 / eps, rng, size=cells.shape))
    total = noisy.sum(axis=-1)
    degenerate = total <= 0
    rate = np.where(degenerate, 0.0, noisy[..., 0] / np.where(degenerate, 1.0, total))
    return rate, degenerate


def build_R(bds: BinaryDataset, plan: PrivacyPlan, noise: NoiseSource,
            pairs: PairwiseTable | None = None, workers: int = 1) -> NoisyStatistics:
    """Run every marginal and pair mechanism and assemble the DP Pearson matrix.

    One budget charge covers all binary columns of an attribute, and one charge
    covers all column pairs of an attribute pair.  Same-attribute pairs are
    structural zeroes: their rate is fixed at 0 at no privacy cost.
    """
    groups = bds.groups
    m, d, n = groups.m, groups.d, bds.n
    if plan.k < mechanism_count(m):
        raise BudgetExhausted(f"plan solved for k={plan.k}, pipeline needs {mechanism_count(m)}")
    if pairs is None:
        pairs = pairwise_counts(bds)
    starts = groups.starts
    ones = bds.columns.sum(axis=0, dtype=np.int64)

    marginal_jobs = [(g, f"marginal:{groups.attributes[g]}") for g in range(m)]
    pair_jobs = [((g, h), f"pair:{groups.attributes[g]}|{groups.attributes[h]}")
                 for g in range(m) for h in range(g + 1, m)]
    # charges are recorded up front, in a fixed order, before any parallel work
    eps = {label: plan.charge(label) for _, label in marginal_jobs + pair_jobs}

    def run_marginal(job):
        g, label = job
        sl = slice(starts[g], starts[g + 1])
        return sl, _noisy_marginals(ones[sl], n, eps[label], noise.stream(label))

    def run_pair(job):
        (g, h), label = job
        si, sj = slice(starts[g], starts[g + 1]), slice(starts[h], starts[h + 1])
        cells = np.stack([pairs.n11[si, sj], pairs.n10[si, sj],
                          pairs.n01[si, sj], pairs.n00[si, sj]], axis=-1).astype(float)
        return si, sj, _noisy_pair_block(cells, eps[label], noise.stream(label))

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        marginal_results = list(pool.map(run_marginal, marginal_jobs))
        pair_results = list(pool.map(run_pair, pair_jobs))

    n0 = np.empty(d)
    n1 = np.empty(d)
    for sl, (a, b) in marginal_results:
        n0[sl], n1[sl] = a, b
    stats = NoisyStatistics(n0, n1, np.zeros((d, d)), np.eye(d), groups, n, plan)
    mu = stats.mu

    expectation = np.zeros((d, d))
    degenerate = np.zeros((d, d), dtype=bool)
    for si, sj, (rate, deg) in pair_results:
        expectation[si, sj] = rate
        degenerate[si, sj] = deg
    expectation = np.triu(expectation) + np.triu(expectation, 1).T
    degenerate = np.triu(degenerate) | np.triu(degenerate, 1).T
    expectation = np.where(degenerate, np.outer(mu, mu), expectation)

    corr = _pearson(expectation, mu[:, None], mu[None, :])
    np.fill_diagonal(corr, 1.0)
    np.fill_diagonal(expectation, mu)
    return NoisyStatistics(n0, n1, expectation, corr, groups, n, plan)


def exact_statistics(bds: BinaryDataset, pairs: PairwiseTable | None = None) -> NoisyStatistics:
    """Statistics without noise.  Non-private; for baselines and tests."""
    k = mechanism_count(bds.groups.m)
    plan = PrivacyPlan(float("inf"), DEFAULT_DELTA, k, float("inf"))
    return build_R(bds, plan, NoiseSource(0, unsafe_zero_noise=True), pairs)


def sensitivity_demo(n: int) -> tuple[float, float, float]:
    """Phi coefficient on two neighbouring n-row binary tables.

    Table 1 has a single row with X = Y = 1; table 2 additionally sets X = 1 on
    a second row.  The correlation moves by about 1 - 1/sqrt(2) however large
    n is, which is why the correlation itself is never noised directly.
    """
    if n < 3:
        raise ValueError("need n >= 3")
    x1 = np.zeros(n)
    y = np.zeros(n)
    x1[0] = y[0] = 1
    x2 = x1.copy()
    x2[1] = 1
    r1 = _phi(x1, y)
    r2 = _phi(x2, y)
    return r1, r2, r1 - r2


def sensitivity_closed_form(n: int) -> tuple[float, float]:
    """Closed forms of the two correlations in :func:`sensitivity_demo`.

    X equals Y in the first table, so r1 is exactly 1.  (Writing the
    denominator product (1 - 1/n) as its square root gives sqrt(1 - 1/n),
    which does not match a direct computation.)
    """
    if n < 3:
        raise ValueError("need n >= 3")
    r1 = 1.0
    r2 = math.sqrt(1 - 2 / n) / math.sqrt(1 - 1 / n) / math.sqrt(2)
    return r1, r2


def _phi(x: np.ndarray, y: np.ndarray) -> float:
    n = len(x)
    sx, sy, sxy = x.sum(), y.sum(), (x * y).sum()
    num = sxy - sx * sy / n
    den = math.sqrt((x @ x - sx * sx / n) * (y @ y - sy * sy / n))
    return float(num / den)
