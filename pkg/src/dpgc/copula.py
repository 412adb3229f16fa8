"""Gaussian copula over binary columns: correlation mapping, repair and sampling.

Nothing in this module sees the input data.  It consumes
:class:`~dpgc.privacy.NoisyStatistics` and produces synthetic records, so its
output inherits the privacy guarantee of those statistics.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .dataset import AttributeSchema, AttributeSpec, BinaryDataset, GroupMap, TabularDataset
from .privacy import VARIANCE_FLOOR, ConvergenceError, NoiseSource, NoisyMarginal, NoisyStatistics

RHO_BOUND = 1 - 1e-6
BISECT_TOL = 1e-6
BISECT_MAX_ITER = 100
QUAD_STEP = 0.01
QUAD_LIMIT = 10.0
QUAD_MIN_RIDGE = 10  # grid steps across the density ridge before the grid is trusted
NCM_ITERS = 100
NCM_TOL = 1e-7
NCM_GAP = 1e-9
EIGEN_FLOOR = 1e-8
SAMPLE_BLOCK_ROWS = 4096

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(40)


@dataclass(frozen=True)
class QuasiInverse:
    """Generalised inverse of a binary CDF with mass ``a`` at 0."""

    a: float

    def __post_init__(self):
        if not 0.0 <= self.a <= 1.0:
            raise ValueError(f"mass at zero must lie in [0, 1], got {self.a}")

    def __call__(self, t):
        return np.where(np.asarray(t) <= self.a, 0, 1)

    @property
    def threshold(self) -> float:
        """Latent cut-off: F^-1(Phi(y)) = 1 exactly when y > threshold."""
        return float(ndtri(self.a))


def binormal_pdf(y1, y2, rho):
    """Standard bivariate normal density with correlation ``rho``."""
    rho = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho) >= 1):
        raise ValueError("|rho| must be < 1")
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    s = 1.0 - rho * rho
    return np.exp(-(y1 * y1 + y2 * y2 - 2 * rho * y1 * y2) / (2 * s)) / (2 * np.pi * np.sqrt(s))


def _cell_weights(threshold: float, centres: np.ndarray, step: float) -> np.ndarray:
    """Fraction of each grid cell lying above the threshold, times the cell width."""
    return np.clip((centres + step / 2 - threshold) / step, 0.0, 1.0) * step


def expected_product_quadrature(rho: float, qi: QuasiInverse, qj: QuasiInverse,
                                step: float = QUAD_STEP, limit: float = QUAD_LIMIT) -> float:
    """E{F_i^-1(Phi(Y_i)) F_j^-1(Phi(Y_j))} by a 2-D grid sum over [-limit, limit]^2.

    The density is sampled at cell midpoints.  The integrand is a step
    function, so each cell is weighted by the share of it above the step;
    this keeps the result accurate to O(step^2) wherever the step falls.
    """
    if abs(rho) >= 1:
        raise ValueError("|rho| must be < 1")
    k = int(round(2 * limit / step))
    centres = -limit + (np.arange(k) + 0.5) * step
    wi = _cell_weights(qi.threshold, centres, step)
    wj = _cell_weights(qj.threshold, centres, step)
    ri = np.nonzero(wi)[0]
    rj = np.nonzero(wj)[0]
    if ri.size == 0 or rj.size == 0:
        return 0.0
    dens = binormal_pdf(centres[ri, None], centres[None, rj], rho)
    return float(wi[ri] @ dens @ wj[rj])


def orthant_probability(h1, h2, rho):
    """P(Y1 > h1, Y2 > h2) for a standard binormal pair, vectorised.

    Integrates d/d(rho) of the orthant probability (the binormal density at
    (h1, h2)) from 0 to rho after the substitution rho = sin(theta), which
    keeps the integrand bounded up to |rho| -> 1.
    """
    h1, h2, rho = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (h1, h2, rho)))
    out = np.array(ndtr(-h1) * ndtr(-h2), dtype=float)
    finite = np.isfinite(h1) & np.isfinite(h2)
    if not finite.any():
        return out
    a, b, r = h1[finite], h2[finite], rho[finite]
    theta = np.arcsin(r)
    hs = (a * a + b * b) / 2
    hk = a * b
    total = np.zeros(a.shape)
    panels = np.linspace(0.0, 1.0, 5)
    for lo, hi in zip(panels[:-1], panels[1:]):
        t = lo + (hi - lo) * (_GL_NODES + 1) / 2
        sn = np.sin(theta[..., None] * t)
        f = np.exp((sn * hk[..., None] - hs[..., None]) / (1 - sn * sn))
        total += (f * _GL_WEIGHTS).sum(axis=-1) * (hi - lo) / 2
    out[finite] += total * theta / (2 * np.pi)
    return out


def expected_product(rho: float, qi: QuasiInverse, qj: QuasiInverse, method: str = "quadrature") -> float:
    """E{X_i X_j} of the transformed pair when the latent correlation is ``rho``.

    ``method="quadrature"`` is the grid integral; ``"orthant"`` uses the exact
    identity E{X_i X_j} = P(Y_i > t_i, Y_j > t_j), valid for binary margins.
    Near |rho| = 1 the density ridge, of width sqrt(1 - rho^2), is narrower
    than the grid can resolve, so the quadrature path defers to the orthant
    integral there.
    """
    if abs(rho) >= 1:
        raise ValueError("|rho| must be < 1")
    if method == "quadrature":
        if math.sqrt(1 - rho * rho) >= QUAD_MIN_RIDGE * QUAD_STEP:
            return expected_product_quadrature(rho, qi, qj)
        method = "orthant"
    if method == "orthant":
        return float(orthant_probability(qi.threshold, qj.threshold, rho))
    raise ValueError(f"unknown method {method!r}")


def _target_expectation(r, mu_i, mu_j):
    return r * np.sqrt(mu_i * (1 - mu_i) * mu_j * (1 - mu_j)) + mu_i * mu_j


def rho_from_r(r: float, qi: QuasiInverse, qj: QuasiInverse,
               mi: NoisyMarginal | None = None, mj: NoisyMarginal | None = None,
               method: str = "quadrature") -> float:
    """Latent Gaussian correlation whose transformed pair has Pearson correlation ``r``.

    Bisection on rho; E{X_i X_j} increases monotonically in rho, and the
    target is clamped to the range reachable inside |rho| <= 1 - 1e-6.
    """
    mu_i = mi.mu if mi is not None else 1 - qi.a
    mu_j = mj.mu if mj is not None else 1 - qj.a
    if min(mu_i * (1 - mu_i), mu_j * (1 - mu_j)) < VARIANCE_FLOOR:
        return 0.0
    target = float(_target_expectation(r, mu_i, mu_j))

    def f(rho):
        return expected_product(rho, qi, qj, method)

    lo, hi = -RHO_BOUND, RHO_BOUND
    target = min(max(target, f(lo)), f(hi))
    mid = 0.0
    for _ in range(BISECT_MAX_ITER):
        mid = 0.5 * (lo + hi)
        e = f(mid)
        if abs(e - target) < BISECT_TOL:
            break
        if e < target:
            lo = mid
        else:
            hi = mid
    return mid


def _rho_from_r_vectorized(r, a_i, a_j):
    """Orthant-path bisection over many pairs at once.

    Each pair freezes as soon as its residual drops below tolerance, so a pair's
    result does not depend on which other pairs share the batch.
    """
    mu_i, mu_j = 1 - a_i, 1 - a_j
    h_i, h_j = ndtri(a_i), ndtri(a_j)
    live = (mu_i * a_i >= VARIANCE_FLOOR) & (mu_j * a_j >= VARIANCE_FLOOR)
    target = _target_expectation(r, mu_i, mu_j)
    lo = np.full(r.shape, -RHO_BOUND)
    hi = np.full(r.shape, RHO_BOUND)
    target = np.clip(target, orthant_probability(h_i, h_j, lo), orthant_probability(h_i, h_j, hi))
    rho = np.zeros(r.shape)
    active = live.copy()
    for _ in range(BISECT_MAX_ITER):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        mid = 0.5 * (lo[idx] + hi[idx])
        rho[idx] = mid
        e = orthant_probability(h_i[idx], h_j[idx], mid)
        done = np.abs(e - target[idx]) < BISECT_TOL
        below = e < target[idx]
        lo[idx] = np.where(~done & below, mid, lo[idx])
        hi[idx] = np.where(~done & ~below, mid, hi[idx])
        active[idx[done]] = False
    rho[~live] = 0.0
    return rho


def gaussian_correlations(stats: NoisyStatistics, method: str = "orthant",
                          workers: int = 1, chunk: int = 2048) -> np.ndarray:
    """Latent correlation matrix P for every column pair of ``stats``."""
    d = stats.correlation.shape[0]
    f0 = stats.f0
    iu, ju = np.triu_indices(d, 1)
    r = stats.correlation[iu, ju]
    if method == "orthant":
        blocks = [slice(s, s + chunk) for s in range(0, len(r), chunk)]

        def run(sl):
            return _rho_from_r_vectorized(r[sl], f0[iu[sl]], f0[ju[sl]])

        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            parts = list(pool.map(run, blocks))
        rho = np.concatenate(parts) if parts else np.zeros(0)
    elif method == "quadrature":
        rho = np.array([
            rho_from_r(rv, QuasiInverse(f0[i]), QuasiInverse(f0[j]),
                       stats.marginal(i), stats.marginal(j), method="quadrature")
            for rv, i, j in zip(r, iu, ju)
        ])
    else:
        raise ValueError(f"unknown method {method!r}")
    P = np.eye(d)
    P[iu, ju] = rho
    P[ju, iu] = rho
    return P


def nearest_correlation_matrix(P: np.ndarray, iters: int = NCM_ITERS, tol: float = NCM_TOL,
                               gap: float = NCM_GAP) -> np.ndarray:
    """Alternating projections with Dykstra's correction onto PSD and unit-diagonal sets.

    Stops after ``iters`` rounds, or once no entry moves by ``tol`` or more
    and the PSD projection's diagonal is within ``gap`` of one.  The second
    test matters: iterates can creep by less than ``tol`` per round while
    still being visibly indefinite, and the diagonal gap bounds how negative
    the returned matrix's eigenvalues can be.
    """
    Y = np.array(P, dtype=float)
    if not np.isfinite(Y).all():
        raise np.linalg.LinAlgError("matrix has non-finite entries")
    Y = (Y + Y.T) / 2
    np.fill_diagonal(Y, 1.0)
    dS = np.zeros_like(Y)
    for _ in range(iters):
        R = Y - dS
        w, V = np.linalg.eigh(R)
        X = (V * np.maximum(w, 0.0)) @ V.T
        X = (X + X.T) / 2
        dS = X - R
        Y_next = X.copy()
        np.fill_diagonal(Y_next, 1.0)
        change = np.max(np.abs(Y_next - Y))
        Y = Y_next
        if change < tol and np.max(np.abs(np.diag(X) - 1.0)) <= gap:
            break
    return Y


def ensure_positive_definite(P: np.ndarray, floor: float = EIGEN_FLOOR) -> np.ndarray:
    """Lift eigenvalues below ``floor`` and rescale back to a unit diagonal."""
    P = (np.asarray(P, dtype=float) + np.asarray(P, dtype=float).T) / 2
    w, V = np.linalg.eigh(P)
    if w.min() > floor:
        return P
    for _ in range(8):
        Q = (V * np.maximum(w, floor)) @ V.T
        s = 1.0 / np.sqrt(np.diag(Q))
        Q = Q * s[:, None] * s[None, :]
        Q = (Q + Q.T) / 2
        np.fill_diagonal(Q, 1.0)
        try:
            np.linalg.cholesky(Q)
            return Q
        except np.linalg.LinAlgError:
            floor *= 10
    raise ConvergenceError("could not make the correlation matrix positive definite")


def lower_factor(P: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L.T @ L == P.

    This is the factor orientation for which Y = Z @ L has covariance P when
    the rows of Z are independent standard normals.  It is the ordinary
    Cholesky factor of P with rows and columns reversed.
    """
    C = np.linalg.cholesky(P[::-1, ::-1])
    return np.ascontiguousarray(C.T[::-1, ::-1])


@dataclass(frozen=True, eq=False)
class CopulaModel:
    """Everything needed to sample: repaired correlation, its factor and the margins.

    ``raw`` and ``nearest`` keep the intermediate matrices for audit dumps.
    """

    correlation: np.ndarray
    factor: np.ndarray
    f0: np.ndarray
    groups: GroupMap
    n: int
    raw: np.ndarray | None = None
    nearest: np.ndarray | None = None

    @property
    def d(self) -> int:
        return len(self.f0)

    @property
    def marginals(self) -> list[QuasiInverse]:
        return [QuasiInverse(float(a)) for a in self.f0]

    @classmethod
    def from_correlation(cls, P: np.ndarray, f0: np.ndarray, groups: GroupMap, n: int,
                         floor: float = EIGEN_FLOOR, **extra) -> "CopulaModel":
        P = ensure_positive_definite(P, floor)
        return cls(P, lower_factor(P), np.asarray(f0, dtype=float), groups, n, **extra)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "columns": self.groups.column_names,
            "mass_at_zero": self.f0.tolist(),
            "correlation": self.correlation.tolist(),
            "factor": self.factor.tolist(),
        }


def build_copula(stats: NoisyStatistics, method: str = "orthant", ncm_iters: int = NCM_ITERS,
                 eigen_floor: float = EIGEN_FLOOR, workers: int = 1) -> CopulaModel:
    """Noisy statistics -> latent correlations -> nearest correlation matrix -> PD repair."""
    raw = gaussian_correlations(stats, method=method, workers=workers)
    nearest = nearest_correlation_matrix(raw, iters=ncm_iters)
    return CopulaModel.from_correlation(nearest, stats.f0, stats.groups, stats.n,
                                        floor=eigen_floor, raw=raw, nearest=nearest)


def sample_latent(model: CopulaModel, n: int, noise: NoiseSource, workers: int = 1,
                  block_rows: int = SAMPLE_BLOCK_ROWS) -> np.ndarray:
    """n x d latent Gaussian rows Y = Z L.

    Rows are generated in fixed-size blocks, each from its own substream, so
    the result is the same for any number of workers.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    L = model.factor
    starts = range(0, n, block_rows)

    def run(start):
        rows = min(block_rows, n - start)
        rng = noise.sampling_stream(f"sample:block:{start // block_rows}")
        return rng.standard_normal((rows, model.d)) @ L

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return np.vstack(list(pool.map(run, starts)))


def to_binary(latent: np.ndarray, f0: np.ndarray) -> np.ndarray:
    """Apply each column's quasi-inverse to Phi(latent)."""
    return (ndtr(latent) > f0[None, :]).astype(np.uint8)


def sample_synthetic(model: CopulaModel, n: int, noise: NoiseSource, workers: int = 1,
                     return_latent: bool = False):
    """Synthetic binary dataset of n rows; optionally also the latent matrix.

    Groups may come out with zero or several active levels; see
    :func:`decode_rows` for turning them back into a table.
    """
    latent = sample_latent(model, n, noise, workers)
    bds = BinaryDataset(to_binary(latent, model.f0), model.groups)
    return (bds, latent) if return_latent else bds


@dataclass(frozen=True, eq=False)
class DecodeResult:
    dataset: TabularDataset
    inconsistent_cells: int
    inconsistent_rows: int


def decode_rows(bds: BinaryDataset, latent: np.ndarray | None, mode: str,
                schema: AttributeSchema | None = None) -> DecodeResult:
    """Map binary rows back to attribute values.

    ``strict`` leaves groups without exactly one active level as ``None``.
    ``repair`` resolves them to the level with the largest latent value; ties
    go to the lowest column.
    """
    if mode not in ("strict", "repair"):
        raise ValueError(f"mode must be 'strict' or 'repair', got {mode!r}")
    if mode == "repair" and latent is None:
        raise ValueError("repair mode needs the latent matrix")
    groups = bds.groups
    if schema is None:
        schema = AttributeSchema(tuple(
            AttributeSpec(a, "categorical", v) for a, v in zip(groups.attributes, groups.levels)))
    bad_rows = np.zeros(bds.n, dtype=bool)
    bad_cells = 0
    columns = {}
    for g, name in enumerate(groups.attributes):
        rng_ = groups.group_range(g)
        block = bds.columns[:, rng_.start:rng_.stop]
        active = block.sum(axis=1)
        ok = active == 1
        bad_rows |= ~ok
        bad_cells += int((~ok).sum())
        labels = np.array(groups.levels[g], dtype=object)
        out = np.empty(bds.n, dtype=object)
        out[ok] = labels[block[ok].argmax(axis=1)]
        if mode == "repair" and (~ok).any():
            out[~ok] = labels[np.argmax(latent[~ok, rng_.start:rng_.stop], axis=1)]
        columns[name] = out
    ds = TabularDataset(schema, columns, binned=True)
    return DecodeResult(ds, bad_cells, int(bad_rows.sum()))
