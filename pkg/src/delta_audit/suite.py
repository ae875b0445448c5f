"""Quality metrics over delta attributions.

Conventions shared by every metric:

* averages over samples use compensated summation, so results are
  permutation-invariant;
* normalized magnitude profiles s(x) = |dphi(x)| / ||dphi(x)||_1 skip rows
  whose delta is exactly zero;
* entropy and divergence use natural logarithms (JSD is bounded by ln 2);
* metrics that cannot be computed (zero-variance correlation, empty
  cohorts, all-zero deltas) return None rather than NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .explainer import AttributionMatrix, DeltaMatrix, top_k_indices

LN2 = math.log(2.0)
STABILITY_EPS = 1e-12


class SuiteError(ValueError):
    """Metric called on malformed or mismatched inputs."""


@dataclass
class DeltaMetrics:
    """One audit's worth of suite metrics; None marks undefined values."""

    mag_l1: float
    topk10: float | None
    entropy: float | None
    rank_overlap10: float
    rank_overlap10_median: float
    jsd: float
    dce: float
    bac: float | None
    codf_fixes: float | None
    codf_regressions: float | None
    stability: dict[float, float] = field(default_factory=dict)
    baseline_sensitivity: float = 0.0
    group_ratio: float = 0.0


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


def _row_l1(delta: DeltaMatrix) -> np.ndarray:
    return np.abs(delta.values).sum(axis=1)


def delta_magnitude(delta: DeltaMatrix) -> float:
    """Mean L1 norm of the per-sample delta attribution rows."""
    if delta.values.shape[0] == 0:
        raise SuiteError("empty delta matrix")
    return _mean(_row_l1(delta))


def topk_concentration(delta: DeltaMatrix, K: int = 10) -> float | None:
    """Mean fraction of each row's delta mass carried by its K largest
    coordinates; rows with zero mass are skipped, None if all are."""
    if K < 1:
        raise SuiteError(f"K must be >= 1, got {K}")
    fractions = []
    for row in np.abs(delta.values):
        total = row.sum()
        if total == 0.0:
            continue
        s = np.sort(row)[::-1]
        fractions.append(float(s[:K].sum() / total))
    if not fractions:
        return None
    return _mean(fractions)


def delta_entropy(delta: DeltaMatrix) -> float | None:
    """Mean Shannon entropy (nats) of the normalized delta profiles."""
    entropies = []
    for row in np.abs(delta.values):
        total = row.sum()
        if total == 0.0:
            continue
        s = row / total
        nz = s[s > 0]
        entropies.append(-math.fsum(nz * np.log(nz)))
    if not entropies:
        return None
    return _mean(entropies)


def rank_overlap_rows(attr_a: AttributionMatrix, attr_b: AttributionMatrix, K: int = 10) -> np.ndarray:
    """Per-sample Jaccard overlap of the two models' top-K feature sets,
    ranked by attribution magnitude (ties to the lower feature index)."""
    if attr_a.values.shape != attr_b.values.shape:
        raise SuiteError("attribution matrices differ in shape")
    n = attr_a.values.shape[0]
    out = np.empty(n)
    for i in range(n):
        top_a = set(top_k_indices(np.abs(attr_a.values[i]), K).tolist())
        top_b = set(top_k_indices(np.abs(attr_b.values[i]), K).tolist())
        out[i] = len(top_a & top_b) / len(top_a | top_b)
    return out


def rank_overlap(attr_a: AttributionMatrix, attr_b: AttributionMatrix, K: int = 10) -> tuple[float, float]:
    """(mean, median) of the per-sample top-K overlaps."""
    rows = rank_overlap_rows(attr_a, attr_b, K)
    return _mean(rows), float(np.median(rows))


def _jsd_row(p: np.ndarray, q: np.ndarray) -> float:
    m = (p + q) / 2.0
    left = p[p > 0] * np.log(p[p > 0] / m[p > 0])
    right = q[q > 0] * np.log(q[q > 0] / m[q > 0])
    return 0.5 * math.fsum(left) + 0.5 * math.fsum(right)


def jsd(attr_a: AttributionMatrix, attr_b: AttributionMatrix) -> float:
    """Mean Jensen-Shannon divergence between the normalized magnitude
    profiles of A and B. A row where exactly one side has zero mass counts
    as maximal redistribution (ln 2); both-zero rows count as 0."""
    if attr_a.values.shape != attr_b.values.shape:
        raise SuiteError("attribution matrices differ in shape")
    values = []
    for ra, rb in zip(np.abs(attr_a.values), np.abs(attr_b.values)):
        na, nb = ra.sum(), rb.sum()
        if na == 0.0 and nb == 0.0:
            values.append(0.0)
        elif na == 0.0 or nb == 0.0:
            values.append(LN2)
        else:
            values.append(_jsd_row(ra / na, rb / nb))
    return _mean(values)


def dce(delta: DeltaMatrix, dfs: np.ndarray) -> float:
    """Mean absolute conservation gap between the summed delta attributions
    and the behavioural delta."""
    dfs = np.asarray(dfs, dtype=np.float64)
    if dfs.shape != (delta.values.shape[0],):
        raise SuiteError("delta matrix and behavioural deltas differ in length")
    rowsums = np.array([math.fsum(row) for row in delta.values])
    return _mean(np.abs(rowsums - dfs))


def _pearson(a: np.ndarray, b: np.ndarray) -> float | None:
    n = a.size
    ma = math.fsum(a) / n
    mb = math.fsum(b) / n
    da = a - ma
    db = b - mb
    va = math.fsum(da * da)
    vb = math.fsum(db * db)
    if va == 0.0 or vb == 0.0:
        return None
    return math.fsum(da * db) / math.sqrt(va * vb)


def bac(delta: DeltaMatrix, dfs: np.ndarray) -> float | None:
    """Pearson correlation of per-sample delta mass with |behavioural
    delta|; None when either series is constant."""
    dfs = np.asarray(dfs, dtype=np.float64)
    if dfs.shape != (delta.values.shape[0],):
        raise SuiteError("delta matrix and behavioural deltas differ in length")
    if dfs.size < 2:
        raise SuiteError("need at least 2 samples for a correlation")
    return _pearson(_row_l1(delta), np.abs(dfs))


def codf(
    delta: DeltaMatrix,
    top_features_b,
    fixes,
    regressions,
) -> tuple[float | None, float | None]:
    """Fraction of normalized delta mass on the updated model's top
    features, averaged separately over fix and regression cohorts.
    Zero-mass rows are skipped; an empty (effective) cohort yields None."""
    top = sorted(set(int(j) for j in top_features_b))
    d = delta.values.shape[1]
    if any(j < 0 or j >= d for j in top):
        raise SuiteError("top feature indices outside [0, d)")

    def cohort_mean(indices) -> float | None:
        shares = []
        for i in indices:
            row = np.abs(delta.values[int(i)])
            total = row.sum()
            if total == 0.0:
                continue
            shares.append(float(row[top].sum() / total))
        if not shares:
            return None
        return _mean(shares)

    return cohort_mean(fixes), cohort_mean(regressions)


def stability_noise(seed: int, sigma_index: int, draw_index: int, shape, sigma: float) -> np.ndarray:
    """The exact Gaussian perturbation used for one (sigma, draw) pair;
    exposed so closed-form checks can replay the same noise."""
    root = np.random.SeedSequence(seed)
    child = np.random.SeedSequence(entropy=root.entropy, spawn_key=(sigma_index, draw_index))
    return np.random.default_rng(child).normal(0.0, sigma, size=shape)


def stability_ratios(
    delta_fn,
    X: np.ndarray,
    sigma: float,
    sigma_index: int,
    draws_per_sample: int,
    seed: int,
) -> np.ndarray:
    """Per (draw, sample) ratios ||dphi(x+e) - dphi(x)||_1 / (||e||_2 + eps)."""
    X = np.asarray(X, dtype=np.float64)
    base = delta_fn(X)
    out = np.empty((draws_per_sample, X.shape[0]))
    for r in range(draws_per_sample):
        noise = stability_noise(seed, sigma_index, r, X.shape, sigma)
        moved = delta_fn(X + noise)
        diff = np.abs(moved - base).sum(axis=1)
        out[r] = diff / (np.linalg.norm(noise, axis=1) + STABILITY_EPS)
    return out


def delta_stability(
    delta_fn,
    X: np.ndarray,
    sigmas=(0.01, 0.05),
    draws_per_sample: int = 1,
    seed: int = 0,
) -> dict[float, float]:
    """Mean perturbation ratio per noise level. ``delta_fn`` must recompute
    the delta attribution matrix with anchors and baseline held fixed."""
    if any(s <= 0 for s in sigmas):
        raise SuiteError("sigmas must be positive")
    if draws_per_sample < 1:
        raise SuiteError("draws_per_sample must be >= 1")
    result = {}
    for si, sigma in enumerate(sigmas):
        ratios = stability_ratios(delta_fn, X, sigma, si, draws_per_sample, seed)
        result[float(sigma)] = _mean(ratios.ravel())
    return result


def baseline_sensitivity(delta_mean: DeltaMatrix, delta_median: DeltaMatrix) -> float:
    """Mean L1 distance between delta attributions under the mean baseline
    and under the median baseline."""
    if delta_mean.values.shape != delta_median.values.shape:
        raise SuiteError("delta matrices differ in shape")
    if (
        delta_mean.anchors is not None
        and delta_median.anchors is not None
        and not np.array_equal(delta_mean.anchors, delta_median.anchors)
    ):
        raise SuiteError("anchor mismatch between baseline runs")
    return _mean(np.abs(delta_mean.values - delta_median.values).sum(axis=1))
