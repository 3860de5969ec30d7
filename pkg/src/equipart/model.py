"""Observation likelihoods and joint scoring of assignments against evidence.

Each request lands on exactly one unordered pair: a same-partition pair with
probability p (uniform among them) or a cross-partition pair with probability
1-p. Pair counts over T requests are therefore Binomial(T, q) per pair with q
depending only on whether the pair is grouped. Binomial coefficients are
dropped everywhere; they are constant per pair given T and cancel in every
comparison, normalization, and importance weight this library computes.

For capacity-respecting assignments the number of same-partition pairs is
fixed by the capacities, so the whole likelihood depends on an assignment
only through x = total count mass on its same-partition pairs. AssignmentScorer
exploits that: tables indexed by x make scoring O(1) after an O(W) delta per
proposed swap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, xlogy

from .core import (
    Assignment,
    ConstraintSet,
    NoiseGrid,
    PairCounts,
    PartitionSpec,
    _labels_of,
    log_prior,
)
from .errors import DomainError

__all__ = [
    "ObservationModel",
    "AssignmentScorer",
    "pair_log_likelihood",
    "joint_log_score",
    "best_score_over_noise",
    "noise_posterior",
]


@dataclass(frozen=True)
class ObservationModel:
    """Per-pair request probabilities as a function of the noise level p."""

    spec: PartitionSpec

    def __post_init__(self):
        caps = self.spec.capacities
        n_same = sum(c * (c - 1) // 2 for c in caps)
        w = self.spec.object_count
        n_diff = w * (w - 1) // 2 - n_same
        if n_same == 0 or n_diff == 0:
            raise DomainError(
                "need at least one same-partition and one cross-partition pair"
            )
        object.__setattr__(self, "_n_same", n_same)
        object.__setattr__(self, "_n_diff", n_diff)

    @property
    def n_same_pairs(self) -> int:
        return self._n_same

    @property
    def n_diff_pairs(self) -> int:
        return self._n_diff

    def q_same(self, p):
        _check_p(p)
        return p / self._n_same

    def q_diff(self, p):
        _check_p(p)
        return (1.0 - p) / self._n_diff


def _check_p(p) -> None:
    arr = np.asarray(p)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError(f"noise level {p!r} outside [0, 1]")


def pair_log_likelihood(om: ObservationModel, n: int, total: int, same: bool, p: float) -> float:
    """Log-probability (coefficient-free) of seeing a pair n times in total requests."""
    if not 0 <= n <= total:
        raise DomainError(f"count {n} outside [0, {total}]")
    q = om.q_same(p) if same else om.q_diff(p)
    return float(xlogy(n, q) + xlogy(total - n, 1.0 - q))


def _same_mass(labels, counts: PairCounts) -> int:
    """Total count mass on pairs the labeling groups together."""
    arr = np.asarray(labels)
    x = 0
    for lab in np.unique(arr):
        idx = np.flatnonzero(arr == lab)
        if len(idx) > 1:
            x += int(counts.counts[np.ix_(idx, idx)].sum())
    return x // 2


def _loglik_of_mass(om: ObservationModel, x, total: int):
    """Coefficient-free log-likelihood as a function of same-pair mass x.

    Broadcasts over x and/or a grid of p values. Derived by summing the
    Binomial terms over all pairs: same pairs carry mass x of the total,
    cross pairs the rest.
    """
    return lambda q_s, q_d: (
        xlogy(x, q_s)
        + xlogy(om.n_same_pairs * total - x, 1.0 - q_s)
        + xlogy(total - x, q_d)
        + xlogy(om.n_diff_pairs * total - (total - x), 1.0 - q_d)
    )


def _mass_loglik(om: ObservationModel, x, total: int, p):
    return _loglik_of_mass(om, x, total)(om.q_same(p), om.q_diff(p))


def _grid_term(grid: NoiseGrid, p: float) -> float:
    """Log prior weight of p under the grid; off-grid p gets the uniform weight."""
    diffs = np.abs(grid.values - p)
    k = int(np.argmin(diffs))
    if diffs[k] < 1e-9:
        return float(grid.log_weights[k])
    return -math.log(len(grid.values))


def joint_log_score(
    spec: PartitionSpec,
    cons: ConstraintSet,
    om: ObservationModel,
    a,
    counts: PairCounts,
    p: float,
    grid: NoiseGrid | None = None,
) -> float:
    """log P(assignment, p, evidence): chain prior + p prior + pair likelihoods."""
    _check_p(float(p))
    grid = grid if grid is not None else NoiseGrid.uniform()
    lp = log_prior(spec, cons, a)
    if lp == -math.inf:
        return -math.inf
    x = _same_mass(_labels_of(a), counts)
    return lp + _grid_term(grid, float(p)) + float(_mass_loglik(om, x, counts.total, float(p)))


def best_score_over_noise(
    spec: PartitionSpec,
    cons: ConstraintSet,
    om: ObservationModel,
    a,
    counts: PairCounts,
    grid: NoiseGrid | None = None,
) -> tuple[float, float]:
    """(p*, score) maximizing the joint over the grid; ties go to smaller p."""
    grid = grid if grid is not None else NoiseGrid.uniform()
    lp = log_prior(spec, cons, a)
    if lp == -math.inf:
        return float(grid.values[0]), -math.inf
    x = _same_mass(_labels_of(a), counts)
    scores = grid.log_weights + _mass_loglik(om, x, counts.total, grid.values)
    k = int(np.argmax(scores))
    return float(grid.values[k]), float(lp + scores[k])


def noise_posterior(
    spec: PartitionSpec,
    cons: ConstraintSet,
    om: ObservationModel,
    a,
    counts: PairCounts,
    grid: NoiseGrid | None = None,
) -> NoiseGrid:
    """Posterior over the noise grid given a feasible assignment and evidence."""
    grid = grid if grid is not None else NoiseGrid.uniform()
    x = _same_mass(_labels_of(a), counts)
    logw = grid.log_weights + _mass_loglik(om, x, counts.total, grid.values)
    return NoiseGrid(grid.resolution, grid.values, logw - logsumexp(logw))


class AssignmentScorer:
    """Shared scoring engine over one body of evidence.

    Precomputes, for every possible same-pair mass x in [0, T]:
      best_ll[x]   max over the grid of (p-prior + likelihood), the MAP score
                   contribution excluding the placement prior;
      best_p[x]    the maximizing p (first of ties, so the smallest);
      marg_ll[x]   log sum over the grid (likelihood marginalized over p),
                   the importance weight used by the sampler.
    """

    def __init__(
        self,
        spec: PartitionSpec,
        cons: ConstraintSet,
        om: ObservationModel,
        counts: PairCounts,
        grid: NoiseGrid | None = None,
    ):
        self.spec = spec
        self.cons = cons
        self.om = om
        self.counts = counts
        self.grid = grid if grid is not None else NoiseGrid.uniform()
        self.total = counts.total

        q_s = om.q_same(self.grid.values)[None, :]
        q_d = om.q_diff(self.grid.values)[None, :]
        xs = np.arange(self.total + 1, dtype=np.float64)[:, None]
        scored = _loglik_of_mass(om, xs, self.total)(q_s, q_d) + self.grid.log_weights[None, :]
        self._best_k = np.argmax(scored, axis=1)
        rows = np.arange(self.total + 1)
        self.best_ll = scored[rows, self._best_k]
        self.best_p = self.grid.values[self._best_k]
        self.marg_ll = logsumexp(scored, axis=1)

        if cons.is_empty:
            const = -math.lgamma(spec.object_count + 1)
            for c in spec.capacities:
                const += math.lgamma(c + 1)
            self._prior_const: float | None = const
        else:
            self._prior_const = None

    @property
    def prior_is_constant(self) -> bool:
        return self._prior_const is not None

    def log_prior(self, labels) -> float:
        if self._prior_const is not None:
            counts = np.bincount(np.asarray(labels), minlength=self.spec.partition_count)
            if not np.array_equal(counts, self.spec.capacities):
                return -math.inf
            return self._prior_const
        return log_prior(self.spec, self.cons, labels)

    def mass(self, labels) -> int:
        return _same_mass(labels, self.counts)

    def swap_mass_delta(self, labels: np.ndarray, x: int, u: int, v: int) -> int:
        """New same-pair mass after swapping the labels of u and v (O(W))."""
        lu, lv = labels[u], labels[v]
        if lu == lv:
            return x
        c = self.counts.counts
        d = c[u] - c[v]
        mask = (labels == lv).astype(np.int64) - (labels == lu).astype(np.int64)
        raw = int(np.dot(d, mask))
        return x + raw - 2 * int(c[u, v])

    def map_score(self, labels, x: int | None = None) -> tuple[float, float, int]:
        """(score, p_hat, x) at the grid point maximizing the joint."""
        lp = self.log_prior(labels)
        if lp == -math.inf:
            return -math.inf, float(self.grid.values[0]), -1
        if x is None:
            x = self.mass(labels)
        return float(lp + self.best_ll[x]), float(self.best_p[x]), x

    def score_of_mass(self, lp: float, x: int) -> float:
        return lp + float(self.best_ll[x])

    def best_grid_index(self, x: int) -> int:
        return int(self._best_k[x])

    def column(self, k: int) -> np.ndarray:
        """Joint contribution at fixed grid index k, as a function of x."""
        q_s = self.om.q_same(float(self.grid.values[k]))
        q_d = self.om.q_diff(float(self.grid.values[k]))
        xs = np.arange(self.total + 1, dtype=np.float64)
        return _loglik_of_mass(self.om, xs, self.total)(q_s, q_d) + float(
            self.grid.log_weights[k]
        )
