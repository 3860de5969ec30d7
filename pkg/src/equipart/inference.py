"""Solvers: exact MAP by enumeration, sequential importance initialization,
and the noise-tolerant random-walk search.

The walk proposes label swaps between two objects in different partitions.
Swaps keep capacities intact, so the evidence term depends only on the
same-pair count mass x maintained incrementally in O(W) per step; the score
at the best grid noise level is then a table lookup (see AssignmentScorer).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    Assignment,
    ConstraintSet,
    NoiseGrid,
    PairCounts,
    PartitionSpec,
    _compiled,
    _labels_of,
    _step_weights,
    canonical_form,
    iter_class_representatives,
    unconstrained_class_count,
    validate_constraints,
)
from .errors import DomainError, InstanceTooLarge
from .model import AssignmentScorer, ObservationModel

__all__ = [
    "WalkConfig",
    "TraceStep",
    "SolveResult",
    "exact_map",
    "lw_initialize",
    "estimate_placement_posterior",
    "walk",
    "solve_online",
    "write_trace",
]

DEFAULT_CLASS_CAP = 1_000_000


@dataclass(frozen=True)
class WalkConfig:
    """Knobs for the random-walk search.

    epsilon is the probability of keeping an inferior state; steps is the
    walk length; init_samples is the per-object sample count of the
    initializer. reestimate_noise=False freezes the noise level at the
    initial configuration's best grid point instead of re-maximizing it
    every step.
    """

    epsilon: float = 0.1
    steps: int = 1000
    init_samples: int = 100
    seed: object = None
    reestimate_noise: bool = True
    record_trace: bool = False

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise DomainError(f"epsilon {self.epsilon} outside [0, 1]")
        if self.steps < 0:
            raise DomainError("steps must be non-negative")
        if self.init_samples < 1:
            raise DomainError("init_samples must be positive")


@dataclass(frozen=True)
class TraceStep:
    step: int
    score: float
    accepted: bool
    swap_i: int
    swap_j: int


@dataclass(frozen=True)
class SolveResult:
    assignment: Assignment
    p_hat: float
    score: float
    trace: tuple[TraceStep, ...] | None = None
    snapshots: tuple[tuple[int, "SolveResult"], ...] | None = None


# ---------------------------------------------------------------------------
# Exact MAP by enumeration
# ---------------------------------------------------------------------------


def exact_map(
    spec: PartitionSpec,
    cons: ConstraintSet,
    om: ObservationModel,
    counts: PairCounts,
    grid: NoiseGrid | None = None,
    cap: int = DEFAULT_CLASS_CAP,
) -> SolveResult:
    """Best-scoring representative over all relabeling-equivalence classes.

    Ties break toward the lexicographically smallest canonical labeling,
    then toward smaller noise (inherited from the grid maximization).
    """
    validate_constraints(spec, cons)
    if cons.is_empty and unconstrained_class_count(spec) > cap:
        raise InstanceTooLarge(
            f"{unconstrained_class_count(spec)} classes exceed the cap of {cap}"
        )
    scorer = AssignmentScorer(spec, cons, om, counts, grid)
    best: tuple[float, tuple[int, ...], float, tuple[int, ...]] | None = None
    for labels in iter_class_representatives(spec, cons, cap):
        score, p_hat, _ = scorer.map_score(np.asarray(labels))
        canon = canonical_form(labels)
        if best is None or score > best[0] or (score == best[0] and canon < best[3]):
            best = (score, labels, p_hat, canon)
    assert best is not None  # validate_constraints guarantees one class
    score, labels, p_hat, _ = best
    return SolveResult(assignment=Assignment(labels), p_hat=p_hat, score=score)


# ---------------------------------------------------------------------------
# Sequential importance initialization
# ---------------------------------------------------------------------------


class _ChainSampler:
    """Forward completions of a partial labeling, weighted by the evidence.

    Keeps, per partition r, the vector cols[r] = sum of count-matrix rows of
    the objects already placed in r, so the mass gained by placing object m
    into r is cols[r, m], an O(1) read.
    """

    def __init__(self, scorer: AssignmentScorer):
        self.scorer = scorer
        self.spec = scorer.spec
        self.comp = _compiled(scorer.spec, scorer.cons)
        self.counts_m = scorer.counts.counts

    def complete(self, labels, remaining, rem_total, cols, mass, rng):
        """Sample one full completion; returns (final mass, label of the next object)."""
        comp = self.comp
        n, r = self.spec.object_count, self.spec.partition_count
        i0 = len(labels)
        counts_m = self.counts_m
        while True:
            x = mass
            rem = remaining.copy()
            total = rem_total
            c = cols.copy()
            ext = list(labels)
            us = rng.random(n - i0)
            first_label = -1
            stuck = False
            for off in range(n - i0):
                m = i0 + off
                if not comp.constrained[m]:
                    u = us[off] * total
                    lab = r - 1
                    acc = 0
                    for part in range(r):
                        acc += rem[part]
                        if u < acc:
                            lab = part
                            break
                else:
                    weights, wtotal = _step_weights(comp, rem, ext, m)
                    if wtotal <= 0.0:
                        stuck = True
                        break
                    u = us[off] * wtotal
                    lab = r - 1
                    acc = 0.0
                    for part in range(r):
                        acc += weights[part]
                        if u < acc:
                            lab = part
                            break
                x += int(c[lab, m])
                c[lab] += counts_m[m]
                rem[lab] -= 1
                total -= 1
                ext.append(lab)
                if off == 0:
                    first_label = lab
            if not stuck:
                return x, first_label

    def posterior(self, labels, remaining, rem_total, cols, mass, n_samples, rng):
        """Placement distribution of the next object from weighted completions."""
        r = self.spec.partition_count
        labs = np.empty(n_samples, dtype=np.int64)
        logw = np.empty(n_samples, dtype=np.float64)
        for s in range(n_samples):
            x, first = self.complete(labels, remaining, rem_total, cols, mass, rng)
            labs[s] = first
            logw[s] = self.scorer.marg_ll[x]
        pi = np.zeros(r)
        np.add.at(pi, labs, np.exp(logw - logw.max()))
        return pi / pi.sum()


def _lw(scorer: AssignmentScorer, n_samples: int, rng) -> np.ndarray:
    sampler = _ChainSampler(scorer)
    spec = scorer.spec
    n, r = spec.object_count, spec.partition_count
    labels: list[int] = []
    remaining = list(spec.capacities)
    rem_total = n
    cols = np.zeros((r, n), dtype=np.int64)
    mass = 0
    for i in range(n):
        pi = sampler.posterior(labels, remaining, rem_total, cols, mass, n_samples, rng)
        lab = int(rng.choice(r, p=pi))
        labels.append(lab)
        mass += int(cols[lab, i])
        cols[lab] += sampler.counts_m[i]
        remaining[lab] -= 1
        rem_total -= 1
    return np.asarray(labels)


def lw_initialize(
    spec: PartitionSpec,
    cons: ConstraintSet,
    om: ObservationModel,
    counts: PairCounts,
    grid: NoiseGrid | None = None,
    n_samples: int = 100,
    seed=None,
) -> Assignment:
    """Build an assignment object by object, each label drawn from its
    evidence-weighted placement posterior."""
    validate_constraints(spec, cons)
    scorer = AssignmentScorer(spec, cons, om, counts, grid)
    rng = np.random.default_rng(seed)
    return Assignment(tuple(int(x) for x in _lw(scorer, n_samples, rng)))


def estimate_placement_posterior(
    spec: PartitionSpec,
    cons: ConstraintSet,
    om: ObservationModel,
    counts: PairCounts,
    prefix,
    n_samples: int = 100,
    grid: NoiseGrid | None = None,
    seed=None,
) -> np.ndarray:
    """The initializer's placement distribution for the object after ``prefix``."""
    validate_constraints(spec, cons)
    scorer = AssignmentScorer(spec, cons, om, counts, grid)
    sampler = _ChainSampler(scorer)
    prefix = list(_labels_of(prefix))
    if len(prefix) >= spec.object_count:
        raise DomainError("prefix already assigns every object")
    r = spec.partition_count
    remaining = list(spec.capacities)
    cols = np.zeros((r, spec.object_count), dtype=np.int64)
    mass = 0
    for i, lab in enumerate(prefix):
        if not 0 <= lab < r:
            raise DomainError(f"prefix label {lab} outside the partition range")
        remaining[lab] -= 1
        if remaining[lab] < 0:
            raise DomainError("prefix violates capacities")
        mass += int(cols[lab, i])
        cols[lab] += sampler.counts_m[i]
    rng = np.random.default_rng(seed)
    return sampler.posterior(prefix, remaining, sum(remaining), cols, mass, n_samples, rng)


# ---------------------------------------------------------------------------
# Random-walk search
# ---------------------------------------------------------------------------


def _walk(
    scorer: AssignmentScorer,
    init_labels: np.ndarray,
    cfg: WalkConfig,
    rng,
    snapshot_steps=None,
) -> SolveResult:
    spec = scorer.spec
    n = spec.object_count
    labels = np.array(init_labels, dtype=np.int64)

    lp = scorer.log_prior(labels)
    if lp == -math.inf:
        raise DomainError("walk requires a feasible starting assignment")
    x = scorer.mass(labels)

    if cfg.reestimate_noise:
        objective = scorer.best_ll
    else:
        # frozen mode pins the noise level the starting configuration prefers
        objective = scorer.column(scorer.best_grid_index(x))

    current = lp + float(objective[x])
    best_score = current
    best_labels = labels.copy()

    trace: list[TraceStep] = [] if cfg.record_trace else None
    snapshots: list[tuple[int, SolveResult]] = [] if snapshot_steps is not None else None
    snap_set = set(snapshot_steps) if snapshot_steps is not None else ()

    prior_varies = not scorer.prior_is_constant

    for t in range(1, cfg.steps + 1):
        while True:
            u = int(rng.integers(n))
            v = int(rng.integers(n))
            if labels[u] != labels[v]:
                break
        x_new = scorer.swap_mass_delta(labels, x, u, v)
        labels[u], labels[v] = labels[v], labels[u]
        lp_new = scorer.log_prior(labels) if prior_varies else lp
        score_new = (lp_new + float(objective[x_new])) if lp_new != -math.inf else -math.inf

        if score_new > best_score:
            best_score = score_new
            best_labels = labels.copy()

        if score_new == -math.inf:
            accepted = False
        elif score_new >= current:
            accepted = True
        else:
            accepted = rng.random() >= 1.0 - cfg.epsilon

        if accepted:
            x, lp, current = x_new, lp_new, score_new
        else:
            labels[u], labels[v] = labels[v], labels[u]

        if trace is not None:
            trace.append(TraceStep(t, score_new, accepted, min(u, v), max(u, v)))
        if snapshots is not None and t in snap_set:
            s_score, s_p, _ = scorer.map_score(best_labels)
            snapshots.append(
                (t, SolveResult(Assignment(tuple(best_labels)), s_p, s_score))
            )

    score, p_hat, _ = scorer.map_score(best_labels)
    return SolveResult(
        assignment=Assignment(tuple(int(l) for l in best_labels)),
        p_hat=p_hat,
        score=score,
        trace=tuple(trace) if trace is not None else None,
        snapshots=tuple(snapshots) if snapshots is not None else None,
    )


def walk(
    spec: PartitionSpec,
    cons: ConstraintSet,
    om: ObservationModel,
    counts: PairCounts,
    init,
    cfg: WalkConfig,
    grid: NoiseGrid | None = None,
    snapshot_steps=None,
) -> SolveResult:
    """Random-walk MAP search from a feasible starting assignment.

    Each step swaps two objects in different partitions, keeps the swap when
    the score does not drop, keeps an inferior state with probability
    epsilon, and always reverts constraint violations. Returns the best
    configuration seen across all proposals, scored at its best grid noise
    level.
    """
    scorer = AssignmentScorer(spec, cons, om, counts, grid)
    rng = np.random.default_rng(cfg.seed)
    return _walk(scorer, np.asarray(_labels_of(init)), cfg, rng, snapshot_steps)


def solve_online(
    spec: PartitionSpec,
    cons: ConstraintSet,
    om: ObservationModel,
    requests,
    cfg: WalkConfig,
    checkpoints,
    grid: NoiseGrid | None = None,
) -> list[SolveResult]:
    """Fold a request stream and solve (initialize + walk) at each checkpoint."""
    checkpoints = [int(t) for t in checkpoints]
    if sorted(checkpoints) != checkpoints:
        raise DomainError("checkpoints must be sorted ascending")
    if checkpoints and checkpoints[0] < 0:
        raise DomainError("checkpoints must be non-negative")
    validate_constraints(spec, cons)

    requests = list(requests)
    if checkpoints and checkpoints[-1] > len(requests):
        raise DomainError(
            f"checkpoint {checkpoints[-1]} beyond the {len(requests)} available requests"
        )

    seeds = np.random.SeedSequence(cfg.seed).spawn(len(checkpoints))
    results = []
    for t, child in zip(checkpoints, seeds):
        counts = PairCounts.from_requests(spec.object_count, requests[:t])
        scorer = AssignmentScorer(spec, cons, om, counts, grid)
        lw_seed, walk_seed = child.spawn(2)
        init = _lw(scorer, cfg.init_samples, np.random.default_rng(lw_seed))
        results.append(_walk(scorer, init, cfg, np.random.default_rng(walk_seed)))
    return results


def write_trace(path, trace) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "score", "accepted", "swap_i", "swap_j"])
        for rec in trace:
            writer.writerow([rec.step, rec.score, int(rec.accepted), rec.swap_i, rec.swap_j])
