"""Stochastic environment: hidden ground truth and noisy pair-request streams.

A request is convergent (a uniformly chosen same-partition pair of the hidden
truth) with probability p and divergent (uniform cross-partition pair)
otherwise. All randomness flows through seeded generators; nothing reads
ambient RNG state.
"""

from __future__ import annotations

import csv
import itertools
from pathlib import Path

import numpy as np

from .core import (
    Assignment,
    ConstraintSet,
    PairCounts,
    PartitionSpec,
    _compiled,
    _labels_of,
    _step_weights,
    is_feasible,
    validate_constraints,
)
from .errors import DeadEnd, DegenerateEnvironment, DomainError, ParseError

__all__ = [
    "Environment",
    "generate_ground_truth",
    "sample_request",
    "stream",
    "write_stream",
    "read_stream",
]


def _sample_chain(spec: PartitionSpec, cons: ConstraintSet, rng: np.random.Generator):
    """One forward pass through the placement chain; DeadEnd if it gets stuck."""
    comp = _compiled(spec, cons)
    remaining = list(spec.capacities)
    labels: list[int] = []
    for i in range(spec.object_count):
        weights, total = _step_weights(comp, remaining, labels, i)
        if total <= 0.0:
            raise DeadEnd(f"no partition can take object {i}")
        u = rng.random() * total
        acc = 0.0
        lab = spec.partition_count - 1
        for part, w in enumerate(weights):
            acc += w
            if u < acc:
                lab = part
                break
        labels.append(lab)
        remaining[lab] -= 1
    return labels


def generate_ground_truth(spec: PartitionSpec, cons: ConstraintSet, seed) -> Assignment:
    """Sample a valid assignment from the placement chain, restarting on dead ends."""
    validate_constraints(spec, cons)
    rng = np.random.default_rng(seed)
    while True:
        try:
            return Assignment(tuple(_sample_chain(spec, cons, rng)))
        except DeadEnd:
            continue


class Environment:
    """A hidden truth, a noise level, and the request generator over them."""

    def __init__(self, spec: PartitionSpec, cons: ConstraintSet, truth, p: float, rng_seed):
        labels = _labels_of(truth)
        if not is_feasible(spec, cons, labels):
            raise DomainError("ground truth violates the spec or constraints")
        if not 0.0 <= p <= 1.0:
            raise DomainError(f"noise level {p} outside [0, 1]")
        self.spec = spec
        self.cons = cons
        self.truth = Assignment(labels)
        self.p = float(p)
        self.rng_seed = rng_seed
        self.rng = np.random.default_rng(rng_seed)

        same, diff = [], []
        for i, j in itertools.combinations(range(spec.object_count), 2):
            (same if labels[i] == labels[j] else diff).append((i, j))
        if not same or not diff:
            raise DegenerateEnvironment(
                "need at least one same-partition and one cross-partition pair"
            )
        self.same_pairs = tuple(same)
        self.diff_pairs = tuple(diff)

    @classmethod
    def create(
        cls, spec: PartitionSpec, cons: ConstraintSet, p: float, seed
    ) -> "Environment":
        """Derive a fresh truth and stream generator from one master seed."""
        truth_seed, stream_seed = np.random.SeedSequence(seed).spawn(2)
        truth = generate_ground_truth(spec, cons, truth_seed)
        return cls(spec, cons, truth, p, stream_seed)


def sample_request(env: Environment) -> tuple[int, int]:
    """One noisy request: convergent with probability p, divergent otherwise."""
    pool = env.same_pairs if env.rng.random() < env.p else env.diff_pairs
    return pool[int(env.rng.integers(len(pool)))]


def stream(env: Environment, total: int) -> tuple[PairCounts, list[tuple[int, int]]]:
    """total requests in order, plus their folded counts."""
    if total < 0:
        raise DomainError("request count must be non-negative")
    requests = [sample_request(env) for _ in range(total)]
    return PairCounts.from_requests(env.spec.object_count, requests), requests


def write_stream(path, requests) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "i", "j"])
        for t, (i, j) in enumerate(requests, start=1):
            writer.writerow([t, i, j])


def read_stream(path) -> list[tuple[int, int]]:
    path = Path(path)
    requests = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "i", "j"]:
            raise ParseError(f"{path} is not a request stream (bad header)", line=1)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                _, i, j = (int(x) for x in row)
            except ValueError:
                raise ParseError(f"bad stream row {row!r}", line=line_no) from None
            requests.append((i, j))
    return requests
