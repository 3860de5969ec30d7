"""Domain types and the constraint-aware sequential prior over partitionings.

Objects 0..W-1 are placed into R partitions with fixed capacities. The prior
is defined by a placement chain: objects are placed in index order, and each
object lands in a partition with probability proportional to that partition's
remaining capacity, with zero weight on any placement that would violate a
capacity, an allowed-partition restriction, or a pairwise rule against an
already-placed object. For an unconstrained instance this chain is uniform
over all capacity-respecting labelings.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    DeadEnd,
    DomainError,
    EmptyFile,
    IndexOutOfRange,
    InfeasibleConstraints,
    InstanceTooLarge,
    LengthMismatch,
    MalformedConstraint,
    ParseError,
)

__all__ = [
    "PartitionSpec",
    "ConstraintSet",
    "Assignment",
    "PairCounts",
    "NoiseGrid",
    "ConstraintFile",
    "validate_constraints",
    "conditional_placement_distribution",
    "log_prior",
    "same_partition",
    "equivalent_up_to_relabeling",
    "canonical_form",
    "is_feasible",
    "iter_valid_assignments",
    "iter_class_representatives",
    "count_equivalence_classes",
    "unconstrained_class_count",
    "load_constraint_file",
    "parse_constraint_lines",
]

DEFAULT_NOISE_RESOLUTION = 100


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PartitionSpec:
    """Problem shape: W objects, R partitions, per-partition capacities."""

    object_count: int
    partition_count: int
    capacities: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "capacities", tuple(int(c) for c in self.capacities))
        if self.object_count <= 0:
            raise ValueError("object_count must be positive")
        if self.partition_count <= 0:
            raise ValueError("partition_count must be positive")
        if len(self.capacities) != self.partition_count:
            raise ValueError("need one capacity per partition")
        if any(c <= 0 for c in self.capacities):
            raise ValueError("capacities must be positive")
        if sum(self.capacities) != self.object_count:
            raise ValueError("capacities must sum to the object count")

    @classmethod
    def equi(cls, object_count: int, partition_count: int) -> "PartitionSpec":
        """Equal-cardinality layout; requires partition_count | object_count."""
        if object_count % partition_count != 0:
            raise ValueError("partition count must divide object count")
        size = object_count // partition_count
        return cls(object_count, partition_count, (size,) * partition_count)

    @property
    def name(self) -> str:
        return f"r{self.partition_count}w{self.object_count}"


def _normalize_pairs(pairs) -> frozenset:
    out = set()
    for pair in pairs:
        i, j = pair
        out.add((int(i), int(j)) if i <= j else (int(j), int(i)))
    return frozenset(out)


@dataclass(frozen=True, eq=True)
class ConstraintSet:
    """Pairwise placement rules plus per-object allowed-partition sets.

    ``allowed`` only lists restricted objects; an absent object may go in any
    partition.
    """

    must_link: frozenset = frozenset()
    cannot_link: frozenset = frozenset()
    allowed: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "must_link", _normalize_pairs(self.must_link))
        object.__setattr__(self, "cannot_link", _normalize_pairs(self.cannot_link))
        if isinstance(self.allowed, Mapping):
            items = self.allowed.items()
        else:
            items = self.allowed
        normalized = tuple(
            sorted((int(obj), frozenset(int(r) for r in parts)) for obj, parts in items)
        )
        object.__setattr__(self, "allowed", normalized)
        object.__setattr__(self, "_compiled_cache", {})

    @classmethod
    def empty(cls) -> "ConstraintSet":
        return cls()

    @property
    def is_empty(self) -> bool:
        return not (self.must_link or self.cannot_link or self.allowed)

    def allowed_map(self) -> dict:
        return {obj: parts for obj, parts in self.allowed}


@dataclass(frozen=True)
class Assignment:
    """A full labeling: labels[i] is the partition index of object i."""

    labels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(int(x) for x in self.labels))

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> int:
        return self.labels[i]


def _labels_of(a) -> tuple[int, ...]:
    if isinstance(a, Assignment):
        return a.labels
    return tuple(int(x) for x in a)


@dataclass(frozen=True)
class PairCounts:
    """Symmetric observation counts per unordered object pair.

    ``total`` is the number of requests folded in; the upper triangle of
    ``counts`` sums to it.
    """

    counts: np.ndarray
    total: int

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError("counts must be a square matrix")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        if np.any(np.diagonal(counts) != 0):
            raise ValueError("diagonal must be zero")
        if not np.array_equal(counts, counts.T):
            raise ValueError("counts must be symmetric")
        if int(counts.sum()) != 2 * self.total:
            raise ValueError("pair counts must sum to the request total")
        counts = counts.copy()
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "total", int(self.total))

    @property
    def n_objects(self) -> int:
        return self.counts.shape[0]

    @classmethod
    def zeros(cls, n_objects: int) -> "PairCounts":
        return cls(np.zeros((n_objects, n_objects), dtype=np.int64), 0)

    @classmethod
    def from_requests(cls, n_objects: int, pairs: Iterable[tuple[int, int]]) -> "PairCounts":
        counts = np.zeros((n_objects, n_objects), dtype=np.int64)
        total = 0
        for i, j in pairs:
            counts[i, j] += 1
            counts[j, i] += 1
            total += 1
        return cls(counts, total)


@dataclass(frozen=True)
class NoiseGrid:
    """Discretized candidate noise levels k/N with log-space weights."""

    resolution: int
    values: np.ndarray
    log_weights: np.ndarray

    def __post_init__(self):
        n = int(self.resolution)
        if n <= 0:
            raise ValueError("resolution must be positive")
        values = np.asarray(self.values, dtype=np.float64)
        log_weights = np.asarray(self.log_weights, dtype=np.float64)
        if values.shape != (n + 1,) or log_weights.shape != (n + 1,):
            raise ValueError("grid arrays must have resolution+1 entries")
        values = values.copy()
        log_weights = log_weights.copy()
        values.flags.writeable = False
        log_weights.flags.writeable = False
        object.__setattr__(self, "resolution", n)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "log_weights", log_weights)

    @classmethod
    def uniform(cls, resolution: int = DEFAULT_NOISE_RESOLUTION) -> "NoiseGrid":
        n = int(resolution)
        values = np.array([k / n for k in range(n + 1)])
        log_weights = np.full(n + 1, -math.log(n + 1))
        return cls(n, values, log_weights)

    def normalized(self) -> "NoiseGrid":
        shift = _logsumexp(self.log_weights)
        return NoiseGrid(self.resolution, self.values, self.log_weights - shift)

    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def mean(self) -> float:
        return float(np.dot(self.weights(), self.values))

    def mode(self) -> float:
        return float(self.values[int(np.argmax(self.log_weights))])


def _logsumexp(v: np.ndarray) -> float:
    hi = np.max(v)
    if not np.isfinite(hi):
        return float(hi)
    return float(hi + np.log(np.sum(np.exp(v - hi))))


# ---------------------------------------------------------------------------
# Compiled constraint view
# ---------------------------------------------------------------------------


class _Compiled:
    """Per-(spec, cons) lookup tables used by the placement chain."""

    __slots__ = (
        "n",
        "r",
        "group_of",
        "groups",
        "earlier_mate",
        "cannot_all",
        "allowed_sets",
        "constrained",
        "trivial",
    )

    def __init__(self, spec: PartitionSpec, cons: ConstraintSet):
        n, r = spec.object_count, spec.partition_count
        self.n = n
        self.r = r

        parent = list(range(n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for i, j in cons.must_link:
            if not (0 <= i < n and 0 <= j < n):
                raise MalformedConstraint(f"must-link pair ({i}, {j}) out of range")
            parent[find(i)] = find(j)
        roots = [find(i) for i in range(n)]
        remap = {}
        group_of = []
        for root in roots:
            group_of.append(remap.setdefault(root, len(remap)))
        self.group_of = group_of
        groups: list[list[int]] = [[] for _ in range(len(remap))]
        for i, g in enumerate(group_of):
            groups[g].append(i)
        self.groups = groups

        first_seen: dict[int, int] = {}
        earlier = [-1] * n
        for i, g in enumerate(group_of):
            if g in first_seen:
                earlier[i] = first_seen[g]
            else:
                first_seen[g] = i
        self.earlier_mate = earlier

        cannot_all: list[list[int]] = [[] for _ in range(n)]
        for i, j in cons.cannot_link:
            if not (0 <= i < n and 0 <= j < n):
                raise MalformedConstraint(f"cannot-link pair ({i}, {j}) out of range")
            if i == j:
                raise MalformedConstraint(f"object {i} cannot be apart from itself")
            cannot_all[i].append(j)
            cannot_all[j].append(i)
        self.cannot_all = cannot_all

        allowed_sets: list = [None] * n
        for obj, parts in cons.allowed:
            if not 0 <= obj < n:
                raise MalformedConstraint(f"allowed rule for unknown object {obj}")
            if not parts:
                raise MalformedConstraint(f"object {obj} has an empty allowed set")
            if any(not 0 <= p < r for p in parts):
                raise MalformedConstraint(f"allowed rule for object {obj} names a bad partition")
            allowed_sets[obj] = parts
        self.allowed_sets = allowed_sets

        self.constrained = [
            earlier[i] >= 0 or cannot_all[i] or allowed_sets[i] is not None for i in range(n)
        ]
        self.trivial = cons.is_empty


def _compiled(spec: PartitionSpec, cons: ConstraintSet) -> _Compiled:
    cache = cons.__dict__.setdefault("_compiled_cache", {})
    key = (spec.object_count, spec.partition_count)
    comp = cache.get(key)
    if comp is None:
        comp = _Compiled(spec, cons)
        cache[key] = comp
    return comp


# ---------------------------------------------------------------------------
# Constraint validation
# ---------------------------------------------------------------------------


def validate_constraints(spec: PartitionSpec, cons: ConstraintSet) -> None:
    """Raise unless at least one assignment satisfies everything.

    Must-link pairs are closed into groups, allowed sets intersected per
    group, and groups placed onto partitions by a backtracking search that
    honors capacities and cannot-link rules. Free objects (no rules at all)
    can always fill whatever capacity remains, so only the constrained
    groups are searched.
    """
    comp = _compiled(spec, cons)

    overlap = cons.must_link & cons.cannot_link
    if overlap:
        raise MalformedConstraint(f"pairs both must- and cannot-linked: {sorted(overlap)}")

    n_groups = len(comp.groups)
    full = frozenset(range(spec.partition_count))
    group_allowed = []
    for members in comp.groups:
        acc = full
        for i in members:
            if comp.allowed_sets[i] is not None:
                acc = acc & comp.allowed_sets[i]
        if not acc:
            raise InfeasibleConstraints(
                f"objects {members} must share a partition but their allowed sets are disjoint"
            )
        group_allowed.append(acc)

    group_cannot: list[set[int]] = [set() for _ in range(n_groups)]
    for i, j in cons.cannot_link:
        gi, gj = comp.group_of[i], comp.group_of[j]
        if gi == gj:
            raise InfeasibleConstraints(
                f"pair ({i}, {j}) is cannot-linked but forced together by must-links"
            )
        group_cannot[gi].add(gj)
        group_cannot[gj].add(gi)

    interesting = [
        g
        for g in range(n_groups)
        if len(comp.groups[g]) > 1 or group_allowed[g] != full or group_cannot[g]
    ]
    # Most-constrained-first keeps the backtracking shallow.
    interesting.sort(key=lambda g: (len(group_allowed[g]), -len(comp.groups[g])))

    remaining = list(spec.capacities)
    placement: dict[int, int] = {}

    def place(idx: int) -> bool:
        if idx == len(interesting):
            return True
        g = interesting[idx]
        size = len(comp.groups[g])
        banned = {placement[h] for h in group_cannot[g] if h in placement}
        for part in group_allowed[g]:
            if part in banned or remaining[part] < size:
                continue
            remaining[part] -= size
            placement[g] = part
            if place(idx + 1):
                return True
            del placement[g]
            remaining[part] += size
        return False

    if not place(0):
        raise InfeasibleConstraints("no assignment satisfies the constraints and capacities")


# ---------------------------------------------------------------------------
# Placement chain
# ---------------------------------------------------------------------------


def _step_weights(comp: _Compiled, remaining: Sequence[int], labels: Sequence[int], i: int):
    """Raw chain weights for object i given placed objects 0..i-1.

    Returns (weights, total); both zero-heavy when the prefix pins object i
    down. Weights are remaining capacities with rule violations zeroed.
    """
    r = comp.r
    if not comp.constrained[i]:
        weights = [float(c) for c in remaining]
        return weights, float(sum(remaining))

    mate = comp.earlier_mate[i]
    if mate >= 0:
        forced = labels[mate]
        w = float(remaining[forced])
        if comp.allowed_sets[i] is not None and forced not in comp.allowed_sets[i]:
            w = 0.0
        for j in comp.cannot_all[i]:
            if j < i and labels[j] == forced:
                w = 0.0
                break
        weights = [0.0] * r
        weights[forced] = w
        return weights, w

    weights = [float(c) for c in remaining]
    if comp.allowed_sets[i] is not None:
        for part in range(r):
            if part not in comp.allowed_sets[i]:
                weights[part] = 0.0
    for j in comp.cannot_all[i]:
        if j < i:
            weights[labels[j]] = 0.0
    return weights, float(sum(weights))


def conditional_placement_distribution(
    spec: PartitionSpec,
    cons: ConstraintSet,
    prefix: Sequence[int],
    i: int | None = None,
) -> np.ndarray:
    """Placement probabilities for the next object given a valid prefix.

    ``prefix`` assigns objects 0..i-1; ``i`` defaults to ``len(prefix)``.
    Raises DeadEnd when no partition can take the object.
    """
    labels = _labels_of(prefix)
    if i is None:
        i = len(labels)
    if i != len(labels) or i >= spec.object_count:
        raise IndexOutOfRange(f"object {i} does not follow a prefix of length {len(labels)}")
    comp = _compiled(spec, cons)
    remaining = list(spec.capacities)
    for lab in labels:
        remaining[lab] -= 1
        if remaining[lab] < 0:
            raise DomainError("prefix violates capacities")
    weights, total = _step_weights(comp, remaining, labels, i)
    if total <= 0.0:
        raise DeadEnd(f"no partition can take object {i}")
    return np.asarray(weights) / total


def log_prior(spec: PartitionSpec, cons: ConstraintSet, a) -> float:
    """Chain log-probability of a full assignment; -inf iff it breaks a rule."""
    labels = _labels_of(a)
    if len(labels) != spec.object_count:
        raise LengthMismatch(f"expected {spec.object_count} labels, got {len(labels)}")
    r = spec.partition_count
    if any(not 0 <= lab < r for lab in labels):
        raise IndexOutOfRange("label outside the partition range")
    comp = _compiled(spec, cons)
    remaining = list(spec.capacities)
    total_logp = 0.0
    for i, lab in enumerate(labels):
        weights, total = _step_weights(comp, remaining, labels, i)
        w = weights[lab]
        if w <= 0.0:
            return -math.inf
        total_logp += math.log(w / total)
        remaining[lab] -= 1
    return total_logp


def same_partition(a, i: int, j: int) -> bool:
    labels = _labels_of(a)
    n = len(labels)
    if not (0 <= i < n and 0 <= j < n):
        raise IndexOutOfRange(f"pair ({i}, {j}) out of range for {n} objects")
    return labels[i] == labels[j]


def canonical_form(a) -> tuple[int, ...]:
    """Relabel by first appearance; equal forms mean relabeling-equivalent."""
    labels = _labels_of(a)
    remap: dict[int, int] = {}
    out = []
    for lab in labels:
        out.append(remap.setdefault(lab, len(remap)))
    return tuple(out)


def equivalent_up_to_relabeling(a, b) -> bool:
    la, lb = _labels_of(a), _labels_of(b)
    if len(la) != len(lb):
        raise LengthMismatch(f"cannot compare {len(la)} labels with {len(lb)}")
    return canonical_form(la) == canonical_form(lb)


def is_feasible(spec: PartitionSpec, cons: ConstraintSet, a) -> bool:
    """Definitional check: capacities met and every rule satisfied."""
    labels = _labels_of(a)
    if len(labels) != spec.object_count:
        return False
    r = spec.partition_count
    counts = [0] * r
    for lab in labels:
        if not 0 <= lab < r:
            return False
        counts[lab] += 1
    if counts != list(spec.capacities):
        return False
    for i, j in cons.must_link:
        if labels[i] != labels[j]:
            return False
    for i, j in cons.cannot_link:
        if labels[i] == labels[j]:
            return False
    for obj, parts in cons.allowed:
        if labels[obj] not in parts:
            return False
    return True


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------


def iter_valid_assignments(spec: PartitionSpec, cons: ConstraintSet) -> Iterator[tuple[int, ...]]:
    """All feasible labelings in lexicographic order (depth-first search)."""
    comp = _compiled(spec, cons)
    n, r = spec.object_count, spec.partition_count
    remaining = list(spec.capacities)
    labels = [0] * n

    def rec(i: int):
        if i == n:
            yield tuple(labels)
            return
        weights, total = _step_weights(comp, remaining, labels, i)
        if total <= 0.0:
            return
        for part in range(r):
            if weights[part] <= 0.0:
                continue
            labels[i] = part
            remaining[part] -= 1
            yield from rec(i + 1)
            remaining[part] += 1

    yield from rec(0)


def iter_class_representatives(
    spec: PartitionSpec, cons: ConstraintSet, cap: int | None = None
) -> Iterator[tuple[int, ...]]:
    """One feasible labeling per relabeling-equivalence class (lex-first).

    Raises InstanceTooLarge once more than ``cap`` classes have been seen.
    """
    seen: set[tuple[int, ...]] = set()
    for labels in iter_valid_assignments(spec, cons):
        key = canonical_form(labels)
        if key in seen:
            continue
        if cap is not None and len(seen) >= cap:
            raise InstanceTooLarge(f"more than {cap} equivalence classes")
        seen.add(key)
        yield labels


def count_equivalence_classes(
    spec: PartitionSpec, cons: ConstraintSet | None = None, cap: int | None = None
) -> int:
    cons = cons if cons is not None else ConstraintSet.empty()
    return sum(1 for _ in iter_class_representatives(spec, cons, cap))


def unconstrained_class_count(spec: PartitionSpec) -> int:
    """Closed-form class count for an unconstrained instance.

    Labelings are W! / prod(c!); swapping equal-capacity partitions does not
    change the induced grouping, so divide by the permutations within each
    capacity multiplicity.
    """
    count = math.factorial(spec.object_count)
    for c in spec.capacities:
        count //= math.factorial(c)
    for mult in Counter(spec.capacities).values():
        count //= math.factorial(mult)
    return count


# ---------------------------------------------------------------------------
# Constraint file format
# ---------------------------------------------------------------------------
#
# Line-oriented text, `#` comment lines ignored:
#
#   sections <name>[,<name>...]
#   capacity <int>[,<int>...]          single value applies to every section
#   must <item>, <item>                comma-split when a comma is present,
#   cannot <item> <item>               whitespace-split otherwise
#   allow <item> <section>[,<section>...]
#
# Items and sections are case-sensitive strings resolved to indices against
# the caller's catalog / the declared section list; bare integers work when
# no names are declared.


@dataclass(frozen=True)
class ConstraintFile:
    sections: tuple[str, ...] | None
    capacities: tuple[int, ...] | None
    constraints: ConstraintSet


def _resolve(token: str, names: Sequence[str] | None, kind: str, line_no: int) -> int:
    token = token.strip()
    if names is not None and token in names:
        return names.index(token)
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"unknown {kind} {token!r}", line=line_no) from None


def _split_fields(rest: str, expected: int, line_no: int) -> list[str]:
    parts = [p.strip() for p in rest.split(",")] if "," in rest else rest.split()
    if len(parts) != expected or any(not p for p in parts):
        raise ParseError(f"expected {expected} fields, got {rest!r}", line=line_no)
    return parts


def parse_constraint_lines(
    lines: Iterable[str], items: Sequence[str] | None = None
) -> ConstraintFile:
    sections: tuple[str, ...] | None = None
    capacities: tuple[int, ...] | None = None
    must = []
    cannot = []
    allowed: dict[int, frozenset] = {}

    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        keyword, _, rest = line.partition(" ")
        rest = rest.strip()
        if not rest:
            raise ParseError(f"directive {keyword!r} needs arguments", line=line_no)
        if keyword == "sections":
            sections = tuple(s.strip() for s in rest.split(","))
            if any(not s for s in sections):
                raise ParseError("empty section name", line=line_no)
        elif keyword == "capacity":
            try:
                values = tuple(int(tok.strip()) for tok in rest.split(","))
            except ValueError:
                raise ParseError(f"bad capacity list {rest!r}", line=line_no) from None
            capacities = values
        elif keyword in ("must", "cannot"):
            a, b = _split_fields(rest, 2, line_no)
            pair = (_resolve(a, items, "item", line_no), _resolve(b, items, "item", line_no))
            (must if keyword == "must" else cannot).append(pair)
        elif keyword == "allow":
            # Item names may contain spaces; section names may not, so the
            # item ends at the last space before the first section token.
            chunks = [c.strip() for c in rest.split(",")]
            head, _, first_section = chunks[0].rpartition(" ")
            if not head or any(not c for c in chunks):
                raise ParseError("allow needs an item and a section list", line=line_no)
            obj = _resolve(head, items, "item", line_no)
            parts = frozenset(
                _resolve(tok, sections, "section", line_no)
                for tok in [first_section, *chunks[1:]]
            )
            allowed[obj] = parts
        else:
            raise ParseError(f"unknown directive {keyword!r}", line=line_no)

    if capacities is not None and sections is not None and len(capacities) == 1:
        capacities = capacities * len(sections)
    return ConstraintFile(
        sections=sections,
        capacities=capacities,
        constraints=ConstraintSet(must_link=must, cannot_link=cannot, allowed=allowed),
    )


def load_constraint_file(path, items: Sequence[str] | None = None) -> ConstraintFile:
    text = Path(path).read_text(encoding="utf-8")
    parsed = parse_constraint_lines(text.splitlines(), items=items)
    if parsed.sections is None and parsed.capacities is None and parsed.constraints.is_empty:
        raise EmptyFile(f"{path} holds no directives")
    return parsed
