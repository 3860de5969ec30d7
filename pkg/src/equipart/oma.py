"""Object migration baseline: a fixed-rule automaton over depth states.

Every object sits in a class at a depth between 1 (innermost, most certain)
and depth_states (the boundary). Requests pull same-class objects inward;
cross-class requests push objects outward until one reaches the boundary and
migrates. The automaton treats every request as if it were convergent, which
is exactly what makes it noise-sensitive.

The migration rules are a reconstruction of the classic automaton this
baseline is named after; they live in this one module so an alternate rule
set can be swapped in without touching the benchmarks.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import Assignment, PartitionSpec
from .errors import DomainError, IndexOutOfRange, UnsupportedSpec

__all__ = ["OmaState", "oma_init", "oma_step", "oma_answer", "DEFAULT_DEPTH_STATES"]

DEFAULT_DEPTH_STATES = 10


@dataclass
class OmaState:
    spec: PartitionSpec
    depth_states: int
    class_of: list[int]
    depth: list[int]


def oma_init(spec: PartitionSpec, seed=None, depth_states: int = DEFAULT_DEPTH_STATES) -> OmaState:
    """Round-robin classes, every object at the boundary (maximal uncertainty).

    The seed parameter is accepted for interface symmetry with the other
    solvers; initialization is deterministic.
    """
    caps = set(spec.capacities)
    if len(caps) != 1:
        raise UnsupportedSpec("the automaton handles equal-capacity partitions only")
    if spec.capacities[0] == 1:
        raise UnsupportedSpec(
            "single-object classes leave the migration rule nothing to displace"
        )
    if depth_states < 1:
        raise DomainError("depth_states must be positive")
    r = spec.partition_count
    return OmaState(
        spec=spec,
        depth_states=depth_states,
        class_of=[i % r for i in range(spec.object_count)],
        depth=[depth_states] * spec.object_count,
    )


def oma_step(state: OmaState, request, rng=None) -> OmaState:
    """Advance the automaton by one request; mutates and returns state.

    rng is unused (the rules are deterministic); it is accepted so callers
    can drive all solvers through one interface.
    """
    i, j = request
    n = state.spec.object_count
    if not (0 <= i < n and 0 <= j < n):
        raise IndexOutOfRange(f"request ({i}, {j}) out of range for {n} objects")
    if i == j:
        raise DomainError("a request must name two distinct objects")

    boundary = state.depth_states
    class_of, depth = state.class_of, state.depth

    if class_of[i] == class_of[j]:
        depth[i] = max(1, depth[i] - 1)
        depth[j] = max(1, depth[j] - 1)
        return state

    if depth[i] == boundary:
        migrant, anchor = i, j
    elif depth[j] == boundary:
        migrant, anchor = j, i
    else:
        depth[i] = min(boundary, depth[i] + 1)
        depth[j] = min(boundary, depth[j] + 1)
        return state

    # The boundary object defects: the anchor's class absorbs it and expels
    # its least-anchored member (deepest, ties to the smallest index) back
    # into the migrant's former class, keeping sizes intact.
    depth[anchor] = min(boundary, depth[anchor] + 1)
    target = class_of[anchor]
    source = class_of[migrant]
    displaced = min(
        (k for k in range(n) if class_of[k] == target and k != anchor),
        key=lambda k: (-depth[k], k),
    )
    class_of[displaced] = source
    depth[displaced] = boundary
    class_of[migrant] = target
    depth[migrant] = boundary
    return state


def oma_answer(state: OmaState) -> Assignment:
    """The automaton's current partitioning hypothesis."""
    return Assignment(tuple(state.class_of))
