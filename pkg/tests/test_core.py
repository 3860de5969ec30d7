"""Core types, the placement chain, and constraint handling."""

from __future__ import annotations

import itertools
import math
from collections import Counter

import numpy as np
import pytest

from equipart.core import (
    Assignment,
    ConstraintSet,
    NoiseGrid,
    PairCounts,
    PartitionSpec,
    canonical_form,
    conditional_placement_distribution,
    count_equivalence_classes,
    equivalent_up_to_relabeling,
    is_feasible,
    iter_class_representatives,
    iter_valid_assignments,
    load_constraint_file,
    log_prior,
    parse_constraint_lines,
    same_partition,
    unconstrained_class_count,
    validate_constraints,
)
from equipart.errors import (
    DeadEnd,
    DomainError,
    IndexOutOfRange,
    InfeasibleConstraints,
    InstanceTooLarge,
    LengthMismatch,
    MalformedConstraint,
    ParseError,
)

EMPTY = ConstraintSet.empty()


# ---------------------------------------------------------------------------
# Oracles, deliberately written from the definitions rather than the library
# ---------------------------------------------------------------------------


def brute_valid(spec: PartitionSpec, cons: ConstraintSet) -> list[tuple[int, ...]]:
    out = []
    allowed = dict(cons.allowed)
    for labels in itertools.product(range(spec.partition_count), repeat=spec.object_count):
        counts = Counter(labels)
        if any(counts[r] != spec.capacities[r] for r in range(spec.partition_count)):
            continue
        if any(labels[i] != labels[j] for i, j in cons.must_link):
            continue
        if any(labels[i] == labels[j] for i, j in cons.cannot_link):
            continue
        if any(labels[obj] not in parts for obj, parts in allowed.items()):
            continue
        out.append(labels)
    return out


def grouping(labels: tuple[int, ...]) -> frozenset:
    blocks: dict[int, set[int]] = {}
    for obj, lab in enumerate(labels):
        blocks.setdefault(lab, set()).add(obj)
    return frozenset(frozenset(b) for b in blocks.values())


def random_constraints(rng: np.random.Generator, spec: PartitionSpec) -> ConstraintSet:
    n, r = spec.object_count, spec.partition_count
    pairs = list(itertools.combinations(range(n), 2))
    rng.shuffle(pairs)
    n_must = int(rng.integers(0, 3))
    n_cannot = int(rng.integers(0, 3))
    must = pairs[:n_must]
    cannot = pairs[n_must : n_must + n_cannot]
    allowed = {}
    for obj in rng.choice(n, size=int(rng.integers(0, 3)), replace=False):
        size = int(rng.integers(1, r + 1))
        allowed[int(obj)] = frozenset(
            int(x) for x in rng.choice(r, size=size, replace=False)
        )
    return ConstraintSet(must_link=must, cannot_link=cannot, allowed=allowed)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


class TestPartitionSpec:
    def test_equi_splits_evenly(self):
        spec = PartitionSpec.equi(9, 3)
        assert spec.capacities == (3, 3, 3)
        assert spec.name == "r3w9"

    def test_equi_rejects_indivisible(self):
        with pytest.raises(ValueError):
            PartitionSpec.equi(7, 3)

    def test_capacities_must_sum_to_objects(self):
        with pytest.raises(ValueError):
            PartitionSpec(6, 2, (2, 2))

    def test_rejects_nonpositive_capacity(self):
        with pytest.raises(ValueError):
            PartitionSpec(4, 2, (4, 0))


class TestPairCounts:
    def test_from_requests_accumulates_symmetrically(self):
        pc = PairCounts.from_requests(4, [(0, 1), (1, 0), (2, 3)])
        assert pc.total == 3
        assert pc.counts[0, 1] == 2
        assert pc.counts[1, 0] == 2
        assert pc.counts[2, 3] == 1

    def test_rejects_asymmetric_counts(self):
        m = np.zeros((3, 3), dtype=int)
        m[0, 1] = 1
        with pytest.raises(ValueError):
            PairCounts(m, 1)

    def test_rejects_total_mismatch(self):
        m = np.zeros((3, 3), dtype=int)
        m[0, 1] = m[1, 0] = 1
        with pytest.raises(ValueError):
            PairCounts(m, 2)

    def test_counts_are_frozen(self):
        pc = PairCounts.zeros(3)
        with pytest.raises(ValueError):
            pc.counts[0, 1] = 5


class TestNoiseGrid:
    def test_uniform_grid_spans_unit_interval(self):
        grid = NoiseGrid.uniform(100)
        assert grid.values.shape == (101,)
        assert grid.values[0] == 0.0
        assert grid.values[-1] == 1.0
        np.testing.assert_allclose(np.exp(grid.log_weights).sum(), 1.0)

    def test_normalized_sums_to_one(self):
        grid = NoiseGrid(4, np.linspace(0, 1, 5), np.log([1, 2, 3, 2, 1]))
        np.testing.assert_allclose(np.exp(grid.normalized().log_weights).sum(), 1.0)

    def test_mode_picks_heaviest_value(self):
        grid = NoiseGrid(4, np.linspace(0, 1, 5), np.log([1, 2, 5, 2, 1]))
        assert grid.mode() == 0.5


# ---------------------------------------------------------------------------
# Placement chain
# ---------------------------------------------------------------------------


class TestConditionalPlacement:
    def test_full_partition_gets_zero_mass(self):
        spec = PartitionSpec.equi(4, 2)
        dist = conditional_placement_distribution(spec, EMPTY, [0, 0])
        np.testing.assert_allclose(dist, [0.0, 1.0])

    def test_balanced_prefix_splits_evenly(self):
        spec = PartitionSpec.equi(4, 2)
        dist = conditional_placement_distribution(spec, EMPTY, [0, 1])
        np.testing.assert_allclose(dist, [0.5, 0.5])

    def test_empty_prefix_follows_capacities(self):
        spec = PartitionSpec.equi(4, 2)
        np.testing.assert_allclose(
            conditional_placement_distribution(spec, EMPTY, []), [0.5, 0.5]
        )
        lop = PartitionSpec(4, 2, (3, 1))
        np.testing.assert_allclose(
            conditional_placement_distribution(lop, EMPTY, []), [0.75, 0.25]
        )

    def test_must_link_forces_partner_partition(self):
        spec = PartitionSpec.equi(6, 3)
        cons = ConstraintSet(must_link=[(0, 2)])
        dist = conditional_placement_distribution(spec, cons, [1, 0])
        np.testing.assert_allclose(dist, [0.0, 1.0, 0.0])

    def test_must_link_closure_spans_chains(self):
        spec = PartitionSpec.equi(9, 3)
        cons = ConstraintSet(must_link=[(0, 1), (1, 2)])
        dist = conditional_placement_distribution(spec, cons, [2, 2])
        np.testing.assert_allclose(dist, [0.0, 0.0, 1.0])

    def test_cannot_link_zeroes_partner_partition(self):
        spec = PartitionSpec.equi(6, 3)
        cons = ConstraintSet(cannot_link=[(0, 2)])
        # Remaining capacities are (1, 1, 2); the partner's partition drops out.
        dist = conditional_placement_distribution(spec, cons, [1, 0])
        np.testing.assert_allclose(dist, [1 / 3, 0.0, 2 / 3])

    def test_allowed_restricts_support(self):
        spec = PartitionSpec.equi(6, 3)
        cons = ConstraintSet(allowed={0: {2}})
        dist = conditional_placement_distribution(spec, cons, [])
        np.testing.assert_allclose(dist, [0.0, 0.0, 1.0])

    def test_dead_end_raises(self):
        spec = PartitionSpec.equi(6, 3)
        cons = ConstraintSet(cannot_link=[(4, 5)])
        with pytest.raises(DeadEnd):
            conditional_placement_distribution(spec, cons, [0, 0, 1, 1, 2])

    def test_capacity_violating_prefix_rejected(self):
        spec = PartitionSpec.equi(4, 2)
        with pytest.raises(DomainError):
            conditional_placement_distribution(spec, EMPTY, [0, 0, 0])

    def test_prefix_past_end_rejected(self):
        spec = PartitionSpec.equi(4, 2)
        with pytest.raises(IndexOutOfRange):
            conditional_placement_distribution(spec, EMPTY, [0, 0, 1, 1])

    def test_distribution_sums_to_one_on_random_prefixes(self):
        """Every reachable prefix yields a normalized next-step distribution."""
        rng = np.random.default_rng(20260818)
        spec = PartitionSpec.equi(8, 4)
        for _ in range(50):
            cons = random_constraints(rng, spec)
            labels: list[int] = []
            try:
                for i in range(spec.object_count):
                    dist = conditional_placement_distribution(spec, cons, labels)
                    np.testing.assert_allclose(dist.sum(), 1.0)
                    labels.append(int(rng.choice(spec.partition_count, p=dist)))
            except DeadEnd:
                continue


class TestLogPrior:
    def test_uniform_over_unconstrained_assignments(self):
        """Chain probability is 1/count for every capacity-respecting labeling."""
        for spec in (
            PartitionSpec.equi(4, 2),
            PartitionSpec.equi(6, 3),
            PartitionSpec(5, 2, (3, 2)),
        ):
            valid = brute_valid(spec, EMPTY)
            expected = -math.log(len(valid))
            for labels in valid:
                assert log_prior(spec, EMPTY, labels) == pytest.approx(expected)

    def test_capacity_violation_is_minus_infinity(self):
        spec = PartitionSpec.equi(4, 2)
        assert log_prior(spec, EMPTY, [0, 0, 0, 1]) == -math.inf

    def test_finite_iff_feasible_under_random_constraints(self):
        """The chain rejects exactly the labelings a direct check rejects."""
        rng = np.random.default_rng(7)
        spec = PartitionSpec.equi(6, 3)
        space = list(itertools.product(range(3), repeat=6))
        for _ in range(40):
            cons = random_constraints(rng, spec)
            valid = set(brute_valid(spec, cons))
            for labels in space:
                finite = math.isfinite(log_prior(spec, cons, labels))
                assert finite == (labels in valid)
                assert is_feasible(spec, cons, labels) == (labels in valid)

    def test_matches_stepwise_product(self):
        """log_prior is the sum of per-object conditional log-probabilities."""
        rng = np.random.default_rng(11)
        spec = PartitionSpec.equi(6, 2)
        for _ in range(20):
            cons = random_constraints(rng, spec)
            for labels in brute_valid(spec, cons)[:10]:
                total = 0.0
                for i in range(len(labels)):
                    dist = conditional_placement_distribution(spec, cons, labels[:i])
                    total += math.log(dist[labels[i]])
                assert log_prior(spec, cons, labels) == pytest.approx(total)

    def test_length_mismatch(self):
        spec = PartitionSpec.equi(4, 2)
        with pytest.raises(LengthMismatch):
            log_prior(spec, EMPTY, [0, 1])

    def test_label_out_of_range(self):
        spec = PartitionSpec.equi(4, 2)
        with pytest.raises(IndexOutOfRange):
            log_prior(spec, EMPTY, [0, 1, 2, 1])

    def test_accepts_assignment_wrapper(self):
        spec = PartitionSpec.equi(4, 2)
        a = Assignment((0, 1, 0, 1))
        assert math.isfinite(log_prior(spec, EMPTY, a))


# ---------------------------------------------------------------------------
# Constraint validation
# ---------------------------------------------------------------------------


class TestValidateConstraints:
    def test_empty_constraints_pass(self):
        validate_constraints(PartitionSpec.equi(6, 3), EMPTY)

    def test_overlapping_must_and_cannot(self):
        cons = ConstraintSet(must_link=[(0, 1)], cannot_link=[(1, 0)])
        with pytest.raises(MalformedConstraint):
            validate_constraints(PartitionSpec.equi(4, 2), cons)

    def test_pair_out_of_range(self):
        cons = ConstraintSet(must_link=[(0, 9)])
        with pytest.raises(MalformedConstraint):
            validate_constraints(PartitionSpec.equi(4, 2), cons)

    def test_empty_allowed_set(self):
        cons = ConstraintSet(allowed={0: frozenset()})
        with pytest.raises(MalformedConstraint):
            validate_constraints(PartitionSpec.equi(4, 2), cons)

    def test_self_cannot_pair(self):
        cons = ConstraintSet(cannot_link=[(2, 2)])
        with pytest.raises(MalformedConstraint):
            validate_constraints(PartitionSpec.equi(4, 2), cons)

    def test_cannot_inside_must_group(self):
        cons = ConstraintSet(must_link=[(0, 1), (1, 2)], cannot_link=[(0, 2)])
        with pytest.raises(InfeasibleConstraints):
            validate_constraints(PartitionSpec.equi(6, 3), cons)

    def test_disjoint_allowed_in_must_group(self):
        cons = ConstraintSet(must_link=[(0, 1)], allowed={0: {0}, 1: {1}})
        with pytest.raises(InfeasibleConstraints):
            validate_constraints(PartitionSpec.equi(4, 2), cons)

    def test_group_exceeding_every_capacity(self):
        cons = ConstraintSet(must_link=[(0, 1), (1, 2)])
        with pytest.raises(InfeasibleConstraints):
            validate_constraints(PartitionSpec.equi(4, 2), cons)

    def test_cannot_clique_wider_than_partitions(self):
        cons = ConstraintSet(cannot_link=[(0, 1), (0, 2), (1, 2)])
        with pytest.raises(InfeasibleConstraints):
            validate_constraints(PartitionSpec.equi(4, 2), cons)

    def test_matches_brute_force_on_random_instances(self):
        """validate_constraints accepts exactly when some labeling exists."""
        rng = np.random.default_rng(99)
        spec = PartitionSpec.equi(6, 3)
        checked_infeasible = 0
        for _ in range(80):
            cons = random_constraints(rng, spec)
            if cons.must_link & cons.cannot_link:
                continue
            feasible = bool(brute_valid(spec, cons))
            if not feasible:
                checked_infeasible += 1
            try:
                validate_constraints(spec, cons)
                assert feasible
            except InfeasibleConstraints:
                assert not feasible
        assert checked_infeasible > 0


# ---------------------------------------------------------------------------
# Equivalence and enumeration
# ---------------------------------------------------------------------------


class TestEquivalence:
    def test_same_partition_symmetric(self):
        a = Assignment((0, 1, 0, 1))
        assert same_partition(a, 0, 2)
        assert same_partition(a, 2, 0)
        assert not same_partition(a, 0, 1)

    def test_same_partition_range_check(self):
        with pytest.raises(IndexOutOfRange):
            same_partition(Assignment((0, 1)), 0, 2)

    def test_relabeling_is_equivalent(self):
        assert equivalent_up_to_relabeling((0, 1, 0, 1), (1, 0, 1, 0))
        assert not equivalent_up_to_relabeling((0, 1, 0, 1), (0, 1, 1, 0))

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            equivalent_up_to_relabeling((0, 1), (0, 1, 0))

    def test_canonical_form_matches_grouping_oracle(self):
        """Two labelings share a canonical form iff they induce one grouping."""
        rng = np.random.default_rng(3)
        spec = PartitionSpec.equi(8, 4)
        base = [r for r in range(4) for _ in range(2)]
        for _ in range(60):
            a = tuple(rng.permutation(base).tolist())
            b = tuple(rng.permutation(base).tolist())
            assert (canonical_form(a) == canonical_form(b)) == (grouping(a) == grouping(b))


class TestEnumeration:
    def test_valid_assignments_in_lex_order(self):
        spec = PartitionSpec.equi(4, 2)
        seq = list(iter_valid_assignments(spec, EMPTY))
        assert seq == sorted(seq)
        assert set(seq) == set(brute_valid(spec, EMPTY))

    def test_enumeration_respects_constraints(self):
        spec = PartitionSpec.equi(6, 3)
        cons = ConstraintSet(must_link=[(0, 5)], cannot_link=[(1, 2)], allowed={3: {0, 1}})
        assert set(iter_valid_assignments(spec, cons)) == set(brute_valid(spec, cons))

    @pytest.mark.parametrize(
        "w,r,expected",
        [(4, 2, 3), (6, 2, 10), (6, 3, 15), (9, 3, 280)],
    )
    def test_class_counts_on_equal_capacity_instances(self, w, r, expected):
        spec = PartitionSpec.equi(w, r)
        assert count_equivalence_classes(spec) == expected
        oracle = {grouping(labels) for labels in brute_valid(spec, EMPTY)}
        assert len(oracle) == expected

    def test_closed_form_count_matches_enumeration(self):
        for spec in (
            PartitionSpec.equi(6, 3),
            PartitionSpec.equi(8, 2),
            PartitionSpec(6, 3, (3, 2, 1)),
            PartitionSpec(7, 3, (3, 2, 2)),
        ):
            oracle = {grouping(labels) for labels in brute_valid(spec, EMPTY)}
            assert unconstrained_class_count(spec) == len(oracle)

    def test_closed_form_large_instance(self):
        assert unconstrained_class_count(PartitionSpec.equi(16, 4)) == 2_627_625

    def test_representatives_are_lex_first(self):
        spec = PartitionSpec.equi(6, 3)
        reps = list(iter_class_representatives(spec, EMPTY))
        assert len(reps) == 15
        by_class: dict[tuple, list] = {}
        for labels in iter_valid_assignments(spec, EMPTY):
            by_class.setdefault(canonical_form(labels), []).append(labels)
        assert set(reps) == {min(v) for v in by_class.values()}

    def test_class_cap_raises(self):
        spec = PartitionSpec.equi(9, 3)
        with pytest.raises(InstanceTooLarge):
            list(iter_class_representatives(spec, EMPTY, cap=100))


# ---------------------------------------------------------------------------
# Constraint file parsing
# ---------------------------------------------------------------------------


class TestConstraintFile:
    def test_full_file_round_trip(self, tmp_path):
        path = tmp_path / "layout.txt"
        path.write_text(
            "# store layout\n"
            "sections entrance,counter,cooler\n"
            "capacity 2\n"
            "\n"
            "must 0, 1\n"
            "cannot 2 3\n"
            "allow 4 cooler,counter\n"
        )
        parsed = load_constraint_file(path)
        assert parsed.sections == ("entrance", "counter", "cooler")
        assert parsed.capacities == (2, 2, 2)
        assert parsed.constraints.must_link == frozenset({(0, 1)})
        assert parsed.constraints.cannot_link == frozenset({(2, 3)})
        assert dict(parsed.constraints.allowed) == {4: frozenset({1, 2})}

    def test_items_resolved_against_catalog(self):
        items = ["whole milk", "rolls/buns", "yogurt"]
        parsed = parse_constraint_lines(
            ["must whole milk, yogurt", "cannot rolls/buns, yogurt"], items=items
        )
        assert parsed.constraints.must_link == frozenset({(0, 2)})
        assert parsed.constraints.cannot_link == frozenset({(1, 2)})

    def test_allow_with_multiword_item(self):
        items = ["whole milk", "yogurt"]
        parsed = parse_constraint_lines(
            ["sections a,b,c", "allow whole milk b, c"], items=items
        )
        assert dict(parsed.constraints.allowed) == {0: frozenset({1, 2})}

    def test_capacity_list(self):
        parsed = parse_constraint_lines(["sections a,b", "capacity 3,1"])
        assert parsed.capacities == (3, 1)

    def test_unknown_directive(self):
        with pytest.raises(ParseError) as exc:
            parse_constraint_lines(["sections a,b", "forbid 0 1"])
        assert exc.value.line == 2

    def test_unknown_item(self):
        with pytest.raises(ParseError):
            parse_constraint_lines(["must butter, jam"], items=["milk"])

    def test_unknown_section(self):
        with pytest.raises(ParseError):
            parse_constraint_lines(["sections a,b", "allow 0 z"])

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("\n# only a comment\n")
        from equipart.errors import EmptyFile

        with pytest.raises(EmptyFile):
            load_constraint_file(path)
