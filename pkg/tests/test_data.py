import itertools

import numpy as np
import pytest

from equipart.core import PartitionSpec, is_feasible, validate_constraints
from equipart.data import (
    DEFAULT_SECTIONS,
    FoldPlan,
    ITEM_CHOCOLATE,
    ITEM_WINE,
    SPECIAL_ITEMS,
    TransactionSet,
    load_transactions,
    parse_transaction_lines,
    read_folds,
    save_transactions,
    synthetic_market_basket,
    transactions_to_requests,
    trip_cost,
    warehouse_constraints,
    write_folds,
)
from equipart.errors import (
    DomainError,
    EmptyFile,
    IndexOutOfRange,
    LengthMismatch,
    ParseError,
    UnassignedItem,
    UnknownItem,
    UnknownSection,
)


class TestParsing:
    def test_two_lines_build_catalog_in_first_appearance_order(self):
        ts = parse_transaction_lines(["milk,rolls", "milk"])
        assert ts.items == ("milk", "rolls")
        assert ts.transactions == (frozenset({0, 1}), frozenset({0}))

    def test_empty_token_rejected_with_line_number(self):
        with pytest.raises(ParseError) as err:
            parse_transaction_lines(["ok", "a,,b"])
        assert err.value.line == 2

    def test_comments_blanks_and_duplicates(self):
        ts = parse_transaction_lines(
            [
                "# header comment",
                "",
                "tea, tea , scones  # a basket",
                "   ",
                "jam",
            ]
        )
        assert ts.items == ("tea", "scones", "jam")
        assert ts.transactions[0] == frozenset({0, 1})
        assert len(ts) == 2

    def test_comment_only_input_is_empty(self):
        with pytest.raises(EmptyFile):
            parse_transaction_lines(["# nothing", "   "])

    def test_round_trip_identical(self, tmp_path):
        path = tmp_path / "basket.txt"
        path.write_text("b,a\nc\na,c\n", encoding="utf-8")
        first = load_transactions(path)
        again = tmp_path / "again.txt"
        save_transactions(first, again)
        assert load_transactions(again) == first

    def test_type_invariants_enforced(self):
        with pytest.raises(DomainError):
            TransactionSet(("a", "a"), (frozenset({0}),))
        with pytest.raises(DomainError):
            TransactionSet(("a",), (frozenset(),))
        with pytest.raises(IndexOutOfRange):
            TransactionSet(("a",), (frozenset({3}),))

    def test_index_of_unknown_item(self):
        ts = parse_transaction_lines(["a,b"])
        assert ts.index_of("b") == 1
        with pytest.raises(UnknownItem):
            ts.index_of("zucchini")


class TestFolds:
    def test_draw_partitions_everything_near_equally(self):
        plan = FoldPlan.draw(103, k=5, seed=9)
        assert len(plan.fold_of) == 103
        counts = np.bincount(plan.fold_of, minlength=5)
        assert counts.max() - counts.min() <= 1
        train = set(plan.train_indices())
        test = set(plan.test_indices())
        assert train | test == set(range(103))
        assert not train & test

    def test_validation(self):
        with pytest.raises(DomainError):
            FoldPlan(0, ())
        with pytest.raises(DomainError):
            FoldPlan(3, (0, 1, 2), train_fold=3)
        with pytest.raises(DomainError):
            FoldPlan(2, (0, 0, 0, 1))  # sizes 3 and 1

    def test_fold_csv_round_trip(self, tmp_path):
        plan = FoldPlan.draw(40, k=5, seed=3, train_fold=2)
        path = tmp_path / "folds.csv"
        write_folds(plan, path)
        back = read_folds(path, train_fold=2)
        assert back == plan

    def test_read_folds_rejects_gaps(self, tmp_path):
        path = tmp_path / "folds.csv"
        path.write_text("transaction_id,fold\n0,0\n2,1\n", encoding="utf-8")
        with pytest.raises(ParseError):
            read_folds(path)


class TestRequestExpansion:
    def test_all_pairs_of_a_triple(self):
        ts = parse_transaction_lines(["a,b,c"])
        reqs = transactions_to_requests(ts, seed=0)
        assert sorted(reqs) == [(0, 1), (0, 2), (1, 2)]

    def test_singletons_contribute_nothing(self):
        ts = parse_transaction_lines(["a", "b,c"])
        assert transactions_to_requests(ts, seed=0) == [(1, 2)]

    def test_count_matches_binomial_identity(self):
        rng = np.random.default_rng(11)
        lines = []
        for _ in range(60):
            size = int(rng.integers(1, 7))
            picks = rng.choice(26, size=size, replace=False)
            lines.append(",".join(chr(ord("a") + int(c)) for c in picks))
        ts = parse_transaction_lines(lines)
        plan = FoldPlan.draw(len(ts), k=5, seed=2)
        reqs = transactions_to_requests(ts, plan, seed=5)
        expected = sum(
            len(ts.transactions[t]) * (len(ts.transactions[t]) - 1) // 2
            for t in plan.train_indices()
        )
        assert len(reqs) == expected

    def test_only_training_fold_contributes(self):
        ts = parse_transaction_lines(["a,b", "c,d", "e,f", "g,h", "i,j"])
        plan = FoldPlan(5, (0, 1, 2, 3, 4), train_fold=3)
        assert transactions_to_requests(ts, plan, seed=0) == [(6, 7)]

    def test_one_random_pair_draws_within_each_transaction(self):
        ts = parse_transaction_lines(["a,b,c,d", "e,f,g"])
        reqs = transactions_to_requests(ts, mode="one_random_pair", seed=4)
        assert len(reqs) == 2
        for i, j in reqs:
            assert i < j
            assert any(
                {i, j} <= txn for txn in ts.transactions
            )

    def test_seed_determinism_and_shuffling(self):
        ts = parse_transaction_lines(["a,b,c,d,e"])
        one = transactions_to_requests(ts, seed=7)
        two = transactions_to_requests(ts, seed=7)
        assert one == two
        assert sorted(one) == list(itertools.combinations(range(5), 2))

    def test_bad_mode_and_length_mismatch(self):
        ts = parse_transaction_lines(["a,b"])
        with pytest.raises(DomainError):
            transactions_to_requests(ts, mode="pairs")
        with pytest.raises(LengthMismatch):
            transactions_to_requests(ts, FoldPlan.draw(9, k=3, seed=0))


def catalog_with_specials(extra=0):
    names = list(SPECIAL_ITEMS) + [f"filler {k}" for k in range(extra)]
    return tuple(names)


class TestWarehouseRules:
    def test_wine_and_chocolate_must_share_a_section(self):
        names = catalog_with_specials()
        cons = warehouse_constraints(names)
        pair = (names.index(ITEM_WINE), names.index(ITEM_CHOCOLATE))
        assert (min(pair), max(pair)) in cons.must_link

    def test_three_items_kept_pairwise_apart(self):
        cons = warehouse_constraints(catalog_with_specials())
        assert len(cons.cannot_link) == 3

    def test_yogurt_and_fruit_rules_are_jointly_satisfiable(self):
        names = catalog_with_specials()
        cons = warehouse_constraints(names)
        allowed = cons.allowed_map()
        cooler = DEFAULT_SECTIONS.index("cooler")
        yogurt = allowed[names.index("yogurt")]
        fruit = allowed[names.index("tropical fruit")]
        assert yogurt == {cooler}
        assert cooler not in fruit
        assert len(fruit) == len(DEFAULT_SECTIONS) - 1

    def test_rules_valid_at_full_scale(self):
        ts = synthetic_market_basket()
        cons = warehouse_constraints(ts)
        validate_constraints(PartitionSpec.equi(169, 13), cons)

    def test_unknown_item_and_section(self):
        with pytest.raises(UnknownItem):
            warehouse_constraints(("bread", "jam"))
        with pytest.raises(UnknownSection):
            warehouse_constraints(
                catalog_with_specials(), sections=("north", "south")
            )


class TestTripCost:
    def test_three_sections_costs_eight(self):
        labels = (0, 1, 2, 2)
        assert trip_cost(labels, (0, 1, 2)) == 8

    def test_single_section_costs_two(self):
        assert trip_cost((3, 3, 3), (0, 1, 2)) == 2

    def test_matches_brute_recount(self):
        rng = np.random.default_rng(23)
        labels = tuple(int(x) for x in rng.integers(0, 5, size=30))
        for _ in range(40):
            size = int(rng.integers(1, 9))
            txn = tuple(int(i) for i in rng.choice(30, size=size, replace=False))
            distinct = len({labels[i] for i in txn})
            assert trip_cost(labels, txn) == 2**distinct

    def test_unassigned_item(self):
        with pytest.raises(UnassignedItem):
            trip_cost((0, 1), (0, 5))
        with pytest.raises(DomainError):
            trip_cost((0, 1), ())


class TestSyntheticCorpus:
    def test_documented_scale_and_size_moments(self):
        ts = synthetic_market_basket()
        assert len(ts) == 9835
        assert ts.item_count == 169
        sizes = ts.sizes()
        assert abs(sizes.mean() - 4.4) <= 0.1
        assert abs(sizes.std() - 3.5) <= 0.1
        assert sizes.max() <= 32
        assert sizes.min() >= 1

    def test_every_item_appears(self):
        ts = synthetic_market_basket()
        used = set()
        for txn in ts.transactions:
            used.update(txn)
        assert used == set(range(169))

    def test_deterministic_for_a_seed(self):
        assert synthetic_market_basket(seed=5) == synthetic_market_basket(seed=5)
        assert synthetic_market_basket(seed=5) != synthetic_market_basket(seed=6)

    def test_planted_structure_is_feasible_under_rules(self):
        ts, home = synthetic_market_basket(return_structure=True)
        spec = PartitionSpec.equi(169, 13)
        cons = warehouse_constraints(ts)
        assert is_feasible(spec, cons, home)

    def test_planted_signal_dominates_co_purchase_counts(self):
        # within-section pairs must be observed more often than cross-section
        ts, home = synthetic_market_basket(return_structure=True)
        same = 0
        diff = 0
        for txn in ts.transactions:
            for i, j in itertools.combinations(sorted(txn), 2):
                if home[i] == home[j]:
                    same += 1
                else:
                    diff += 1
        n_same_pairs = 13 * (13 * 12 // 2)
        n_diff_pairs = 169 * 168 // 2 - n_same_pairs
        assert same / n_same_pairs > 5 * (diff / n_diff_pairs)

    def test_round_trip_through_file(self, tmp_path):
        ts = synthetic_market_basket(n_transactions=200, seed=8)
        path = tmp_path / "synthetic.txt"
        save_transactions(ts, path)
        back = load_transactions(path)
        assert len(back) == len(ts)
        assert set(back.items) == set(ts.items)
        original = {frozenset(ts.items[i] for i in t) for t in ts.transactions}
        loaded = {frozenset(back.items[i] for i in t) for t in back.transactions}
        assert original == loaded
