"""Market-basket ingestion for the warehouse experiments.

Covers the file format for co-purchase transactions, fold splitting for
cross-validation, expansion of multi-item transactions into pairwise
placement requests, the standard warehouse placement rules, the trip
cost metric, and a synthetic basket generator with a planted section
structure for end-to-end benchmarking.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import ConstraintSet, _labels_of
from .errors import (
    DomainError,
    EmptyFile,
    IndexOutOfRange,
    LengthMismatch,
    ParseError,
    UnassignedItem,
    UnknownItem,
    UnknownSection,
)


# ---------------------------------------------------------------------------
# transactions


@dataclass(frozen=True)
class TransactionSet:
    """An ordered item catalog plus transactions over catalog indices.

    ``items`` is the catalog in first-appearance order; each transaction is a
    non-empty frozenset of catalog indices, so duplicates within a basket are
    impossible by construction.
    """

    items: tuple[str, ...]
    transactions: tuple[frozenset, ...]

    def __post_init__(self):
        items = tuple(str(name) for name in self.items)
        if len(set(items)) != len(items):
            raise DomainError("catalog contains duplicate item names")
        object.__setattr__(self, "items", items)
        n = len(items)
        txns = []
        for k, txn in enumerate(self.transactions):
            members = frozenset(int(i) for i in txn)
            if not members:
                raise DomainError(f"transaction {k} is empty")
            for idx in members:
                if not 0 <= idx < n:
                    raise IndexOutOfRange(
                        f"transaction {k} references item {idx}, catalog has {n}"
                    )
            txns.append(members)
        object.__setattr__(self, "transactions", tuple(txns))
        object.__setattr__(
            self, "_index", {name: i for i, name in enumerate(items)}
        )

    def __len__(self) -> int:
        return len(self.transactions)

    @property
    def item_count(self) -> int:
        return len(self.items)

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownItem(name) from None

    def sizes(self) -> np.ndarray:
        return np.array([len(t) for t in self.transactions], dtype=np.int64)


def parse_transaction_lines(lines) -> TransactionSet:
    """Parse an iterable of text lines into a TransactionSet.

    One transaction per line, comma-separated item names.  Text after ``#``
    is a comment; blank lines are skipped; duplicate names within a line
    collapse to one membership.
    """
    names: list[str] = []
    index: dict[str, int] = {}
    txns: list[frozenset] = []
    for line_no, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        members = set()
        for token in text.split(","):
            name = token.strip()
            if not name:
                raise ParseError("empty item name", line=line_no)
            idx = index.get(name)
            if idx is None:
                idx = len(names)
                index[name] = idx
                names.append(name)
            members.add(idx)
        txns.append(frozenset(members))
    if not txns:
        raise EmptyFile("no transactions found")
    return TransactionSet(tuple(names), tuple(txns))


def load_transactions(path) -> TransactionSet:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_transaction_lines(fh)


def save_transactions(ts: TransactionSet, path) -> None:
    """Write one comma-separated line per transaction, members in index order."""
    with open(path, "w", encoding="utf-8") as fh:
        for txn in ts.transactions:
            fh.write(",".join(ts.items[i] for i in sorted(txn)))
            fh.write("\n")


# ---------------------------------------------------------------------------
# folds


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of transactions to k cross-validation folds.

    One fold (``train_fold``) supplies training requests; the rest are held
    out for cost evaluation.
    """

    k: int
    fold_of: tuple[int, ...]
    train_fold: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise DomainError("fold count must be positive")
        if not 0 <= self.train_fold < self.k:
            raise DomainError("train_fold outside fold range")
        fold_of = tuple(int(f) for f in self.fold_of)
        if any(not 0 <= f < self.k for f in fold_of):
            raise DomainError("fold label outside range")
        object.__setattr__(self, "fold_of", fold_of)
        counts = np.bincount(np.array(fold_of, dtype=np.int64), minlength=self.k)
        if len(fold_of) and counts.max() - counts.min() > 1:
            raise DomainError("folds must have near-equal sizes")

    @classmethod
    def draw(cls, n_transactions: int, k: int = 5, seed=None, train_fold: int = 0):
        """Shuffled round-robin split: fold sizes differ by at most one."""
        if n_transactions < 1:
            raise DomainError("need at least one transaction")
        rng = np.random.default_rng(seed)
        perm = rng.permutation(n_transactions)
        fold = np.empty(n_transactions, dtype=np.int64)
        fold[perm] = np.arange(n_transactions) % k
        return cls(k, tuple(int(f) for f in fold), train_fold)

    def train_indices(self) -> tuple:
        return tuple(
            i for i, f in enumerate(self.fold_of) if f == self.train_fold
        )

    def test_indices(self) -> tuple:
        return tuple(
            i for i, f in enumerate(self.fold_of) if f != self.train_fold
        )


def write_folds(plan: FoldPlan, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("transaction_id,fold\n")
        for i, f in enumerate(plan.fold_of):
            fh.write(f"{i},{f}\n")


def read_folds(path, k=None, train_fold: int = 0) -> FoldPlan:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "transaction_id,fold":
            raise ParseError(f"unexpected header {header!r}", line=1)
        for line_no, raw in enumerate(fh, start=2):
            text = raw.strip()
            if not text:
                continue
            parts = text.split(",")
            if len(parts) != 2:
                raise ParseError("expected transaction_id,fold", line=line_no)
            try:
                rows.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise ParseError("non-integer field", line=line_no) from None
    if not rows:
        raise EmptyFile("no fold rows found")
    rows.sort()
    if [i for i, _ in rows] != list(range(len(rows))):
        raise ParseError("transaction ids must cover 0..n-1 exactly")
    fold_of = tuple(f for _, f in rows)
    if k is None:
        k = max(fold_of) + 1
    return FoldPlan(k, fold_of, train_fold)


# ---------------------------------------------------------------------------
# request expansion

REQUEST_MODES = ("all_pairs", "one_random_pair")


def transactions_to_requests(
    ts: TransactionSet,
    fold_plan: FoldPlan | None = None,
    mode: str = "all_pairs",
    seed=None,
) -> list:
    """Expand training-fold transactions into a shuffled pairwise request list.

    ``all_pairs`` emits every unordered item pair of each transaction;
    ``one_random_pair`` draws a single uniform pair per transaction.
    Singleton transactions contribute nothing.  With no fold plan, every
    transaction is treated as training data.
    """
    if mode not in REQUEST_MODES:
        raise DomainError(f"mode must be one of {REQUEST_MODES}, got {mode!r}")
    if fold_plan is None:
        chosen = range(len(ts.transactions))
    else:
        if len(fold_plan.fold_of) != len(ts.transactions):
            raise LengthMismatch(
                f"fold plan covers {len(fold_plan.fold_of)} transactions, "
                f"set has {len(ts.transactions)}"
            )
        chosen = fold_plan.train_indices()
    rng = np.random.default_rng(seed)
    requests: list = []
    for t in chosen:
        members = sorted(ts.transactions[t])
        if len(members) < 2:
            continue
        if mode == "all_pairs":
            requests.extend(itertools.combinations(members, 2))
        else:
            a, b = rng.choice(len(members), size=2, replace=False)
            i, j = members[a], members[b]
            requests.append((min(i, j), max(i, j)))
    rng.shuffle(requests)
    return requests


# ---------------------------------------------------------------------------
# warehouse rules

# reserved section labels; the remaining ten are ordinary shelving zones
DEFAULT_SECTIONS = (
    "entrance",
    "counter",
    "cooler",
    "produce",
    "bakery",
    "pantry",
    "beverages",
    "frozen",
    "household",
    "snacks",
    "deli",
    "bulk",
    "seasonal",
)

ITEM_BAGS = "shopping bags"
ITEM_MILK = "whole milk"
ITEM_ROLLS = "rolls/buns"
ITEM_FRUIT = "tropical fruit"
ITEM_WINE = "white wine"
ITEM_CHOCOLATE = "specialty chocolate"
ITEM_YOGURT = "yogurt"

SPECIAL_ITEMS = (
    ITEM_BAGS,
    ITEM_MILK,
    ITEM_ROLLS,
    ITEM_FRUIT,
    ITEM_WINE,
    ITEM_CHOCOLATE,
    ITEM_YOGURT,
)


def warehouse_constraints(catalog, sections=None) -> ConstraintSet:
    """Standard placement rules for the warehouse benchmark.

    Encodes: shopping bags near the entrance or counter; whole milk,
    rolls/buns and tropical fruit in pairwise different sections; white wine
    stocked with specialty chocolate; yogurt only in the cooler; tropical
    fruit anywhere but the cooler.
    """
    if isinstance(catalog, TransactionSet):
        names = catalog.items
    else:
        names = tuple(str(n) for n in catalog)
    index = {name: i for i, name in enumerate(names)}
    section_names = DEFAULT_SECTIONS if sections is None else tuple(sections)
    sec_index = {name: r for r, name in enumerate(section_names)}

    def item(name: str) -> int:
        try:
            return index[name]
        except KeyError:
            raise UnknownItem(name) from None

    def sec(name: str) -> int:
        try:
            return sec_index[name]
        except KeyError:
            raise UnknownSection(name) from None

    every = frozenset(range(len(section_names)))
    allowed = {
        item(ITEM_BAGS): frozenset({sec("entrance"), sec("counter")}),
        item(ITEM_YOGURT): frozenset({sec("cooler")}),
        item(ITEM_FRUIT): every - {sec("cooler")},
    }
    apart = (item(ITEM_MILK), item(ITEM_ROLLS), item(ITEM_FRUIT))
    cannot = {(min(a, b), max(a, b)) for a, b in itertools.combinations(apart, 2)}
    must = {
        (
            min(item(ITEM_WINE), item(ITEM_CHOCOLATE)),
            max(item(ITEM_WINE), item(ITEM_CHOCOLATE)),
        )
    }
    return ConstraintSet(
        must_link=frozenset(must),
        cannot_link=frozenset(cannot),
        allowed=allowed,
    )


def trip_cost(assignment, transaction) -> int:
    """Cost of collecting one basket: doubles per distinct section visited."""
    labels = _labels_of(assignment)
    members = tuple(transaction)
    if not members:
        raise DomainError("cannot cost an empty transaction")
    visited = set()
    for idx in members:
        idx = int(idx)
        if not 0 <= idx < len(labels):
            raise UnassignedItem(f"item {idx} has no assigned section")
        visited.add(labels[idx])
    return 2 ** len(visited)


# ---------------------------------------------------------------------------
# synthetic corpus

_FILLER_MODIFIERS = (
    "canned",
    "fresh",
    "frozen",
    "dried",
    "smoked",
    "pickled",
    "roasted",
    "instant",
    "bottled",
)
_FILLER_NOUNS = (
    "beans",
    "corn",
    "peas",
    "noodles",
    "rice",
    "coffee",
    "tea",
    "juice",
    "soup",
    "herring",
    "ham",
    "turkey",
    "onions",
    "berries",
    "nuts",
    "spread",
    "bread",
    "cider",
)

# home sections for the rule-bearing items; wine and chocolate share one so
# the must rule agrees with the planted structure, and milk/rolls/fruit are
# spread out so the apart rules do too
_SPECIAL_HOMES = {
    ITEM_BAGS: 0,
    ITEM_YOGURT: 2,
    ITEM_FRUIT: 3,
    ITEM_MILK: 4,
    ITEM_ROLLS: 5,
    ITEM_WINE: 6,
    ITEM_CHOCOLATE: 6,
}

DEFAULT_BASKET_SEED = 56013


def synthetic_market_basket(
    n_transactions: int = 9835,
    n_sections: int = 13,
    section_size: int = 13,
    theme_weight: float = 0.7,
    mean_extra: float = 3.45,
    std_extra: float = 3.6,
    max_size: int = 32,
    seed=DEFAULT_BASKET_SEED,
    return_structure: bool = False,
):
    """Generate a co-purchase corpus with a planted section structure.

    Each basket draws a theme section; members come from that section with
    probability ``theme_weight`` and from the whole catalog otherwise, so
    co-purchase counts carry a recoverable partition signal.  Basket sizes
    follow one plus a negative binomial matched to the requested mean and
    standard deviation, clipped at ``max_size``.  Every item is guaranteed
    to appear in at least one basket.  With ``return_structure`` the planted
    home section of every item is returned alongside the data.
    """
    n_items = n_sections * section_size
    if n_transactions < 1:
        raise DomainError("need at least one transaction")
    if not 0.0 <= theme_weight <= 1.0:
        raise DomainError("theme_weight must lie in [0, 1]")
    if max_size < 1 or max_size > n_items:
        raise DomainError("max_size must lie in [1, catalog size]")
    if std_extra**2 <= mean_extra:
        raise DomainError("std_extra too small for a negative binomial")

    fillers = [
        f"{mod} {noun}"
        for mod in _FILLER_MODIFIERS
        for noun in _FILLER_NOUNS
    ]
    names = list(SPECIAL_ITEMS) + fillers
    if len(names) < n_items:
        names += [f"aisle good {k:03d}" for k in range(n_items - len(names))]
    names = names[:n_items]
    if len(set(names)) != len(names):
        raise DomainError("synthetic catalog names collide")

    home = np.full(n_items, -1, dtype=np.int64)
    capacity = np.full(n_sections, section_size, dtype=np.int64)
    for i, name in enumerate(names):
        if name in _SPECIAL_HOMES:
            home[i] = _SPECIAL_HOMES[name]
            capacity[home[i]] -= 1
    fill = 0
    for i in range(n_items):
        if home[i] >= 0:
            continue
        while capacity[fill] == 0:
            fill = (fill + 1) % n_sections
        home[i] = fill
        capacity[fill] -= 1
    section_items = [np.flatnonzero(home == r) for r in range(n_sections)]

    # negative binomial with mean m and variance s^2: shape m^2/(s^2-m)
    shape = mean_extra**2 / (std_extra**2 - mean_extra)
    prob = shape / (shape + mean_extra)
    rng = np.random.default_rng(seed)
    sizes = 1 + rng.negative_binomial(shape, prob, size=n_transactions)
    np.clip(sizes, 1, max_size, out=sizes)
    themes = rng.integers(0, n_sections, size=n_transactions)

    txns = []
    for t in range(n_transactions):
        want = int(sizes[t])
        pool = section_items[themes[t]]
        members: set = set()
        while len(members) < want:
            if rng.random() < theme_weight:
                members.add(int(pool[rng.integers(len(pool))]))
            else:
                members.add(int(rng.integers(n_items)))
        txns.append(members)

    used = set()
    for members in txns:
        used.update(members)
    for i in range(n_items):
        if i in used:
            continue
        # keep size stats intact: grow a basket only when under the cap
        while True:
            t = int(rng.integers(n_transactions))
            if len(txns[t]) < max_size:
                txns[t].add(i)
                break

    ts = TransactionSet(tuple(names), tuple(frozenset(m) for m in txns))
    if return_structure:
        return ts, tuple(int(r) for r in home)
    return ts
