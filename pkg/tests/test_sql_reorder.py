"""Table serialization orderings and prefix-cache hit rate (PHR)."""

import pytest

from sysevolve.core import derive_rng
from sysevolve.sql_reorder import (
    Ordering,
    OrderingError,
    Table,
    brute_force_best_phr,
    compute_phr,
    dump_ordering,
    evolved_reorder,
    generate_table,
    identity_ordering,
    load_ordering,
    load_table,
    quick_greedy,
    save_table,
    serialize_row,
    verify_semantics,
)

# tiny tables where the exhaustive oracle is affordable
TINY_FIXTURES = [
    Table(("a", "b"), (("x", "y"), ("x", "y"), ("x", "z"))),
    Table(("a", "b", "c"), (("p", "q", "r"), ("p", "q", "r"), ("p", "q", "s"), ("t", "q", "s"))),
    Table(("a", "b", "c"), (("u", "v", "w"),) * 3),
    Table(("a", "b"), (("x", "y"), ("x", "y"), ("z", "w"), ("z", "w"))),
    Table(("a", "b"), (("k1", "b1"), ("k1", "b2"), ("k1", "b3"))),
    Table(("a", "b"), (("q", "r"),) * 4),
]


# ---------------------------------------------------------------------------
# structure and metric


def test_table_rejects_ragged_rows():
    with pytest.raises(ValueError):
        Table(("a", "b"), (("x",),))


def test_serialize_row_interleaves_columns_and_values():
    table = Table(("a", "b"), (("x", "y"),))
    assert serialize_row(table, 0, (0, 1)) == ["a", "x", "b", "y"]
    assert serialize_row(table, 0, (1, 0)) == ["b", "y", "a", "x"]


def test_phr_hand_values():
    identical = Table(("a", "b"), (("x", "y"), ("x", "y")))
    assert compute_phr(identical, identity_ordering(identical)) == pytest.approx(1.0)

    last_differs = Table(("a", "b"), (("x", "y"), ("x", "z")))
    assert compute_phr(last_differs, identity_ordering(last_differs)) == pytest.approx(0.75)

    # third row still shares the leading column token "a": (4 + 1) / 8
    mixed = Table(("a", "b"), (("x", "y"), ("x", "y"), ("q", "r")))
    assert compute_phr(mixed, identity_ordering(mixed)) == pytest.approx(0.625)


def test_phr_zero_for_short_tables():
    single = Table(("a",), (("x",),))
    assert compute_phr(single, identity_ordering(single)) == 0.0


def test_ordering_validation():
    table = Table(("a", "b"), (("x", "y"), ("z", "w")))
    with pytest.raises(OrderingError):
        Ordering((0, 0), ((0, 1), (0, 1))).validate(table)
    with pytest.raises(OrderingError):
        Ordering((0, 1), ((0, 0), (0, 1))).validate(table)
    with pytest.raises(OrderingError):
        Ordering((0, 1), ((0, 1),)).validate(table)


def test_verify_semantics_accepts_valid_and_rejects_invalid():
    table = Table(("a", "b"), (("x", "y"), ("z", "w")))
    assert verify_semantics(table, Ordering((1, 0), ((1, 0), (0, 1))))
    # dropping a row (duplicate index) must fail
    assert not verify_semantics(table, Ordering((0, 0), ((0, 1), (0, 1))))


# ---------------------------------------------------------------------------
# policies


def test_quick_greedy_perfect_on_identical_rows():
    table = Table(("a", "b"), (("q", "r"),) * 4)
    ordering = quick_greedy(table)
    assert verify_semantics(table, ordering)
    assert compute_phr(table, ordering) == pytest.approx(1.0)


def test_evolved_identity_without_duplicates():
    table = Table(("a", "b"), (("x", "y"), ("z", "w")))
    assert evolved_reorder(table) == identity_ordering(table)


def test_evolved_weight_ordering_hand_example():
    # "yy" is the only duplicated value; weight puts column b first, and the
    # second row keeps the matching prefix (b, yy) in place
    table = Table(("a", "b"), (("x", "yy"), ("z", "yy")))
    ordering = evolved_reorder(table)
    assert ordering.field_perms[0] == (1, 0)
    assert ordering.field_perms[1] == (1, 0)
    # prefix [b, yy, a] of four tokens is shared
    assert compute_phr(table, ordering) == pytest.approx(0.75)


def test_empty_table_policies():
    table = Table(("a",), ())
    assert quick_greedy(table) == Ordering((), ())
    assert evolved_reorder(table) == Ordering((), ())


@pytest.mark.parametrize("policy", [quick_greedy, evolved_reorder])
def test_policies_preserve_semantics_on_random_tables(policy):
    rng = derive_rng(19, f"sem_{policy.__name__}")
    for _ in range(100):
        table = generate_table(
            rng,
            num_rows=int(rng.integers(1, 30)),
            num_cols=int(rng.integers(1, 6)),
            vocab_size=12,
            repeat_prob=float(rng.uniform(0.2, 0.8)),
        )
        ordering = policy(table)
        assert verify_semantics(table, ordering)


def test_evolved_chunking_matches_unchunked_semantics():
    rng = derive_rng(29, "chunk")
    table = generate_table(rng, 50, 4, vocab_size=8)
    small_chunks = evolved_reorder(table, base_cutoff=5)
    assert verify_semantics(table, small_chunks)


@pytest.mark.parametrize("table", TINY_FIXTURES)
def test_policies_near_optimal_on_tiny_fixtures(table):
    optimal = brute_force_best_phr(table)
    for policy in (quick_greedy, evolved_reorder):
        ordering = policy(table)
        assert verify_semantics(table, ordering)
        assert compute_phr(table, ordering) >= 0.8 * optimal


def test_brute_force_refuses_large_tables():
    rng = derive_rng(1, "big")
    with pytest.raises(ValueError):
        brute_force_best_phr(generate_table(rng, 6, 3))


# ---------------------------------------------------------------------------
# generation and files


def test_generate_table_deterministic():
    a = generate_table(derive_rng(5, "g"), 20, 3)
    b = generate_table(derive_rng(5, "g"), 20, 3)
    assert a == b


def test_table_file_round_trip(tmp_path):
    table = generate_table(derive_rng(6, "io"), 12, 3)
    path = tmp_path / "table.csv"
    save_table(path, table)
    assert load_table(path) == table


def test_ordering_file_round_trip(tmp_path):
    table = generate_table(derive_rng(7, "ord"), 10, 3)
    ordering = evolved_reorder(table)
    path = tmp_path / "ordering.jsonl"
    dump_ordering(path, ordering)
    assert load_ordering(path) == ordering
