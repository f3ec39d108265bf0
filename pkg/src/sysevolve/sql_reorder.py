"""Row and field reordering of string tables to maximize the prefix-cache
hit rate (PHR) of rows serialized as [column, value, column, value, ...]
token sequences.

Two policies: the recursive grouping heuristic (group rows by the highest
weight shared value, weight = squared value length x (count - 1)) and the
flat prefix-aware policy (single global count pass, halving recursion down
to a base cutoff, then a per-row continuity heuristic).
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass
from itertools import permutations, product
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class OrderingError(Exception):
    """A permutation in an Ordering is not a bijection for its table."""


@dataclass(frozen=True)
class Table:
    columns: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]

    def __post_init__(self) -> None:
        for i, row in enumerate(self.rows):
            if len(row) != len(self.columns):
                raise ValueError(f"row {i} has {len(row)} cells, expected {len(self.columns)}")

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    @property
    def num_cols(self) -> int:
        return len(self.columns)


@dataclass(frozen=True)
class Ordering:
    """row_perm[i] = original index of the i-th output row; field_perms[i] is
    the column order used when serializing that output row."""

    row_perm: tuple[int, ...]
    field_perms: tuple[tuple[int, ...], ...]

    def validate(self, table: Table) -> None:
        if sorted(self.row_perm) != list(range(table.num_rows)):
            raise OrderingError("row_perm is not a permutation of the row indices")
        if len(self.field_perms) != table.num_rows:
            raise OrderingError("need one field permutation per output row")
        expect = list(range(table.num_cols))
        for i, fp in enumerate(self.field_perms):
            if sorted(fp) != expect:
                raise OrderingError(f"field_perms[{i}] is not a column permutation")


def identity_ordering(table: Table) -> Ordering:
    cols = tuple(range(table.num_cols))
    return Ordering(tuple(range(table.num_rows)), tuple(cols for _ in range(table.num_rows)))


def serialize_row(table: Table, row_idx: int, field_perm: Sequence[int]) -> list[str]:
    row = table.rows[row_idx]
    out: list[str] = []
    for c in field_perm:
        out.append(table.columns[c])
        out.append(row[c])
    return out


def _lcp(a: Sequence[str], b: Sequence[str]) -> int:
    n = min(len(a), len(b))
    for i in range(n):
        if a[i] != b[i]:
            return i
    return n


def compute_phr(table: Table, ordering: Ordering) -> float:
    """Shared-prefix tokens between consecutive serialized rows, divided by
    the token length of every row after the first."""
    ordering.validate(table)
    if table.num_rows < 2:
        return 0.0
    shared = 0
    total = 0
    prev = serialize_row(table, ordering.row_perm[0], ordering.field_perms[0])
    for i in range(1, table.num_rows):
        cur = serialize_row(table, ordering.row_perm[i], ordering.field_perms[i])
        shared += _lcp(prev, cur)
        total += len(cur)
        prev = cur
    return shared / total if total else 0.0


def verify_semantics(table: Table, ordering: Ordering) -> bool:
    """True iff applying the ordering preserves the multiset of row mappings."""
    try:
        ordering.validate(table)
    except OrderingError:
        return False
    original = Counter(table.rows)
    reordered: Counter = Counter()
    for pos, r in enumerate(ordering.row_perm):
        fp = ordering.field_perms[pos]
        cells = [""] * table.num_cols
        for c in fp:
            cells[c] = table.rows[r][c]
        reordered[tuple(cells)] += 1
    return original == reordered


# ---------------------------------------------------------------------------
# recursive grouping policy


_MAX_DEPTH = 120


def quick_greedy(table: Table) -> Ordering:
    """Recursively peel off the row group sharing the heaviest value."""
    if table.num_rows == 0:
        return Ordering((), ())
    all_cols = tuple(range(table.num_cols))
    out_rows: list[int] = []
    out_fields: list[tuple[int, ...]] = []

    def fallback(rows: list[int], placed: dict[int, list[int]]) -> None:
        for r in rows:
            prefix = placed[r]
            rest = [c for c in all_cols if c not in prefix]
            out_rows.append(r)
            out_fields.append(tuple(prefix + rest))

    def rec(rows: list[int], placed: dict[int, list[int]], depth: int) -> None:
        if not rows:
            return
        if depth > _MAX_DEPTH:
            fallback(rows, placed)
            return
        counts: Counter = Counter()
        for r in rows:
            done = set(placed[r])
            for c in all_cols:
                if c not in done:
                    counts[table.rows[r][c]] += 1
        v_star = None
        best_w = 0.0
        for v, cnt in counts.items():
            w = (len(v) ** 2) * (cnt - 1)
            if w > best_w:
                best_w = w
                v_star = v
        if v_star is None:
            fallback(rows, placed)
            return
        group: list[int] = []
        rest: list[int] = []
        for r in rows:
            done = set(placed[r])
            matched = [c for c in all_cols if c not in done and table.rows[r][c] == v_star]
            if matched:
                placed[r] = placed[r] + matched
                group.append(r)
            else:
                rest.append(r)
        rec(group, placed, depth + 1)
        rec(rest, placed, depth + 1)

    rec(list(range(table.num_rows)), {r: [] for r in range(table.num_rows)}, 0)
    return Ordering(tuple(out_rows), tuple(out_fields))


# ---------------------------------------------------------------------------
# flat prefix-aware policy


DEFAULT_BASE_CUTOFF = 4000


def evolved_reorder(table: Table, base_cutoff: int = DEFAULT_BASE_CUTOFF) -> Ordering:
    """One global count pass; halve only while the chunk exceeds the cutoff;
    below it, keep each row's field order aligned with the previous output
    row: the longest still-matching prefix of the previous permutation stays
    in place, and remaining columns are sorted by global duplication weight
    (squared value length x (count - 1)) so heavy shared values sit early for
    the rows that follow."""
    if table.num_rows == 0:
        return Ordering((), ())
    counts = Counter(cell for row in table.rows for cell in row)
    weight = {v: (len(v) ** 2) * (cnt - 1) for v, cnt in counts.items()}
    if not any(cnt > 1 for cnt in counts.values()):
        return identity_ordering(table)

    num_cols = table.num_cols
    field_perms: list[tuple[int, ...]] = []
    prev_row: tuple[str, ...] | None = None
    prev_perm: list[int] = list(range(num_cols))

    def chunk(lo: int, hi: int) -> None:
        nonlocal prev_row, prev_perm
        if hi - lo > base_cutoff:
            mid = (lo + hi) // 2
            chunk(lo, mid)
            chunk(mid, hi)
            return
        for r in range(lo, hi):
            row = table.rows[r]
            if prev_row is None:
                order = sorted(range(num_cols), key=lambda c: -weight[row[c]])
            else:
                k = 0
                while k < num_cols and row[prev_perm[k]] == prev_row[prev_perm[k]]:
                    k += 1
                head = prev_perm[:k]
                in_head = set(head)
                rest = sorted(
                    (c for c in range(num_cols) if c not in in_head),
                    key=lambda c: -weight[row[c]],
                )
                order = head + rest
            field_perms.append(tuple(order))
            prev_row = row
            prev_perm = order

    chunk(0, table.num_rows)
    return Ordering(tuple(range(table.num_rows)), tuple(field_perms))


# ---------------------------------------------------------------------------
# exhaustive oracle and synthetic tables


def brute_force_best_phr(table: Table, max_rows: int = 4, max_cols: int = 3) -> float:
    """Exact best PHR over every row permutation x per-row field permutation.

    Only for tiny fixtures; the search space is n! x (m!)^n.
    """
    n, m = table.num_rows, table.num_cols
    if n > max_rows or m > max_cols:
        raise ValueError(f"table {n}x{m} too large for exhaustive search")
    field_options = list(permutations(range(m)))
    best = 0.0
    for row_perm in permutations(range(n)):
        for fields in product(field_options, repeat=n):
            phr = compute_phr(table, Ordering(row_perm, fields))
            if phr > best:
                best = phr
    return best


def generate_table(
    rng: np.random.Generator,
    num_rows: int,
    num_cols: int,
    *,
    vocab_size: int = 50,
    zipf_s: float = 1.3,
    repeat_prob: float = 0.6,
) -> Table:
    """Seeded tables with controllable duplication: cell values drawn from a
    Zipf vocabulary, and each row repeating the previous row's value per
    column with probability ``repeat_prob`` (local structure)."""
    if num_rows < 1 or num_cols < 1:
        raise ValueError("table must have at least one row and column")
    ranks = np.arange(1, vocab_size + 1, dtype=np.float64)
    probs = ranks**-zipf_s
    probs /= probs.sum()
    vocab = [f"v{str(i) * (1 + i % 4)}" for i in range(vocab_size)]
    columns = tuple(f"col{c}" for c in range(num_cols))
    rows: list[tuple[str, ...]] = []
    prev: list[str] | None = None
    for _ in range(num_rows):
        cells: list[str] = []
        for c in range(num_cols):
            if prev is not None and rng.random() < repeat_prob:
                cells.append(prev[c])
            else:
                cells.append(vocab[int(rng.choice(vocab_size, p=probs))])
        rows.append(tuple(cells))
        prev = cells
    return Table(columns, tuple(rows))


# ---------------------------------------------------------------------------
# file formats


def save_table(path: str | Path, table: Table) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(table.columns)
        w.writerows(table.rows)


def load_table(path: str | Path) -> Table:
    with open(path, newline="") as f:
        r = csv.reader(f)
        columns = tuple(next(r))
        rows = tuple(tuple(row) for row in r)
    return Table(columns, rows)


def dump_ordering(path: str | Path, ordering: Ordering) -> None:
    with open(path, "w") as f:
        for pos, r in enumerate(ordering.row_perm):
            f.write(json.dumps({"row": r, "fields": list(ordering.field_perms[pos])}) + "\n")


def load_ordering(path: str | Path) -> Ordering:
    rows: list[int] = []
    fields: list[tuple[int, ...]] = []
    with open(path) as f:
        for line in f:
            rec = json.loads(line)
            rows.append(rec["row"])
            fields.append(tuple(rec["fields"]))
    return Ordering(tuple(rows), tuple(fields))
