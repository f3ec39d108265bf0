"""Transaction scheduling for makespan minimization under unit-time key
conflicts: the makespan simulator, online shortest-makespan-first (SMF),
the offline insertion/hill-climb policy, a random baseline, and an exact
brute-force oracle for tiny workloads.

Conflict rule: a write to a key must start after every earlier read and
write of that key has finished; a read only after every earlier write.
Transactions execute their ops back-to-back from t_start on unbounded
workers; only key conflicts constrain the start tick.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import permutations
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit


class SizeError(Exception):
    """Workload too large for exhaustive search."""


READ = 0
WRITE = 1


@dataclass(frozen=True)
class Transaction:
    ops: tuple[tuple[str, str], ...]  # ("r"|"w", key)

    def __post_init__(self) -> None:
        if not self.ops:
            raise ValueError("a transaction needs at least one op")
        for kind, _ in self.ops:
            if kind not in ("r", "w"):
                raise ValueError(f"op kind must be 'r' or 'w', got {kind!r}")

    @property
    def write_count(self) -> int:
        return sum(1 for kind, _ in self.ops if kind == "w")


@dataclass
class MakespanReport:
    makespan: int
    spans: list[tuple[int, int]]  # (t_start, t_end) per transaction, workload order


# ---------------------------------------------------------------------------
# compiled workload representation


@dataclass(frozen=True)
class CompiledWorkload:
    """Flat integer arrays for the jit cost kernel; keys are int-mapped."""

    op_kind: np.ndarray  # int8, 0 read / 1 write
    op_key: np.ndarray  # int64
    txn_start: np.ndarray  # int64, offsets; len == n + 1
    num_keys: int

    @property
    def num_txns(self) -> int:
        return len(self.txn_start) - 1


def compile_workload(txns: Sequence[Transaction]) -> CompiledWorkload:
    key_ids: dict[str, int] = {}
    kinds: list[int] = []
    keys: list[int] = []
    offsets = [0]
    for txn in txns:
        for kind, key in txn.ops:
            kinds.append(WRITE if kind == "w" else READ)
            keys.append(key_ids.setdefault(key, len(key_ids)))
        offsets.append(len(kinds))
    return CompiledWorkload(
        op_kind=np.asarray(kinds, dtype=np.int8),
        op_key=np.asarray(keys, dtype=np.int64),
        txn_start=np.asarray(offsets, dtype=np.int64),
        num_keys=max(1, len(key_ids)),
    )


@njit(cache=True)
def _txn_start_tick(op_kind, op_key, lo, hi, read_end, write_end):
    t_start = 0
    for j in range(lo, hi):
        k = op_key[j]
        off = j - lo
        if op_kind[j] == 1:
            earliest = max(read_end[k], write_end[k])
        else:
            earliest = write_end[k]
        if earliest - off > t_start:
            t_start = earliest - off
    return t_start


@njit(cache=True)
def _apply_txn(op_kind, op_key, lo, hi, t_start, read_end, write_end):
    for j in range(lo, hi):
        k = op_key[j]
        end = t_start + (j - lo) + 1
        if op_kind[j] == 1:
            if end > write_end[k]:
                write_end[k] = end
        else:
            if end > read_end[k]:
                read_end[k] = end


@njit(cache=True)
def _seq_cost(order, op_kind, op_key, txn_start, num_keys):
    read_end = np.zeros(num_keys, dtype=np.int64)
    write_end = np.zeros(num_keys, dtype=np.int64)
    total = 0
    for idx in range(order.shape[0]):
        t = order[idx]
        lo = txn_start[t]
        hi = txn_start[t + 1]
        t_start = _txn_start_tick(op_kind, op_key, lo, hi, read_end, write_end)
        _apply_txn(op_kind, op_key, lo, hi, t_start, read_end, write_end)
        t_end = t_start + (hi - lo)
        if t_end > total:
            total = t_end
    return total


def seq_cost(cw: CompiledWorkload, order: Sequence[int]) -> int:
    arr = np.asarray(order, dtype=np.int64)
    return int(_seq_cost(arr, cw.op_kind, cw.op_key, cw.txn_start, cw.num_keys))


@njit(cache=True)
def _greedy_insertion(op_kind, op_key, txn_start, num_keys, seq, best_cost, max_steps):
    """Remove each transaction in turn and reinsert it at its cheapest
    position; scan circularly until a full lap yields no improvement or the
    step budget runs out.

    A transaction moves only when some position is strictly cheaper than the
    current makespan, insertion costs are evaluated from cached prefix
    key-states, and a partial evaluation stops as soon as it reaches the
    incumbent cost (the makespan never decreases as transactions are
    appended)."""
    n = seq.shape[0]
    if n < 2:
        return best_cost
    seq_wo = np.empty(n - 1, dtype=np.int64)
    pre_r = np.empty((n, num_keys), dtype=np.int64)
    pre_w = np.empty((n, num_keys), dtype=np.int64)
    pre_tot = np.empty(n, dtype=np.int64)
    r = np.empty(num_keys, dtype=np.int64)
    w = np.empty(num_keys, dtype=np.int64)
    since_improvement = 0
    steps = 0
    i = 0
    while since_improvement < n and steps < max_steps:
        steps += 1
        idx = 0
        for j in range(n):
            if j != i:
                seq_wo[idx] = seq[j]
                idx += 1
        t = seq[i]
        tlo = txn_start[t]
        thi = txn_start[t + 1]
        for k in range(num_keys):
            r[k] = 0
            w[k] = 0
        tot = 0
        for p in range(n - 1):
            for k in range(num_keys):
                pre_r[p, k] = r[k]
                pre_w[p, k] = w[k]
            pre_tot[p] = tot
            u = seq_wo[p]
            lo = txn_start[u]
            hi = txn_start[u + 1]
            ts = _txn_start_tick(op_kind, op_key, lo, hi, r, w)
            _apply_txn(op_kind, op_key, lo, hi, ts, r, w)
            te = ts + (hi - lo)
            if te > tot:
                tot = te
        for k in range(num_keys):
            pre_r[n - 1, k] = r[k]
            pre_w[n - 1, k] = w[k]
        pre_tot[n - 1] = tot

        best_pos = i  # reinserting at the original slot reproduces seq
        best_c = best_cost
        for pos in range(n):
            if pos == i:
                continue
            for k in range(num_keys):
                r[k] = pre_r[pos, k]
                w[k] = pre_w[pos, k]
            tot = pre_tot[pos]
            if tot >= best_c:
                continue
            ts = _txn_start_tick(op_kind, op_key, tlo, thi, r, w)
            _apply_txn(op_kind, op_key, tlo, thi, ts, r, w)
            te = ts + (thi - tlo)
            if te > tot:
                tot = te
            complete = tot < best_c
            if complete:
                for q in range(pos, n - 1):
                    u = seq_wo[q]
                    lo = txn_start[u]
                    hi = txn_start[u + 1]
                    ts = _txn_start_tick(op_kind, op_key, lo, hi, r, w)
                    _apply_txn(op_kind, op_key, lo, hi, ts, r, w)
                    te = ts + (hi - lo)
                    if te > tot:
                        tot = te
                    if tot >= best_c:
                        complete = False
                        break
            if complete and tot < best_c:
                best_c = tot
                best_pos = pos
        if best_c < best_cost:
            for j in range(best_pos):
                seq[j] = seq_wo[j]
            seq[best_pos] = t
            for j in range(best_pos, n - 1):
                seq[j + 1] = seq_wo[j]
            best_cost = best_c
            since_improvement = 0
        else:
            since_improvement += 1
        i += 1
        if i == n:
            i = 0
    return best_cost


@njit(cache=True)
def _greedy_construct(op_kind, op_key, txn_start, num_keys, n):
    """Deterministic full-width greedy: at each step append the transaction
    with the earliest finish tick, considering every unscheduled transaction.
    Ties resolve to the lowest index."""
    read_end = np.zeros(num_keys, dtype=np.int64)
    write_end = np.zeros(num_keys, dtype=np.int64)
    used = np.zeros(n, dtype=np.bool_)
    order = np.empty(n, dtype=np.int64)
    total = 0
    for step in range(n):
        best_t = -1
        best_ts = 0
        best_end = 0
        for t in range(n):
            if used[t]:
                continue
            lo = txn_start[t]
            hi = txn_start[t + 1]
            ts = _txn_start_tick(op_kind, op_key, lo, hi, read_end, write_end)
            te = ts + (hi - lo)
            if best_t == -1 or te < best_end:
                best_t = t
                best_ts = ts
                best_end = te
        lo = txn_start[best_t]
        hi = txn_start[best_t + 1]
        _apply_txn(op_kind, op_key, lo, hi, best_ts, read_end, write_end)
        used[best_t] = True
        order[step] = best_t
        if best_end > total:
            total = best_end
    return total, order


# ---------------------------------------------------------------------------
# makespan


def makespan(txns: Sequence[Transaction], schedule: Sequence[int]) -> MakespanReport:
    """Process transactions in schedule order; each op takes one tick."""
    if sorted(schedule) != list(range(len(txns))):
        raise ValueError("schedule is not a permutation of the transaction indices")
    read_end: dict[str, int] = {}
    write_end: dict[str, int] = {}
    spans: list[tuple[int, int]] = [(0, 0)] * len(txns)
    total = 0
    for t in schedule:
        ops = txns[t].ops
        t_start = 0
        for off, (kind, key) in enumerate(ops):
            if kind == "w":
                earliest = max(read_end.get(key, 0), write_end.get(key, 0))
            else:
                earliest = write_end.get(key, 0)
            t_start = max(t_start, earliest - off)
        for off, (kind, key) in enumerate(ops):
            end = t_start + off + 1
            if kind == "w":
                write_end[key] = max(write_end.get(key, 0), end)
            else:
                read_end[key] = max(read_end.get(key, 0), end)
        t_end = t_start + len(ops)
        spans[t] = (t_start, t_end)
        total = max(total, t_end)
    return MakespanReport(makespan=total, spans=spans)


# ---------------------------------------------------------------------------
# policies


def random_schedule(txns: Sequence[Transaction], rng: np.random.Generator) -> list[int]:
    return rng.permutation(len(txns)).tolist()


def smf_schedule(
    txns: Sequence[Transaction], rng: np.random.Generator, sample_size: int = 8
) -> tuple[int, list[int]]:
    """Greedy online scheduler: at each step, among a constant-size random
    sample of unscheduled transactions, append the one with the smallest
    incremental makespan; ties are broken uniformly at random."""
    if sample_size < 1:
        raise ValueError("sample_size must be >= 1")
    cw = compile_workload(txns)
    read_end = np.zeros(cw.num_keys, dtype=np.int64)
    write_end = np.zeros(cw.num_keys, dtype=np.int64)
    remaining = list(range(len(txns)))
    schedule: list[int] = []
    total_cost = 0
    while remaining:
        if len(remaining) <= sample_size:
            candidates = list(remaining)
        else:
            candidates = [remaining[i] for i in rng.choice(len(remaining), size=sample_size, replace=False)]
        best: list[tuple[int, int, int]] = []  # (t, t_start, t_end)
        best_extra = None
        for t in candidates:
            lo, hi = int(cw.txn_start[t]), int(cw.txn_start[t + 1])
            t_start = int(_txn_start_tick(cw.op_kind, cw.op_key, lo, hi, read_end, write_end))
            t_end = t_start + (hi - lo)
            extra = max(total_cost, t_end) - total_cost
            if best_extra is None or extra < best_extra:
                best_extra = extra
                best = [(t, t_start, t_end)]
            elif extra == best_extra:
                best.append((t, t_start, t_end))
        t, t_start, t_end = best[int(rng.integers(len(best)))]
        lo, hi = int(cw.txn_start[t]), int(cw.txn_start[t + 1])
        _apply_txn(cw.op_kind, cw.op_key, lo, hi, t_start, read_end, write_end)
        schedule.append(t)
        remaining.remove(t)
        total_cost += best_extra
    return total_cost, schedule


def offline_schedule(
    txns: Sequence[Transaction], rng: np.random.Generator, num_seqs: int = 10
) -> tuple[int, list[int]]:
    """Offline search: exhaustive for tiny workloads; otherwise the better of
    a sorted seed (fewest writes, then shortest) and a deterministic full-width
    greedy construction, improved by greedy reinsertion of each transaction at
    its best position, a pair-swap hill climb, and a few random restarts.
    Never returns worse than its seeds."""
    n = len(txns)
    cw = compile_workload(txns)

    if n <= 8:
        cost, seq = brute_force_optimal(txns, max_n=8)
        return cost, seq

    write_cnt = [t.write_count for t in txns]

    # 1. seeds: sorted sequence vs full-width greedy, keep the cheaper
    best_seq = sorted(range(n), key=lambda t: (write_cnt[t], len(txns[t].ops)))
    best_cost = seq_cost(cw, best_seq)
    greedy_cost, greedy_order = _greedy_construct(
        cw.op_kind, cw.op_key, cw.txn_start, cw.num_keys, n
    )
    if int(greedy_cost) < best_cost:
        best_cost = int(greedy_cost)
        best_seq = greedy_order.tolist()

    # 2. greedy insertion with a bounded step budget
    seq_arr = np.asarray(best_seq, dtype=np.int64)
    best_cost = int(
        _greedy_insertion(
            cw.op_kind, cw.op_key, cw.txn_start, cw.num_keys, seq_arr, best_cost, n
        )
    )
    best_seq = seq_arr.tolist()

    # 3. pair-swap hill climb
    if n >= 2:
        for _ in range(max(100, num_seqs * 50)):
            i, j = rng.choice(n, size=2, replace=False)
            new_seq = list(best_seq)
            new_seq[i], new_seq[j] = new_seq[j], new_seq[i]
            new_cost = seq_cost(cw, new_seq)
            if new_cost < best_cost:
                best_cost = new_cost
                best_seq = new_seq

    # 4. random restarts, keep the best
    for _ in range(num_seqs):
        seq = rng.permutation(n).tolist()
        cost = seq_cost(cw, seq)
        if cost < best_cost:
            best_cost = cost
            best_seq = seq

    return best_cost, list(best_seq)


def brute_force_optimal(txns: Sequence[Transaction], max_n: int = 9) -> tuple[int, list[int]]:
    """Exact minimum makespan; ties resolve to the lexicographically smallest
    schedule so the result is enumeration-order independent."""
    n = len(txns)
    if n > max_n:
        raise SizeError(f"brute force refused for n={n} > {max_n}")
    cw = compile_workload(txns)
    best_cost = None
    best_seq: tuple[int, ...] = tuple(range(n))
    for perm in permutations(range(n)):
        cost = seq_cost(cw, perm)
        if best_cost is None or cost < best_cost or (cost == best_cost and perm < best_seq):
            best_cost = cost
            best_seq = perm
    return int(best_cost), list(best_seq)


# ---------------------------------------------------------------------------
# workload generation and file format


def generate_workload(
    rng: np.random.Generator,
    model: str,
    n: int,
    ops_per_txn: int = 4,
    *,
    num_keys: int = 64,
    zipf_s: float = 1.5,
    hot_fraction: float = 0.2,
    hot_weight: float = 0.8,
    write_prob: float = 0.5,
) -> list[Transaction]:
    """Seeded workloads. ``zipf-keys``: key popularity follows a Zipf law;
    ``hot-cold``: a hot key set receives ``hot_weight`` of accesses;
    ``read-heavy``: uniform keys, 10% writes."""
    if n < 1 or ops_per_txn < 1:
        raise ValueError("need n >= 1 and ops_per_txn >= 1")
    if model == "zipf-keys":
        ranks = np.arange(1, num_keys + 1, dtype=np.float64)
        probs = ranks**-zipf_s
        probs /= probs.sum()
    elif model == "hot-cold":
        if not 0.0 <= hot_fraction <= 1.0:
            raise ValueError("hot_fraction must be in [0,1]")
        hot = max(0, int(round(hot_fraction * num_keys)))
        probs = np.empty(num_keys)
        if hot == 0 or hot == num_keys:
            probs[:] = 1.0 / num_keys
        else:
            probs[:hot] = hot_weight / hot
            probs[hot:] = (1.0 - hot_weight) / (num_keys - hot)
    elif model == "read-heavy":
        probs = np.full(num_keys, 1.0 / num_keys)
        write_prob = 0.1
    else:
        raise ValueError(f"unknown workload model: {model!r}")

    txns = []
    for _ in range(n):
        ops = []
        for _ in range(ops_per_txn):
            key = f"k{int(rng.choice(num_keys, p=probs))}"
            kind = "w" if rng.random() < write_prob else "r"
            ops.append((kind, key))
        txns.append(Transaction(tuple(ops)))
    return txns


def save_workload(path: str | Path, txns: Sequence[Transaction]) -> None:
    with open(path, "w") as f:
        for txn in txns:
            f.write(json.dumps({"ops": [list(op) for op in txn.ops]}) + "\n")


def load_workload(path: str | Path) -> list[Transaction]:
    txns = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            txns.append(Transaction(tuple((k, key) for k, key in rec["ops"])))
    return txns
