"""Resource-bounded Km, K and M from exhaustive program enumeration.

A :class:`ComplexityTable` is built from every program of length at most ``L``
run for at most ``S`` steps.  Queries work for any string, not only those
materialised in :meth:`ComplexityTable.entries`; a missing value (``None``)
means no program within the budget produced the string, so the true
complexity exceeds ``L``.

Two exact routes complement the tables: :func:`km_block_exact` evaluates Km
on the block machine in closed form, and :class:`ReferenceSearch` finds the
true shortest monotone program on the reference machine by breadth-first
search over its decoder states.
"""

from __future__ import annotations

import csv
import logging
import os
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Protocol

from kmlab.core import strings, strings_upto
from kmlab.machines import (
    BlockMachine,
    MonotoneMachine,
    ReferenceMachine,
    encode_c,
    in_block_set,
    machine_from_descriptor,
)

log = logging.getLogger(__name__)

TABLE_MAGIC = "# kmlab-table v1"


class TableLoadError(Exception):
    """A cache file is corrupt or was built for a different machine or budget."""


class BudgetInsufficientError(Exception):
    """The enumeration budget is too small to decide the requested quantity."""


@dataclass(frozen=True)
class EnumerationBudget:
    L: int
    S: int

    def __post_init__(self):
        if self.L < 0 or self.S < 1:
            raise ValueError(f"invalid budget L={self.L} S={self.S}")


@dataclass(frozen=True)
class ProgramRecord:
    program: str
    output: str
    consumed: int
    halted: bool
    steps: int
    exhausted: bool = False

    @property
    def redundant(self) -> bool:
        """The run stopped before reading all bits, so it duplicates its consumed prefix."""
        return self.consumed < len(self.program)


def _run_length_class(machine: MonotoneMachine, length: int, S: int) -> list[ProgramRecord]:
    records = []
    for p in strings(length):
        r = machine.run(p, S)
        records.append(ProgramRecord(p, r.output, r.consumed, r.halted, r.steps, r.exhausted))
    return records


def _run_length_class_job(args: tuple[str, int, int]) -> list[ProgramRecord]:
    descriptor, length, S = args
    return _run_length_class(machine_from_descriptor(descriptor), length, S)


def enumerate_programs(
    machine: MonotoneMachine, budget: EnumerationBudget, workers: int = 1
) -> list[ProgramRecord]:
    """One record per program of length ``0..L`` in length-then-lex order.

    With ``workers > 1`` each length class runs in its own process (the machine
    is rebuilt there from its descriptor); results are merged by length, so the
    output does not depend on scheduling.
    """
    if workers > 1:
        jobs = [(machine.descriptor, n, budget.S) for n in range(budget.L + 1)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_length_class_job, jobs))
    else:
        parts = [_run_length_class(machine, n, budget.S) for n in range(budget.L + 1)]
    return [r for part in parts for r in part]


class ComplexityTable:
    """Km, K and M approximations for one machine at one budget."""

    def __init__(
        self,
        descriptor: str,
        budget: EnumerationBudget,
        records: list[ProgramRecord],
        max_string_len: int = 0,
    ):
        self.descriptor = descriptor
        self.budget = budget
        self.records = records
        self.max_string_len = max_string_len
        self._index()

    def _index(self) -> None:
        L = self.budget.L
        self._km: dict[str, int] = {}
        self._k: dict[str, int] = {}
        # M(x) * 2**L as an integer
        self._mass: dict[str, int] = {}
        self.exhausted = 0
        out_of: dict[str, str] = {}
        for r in self.records:
            p, o = r.program, r.output
            if r.exhausted:
                self.exhausted += 1
            if len(p) < L:
                out_of[p] = o
            for j in range(len(o), -1, -1):
                key = o[:j]
                if key in self._km:
                    break
                self._km[key] = len(p)
            if r.halted and o not in self._k:
                self._k[o] = r.consumed
            if not p:
                self._mass[""] = self._mass.get("", 0) + (1 << L)
                continue
            weight = 1 << (L - len(p))
            for j in range(len(out_of[p[:-1]]) + 1, len(o) + 1):
                key = o[:j]
                self._mass[key] = self._mass.get(key, 0) + weight

    # -- queries -------------------------------------------------------------

    @property
    def km_floor(self) -> int:
        """Lower bound on the true Km of any string the table has no program for."""
        return self.budget.L + 1

    @property
    def saturated(self) -> bool:
        """No run hit the step budget."""
        return self.exhausted == 0

    def km(self, x: str) -> int | None:
        return self._km.get(x)

    def k(self, x: str) -> int | None:
        return self._k.get(x)

    def bigM(self, x: str) -> Fraction:
        return Fraction(self._mass.get(x, 0), 1 << self.budget.L)

    def m(self, x: str) -> Fraction:
        v = self._km.get(x)
        return Fraction(0) if v is None else Fraction(1, 1 << v)

    def kk(self, x: str) -> Fraction:
        v = self._k.get(x)
        return Fraction(0) if v is None else Fraction(1, 1 << v)

    def halting_programs(self) -> set[str]:
        return {r.program[: r.consumed] for r in self.records if r.halted}

    def entries(self) -> dict[str, tuple[int | None, int | None, Fraction]]:
        return {
            x: (self.km(x), self.k(x), self.bigM(x)) for x in strings_upto(self.max_string_len)
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ComplexityTable):
            return NotImplemented
        return (
            self.descriptor == other.descriptor
            and self.budget == other.budget
            and self.max_string_len == other.max_string_len
            and self.records == other.records
        )

    def __repr__(self) -> str:
        return (
            f"ComplexityTable({self.descriptor!r}, L={self.budget.L}, S={self.budget.S}, "
            f"{len(self.records)} records)"
        )

    # -- export --------------------------------------------------------------

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "km", "k", "bigM_num", "bigM_den", "budget_L", "budget_S"])
            for x, (km, k, M) in self.entries().items():
                w.writerow(
                    [
                        x,
                        "inf" if km is None else km,
                        "inf" if k is None else k,
                        M.numerator,
                        M.denominator,
                        self.budget.L,
                        self.budget.S,
                    ]
                )


def table_build(
    machine: MonotoneMachine, budget: EnumerationBudget, max_string_len: int = 0, workers: int = 1
) -> ComplexityTable:
    records = enumerate_programs(machine, budget, workers=workers)
    return ComplexityTable(machine.descriptor, budget, records, max_string_len)


def table_save(table: ComplexityTable, path: str | os.PathLike) -> None:
    lines = [
        f"{TABLE_MAGIC}\tdescriptor={table.descriptor}\tL={table.budget.L}"
        f"\tS={table.budget.S}\tmaxlen={table.max_string_len}\trecords={len(table.records)}"
    ]
    for r in table.records:
        lines.append(
            f"{r.program}\t{r.output}\t{r.consumed}\t{int(r.halted)}\t{r.steps}\t{int(r.exhausted)}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def table_load(
    path: str | os.PathLike,
    descriptor: str | None = None,
    budget: EnumerationBudget | None = None,
) -> ComplexityTable:
    """Read a table written by :func:`table_save`, checking it against the expected key."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise TableLoadError(f"cannot read {path}: {exc}") from exc
    lines = text.split("\n")
    if not lines or not lines[0].startswith(TABLE_MAGIC):
        raise TableLoadError(f"{path}: missing table header")
    try:
        header = dict(field.split("=", 1) for field in lines[0].split("\t")[1:])
        got_descriptor = header["descriptor"]
        got_budget = EnumerationBudget(int(header["L"]), int(header["S"]))
        maxlen = int(header["maxlen"])
        count = int(header["records"])
    except (KeyError, ValueError) as exc:
        raise TableLoadError(f"{path}: malformed header: {exc}") from exc
    if descriptor is not None and got_descriptor != descriptor:
        raise TableLoadError(f"{path}: built for machine {got_descriptor!r}, wanted {descriptor!r}")
    if budget is not None and got_budget != budget:
        raise TableLoadError(f"{path}: built for budget {got_budget}, wanted {budget}")
    body = lines[1:]
    if body and body[-1] == "":
        body = body[:-1]
    if len(body) != count:
        raise TableLoadError(f"{path}: expected {count} records, found {len(body)}")
    records = []
    for lineno, line in enumerate(body, start=2):
        fields = line.split("\t")
        try:
            program, output, consumed, halted, steps, exhausted = fields
            if program.strip("01") or output.strip("01") or halted not in "01" or exhausted not in "01":
                raise ValueError("bad field")
            records.append(
                ProgramRecord(program, output, int(consumed), halted == "1", int(steps), exhausted == "1")
            )
        except ValueError as exc:
            raise TableLoadError(f"{path}:{lineno}: corrupt record") from exc
    return ComplexityTable(got_descriptor, got_budget, records, maxlen)


class TableCache:
    """Directory of saved tables keyed by (machine descriptor, L, S)."""

    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)
        self.hits = 0
        self.builds = 0

    def path_for(self, descriptor: str, budget: EnumerationBudget) -> Path:
        safe = descriptor.replace(":", "_").replace("=", "")
        return self.directory / f"{safe}__L{budget.L}__S{budget.S}.tsv"

    def get(
        self, machine: MonotoneMachine, budget: EnumerationBudget, max_string_len: int = 0, workers: int = 1
    ) -> ComplexityTable:
        path = self.path_for(machine.descriptor, budget)
        if path.exists():
            table = table_load(path, machine.descriptor, budget)
            table.max_string_len = max_string_len
            self.hits += 1
            return table
        table = table_build(machine, budget, max_string_len, workers=workers)
        self.directory.mkdir(parents=True, exist_ok=True)
        table_save(table, path)
        self.builds += 1
        log.info("built %r", table)
        return table


@lru_cache(maxsize=16)
def _memo_table(descriptor: str, L: int, S: int) -> ComplexityTable:
    return table_build(machine_from_descriptor(descriptor), EnumerationBudget(L, S))


def cached_table(machine: MonotoneMachine, budget: EnumerationBudget) -> ComplexityTable:
    """In-process memoised table; the returned object must be treated as read-only."""
    return _memo_table(machine.descriptor, budget.L, budget.S)


def km_approx(x: str, machine: MonotoneMachine, budget: EnumerationBudget) -> int | None:
    return cached_table(machine, budget).km(x)


def k_approx(x: str, machine: MonotoneMachine, budget: EnumerationBudget) -> int | None:
    return cached_table(machine, budget).k(x)


def bigM_approx(x: str, machine: MonotoneMachine, budget: EnumerationBudget) -> Fraction:
    return cached_table(machine, budget).bigM(x)


# -- exact Km on the reference machine ----------------------------------------


class ReferenceSearch:
    """Exact monotone complexity on the reference machine, with no length or step cap.

    Between bits the machine is fully described by its output so far and its
    position inside the current opcode or gamma code.  Outputs that disagree
    with the target are dead ends (output only grows), so a breadth-first
    search over these states finds the shortest program whose output starts
    with the target.
    """

    descriptor = "R"
    km_floor = None

    def __init__(self):
        self._cache: dict[str, int] = {}

    def km(self, x: str) -> int:
        if x not in self._cache:
            self._cache[x] = _reference_km(x)
        return self._cache[x]

    def m(self, x: str) -> Fraction:
        return Fraction(1, 1 << self.km(x))


def _reference_km(x: str) -> int:
    n = len(x)
    if n == 0:
        return 0
    max_zeros = n.bit_length() + 1
    # state: (olen, mode, zeros, read, value); mode "B" opcode start, "0"/"1" half
    # opcode read, "Z" counting gamma zeros, "V" reading gamma value bits
    start = (0, "B", 0, 0, 0)
    seen = {start}
    frontier = deque([(start, 0)])

    def repeat(olen: int, count: int):
        if olen == 0:
            return ("B", 0)
        total = olen * (count + 1)
        out = x[:olen]
        reach = min(total, n)
        block = (out * (reach // olen + 1))[:reach]
        if block != x[:reach]:
            return None
        return ("goal", None) if total >= n else ("B", total)

    while frontier:
        (olen, mode, zeros, read, value), depth = frontier.popleft()
        for bit in "01":
            nxt = None
            if mode == "B":
                nxt = (olen, bit, 0, 0, 0)
            elif mode == "0":
                if x[olen] != bit:
                    continue
                if olen + 1 == n:
                    return depth + 1
                nxt = (olen + 1, "B", 0, 0, 0)
            elif mode == "1":
                if bit == "1" or olen == 0:
                    # halting never extends the output; repeating nothing is a no-op
                    continue
                nxt = (olen, "Z", 0, 0, 0)
            elif mode == "Z":
                if bit == "0":
                    if zeros + 1 > max_zeros:
                        continue
                    nxt = (olen, "Z", zeros + 1, 0, 0)
                elif zeros == 0:
                    res = repeat(olen, 1)
                    if res is None:
                        continue
                    if res[0] == "goal":
                        return depth + 1
                    nxt = (res[1], "B", 0, 0, 0)
                else:
                    nxt = (olen, "V", zeros, 0, 1)
            else:
                v = value * 2 + int(bit)
                if read + 1 < zeros:
                    nxt = (olen, "V", zeros, read + 1, v)
                else:
                    res = repeat(olen, v)
                    if res is None:
                        continue
                    if res[0] == "goal":
                        return depth + 1
                    nxt = (res[1], "B", 0, 0, 0)
            if nxt is not None and nxt not in seen:
                seen.add(nxt)
                frontier.append((nxt, depth + 1))
    raise AssertionError("every string is emittable bit by bit")


# -- exact Km on the block machine --------------------------------------------


class InnerKm(Protocol):
    km_floor: int | None

    def km(self, x: str) -> int | None: ...


def block_branch_km(s: int, x: str) -> int | None:
    """Shortest program starting with 1 whose output starts with ``x``; ``None`` if none exists."""
    if not x:
        return 0
    width = s + 1
    full, rest = divmod(len(x), width)
    blocks = [x[i * width : (i + 1) * width] for i in range(full)]
    if not all(in_block_set(s, a) for a in blocks):
        return None
    tail = x[full * width :]
    if not tail:
        ends_flushed = full > 0 and blocks[-1] == "0" * width
        return 1 + s * full + (0 if ends_flushed else s)
    if tail == "0" * rest:
        return 1 + s * (full + 1)
    if tail[0] == "1":
        return 1 + s * (full + 2)
    return None


def km_block_exact(s: int, x: str, inner: InnerKm) -> int:
    """Exact Km of ``x`` on the block machine with block size ``s``.

    The 1-branch is evaluated in closed form; the 0-branch costs ``3s + 1`` bits
    plus the inner machine's Km.  When ``inner`` only gives a lower bound for
    ``x`` (a budget-limited table) and that bound does not settle the minimum,
    :class:`BudgetInsufficientError` is raised.
    """
    if not x:
        return 0
    one = block_branch_km(s, x)
    inner_km = inner.km(x)
    if inner_km is not None:
        zero = 3 * s + 1 + inner_km
        return zero if one is None else min(one, zero)
    floor = inner.km_floor
    if floor is None:
        if one is None:
            raise BudgetInsufficientError(f"no program found for {x!r}")
        return one
    if one is not None and one <= 3 * s + 1 + floor:
        return one
    raise BudgetInsufficientError(
        f"Km of {x!r} on U(s={s}) depends on inner Km beyond the table budget L={floor - 1}"
    )


class BlockKm:
    """Exact Km on the block machine, backed by an inner Km source."""

    km_floor = None

    def __init__(self, s: int, inner: InnerKm | None = None):
        self.s = s
        self.inner = inner if inner is not None else ReferenceSearch()
        self.descriptor = BlockMachine(s).descriptor

    def km(self, x: str) -> int:
        return km_block_exact(self.s, x, self.inner)

    def code_length(self, x: str) -> int:
        """Length of ``c(x)`` for ``x`` a whole number of blocks."""
        width = self.s + 1
        return sum(len(encode_c(self.s, x[i : i + width])) for i in range(0, len(x), width))


def reference_table(budget: EnumerationBudget, max_string_len: int = 0) -> ComplexityTable:
    return table_build(ReferenceMachine(), budget, max_string_len)


def table_rows(table: ComplexityTable, xs: Iterable[str]) -> list[tuple[str, int | None, int | None, Fraction]]:
    return [(x, table.km(x), table.k(x), table.bigM(x)) for x in xs]
