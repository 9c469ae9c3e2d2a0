"""Monotone machines with step-budgeted deterministic execution.

Two machines are provided:

``ReferenceMachine`` (descriptor ``"R"``) reads 2-bit opcodes::

    00  emit 0
    01  emit 1
    10  read an Elias-gamma integer n >= 1, then append n copies of the output so far
    11  halt

A run ends un-halted when the input runs out (also in the middle of an opcode
or a gamma code).  Each decoded opcode costs one step and each emitted symbol
one step.

``BlockMachine`` (descriptor ``"U:s=<n>:inner=R"``) is the block-coding
machine: after a leading 1 it decodes ``s``-bit blocks through ``d`` and only
flushes its buffer when the all-zero block arrives; after a leading 0 it skips
``3s`` padding bits and hands the rest of the input to the inner machine.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

from kmlab.core import check_bits, strings_upto


@dataclass(frozen=True)
class RunResult:
    output: str
    consumed: int
    halted: bool
    steps: int
    exhausted: bool = False


class MonotoneMachine(Protocol):
    descriptor: str

    def run(self, program: str, budget: int) -> RunResult: ...


# -- Elias gamma -------------------------------------------------------------


def gamma_encode(n: int) -> str:
    if n < 1:
        raise ValueError("Elias gamma codes integers n >= 1")
    b = format(n, "b")
    return "0" * (len(b) - 1) + b


def gamma_decode(bits: str, pos: int = 0) -> tuple[int, int] | None:
    """Decode one gamma code starting at ``pos``; ``(n, next_pos)`` or ``None`` if truncated."""
    zeros = 0
    while pos + zeros < len(bits) and bits[pos + zeros] == "0":
        zeros += 1
    end = pos + 2 * zeros + 1
    if end > len(bits):
        return None
    return int(bits[pos + zeros : end], 2), end


# -- reference machine -------------------------------------------------------


class ReferenceMachine:
    descriptor = "R"

    def run(self, program: str, budget: int) -> RunResult:
        if budget < 1:
            raise ValueError("budget must be >= 1")
        out = ""
        pos = 0
        steps = 0
        n_bits = len(program)
        while pos + 2 <= n_bits:
            if steps >= budget:
                return RunResult(out, pos, False, steps, True)
            op = program[pos : pos + 2]
            steps += 1
            if op == "11":
                return RunResult(out, pos + 2, True, steps)
            if op == "10":
                decoded = gamma_decode(program, pos + 2)
                if decoded is None:
                    return RunResult(out, n_bits, False, steps)
                n, pos = decoded
                room = budget - steps
                want = n * len(out)
                if want > room:
                    out = (out * (n + 1))[: len(out) + room]
                    return RunResult(out, pos, False, budget, True)
                out = out * (n + 1)
                steps += want
                continue
            pos += 2
            if steps >= budget:
                return RunResult(out, pos, False, steps, True)
            out += "0" if op == "00" else "1"
            steps += 1
        return RunResult(out, n_bits, False, steps)


# -- block machine -----------------------------------------------------------


def block_set(s: int) -> list[str]:
    """The image of ``d``: ``0^(s+1)`` plus every ``1y`` with ``y != 0^s``, in the order of ``d``'s argument."""
    return [decode_d(s, z) for z in (format(i, f"0{s}b") for i in range(2**s))]


def decode_d(s: int, z: str) -> str:
    check_bits(z)
    if len(z) != s:
        raise ValueError(f"decode_d expects {s} bits, got {len(z)}")
    if z == "0" * s:
        return "0" * (s + 1)
    return "1" + z


def encode_c(s: int, a: str) -> str:
    """Inverse of :func:`decode_d`; rejects strings outside the block set."""
    check_bits(a)
    if len(a) != s + 1:
        raise ValueError(f"encode_c expects {s + 1} bits, got {len(a)}")
    if a == "0" * (s + 1):
        return "0" * s
    if a[0] == "1" and a != "1" + "0" * s:
        return a[1:]
    raise ValueError(f"{a!r} is not in the block set for s={s}")


def in_block_set(s: int, a: str) -> bool:
    return len(a) == s + 1 and (a == "0" * (s + 1) or (a[0] == "1" and a != "1" + "0" * s))


class BlockMachine:
    def __init__(self, s: int, inner: MonotoneMachine | None = None):
        if s < 2:
            raise ValueError("block size must be >= 2")
        self.s = s
        self.inner = inner if inner is not None else ReferenceMachine()
        self.descriptor = f"U:s={s}:inner={self.inner.descriptor}"

    def run(self, program: str, budget: int) -> RunResult:
        if budget < 1:
            raise ValueError("budget must be >= 1")
        if not program:
            return RunResult("", 0, False, 0)
        s = self.s
        if program[0] == "0":
            skip = 1 + 3 * s
            if len(program) < skip:
                return RunResult("", len(program), False, 1)
            inner = self.inner.run(program[skip:], budget)
            return RunResult(
                inner.output, inner.consumed + skip, inner.halted, inner.steps, inner.exhausted
            )

        zero_block = "0" * s
        terminator = "0" * (s + 1)
        out = ""
        buffered: list[str] = []
        steps = 0
        pos = 1
        while pos + s <= len(program):
            if steps >= budget:
                return RunResult(out, pos, False, steps, True)
            block = program[pos : pos + s]
            pos += s
            steps += 1
            if block != zero_block:
                buffered.append("1" + block)
                continue
            flush = "".join(buffered) + terminator
            buffered = []
            room = budget - steps
            if len(flush) > room:
                return RunResult(out + flush[:room], pos, False, budget, True)
            out += flush
            steps += len(flush)
        return RunResult(out, len(program), False, steps)


# -- descriptors and checks --------------------------------------------------


def machine_from_descriptor(descriptor: str) -> MonotoneMachine:
    """Parse ``"R"`` or ``"U:s=<n>:inner=<descriptor>"``."""
    if descriptor == "R":
        return ReferenceMachine()
    if descriptor.startswith("U:"):
        head, _, inner = descriptor[2:].partition(":inner=")
        if not head.startswith("s="):
            raise ValueError(f"bad machine descriptor {descriptor!r}")
        return BlockMachine(int(head[2:]), machine_from_descriptor(inner or "R"))
    raise ValueError(f"unknown machine descriptor {descriptor!r}")


def find_monotonicity_violation(
    machine: MonotoneMachine, max_len: int, budget: int
) -> tuple[str, str] | None:
    """First ``(p, pq)`` whose outputs are not prefix-ordered, or ``None``.

    Checking one-bit extensions suffices because the prefix order is transitive.
    """
    outputs = {"": machine.run("", budget).output}
    for p in strings_upto(max_len):
        if not p:
            continue
        out = machine.run(p, budget).output
        parent = p[:-1]
        if not out.startswith(outputs[parent]):
            return parent, p
        if len(p) < max_len:
            outputs[p] = out
    return None


def check_monotone(machine: MonotoneMachine, max_len: int, budget: int) -> bool:
    return find_monotonicity_violation(machine, max_len, budget) is None
