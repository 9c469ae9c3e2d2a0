"""Binary strings, prefix sets, exact rationals and loss matrices.

Binary strings are plain ``str`` objects over the characters ``'0'`` and
``'1'``; the empty string is allowed everywhere.  Every number in the
package is a :class:`fractions.Fraction`.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

ALPHABET = ("0", "1")


class NotPrefixFreeError(ValueError):
    """Raised when a set of strings contains a proper prefix of another member."""

    def __init__(self, shorter: str, longer: str):
        super().__init__(f"not prefix-free: {shorter!r} is a proper prefix of {longer!r}")
        self.shorter = shorter
        self.longer = longer


def check_bits(x: str) -> str:
    if not isinstance(x, str) or x.strip("01"):
        raise ValueError(f"not a binary string: {x!r}")
    return x


def flip(bit: str) -> str:
    return "1" if bit == "0" else "0"


def is_prefix(x: str, y: str) -> bool:
    """True iff ``x`` is a (not necessarily proper) prefix of ``y``."""
    return y.startswith(x)


def is_proper_prefix(x: str, y: str) -> bool:
    return len(x) < len(y) and y.startswith(x)


def consistent(x: str, y: str) -> bool:
    """True iff one of the strings is a prefix of the other."""
    return x.startswith(y) or y.startswith(x)


def strings(n: int) -> Iterator[str]:
    """All binary strings of length exactly ``n`` in lexicographic order."""
    if n == 0:
        yield ""
        return
    for i in range(2**n):
        yield format(i, f"0{n}b")


def strings_upto(n: int) -> Iterator[str]:
    """All binary strings of length at most ``n``, length-then-lex order."""
    for k in range(n + 1):
        yield from strings(k)


def dyadic(n: int) -> Fraction:
    """Exact ``2**-n`` for natural ``n``."""
    return Fraction(1, 1 << n)


def dyadic_exponent(q: Fraction) -> int | None:
    """Return ``j >= 0`` with ``q == 2**-j``, or ``None`` if no such ``j`` exists."""
    if q.numerator != 1:
        return None
    d = q.denominator
    if d & (d - 1):
        return None
    return d.bit_length() - 1


def fmt_rational(q: Fraction | int) -> str:
    """Render as ``num/den`` in lowest terms (integers get ``/1``)."""
    q = Fraction(q)
    return f"{q.numerator}/{q.denominator}"


def parse_rational(text: str) -> Fraction:
    return Fraction(text.strip())


# -- prefix sets ------------------------------------------------------------


def find_prefix_pair(members: Iterable[str]) -> tuple[str, str] | None:
    """First ``(x, y)`` with ``x`` a proper prefix of ``y``, or ``None``.

    In lexicographic order every string between ``x`` and an extension of ``x``
    also extends ``x``, so checking neighbours is enough.
    """
    ordered = sorted(set(members))
    for x, y in zip(ordered, ordered[1:]):
        if y.startswith(x):
            return x, y
    return None


def prefix_set(members: Iterable[str]) -> frozenset[str]:
    """Validate ``members`` as a prefix-free set and freeze it."""
    s = frozenset(check_bits(m) for m in members)
    pair = find_prefix_pair(s)
    if pair is not None:
        raise NotPrefixFreeError(*pair)
    return s


def is_prefix_free(members: Iterable[str]) -> bool:
    return find_prefix_pair(members) is None


def kraft_sum(members: Iterable[str]) -> Fraction:
    """Sum of ``2**-len(x)`` over a prefix-free set; rejects non-prefix-free input."""
    s = prefix_set(members)
    if not s:
        return Fraction(0)
    top = max(map(len, s))
    return Fraction(sum(1 << (top - len(x)) for x in s), 1 << top)


def off_sequence_set(x: str) -> frozenset[str]:
    """The strings ``x[:t] + flip(x[t])`` for every position ``t`` of ``x``."""
    check_bits(x)
    if not x:
        raise ValueError("off_sequence_set needs a non-empty string")
    return frozenset(x[:t] + flip(x[t]) for t in range(len(x)))


# -- loss matrices ----------------------------------------------------------


@dataclass(frozen=True)
class LossMatrix:
    """Losses ``rows[x][y]`` for outcome ``x`` in {0,1} and action ``y``."""

    rows: tuple[tuple[Fraction, ...], tuple[Fraction, ...]]

    def __post_init__(self):
        if len(self.rows) != 2:
            raise ValueError("loss matrix needs exactly two outcome rows")
        rows = tuple(tuple(Fraction(v) for v in row) for row in self.rows)
        if len(rows[0]) != len(rows[1]) or len(rows[0]) < 2:
            raise ValueError("both rows must have the same number (>= 2) of actions")
        for row in rows:
            for v in row:
                if not 0 <= v <= 1:
                    raise ValueError(f"loss entry {v} outside [0, 1]")
        object.__setattr__(self, "rows", rows)

    @classmethod
    def from_rows(cls, row0: Sequence, row1: Sequence) -> LossMatrix:
        return cls((tuple(row0), tuple(row1)))

    @property
    def num_actions(self) -> int:
        return len(self.rows[0])

    def __call__(self, x: int | str, y: int) -> Fraction:
        return self.rows[int(x)][y]

    def argmin_set(self, x: int | str) -> frozenset[int]:
        row = self.rows[int(x)]
        best = min(row)
        return frozenset(y for y, v in enumerate(row) if v == best)

    def scaled(self, factor: Fraction, offset: Fraction = Fraction(0)) -> LossMatrix:
        return LossMatrix(tuple(tuple(factor * v + offset for v in row) for row in self.rows))

    def padded(self, num_actions: int, fill: Fraction = Fraction(1)) -> LossMatrix:
        """Extend with extra actions whose loss is ``fill`` for both outcomes."""
        extra = (Fraction(fill),) * (num_actions - self.num_actions)
        return LossMatrix(tuple(row + extra for row in self.rows))


def error_loss(num_actions: int = 2) -> LossMatrix:
    """``1 - delta(x, y)``; actions beyond 1 lose on both outcomes."""
    return LossMatrix(
        tuple(tuple(Fraction(int(x != y)) for y in range(num_actions)) for x in range(2))
    )


def three_action_loss(middle: Fraction = Fraction(3, 8)) -> LossMatrix:
    """Loss ``x`` for action 0, constant ``middle`` for action 1, ``2/3 (1-x)`` for action 2."""
    two_thirds = Fraction(2, 3)
    return LossMatrix.from_rows(
        (Fraction(0), Fraction(middle), two_thirds),
        (Fraction(1), Fraction(middle), Fraction(0)),
    )


def is_non_degenerate(loss: LossMatrix) -> bool:
    """No single action is optimal for both outcomes."""
    return not (loss.argmin_set(0) & loss.argmin_set(1))
