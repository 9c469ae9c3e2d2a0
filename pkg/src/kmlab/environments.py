"""Computable environments, reproducible sampling and the mean-sum distance.

Sampling draws one 64-bit word per symbol from numpy's Philox4x64-10
counter-based generator keyed with the seed (counter starting at zero) and
emits 1 iff ``word < mu(1 | context) * 2**64``, compared exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from kmlab.core import ALPHABET, check_bits, parse_rational, strings_upto
from kmlab.machines import ReferenceMachine, in_block_set


@dataclass(frozen=True)
class Environment:
    prob: Callable[[str], Fraction]
    kind: str
    descriptor: str
    sequence: Callable[[int], str] | None = None
    # mu(1 | context) in closed form, when cheaper than the chain rule
    next_one: Callable[[str], Fraction] | None = None

    def __call__(self, x: str) -> Fraction:
        return self.prob(x)

    def conditional(self, context: str, symbol: str) -> Fraction:
        if self.next_one is not None:
            p1 = self.next_one(context)
            return p1 if symbol == "1" else 1 - p1
        base = self.prob(context)
        if base == 0:
            raise ZeroDivisionError(f"mu({context!r}) = 0")
        return self.prob(context + symbol) / base


def bernoulli_env(theta: Fraction) -> Environment:
    theta = Fraction(theta)
    if not 0 <= theta <= 1:
        raise ValueError(f"theta={theta} outside [0, 1]")

    def prob(x: str) -> Fraction:
        ones = x.count("1")
        return theta**ones * (1 - theta) ** (len(x) - ones)

    return Environment(
        prob, "bernoulli", f"bern:{theta.numerator}/{theta.denominator}", next_one=lambda x: theta
    )


def block_env(s: int) -> Environment:
    """I.i.d. blocks of ``s + 1`` bits, uniform over the block set, marginalised on partial blocks."""
    if s < 2:
        raise ValueError("block size must be >= 2")
    width = s + 1
    unit = Fraction(1, 2**s)

    def completions(tail: str) -> int:
        # number of blocks that start with the partial block ``tail``
        if not tail:
            return 2**s
        if tail[0] == "0":
            return 1 if tail == "0" * len(tail) else 0
        free = width - len(tail)
        return 2**free - (1 if tail[1:] == "0" * (len(tail) - 1) else 0)

    def prob(x: str) -> Fraction:
        full = len(x) // width
        value = Fraction(1)
        for i in range(full):
            if not in_block_set(s, x[i * width : (i + 1) * width]):
                return Fraction(0)
            value *= unit
        return value * completions(x[full * width :]) * unit if len(x) % width else value

    return Environment(prob, "block", f"block:s={s}")


def deterministic_env(name: str) -> Environment:
    """Indicator measure of a computable sequence.

    ``name`` is ``zeros``, ``ones``, ``alt`` (0101...) or ``prog=<bits>``: the
    output of the reference machine on that program, repeated periodically.
    """
    if name == "zeros":
        seq = lambda n: "0" * n  # noqa: E731
    elif name == "ones":
        seq = lambda n: "1" * n  # noqa: E731
    elif name == "alt":
        seq = lambda n: ("01" * (n // 2 + 1))[:n]  # noqa: E731
    elif name.startswith("prog="):
        program = check_bits(name[5:])
        result = ReferenceMachine().run(program, 1 << 20)
        if not result.output:
            raise ValueError(f"program {program!r} produces no output")
        base = result.output
        seq = lambda n: (base * (n // len(base) + 1))[:n]  # noqa: E731
    else:
        raise ValueError(f"unknown deterministic sequence {name!r}")

    def prob(x: str) -> Fraction:
        return Fraction(int(seq(len(x)) == x))

    return Environment(prob, "deterministic", f"det:{name}", seq)


def env_from_descriptor(descriptor: str) -> Environment:
    kind, _, arg = descriptor.partition(":")
    if kind == "det":
        return deterministic_env(arg)
    if kind == "bern":
        return bernoulli_env(parse_rational(arg))
    if kind == "block" and arg.startswith("s="):
        return block_env(int(arg[2:]))
    raise ValueError(f"unknown environment descriptor {descriptor!r}")


def check_measure(env: Callable[[str], Fraction], depth: int) -> list[str]:
    """Contexts up to ``depth - 1`` where ``mu(x0) + mu(x1) != mu(x)``, plus ``""`` if ``mu("") != 1``."""
    bad = [] if env("") == 1 else [""]
    for x in strings_upto(depth - 1):
        if env(x + "0") + env(x + "1") != env(x):
            bad.append(x)
    return bad


# -- sampling ------------------------------------------------------------------


_TWO64 = 1 << 64


def _words(seed: int, n: int) -> list[int]:
    bitgen = np.random.Philox(key=seed & (_TWO64 - 1))
    return [int(w) for w in bitgen.random_raw(n)]


def sample(env: Environment, n: int, seed: int) -> str:
    if env.sequence is not None:
        return env.sequence(n)
    x = ""
    for word in _words(seed, n):
        p1 = env.conditional(x, "1")
        x += "1" if word * p1.denominator < p1.numerator * _TWO64 else "0"
    return x


# -- mean-sum distance -----------------------------------------------------------


MAX_EXACT_HORIZON = 20


def _step_distance(b: Callable[[str], Fraction], env: Environment, context: str) -> Fraction:
    base = b(context)
    if base == 0:
        raise ZeroDivisionError(f"b-conditional undefined at context {context!r}")
    mu_base = env(context)
    return sum(
        (b(context + a) / base - env(context + a) / mu_base) ** 2 for a in ALPHABET
    )


def ims_trace(b: Callable[[str], Fraction], env: Environment, n: int) -> list[Fraction]:
    """Per-step expected squared distance ``E[sum_a (b(a|x) - mu(a|x))^2]`` for ``t = 1..n``."""
    if n > MAX_EXACT_HORIZON:
        raise ValueError(f"exact mode is capped at n={MAX_EXACT_HORIZON}; use ims_sum_sampled")
    trace = []
    layer = {"": Fraction(1)}
    for _ in range(n):
        trace.append(sum(w * _step_distance(b, env, x) for x, w in layer.items()))
        nxt = {}
        for x, w in layer.items():
            for a in ALPHABET:
                wa = env(x + a)
                if wa:
                    nxt[x + a] = wa
        layer = nxt
    return trace


def ims_sum(b: Callable[[str], Fraction], env: Environment, n: int) -> Fraction:
    """Exact ``sum_t E[sum_a (b(a|x<t) - mu(a|x<t))^2]`` over ``t = 1..n``."""
    return sum(ims_trace(b, env, n), Fraction(0))


def ims_sum_sampled(
    b: Callable[[str], Fraction], env: Environment, n: int, seeds: list[int]
) -> Fraction:
    """Monte Carlo mean over sampled paths, one path per seed."""
    total = Fraction(0)
    for seed in seeds:
        x = sample(env, n, seed)
        total += sum((_step_distance(b, env, x[:t]) for t in range(n)), Fraction(0))
    return total / len(seeds)
