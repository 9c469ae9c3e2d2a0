"""Predictive functions, chain-rule posteriors and loss-minimising predictors."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

from kmlab.core import (
    ALPHABET,
    LossMatrix,
    dyadic,
    dyadic_exponent,
    error_loss,
    flip,
    fmt_rational,
    strings_upto,
)


class UndefinedConditionalError(ZeroDivisionError):
    def __init__(self, context: str, t: int | None = None):
        where = f" at t={t}" if t is not None else ""
        super().__init__(f"conditional undefined: b({context!r}) = 0{where}")
        self.context = context
        self.t = t


class DegenerateThresholdError(ValueError):
    pass


@dataclass(frozen=True)
class PredictiveFunction:
    """A map from binary strings to non-negative rationals.

    ``zero_bound`` is set for budget-limited tables: a reported value of 0 then
    only means the true value lies in ``(0, zero_bound]``.
    """

    evaluate: Callable[[str], Fraction]
    descriptor: str = "custom"
    zero_bound: Fraction | None = None

    def __call__(self, x: str) -> Fraction:
        return self.evaluate(x)


def from_table(table, which: str = "m") -> PredictiveFunction:
    """``which`` is ``"m"`` (2^-Km), ``"M"`` (bigM) or ``"k"`` (2^-K)."""
    if which == "m":
        return PredictiveFunction(table.m, "m-from-table", dyadic(table.budget.L + 1))
    if which == "k":
        return PredictiveFunction(table.kk, "k-from-table", dyadic(table.budget.L + 1))
    if which == "M":
        return PredictiveFunction(table.bigM, "M-from-table")
    raise ValueError(f"unknown table function {which!r}")


def from_km(km: Callable[[str], int], descriptor: str = "m") -> PredictiveFunction:
    """``2^-km(x)`` for an exact complexity source."""
    return PredictiveFunction(lambda x: dyadic(km(x)), descriptor)


# -- posteriors ----------------------------------------------------------------


def conditional(b: Callable[[str], Fraction], context: str, symbol: str) -> Fraction:
    base = b(context)
    if base == 0:
        raise UndefinedConditionalError(context)
    return b(context + symbol) / base


def posterior(b: Callable[[str], Fraction], context: str) -> dict[str, Fraction]:
    base = b(context)
    if base == 0:
        raise UndefinedConditionalError(context)
    return {a: b(context + a) / base for a in ALPHABET}


def normalized_step(b: Callable[[str], Fraction], context: str) -> dict[str, Fraction]:
    """``b(context a) / sum_a' b(context a')``, or 1/2 each when the sum is 0."""
    values = {a: b(context + a) for a in ALPHABET}
    total = sum(values.values())
    if total == 0:
        return {a: Fraction(1, 2) for a in ALPHABET}
    return {a: v / total for a, v in values.items()}


class _Normalized:
    def __init__(self, b: Callable[[str], Fraction]):
        self.b = b
        self.cache: dict[str, Fraction] = {"": Fraction(1)}

    def __call__(self, x: str) -> Fraction:
        if x in self.cache:
            return self.cache[x]
        value = self(x[:-1]) * normalized_step(self.b, x[:-1])[x[-1]]
        self.cache[x] = value
        return value


def normalize(b: PredictiveFunction) -> PredictiveFunction:
    """Chain the step-normalised posteriors of ``b`` into a measure."""
    return PredictiveFunction(_Normalized(b), f"norm({b.descriptor})")


def d_factor(b: Callable[[str], Fraction], context: str) -> Fraction:
    """The factor with ``normalize(b)(context + a) == d_factor(b, context) * b(context + a)``."""
    d = 1 / b("")
    for t in range(len(context) + 1):
        prefix = context[:t]
        d *= b(prefix) / (b(prefix + "0") + b(prefix + "1"))
    return d


# -- predictors ----------------------------------------------------------------


def _as_pair(p: Mapping[str, Fraction] | Sequence[Fraction]) -> tuple[Fraction, Fraction]:
    if isinstance(p, Mapping):
        return Fraction(p["0"]), Fraction(p["1"])
    a, b = p
    return Fraction(a), Fraction(b)


def expected_losses(loss: LossMatrix, p) -> list[Fraction]:
    p0, p1 = _as_pair(p)
    return [p0 * loss(0, y) + p1 * loss(1, y) for y in range(loss.num_actions)]


def argmin_actions(loss: LossMatrix, p) -> frozenset[int]:
    values = expected_losses(loss, p)
    best = min(values)
    return frozenset(y for y, v in enumerate(values) if v == best)


def act(loss: LossMatrix, p) -> int:
    """Lowest-index action minimising the ``p``-expected loss."""
    p0, p1 = _as_pair(p)
    if p0 < 0 or p1 < 0 or p0 + p1 == 0:
        raise ValueError(f"posterior must be non-negative and not all zero: {(p0, p1)}")
    values = expected_losses(loss, (p0, p1))
    return values.index(min(values))


def expected_loss(mu_posterior, loss: LossMatrix, action: int) -> Fraction:
    p0, p1 = _as_pair(mu_posterior)
    if p0 < 0 or p1 < 0 or p0 + p1 != 1:
        raise ValueError(f"true posterior must be a distribution, got {(p0, p1)}")
    return p0 * loss(0, action) + p1 * loss(1, action)


def gamma_threshold(loss: LossMatrix) -> Fraction:
    """Posterior weight on 1 above which a two-action predictor switches to action 1."""
    if loss.num_actions != 2:
        raise ValueError("gamma_threshold needs exactly two actions")
    num = loss(0, 1) - loss(0, 0)
    den = num + loss(1, 0) - loss(1, 1)
    if den <= 0:
        raise DegenerateThresholdError(f"threshold denominator {den} is not positive")
    return num / den


def self_opt_bound_check(b_posterior, mu_posterior, loss: LossMatrix) -> bool:
    """``0 <= l(act_b) - l(act_mu) <= sum |b - mu|`` under the true posterior."""
    gap = expected_loss(mu_posterior, loss, act(loss, b_posterior)) - expected_loss(
        mu_posterior, loss, act(loss, mu_posterior)
    )
    b0, b1 = _as_pair(b_posterior)
    m0, m1 = _as_pair(mu_posterior)
    return 0 <= gap <= abs(b0 - m0) + abs(b1 - m1)


@dataclass(frozen=True)
class StepLossReport:
    t: int
    context: str
    b_posterior: tuple[Fraction, Fraction]
    mu_posterior: tuple[Fraction, Fraction]
    action_b: int
    action_mu: int
    loss_b: Fraction
    loss_mu: Fraction

    @property
    def ratio(self) -> Fraction | None:
        return None if self.loss_mu == 0 else self.loss_b / self.loss_mu


def step_report(t: int, context: str, b_post, mu_post, loss: LossMatrix) -> StepLossReport:
    yb, ym = act(loss, b_post), act(loss, mu_post)
    return StepLossReport(
        t,
        context,
        _as_pair(b_post),
        _as_pair(mu_post),
        yb,
        ym,
        expected_loss(mu_post, loss, yb),
        expected_loss(mu_post, loss, ym),
    )


def write_step_csv(reports: Iterable[StepLossReport], path: str | os.PathLike) -> None:
    r = fmt_rational
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "context", "b0", "b1", "mu0", "mu1", "action_b", "action_mu", "loss_b", "loss_mu"])
        for s in reports:
            w.writerow(
                [s.t, s.context, r(s.b_posterior[0]), r(s.b_posterior[1]), r(s.mu_posterior[0]),
                 r(s.mu_posterior[1]), s.action_b, s.action_mu, r(s.loss_b), r(s.loss_mu)]
            )


# -- MDL ---------------------------------------------------------------------


def mdl_mismatches(table, contexts: Iterable[str]) -> list[str]:
    """Contexts where the error-loss predictor on m, argmax m(xy) and argmin Km(xy) disagree."""
    bad = []
    loss = error_loss(2)
    for x in contexts:
        kms = [table.km(x + a) for a in ALPHABET]
        if None in kms or table.km(x) is None:
            raise ValueError(f"table has no finite Km for the extensions of {x!r}")
        post = posterior(table.m, x)
        by_posterior = act(loss, post)
        ms = [table.m(x + a) for a in ALPHABET]
        by_prior = ms.index(max(ms))
        by_length = kms.index(min(kms))
        if not by_posterior == by_prior == by_length:
            bad.append(x)
    return bad


def mdl_equivalence_check(table, contexts: Iterable[str]) -> bool:
    return not mdl_mismatches(table, contexts)


# -- property suite --------------------------------------------------------------


@dataclass
class PropertyReport:
    horizon: int
    monotonicity_violations: list[str] = field(default_factory=list)
    semimeasure_violations: list[str] = field(default_factory=list)
    undetermined: list[str] = field(default_factory=list)
    root_value: Fraction = Fraction(0)
    sequence: str | None = None
    non_violation_steps: list[int] = field(default_factory=list)
    complexity_bound: int | None = None

    @property
    def non_violation_count(self) -> int:
        return len(self.non_violation_steps)

    @property
    def bound_holds(self) -> bool | None:
        if self.sequence is None or self.complexity_bound is None:
            return None
        return self.non_violation_count <= self.complexity_bound


def _semimeasure_status(b: PredictiveFunction, context: str) -> str:
    """``"ok"``, ``"violation"`` or ``"undetermined"`` for the inequality at ``context``."""
    parent = b(context)
    children = [b(context + a) for a in ALPHABET]
    known = sum(children)
    zeros = children.count(0)
    if b.zero_bound is None or zeros == 0:
        return "violation" if known > parent else "ok"
    if parent == 0:
        return "undetermined"
    if known >= parent:
        return "violation"
    if known + zeros * b.zero_bound <= parent:
        return "ok"
    return "undetermined"


def property_suite(b: PredictiveFunction, horizon: int, sequence: str | None = None) -> PropertyReport:
    """Check monotonicity and the semimeasure inequality on every string up to ``horizon``.

    With ``sequence`` the report also lists the steps ``t`` along it where the
    semimeasure inequality holds, next to ``-log2 b(sequence)`` when that is an
    integer (the monotone complexity for ``b = m``).
    """
    report = PropertyReport(horizon=horizon, root_value=b(""))
    if report.root_value > 1:
        report.semimeasure_violations.append("")
    for x in strings_upto(horizon):
        if x:
            child, parent = b(x), b(x[:-1])
            if child > parent:
                if b.zero_bound is not None and parent == 0:
                    report.undetermined.append(x)
                else:
                    report.monotonicity_violations.append(x)
        if len(x) < horizon:
            status = _semimeasure_status(b, x)
            if status == "violation":
                report.semimeasure_violations.append(x)
            elif status == "undetermined":
                report.undetermined.append(x)
    if sequence is not None:
        report.sequence = sequence
        for t in range(1, len(sequence) + 1):
            status = _semimeasure_status(b, sequence[: t - 1])
            if status == "undetermined":
                raise ValueError(f"semimeasure inequality undecidable at t={t} along the sequence")
            if status == "ok":
                report.non_violation_steps.append(t)
        value = b(sequence)
        report.complexity_bound = dyadic_exponent(value) if value else None
    return report


# -- deviation sums ------------------------------------------------------------


@dataclass(frozen=True)
class DeviationSums:
    onseq: Fraction
    count: int
    offseq: Fraction
    trace: tuple[tuple[int, Fraction, Fraction], ...] = ()


def deviation_sums(b: Callable[[str], Fraction], x: str) -> DeviationSums:
    """On-sequence deviation, number of steps with posterior != 1, off-sequence mass."""
    onseq = Fraction(0)
    offseq = Fraction(0)
    count = 0
    trace = []
    for t in range(1, len(x) + 1):
        ctx = x[: t - 1]
        base = b(ctx)
        if base == 0:
            raise UndefinedConditionalError(ctx, t)
        on = b(ctx + x[t - 1]) / base
        off = b(ctx + flip(x[t - 1])) / base
        onseq += abs(1 - on)
        offseq += off
        count += on != 1
        trace.append((t, on, off))
    return DeviationSums(onseq, count, offseq, tuple(trace))
