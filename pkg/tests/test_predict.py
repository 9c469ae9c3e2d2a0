from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kmlab.complexity import EnumerationBudget, cached_table
from kmlab.core import LossMatrix, dyadic, dyadic_exponent, error_loss, strings_upto, three_action_loss
from kmlab.environments import bernoulli_env, check_measure, deterministic_env
from kmlab.machines import ReferenceMachine
from kmlab.predict import (
    DegenerateThresholdError,
    PredictiveFunction,
    UndefinedConditionalError,
    act,
    argmin_actions,
    conditional,
    d_factor,
    deviation_sums,
    expected_loss,
    expected_losses,
    from_table,
    gamma_threshold,
    mdl_equivalence_check,
    mdl_mismatches,
    normalize,
    normalized_step,
    posterior,
    property_suite,
    self_opt_bound_check,
    step_report,
    write_step_csv,
)

R = ReferenceMachine()
unit = st.fractions(min_value=0, max_value=1, max_denominator=64)


@pytest.fixture(scope="module")
def table14():
    return cached_table(R, EnumerationBudget(14, 4096))


def test_conditional_examples(table14):
    m = from_table(table14, "m")
    for x in strings_upto(5):
        if table14.km(x) is None:
            continue
        for a in "01":
            c = conditional(m, x, a)
            assert c == 0 or (c <= 1 and dyadic_exponent(c) is not None)
    assert conditional(deterministic_env("zeros"), "00", "0") == 1
    zero_at_0 = PredictiveFunction(lambda x: Fraction(0) if x.startswith("0") else Fraction(1))
    with pytest.raises(UndefinedConditionalError):
        conditional(zero_at_0, "0", "1")


def test_normalize_leaves_measures_alone():
    mu = bernoulli_env(Fraction(3, 8))
    nb = normalize(PredictiveFunction(mu))
    for x in strings_upto(5):
        assert nb(x) == mu(x)


def test_normalized_m_posteriors_have_the_dyadic_ratio_form(table14):
    m = from_table(table14, "m")
    for x in strings_upto(6):
        if table14.km(x + "0") is None or table14.km(x + "1") is None:
            continue
        p1 = normalized_step(m, x)["1"]
        z = table14.km(x + "1") - table14.km(x + "0")
        assert p1 == 1 / (1 + Fraction(2) ** z)


def test_normalization_is_a_measure(table14):
    for which in ("m", "M", "k"):
        nb = normalize(from_table(table14, which))
        assert check_measure(nb, 6) == []


def test_d_factor_at_least_one_for_semimeasures(table14):
    M = from_table(table14, "M")
    nM = normalize(M)
    for x in strings_upto(5):
        if M(x) == 0:
            continue
        d = d_factor(M, x[:-1]) if x else 1 / M("")
        assert d >= 1
        if x:
            assert nM(x) == d * M(x)


def test_act_examples():
    loss = three_action_loss(Fraction(3, 8))
    assert act(loss, (Fraction(3, 5), Fraction(2, 5))) == 1
    assert act(loss, (Fraction(2, 3), Fraction(1, 3))) == 0
    assert act(error_loss(2), (Fraction(1, 4), Fraction(3, 4))) == 1
    # ties resolve to the lowest index
    assert act(error_loss(2), (Fraction(1, 2), Fraction(1, 2))) == 0
    with pytest.raises(ValueError):
        act(error_loss(2), (0, 0))


def test_expected_loss_examples():
    loss = three_action_loss(Fraction(3, 8))
    mu = (Fraction(3, 5), Fraction(2, 5))
    assert expected_loss(mu, loss, 1) == Fraction(3, 8)
    assert expected_loss(mu, loss, 0) == Fraction(2, 5)
    for y in range(3):
        assert expected_loss((1, 0), loss, y) == loss(0, y)
    with pytest.raises(ValueError):
        expected_loss((Fraction(1, 2), Fraction(1, 3)), loss, 0)


def test_gamma_threshold_examples():
    assert gamma_threshold(error_loss(2)) == Fraction(1, 2)
    assert gamma_threshold(LossMatrix.from_rows([0, Fraction(1, 2)], [1, 0])) == Fraction(1, 3)
    flat = LossMatrix.from_rows([Fraction(1, 2)] * 2, [Fraction(1, 2)] * 2)
    with pytest.raises(DegenerateThresholdError):
        gamma_threshold(flat)


def test_self_opt_bound_examples():
    loss = three_action_loss(Fraction(3, 8))
    mu = (Fraction(3, 5), Fraction(2, 5))
    assert self_opt_bound_check(mu, mu, loss)
    b = (Fraction(2, 3), Fraction(1, 3))
    gap = expected_loss(mu, loss, act(loss, b)) - expected_loss(mu, loss, act(loss, mu))
    assert gap == Fraction(1, 40)
    assert self_opt_bound_check(b, mu, loss)


def test_step_report_and_csv(tmp_path):
    loss = error_loss(2)
    rep = step_report(1, "", (Fraction(64, 65), Fraction(1, 65)), (Fraction(1, 64), Fraction(63, 64)), loss)
    assert (rep.action_b, rep.action_mu) == (0, 1)
    assert rep.ratio == 63
    write_step_csv([rep], tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[1] == "1,,64/65,1/65,1/64,63/64,0,1,63/64,1/64"


def test_mdl_examples():
    table = cached_table(R, EnumerationBudget(12, 4096))
    assert mdl_equivalence_check(table, strings_upto(4))
    assert mdl_mismatches(table, [""]) == []
    # km("0") == km("1"): every rule picks action 0
    assert table.km("0") == table.km("1")
    assert act(error_loss(2), posterior(table.m, "")) == 0


def test_property_suite_examples(table14):
    M = from_table(table14, "M")
    rep = property_suite(M, 4)
    assert rep.semimeasure_violations == [] and rep.monotonicity_violations == []
    m = from_table(table14, "m")
    rep = property_suite(m, 6, sequence="0" * 16)
    assert rep.monotonicity_violations == []
    assert rep.complexity_bound == table14.km("0" * 16)
    assert rep.bound_holds


def test_property_suite_flags_violations():
    bad = PredictiveFunction(lambda x: Fraction(1, 2) if x else Fraction(1, 4))
    rep = property_suite(bad, 2)
    assert "" in rep.semimeasure_violations
    assert "0" in rep.monotonicity_violations


def test_deviation_sums_examples(table14):
    m = from_table(table14, "m")
    x = "0" * 16
    km = table14.km(x)
    ds = deviation_sums(m, x)
    assert 2 * ds.onseq <= km and ds.count <= km and ds.offseq <= 2**km
    zeros = deterministic_env("zeros")
    ds = deviation_sums(zeros, x)
    assert (ds.onseq, ds.count, ds.offseq) == (0, 0, 0)


posteriors = st.tuples(unit).map(lambda t: (1 - t[0], t[0]))
losses = st.lists(st.tuples(unit, unit), min_size=2, max_size=4).map(
    lambda cols: LossMatrix.from_rows([c[0] for c in cols], [c[1] for c in cols])
)


@settings(max_examples=200, deadline=None)
@given(posteriors, posteriors, losses)
def test_self_opt_bound_on_random_triples(b, mu, loss):
    assert self_opt_bound_check(b, mu, loss)


@settings(max_examples=200, deadline=None)
@given(posteriors, losses)
def test_act_minimises_and_agrees_with_argmin(p, loss):
    y = act(loss, p)
    values = expected_losses(loss, p)
    assert values[y] == min(values)
    assert y == min(argmin_actions(loss, p))


@settings(max_examples=200, deadline=None)
@given(st.lists(unit, min_size=4, max_size=4), unit)
def test_act_agrees_with_gamma_threshold(entries, p1):
    l00, l01, l10, l11 = entries
    loss = LossMatrix.from_rows([l00, l01], [l10, l11])
    try:
        g = gamma_threshold(loss)
    except DegenerateThresholdError:
        return
    y = act(loss, (1 - p1, p1))
    assert y == (1 if p1 > g else 0)


@given(posteriors, losses, st.fractions(min_value=Fraction(1, 100), max_value=100))
def test_act_is_scale_invariant(p, loss, c):
    assert act(loss, (c * p[0], c * p[1])) == act(loss, p)


@given(posteriors, st.fractions(min_value=Fraction(1, 10), max_value=1), st.fractions(min_value=0, max_value=Fraction(1, 2)))
def test_act_is_invariant_under_affine_loss_change(p, a, b):
    loss = three_action_loss()
    assert act(loss.scaled(a, b * (1 - a)), p) == act(loss, p)


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet="01", max_size=6))
def test_m_is_monotone_and_dyadic(table14, x):
    m = from_table(table14, "m")
    if m(x):
        assert dyadic_exponent(m(x)) == table14.km(x)
    for a in "01":
        assert m(x + a) <= m(x)
    assert m(x) >= dyadic(2 * len(x)) or m(x) == 0
