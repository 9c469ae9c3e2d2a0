from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kmlab.complexity import EnumerationBudget, cached_table
from kmlab.core import strings
from kmlab.environments import (
    MAX_EXACT_HORIZON,
    bernoulli_env,
    block_env,
    check_measure,
    deterministic_env,
    env_from_descriptor,
    ims_sum,
    ims_sum_sampled,
    ims_trace,
    sample,
)
from kmlab.machines import ReferenceMachine, block_set
from kmlab.predict import PredictiveFunction, from_table, normalize


@pytest.fixture(scope="module")
def table14():
    return cached_table(ReferenceMachine(), EnumerationBudget(14, 4096))


def test_bernoulli_examples():
    for theta in (Fraction(3, 8), Fraction(5, 12)):
        env = bernoulli_env(theta)
        for x in ("", "0", "101", "1110"):
            assert env.conditional(x, "1") == theta
    ones = bernoulli_env(Fraction(1))
    assert ones("1111") == 1 and ones("110") == 0
    with pytest.raises(ValueError):
        bernoulli_env(Fraction(3, 2))


def test_block_env_examples():
    env = block_env(2)
    assert env("000") == Fraction(1, 4)
    assert sorted(a for a in strings(3) if env(a) > 0) == sorted(block_set(2))
    for ctx in ("", "101", "000111"):
        assert env.conditional(ctx, "1") == Fraction(3, 4)
        assert env.conditional(ctx, "0") == Fraction(1, 4)
    # inside a block, a leading 0 forces the rest of the block
    assert env.conditional("0", "0") == 1
    # after a leading 1 the block is one of 101, 110, 111
    assert env.conditional("1", "0") == Fraction(1, 3)


def test_deterministic_examples():
    assert deterministic_env("zeros")("000") == 1
    alt = deterministic_env("alt")
    assert alt("0101") == 1 and alt("00") == 0
    prog = deterministic_env("prog=0000011000111")
    assert prog.sequence(24) == "001" * 8
    assert prog.sequence(27) == "001" * 9
    with pytest.raises(ValueError):
        deterministic_env("prog=11")


@pytest.mark.parametrize(
    "descriptor",
    ["det:zeros", "det:alt", "det:ones", "det:prog=0010011", "bern:3/8", "bern:1/2", "block:s=2", "block:s=3"],
)
def test_environments_are_measures(descriptor):
    assert check_measure(env_from_descriptor(descriptor), 10) == []


def test_descriptor_errors():
    with pytest.raises(ValueError):
        env_from_descriptor("gauss:1")


def test_sample_is_reproducible():
    bern = bernoulli_env(Fraction(1, 2))
    assert sample(bern, 16, 0) == sample(bern, 16, 0) == "1110010011010100"
    assert sample(bern, 16, 1) != sample(bern, 16, 0)
    assert sample(bernoulli_env(Fraction(3, 8)), 16, 7) == "0100101010000000"
    assert sample(deterministic_env("alt"), 6, 123) == "010101"


def test_sample_frequency():
    bern = bernoulli_env(Fraction(3, 8))
    freq = sample(bern, 10_000, 0).count("1") / 10_000
    assert abs(freq - 0.38) <= 0.02


def test_block_samples_stay_in_the_block_set():
    env = block_env(3)
    for seed in range(5):
        x = sample(env, 40, seed)
        assert all(a in block_set(3) for a in (x[i : i + 4] for i in range(0, 40, 4)))


def test_ims_of_the_true_measure_is_zero():
    for env in (bernoulli_env(Fraction(3, 8)), block_env(2), deterministic_env("alt")):
        assert ims_sum(env, env, 8) == 0


def test_ims_exact_mode_is_capped():
    env = bernoulli_env(Fraction(1, 2))
    with pytest.raises(ValueError):
        ims_trace(env, env, MAX_EXACT_HORIZON + 1)


def test_ims_m_norm_grows_linearly(table14):
    m_norm = normalize(from_table(table14, "m"))
    for theta in (Fraction(3, 8), Fraction(5, 12)):
        env = bernoulli_env(theta)
        trace = ims_trace(m_norm, env, 8)
        for n in range(1, 9):
            assert sum(trace[:n]) >= n * 2 * Fraction(1, 12) ** 2


def test_ims_bigM_norm_bounded_on_zeros(table14):
    M_norm = normalize(from_table(table14, "M"))
    zeros = deterministic_env("zeros")
    sums = [ims_sum(M_norm, zeros, n) for n in (4, 8, 16)]
    assert sums[0] <= sums[1] <= sums[2] <= Fraction(7, 5) * table14.km("0" * 16)


def test_ims_sampled_matches_exact_for_deterministic_env():
    zeros = deterministic_env("zeros")
    half = PredictiveFunction(lambda x: Fraction(1, 2 ** len(x)))
    assert ims_sum_sampled(half, zeros, 6, [0, 1, 2]) == ims_sum(half, zeros, 6) == 6 * Fraction(1, 2)


@settings(max_examples=50, deadline=None)
@given(st.fractions(min_value=0, max_value=1, max_denominator=32), st.text(alphabet="01", max_size=10))
def test_bernoulli_chain_rule(theta, x):
    env = bernoulli_env(theta)
    assert env(x + "0") + env(x + "1") == env(x)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=2, max_value=5), st.integers(min_value=0, max_value=2**32), st.integers(min_value=1, max_value=30))
def test_block_env_chain_rule_along_samples(s, seed, n):
    env = block_env(s)
    x = sample(env, n, seed)
    assert env(x) > 0
    for t in range(n):
        assert env(x[:t] + "0") + env(x[:t] + "1") == env(x[:t])
