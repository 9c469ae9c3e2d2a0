from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kmlab.complexity import (
    BlockKm,
    BudgetInsufficientError,
    EnumerationBudget,
    ReferenceSearch,
    TableCache,
    TableLoadError,
    bigM_approx,
    block_branch_km,
    enumerate_programs,
    k_approx,
    km_approx,
    km_block_exact,
    table_build,
    table_load,
    table_save,
)
from kmlab.core import dyadic, is_prefix_free, kraft_sum, strings_upto
from kmlab.machines import BlockMachine, ReferenceMachine

R = ReferenceMachine()
B8 = EnumerationBudget(8, 64)


def test_enumerate_small_budget():
    records = enumerate_programs(R, EnumerationBudget(2, 16))
    got = {r.program: (r.output, r.consumed, r.halted) for r in records}
    assert got == {
        "": ("", 0, False),
        "0": ("", 1, False),
        "1": ("", 1, False),
        "00": ("0", 2, False),
        "01": ("1", 2, False),
        "10": ("", 2, False),
        "11": ("", 2, True),
    }


def test_enumerate_empty_budget():
    records = enumerate_programs(R, EnumerationBudget(0, 1))
    assert [(r.program, r.output) for r in records] == [("", "")]


def test_enumerate_is_deterministic_and_parallel_safe():
    budget = EnumerationBudget(8, 256)
    assert enumerate_programs(R, budget) == enumerate_programs(R, budget)
    assert enumerate_programs(R, budget, workers=2) == enumerate_programs(R, budget)


def test_km_examples():
    assert km_approx("0", R, B8) == 2
    assert km_approx("0000", R, B8) == 7
    assert km_approx("", R, B8) == 0
    assert km_approx("", R, EnumerationBudget(0, 1)) == 0


def test_k_examples():
    assert k_approx("0", R, B8) == 4
    assert k_approx("", R, B8) == 2
    assert k_approx("0", R, EnumerationBudget(1, 64)) is None


def test_bigM_examples():
    assert bigM_approx("", R, B8) == 1
    assert bigM_approx("", R, EnumerationBudget(0, 1)) == 1
    v = bigM_approx("0", R, B8)
    assert Fraction(1, 4) <= v <= 1
    assert v == Fraction(77, 256)
    assert bigM_approx("0", R, EnumerationBudget(14, 4096)) == Fraction(5317, 16384)
    assert bigM_approx("01", R, EnumerationBudget(10, 64)) >= bigM_approx("01", R, B8)


def test_bigM_counts_only_minimal_programs():
    # "00" outputs "0"; its extensions add nothing more to M("0") unless they emit more
    table = table_build(R, EnumerationBudget(2, 16))
    assert table.bigM("0") == Fraction(1, 4)
    assert table.bigM("1") == Fraction(1, 4)


def test_reference_search_matches_enumeration():
    table = table_build(R, EnumerationBudget(14, 4096))
    search = ReferenceSearch()
    for x in strings_upto(8):
        if table.km(x) is not None:
            assert search.km(x) == table.km(x), x
        else:
            assert search.km(x) > 14, x


def test_reference_search_long_strings():
    search = ReferenceSearch()
    assert search.km("0" * 32) == 13
    assert search.km("01" * 16) == 13
    assert search.km("0" * 31 + "1") == 15


def test_block_km_closed_form_examples():
    bk = BlockKm(2)
    assert bk.km("000" + "0") == 5
    assert bk.km("000" + "1") == 7
    assert block_branch_km(2, "100") is None
    assert bk.code_length("000" + "101") == 4


def test_block_km_cross_check_against_enumeration():
    table = table_build(BlockMachine(2), EnumerationBudget(9, 4096))
    bk = BlockKm(2)
    assert table.km("0000") == 5
    assert table.km("0001") == 7
    for x in strings_upto(7):
        want = bk.km(x)
        assert (table.km(x) == want) if want <= 9 else table.km(x) is None, x


def test_block_km_reports_insufficient_inner_budget():
    inner = table_build(R, EnumerationBudget(4, 64))
    # "0101101" is not a block-code prefix and needs a long inner program
    with pytest.raises(BudgetInsufficientError):
        km_block_exact(2, "0101101", inner)


def test_table_round_trip(tmp_path):
    table = table_build(R, EnumerationBudget(10, 512), 4)
    path = tmp_path / "t.tsv"
    table_save(table, path)
    assert table_load(path) == table
    with pytest.raises(TableLoadError):
        table_load(path, descriptor="U:s=2:inner=R")
    with pytest.raises(TableLoadError):
        table_load(path, budget=EnumerationBudget(9, 512))


def test_table_load_rejects_garbage(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("not a table\n")
    with pytest.raises(TableLoadError):
        table_load(path)


def test_cache_hits_skip_enumeration(tmp_path):
    cache = TableCache(tmp_path)
    budget = EnumerationBudget(8, 64)
    first = cache.get(R, budget)
    second = cache.get(R, budget)
    assert cache.builds == 1 and cache.hits == 1
    assert first == second
    assert TableCache(tmp_path).get(R, budget) == first


def test_table_csv_columns(tmp_path):
    table = table_build(R, EnumerationBudget(6, 64), 2)
    table.write_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "x,km,k,bigM_num,bigM_den,budget_L,budget_S"
    assert lines[1] == ",0,2,1,1,6,64"
    assert len(lines) == 1 + 7


@pytest.fixture(scope="module")
def table14():
    return table_build(R, EnumerationBudget(14, 4096))


def test_table14_is_saturated(table14):
    assert table14.saturated


def test_halting_programs_are_prefix_free(table14):
    progs = table14.halting_programs()
    assert is_prefix_free(progs)
    assert kraft_sum(progs) <= 1


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet="01", max_size=8))
def test_complexity_ordering(table14, x):
    km, k, M = table14.km(x), table14.k(x), table14.bigM(x)
    if k is not None:
        assert km is not None and km <= k
    if km is not None:
        assert dyadic(km) <= M <= 1
        for j in range(len(x)):
            assert table14.km(x[:j]) <= km
    else:
        assert M == 0


@settings(max_examples=100, deadline=None)
@given(st.text(alphabet="01", max_size=7))
def test_bigM_is_a_semimeasure_on_the_table(table14, x):
    assert table14.bigM(x + "0") + table14.bigM(x + "1") <= table14.bigM(x)


@settings(max_examples=50, deadline=None)
@given(st.text(alphabet="01", min_size=1, max_size=20))
def test_reference_search_witness_runs(x):
    # the literal program (one emit opcode per symbol) is always a witness
    assert ReferenceSearch().km(x) <= 2 * len(x)


def test_budget_monotonicity():
    small = table_build(R, EnumerationBudget(8, 16))
    more_l = table_build(R, EnumerationBudget(10, 16))
    more_s = table_build(R, EnumerationBudget(8, 4096))
    for x in strings_upto(6):
        for bigger in (more_l, more_s):
            for f in ("km", "k"):
                a, b = getattr(small, f)(x), getattr(bigger, f)(x)
                assert a is None or (b is not None and b <= a), (f, x)
