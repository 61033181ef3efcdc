import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from gfnoma.access import (
    CtuAssignment,
    build_pool,
    classify,
    classify_counts,
    draw_ctus,
    occupancy_batch,
    select_ctus,
)
from gfnoma.verify import FIG7_CHOICE, occupancy_oracle


def test_pool_layout():
    assert build_pool(48, 4).per_rb == 12
    assert build_pool(12, 4).per_rb == 3
    fig7 = build_pool(6, 2)
    assert [fig7.rb_of(c) for c in range(1, 7)] == [1, 1, 1, 2, 2, 2]
    assert list(fig7.ctus_of(2)) == [4, 5, 6]
    with pytest.raises(ValueError, match="C not divisible by F"):
        build_pool(10, 4)


@given(st.sampled_from([(12, 4), (24, 4), (48, 4), (6, 2), (9, 3)]))
def test_rb_partition(cf):
    c, f = cf
    pool = build_pool(c, f)
    groups = [list(pool.ctus_of(r)) for r in range(1, f + 1)]
    assert sum(groups, []) == list(range(1, c + 1))
    assert all(pool.rb_of(x) == r for r, g in enumerate(groups, 1) for x in g)


def test_fig7_instance():
    rep = classify(CtuAssignment.from_choice(FIG7_CHOICE), build_pool(6, 2))
    assert rep.idle == {3}
    assert rep.singleton == {5: 5, 6: 1}
    assert rep.collision == {1: [4, 7], 2: [2, 3], 4: [6, 8]}


def test_select_edge_cases():
    pool = build_pool(12, 4)
    rng = np.random.default_rng(0)
    empty = select_ctus(set(), pool, rng)
    assert empty.choice == {} and classify(empty, pool).v_ic == 12
    one = classify(select_ctus({7}, pool, rng), pool)
    assert (one.v_sc, one.v_ic, one.v_cc) == (1, 11, 0)


def test_distinct_and_piled_assignments():
    pool = build_pool(6, 1)
    rep = classify(CtuAssignment.from_choice({1: 1, 2: 2, 3: 3}), pool)
    assert (rep.v_cc, rep.v_sc) == (0, 3)
    rep = classify(CtuAssignment.from_choice({1: 4, 2: 4, 3: 4}), pool)
    assert (rep.v_cc, rep.v_sc, rep.v_ic) == (1, 0, 5)


def test_uniform_choice_chi_square():
    pool = build_pool(48, 4)
    ctus = draw_ctus(100_000, pool, np.random.default_rng(1))
    counts = np.bincount(ctus, minlength=49)[1:]
    assert stats.chisquare(counts).pvalue > 0.001


@given(st.integers(0, 40), st.sampled_from([12, 24, 36, 48]), st.integers(0, 2**32 - 1))
def test_partition_invariants(n, c, seed):
    pool = build_pool(c, 4)
    rng = np.random.default_rng(seed)
    rep = classify(select_ctus(range(n), pool, rng), pool)
    assert rep.v_ic + rep.v_sc + rep.v_cc == c
    assert rep.v_sc + sum(len(u) for u in rep.collision.values()) == n
    sets = [rep.idle, set(rep.singleton), set(rep.collision)]
    assert set().union(*sets) == set(range(1, c + 1))
    assert sum(len(s) for s in sets) == c


@given(st.lists(st.integers(1, 24), max_size=60))
def test_counts_agree_with_report(ctus):
    pool = build_pool(24, 4)
    rep = classify(CtuAssignment.from_choice(dict(enumerate(ctus))), pool)
    assert classify_counts(np.array(ctus, dtype=np.int64), pool) == (rep.v_ic, rep.v_sc, rep.v_cc)


def test_small_exhaustive_against_literal_oracle():
    for c in range(1, 5):
        pool = build_pool(c, 1)
        for n in range(0, 5):
            for choices in itertools.product(range(1, c + 1), repeat=n):
                rep = classify(CtuAssignment.from_choice(dict(enumerate(choices, 1))), pool)
                idle, single, coll = occupancy_oracle(choices, c)
                assert (rep.idle, rep.singleton, rep.collision) == (idle, single, coll)


def test_occupancy_batch_rows():
    rows = np.array([[1, 1, 2], [3, 2, 1]])
    occ, seen = occupancy_batch(rows, 3)
    assert occ[:, 1:].tolist() == [[2, 1, 0], [1, 1, 1]]
    assert seen.tolist() == [[2, 2, 1], [1, 1, 1]]
