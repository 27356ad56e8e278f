import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import materialize_family
from setdisj.sets import (FamilyState, alive_mask, compress, disjoint, expand, family_contains_a,
                          family_contains_b, format_mask, from_elements, parse_mask, union_of)

S = from_elements


def test_family_contains_examples():
    assert family_contains_a(FamilyState(S([1, 2, 3, 4])), S([1, 3]))
    assert not family_contains_a(FamilyState(S([1, 2, 3, 4]), (S([1, 2, 3]),)), S([1, 3]))
    assert family_contains_a(FamilyState(S([1, 2, 3, 4]), (S([1, 2]),)), S([1, 3]))


def test_family_contains_b_uses_b_history():
    st_ = FamilyState(S([1, 2, 3]), removed_a=(S([1]),), removed_b=(S([2, 3]),))
    assert family_contains_b(st_, S([1]))
    assert not family_contains_b(st_, S([3]))


def test_family_contains_rejects_outside_ground():
    with pytest.raises(ValueError):
        family_contains_a(FamilyState(S([1, 2])), S([3]))


def test_removal_must_lie_in_ground():
    with pytest.raises(ValueError):
        FamilyState(S([1, 2]), removed_a=(S([3]),))


@pytest.mark.parametrize("masks, expected", [
    ([S([1]), S([2])], S([1, 2])),
    ([], 0),
    ([S([1, 2]), S([2, 3])], S([1, 2, 3])),
])
def test_union_of(masks, expected):
    assert union_of(masks) == expected


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8), st.data())
def test_membership_matches_materialized_family(k, data):
    ground = data.draw(st.integers(1, (1 << 12) - 1))
    removed = tuple(data.draw(st.lists(st.integers(0, (1 << 12) - 1), max_size=k)))
    removed = tuple(r & ground for r in removed)
    state = FamilyState(ground, removed)
    fam = materialize_family(ground, removed)
    subs = [s for s in range(1 << 12) if s & ~ground == 0]
    assert {s for s in subs if family_contains_a(state, s)} == fam
    arr = np.array(subs, dtype=np.int64)
    assert set(arr[alive_mask(arr, removed)].tolist()) == fam


def test_membership_is_monotone():
    ground = S(range(1, 7))
    state = FamilyState(ground)
    rng = np.random.default_rng(3)
    outside: set[int] = set()
    for _ in range(10):
        state = state.remove_a(int(rng.integers(0, 64)) & ground)
        now_out = {s for s in range(64) if not family_contains_a(state, s)}
        assert outside <= now_out
        outside = now_out


@given(st.integers(0, 2**20 - 1), st.integers(0, 2**20 - 1))
def test_disjoint_is_bitwise(a, b):
    per_element = all(not ((a >> i) & 1 and (b >> i) & 1) for i in range(20))
    assert disjoint(a, b) == per_element


@pytest.mark.parametrize("text, mask", [("{1,3,5}", 0b10101), ("{}", 0), ("12", 12), (" { 2 } ", 2)])
def test_parse_mask(text, mask):
    assert parse_mask(text) == mask


def test_parse_mask_rejects_out_of_range():
    with pytest.raises(ValueError):
        parse_mask("{5}", 4)
    with pytest.raises(ValueError):
        parse_mask("{1,x}")


def test_format_roundtrip():
    for m in (0, 1, 0b1011, (1 << 62) | 1):
        assert parse_mask(format_mask(m)) == m


def test_compress_expand_roundtrip_and_order():
    ground = S([2, 5, 6, 9])
    subs = sorted(s for s in range(1 << 9) if s & ~ground == 0)
    packed = [compress(s, ground) for s in subs]
    assert packed == list(range(16))
    assert [expand(p, ground) for p in packed] == subs
    arr = compress(np.array(subs, dtype=np.int64), ground)
    assert arr.tolist() == packed


def test_exhaustive_small_family_agreement():
    ground = S([1, 2, 3, 4])
    for removed in itertools.product(range(16), repeat=2):
        state = FamilyState(ground, removed)
        fam = materialize_family(ground, removed)
        assert {s for s in range(16) if family_contains_a(state, s)} == fam
