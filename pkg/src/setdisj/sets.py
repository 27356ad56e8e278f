"""Subset masks over a ground set [n] and the removal-history family representation.

A subset of [n] = {1, ..., n} is a plain ``int`` whose bit ``i - 1`` is set
when element ``i`` belongs to the set. Human-readable input uses the
``"{1,3,5}"`` form.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import reduce
from typing import Iterable

import numpy as np

MAX_N = 63
MAX_EXACT_N = 24


def full_mask(n: int) -> int:
    if not 0 <= n <= MAX_N:
        raise ValueError(f"ground set size must be in [0, {MAX_N}], got {n}")
    return (1 << n) - 1


def check_mask(mask: int, n: int) -> int:
    """Return ``mask`` unchanged after checking it lies inside [n]."""
    mask = int(mask)
    if mask < 0 or mask >> n:
        raise ValueError(f"mask {mask} is not a subset of [{n}]")
    return mask


def is_subset(a: int, b: int) -> bool:
    return a & ~b == 0


def disjoint(a: int, b: int) -> bool:
    return a & b == 0


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def elements(mask: int) -> list[int]:
    """1-based elements of ``mask`` in increasing order."""
    out = []
    i = 1
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def from_elements(items: Iterable[int]) -> int:
    mask = 0
    for i in items:
        if i < 1 or i > MAX_N:
            raise ValueError(f"element {i} outside [1, {MAX_N}]")
        mask |= 1 << (i - 1)
    return mask


def union_of(masks: Iterable[int]) -> int:
    return reduce(lambda u, m: u | int(m), masks, 0)


_SET_RE = re.compile(r"^\{\s*(\d+(\s*,\s*\d+)*)?\s*\}$")


def parse_mask(value: int | str, n: int | None = None) -> int:
    """Accept an unsigned decimal integer (or its string) or the ``"{1,3}"`` form."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        mask = int(value)
    elif isinstance(value, str):
        text = value.strip()
        if _SET_RE.match(text):
            body = text[1:-1].strip()
            mask = from_elements(int(t) for t in body.split(",")) if body else 0
        elif text.isdigit():
            mask = int(text)
        else:
            raise ValueError(f"cannot parse subset {value!r}")
    else:
        raise TypeError(f"cannot parse subset from {type(value).__name__}")
    if n is not None:
        check_mask(mask, n)
    return mask


def format_mask(mask: int) -> str:
    return "{" + ",".join(map(str, elements(mask))) + "}"


def compress(masks, ground: int):
    """Map masks onto the bit positions of ``ground`` packed to 0..|ground|-1.

    Works on a python int or a numpy integer array. Bits outside ``ground``
    are dropped. The map is order preserving on subsets of ``ground``.
    """
    scalar = not isinstance(masks, np.ndarray)
    arr = np.asarray(masks, dtype=np.int64)
    out = np.zeros_like(arr)
    for j, e in enumerate(elements(ground)):
        out |= ((arr >> (e - 1)) & 1) << j
    return int(out) if scalar else out


def expand(masks, ground: int):
    """Inverse of :func:`compress`."""
    scalar = not isinstance(masks, np.ndarray)
    arr = np.asarray(masks, dtype=np.int64)
    out = np.zeros_like(arr)
    for j, e in enumerate(elements(ground)):
        out |= ((arr >> j) & 1) << (e - 1)
    return int(out) if scalar else out


@dataclass(frozen=True)
class FamilyState:
    """Families A_i, B_i inside 2^ground, stored as their removal history.

    ``removed_a`` holds the U_j of A-side removals and ``removed_b`` the
    X \\ U_j of B-side removals. A set is removed exactly when it is contained
    in some stored mask, so membership never needs the families themselves.
    """

    ground: int
    removed_a: tuple[int, ...] = ()
    removed_b: tuple[int, ...] = ()

    def __post_init__(self):
        for r in self.removed_a + self.removed_b:
            if not is_subset(r, self.ground):
                raise ValueError(f"removal mask {r} is not inside ground set {self.ground}")

    def remove_a(self, u: int) -> FamilyState:
        return FamilyState(self.ground, self.removed_a + (u,), self.removed_b)

    def remove_b(self, v: int) -> FamilyState:
        return FamilyState(self.ground, self.removed_a, self.removed_b + (v,))


def _contains(ground: int, removed: tuple[int, ...], s: int) -> bool:
    if not is_subset(s, ground):
        raise ValueError(f"set {s} is not inside ground set {ground}")
    return all(s & ~r for r in removed)


def family_contains_a(state: FamilyState, a: int) -> bool:
    return _contains(state.ground, state.removed_a, a)


def family_contains_b(state: FamilyState, b: int) -> bool:
    return _contains(state.ground, state.removed_b, b)


def alive_mask(masks: np.ndarray, removed: Iterable[int]) -> np.ndarray:
    """Vectorised family membership for an array of masks."""
    alive = np.ones(len(masks), dtype=bool)
    for r in removed:
        alive &= (masks & ~np.int64(r)) != 0
    return alive
