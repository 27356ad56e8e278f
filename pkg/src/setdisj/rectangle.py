"""Full (all-pairs-disjoint) rectangles 2^U x 2^(X \\ U) of large measure.

Every maximal rectangle on which disjointness is identically 1 has this
shape, so the exact extractor scans all U inside the ground set with two
sum-over-subsets tables. The sampled extractor follows the probabilistic
construction: U is the union of ``ell`` independent draws from the A side.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .dist import Dist, disjoint_probability, downset_measure, sample_many, zeta_transform
from .sets import MAX_EXACT_N, compress, expand, is_subset, popcount

TIE_RTOL = 1e-12


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class RectangleWitness:
    u: int
    measure_a: float
    measure_b: float
    ell: int
    mode: str
    eps: float
    meets_guarantee: bool = True

    @property
    def measure(self) -> float:
        return self.measure_a * self.measure_b

    def to_json(self) -> dict:
        return {"u": self.u, "measure_a": self.measure_a, "measure_b": self.measure_b,
                "ell": self.ell, "mode": self.mode, "meets_guarantee": self.meets_guarantee}


def lemma_ell(n: int, eps: float) -> int:
    """floor(sqrt(n / log2(1/eps))), at least 1. Requires 2^-n < eps < 1/2."""
    if not (2.0 ** -n < eps < 0.5):
        raise PreconditionError(f"eps={eps} must lie strictly between 2^-{n} and 1/2")
    return max(1, math.floor(math.sqrt(n / math.log2(1 / eps)) + 1e-12))


def bound_a(size: int, ell: int) -> float:
    return 2.0 ** (-3 * size / ell)


def bound_b(eps: float, ell: int) -> float:
    return eps ** ell / 2


def _meets(size: int, ell: int, eps: float, ma: float, mb: float) -> bool:
    return ma >= bound_a(size, ell) and mb >= bound_b(eps, ell)


def _downset_table(d: Dist, x: int) -> np.ndarray:
    k = popcount(x)
    inside = (d.masks & ~np.int64(x)) == 0
    table = np.zeros(1 << k)
    np.add.at(table, compress(d.masks[inside], x), d.weights[inside])
    return zeta_transform(table)


def pick_best(products: np.ndarray) -> int:
    """Index of the maximum, ties (to TIE_RTOL) going to the smallest index."""
    best = products.max()
    return int(np.flatnonzero(products >= best * (1 - TIE_RTOL))[0])


def extract_exact(da: Dist, db: Dist, eps: float, x: int) -> RectangleWitness:
    size = popcount(x)
    if size > MAX_EXACT_N:
        raise PreconditionError(f"exact scan needs |x| <= {MAX_EXACT_N}, got {size}")
    ell = lemma_ell(size, eps)
    p = disjoint_probability(da, db)
    if p < eps:
        raise PreconditionError(f"disjointness probability {p} is below eps={eps}")
    ta = _downset_table(da, x)
    tb = _downset_table(db, x)
    # tb reversed is indexed by the complement of U within x
    tb = tb[::-1]
    products = ta * tb
    # maximise over the witnesses meeting both per-side bounds; the plain
    # product argmax can trade one side below its bound
    eligible = (ta >= bound_a(size, ell)) & (tb >= bound_b(eps, ell))
    if eligible.any():
        products = np.where(eligible, products, -1.0)
    idx = pick_best(products)
    ma, mb = float(ta[idx]), float(tb[idx])
    return RectangleWitness(expand(idx, x), ma, mb, ell, "exact", eps, bool(eligible[idx]))


def extract_sampled(da: Dist, db: Dist, eps: float, x: int, rng: np.random.Generator,
                    max_retries: int) -> RectangleWitness | None:
    """Rejection-sample U as a union of ``ell`` draws from ``da``.

    Returns the first witness meeting both bounds, otherwise the best one seen
    with ``meets_guarantee=False``, or None when no attempt was made.
    """
    size = popcount(x)
    ell = lemma_ell(size, eps)
    best = None
    for _ in range(max_retries):
        u = int(np.bitwise_or.reduce(sample_many(da, rng, ell))) & x
        ma = downset_measure(da, u)
        mb = downset_measure(db, x & ~u)
        if _meets(size, ell, eps, ma, mb):
            return RectangleWitness(u, ma, mb, ell, "sampled", eps, True)
        if best is None or ma * mb > best.measure:
            best = RectangleWitness(u, ma, mb, ell, "sampled", eps, False)
    return best


@dataclass(frozen=True)
class WitnessReport:
    contained: bool
    measure_a: float
    measure_b: float
    measures_match: bool
    pairs_disjoint: bool
    bound_a_ok: bool
    bound_b_ok: bool

    @property
    def ok(self) -> bool:
        return all((self.contained, self.measures_match, self.pairs_disjoint, self.bound_a_ok, self.bound_b_ok))


def _random_subset(mask: int, rng: np.random.Generator) -> int:
    out = 0
    m = mask
    while m:
        low = m & -m
        if rng.random() < 0.5:
            out |= low
        m ^= low
    return out


def verify_witness(da: Dist, db: Dist, w: RectangleWitness, x: int,
                   rng: np.random.Generator | None = None, pairs: int = 100) -> WitnessReport:
    rng = rng if rng is not None else np.random.default_rng(0)
    contained = is_subset(w.u, x)
    ma = downset_measure(da, w.u)
    mb = downset_measure(db, x & ~w.u)
    match = abs(ma - w.measure_a) <= 1e-12 and abs(mb - w.measure_b) <= 1e-12
    v = x & ~w.u
    pairs_ok = all(_random_subset(w.u, rng) & _random_subset(v, rng) == 0 for _ in range(pairs))
    size = popcount(x)
    return WitnessReport(contained, ma, mb, match, pairs_ok,
                         ma >= bound_a(size, w.ell), mb >= bound_b(w.eps, w.ell))


def jensen_expectation(da: Dist, db: Dist, ell: int, x: int) -> float:
    """E over ell i.i.d. draws A_1..A_ell ~ da of db(2^(x minus the union)).

    Computed exactly by enumerating all ell-tuples of da's support.
    """
    masks = da.masks & np.int64(x)
    unions = np.zeros(1, dtype=np.int64)
    probs = np.ones(1)
    for _ in range(ell):
        unions = (unions[:, None] | masks[None, :]).ravel()
        probs = np.outer(probs, da.weights).ravel()
    uniq, inv = np.unique(unions, return_inverse=True)
    pu = np.bincount(inv.ravel(), weights=probs)
    return float(sum(p * downset_measure(db, x & ~int(u)) for u, p in zip(uniq, pu)))


def all_pairs_disjoint(u: int, x: int) -> bool:
    """Exhaustively check A & B == 0 over 2^u x 2^(x minus u)."""
    v = x & ~u
    return all(a & b == 0 for a, b in itertools.product(list(_subsets(u)), list(_subsets(v))))


def _subsets(mask: int):
    s = mask
    while True:
        yield s
        if s == 0:
            return
        s = (s - 1) & mask
