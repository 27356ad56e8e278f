"""Sparse distributions over subsets of [n] and over pairs of subsets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .sets import MAX_EXACT_N, FamilyState, alive_mask, check_mask, full_mask, parse_mask

NORM_TOL = 1e-9


class ZeroMassError(ValueError):
    """Conditioning left no probability mass."""


def _merge(masks: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    uniq, inv = np.unique(masks, return_inverse=True)
    merged = np.bincount(inv.ravel(), weights=weights, minlength=len(uniq))
    keep = merged > 0
    return uniq[keep], merged[keep]


@dataclass(frozen=True, eq=False)
class Dist:
    """A finitely supported probability distribution on 2^[n].

    ``masks`` is sorted and duplicate free; ``weights`` are strictly positive
    and sum to one within ``NORM_TOL``.
    """

    n: int
    masks: np.ndarray
    weights: np.ndarray
    cumulative: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        full_mask(self.n)
        masks = np.asarray(self.masks, dtype=np.int64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if masks.shape != weights.shape or masks.ndim != 1 or len(masks) == 0:
            raise ValueError("support must be a non-empty 1-d list of (mask, weight)")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        if abs(weights.sum() - 1.0) > NORM_TOL:
            raise ValueError(f"weights sum to {weights.sum()!r}, not 1")
        if np.any(masks < 0) or np.any(masks >> self.n):
            raise ValueError(f"support mask outside [{self.n}]")
        if np.any(np.diff(masks) <= 0):
            raise ValueError("support masks must be sorted and distinct")
        object.__setattr__(self, "masks", masks)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "cumulative", np.cumsum(weights))

    @classmethod
    def from_arrays(cls, n: int, masks, weights, normalize: bool = False) -> Dist:
        masks, weights = _merge(np.asarray(masks, dtype=np.int64), np.asarray(weights, dtype=np.float64))
        if normalize:
            total = weights.sum()
            if total <= 0:
                raise ZeroMassError("no mass to normalise")
            weights = weights / total
        return cls(n, masks, weights)

    @classmethod
    def from_pairs(cls, n: int, pairs: Iterable[tuple[int, float]], normalize: bool = False) -> Dist:
        pairs = list(pairs)
        return cls.from_arrays(n, [parse_mask(m, n) for m, _ in pairs], [w for _, w in pairs], normalize)

    @classmethod
    def point(cls, n: int, mask: int) -> Dist:
        return cls(n, np.array([check_mask(mask, n)]), np.array([1.0]))

    def __len__(self) -> int:
        return len(self.masks)

    def items(self) -> list[tuple[int, float]]:
        return [(int(m), float(w)) for m, w in zip(self.masks, self.weights)]

    def prob(self, mask: int) -> float:
        i = np.searchsorted(self.masks, mask)
        if i < len(self.masks) and self.masks[i] == mask:
            return float(self.weights[i])
        return 0.0


@dataclass(frozen=True, eq=False)
class JointDist:
    """A finitely supported distribution on 2^[n] x 2^[n]."""

    n: int
    a: np.ndarray
    b: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        full_mask(self.n)
        a = np.asarray(self.a, dtype=np.int64)
        b = np.asarray(self.b, dtype=np.int64)
        w = np.asarray(self.weights, dtype=np.float64)
        if not (a.shape == b.shape == w.shape) or a.ndim != 1 or len(a) == 0:
            raise ValueError("joint support must be a non-empty list of (a, b, weight)")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        if abs(w.sum() - 1.0) > NORM_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        for m in (a, b):
            if np.any(m < 0) or np.any(m >> self.n):
                raise ValueError(f"support mask outside [{self.n}]")
        if len(np.unique(np.stack([a, b], axis=1), axis=0)) != len(a):
            raise ValueError("joint support pairs must be distinct")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_arrays(cls, n: int, a, b, weights, normalize: bool = False) -> JointDist:
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        w = np.asarray(weights, dtype=np.float64)
        pairs = np.stack([a, b], axis=1)
        uniq, inv = np.unique(pairs, axis=0, return_inverse=True)
        merged = np.bincount(inv.ravel(), weights=w, minlength=len(uniq))
        keep = merged > 0
        uniq, merged = uniq[keep], merged[keep]
        if normalize:
            merged = merged / merged.sum()
        return cls(n, uniq[:, 0], uniq[:, 1], merged)

    @classmethod
    def from_triples(cls, n: int, triples: Iterable[tuple[int, int, float]], normalize: bool = False) -> JointDist:
        triples = list(triples)
        return cls.from_arrays(
            n,
            [parse_mask(t[0], n) for t in triples],
            [parse_mask(t[1], n) for t in triples],
            [t[2] for t in triples],
            normalize,
        )

    def __len__(self) -> int:
        return len(self.weights)

    def items(self) -> list[tuple[int, int, float]]:
        return [(int(x), int(y), float(w)) for x, y, w in zip(self.a, self.b, self.weights)]

    def marginals(self) -> tuple[Dist, Dist]:
        return (
            Dist.from_arrays(self.n, self.a, self.weights, normalize=True),
            Dist.from_arrays(self.n, self.b, self.weights, normalize=True),
        )

    def log_ratios(self) -> np.ndarray:
        """log2 of mu(a, b) / (mu_A(a) mu_B(b)) at every support point."""
        da, db = self.marginals()
        pa = da.weights[np.searchsorted(da.masks, self.a)]
        pb = db.weights[np.searchsorted(db.masks, self.b)]
        return np.log2(self.weights) - np.log2(pa) - np.log2(pb)


def product_joint(da: Dist, db: Dist) -> JointDist:
    if da.n != db.n:
        raise ValueError("marginals over different ground sets")
    a = np.repeat(da.masks, len(db))
    b = np.tile(db.masks, len(da))
    w = np.outer(da.weights, db.weights).ravel()
    return JointDist.from_arrays(da.n, a, b, w, normalize=True)


# -- sampling and measures ---------------------------------------------------


def sample(d: Dist, rng: np.random.Generator) -> int:
    return int(sample_many(d, rng, 1)[0])


def sample_many(d: Dist, rng: np.random.Generator, size: int) -> np.ndarray:
    """Inverse-CDF draws over the cumulative weight array."""
    u = rng.random(size) * d.cumulative[-1]
    idx = np.searchsorted(d.cumulative, u, side="right")
    return d.masks[np.minimum(idx, len(d.masks) - 1)]


def downset_measure(d: Dist, u: int) -> float:
    """Mass of the down-set 2^u, i.e. P[A is a subset of u]."""
    return float(d.weights[(d.masks & ~np.int64(u)) == 0].sum())


def zeta_transform(table: np.ndarray) -> np.ndarray:
    """Sum over subsets: out[u] = sum of table[s] for s a subset of u."""
    out = np.array(table, dtype=np.float64, copy=True)
    k = int(len(out)).bit_length() - 1
    if len(out) != 1 << k:
        raise ValueError("table length must be a power of two")
    for i in range(k):
        view = out.reshape(-1, 2, 1 << i)
        view[:, 1, :] += view[:, 0, :]
    return out


def downset_measure_all(d: Dist) -> np.ndarray:
    if d.n > MAX_EXACT_N:
        raise ValueError(f"dense down-set table needs n <= {MAX_EXACT_N}, got {d.n}")
    table = np.zeros(1 << d.n)
    np.add.at(table, d.masks, d.weights)
    return zeta_transform(table)


def disjoint_probability(da: Dist, db: Dist) -> float:
    """P[A and B are disjoint] for independent A ~ da, B ~ db."""
    if da.n != db.n:
        raise ValueError("distributions over different ground sets")
    return _disjoint_mass(da.masks, da.weights, db.masks, db.weights)


def _disjoint_mass(am, aw, bm, bw, chunk: int = 1 << 22) -> float:
    # sum_b w_b * mu_A(2^([n] \ b)), done as a blocked pairwise AND
    total = 0.0
    step = max(1, chunk // max(1, len(am)))
    for i in range(0, len(bm), step):
        hit = (bm[i:i + step, None] & am[None, :]) == 0
        total += float(bw[i:i + step] @ (hit @ aw))
    return total


def restrict_a(d: Dist, state: FamilyState) -> Dist:
    return _restrict(d, state.ground, state.removed_a)


def restrict_b(d: Dist, state: FamilyState) -> Dist:
    return _restrict(d, state.ground, state.removed_b)


def _restrict(d: Dist, ground: int, removed) -> Dist:
    if np.any(d.masks & ~np.int64(ground)):
        raise ValueError("distribution is not supported inside the family's ground set")
    keep = alive_mask(d.masks, removed)
    if not keep.any():
        raise ZeroMassError("family has zero surviving mass")
    w = d.weights[keep]
    return Dist(d.n, d.masks[keep], w / w.sum())


def project(d: Dist, x: int) -> Dist:
    """Pushforward under A -> A & x."""
    check_mask(x, d.n)
    return Dist.from_arrays(d.n, d.masks & np.int64(x), d.weights, normalize=True)


# -- information quantities --------------------------------------------------


@dataclass(frozen=True)
class InfoReport:
    mutual_information_bits: float
    i_infinity_bits: float
    tv_to_reference: float | None = None


def mutual_information(j: JointDist) -> float:
    return max(0.0, float(j.weights @ j.log_ratios()))


def i_infinity(j: JointDist) -> float:
    return float(j.log_ratios().max())


def tv_distance(p: JointDist, q: JointDist) -> float:
    if p.n != q.n:
        raise ValueError("joints over different ground sets")
    a = np.concatenate([p.a, q.a])
    b = np.concatenate([p.b, q.b])
    w = np.concatenate([p.weights, -q.weights])
    pairs = np.stack([a, b], axis=1)
    _, inv = np.unique(pairs, axis=0, return_inverse=True)
    diff = np.bincount(inv.ravel(), weights=w)
    return min(1.0, 0.5 * float(np.abs(diff).sum()))


def info_report(j: JointDist, reference: JointDist | None = None) -> InfoReport:
    tv = tv_distance(j, reference) if reference is not None else None
    return InfoReport(mutual_information(j), i_infinity(j), tv)


# -- generators --------------------------------------------------------------


def _all_masks(n: int) -> np.ndarray:
    if n > MAX_EXACT_N:
        raise ValueError(f"full support needs n <= {MAX_EXACT_N}, got {n}")
    return np.arange(1 << n, dtype=np.int64)


def _popcounts(masks: np.ndarray, n: int) -> np.ndarray:
    return sum(((masks >> i) & 1) for i in range(n)) if n else np.zeros_like(masks)


def _random_masks(n: int, count: int, density: float, rng: np.random.Generator) -> np.ndarray:
    bits = rng.random((count, n)) < density
    return (bits.astype(np.int64) << np.arange(n, dtype=np.int64)).sum(axis=1)


def _distinct_random_masks(n: int, count: int, rng: np.random.Generator, density: float = 0.5) -> np.ndarray:
    if n <= 62 and count > (1 << n):
        raise ValueError(f"cannot draw {count} distinct subsets of [{n}]")
    seen: set[int] = set()
    out = []
    for _ in range(1000):
        if len(out) == count:
            break
        for m in _random_masks(n, count, density, rng):
            m = int(m)
            if m not in seen:
                seen.add(m)
                out.append(m)
                if len(out) == count:
                    break
    if len(out) < count:
        raise ValueError(f"could not draw {count} distinct subsets at density {density}")
    return np.array(out, dtype=np.int64)


def generate(spec: dict, rng: np.random.Generator | None = None) -> Dist | JointDist:
    """Build a distribution from a generator spec such as ``{"kind": "uniform-all", "n": 8}``.

    Kinds: ``uniform-all``, ``uniform-k-subsets`` (k), ``random-sparse``
    (support_size, density), ``per-element-independent`` (p: list, or
    p_low/p_high for seeded random probabilities), ``point`` (set) and the
    joint kinds ``correlated-mixture`` (lam, base_size) and ``product``
    (a, b: nested specs).
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    kind = spec.get("kind")
    n = int(spec["n"])
    full_mask(n)
    if kind == "uniform-all":
        masks = _all_masks(n)
        return Dist(n, masks, np.full(len(masks), 1.0 / len(masks)))
    if kind == "uniform-k-subsets":
        k = int(spec["k"])
        if not 0 <= k <= n:
            raise ValueError(f"k must be in [0, n], got {k}")
        masks = _all_masks(n)
        masks = masks[_popcounts(masks, n) == k]
        return Dist(n, masks, np.full(len(masks), 1.0 / len(masks)))
    if kind == "random-sparse":
        size = int(spec["support_size"])
        density = float(spec.get("density", 0.5))
        if size < 1 or not 0 <= density <= 1:
            raise ValueError("random-sparse needs support_size >= 1 and density in [0, 1]")
        masks = _random_masks(n, size, density, rng)
        return Dist.from_arrays(n, masks, rng.random(size) + 1e-3, normalize=True)
    if kind == "per-element-independent":
        if "p" in spec:
            p = np.asarray(spec["p"], dtype=np.float64)
        else:
            p = rng.uniform(float(spec.get("p_low", 0.0)), float(spec.get("p_high", 1.0)), n)
        if p.shape != (n,) or np.any(p < 0) or np.any(p > 1):
            raise ValueError("per-element-independent needs n probabilities in [0, 1]")
        masks = _all_masks(n)
        bits = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)
        w = np.where(bits, p, 1 - p).prod(axis=1)
        keep = w > 0
        return Dist.from_arrays(n, masks[keep], w[keep], normalize=True)
    if kind == "point":
        return Dist.point(n, parse_mask(spec.get("set", 0), n))
    if kind == "correlated-mixture":
        return correlated_mixture(n, float(spec["lam"]), spec.get("base_size"), rng,
                                  float(spec.get("density", 0.5)))
    if kind == "product":
        return product_joint(generate({**spec["a"], "n": n}, rng), generate({**spec["b"], "n": n}, rng))
    raise ValueError(f"unknown generator kind {kind!r}")


def correlated_mixture(n: int, lam: float, base_size: int | None = None,
                       rng: np.random.Generator | None = None, density: float = 0.5) -> JointDist:
    """lam * uniform diagonal + (1 - lam) * uniform product over a base family.

    The base family is all of 2^[n], or ``base_size`` distinct random subsets
    with each element present independently with probability ``density``.
    """
    if not 0 <= lam <= 1:
        raise ValueError(f"lam must be in [0, 1], got {lam}")
    if base_size is None:
        base = _all_masks(n)
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        base = np.sort(_distinct_random_masks(n, int(base_size), rng, density))
    s = len(base)
    a = np.repeat(base, s)
    b = np.tile(base, s)
    w = np.full(s * s, (1 - lam) / (s * s))
    w[np.arange(s) * (s + 1)] += lam / s
    keep = w > 0
    return JointDist(n, a[keep], b[keep], w[keep] / w[keep].sum())


def uniform_diagonal(n: int) -> JointDist:
    masks = _all_masks(n)
    return JointDist(n, masks, masks, np.full(len(masks), 1.0 / len(masks)))
