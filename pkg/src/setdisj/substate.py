"""Bounded mutual information: truncate a correlated joint to bounded max-divergence
and run the product protocol on the truncated joint's marginals.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .dist import JointDist, i_infinity, mutual_information, tv_distance
from .harness import EXACT_PAIR_GUARD, EvalReport, GuardError, _Acc, _accumulate_run, _report, _sampled_pairs
from .protocol import DEFAULT_C, DisjointnessProtocol, RunOutcome

RATIO_TOL = 1e-9


class TruncationError(ValueError):
    pass


@dataclass(frozen=True)
class TruncationResult:
    nu: JointDist
    threshold_c: float
    removed_mass: float
    tv: float
    i_inf_nu: float

    @property
    def i_inf_bound(self) -> float:
        return self.threshold_c + math.log2(1 / (1 - self.removed_mass))

    def to_json(self) -> dict:
        return {"threshold_c": self.threshold_c, "removed_mass": self.removed_mass, "tv": self.tv,
                "i_inf_nu": self.i_inf_nu, "i_inf_bound": self.i_inf_bound, "support_size": len(self.nu)}


def truncate(mu: JointDist, c: float) -> TruncationResult:
    """Drop the pairs whose log2 density ratio exceeds ``c`` and renormalise.

    Ratios within RATIO_TOL of ``c`` are kept.
    """
    if c < 0:
        raise ValueError(f"threshold must be non-negative, got {c}")
    cut = mu.log_ratios() > c + RATIO_TOL
    kept = mu.weights[~cut]
    if len(kept) == 0:
        raise TruncationError(f"threshold {c} removes the whole support")
    removed = float(mu.weights[cut].sum())
    nu = JointDist(mu.n, mu.a[~cut], mu.b[~cut], kept / kept.sum())
    return TruncationResult(nu, c, removed, tv_distance(mu, nu), i_infinity(nu))


def find_threshold(mu: JointDist, tv_target: float) -> float:
    """Smallest c >= 0 among the support's log-ratios whose truncation removes at most ``tv_target``."""
    ratios = mu.log_ratios()
    cands = np.unique(np.concatenate([[0.0], ratios[ratios > 0]]))
    order = np.argsort(ratios)
    sorted_r, sorted_w = ratios[order], mu.weights[order]
    # mass strictly above c + tol, for every candidate at once
    tail = np.concatenate([np.cumsum(sorted_w[::-1])[::-1], [0.0]])
    removed = tail[np.searchsorted(sorted_r, cands + RATIO_TOL, side="right")]
    ok = np.flatnonzero(removed <= tv_target)
    return float(cands[ok[0]])


def reference_threshold(mu: JointDist, tv_target: float) -> float:
    """The reference bound 4(k+1)/tv_target with k the mutual information of ``mu``."""
    return 4 * (mutual_information(mu) + 1) / tv_target


def reduced_eps(mu: JointDist, eps: float, trunc: TruncationResult, mode: str) -> float:
    if mode == "paper-constants":
        k = mutual_information(mu)
        return eps * 2.0 ** (-8 * (k + 1) / eps - 1)
    if mode == "measured":
        return eps * 2.0 ** (-trunc.i_inf_nu - 1)
    raise ValueError(f"unknown mode {mode!r}")


class BoundedMIProtocol:
    """Product protocol run on the marginals of a truncation nu of ``mu``.

    nu is chosen with ||mu - nu||_TV <= eps/2, and the product protocol runs
    with a reduced error eps' so that nu's error stays below eps/2.
    """

    def __init__(self, mu: JointDist, eps: float, seed: int = 0, mode: str = "measured", C: float = DEFAULT_C):
        if not 0 < eps < 0.5:
            raise ValueError(f"eps must be in (0, 1/2), got {eps}")
        self.mu, self.eps, self.mode = mu, eps, mode
        self.truncation = truncate(mu, find_threshold(mu, eps / 2))
        self.eps_prime = reduced_eps(mu, eps, self.truncation, mode)
        if self.eps_prime <= 2.0 ** -mu.n:
            need = math.floor(math.log2(1 / self.eps_prime)) + 1
            raise ValueError(f"eps'={self.eps_prime:.3g} needs n >= {need}, got n={mu.n}")
        nu_a, nu_b = self.truncation.nu.marginals()
        self.inner = DisjointnessProtocol(nu_a, nu_b, self.eps_prime, seed, C)

    def run(self, a: int, b: int) -> RunOutcome:
        return self.inner.run(a, b)


def bounded_mi_protocol(mu: JointDist, eps: float, seed: int, a: int, b: int,
                        mode: str = "measured", C: float = DEFAULT_C) -> RunOutcome:
    return BoundedMIProtocol(mu, eps, seed, mode, C).run(a, b)


def evaluate_joint_exact(proto: BoundedMIProtocol) -> EvalReport:
    """mu-weighted error over every pair in the support of mu."""
    mu = proto.mu
    if len(mu) > EXACT_PAIR_GUARD:
        raise GuardError("joint support exceeds the exact-evaluation guard")
    t0 = time.perf_counter()
    acc = _Acc()
    for a, b, w in mu.items():
        _accumulate_run(acc, proto.inner, a, b, w)
    return _report(acc, proto.inner, t0)


def evaluate_joint_sampled(proto: BoundedMIProtocol, seed: int, num_samples: int) -> EvalReport:
    t0 = time.perf_counter()
    mu = proto.mu
    rng = np.random.default_rng(seed)
    cum = np.cumsum(mu.weights)
    idx = np.minimum(np.searchsorted(cum, rng.random(num_samples) * cum[-1], side="right"), len(mu) - 1)
    return _sampled_pairs(proto.inner, mu.a[idx], mu.b[idx], t0)
