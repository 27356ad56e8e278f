"""Deterministic two-party protocol for disjointness under a product distribution.

Each level works on a ground set X known to both players, with A \\ X and
B \\ X already disjoint. After two threshold bits, both players compute the
same rectangle schedule from the distribution alone: the sequence of full
rectangles removed along the path where every membership test answers "no".
Each player then sends the index of its first "yes" step, which replaces the
one-bit-per-step sequential protocol at logarithmic cost. The earliest yes
halves the ground set; otherwise the players declare "not disjoint". Once
|X| <= 4 log2(1/eps), Alice sends A & X verbatim.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dist import Dist, _disjoint_mass, project, zeta_transform
from .rectangle import PreconditionError, extract_sampled, pick_best
from .sets import (MAX_EXACT_N, FamilyState, check_mask, compress, expand, family_contains_a,
                   family_contains_b, full_mask, is_subset, popcount)

log = logging.getLogger(__name__)

ALMOST_EMPTY = "almost-empty"
EXHAUSTED = "exhausted"
DEGENERATE = "degenerate"

DEFAULT_C = 2.0
SAMPLED_RETRIES = 2000


@dataclass(frozen=True)
class ScheduleStep:
    u: int
    side: str
    y: int
    rect_measure: float


@dataclass(frozen=True)
class Stop:
    kind: str
    at_step: int


@dataclass(frozen=True)
class Schedule:
    x: int
    eps: float
    steps: tuple[ScheduleStep, ...]
    stop: Stop
    t_cap: int


@dataclass(frozen=True)
class Declare:
    disjoint: bool


@dataclass(frozen=True)
class Recurse:
    y: int


@dataclass(frozen=True)
class Message:
    speaker: str
    bits: str
    label: str


@dataclass
class Transcript:
    messages: list[Message] = field(default_factory=list)

    def send(self, speaker: str, bits: str, label: str) -> None:
        self.messages.append(Message(speaker, bits, label))

    @property
    def total_bits(self) -> int:
        return sum(len(m.bits) for m in self.messages)

    def dump(self) -> str:
        return "".join(f"{m.speaker}\t{m.bits}\t{m.label}\n" for m in self.messages)


@dataclass
class RunOutcome:
    disjoint: bool
    correct: bool
    cost_bits: int
    trace: list[tuple[int, str]]
    transcript: Transcript

    @property
    def answer(self) -> str:
        return "disjoint" if self.disjoint else "not-disjoint"


def base_case_size(eps: float) -> float:
    return 4 * math.log2(1 / eps)


def t_cap(size: int, eps: float, C: float = DEFAULT_C) -> int:
    lg = math.log2(1 / eps)
    return math.ceil(2 ** (C * math.sqrt(size * lg)) * (size + lg))


def index_width(steps: int) -> int:
    return math.ceil(math.log2(steps + 2))


def _bits(value: int, width: int) -> str:
    return format(value, f"0{width}b") if width else ""


def build_schedule(mu_a: Dist, mu_b: Dist, x: int, eps: float, seed: int = 0,
                   C: float = DEFAULT_C) -> Schedule:
    """Rectangle schedule for one subprotocol on ground set ``x``.

    Depends only on the distributions, ``x``, ``eps`` and ``seed``.
    """
    size = popcount(x)
    if not 0 < eps < 0.5:
        raise PreconditionError(f"eps must be in (0, 1/2), got {eps}")
    if size <= base_case_size(eps):
        raise PreconditionError(f"|x|={size} is within the base case for eps={eps}")
    cap = t_cap(size, eps, C)
    na, nb = project(mu_a, x), project(mu_b, x)
    if size <= MAX_EXACT_N:
        return _exact_schedule(na, nb, x, eps, cap)
    return _sampled_schedule(na, nb, x, eps, cap, np.random.default_rng([seed, x]))


def _exact_schedule(na: Dist, nb: Dist, x: int, eps: float, cap: int) -> Schedule:
    size = popcount(x)
    full = (1 << size) - 1
    am, bm = compress(na.masks, x), compress(nb.masks, x)
    alive_a = np.ones(len(am), dtype=bool)
    alive_b = np.ones(len(bm), dtype=bool)
    steps: list[ScheduleStep] = []
    for i in range(cap + 1):
        if not alive_a.any() or not alive_b.any():
            return Schedule(x, eps, tuple(steps), Stop(DEGENERATE, i), cap)
        wa = np.where(alive_a, na.weights, 0.0)
        wb = np.where(alive_b, nb.weights, 0.0)
        wa /= wa.sum()
        wb /= wb.sum()
        ta = np.zeros(1 << size)
        tb = np.zeros(1 << size)
        np.add.at(ta, am, wa)
        np.add.at(tb, bm, wb)
        ta, tb = zeta_transform(ta), zeta_transform(tb)
        p_disjoint = float(wb @ ta[full ^ bm])
        if p_disjoint <= eps / 2:
            return Schedule(x, eps, tuple(steps), Stop(ALMOST_EMPTY, i), cap)
        if i == cap:
            break
        products = ta * tb[::-1]
        idx = pick_best(products)
        step = _make_step(expand(idx, x), x, float(products[idx]))
        steps.append(step)
        if step.side == "A":
            alive_a &= (am & ~idx) != 0
        else:
            alive_b &= (bm & ~(full ^ idx)) != 0
    log.warning("schedule on x=%d hit its cap of %d steps", x, cap)
    return Schedule(x, eps, tuple(steps), Stop(EXHAUSTED, cap), cap)


def _sampled_schedule(na: Dist, nb: Dist, x: int, eps: float, cap: int,
                      rng: np.random.Generator) -> Schedule:
    alive_a = np.ones(len(na), dtype=bool)
    alive_b = np.ones(len(nb), dtype=bool)
    steps: list[ScheduleStep] = []
    for i in range(cap + 1):
        if not alive_a.any() or not alive_b.any():
            return Schedule(x, eps, tuple(steps), Stop(DEGENERATE, i), cap)
        ra = Dist(na.n, na.masks[alive_a], na.weights[alive_a] / na.weights[alive_a].sum())
        rb = Dist(nb.n, nb.masks[alive_b], nb.weights[alive_b] / nb.weights[alive_b].sum())
        p_disjoint = _disjoint_mass(ra.masks, ra.weights, rb.masks, rb.weights)
        if p_disjoint <= eps / 2:
            return Schedule(x, eps, tuple(steps), Stop(ALMOST_EMPTY, i), cap)
        if i == cap:
            break
        w = extract_sampled(ra, rb, eps / 2, x, rng, SAMPLED_RETRIES)
        if w is None or w.measure <= 0:
            break
        step = _make_step(w.u, x, w.measure)
        steps.append(step)
        if step.side == "A":
            alive_a &= (na.masks & ~np.int64(w.u)) != 0
        else:
            alive_b &= (nb.masks & ~np.int64(x & ~w.u)) != 0
    log.warning("schedule on x=%d stopped after %d steps without becoming almost-empty", x, len(steps))
    return Schedule(x, eps, tuple(steps), Stop(EXHAUSTED, len(steps)), cap)


def _make_step(u: int, x: int, measure: float) -> ScheduleStep:
    v = x & ~u
    if popcount(u) <= popcount(v):
        return ScheduleStep(u, "A", u, measure)
    return ScheduleStep(u, "B", v, measure)


def first_yes_a(s: Schedule, a_prime: int) -> int | None:
    if not is_subset(a_prime, s.x):
        raise ValueError("input is not inside the schedule's ground set")
    for j, st in enumerate(s.steps):
        if st.side == "A" and is_subset(a_prime, st.u):
            return j
    return None


def first_yes_b(s: Schedule, b_prime: int) -> int | None:
    if not is_subset(b_prime, s.x):
        raise ValueError("input is not inside the schedule's ground set")
    for j, st in enumerate(s.steps):
        if st.side == "B" and is_subset(b_prime, st.y):
            return j
    return None


def first_yes_many(s: Schedule, masks: np.ndarray, side: str) -> np.ndarray:
    """Vectorised first-yes index; -1 stands for "none"."""
    out = np.full(len(masks), -1, dtype=np.int64)
    for j, st in enumerate(s.steps):
        if st.side == side:
            hit = (out < 0) & ((masks & ~np.int64(st.y)) == 0)
            out[hit] = j
    return out


def resolve(s: Schedule, ia: int | None, ib: int | None) -> Declare | Recurse:
    """Outcome of the index exchange: the earlier first-yes wins."""
    cands = [i for i in (ia, ib) if i is not None]
    if not cands:
        return Declare(False)
    return Recurse(s.steps[min(cands)].y)


class DisjointnessProtocol:
    """The full protocol for one product distribution ``mu_a x mu_b`` and error ``eps``.

    Schedules and projected marginals are cached per ground set.
    """

    def __init__(self, mu_a: Dist, mu_b: Dist, eps: float, seed: int = 0, C: float = DEFAULT_C):
        if mu_a.n != mu_b.n:
            raise ValueError("marginals over different ground sets")
        if not 0 < eps < 0.5:
            raise ValueError(f"eps must be in (0, 1/2), got {eps}")
        self.mu_a, self.mu_b = mu_a, mu_b
        self.n = mu_a.n
        self.eps, self.seed, self.C = eps, seed, C
        self._schedules: dict[int, Schedule] = {}
        self._projected: dict[int, tuple[Dist, Dist]] = {}

    def is_base(self, x: int) -> bool:
        return popcount(x) <= base_case_size(self.eps)

    def schedule(self, x: int) -> Schedule:
        s = self._schedules.get(x)
        if s is None:
            s = build_schedule(self.mu_a, self.mu_b, x, self.eps, self.seed, self.C)
            self._schedules.setdefault(x, s)
        return s

    def projected(self, x: int) -> tuple[Dist, Dist]:
        p = self._projected.get(x)
        if p is None:
            p = self._projected.setdefault(x, (project(self.mu_a, x), project(self.mu_b, x)))
        return p

    def threshold(self, x: int) -> float:
        return self.eps / 2.0 ** (2 * popcount(x))

    def light_a(self, x: int, a: int) -> bool:
        return self.projected(x)[0].prob(a & x) <= self.threshold(x)

    def light_b(self, x: int, b: int) -> bool:
        return self.projected(x)[1].prob(b & x) <= self.threshold(x)

    def run_subprotocol(self, x: int, a: int, b: int, transcript: Transcript) -> Declare | Recurse:
        return self._subprotocol(x, a, b, transcript)[0]

    def _subprotocol(self, x, a, b, transcript) -> tuple[Declare | Recurse, str]:
        # Alice's messages use only (a, x, shared data), Bob's only (b, x, shared data)
        light_a = self.light_a(x, a)
        transcript.send("A", "1" if light_a else "0", "threshold")
        light_b = self.light_b(x, b)
        transcript.send("B", "1" if light_b else "0", "threshold")
        if light_a or light_b:
            return Declare(False), "threshold"
        s = self.schedule(x)
        if not s.steps and s.stop.kind == ALMOST_EMPTY:
            return Declare(False), ALMOST_EMPTY
        width = index_width(len(s.steps))
        ia = first_yes_a(s, a & x)
        transcript.send("A", _bits(len(s.steps) if ia is None else ia, width), "first-yes")
        ib = first_yes_b(s, b & x)
        transcript.send("B", _bits(len(s.steps) if ib is None else ib, width), "first-yes")
        out = resolve(s, ia, ib)
        if isinstance(out, Recurse):
            return out, "recurse"
        return out, "no-yes" if s.stop.kind != EXHAUSTED else EXHAUSTED

    def run_sequential_reference(self, x: int, a: int, b: int) -> tuple[Declare | Recurse, int]:
        """The unbalanced protocol: one membership bit per schedule step.

        Tracks the families explicitly and returns the outcome together with
        the number of membership bits sent.
        """
        if self.light_a(x, a) or self.light_b(x, b):
            return Declare(False), 0
        s = self.schedule(x)
        a_p, b_p = a & x, b & x
        state = FamilyState(x)
        for j, st in enumerate(s.steps):
            if st.side == "A":
                if family_contains_a(state, a_p) and is_subset(a_p, st.u):
                    return Recurse(st.y), j + 1
                state = state.remove_a(st.u)
            else:
                if family_contains_b(state, b_p) and is_subset(b_p, st.y):
                    return Recurse(st.y), j + 1
                state = state.remove_b(st.y)
        return Declare(False), len(s.steps)

    def run(self, a: int, b: int) -> RunOutcome:
        check_mask(a, self.n)
        check_mask(b, self.n)
        x = full_mask(self.n)
        transcript = Transcript()
        trace: list[tuple[int, str]] = []
        while True:
            assert (a & ~x) & (b & ~x) == 0, "sets disagree outside the ground set"
            if self.is_base(x):
                size = popcount(x)
                a_x = compress(a & x, x)
                transcript.send("A", format(a_x, f"0{size}b")[::-1] if size else "", "base")
                disjoint = (a & x) & b == 0
                trace.append((x, "base"))
                break
            out, reason = self._subprotocol(x, a, b, transcript)
            trace.append((x, reason))
            if isinstance(out, Declare):
                disjoint = out.disjoint
                break
            assert popcount(out.y) <= popcount(x) // 2, "recursion did not halve the ground set"
            x = out.y
        return RunOutcome(disjoint, disjoint == (a & b == 0), transcript.total_bits, trace, transcript)


def run_protocol(mu_a: Dist, mu_b: Dist, eps: float, seed: int, a: int, b: int,
                 C: float = DEFAULT_C) -> RunOutcome:
    return DisjointnessProtocol(mu_a, mu_b, eps, seed, C).run(a, b)
