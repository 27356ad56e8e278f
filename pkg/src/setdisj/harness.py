"""Exact and sampled evaluation of the protocol, and parameter sweeps to CSV."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .dist import Dist, _disjoint_mass, disjoint_probability, generate, sample_many
from .protocol import ALMOST_EMPTY, DEFAULT_C, EXHAUSTED, DisjointnessProtocol, first_yes_many, index_width
from .rectangle import all_pairs_disjoint, bound_a, bound_b, extract_exact, lemma_ell, verify_witness
from .sets import full_mask, popcount

EXACT_PAIR_GUARD = 1 << 26
Z99 = NormalDist().inv_cdf(0.995)


class GuardError(RuntimeError):
    """Exact evaluation would exceed the support-pair guard."""


@dataclass
class EvalReport:
    weighted_error: float
    max_cost_bits: int
    mean_cost_bits: float
    stop_histogram: dict[str, int]
    wall_time: float
    pairs: int = 0
    subprotocol_calls: int = 0
    exhausted_calls: int = 0
    halving_ok: bool = True
    max_steps: int = 0
    cap_respected: bool = True
    half_width: float | None = None

    @property
    def exhausted_rate(self) -> float:
        return self.exhausted_calls / self.subprotocol_calls if self.subprotocol_calls else 0.0

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["exhausted_rate"] = self.exhausted_rate
        return out


@dataclass
class _Acc:
    error: float = 0.0
    mass: float = 0.0
    cost_mass: float = 0.0
    max_cost: int = 0
    pairs: int = 0
    hist: Counter = field(default_factory=Counter)
    calls: int = 0
    exhausted: int = 0
    halving_ok: bool = True

    def leaf(self, level, reason, am, aw, bm, bw, cost, disjoint_answer):
        count = len(am) * len(bm)
        if count == 0:
            return
        mass = float(aw.sum() * bw.sum())
        if disjoint_answer is None:
            err = 0.0
        else:
            # declared "not disjoint": wrong exactly on the disjoint pairs
            err = _disjoint_mass(am, aw, bm, bw)
        self.error += err
        self.mass += mass
        self.cost_mass += mass * cost
        self.max_cost = max(self.max_cost, cost)
        self.pairs += count
        self.hist[f"L{level}:{reason}"] += count


def _lookup(d: Dist, masks: np.ndarray) -> np.ndarray:
    i = np.minimum(np.searchsorted(d.masks, masks), len(d.masks) - 1)
    return np.where(d.masks[i] == masks, d.weights[i], 0.0)


def _eval_product(proto: DisjointnessProtocol, x, am, aw, bm, bw, cost, level, acc: _Acc):
    """Evaluate every pair in (am x bm) at ground set x.

    Alice's messages depend on a alone and Bob's on b alone, so each outcome
    class is again a product of an A-group and a B-group.
    """
    if len(am) == 0 or len(bm) == 0:
        return
    if proto.is_base(x):
        acc.leaf(level, "base", am, aw, bm, bw, cost + popcount(x), None)
        return
    acc.calls += len(am) * len(bm)
    na, nb = proto.projected(x)
    thr = proto.threshold(x)
    light_a = _lookup(na, am & x) <= thr
    light_b = _lookup(nb, bm & x) <= thr
    acc.leaf(level, "threshold", am[light_a], aw[light_a], bm, bw, cost + 2, False)
    am, aw = am[~light_a], aw[~light_a]
    acc.leaf(level, "threshold", am, aw, bm[light_b], bw[light_b], cost + 2, False)
    bm, bw = bm[~light_b], bw[~light_b]
    if len(am) == 0 or len(bm) == 0:
        return
    s = proto.schedule(x)
    if s.stop.kind == EXHAUSTED:
        acc.exhausted += len(am) * len(bm)
    if not s.steps and s.stop.kind == ALMOST_EMPTY:
        acc.leaf(level, ALMOST_EMPTY, am, aw, bm, bw, cost + 2, False)
        return
    inner = cost + 2 + 2 * index_width(len(s.steps))
    none = len(s.steps)
    ia = first_yes_many(s, am & x, "A")
    ib = first_yes_many(s, bm & x, "B")
    ia[ia < 0] = none
    ib[ib < 0] = none
    for m in np.unique(np.concatenate([ia, ib])):
        if m == none:
            continue
        y = s.steps[m].y
        if popcount(y) > popcount(x) // 2:
            acc.halving_ok = False
        for sel_a, sel_b in ((ia == m, ib >= m), (ia > m, ib == m)):
            acc.hist[f"L{level}:recurse"] += int(sel_a.sum()) * int(sel_b.sum())
            _eval_product(proto, y, am[sel_a], aw[sel_a], bm[sel_b], bw[sel_b], inner, level + 1, acc)
    reason = EXHAUSTED if s.stop.kind == EXHAUSTED else "no-yes"
    sel_a, sel_b = ia == none, ib == none
    acc.leaf(level, reason, am[sel_a], aw[sel_a], bm[sel_b], bw[sel_b], inner, False)


def _report(acc: _Acc, proto: DisjointnessProtocol, t0: float) -> EvalReport:
    scheds = list(proto._schedules.values())
    return EvalReport(
        weighted_error=min(1.0, max(0.0, acc.error)),
        max_cost_bits=acc.max_cost,
        mean_cost_bits=acc.cost_mass / acc.mass if acc.mass else 0.0,
        stop_histogram=dict(sorted(acc.hist.items())),
        wall_time=time.perf_counter() - t0,
        pairs=acc.pairs,
        subprotocol_calls=acc.calls,
        exhausted_calls=acc.exhausted,
        halving_ok=acc.halving_ok,
        max_steps=max((len(s.steps) for s in scheds), default=0),
        cap_respected=all(len(s.steps) <= s.t_cap for s in scheds),
    )


def evaluate_exact(mu_a: Dist, mu_b: Dist, eps: float, seed: int = 0, C: float = DEFAULT_C,
                   method: str = "grouped", protocol: DisjointnessProtocol | None = None) -> EvalReport:
    """mu-weighted error and cost over every support pair.

    ``method="pairwise"`` runs the full protocol on each pair one at a time;
    ``"grouped"`` evaluates whole message classes at once and gives the same
    report.
    """
    if len(mu_a) * len(mu_b) > EXACT_PAIR_GUARD:
        raise GuardError(f"{len(mu_a)} x {len(mu_b)} support pairs exceed 2^26; use sampled mode")
    t0 = time.perf_counter()
    proto = protocol or DisjointnessProtocol(mu_a, mu_b, eps, seed, C)
    acc = _Acc()
    if method == "grouped":
        _eval_product(proto, full_mask(mu_a.n), mu_a.masks, mu_a.weights, mu_b.masks, mu_b.weights, 0, 0, acc)
    elif method == "pairwise":
        for a, wa in mu_a.items():
            for b, wb in mu_b.items():
                _accumulate_run(acc, proto, a, b, wa * wb)
    else:
        raise ValueError(f"unknown method {method!r}")
    return _report(acc, proto, t0)


def _accumulate_run(acc: _Acc, proto: DisjointnessProtocol, a: int, b: int, w: float, times: int = 1):
    out = proto.run(a, b)
    if not out.correct:
        acc.error += w
    acc.mass += w
    acc.cost_mass += w * out.cost_bits
    acc.max_cost = max(acc.max_cost, out.cost_bits)
    acc.pairs += times
    for level, (x, reason) in enumerate(out.trace):
        acc.hist[f"L{level}:{reason}"] += times
        if reason != "base":
            acc.calls += times
            if reason != "threshold" and proto.schedule(x).stop.kind == EXHAUSTED:
                acc.exhausted += times
    for (x, _), (y, _) in zip(out.trace, out.trace[1:]):
        if popcount(y) > popcount(x) // 2:
            acc.halving_ok = False


def binomial_half_width(p: float, n: int, z: float = Z99) -> float:
    return z * math.sqrt(max(p * (1 - p), 0.0) / n)


def evaluate_sampled(mu_a: Dist, mu_b: Dist, eps: float, seed: int, num_samples: int,
                     C: float = DEFAULT_C) -> EvalReport:
    """Error frequency over i.i.d. pairs with a 99% normal-approximation half-width."""
    if num_samples < 1:
        raise ValueError("num_samples must be >= 1")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    a_s = sample_many(mu_a, rng, num_samples)
    b_s = sample_many(mu_b, rng, num_samples)
    proto = DisjointnessProtocol(mu_a, mu_b, eps, seed, C)
    return _sampled_pairs(proto, a_s, b_s, t0)


def _sampled_pairs(proto, a_s, b_s, t0) -> EvalReport:
    pairs, counts = np.unique(np.stack([a_s, b_s], axis=1), axis=0, return_counts=True)
    total = len(a_s)
    acc = _Acc()
    for (a, b), c in zip(pairs, counts):
        _accumulate_run(acc, proto, int(a), int(b), c / total, int(c))
    rep = _report(acc, proto, t0)
    rep.half_width = binomial_half_width(rep.weighted_error, total)
    return rep


# -- sweeps ------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    seed: int = 0
    eps: list[float] = field(default_factory=lambda: [0.25])
    n_range: list[int] = field(default_factory=lambda: [8])
    families: dict[str, dict] = field(default_factory=lambda: {"uniform-all": {"kind": "uniform-all"}})
    eval_mode: str = "exact"
    num_samples: int = 10000
    C: float = DEFAULT_C
    out: str | None = None
    keep_going: bool = False

    @classmethod
    def from_json(cls, data: dict) -> ExperimentConfig:
        data = dict(data)
        if "n-range" in data:
            data["n_range"] = data.pop("n-range")
        if not isinstance(data.get("eps", []), list):
            data["eps"] = [data["eps"]]
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        if cfg.eval_mode not in ("exact", "sampled"):
            raise ValueError(f"eval_mode must be exact or sampled, got {cfg.eval_mode!r}")
        return cfg

    def to_json(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if k not in ("out", "keep_going")}


def resolve_spec(spec: dict, n: int) -> dict:
    """Fill in ``n`` and the ``"k": "sqrt"`` shorthand (k = ceil(sqrt(n)))."""
    spec = {**spec, "n": n}
    if spec.get("k") == "sqrt":
        spec["k"] = math.ceil(math.sqrt(n))
    return spec


def family_pair(spec: dict, n: int, seed: int, index: int) -> tuple[Dist, Dist]:
    rng = np.random.default_rng([seed, n, index])
    if "a" in spec and "b" in spec and spec.get("kind") is None:
        return generate(resolve_spec(spec["a"], n), rng), generate(resolve_spec(spec["b"], n), rng)
    full = resolve_spec(spec, n)
    return generate(full, rng), generate(full, rng)


COLUMNS = ["n", "eps", "family", "weighted_error", "max_cost", "mean_cost", "sqrt_n_log",
           "cost_ratio", "stops", "error"]


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".9g")
    return str(v)


@dataclass
class SweepRow:
    n: int
    eps: float
    family: str
    report: EvalReport | None
    error: str = ""

    @property
    def sqrt_term(self) -> float:
        return math.sqrt(self.n * math.log2(1 / self.eps))

    def cells(self) -> list[str]:
        if self.report is None:
            return [_fmt(self.n), _fmt(self.eps), self.family, "", "", "", _fmt(self.sqrt_term), "", "", self.error]
        r = self.report
        stops = ";".join(f"{k}={v}" for k, v in r.stop_histogram.items())
        return [_fmt(self.n), _fmt(self.eps), self.family, _fmt(r.weighted_error), _fmt(r.max_cost_bits),
                _fmt(r.mean_cost_bits), _fmt(self.sqrt_term), _fmt(r.max_cost_bits / self.sqrt_term), stops, ""]


def sweep_rows(config: ExperimentConfig) -> list[SweepRow]:
    rows = []
    for index, (name, spec) in enumerate(config.families.items()):
        for n in config.n_range:
            for eps in config.eps:
                try:
                    da, db = family_pair(spec, n, config.seed, index)
                    if config.eval_mode == "exact":
                        rep = evaluate_exact(da, db, eps, config.seed, config.C)
                    else:
                        rep = evaluate_sampled(da, db, eps, config.seed, config.num_samples, config.C)
                    rows.append(SweepRow(n, eps, name, rep))
                except (ValueError, GuardError) as e:
                    if not config.keep_going:
                        raise
                    rows.append(SweepRow(n, eps, name, None, f"{type(e).__name__}: {e}"))
    return rows


def rows_to_csv(config: ExperimentConfig, rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps(config.to_json(), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow(r.cells())
    fits: dict[str, float] = {}
    for r in rows:
        if r.report is not None:
            fits[r.family] = max(fits.get(r.family, 0.0), r.report.max_cost_bits / r.sqrt_term)
    for fam, ratio in fits.items():
        buf.write(f"# fit family={fam} max_cost_over_sqrt_n_log={_fmt(ratio)}\n")
    return buf.getvalue()


def sweep(config: ExperimentConfig) -> str:
    text = rows_to_csv(config, sweep_rows(config))
    if config.out:
        with open(config.out, "w") as fh:
            fh.write(text)
    return text


# -- rectangle battery -------------------------------------------------------


def random_product_instance(n: int, eps: float, rng: np.random.Generator,
                            max_tries: int = 10000) -> tuple[Dist, Dist]:
    """Random marginal pair whose disjointness probability is at least ``eps``."""
    for _ in range(max_tries):
        if rng.random() < 0.5:
            spec = {"kind": "random-sparse", "n": n, "support_size": int(rng.integers(4, 256)),
                    "density": float(rng.uniform(0.05, 0.5))}
        else:
            spec = {"kind": "per-element-independent", "n": n, "p_low": 0.0,
                    "p_high": float(rng.uniform(0.1, 0.6))}
        da, db = generate(spec, rng), generate(spec, rng)
        if disjoint_probability(da, db) >= eps:
            return da, db
    raise RuntimeError(f"no instance with disjointness probability >= {eps} after {max_tries} tries")


def lemma_battery(n: int, eps: float, instances: int, seed: int) -> dict:
    """Run the exact extractor on random instances and check both proof-level bounds."""
    rng = np.random.default_rng(seed)
    x = full_mask(n)
    met = contained = full = 0
    worst_a = worst_b = math.inf
    for _ in range(instances):
        da, db = random_product_instance(n, eps, rng)
        w = extract_exact(da, db, eps, x)
        rep = verify_witness(da, db, w, x, rng)
        met += rep.bound_a_ok and rep.bound_b_ok
        contained += rep.contained and rep.measures_match and rep.pairs_disjoint
        if n <= 10:
            full += all_pairs_disjoint(w.u, x)
        worst_a = min(worst_a, w.measure_a / bound_a(n, w.ell))
        worst_b = min(worst_b, w.measure_b / bound_b(eps, w.ell))
    return {"n": n, "eps": eps, "ell": lemma_ell(n, eps), "instances": instances,
            "bounds_met": met, "witness_checks_passed": contained,
            "exhaustive_full_checks": full if n <= 10 else None,
            "min_ratio_a": worst_a, "min_ratio_b": worst_b,
            "ok": met == instances and contained == instances and (n > 10 or full == instances)}
