"""Command line entry point: ``setdisj <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 exact-evaluation guard violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import io
from .dist import generate, info_report
from .harness import ExperimentConfig, GuardError, evaluate_exact, evaluate_sampled, lemma_battery, sweep
from .protocol import DEFAULT_C, DisjointnessProtocol
from .rectangle import extract_exact, extract_sampled
from .sets import full_mask, parse_mask
from .substate import (BoundedMIProtocol, evaluate_joint_exact, evaluate_joint_sampled, find_threshold,
                       reference_threshold, truncate)

EXIT_CONFIG = 2
EXIT_GUARD = 3


def _load_json_arg(text: str) -> dict:
    text = text.strip()
    if text.startswith("{"):
        return json.loads(text)
    with open(text) as fh:
        return json.load(fh)


def _emit(obj, out: str | None) -> None:
    text = obj if isinstance(obj, str) else json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_gen_dist(args):
    d = generate(_load_json_arg(args.spec), np.random.default_rng(args.seed))
    _emit(io.to_json(d), args.out)


def cmd_info(args):
    ref = io.load_joint(args.reference) if args.reference else None
    _emit(info_report(io.load_joint(args.joint), ref).__dict__, args.out)


def cmd_extract(args):
    da, db = io.load_dist(args.dist_a), io.load_dist(args.dist_b)
    x = full_mask(da.n)
    if args.mode == "exact":
        w = extract_exact(da, db, args.eps, x)
    else:
        w = extract_sampled(da, db, args.eps, x, np.random.default_rng(args.seed), args.retries)
    _emit(w.to_json() if w is not None else {"witness": None}, args.out)


def cmd_run(args):
    da, db = io.load_dist(args.dist_a), io.load_dist(args.dist_b)
    proto = DisjointnessProtocol(da, db, args.eps, args.seed, args.C)
    out = proto.run(parse_mask(args.a, da.n), parse_mask(args.b, da.n))
    summary = {"answer": out.answer, "correct": out.correct, "cost_bits": out.cost_bits,
               "trace": [[x, r] for x, r in out.trace]}
    _emit(out.transcript.dump() + "# " + json.dumps(summary, sort_keys=True) + "\n", args.out)


def cmd_eval(args):
    da, db = io.load_dist(args.dist_a), io.load_dist(args.dist_b)
    if args.mode == "exact":
        rep = evaluate_exact(da, db, args.eps, args.seed, args.C)
    else:
        rep = evaluate_sampled(da, db, args.eps, args.seed, args.samples, args.C)
    _emit(rep.to_json(), args.out)


def cmd_sweep(args):
    cfg = ExperimentConfig.from_json(_load_json_arg(args.config))
    if args.out:
        cfg.out = args.out
    if args.keep_going:
        cfg.keep_going = True
    text = sweep(cfg)
    if not cfg.out:
        sys.stdout.write(text)


def cmd_substate(args):
    mu = io.load_joint(args.joint)
    target = args.tv_target if args.tv_target is not None else args.eps / 2
    res = truncate(mu, find_threshold(mu, target))
    _emit({**res.to_json(), "tv_target": target, "reference_threshold": reference_threshold(mu, target)}, args.out)


def cmd_run_mi(args):
    mu = io.load_joint(args.joint)
    proto = BoundedMIProtocol(mu, args.eps, args.seed, args.mode, args.C)
    head = {"mode": args.mode, "eps_prime": proto.eps_prime, "truncation": proto.truncation.to_json()}
    if args.a is not None and args.b is not None:
        out = proto.run(parse_mask(args.a, mu.n), parse_mask(args.b, mu.n))
        head.update(answer=out.answer, correct=out.correct, cost_bits=out.cost_bits)
    elif args.samples:
        head["eval"] = evaluate_joint_sampled(proto, args.seed, args.samples).to_json()
    else:
        head["eval"] = evaluate_joint_exact(proto).to_json()
    _emit(head, args.out)


def cmd_verify_lemma(args):
    rep = lemma_battery(args.n, args.eps, args.instances, args.seed)
    _emit(rep, args.out)
    return 0 if rep["ok"] else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="setdisj", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(func=func)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None)
        return sp

    sp = add("gen-dist", cmd_gen_dist, "generate a distribution from a JSON generator spec")
    sp.add_argument("spec", help="JSON object or path, e.g. '{\"kind\": \"uniform-all\", \"n\": 6}'")

    sp = add("info", cmd_info, "mutual information, max-divergence and TV for a joint")
    sp.add_argument("joint")
    sp.add_argument("--reference", default=None)

    sp = add("extract", cmd_extract, "extract a full rectangle from two marginals")
    sp.add_argument("dist_a")
    sp.add_argument("dist_b")
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--mode", choices=["exact", "sampled"], default="exact")
    sp.add_argument("--retries", type=int, default=10000)

    for name, func, help in (("run", cmd_run, "run the protocol on one input pair"),
                             ("eval", cmd_eval, "evaluate error and cost over a product distribution")):
        sp = add(name, func, help)
        sp.add_argument("dist_a")
        sp.add_argument("dist_b")
        sp.add_argument("--eps", type=float, required=True)
        sp.add_argument("--C", type=float, default=DEFAULT_C)
        if name == "run":
            sp.add_argument("--a", required=True, help="Alice's set, e.g. '{1,3}' or 5")
            sp.add_argument("--b", required=True)
        else:
            sp.add_argument("--mode", choices=["exact", "sampled"], default="exact")
            sp.add_argument("--samples", type=int, default=10000)

    sp = add("sweep", cmd_sweep, "run an experiment sweep and write CSV")
    sp.add_argument("config", help="JSON object or path")
    sp.add_argument("--keep-going", action="store_true")

    sp = add("substate", cmd_substate, "truncate a joint to bounded max-divergence")
    sp.add_argument("joint")
    sp.add_argument("--eps", type=float, default=0.25)
    sp.add_argument("--tv-target", type=float, default=None)

    sp = add("run-mi", cmd_run_mi, "bounded mutual information protocol")
    sp.add_argument("joint")
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--mode", choices=["measured", "paper-constants"], default="measured")
    sp.add_argument("--C", type=float, default=DEFAULT_C)
    sp.add_argument("--a", default=None)
    sp.add_argument("--b", default=None)
    sp.add_argument("--samples", type=int, default=0, help="sampled evaluation instead of exhaustive")

    sp = add("verify-lemma", cmd_verify_lemma, "rectangle extraction battery")
    sp.add_argument("--n", type=int, default=12)
    sp.add_argument("--eps", type=float, default=0.125)
    sp.add_argument("--instances", type=int, default=100)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or 0
    except GuardError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_GUARD
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
