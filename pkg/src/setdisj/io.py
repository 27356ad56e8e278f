"""JSON (de)serialisation of distributions.

Marginals: ``{"n": 4, "support": [{"set": 5, "w": 0.5}, {"set": "{2}", "w": 0.5}]}``.
Joints use ``{"a": ..., "b": ..., "w": ...}`` entries instead.
"""

from __future__ import annotations

import json
from pathlib import Path

from .dist import Dist, JointDist
from .sets import parse_mask


def dist_to_json(d: Dist) -> dict:
    return {"n": d.n, "support": [{"set": m, "w": w} for m, w in d.items()]}


def joint_to_json(j: JointDist) -> dict:
    return {"n": j.n, "support": [{"a": a, "b": b, "w": w} for a, b, w in j.items()]}


def to_json(d: Dist | JointDist) -> dict:
    return joint_to_json(d) if isinstance(d, JointDist) else dist_to_json(d)


def from_json(data: dict, normalize: bool = False) -> Dist | JointDist:
    n = int(data["n"])
    support = data["support"]
    if not support:
        raise ValueError("empty support")
    if "a" in support[0]:
        return JointDist.from_triples(
            n, [(parse_mask(e["a"], n), parse_mask(e["b"], n), float(e["w"])) for e in support], normalize)
    return Dist.from_pairs(n, [(parse_mask(e["set"], n), float(e["w"])) for e in support], normalize)


def load(path: str | Path) -> Dist | JointDist:
    with open(path) as fh:
        return from_json(json.load(fh))


def load_dist(path: str | Path) -> Dist:
    d = load(path)
    if not isinstance(d, Dist):
        raise ValueError(f"{path} holds a joint distribution, expected a marginal")
    return d


def load_joint(path: str | Path) -> JointDist:
    d = load(path)
    if not isinstance(d, JointDist):
        raise ValueError(f"{path} holds a marginal, expected a joint distribution")
    return d


def save(d: Dist | JointDist, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(to_json(d), fh)
