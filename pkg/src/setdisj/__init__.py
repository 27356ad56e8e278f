"""Distributional protocol for set disjointness under product and bounded-information distributions."""

from .dist import Dist, JointDist
from .protocol import DisjointnessProtocol, run_protocol
from .rectangle import extract_exact, extract_sampled, lemma_ell

__all__ = ["Dist", "JointDist", "DisjointnessProtocol", "run_protocol", "extract_exact",
           "extract_sampled", "lemma_ell"]
