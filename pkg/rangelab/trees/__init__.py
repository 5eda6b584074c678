"""Exact lattice-tree laboratory."""

from rangelab.trees.enumeration import LatticeTree, enumerate_trees, partition_function
from rangelab.trees.lace import lace_identity_check, pi_n_exact
from rangelab.trees.lemmas import lemma_checks
from rangelab.trees.ribs import RibsDecomposition, ribs_compose, ribs_decompose, two_point

__all__ = [
    "LatticeTree",
    "RibsDecomposition",
    "enumerate_trees",
    "lace_identity_check",
    "lemma_checks",
    "partition_function",
    "pi_n_exact",
    "ribs_compose",
    "ribs_decompose",
    "two_point",
]
