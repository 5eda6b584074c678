"""Lattice model simulators."""

from rangelab.models.brw import BrwRealization, gw_survival, offspring_law, simulate_brw
from rangelab.models.op import OpParams, OpRealization, estimate_pc, op_exact_enumerate, simulate_op
from rangelab.models.voter import VoterRealization, simulate_voter

__all__ = [
    "BrwRealization",
    "OpParams",
    "OpRealization",
    "VoterRealization",
    "estimate_pc",
    "gw_survival",
    "offspring_law",
    "op_exact_enumerate",
    "simulate_brw",
    "simulate_op",
    "simulate_voter",
]
