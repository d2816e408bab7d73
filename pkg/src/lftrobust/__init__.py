"""Structured robust analysis and controller synthesis for discrete-time
systems in linear fractional form."""
from .lft import (ClosedLoop, Controller, IllPosedError, PartitionedSystem, adjust, augment,
                  close_loop, lower_lft, upper_lft)
from .sdp import SolverOptions, evaluate_margin, solve_feasibility
from .structures import (Block, BlockStructure, CommutantElement, StructureError,
                         make_block_structure, sample_uncertainty, shuffle_permutation)
from .synth import (Certificate, SynthesisOutcome, application_preset, check_q_performance,
                    check_q_stability, reconstruct_controller, static_synthesis_heuristic,
                    synthesize)

__all__ = [
    "Block", "BlockStructure", "Certificate", "ClosedLoop", "CommutantElement", "Controller",
    "IllPosedError", "PartitionedSystem", "SolverOptions", "StructureError", "SynthesisOutcome",
    "adjust", "application_preset", "augment", "check_q_performance", "check_q_stability",
    "close_loop", "evaluate_margin", "lower_lft", "make_block_structure",
    "reconstruct_controller", "sample_uncertainty", "shuffle_permutation", "solve_feasibility",
    "static_synthesis_heuristic", "synthesize", "upper_lft",
]
