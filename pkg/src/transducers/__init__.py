"""Transducers: catalysts, canonical forms, composition and implementation."""

from .canonical import (
    CanonicalCertificate,
    CanonicalTransducer,
    OracleSlot,
    canonicalize,
    from_unitary,
    gate,
    invert,
    parallel,
    rename_slots,
    with_adjoints,
)
from .compose import functional, predicted_certificate, sequential_par, sequential_seq
from .engine import PumpingSchedule, RunReport, choose_schedule, phase_readout, run_scheduled, run_uniform
from .errors import TransducerError, ValidationError
from .linalg import SectorSpace
from .transducer import Transducer, TransductionCertificate, solve_catalyst, transduction_map

__all__ = [
    "CanonicalCertificate", "CanonicalTransducer", "OracleSlot", "PumpingSchedule", "RunReport",
    "SectorSpace", "Transducer", "TransducerError", "TransductionCertificate", "ValidationError",
    "canonicalize", "choose_schedule", "from_unitary", "functional", "gate", "invert", "parallel",
    "phase_readout", "predicted_certificate", "rename_slots", "run_scheduled", "run_uniform",
    "sequential_par", "sequential_seq", "solve_catalyst", "transduction_map", "with_adjoints",
]
