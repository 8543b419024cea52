"""Finite-key BB84 key lengths, security bounds and key distillation.

Modules
-------
mathcore
    Binary entropy, normal tail, hypergeometric law and its tail bounds.
estimation
    Interval estimate of the key error rate and key-length accounting.
bounds
    Exact phase-error oracle and the four closed-form bounds.
privacy_amp
    Modified Toeplitz hashing with naive and FFT evaluation.
protocol_sim
    Seeded simulation of distillation sessions.
planner
    Parameter selection, grid optimization and rate curves.
verify
    Exhaustive numerical checks of every inequality used by the bounds.
"""

from .bounds import (
    BoundReport,
    evaluate_bound,
    p_ph_oracle,
    prop1_bound,
    prop2_bound,
    thm2_bound,
    thm3_bound,
)
from .estimation import ProtocolParams, key_accounting, sacrifice_bits
from .mathcore import DomainError, PreconditionError, phi_inverse, phi_upper_tail
from .planner import PlanRequest, PlanResult, optimize_rate, plan
from .privacy_amp import HashSpec, apply_hash, build_hash
from .protocol_sim import SessionConfig, run_batch, run_session

__version__ = "0.1.0"

__all__ = [
    "BoundReport",
    "DomainError",
    "HashSpec",
    "PlanRequest",
    "PlanResult",
    "PreconditionError",
    "ProtocolParams",
    "SessionConfig",
    "apply_hash",
    "build_hash",
    "evaluate_bound",
    "key_accounting",
    "optimize_rate",
    "p_ph_oracle",
    "phi_inverse",
    "phi_upper_tail",
    "plan",
    "prop1_bound",
    "prop2_bound",
    "run_batch",
    "run_session",
    "sacrifice_bits",
    "thm2_bound",
    "thm3_bound",
]
