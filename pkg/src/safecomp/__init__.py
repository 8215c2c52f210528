"""Certified outsourcing of iterative computations.

A solver runs ``x -> f(x)`` to a fixpoint while hash-chaining every
intermediate state; auditors recompute, locate the first divergent step from
a short projection of the chain, and a weak arbiter settles disputes with a
single step of ``f``.
"""

__version__ = "0.1.0"

from .arbiter import (
    Arbiter,
    ArbiterConfig,
    ExpireReveal,
    Payout,
    PublishTask,
    Receipt,
    Refute,
    RequestStatus,
    RevealSecret,
    SubmitProof,
    SubmitSolution,
    Transaction,
    replay,
)
from .certificate import (
    CertChain,
    CertProjection,
    VerificationProof,
    certificate_size,
    chain_extend,
    chain_init,
    check_verification_proof,
    dump_chain,
    dump_projection,
    fingerprint,
    first_divergence,
    load_chain,
    load_projection,
    make_projection,
    make_verification_proof,
)
from .errors import *  # noqa: F401,F403
from .hashing import HashParams, combine, decode, encode, hash_H, project, register_record
from .iterative import (
    Agree,
    AugmentedState,
    Disagree,
    FingerprintOnlyMismatch,
    RunResult,
    TaskProgram,
    audit_run,
    lift,
    run_to_fixpoint,
)
from .storage import BlobRef, BlobStore, oracle_fetch_projection
from .tasks import TaskRegistry, default_registry
