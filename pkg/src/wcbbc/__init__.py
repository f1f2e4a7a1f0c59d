"""Signed binary Byzantine consensus with a weak round coordinator."""
from .types import (
    AuxPayload,
    AuxProofMsg,
    DecisionCert,
    InstanceConfig,
    SignedAux,
    TimerPolicy,
    canonical_decode,
    canonical_encode,
    count_distinct_senders,
)

__version__ = "0.1.0"
