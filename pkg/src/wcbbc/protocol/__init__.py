from .core import Consensus, Phase, ProtocolMisuse, TimerStatus, cert_is_valid
from .events import (
    ArmTimer,
    Broadcast,
    BroadcastCert,
    Decide,
    Deliver,
    DeliverCert,
    NeedProofs,
    Start,
    Stopped,
    TimerExpired,
)
from .timers import timer_duration, timer_round
from .validity import VoteIndex, is_valid, minimal_witness, satisfied_branch

__all__ = [
    "ArmTimer", "Broadcast", "BroadcastCert", "Consensus", "Decide", "Deliver", "DeliverCert",
    "NeedProofs", "Phase", "ProtocolMisuse", "Start", "Stopped", "TimerExpired", "TimerStatus",
    "VoteIndex", "cert_is_valid", "is_valid", "minimal_witness", "satisfied_branch",
    "timer_duration", "timer_round",
]
