"""Inputs to and effects out of the consensus state machine."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from ..types import AuxProofMsg, DecisionCert, SignedAux


@dataclass(frozen=True)
class Start:
    value: int


@dataclass(frozen=True)
class Deliver:
    msg: AuxProofMsg


@dataclass(frozen=True)
class DeliverCert:
    cert: DecisionCert


@dataclass(frozen=True)
class TimerExpired:
    timer: int


InputEvent = Union[Start, Deliver, DeliverCert, TimerExpired]


@dataclass(frozen=True)
class Broadcast:
    msg: AuxProofMsg


@dataclass(frozen=True)
class BroadcastCert:
    cert: DecisionCert


@dataclass(frozen=True)
class ArmTimer:
    timer: int
    duration: int


@dataclass(frozen=True)
class Decide:
    value: int
    round: int


@dataclass(frozen=True)
class Stopped:
    pass


@dataclass(frozen=True)
class NeedProofs:
    """Lazy-proof mode: ``vote`` arrived without usable proofs; ask its sender."""

    vote: SignedAux


Effect = Union[Broadcast, BroadcastCert, ArmTimer, Decide, Stopped, NeedProofs]
