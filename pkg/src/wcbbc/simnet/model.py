from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

BEHAVIORS = ("none", "crash", "silent", "equivocate", "delay_release", "script")


@dataclass(frozen=True)
class SynchronyModel:
    """Integer-tick delay model.

    Messages sent before ``gst`` take 1..pre_gst_max ticks, later ones 1..delta.
    The defaults read a tick as a microsecond with delays up to 100 ms; fine
    ticks keep same-tick ties (resolved by enqueue order) rare.
    """

    gst: int = 0
    delta: int = 100_000
    pre_gst_max: int = 100_000
    jitter_seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.delta <= self.pre_gst_max:
            raise ValueError(f"need 0 < delta <= pre_gst_max, got {self}")
        if self.gst < 0:
            raise ValueError("gst must be non-negative")


@dataclass(frozen=True)
class ScriptedSend:
    """One adversary send: a vote signed by a corrupted ``sender``.

    The proof set is the smallest one the sender's observed votes can justify;
    when none exists the vote goes out with no proofs.
    """

    time: int
    sender: int
    round: int
    value: int
    recipients: tuple = ()


@dataclass(frozen=True)
class AdversaryStrategy:
    behavior: str = "none"
    corrupted: frozenset = frozenset()
    crash_round: int = 0
    targets: Optional[frozenset] = None  # delay_release: None means everyone
    hold: int = 50
    script: tuple = ()

    def __post_init__(self) -> None:
        if self.behavior not in BEHAVIORS:
            raise ValueError(f"unknown adversary behavior {self.behavior!r}")
        if self.behavior == "none" and self.corrupted:
            raise ValueError("behavior 'none' cannot corrupt processes")
        for s in self.script:
            if s.sender not in self.corrupted:
                raise ValueError(f"scripted send from p{s.sender}, which is not corrupted")

    @classmethod
    def fault_free(cls) -> "AdversaryStrategy":
        return cls()


@dataclass
class ProcessOutcome:
    pid: int
    honest: bool
    proposal: int
    decided: Optional[int] = None
    decision_round: Optional[int] = None
    decision_time: Optional[int] = None
    msgs_sent: int = 0
    msgs_recv: int = 0
    final_round: int = 0
    certs_sent: int = 0


@dataclass
class RunResult:
    n: int
    t: int
    seed: int
    proposals: tuple
    corrupted: frozenset
    trace: list
    outcomes: list = field(default_factory=list)
    liveness_failure: Optional[str] = None
    end_time: int = 0
    gst_round: int = 0

    def honest(self) -> list[ProcessOutcome]:
        return [o for o in self.outcomes if o.honest]

    @property
    def termination_round(self) -> Optional[int]:
        rounds = [o.decision_round for o in self.honest() if o.decision_round is not None]
        return max(rounds) if rounds else None

    @property
    def latency(self) -> Optional[int]:
        times = [o.decision_time for o in self.honest() if o.decision_time is not None]
        return max(times) if times else None

    @property
    def total_messages(self) -> int:
        return sum(o.msgs_sent for o in self.outcomes)

    @property
    def cert_broadcasts(self) -> int:
        return sum(o.certs_sent for o in self.outcomes)

    @property
    def decided_values(self) -> set:
        return {o.decided for o in self.honest() if o.decided is not None}
