"""Byzantine behaviors, interposed on the outputs of corrupted processes.

Corrupted processes still run the unmodified consensus core so they can
track rounds and collect proofs; the adversary decides what actually leaves
them.  It only ever holds the signing keys of corrupted processes.
"""
from __future__ import annotations

from typing import Optional

from ..crypto import Signer
from ..protocol import Broadcast, BroadcastCert, minimal_witness
from ..types import AuxPayload, AuxProofMsg, InstanceConfig
from .model import AdversaryStrategy, ScriptedSend


class ForgeryError(PermissionError):
    pass


class Adversary:
    def __init__(self, strategy: AdversaryStrategy, config: InstanceConfig, signers: dict[int, Signer], rng):
        if len(strategy.corrupted) > config.t:
            raise ValueError(f"{len(strategy.corrupted)} corrupted processes exceed t={config.t}")
        if set(signers) != set(strategy.corrupted):
            raise ForgeryError("adversary must hold exactly the corrupted processes' keys")
        self.strategy = strategy
        self.config = config
        self._signers = signers
        self.rng = rng
        self.crashed: set[int] = set()

    @property
    def corrupted(self) -> frozenset:
        return self.strategy.corrupted

    def sign(self, pid: int, rnd: int, value: int):
        signer = self._signers.get(pid)
        if signer is None:
            raise ForgeryError(f"adversary cannot sign for honest process p{pid}")
        return signer.sign_aux(AuxPayload(self.config.instance_id, rnd, value))

    def starts(self, pid: int) -> bool:
        """Whether the corrupted process runs its core at all."""
        s = self.strategy
        if s.behavior == "silent" or s.behavior == "script":
            return False
        if s.behavior == "crash" and s.crash_round <= 0:
            return False
        return True

    def step(self, pid: int, core, effect) -> list[tuple[list[int], object]]:
        """Turn one effect of a corrupted core into the sends that actually happen."""
        s = self.strategy
        n = self.config.n
        everyone = list(range(n))
        if not isinstance(effect, (Broadcast, BroadcastCert)):
            return []
        if s.behavior == "silent" or s.behavior == "script" or pid in self.crashed:
            return []
        if s.behavior == "crash":
            if isinstance(effect, Broadcast) and effect.msg.vote.round >= s.crash_round:
                self.crashed.add(pid)
                return []
            return [(everyone, _item(effect))]
        if s.behavior == "equivocate" and isinstance(effect, Broadcast):
            return self._equivocate(pid, core, effect.msg.vote.round)
        return [(everyone, _item(effect))]

    def _equivocate(self, pid: int, core, rnd: int):
        others = [p for p in range(self.config.n) if p != pid]
        self.rng.shuffle(others)
        half = len(others) // 2
        groups = (sorted(others[:half]), sorted(others[half:]))
        sends = []
        for value, group in zip((0, 1), groups):
            vote = self.sign(pid, rnd, value)
            proofs = minimal_witness(self.config, rnd, value, core.index) or frozenset()
            sends.append((group, AuxProofMsg(vote, proofs)))
        return sends

    def scripted(self, send: ScriptedSend, core) -> tuple[list[int], AuxProofMsg]:
        vote = self.sign(send.sender, send.round, send.value)
        proofs: Optional[frozenset] = None
        if core is not None:
            proofs = minimal_witness(self.config, send.round, send.value, core.index)
        recipients = list(send.recipients) or list(range(self.config.n))
        return recipients, AuxProofMsg(vote, proofs or frozenset())

    def delay_override(self, sender: int, recipient: int) -> Optional[int]:
        s = self.strategy
        if s.behavior != "delay_release" or sender not in s.corrupted or sender == recipient:
            return None
        if s.targets is not None and recipient not in s.targets:
            return None
        return s.hold


def _item(effect):
    return effect.msg if isinstance(effect, Broadcast) else effect.cert


def adversary_step(world, strategy: AdversaryStrategy, context) -> list:
    """Injected sends for ``context = (pid, core, effect)`` under ``strategy``."""
    if world.adversary.strategy is not strategy:
        raise ValueError("strategy does not match the world's adversary")
    pid, core, effect = context
    return world.adversary.step(pid, core, effect)
