import pytest

from wcbbc.crypto import MockScheme, Signer, Verifier
from wcbbc.protocol import Consensus
from wcbbc.types import AuxPayload, AuxProofMsg, InstanceConfig


class Keys:
    """Mock keys for a small system plus shorthand for building votes."""

    def __init__(self, n=4, seed=0, instance_id=0):
        self.scheme = MockScheme()
        self.directory, self.pairs = self.scheme.keygen(n, seed)
        self.signers = [Signer(self.scheme, kp) for kp in self.pairs]
        self.verifier = Verifier(self.scheme, self.directory)
        self.instance_id = instance_id

    def vote(self, sender, rnd, value, instance_id=None):
        inst = self.instance_id if instance_id is None else instance_id
        return self.signers[sender].sign_aux(AuxPayload(inst, rnd, value))

    def votes(self, senders, rnd, value):
        return [self.vote(s, rnd, value) for s in senders]

    def msg(self, sender, rnd, value, proofs=()):
        return AuxProofMsg(self.vote(sender, rnd, value), frozenset(proofs))

    def core(self, me, config=None, **kw):
        cfg = config or InstanceConfig(n=len(self.signers), t=(len(self.signers) - 1) // 3, **kw)
        return Consensus(cfg, me, self.signers[me], self.verifier)


@pytest.fixture
def keys():
    return Keys()


@pytest.fixture
def cfg4():
    return InstanceConfig(n=4, t=1)


def chain_messages(keys, upto):
    """Valid votes for rounds 0..upto that never reach a decision.

    Round 0 splits 0/0/1/1 by sender id; every later round k carries
    (k-1) mod 2, the value round k cannot decide.  Proofs are the minimal
    witnesses over everything from earlier rounds.
    """
    from wcbbc.protocol import VoteIndex, minimal_witness

    cfg = InstanceConfig(n=len(keys.signers), t=(len(keys.signers) - 1) // 3)
    index = VoteIndex()
    out = {}
    for rnd in range(upto + 1):
        layer = []
        for s in range(cfg.n):
            value = (0 if s < cfg.n // 2 else 1) if rnd == 0 else (rnd - 1) % 2
            proofs = minimal_witness(cfg, rnd, value, index)
            assert proofs is not None, (rnd, value)
            layer.append(AuxProofMsg(keys.vote(s, rnd, value), proofs))
        for m in layer:
            index.add(m.vote)
            out[(m.vote.sender, rnd)] = m
    return out


ACCEPTANCE_LINES = []


def report_criterion(number, ok, detail):
    """Record one acceptance line and fail the calling test if it did not pass."""
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
