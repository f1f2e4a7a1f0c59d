import pytest

from conftest import Keys, chain_messages
from wcbbc.protocol import (
    ArmTimer,
    Broadcast,
    BroadcastCert,
    Decide,
    Deliver,
    DeliverCert,
    NeedProofs,
    Phase,
    ProtocolMisuse,
    Start,
    Stopped,
    TimerExpired,
    TimerStatus,
    timer_duration,
    timer_round,
)
from wcbbc.simnet import SynchronyModel, run_instance
from wcbbc.types import AuxProofMsg, DecisionCert, InstanceConfig, TimerPolicy


def kinds(effects):
    return [type(e).__name__ for e in effects]


def broadcasts(effects):
    return [e.msg for e in effects if isinstance(e, Broadcast)]


# -- timers ----------------------------------------------------------------------

def test_timer_schedule_examples():
    p = TimerPolicy(free_rounds=10, base=20, growth=5)
    assert timer_duration(p, 4) == 0
    assert timer_duration(p, 21) == 0
    assert timer_duration(p, 22) == 30
    assert timer_duration(p, 23) == 35
    assert timer_round(23) == 11


def test_timer_schedule_monotone():
    p = TimerPolicy(free_rounds=3, base=7, growth=2)
    d = [timer_duration(p, i) for i in range(2, 60)]
    assert d == sorted(d)
    tail = [timer_duration(p, i) for i in range(8, 60)]
    assert all(b - a >= p.growth for a, b in zip(tail, tail[1:]))


def test_zero_policy():
    assert timer_duration(TimerPolicy.zero(), 10_000) == 0


# -- valid values, estimate choice, proofs -----------------------------------------

def test_valid_values_examples(keys):
    c = keys.core(0)
    assert c.valid_values(1) == set()
    for s in (1, 2, 3):
        c.handle_receive(keys.msg(s, 0, 1))
    assert c.valid_values(1) == {1}

    c = keys.core(0)
    for s, v in ((0, 0), (1, 0), (2, 1), (3, 1)):
        c.handle_receive(keys.msg(s, 0, v))
    assert c.valid_values(1) == {0, 1}


@pytest.mark.parametrize("r,values,coord,expected", [
    (1, {0, 1}, None, 0),
    (1, {1}, None, 1),
    (13, {0, 1}, 1, 1),
    (13, {0}, 1, 0),
])
def test_select_estimate_next_round_preference(keys, r, values, coord, expected):
    c = keys.core(2, preference="next")
    coord_msg = keys.vote(r % 4, r, coord) if coord is not None else None
    assert c.select_estimate(r, values, coord_msg) == expected


def test_select_estimate_default_prefers_decidable_value(keys):
    c = keys.core(2)
    assert c.select_estimate(1, {0, 1}, None) == 1
    assert c.select_estimate(2, {0, 1}, None) == 0
    assert c.select_estimate(2, {1}, None) == 1


def test_coordinator_ignored_in_free_rounds(keys):
    c = keys.core(0)
    for s in (0, 1, 2, 3):
        c.handle_receive(keys.msg(s, 0, s % 2))
    c.handle_receive(keys.msg(1, 1, 0, keys.votes([0, 2], 0, 0)))
    assert c.coordinator_vote(1) is None


def test_build_proofs_examples(keys):
    c = keys.core(2)
    for s in (0, 1, 3):
        c.handle_receive(keys.msg(s, 0, 1))
    assert {m.sender for m in c.build_proofs(1, 1)} == {0, 1}
    assert c.build_proofs(0, 1) == frozenset()
    with pytest.raises(ProtocolMisuse):
        c.build_proofs(1, 0)

    chain = chain_messages(keys, 1)
    c = keys.core(2)
    for m in chain.values():
        c.handle_receive(m)
    proofs = c.build_proofs(3, 0)
    assert sorted(m.sender for m in proofs) == [0, 1, 2]
    assert all(m.round == 1 and m.value == 0 for m in proofs)


# -- start and round entry ---------------------------------------------------------

def test_start_broadcasts_initial_vote(keys):
    c = keys.core(2)
    out = c.handle_start(1)
    (msg,) = broadcasts(out)
    assert (msg.vote.round, msg.vote.value, msg.vote.sender, msg.proofs) == (0, 1, 2, frozenset())
    assert c.r == 1
    assert ArmTimer(2, 0) in out
    assert kinds(keys.core(0).handle_start(0))[0] == "Broadcast"


def test_double_start_is_misuse(keys):
    c = keys.core(0)
    c.handle_start(1)
    with pytest.raises(ProtocolMisuse):
        c.handle_start(1)
    with pytest.raises(ValueError):
        keys.core(1).handle_start(2)


def test_zero_timer_broadcast_fires_when_values_arrive(keys):
    c = keys.core(2)
    c.handle_start(1)
    assert c.phase is Phase.AWAITING_TIMER_A and not c.broadcast_done.get(1)
    out = c.handle_receive(keys.msg(0, 0, 1))
    (msg,) = broadcasts(out)
    assert (msg.vote.round, msg.vote.value) == (1, 1)
    assert {m.sender for m in msg.proofs} == {0, 2}


def test_coordinator_broadcasts_before_arming_timer(keys):
    c = keys.core(1)
    for (s, rnd), m in sorted(chain_messages(keys, 12).items(), key=lambda kv: kv[0][1]):
        if s != 1:
            c.handle_receive(m)
    c.r = 12
    out = c.handle_round_entry()
    assert c.r == 13
    assert kinds(out) == ["Broadcast", "ArmTimer"]
    assert out[1] == ArmTimer(26, 20 + 5 * (26 - 20))


def test_catchup_skips_timer_arming(keys):
    chain = chain_messages(keys, 1)
    c = keys.core(1)
    for s in (0, 2):
        c.handle_receive(chain[(s, 0)])
        c.handle_receive(chain[(s, 1)])
    assert c.rho == 1
    out = c.handle_start(0)
    assert not any(isinstance(e, ArmTimer) and e.timer == 2 for e in out)
    assert c.broadcast_done.get(1)


def test_perform_broadcast_examples(keys):
    c = keys.core(0)
    for s in (1, 2, 3):
        c.handle_receive(keys.msg(s, 0, 1))
    out = c.handle_start(1)
    rnd1 = [m for m in broadcasts(out) if m.vote.round == 1]
    assert len(rnd1) == 1 and rnd1[0].vote.value == 1 and len(rnd1[0].proofs) == 2
    assert c.perform_broadcast() == []

    c = keys.core(0, preference="next")
    for s, v in ((1, 0), (2, 1), (3, 1)):
        c.handle_receive(keys.msg(s, 0, v))
    out = c.handle_start(0)
    assert [m.vote.value for m in broadcasts(out) if m.vote.round == 1] == [0]


# -- receive -------------------------------------------------------------------------

def test_receive_prunes_proofs(keys):
    c = keys.core(3)
    proofs = keys.votes([0, 1], 0, 1) + [keys.vote(2, 0, 0)]
    c.handle_receive(keys.msg(0, 1, 1, proofs))
    stored = {(m.round, m.value, m.sender) for m in c.aux_values}
    assert stored == {(1, 1, 0), (0, 1, 0), (0, 1, 1)}


def test_receive_bad_signature_changes_nothing(keys):
    c = keys.core(3)
    before = c.snapshot()
    good = keys.vote(0, 0, 1)
    forged = type(good)(good.payload, 1, good.signature)
    assert c.handle_receive(AuxProofMsg(forged)) == []
    bad_proof = AuxProofMsg(keys.vote(0, 1, 1), frozenset([keys.vote(1, 0, 1), forged]))
    c.handle_receive(bad_proof)
    assert c.snapshot() == before
    assert c.dropped == 2


def test_receive_wrong_instance_dropped(keys):
    c = keys.core(3)
    c.handle_receive(AuxProofMsg(keys.vote(0, 0, 1, instance_id=9)))
    assert not c.aux_values


def test_receive_invalid_vote_stores_nothing(keys):
    c = keys.core(3)
    c.handle_receive(keys.msg(0, 1, 1, [keys.vote(1, 0, 1)]))
    assert not c.aux_values and c.rho == -1


def test_catchup_expires_all_timers_up_to_rho(keys):
    chain = chain_messages(keys, 7)
    c = keys.core(3)
    c.handle_receive(chain[(0, 7)])
    c.handle_receive(chain[(1, 7)])
    assert c.rho == 7
    assert all(c.timer_expired(i) for i in range(2, 15))
    assert not c.timer_expired(15)


# -- quorum, decision, stopping ------------------------------------------------------------

def _round_one_core(keys, est_votes):
    """p0 started with 1, then round-1 votes from p1 and p2 with value ``est_votes``."""
    c = keys.core(0)
    for s, v in ((1, est_votes), (2, est_votes), (3, 1 - est_votes)):
        c.handle_receive(keys.msg(s, 0, v))
    c.handle_start(est_votes)
    out = []
    for s in (1, 2):
        out += c.handle_receive(keys.msg(s, 1, est_votes, keys.votes([1, 2], 0, est_votes)))
    return c, out


def test_round_one_quorum_for_one_decides(keys):
    c, out = _round_one_core(keys, 1)
    assert Decide(1, 1) in out and Stopped() in out
    assert c.decided == (1, 1) and c.phase is Phase.STOPPED
    assert c.stop_cert.value == 1 and len(c.stop_cert.quorum) == 3
    assert not any(isinstance(e, BroadcastCert) for e in out)


def test_round_one_quorum_for_zero_moves_on(keys):
    c, out = _round_one_core(keys, 0)
    assert c.decided is None
    assert c.r == 2


def test_round_two_quorum_for_zero_decides(keys):
    c, _ = _round_one_core(keys, 0)
    out = []
    r1 = keys.votes([0, 1, 2], 1, 0)
    for s in (1, 2):
        out += c.handle_receive(keys.msg(s, 2, 0, r1))
    assert Decide(0, 2) in out
    assert c.decided == (0, 2)


def test_delayed_cert_sent_on_later_round_vote(keys):
    c, _ = _round_one_core(keys, 1)
    assert c.handle_receive(keys.msg(3, 1, 1, keys.votes([1, 2], 0, 1))) == []
    out = c.handle_receive(keys.msg(3, 2, 1, keys.votes([1, 2], 0, 1)))
    certs = [e for e in out if isinstance(e, BroadcastCert)]
    assert len(certs) == 1 and certs[0].cert is c.stop_cert
    assert c.handle_receive(keys.msg(1, 2, 1, keys.votes([1, 2], 0, 1))) == []


def test_eager_policy_sends_cert_at_decision(keys):
    c = keys.core(0, stop_policy="eager")
    for s in (1, 2, 3):
        c.handle_receive(keys.msg(s, 0, 1))
    c.handle_start(1)
    out = []
    for s in (1, 2):
        out += c.handle_receive(keys.msg(s, 1, 1, keys.votes([1, 2], 0, 1)))
    assert kinds(out).count("BroadcastCert") == 1


def test_handle_decide_stop_requires_decision(keys):
    with pytest.raises(ProtocolMisuse):
        keys.core(0).handle_decide_stop()


def test_run_forever_keeps_looping(keys):
    c = keys.core(0, run_forever=True)
    for s in (1, 2, 3):
        c.handle_receive(keys.msg(s, 0, 1))
    c.handle_start(1)
    out = []
    for s in (1, 2):
        out += c.handle_receive(keys.msg(s, 1, 1, keys.votes([1, 2], 0, 1)))
    assert Decide(1, 1) in out and Stopped() not in out
    assert c.r == 2 and c.phase is not Phase.STOPPED


# -- certificates --------------------------------------------------------------------------

def test_cert_decides_and_stops(keys):
    c = keys.core(3)
    cert = DecisionCert(0, 1, 1, frozenset(keys.votes([0, 1, 2], 1, 1)))
    out = c.handle(DeliverCert(cert))
    assert out == [Decide(1, 1), Stopped()]
    assert c.handle_start(0) == []
    assert c.handle_cert(cert) == []


@pytest.mark.parametrize("make", [
    lambda k: DecisionCert(0, 1, 1, frozenset(k.votes([0, 1], 1, 1))),
    lambda k: DecisionCert(0, 2, 1, frozenset(k.votes([0, 1, 2], 2, 1))),
    lambda k: DecisionCert(0, 1, 1, frozenset(k.votes([0, 1], 1, 1) + k.votes([2], 2, 1))),
    lambda k: DecisionCert(5, 1, 1, frozenset(k.votes([0, 1, 2], 1, 1))),
    lambda k: DecisionCert(0, 1, 1, frozenset(k.votes([0, 0, 1], 1, 1))),
])
def test_invalid_certs_dropped(keys, make):
    c = keys.core(3)
    assert c.handle_cert(make(keys)) == []
    assert c.decided is None


def test_forged_cert_dropped(keys):
    v = keys.votes([0, 1, 2], 1, 1)
    v[2] = type(v[2])(v[2].payload, 3, v[2].signature)
    assert keys.core(3).handle_cert(DecisionCert(0, 1, 1, frozenset(v))) == []


# -- lazy proofs ----------------------------------------------------------------------------

def test_lazy_local_validation_fast_path(keys):
    c = keys.core(3, lazy_proofs=True)
    for s in (0, 1):
        c.handle_receive(keys.msg(s, 0, 1))
    out = c.handle_receive(keys.msg(2, 1, 1))
    assert not any(isinstance(e, NeedProofs) for e in out)
    assert keys.vote(2, 1, 1) in c.aux_values


def test_lazy_requests_proofs_once_then_completes(keys):
    c = keys.core(3, lazy_proofs=True)
    bare = keys.msg(2, 1, 1)
    out = c.handle_receive(bare)
    assert out == [NeedProofs(bare.vote)]
    assert c.handle_receive(bare) == []
    assert bare.vote in c.pending and bare.vote not in c.aux_values

    forged = keys.vote(1, 0, 1)
    forged = type(forged)(forged.payload, 0, forged.signature)
    c.handle_receive(AuxProofMsg(bare.vote, frozenset([keys.vote(1, 0, 1), forged])))
    assert bare.vote in c.pending

    c.handle_receive(AuxProofMsg(bare.vote, frozenset(keys.votes([0, 1], 0, 1))))
    assert bare.vote in c.aux_values and not c.pending


def test_lazy_pending_resolved_by_later_votes(keys):
    c = keys.core(3, lazy_proofs=True)
    c.handle_receive(keys.msg(2, 1, 1))
    c.handle_receive(keys.msg(0, 0, 1))
    c.handle_receive(keys.msg(1, 0, 1))
    assert keys.vote(2, 1, 1) in c.aux_values


# -- whole-core properties ---------------------------------------------------------------

def test_determinism_same_events_same_effects():
    def run():
        k = Keys()
        c = k.core(0)
        events = [Deliver(k.msg(1, 0, 0)), Start(1), Deliver(k.msg(2, 0, 1)), Deliver(k.msg(3, 0, 0)),
                  TimerExpired(2), Deliver(k.msg(1, 1, 1, k.votes([0, 2], 0, 1)))]
        return [c.handle(e) for e in events], c.snapshot()

    assert run() == run()


def test_unknown_event_type(keys):
    with pytest.raises(TypeError):
        keys.core(0).handle(object())


def test_positive_timer_blocks_until_expiry(keys):
    policy = TimerPolicy(free_rounds=0, base=10, growth=1)
    c = keys.core(0, timer_policy=policy)
    for s in (1, 2, 3):
        c.handle_receive(keys.msg(s, 0, 1))
    out = c.handle_start(1)
    assert ArmTimer(2, 12) in out and not c.broadcast_done.get(1)
    assert c.timer_state(2) is TimerStatus.ARMED
    out = c.handle_timer(2)
    assert [m.vote.round for m in broadcasts(out)] == [1]


def test_sim_unanimous_runs_match_hand_traces():
    cfg = InstanceConfig(n=4, t=0, timer_policy=TimerPolicy.zero())
    ones = run_instance(cfg, [1, 1, 1, 1], SynchronyModel(), seed=3)
    zeros = run_instance(cfg, [0, 0, 0, 0], SynchronyModel(), seed=3)
    assert {(o.decided, o.decision_round) for o in ones.outcomes} == {(1, 1)}
    assert {(o.decided, o.decision_round) for o in zeros.outcomes} == {(0, 2)}
