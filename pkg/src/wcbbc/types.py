"""Identifiers, message types, configuration and the canonical wire encoding.

Every vote in the protocol is a ``SignedAux``: a signed ``(instance, round,
value)`` triple.  The 14-byte ``canonical_encode`` layout is the exact byte
string that gets signed, so it must never change.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable

ProcessId = int

AUX_TAG = 0x41
PAYLOAD_SIZE = 14
_PAYLOAD = struct.Struct(">BQIB")

MAX_ROUND = 2**32 - 1
MAX_INSTANCE = 2**64 - 1


class EncodingError(ValueError):
    """Raised when a value does not fit (or does not parse as) the wire layout."""


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TimerPolicy:
    """Timer schedule: zero for the first ``free_rounds`` rounds, then linear growth.

    Durations are abstract units; the simulator reads them as ticks and the
    network runner as milliseconds.
    """

    free_rounds: int = 10
    base: int = 20
    growth: int = 5

    def __post_init__(self) -> None:
        if self.free_rounds < 0 or self.base < 0 or self.growth < 1:
            raise ConfigError(f"invalid timer policy {self}")

    @classmethod
    def zero(cls) -> "TimerPolicy":
        """Every timer expires immediately."""
        return cls(free_rounds=MAX_ROUND)


@dataclass(frozen=True)
class InstanceConfig:
    n: int
    t: int
    instance_id: int = 0
    timer_policy: TimerPolicy = field(default_factory=TimerPolicy)
    coord_free_rounds: int = 10
    # "delayed" waits for a later-round vote before sending the decision certificate
    stop_policy: str = "delayed"
    run_forever: bool = False
    lazy_proofs: bool = False
    # tie-break between two valid values: "decidable" prefers r mod 2, "next" prefers (r+1) mod 2
    preference: str = "decidable"

    def __post_init__(self) -> None:
        if self.n < 1 or self.t < 0:
            raise ConfigError(f"n={self.n}, t={self.t} out of range")
        if self.n < 3 * self.t + 1:
            raise ConfigError(f"need n >= 3t+1, got n={self.n}, t={self.t}")
        if not 0 <= self.instance_id <= MAX_INSTANCE:
            raise ConfigError(f"instance_id {self.instance_id} out of range")
        if self.stop_policy not in ("delayed", "eager"):
            raise ConfigError(f"unknown stop policy {self.stop_policy!r}")
        if self.preference not in ("decidable", "next"):
            raise ConfigError(f"unknown preference {self.preference!r}")

    def quorum(self) -> int:
        return self.n - self.t

    def weak_threshold(self) -> int:
        return self.t + 1

    @classmethod
    def for_n(cls, n: int, **kw) -> "InstanceConfig":
        """Config tolerating the maximum number of faults, floor((n-1)/3)."""
        return cls(n=n, t=(n - 1) // 3, **kw)


@dataclass(frozen=True)
class AuxPayload:
    instance_id: int
    round: int
    value: int

    def __post_init__(self) -> None:
        if self.value not in (0, 1):
            raise EncodingError(f"value must be binary, got {self.value!r}")


@dataclass(frozen=True)
class SignedAux:
    payload: AuxPayload
    sender: ProcessId
    signature: bytes

    @property
    def round(self) -> int:
        return self.payload.round

    @property
    def value(self) -> int:
        return self.payload.value

    def __repr__(self) -> str:
        p = self.payload
        return f"AUX(i{p.instance_id},r{p.round},v{p.value})@p{self.sender}"


@dataclass(frozen=True)
class AuxProofMsg:
    """A vote together with the earlier-round votes that justify it."""

    vote: SignedAux
    proofs: frozenset = frozenset()


@dataclass(frozen=True)
class DecisionCert:
    instance_id: int
    round: int
    value: int
    quorum: frozenset


def canonical_encode(payload: AuxPayload) -> bytes:
    if not 0 <= payload.round <= MAX_ROUND:
        raise EncodingError(f"round {payload.round} does not fit in 4 bytes")
    if not 0 <= payload.instance_id <= MAX_INSTANCE:
        raise EncodingError(f"instance {payload.instance_id} does not fit in 8 bytes")
    return _PAYLOAD.pack(AUX_TAG, payload.instance_id, payload.round, payload.value)


def canonical_decode(data: bytes) -> AuxPayload:
    if len(data) != PAYLOAD_SIZE:
        raise EncodingError(f"payload must be {PAYLOAD_SIZE} bytes, got {len(data)}")
    tag, instance_id, rnd, value = _PAYLOAD.unpack(data)
    if tag != AUX_TAG or value not in (0, 1):
        raise EncodingError("bad payload tag or value byte")
    return AuxPayload(instance_id, rnd, value)


def count_distinct_senders(msgs: Iterable[SignedAux], round: int, value: int) -> int:
    return len({m.sender for m in msgs if m.payload.round == round and m.payload.value == value})


# -- message serialization ---------------------------------------------------
#
# vote   := payload(14) sender(u16) siglen(u16) sig
# msg    := vote count(u16) vote*
# cert   := instance(u64) round(u32) value(u8) count(u16) vote*

_VOTE_HDR = struct.Struct(">HH")
_COUNT = struct.Struct(">H")
_CERT_HDR = struct.Struct(">QIB")


def _sort_key(m: SignedAux):
    p = m.payload
    return (p.round, p.value, m.sender, m.signature)


def encode_vote(v: SignedAux) -> bytes:
    return canonical_encode(v.payload) + _VOTE_HDR.pack(v.sender, len(v.signature)) + v.signature


def _decode_vote(buf: bytes, off: int) -> tuple[SignedAux, int]:
    end = off + PAYLOAD_SIZE
    if end + _VOTE_HDR.size > len(buf):
        raise EncodingError("truncated vote")
    payload = canonical_decode(buf[off:end])
    sender, siglen = _VOTE_HDR.unpack_from(buf, end)
    sig_start = end + _VOTE_HDR.size
    if sig_start + siglen > len(buf):
        raise EncodingError("truncated signature")
    return SignedAux(payload, sender, bytes(buf[sig_start:sig_start + siglen])), sig_start + siglen


def _encode_votes(votes) -> bytes:
    ordered = sorted(votes, key=_sort_key)
    return _COUNT.pack(len(ordered)) + b"".join(encode_vote(v) for v in ordered)


def _decode_votes(buf: bytes, off: int) -> tuple[frozenset, int]:
    if off + _COUNT.size > len(buf):
        raise EncodingError("truncated vote list")
    (count,) = _COUNT.unpack_from(buf, off)
    off += _COUNT.size
    out = []
    for _ in range(count):
        v, off = _decode_vote(buf, off)
        out.append(v)
    return frozenset(out), off


def encode_msg(msg: AuxProofMsg) -> bytes:
    return encode_vote(msg.vote) + _encode_votes(msg.proofs)


def decode_msg(buf: bytes) -> AuxProofMsg:
    vote, off = _decode_vote(buf, 0)
    proofs, off = _decode_votes(buf, off)
    if off != len(buf):
        raise EncodingError("trailing bytes after message")
    return AuxProofMsg(vote, proofs)


def encode_cert(cert: DecisionCert) -> bytes:
    return _CERT_HDR.pack(cert.instance_id, cert.round, cert.value) + _encode_votes(cert.quorum)


def decode_cert(buf: bytes) -> DecisionCert:
    if len(buf) < _CERT_HDR.size:
        raise EncodingError("truncated certificate")
    instance_id, rnd, value = _CERT_HDR.unpack_from(buf, 0)
    if value not in (0, 1):
        raise EncodingError("certificate value not binary")
    quorum, off = _decode_votes(buf, _CERT_HDR.size)
    if off != len(buf):
        raise EncodingError("trailing bytes after certificate")
    return DecisionCert(instance_id, rnd, value, quorum)
