"""The validity predicate for AUX votes and minimal witness extraction.

A vote ``(r, est)`` is valid when the attached earlier-round votes show that
``est`` was proposed by some correct process and that the opposite value
cannot have been decided before round ``r``.
"""
from __future__ import annotations

from typing import Callable, Iterable, Optional

from ..types import InstanceConfig, SignedAux

# (round, value, how many distinct senders are needed)
Branch = tuple[int, int, int]
NO_PROOFS: Branch = (-1, -1, 0)

CountFn = Callable[[int, int], int]


class VoteIndex:
    """Votes grouped by (round, value), one entry per sender (first one kept)."""

    __slots__ = ("by_rv", "round_senders")

    def __init__(self, votes: Iterable[SignedAux] = ()):
        self.by_rv: dict[tuple[int, int], dict[int, SignedAux]] = {}
        self.round_senders: dict[int, set[int]] = {}
        for v in votes:
            self.add(v)

    def add(self, v: SignedAux) -> bool:
        key = (v.payload.round, v.payload.value)
        slot = self.by_rv.setdefault(key, {})
        if v.sender in slot:
            return False
        slot[v.sender] = v
        self.round_senders.setdefault(key[0], set()).add(v.sender)
        return True

    def count(self, rnd: int, value: int) -> int:
        slot = self.by_rv.get((rnd, value))
        return len(slot) if slot else 0

    def senders_in_round(self, rnd: int) -> int:
        s = self.round_senders.get(rnd)
        return len(s) if s else 0

    def lowest(self, rnd: int, value: int, k: int) -> list[SignedAux]:
        slot = self.by_rv.get((rnd, value), {})
        return [slot[s] for s in sorted(slot)[:k]]


def satisfied_branch(config: InstanceConfig, r: int, est: int, count: CountFn) -> Optional[Branch]:
    """Which rule makes ``(r, est)`` valid, or None when no rule applies."""
    n, t = config.n, config.t
    if r == 0:
        return NO_PROOFS
    if r == 1:
        if count(0, est) >= t + 1:
            return (0, est, t + 1)
        return None
    b = (r - 1) % 2
    if b == est:
        if r == 2 and count(0, b) >= t + 1:
            return (0, b, t + 1)
        if count(r - 2, b) >= n - t:
            return (r - 2, b, n - t)
    else:
        if count(r - 1, 1 - b) >= n - t:
            return (r - 1, 1 - b, n - t)
    return None


def is_valid(config: InstanceConfig, r: int, est: int, proofs: Iterable[SignedAux]) -> bool:
    if est not in (0, 1) or r < 0:
        return False
    return satisfied_branch(config, r, est, VoteIndex(proofs).count) is not None


def minimal_witness(config: InstanceConfig, r: int, est: int, index: VoteIndex) -> Optional[frozenset]:
    """Smallest proof set satisfying the predicate, lowest sender ids first."""
    branch = satisfied_branch(config, r, est, index.count)
    if branch is None:
        return None
    rnd, value, k = branch
    if k == 0:
        return frozenset()
    return frozenset(index.lowest(rnd, value, k))
