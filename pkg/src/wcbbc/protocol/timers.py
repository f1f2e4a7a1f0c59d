from __future__ import annotations

from ..types import TimerPolicy


def timer_round(index: int) -> int:
    # round r owns timers 2r (before its own vote) and 2r+1 (after the quorum)
    return index // 2


def timer_duration(policy: TimerPolicy, index: int) -> int:
    if timer_round(index) <= policy.free_rounds:
        return 0
    return policy.base + policy.growth * (index - 2 * policy.free_rounds)
