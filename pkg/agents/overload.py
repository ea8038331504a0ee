"""
Information Overload Dynamics

Capacity-limited actionable information queue:
- Overload quantity O from queued plus received messages against M_max
- Capacity loss M_t = M_{t-1} - round(O^alpha), floored at 0, no recovery
- FIFO eviction of the oldest messages down to M_t
"""

import math
from dataclasses import replace
from typing import Sequence

from .models import Message, OverloadParams, QueueState


def compute_overload(a_len: int, r_len: int, m_max: int) -> int:
    """
    Amount of excessive incoming information.

    Args:
        a_len: Messages left in the queue from the previous step
        r_len: Messages received during the previous step
        m_max: Information overload threshold

    Returns:
        (a_len + r_len) - m_max when a_len + r_len >= m_max, else 0;
        clamped to [0, m_max]

    Example:
        compute_overload(10, 25, 30)  # 5
        compute_overload(100, 0, 30)  # 30
    """
    if a_len < 0 or r_len < 0:
        raise ValueError(f"queue lengths must be >= 0, got a={a_len}, r={r_len}")
    total = a_len + r_len
    overload = total - m_max if total >= m_max else 0
    return min(max(overload, 0), m_max)


def round_half_away(value: float) -> int:
    if value >= 0:
        return int(math.floor(value + 0.5))
    return -int(math.floor(-value + 0.5))


def update_capacity(m_prev: int, overload: int, alpha: float) -> int:
    """
    New actionable information capacity.

    With O = 0 the capacity holds. Otherwise loss = round(O^alpha), so alpha = 0
    loses exactly one message of capacity per overloaded step.

    Example:
        update_capacity(30, 16, 0.5)  # 26
        update_capacity(2, 25, 1.0)   # 0
    """
    if m_prev < 0 or overload < 0:
        raise ValueError(f"capacity and overload must be >= 0, got M={m_prev}, O={overload}")
    if overload == 0:
        return m_prev
    loss = round_half_away(overload ** alpha)
    return m_prev - loss if loss <= m_prev else 0


def enqueue_and_evict(
    state: QueueState, received: Sequence[Message], capacity: int
) -> tuple[QueueState, tuple[Message, ...]]:
    """
    Append received messages and drop the oldest ones beyond capacity.

    Returns:
        (new state holding at most `capacity` messages, dropped messages oldest first)
    """
    if capacity < 0:
        raise ValueError(f"capacity must be >= 0, got {capacity}")
    combined = state.queue + tuple(received)
    excess = len(combined) - capacity
    if excess <= 0:
        return replace(state, queue=combined, capacity=capacity), ()
    return replace(state, queue=combined[excess:], capacity=capacity), combined[:excess]


def initial_queue(params: OverloadParams) -> QueueState:
    return QueueState(queue=(), capacity=params.m_max, last_overload=0)


def advance_queue(
    state: QueueState, received: Sequence[Message], params: OverloadParams
) -> tuple[QueueState, tuple[Message, ...]]:
    """One overload update: compute O, shrink capacity, enqueue and evict."""
    overload = compute_overload(len(state.queue), len(received), params.m_max)
    capacity = update_capacity(state.capacity, overload, params.alpha)
    new_state, dropped = enqueue_and_evict(state, received, capacity)
    return replace(new_state, last_overload=overload), dropped
