"""Simulation parameter and state models"""
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from sources.events import ActionType


class OverloadParams(BaseModel):
    """Information overload parameters of one agent"""
    model_config = ConfigDict(frozen=True)

    m_max: int = Field(30, ge=1)  # messages per timestep before overload
    alpha: float = Field(0.8, ge=0.0, le=1.0)  # rate of information loss under overload


class SimConfig(BaseModel):
    """Simulation run settings"""
    horizon: int = Field(720, ge=1)  # timesteps
    seed: int = Field(0, ge=0, lt=2**64)
    params: OverloadParams = OverloadParams()
    agent_params: dict[str, OverloadParams] = Field(default_factory=dict)
    start: datetime = datetime(2018, 6, 1, tzinfo=timezone.utc)
    resolution: timedelta = timedelta(hours=1)
    response_selection: Literal["proportional", "max"] = "proportional"

    @field_validator("start")
    @classmethod
    def _utc(cls, value: datetime) -> datetime:
        return value.replace(tzinfo=timezone.utc) if value.tzinfo is None else value

    def params_for(self, agent: str) -> OverloadParams:
        return self.agent_params.get(agent, self.params)

    def with_params(self, m_max: int, alpha: float, seed: Optional[int] = None) -> "SimConfig":
        update = {"params": OverloadParams(m_max=m_max, alpha=alpha)}
        if seed is not None:
            update["seed"] = seed
        return self.model_copy(update=update)


class SeedActivity(BaseModel):
    """Spontaneous activity that starts conversations"""
    background_rates: dict[str, float] = Field(default_factory=dict)  # expected initiations per step
    scheduled_initiations: list[tuple[int, str]] = Field(default_factory=list)  # (t, user_id)

    @field_validator("background_rates")
    @classmethod
    def _non_negative(cls, value: dict[str, float]) -> dict[str, float]:
        for user, rate in value.items():
            if rate < 0:
                raise ValueError(f"background rate of {user!r} must be >= 0, got {rate}")
        return value


@dataclass(frozen=True, slots=True)
class Message:
    """A notification delivered to one recipient"""
    sender: str
    action: ActionType
    conversation_id: str
    event_node_id: str
    created_at: int
    delivery_id: int = -1


@dataclass(frozen=True)
class QueueState:
    """Actionable information queue (oldest first) and current capacity"""
    queue: tuple[Message, ...] = ()
    capacity: int = 0
    last_overload: int = 0


@dataclass
class AgentState:
    user_id: str
    params: OverloadParams
    queue: QueueState
    rng: np.random.Generator
    background_init_rate: float = 0.0
    inbox: list[Message] = field(default_factory=list)


@dataclass(frozen=True, slots=True)
class TraceRecord:
    """Per-agent, per-step overload trace"""
    t: int
    agent: str
    received: int  # |R_{t-1}|
    queued: int  # |A_t| after responses
    capacity: int  # M_t
    overload: int  # O
    dropped: int
    responded: int
    load: int  # |A_{t-1}| + |R_{t-1}|


TRACE_COLUMNS = ["t", "agent", "received", "queued", "capacity", "overload", "dropped", "responded", "load"]
