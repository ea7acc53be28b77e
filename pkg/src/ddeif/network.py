"""Lockstep broadcast bus for measurement contributions.

The harness advances the bus once per estimator tick. Every agent
broadcasts its contribution, then every agent collects what reached it for
that step. Loss windows are closed-open ``[start, end)`` in send time.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Optional

from .estimator import WIRE_SIZE, Contribution, decode_contribution, encode_contribution


@dataclass(frozen=True)
class LossWindow:
    start: float
    end: float
    mode: str = "blackout"
    # (sender, receiver) pairs that are cut when mode == "links"
    links: frozenset = frozenset()

    def __post_init__(self) -> None:
        if not self.start < self.end:
            raise ValueError(f"loss window needs start < end, got [{self.start}, {self.end})")
        if self.mode not in ("blackout", "links"):
            raise ValueError(f"unknown loss mode {self.mode!r}")
        object.__setattr__(self, "links", frozenset(tuple(link) for link in self.links))

    def cuts(self, sender: int, receiver: int, t: float) -> bool:
        if not self.start <= t < self.end:
            return False
        return self.mode == "blackout" or (sender, receiver) in self.links


@dataclass
class LossSchedule:
    windows: list[LossWindow] = field(default_factory=list)

    def __post_init__(self) -> None:
        ordered = sorted(self.windows, key=lambda w: w.start)
        for a, b in zip(ordered, ordered[1:]):
            if b.start < a.end:
                raise ValueError("loss windows must not overlap")
        self.windows = ordered

    @classmethod
    def blackout(cls, start: float, end: float) -> "LossSchedule":
        return cls([LossWindow(start, end)])

    def blocked(self, sender: int, receiver: int, t: float) -> bool:
        return any(w.cuts(sender, receiver, t) for w in self.windows)

    def total_blackout(self, t: float) -> bool:
        return any(w.mode == "blackout" and w.start <= t < w.end for w in self.windows)


@dataclass(frozen=True)
class BusMessage:
    sender: int
    k: int
    payload: Contribution
    send_time: float


class Bus:
    """Synchronous broadcast bus with optional whole-step latency.

    A message sent at step ``k`` is due at step ``k + latency``. Anything
    still queued for an earlier step when an agent collects is stale and is
    dropped rather than fused.
    """

    def __init__(
        self,
        n_agents: int,
        schedule: Optional[LossSchedule] = None,
        latency: int = 0,
        record: Optional[BinaryIO] = None,
    ):
        if latency < 0:
            raise ValueError("latency must be a non-negative number of steps")
        self.n_agents = n_agents
        self.schedule = schedule or LossSchedule()
        self.latency = latency
        self.record = record
        self._queues: list[dict[int, list[Contribution]]] = [defaultdict(list) for _ in range(n_agents)]
        self._last_send = [float("-inf")] * n_agents
        self.produced = 0
        self.delivered = 0
        self.dropped_stale = 0

    def broadcast(self, msg: BusMessage, t: Optional[float] = None) -> int:
        """Queue ``msg`` for every reachable peer; returns the number of recipients."""
        t = msg.send_time if t is None else t
        if t < self._last_send[msg.sender]:
            raise ValueError("send times must be non-decreasing per sender")
        self._last_send[msg.sender] = t
        self.produced += 1
        if self.record is not None:
            self.record.write(encode_contribution(msg.payload))
        due = msg.k + self.latency
        sent = 0
        for receiver in range(self.n_agents):
            if receiver == msg.sender or self.schedule.blocked(msg.sender, receiver, t):
                continue
            self._queues[receiver][due].append(msg.payload)
            sent += 1
        self.delivered += sent
        return sent

    def collect(self, agent: int, k: int) -> list[Contribution]:
        """Peer contributions due at step ``k`` (never the agent's own)."""
        queue = self._queues[agent]
        for step in [s for s in queue if s < k]:
            self.dropped_stale += len(queue.pop(step))
        return sorted(queue.pop(k, []), key=lambda c: c.agent)


def read_record(path: Path | str) -> Iterable[Contribution]:
    data = Path(path).read_bytes()
    for offset in range(0, len(data), WIRE_SIZE):
        yield decode_contribution(data[offset : offset + WIRE_SIZE])
