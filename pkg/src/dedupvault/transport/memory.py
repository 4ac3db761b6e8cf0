"""Deterministic in-memory network with a simulated clock and fault injection.

Messages travel as encoded frames, so everything the codec would see on a
socket is exercised here too.  Under a fixed seed the same script produces
the same transcript bytes.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import random
from dataclasses import dataclass

from .. import messages
from ..protocol.runtime import Context, run_handler
from ..wire import CodecError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TranscriptEntry:
    time: float
    src: str
    dst: str
    frame: bytes
    dropped: bool = False

    @property
    def tag(self) -> int:
        return self.frame[5]


class _MemContext(Context):
    def __init__(self, net: "MemoryNetwork") -> None:
        super().__init__()
        self._net = net

    def now(self) -> float:
        return self._net.now


class MemoryNetwork:
    def __init__(self, seed: int = 0, *, latency: float = 0.001, jitter: float = 0.0,
                 drop_rate: float = 0.0, dup_rate: float = 0.0) -> None:
        self.rng = random.Random(seed)
        self.latency = latency
        self.jitter = jitter
        self.drop_rate = drop_rate
        self.dup_rate = dup_rate
        self.now = 0.0
        self.actors: dict = {}
        self.transcript: list[TranscriptEntry] = []
        self.crashes = 0
        self.decode_failures = 0
        self._queue: list = []
        self._seq = itertools.count()
        self._scripted_drops: list[list] = []  # [tag, remaining, src, dst]

    # -- wiring

    def attach(self, actor) -> None:
        ctx = _MemContext(self)
        actor.attach(ctx)
        self.actors[actor.address] = actor
        self.call(actor.address, actor.on_start)

    def detach(self, address: str) -> None:
        self.actors.pop(address, None)

    def drop_next(self, tag: int, count: int = 1, *, src: str | None = None, dst: str | None = None) -> None:
        """Drop the next ``count`` frames with message tag ``tag``."""
        self._scripted_drops.append([tag, count, src, dst])

    def clear_drops(self) -> None:
        self._scripted_drops.clear()

    def inject(self, src: str, dst: str, frame: bytes) -> None:
        """Put raw bytes on the wire as if ``src`` had sent them (replays, forgeries)."""
        self._transmit(src, dst, bytes(frame))

    # -- effects

    def call(self, address: str, fn, *args):
        """Run ``fn`` as a handler of the actor at ``address``."""
        actor = self.actors[address]
        holder = {}

        def body():
            holder["value"] = fn(*args)

        self._apply(actor, run_handler(actor.ctx, body))
        return holder.get("value")

    def _apply(self, actor, effects) -> None:
        if effects is None:
            self.crashes += 1
            return
        for dst, msg in effects.sends:
            self._transmit(actor.address, dst, messages.encode(msg))
        for delay, token in effects.timers:
            self._push(self.now + delay, ("timer", actor.address, token))

    def _push(self, when: float, event) -> None:
        heapq.heappush(self._queue, (when, next(self._seq), event))

    def _scripted_drop(self, src: str, dst: str, tag: int) -> bool:
        for rule in self._scripted_drops:
            if rule[0] == tag and rule[1] > 0 and rule[2] in (None, src) and rule[3] in (None, dst):
                rule[1] -= 1
                return True
        return False

    def _delay(self) -> float:
        return self.latency + (self.rng.random() * self.jitter if self.jitter else 0.0)

    def _transmit(self, src: str, dst: str, frame: bytes) -> None:
        dropped = self._scripted_drop(src, dst, frame[5]) or (
            self.drop_rate > 0 and self.rng.random() < self.drop_rate)
        self.transcript.append(TranscriptEntry(self.now, src, dst, frame, dropped))
        if dropped:
            return
        self._push(self.now + self._delay(), ("deliver", src, dst, frame))
        if self.dup_rate > 0 and self.rng.random() < self.dup_rate:
            self._push(self.now + self._delay(), ("deliver", src, dst, frame))

    # -- running

    def step(self) -> bool:
        if not self._queue:
            return False
        when, _, event = heapq.heappop(self._queue)
        self.now = max(self.now, when)
        if event[0] == "timer":
            actor = self.actors.get(event[1])
            if actor is not None:
                self._apply(actor, run_handler(actor.ctx, actor.on_timer, event[2]))
            return True
        _, src, dst, frame = event
        actor = self.actors.get(dst)
        if actor is None:
            log.debug("no actor at %s; dropping frame", dst)
            return True
        try:
            msg = messages.decode(frame)
        except CodecError:
            self.decode_failures += 1
            return True
        self._apply(actor, run_handler(actor.ctx, actor.on_message, src, msg))
        return True

    def run(self, *, max_time: float | None = None, max_events: int = 10_000_000) -> int:
        """Process events until the queue is empty. Returns the number handled."""
        n = 0
        while self._queue and n < max_events:
            if max_time is not None and self._queue[0][0] > max_time:
                break
            self.step()
            n += 1
        return n

    def run_until(self, predicate, *, max_events: int = 10_000_000) -> bool:
        n = 0
        while not predicate():
            if not self._queue or n >= max_events:
                return predicate()
            self.step()
            n += 1
        return True

    @property
    def idle(self) -> bool:
        return not self._queue

    def frames(self, *, src: str | None = None, dst: str | None = None, delivered_only: bool = False):
        return [e for e in self.transcript
                if (src is None or e.src == src) and (dst is None or e.dst == dst)
                and not (delivered_only and e.dropped)]
