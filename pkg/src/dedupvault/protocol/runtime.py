"""Actor plumbing shared by the in-memory and TCP runtimes.

An actor never blocks.  It reacts to ``on_message`` and ``on_timer`` and
talks to the outside world only through its :class:`Context`.  Runtimes run
each handler inside :func:`run_handler`, which buffers the handler's sends
and timers and drops them if the handler crashes part way through.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from ..store import SimulatedCrash

log = logging.getLogger(__name__)

PUB = "pub"
PRI = "pri"


def du_address(u_id: bytes) -> str:
    return "du:" + u_id.hex()


def address_role(address: str) -> str:
    return address.split(":", 1)[0]


@dataclass
class Effects:
    sends: list = field(default_factory=list)  # (dst, msg)
    timers: list = field(default_factory=list)  # (delay, token)


class Context:
    """What a handler may do. Runtimes subclass this."""

    def __init__(self) -> None:
        self._effects: Effects | None = None

    def now(self) -> float:
        raise NotImplementedError

    def send(self, dst: str, msg) -> None:
        if self._effects is None:
            raise RuntimeError("send outside a handler")
        self._effects.sends.append((dst, msg))

    def set_timer(self, delay: float, token) -> None:
        if self._effects is None:
            raise RuntimeError("set_timer outside a handler")
        self._effects.timers.append((delay, token))


class Actor:
    address: str = ""
    ctx: Context

    def attach(self, ctx: Context) -> None:
        self.ctx = ctx

    def on_start(self) -> None:
        pass

    def on_message(self, src: str, msg) -> None:
        raise NotImplementedError

    def on_timer(self, token) -> None:
        pass


def run_handler(ctx: Context, fn, *args) -> Effects | None:
    """Run one handler; return its effects, or None if it crashed mid-write."""
    ctx._effects = Effects()
    try:
        fn(*args)
    except SimulatedCrash as exc:
        log.debug("handler crashed: %s", exc)
        return None
    finally:
        effects, ctx._effects = ctx._effects, None
    return effects
