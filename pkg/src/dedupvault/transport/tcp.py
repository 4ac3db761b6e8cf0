"""Length-prefixed frames over TCP with asyncio.

Every connection starts with a ``Hello`` from the side that dialled, naming
its role (and user id for a DU), so the listener can route replies.  Each
:class:`TcpNode` hosts one actor; handlers run on the event loop one at a
time, exactly as in the in-memory network.
"""

from __future__ import annotations

import asyncio
import logging

from .. import messages
from ..messages import Hello, Role
from ..protocol.runtime import PRI, PUB, Context, du_address, run_handler
from ..wire import CodecError

log = logging.getLogger(__name__)


def _address_for(hello: Hello) -> str:
    if hello.role == Role.PUBCSP:
        return PUB
    if hello.role == Role.PRICSP:
        return PRI
    return du_address(hello.u_id)


def _hello_for(address: str) -> Hello:
    if address == PUB:
        return Hello(Role.PUBCSP, messages.ZERO_ID)
    if address == PRI:
        return Hello(Role.PRICSP, messages.ZERO_ID)
    return Hello(Role.DU, bytes.fromhex(address.split(":", 1)[1]))


async def read_frame(reader: asyncio.StreamReader) -> bytes:
    header = await reader.readexactly(4)
    n = messages.frame_length(header)
    return header + await reader.readexactly(n)


class _TcpContext(Context):
    def __init__(self, node: "TcpNode") -> None:
        super().__init__()
        self._node = node

    def now(self) -> float:
        return asyncio.get_running_loop().time()


class TcpNode:
    def __init__(self, actor, *, transcript: list | None = None) -> None:
        self.actor = actor
        self.address = actor.address
        self.transcript = transcript
        self._writers: dict[str, asyncio.StreamWriter] = {}
        self._server: asyncio.base_events.Server | None = None
        self._tasks: set[asyncio.Task] = set()
        self._changed = asyncio.Event()
        actor.attach(_TcpContext(self))

    # -- lifecycle

    async def listen(self, host: str = "127.0.0.1", port: int = 0) -> int:
        self._server = await asyncio.start_server(self._accept, host, port)
        return self._server.sockets[0].getsockname()[1]

    async def connect(self, peer: str, host: str, port: int) -> None:
        reader, writer = await asyncio.open_connection(host, port)
        writer.write(messages.encode(_hello_for(self.address)))
        await writer.drain()
        self._writers[peer] = writer
        self._spawn(self._read_loop(peer, reader))

    async def close(self) -> None:
        if self._server is not None:
            self._server.close()
        for w in list(self._writers.values()):
            w.close()
        current = asyncio.current_task()
        pending = [t for t in self._tasks if t is not current]
        for t in pending:
            t.cancel()
        await asyncio.gather(*pending, return_exceptions=True)
        self._writers.clear()
        if self._server is not None:
            await self._server.wait_closed()

    def _spawn(self, coro) -> None:
        task = asyncio.ensure_future(coro)
        self._tasks.add(task)
        task.add_done_callback(self._tasks.discard)

    async def _accept(self, reader, writer) -> None:
        task = asyncio.current_task()
        self._tasks.add(task)
        task.add_done_callback(self._tasks.discard)
        try:
            hello = messages.decode(await read_frame(reader))
        except (CodecError, asyncio.IncompleteReadError, ConnectionError):
            writer.close()
            return
        if not isinstance(hello, Hello):
            writer.close()
            return
        peer = _address_for(hello)
        self._writers[peer] = writer
        await self._read_loop(peer, reader)

    async def _read_loop(self, peer: str, reader) -> None:
        try:
            while True:
                frame = await read_frame(reader)
                try:
                    msg = messages.decode(frame)
                except CodecError as exc:
                    log.warning("%s: undecodable frame from %s: %s", self.address, peer, exc)
                    continue
                self._dispatch(self.actor.on_message, peer, msg)
        except (asyncio.IncompleteReadError, ConnectionError, CodecError):
            pass
        finally:
            if self._writers.get(peer) is not None and reader.at_eof():
                self._writers.pop(peer, None)

    # -- handler execution

    def _dispatch(self, fn, *args):
        holder = {}

        def body():
            holder["value"] = fn(*args)

        effects = run_handler(self.actor.ctx, body)
        if effects is not None:
            loop = asyncio.get_running_loop()
            for dst, msg in effects.sends:
                self._send(dst, messages.encode(msg))
            for delay, token in effects.timers:
                loop.call_later(delay, self._dispatch, self.actor.on_timer, token)
        self._changed.set()
        return holder.get("value")

    def _send(self, dst: str, frame: bytes) -> None:
        writer = self._writers.get(dst)
        if self.transcript is not None:
            self.transcript.append((self.address, dst, frame))
        if writer is None or writer.is_closing():
            log.debug("%s: no connection to %s", self.address, dst)
            return
        writer.write(frame)

    def call(self, fn, *args):
        """Run ``fn`` as a handler of this node's actor."""
        return self._dispatch(fn, *args)

    async def wait_for(self, predicate, timeout: float) -> bool:
        async def waiter():
            while not predicate():
                self._changed.clear()
                await self._changed.wait()

        try:
            await asyncio.wait_for(waiter(), timeout)
        except asyncio.TimeoutError:
            return predicate()
        return True


async def run_flow(node: TcpNode, start, *args, timeout: float = 120.0):
    """Start a DU flow on ``node`` and wait for its result."""
    from ..protocol.du import raise_for

    flow = node.call(start, *args)
    await node.wait_for(lambda: flow.done, timeout)
    return raise_for(flow)
