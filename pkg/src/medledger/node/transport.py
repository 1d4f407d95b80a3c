"""Plain persistent TCP transport between peers.

Frames are a big-endian u32 length followed by canonical codec bytes of one
wire document. The first frame each way is a hello carrying chain id,
genesis hash, and node id; a peer with a different genesis is disconnected,
which enforces that every node in a cluster boots from the same file.
Outbound connections retry forever in the background, so peers can start in
any order.
"""

from __future__ import annotations

import asyncio
import logging
from typing import Callable, Optional

from ..codec import Value, decode_canonical, encode_canonical
from ..errors import MedledgerError
from ..ledger import GenesisInfo
from .config import NodeConfig

log = logging.getLogger("medledger.transport")

_MAX_FRAME = 64 * 1024 * 1024
_RETRY_DELAY_S = 1.0


def _hello_doc(config: NodeConfig, genesis: GenesisInfo) -> dict:
    return {
        "chainId": genesis.chain_id,
        "genesisHash": genesis.genesis_hash.hex,
        "nodeId": config.node_id,
        "type": "hello",
    }


async def _read_frame(reader: asyncio.StreamReader) -> Optional[Value]:
    try:
        header = await reader.readexactly(4)
    except (asyncio.IncompleteReadError, ConnectionError):
        return None
    length = int.from_bytes(header, "big")
    if length > _MAX_FRAME:
        return None
    try:
        payload = await reader.readexactly(length)
    except (asyncio.IncompleteReadError, ConnectionError):
        return None
    try:
        return decode_canonical(payload)
    except MedledgerError:
        return None


def _frame(doc: Value) -> bytes:
    payload = encode_canonical(doc)
    return len(payload).to_bytes(4, "big") + payload


class PeerTransport:
    """Full-mesh connectivity for one node."""

    def __init__(
        self,
        config: NodeConfig,
        genesis: GenesisInfo,
        on_message: Callable[[Value], None],
    ):
        self.config = config
        self.genesis = genesis
        self.on_message = on_message
        self._writers: dict[str, asyncio.StreamWriter] = {}
        self._server: Optional[asyncio.base_events.Server] = None
        self._tasks: list[asyncio.Task] = []
        self._closed = False

    async def start(self) -> None:
        self._server = await asyncio.start_server(
            self._accept, self.config.consensus_host, self.config.consensus_port
        )
        for peer in self.config.peers:
            self._tasks.append(asyncio.ensure_future(self._dial_loop(peer)))

    async def stop(self) -> None:
        self._closed = True
        for task in self._tasks:
            task.cancel()
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        for writer in self._writers.values():
            writer.close()

    @property
    def connected_peers(self) -> list[str]:
        return sorted(self._writers)

    def broadcast(self, doc: Value) -> None:
        """Best-effort send to every connected peer."""
        data = _frame(doc)
        for node_id, writer in list(self._writers.items()):
            try:
                writer.write(data)
            except ConnectionError:
                self._writers.pop(node_id, None)

    # --- inbound ----------------------------------------------------------

    async def _accept(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        hello = await _read_frame(reader)
        if not self._hello_ok(hello):
            writer.close()
            return
        await self._send_hello(writer)
        await self._pump(reader)
        writer.close()

    # --- outbound -------------------------------------------------------------

    async def _dial_loop(self, peer) -> None:
        while not self._closed:
            try:
                reader, writer = await asyncio.open_connection(peer.host, peer.port)
            except OSError:
                await asyncio.sleep(_RETRY_DELAY_S)
                continue
            try:
                await self._send_hello(writer)
                hello = await _read_frame(reader)
                if not self._hello_ok(hello):
                    writer.close()
                    await asyncio.sleep(_RETRY_DELAY_S)
                    continue
                self._writers[peer.node_id] = writer
                await self._pump(reader)
            finally:
                self._writers.pop(peer.node_id, None)
                writer.close()
            if not self._closed:
                await asyncio.sleep(_RETRY_DELAY_S)

    async def _send_hello(self, writer: asyncio.StreamWriter) -> None:
        writer.write(_frame(_hello_doc(self.config, self.genesis)))
        await writer.drain()

    def _hello_ok(self, hello: Optional[Value]) -> bool:
        if not isinstance(hello, dict) or hello.get("type") != "hello":
            return False
        if hello.get("genesisHash") != self.genesis.genesis_hash.hex:
            log.warning("peer %s has a different genesis; dropping", hello.get("nodeId"))
            return False
        return hello.get("chainId") == self.genesis.chain_id

    async def _pump(self, reader: asyncio.StreamReader) -> None:
        while True:
            doc = await _read_frame(reader)
            if doc is None:
                return
            try:
                self.on_message(doc)
            except Exception:  # a bad peer message must not kill the link
                log.exception("error handling peer message")
