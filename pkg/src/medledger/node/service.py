"""The running node: one replica, one event loop, one API surface.

Every mutation (consensus message, timeout, transaction admission) funnels
through a single asyncio queue consumed by one task, so the replica never
sees concurrent events; API reads work on immutable ledger snapshots and
need no locking. Wall-clock timeouts grow linearly with the round number,
mirroring the simulator's tick behavior.
"""

from __future__ import annotations

import asyncio
import logging
import secrets
import time
from dataclasses import dataclass
from typing import Optional

from .. import crypto
from ..acl import ElevationLevel
from ..blobstore import BlobStore
from ..chain import Transaction, tx_doc, tx_from_doc
from ..codec import Digest, Value
from ..consensus import message_doc, message_from_doc
from ..errors import MedledgerError, PermissionDenied
from ..ledger import GenesisInfo, LedgerState, validate_tx_stateless
from ..query import NotificationEvent
from ..records import LoginRecord, check_password
from ..replica import Replica, ReplicaOutput
from .config import MIN_LIVE_VALIDATORS, NodeConfig
from .transport import PeerTransport

log = logging.getLogger("medledger.node")


@dataclass
class Session:
    token: str
    user: str
    elevation: ElevationLevel
    mob: str
    expires_at: float

    @property
    def expired(self) -> bool:
        return time.time() > self.expires_at


class NodeService:
    def __init__(self, config: NodeConfig, genesis: GenesisInfo, keypair: crypto.KeyPair):
        if (
            config.mode == "live"
            and len(genesis.validators) < MIN_LIVE_VALIDATORS
            and not config.allow_small_cluster
        ):
            raise PermissionDenied(
                f"live topology needs at least {MIN_LIVE_VALIDATORS} validators"
            )
        self.config = config
        self.genesis = genesis
        self.replica = Replica(config.node_id, keypair, genesis, config.max_block_txs)
        self.blobs = BlobStore(config.blob_dir, config.max_blob_size)
        self.sessions: dict[str, Session] = {}
        self.outbox: list[NotificationEvent] = []
        self.transport = PeerTransport(config, genesis, self._on_wire_doc)
        self._queue: Optional[asyncio.Queue] = None
        self._loop: Optional[asyncio.AbstractEventLoop] = None
        self._task: Optional[asyncio.Task] = None

    # --- lifecycle ---------------------------------------------------------

    async def start(self) -> None:
        self._loop = asyncio.get_running_loop()
        self._queue = asyncio.Queue()
        await self.transport.start()
        self._task = asyncio.create_task(self._run_loop())
        self._queue.put_nowait(("start", None))

    async def stop(self) -> None:
        if self._queue is not None:
            self._queue.put_nowait(("stop", None))
        if self._task is not None:
            await self._task
        await self.transport.stop()

    async def _run_loop(self) -> None:
        while True:
            kind, payload = await self._queue.get()
            if kind == "stop":
                return
            try:
                self._dispatch(kind, payload)
            except Exception:
                log.exception("error processing %s event", kind)

    def _dispatch(self, kind: str, payload) -> None:
        if kind == "start":
            output = self.replica.start()
        elif kind == "timeout":
            output = self.replica.deliver_timeout(payload)
        elif kind == "msg":
            output = self.replica.deliver(payload)
        elif kind == "tx":
            try:
                self.replica.submit(payload)
            except MedledgerError as exc:
                log.info("pending-queue admission refused %s: %s", payload.tx_id, exc)
                return
            output = self.replica.maybe_propose()
        else:
            return
        self._process_output(output)

    def _process_output(self, output: ReplicaOutput) -> None:
        if output.timer is not None:
            timer = output.timer
            delay_s = self.config.timeout_base_ms * (1 + timer.round) / 1000.0
            self._loop.call_later(delay_s, self._queue.put_nowait, ("timeout", timer))
        for msg in output.messages:
            self.transport.broadcast(message_doc(msg))
            self._queue.put_nowait(("msg", msg))  # loopback, same verification path
        for block in output.committed:
            log.info("committed height %d with %d txs", block.height, len(block.txs))

    # --- wire ingress -----------------------------------------------------

    def _on_wire_doc(self, doc: Value) -> None:
        if not isinstance(doc, dict):
            return
        if doc.get("type") == "tx":
            try:
                tx = tx_from_doc(doc.get("tx"))
                validate_tx_stateless(tx)
            except MedledgerError:
                return
            self._queue.put_nowait(("tx", tx))
            return
        try:
            msg = message_from_doc(doc)
        except MedledgerError:
            return
        self._queue.put_nowait(("msg", msg))

    # --- transactions -----------------------------------------------------

    async def submit_transaction(self, tx: Transaction) -> Digest:
        """Admit a transaction: stateless checks now, consensus later."""
        validate_tx_stateless(tx)
        self.transport.broadcast({"type": "tx", "tx": tx_doc(tx)})
        self._queue.put_nowait(("tx", tx))
        return tx.tx_id

    # --- sessions ------------------------------------------------------------

    def login(self, user: str, password: str) -> Session:
        stored = self.state.logins.get(user)
        if stored is None or not check_password(stored.record.password, password):
            raise PermissionDenied("unknown user or wrong password")
        session = Session(
            token=secrets.token_hex(16),
            user=user,
            elevation=stored.record.superset,
            mob=stored.record.mob,
            expires_at=time.time() + self.config.session_ttl_s,
        )
        self.sessions[session.token] = session
        return session

    def session_for(self, token: str) -> Optional[Session]:
        session = self.sessions.get(token)
        if session is None or session.expired:
            self.sessions.pop(token, None)
            return None
        return session

    def login_record(self, session: Session) -> LoginRecord:
        return self.state.logins[session.user].record

    # --- read surface ------------------------------------------------------

    @property
    def state(self) -> LedgerState:
        return self.replica.ledger

    def queue_notifications(self, events: list[NotificationEvent]) -> None:
        self.outbox.extend(events)

    def notifications_for(self, session: Session) -> list[NotificationEvent]:
        if session.elevation >= ElevationLevel.DOCTOR:
            return list(self.outbox)
        versions = self.state.patients.get(session.mob)
        if not versions:
            return []
        own_token = versions[-1].digest_hex
        return [event for event in self.outbox if event.token == own_token]
