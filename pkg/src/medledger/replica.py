"""Replica shell: one node's consensus core wired to its ledger.

The shell owns everything the pure consensus machine must not: it verifies
inbound message signatures against the validator set (dropping invalid or
stale traffic before any crypto where possible), signs outbound messages,
validates and applies blocks, tracks the pending transaction queue, and
reports which timeout the caller should schedule next. Both the in-process
simulator and the live node drive this same class, so the consensus path is
identical in both modes.

Proposal validation caches the resulting post-state by block hash, so a
block validated at prevote time is not re-executed at commit time. Commit
certificates received from peers have their quorum certificates verified
here, before the core ever sees them; quorums the node collects itself are
built from individually verified votes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

from . import consensus, crypto
from .chain import Block, Transaction, block_hash, verify_commit_signature
from .codec import Digest
from .consensus import (
    CommitCertificate,
    ConsensusHooks,
    ConsensusMessage,
    NodeState,
    Proposal,
    Timeout,
    Vote,
    message_signing_bytes,
    quorum,
)
from .errors import MedledgerError
from .ledger import GenesisInfo, LedgerState, apply_block, draft_block, initial_state, validate_tx_stateless
from .chain import genesis_block as make_genesis_block

DEFAULT_MAX_BLOCK_TXS = 100


@dataclass
class ReplicaOutput:
    """What one event produced: signed messages, commits, and a timer ask."""

    messages: list[ConsensusMessage] = field(default_factory=list)
    committed: list[Block] = field(default_factory=list)
    timer: Optional[Timeout] = None
    new_evidence: int = 0


class Replica:
    def __init__(
        self,
        node_id: str,
        keypair: crypto.KeyPair,
        genesis: GenesisInfo,
        max_block_txs: int = DEFAULT_MAX_BLOCK_TXS,
    ):
        self.node_id = node_id
        self.keypair = keypair
        self.genesis = genesis
        self.max_block_txs = max_block_txs
        self.ledger: LedgerState = initial_state(genesis)
        self.chain: list[Block] = [make_genesis_block(genesis.genesis_hash)]
        self.pending: dict[str, Transaction] = {}
        self.committed_tx_ids: set[str] = set()
        self.validator_keys: dict[str, str] = dict(genesis.validators)
        self.ns = NodeState(
            node_id=node_id, validators=tuple(node_id for node_id, _ in genesis.validators)
        )
        self.hooks = ConsensusHooks(
            build_block=self._build_block,
            validate_block=self._validate_block,
            commit_block=self._commit_block,
        )
        self._post_states: dict[tuple[int, str], LedgerState] = {}

    # --- hooks -----------------------------------------------------------

    def _build_block(self) -> Optional[Block]:
        drafted = draft_block(
            self.ledger, self.pending.values(), self.max_block_txs, self.node_id
        )
        if drafted is None:
            return None
        block, post = drafted
        self._post_states[(block.height, block_hash(block).hex)] = post
        return block

    def _validate_block(self, block: Block) -> bool:
        key = (block.height, block_hash(block).hex)
        if key in self._post_states:
            return True
        try:
            post = apply_block(self.ledger, block, verify_qc=False)
        except MedledgerError:
            return False
        self._post_states[key] = post
        return True

    def _commit_block(self, block: Block) -> bool:
        key = (block.height, block_hash(block).hex)
        post = self._post_states.get(key)
        if post is None:
            try:
                post = apply_block(self.ledger, block, verify_qc=False)
            except MedledgerError:
                return False
        self.ledger = post
        self.chain.append(block)
        for tx in block.txs:
            self.pending.pop(tx.tx_id.hex, None)
            self.committed_tx_ids.add(tx.tx_id.hex)
        self._post_states = {k: v for k, v in self._post_states.items() if k[0] > block.height}
        return True

    # --- inbound verification -------------------------------------------

    def _verify_envelope(self, msg: Union[Proposal, Vote]) -> bool:
        public_hex = self.validator_keys.get(msg.sender)
        if public_hex is None:
            return False
        if isinstance(msg, Proposal) and block_hash(msg.block).hex != msg.block_hash_hex:
            return False
        return crypto.verify(public_hex, message_signing_bytes(msg), msg.signature)

    def _verify_certificate(self, msg: CommitCertificate) -> bool:
        block = msg.block
        if block.height != msg.height:
            return False
        hash_hex = block_hash(block).hex
        counted: set[str] = set()
        for node_id, signature in block.commit_signatures:
            if node_id in counted:
                continue
            public_hex = self.validator_keys.get(node_id)
            if public_hex is None:
                continue
            if verify_commit_signature(public_hex, block.height, hash_hex, signature):
                counted.add(node_id)
        return len(counted) >= quorum(len(self.validator_keys))

    # --- event entry points -----------------------------------------------

    def start(self) -> ReplicaOutput:
        before = None
        evidence_before = len(self.ns.evidence)
        out, committed = consensus.start(self.ns, self.hooks)
        return self._finish(before, evidence_before, out, committed)

    def deliver(self, msg: ConsensusMessage) -> ReplicaOutput:
        # drop stale heights before spending any signature verification
        if msg.height < self.ns.height:
            return ReplicaOutput()
        if isinstance(msg, CommitCertificate):
            if not self._verify_certificate(msg):
                return ReplicaOutput()
        elif not self._verify_envelope(msg):
            return ReplicaOutput()
        first_sight = (
            isinstance(msg, Proposal)
            and msg.height == self.ns.height
            and self.ns.proposals.get(msg.round) is None
        )
        output = self._handle(msg)
        # gossip proposals once on first sight (original sender signature
        # intact), so every peer sees what the proposer sent everyone else;
        # this is also what surfaces equivocation as recorded evidence
        if first_sight and self.ns.proposals.get(msg.round) is msg:
            output.messages.append(msg)
        return output

    def deliver_timeout(self, timeout: Timeout) -> ReplicaOutput:
        return self._handle(timeout)

    def maybe_propose(self) -> ReplicaOutput:
        """Re-check proposer duty after new transactions arrive (live mode)."""
        before = self._position()
        evidence_before = len(self.ns.evidence)
        out = consensus.poke_proposer(self.ns, self.hooks)
        return self._finish(before, evidence_before, out, [])

    def _handle(self, event: Union[ConsensusMessage, Timeout]) -> ReplicaOutput:
        before = self._position()
        evidence_before = len(self.ns.evidence)
        out, committed = consensus.handle(self.ns, event, self.hooks)
        return self._finish(before, evidence_before, out, committed)

    def _position(self) -> tuple[int, int, consensus.Step]:
        return (self.ns.height, self.ns.round, self.ns.step)

    def _finish(self, before, evidence_before: int, out, committed) -> ReplicaOutput:
        timer = None
        if self._position() != before:
            timer = Timeout(self.ns.height, self.ns.round, self.ns.step)
        signed: list[ConsensusMessage] = []
        for msg in out:
            if isinstance(msg, CommitCertificate):
                signed.append(msg)
            else:
                signature = crypto.sign(self.keypair, message_signing_bytes(msg))
                signed.append(replace(msg, signature=signature))
        return ReplicaOutput(
            messages=signed,
            committed=list(committed),
            timer=timer,
            new_evidence=len(self.ns.evidence) - evidence_before,
        )

    # --- transactions ------------------------------------------------------

    def submit(self, tx: Transaction) -> None:
        """Stateless admission into the pending queue. Raises on bad input."""
        validate_tx_stateless(tx)
        tx_hex = tx.tx_id.hex
        if tx_hex in self.committed_tx_ids or tx_hex in self.pending:
            return
        self.pending[tx_hex] = tx

    # --- inspection ----------------------------------------------------------

    @property
    def height(self) -> int:
        return self.ledger.height

    @property
    def state_hash(self) -> Digest:
        return self.ledger.state_hash

    def committed_blocks(self) -> list[Block]:
        """Blocks after genesis, in commit order."""
        return self.chain[1:]
