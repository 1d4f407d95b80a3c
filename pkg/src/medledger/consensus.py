"""BFT consensus core: a deterministic, message-driven state machine.

One height is agreed in rounds of propose / prevote / precommit with 2f+1
quorums, tolerating f = floor((n-1)/3) Byzantine validators out of n. The
machine is pure in the sense that matters for replication: identical event
sequences produce identical outputs. Everything impure lives in the caller
(the replica shell or the simulator): it verifies message signatures before
handing events in, signs the outbound messages this module emits with empty
signatures, schedules a timeout whenever (height, round, step) changes, and
supplies block building/validation/commit through `ConsensusHooks`.

Rules implemented per round r at height h:

* the proposer (round-robin: validators[(h + r) mod n]) broadcasts a
  proposal on entering the round, re-proposing its locked block if any;
* on a valid proposal, or on a propose timeout, each node broadcasts one
  prevote: its locked block's hash if locked, else the proposal's hash if
  valid, else nil;
* a 2f+1 prevote quorum for a block locks it (a locked node prevotes only
  that block until it sees a prevote quorum for another block in a later
  round, which moves or drops the lock) and triggers a precommit; a prevote
  timeout or nil quorum triggers a nil precommit;
* a 2f+1 precommit quorum for a block commits it, at any round, and the
  committing node broadcasts a commit certificate so lagging peers catch
  up; a nil precommit quorum or precommit timeout advances the round,
  keeping the lock.

Duplicate messages are idempotent. Conflicting signed messages from one
sender for the same height/round/step are kept as equivocation evidence and
only the first is counted. Messages from older heights are dropped;
messages from future heights are buffered and replayed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Union

from .chain import Block, block_doc, block_from_doc, block_hash, qc_signing_bytes
from .codec import Value, encode_canonical
from .errors import WrongType

NIL = ""  # vote value meaning "no block"

PREVOTE = "prevote"
PRECOMMIT = "precommit"


class Step(Enum):
    PROPOSE = "Propose"
    PREVOTE = "Prevote"
    PRECOMMIT = "Precommit"


def quorum(n: int) -> int:
    """Smallest vote count that guarantees safety with floor((n-1)/3) faults."""
    return 2 * ((n - 1) // 3) + 1


def proposer_for(validators: tuple[str, ...], height: int, round_num: int) -> str:
    """Deterministic round-robin proposer selection."""
    return validators[(height + round_num) % len(validators)]


@dataclass(frozen=True)
class Proposal:
    height: int
    round: int
    sender: str
    block: Block
    block_hash_hex: str
    signature: bytes = b""


@dataclass(frozen=True)
class Vote:
    height: int
    round: int
    vote_type: str  # PREVOTE or PRECOMMIT
    sender: str
    block_hash: str  # hex, or NIL
    signature: bytes = b""


@dataclass(frozen=True)
class CommitCertificate:
    """A committed block plus its quorum certificate, gossiped for catch-up."""

    height: int
    sender: str
    block: Block


ConsensusMessage = Union[Proposal, Vote, CommitCertificate]


@dataclass(frozen=True)
class Timeout:
    height: int
    round: int
    step: Step


@dataclass(frozen=True)
class Evidence:
    """Two conflicting signed messages from one node; first was counted."""

    node_id: str
    first: ConsensusMessage
    second: ConsensusMessage


@dataclass
class ConsensusHooks:
    """Ledger-side callbacks supplied by the shell.

    ``commit_block`` applies a decided block and returns False only if the
    application fails (which indicates a forged certificate slipped past the
    shell or a local bug); the machine then refuses to advance.
    """

    build_block: Callable[[], Optional[Block]]
    validate_block: Callable[[Block], bool]
    commit_block: Callable[[Block], bool]


@dataclass
class NodeState:
    """Per-node consensus state for the height currently being agreed."""

    node_id: str
    validators: tuple[str, ...]
    height: int = 1
    round: int = 0
    step: Step = Step.PROPOSE
    locked_block: Optional[Block] = None
    locked_hash: str = NIL
    locked_round: int = -1
    proposals: dict[int, Proposal] = field(default_factory=dict)
    prevotes: dict[int, dict[str, Vote]] = field(default_factory=dict)
    precommits: dict[int, dict[str, Vote]] = field(default_factory=dict)
    evidence: list[Evidence] = field(default_factory=list)
    future: dict[int, list[ConsensusMessage]] = field(default_factory=dict)


# --- message signing preimages ---------------------------------------------


def proposal_signing_bytes(height: int, round_num: int, block_hash_hex: str) -> bytes:
    return encode_canonical({"h": height, "hash": block_hash_hex, "r": round_num, "t": "proposal"})


def vote_signing_bytes(vote_type: str, height: int, round_num: int, hash_hex: str) -> bytes:
    if vote_type == PRECOMMIT:
        # round excluded so commit certificates verify from the block alone
        return qc_signing_bytes(height, hash_hex)
    return encode_canonical({"h": height, "hash": hash_hex, "r": round_num, "t": PREVOTE})


def message_signing_bytes(msg: ConsensusMessage) -> bytes:
    if isinstance(msg, Proposal):
        return proposal_signing_bytes(msg.height, msg.round, msg.block_hash_hex)
    if isinstance(msg, Vote):
        return vote_signing_bytes(msg.vote_type, msg.height, msg.round, msg.block_hash)
    raise WrongType("message", "commit certificates carry no envelope signature")


# --- wire form ---------------------------------------------------------------


def message_doc(msg: ConsensusMessage) -> dict:
    if isinstance(msg, Proposal):
        return {
            "block": block_doc(msg.block),
            "height": msg.height,
            "round": msg.round,
            "sender": msg.sender,
            "sig": msg.signature.hex(),
            "type": "proposal",
        }
    if isinstance(msg, Vote):
        return {
            "hash": msg.block_hash,
            "height": msg.height,
            "round": msg.round,
            "sender": msg.sender,
            "sig": msg.signature.hex(),
            "type": msg.vote_type,
        }
    return {
        "block": block_doc(msg.block),
        "height": msg.height,
        "sender": msg.sender,
        "type": "commit",
    }


def message_from_doc(doc: Value) -> ConsensusMessage:
    if not isinstance(doc, dict):
        raise WrongType("message", "expected a map")
    kind = doc.get("type")
    height = doc.get("height")
    sender = doc.get("sender")
    if isinstance(height, bool) or not isinstance(height, int) or height < 0:
        raise WrongType("height", "expected non-negative integer")
    if not isinstance(sender, str):
        raise WrongType("sender", "expected string")
    if kind == "commit":
        block = block_from_doc(doc.get("block"))
        return CommitCertificate(height=height, sender=sender, block=block)
    round_num = doc.get("round")
    if isinstance(round_num, bool) or not isinstance(round_num, int) or round_num < 0:
        raise WrongType("round", "expected non-negative integer")
    sig_hex = doc.get("sig")
    if not isinstance(sig_hex, str):
        raise WrongType("sig", "expected hex string")
    try:
        signature = bytes.fromhex(sig_hex)
    except ValueError as exc:
        raise WrongType("sig", "bad signature hex") from exc
    if kind == "proposal":
        block = block_from_doc(doc.get("block"))
        return Proposal(
            height=height,
            round=round_num,
            sender=sender,
            block=block,
            block_hash_hex=block_hash(block).hex,
            signature=signature,
        )
    if kind in (PREVOTE, PRECOMMIT):
        hash_hex = doc.get("hash")
        if not isinstance(hash_hex, str):
            raise WrongType("hash", "expected hex string")
        return Vote(
            height=height,
            round=round_num,
            vote_type=kind,
            sender=sender,
            block_hash=hash_hex,
            signature=signature,
        )
    raise WrongType("type", f"unknown message type {kind!r}")


# --- the state machine ----------------------------------------------------


def start(ns: NodeState, hooks: ConsensusHooks) -> tuple[list[ConsensusMessage], list[Block]]:
    """Enter the first round of the current height."""
    out: list[ConsensusMessage] = []
    committed: list[Block] = []
    _enter_round(ns, 0, hooks, out)
    _recheck(ns, hooks, out, committed)
    return out, committed


def handle(
    ns: NodeState,
    event: Union[ConsensusMessage, Timeout],
    hooks: ConsensusHooks,
) -> tuple[list[ConsensusMessage], list[Block]]:
    """Feed one verified event in; collect outbound messages and commits."""
    out: list[ConsensusMessage] = []
    committed: list[Block] = []

    if isinstance(event, Timeout):
        if (event.height, event.round, event.step) != (ns.height, ns.round, ns.step):
            return out, committed  # stale timer
        if ns.step is Step.PROPOSE:
            _send_prevote(ns, ns.locked_hash if ns.locked_block is not None else NIL, out)
        elif ns.step is Step.PREVOTE:
            _send_precommit(ns, NIL, out)
        else:
            _enter_round(ns, ns.round + 1, hooks, out)
        _recheck(ns, hooks, out, committed)
        return out, committed

    if event.height < ns.height:
        return out, committed  # stale message, dropped
    if event.height > ns.height:
        ns.future.setdefault(event.height, []).append(event)
        return out, committed

    _ingest(ns, event, hooks, out, committed)
    _recheck(ns, hooks, out, committed)
    return out, committed


def _ingest(
    ns: NodeState,
    msg: ConsensusMessage,
    hooks: ConsensusHooks,
    out: list[ConsensusMessage],
    committed: list[Block],
) -> None:
    """Record one current-height message (no rule evaluation)."""
    if isinstance(msg, CommitCertificate):
        _do_commit(ns, msg.block, hooks, out, committed, broadcast_cert=False)
        return
    if isinstance(msg, Proposal):
        if msg.sender != proposer_for(ns.validators, msg.height, msg.round):
            return  # not this round's proposer; ignore
        existing = ns.proposals.get(msg.round)
        if existing is not None:
            if existing.block_hash_hex != msg.block_hash_hex:
                ns.evidence.append(Evidence(msg.sender, existing, msg))
            return
        ns.proposals[msg.round] = msg
        return
    if msg.sender not in ns.validators:
        return
    book = (ns.prevotes if msg.vote_type == PREVOTE else ns.precommits).setdefault(msg.round, {})
    prior = book.get(msg.sender)
    if prior is not None:
        if prior.block_hash != msg.block_hash:
            ns.evidence.append(Evidence(msg.sender, prior, msg))
        return
    book[msg.sender] = msg


def _send_prevote(ns: NodeState, hash_hex: str, out: list[ConsensusMessage]) -> None:
    out.append(Vote(ns.height, ns.round, PREVOTE, ns.node_id, hash_hex))
    ns.step = Step.PREVOTE


def _send_precommit(ns: NodeState, hash_hex: str, out: list[ConsensusMessage]) -> None:
    out.append(Vote(ns.height, ns.round, PRECOMMIT, ns.node_id, hash_hex))
    ns.step = Step.PRECOMMIT


def _enter_round(
    ns: NodeState, round_num: int, hooks: ConsensusHooks, out: list[ConsensusMessage]
) -> None:
    ns.round = round_num
    ns.step = Step.PROPOSE
    if proposer_for(ns.validators, ns.height, round_num) == ns.node_id:
        block = ns.locked_block if ns.locked_block is not None else hooks.build_block()
        if block is not None:
            out.append(
                Proposal(ns.height, round_num, ns.node_id, block, block_hash(block).hex)
            )


def _block_by_hash(ns: NodeState, hash_hex: str) -> Optional[Block]:
    if ns.locked_block is not None and ns.locked_hash == hash_hex:
        return ns.locked_block
    for proposal in ns.proposals.values():
        if proposal.block_hash_hex == hash_hex:
            return proposal.block
    return None


def _quorum_value(book: dict[str, Vote], need: int) -> Optional[str]:
    """The vote value holding a quorum, if any (at most one can)."""
    counts: dict[str, int] = {}
    for vote in book.values():
        counts[vote.block_hash] = counts.get(vote.block_hash, 0) + 1
        if counts[vote.block_hash] >= need:
            return vote.block_hash
    return None


def _recheck(
    ns: NodeState,
    hooks: ConsensusHooks,
    out: list[ConsensusMessage],
    committed: list[Block],
) -> None:
    """Run every rule enabled by the current books until none fires."""
    while (
        _try_prevote_on_proposal(ns, hooks, out)
        or _try_prevote_quorums(ns, out)
        or _try_precommit_quorums(ns, hooks, out, committed)
    ):
        pass


def _try_prevote_on_proposal(
    ns: NodeState, hooks: ConsensusHooks, out: list[ConsensusMessage]
) -> bool:
    if ns.step is not Step.PROPOSE:
        return False
    proposal = ns.proposals.get(ns.round)
    if proposal is None:
        return False
    if ns.locked_block is not None:
        _send_prevote(ns, ns.locked_hash, out)
    elif proposal.block.height == ns.height and hooks.validate_block(proposal.block):
        _send_prevote(ns, proposal.block_hash_hex, out)
    else:
        _send_prevote(ns, NIL, out)
    return True


def _try_prevote_quorums(ns: NodeState, out: list[ConsensusMessage]) -> bool:
    need = quorum(len(ns.validators))
    fired = False
    for round_num in sorted(ns.prevotes):
        value = _quorum_value(ns.prevotes[round_num], need)
        if value is None:
            continue
        if value != NIL and round_num > ns.locked_round:
            # polka in a later round: move the lock (or drop it if the
            # block itself was never seen)
            block = _block_by_hash(ns, value)
            ns.locked_round = round_num
            ns.locked_block = block
            ns.locked_hash = value if block is not None else NIL
            fired = True
        if round_num == ns.round and ns.step is Step.PREVOTE:
            if value != NIL and _block_by_hash(ns, value) is not None:
                _send_precommit(ns, value, out)
            else:
                _send_precommit(ns, NIL, out)
            return True
    return fired


def _try_precommit_quorums(
    ns: NodeState,
    hooks: ConsensusHooks,
    out: list[ConsensusMessage],
    committed: list[Block],
) -> bool:
    need = quorum(len(ns.validators))
    for round_num in sorted(ns.precommits):
        book = ns.precommits[round_num]
        value = _quorum_value(book, need)
        if value is None:
            continue
        if value == NIL:
            if round_num == ns.round and ns.step is Step.PRECOMMIT:
                _enter_round(ns, round_num + 1, hooks, out)
                return True
            continue
        block = _block_by_hash(ns, value)
        if block is None:
            continue  # quorum on a block we never saw; certificates catch us up
        signatures = sorted(
            (vote.sender, vote.signature)
            for vote in book.values()
            if vote.block_hash == value
        )
        certified = Block(
            height=block.height,
            prev_hash=block.prev_hash,
            txs=block.txs,
            proposer=block.proposer,
            commit_signatures=tuple(signatures),
        )
        return _do_commit(ns, certified, hooks, out, committed, broadcast_cert=True)
    return False


def poke_proposer(ns: NodeState, hooks: ConsensusHooks) -> list[ConsensusMessage]:
    """Propose now if this node holds proposer duty but had nothing to offer.

    Used by the live node when transactions arrive while the round sits idle
    in Propose. Re-proposing is harmless: the block construction is
    deterministic, so a duplicate carries the same hash and signature.
    """
    out: list[ConsensusMessage] = []
    if (
        ns.step is Step.PROPOSE
        and proposer_for(ns.validators, ns.height, ns.round) == ns.node_id
        and ns.round not in ns.proposals
    ):
        block = ns.locked_block if ns.locked_block is not None else hooks.build_block()
        if block is not None:
            out.append(Proposal(ns.height, ns.round, ns.node_id, block, block_hash(block).hex))
    return out


def _do_commit(
    ns: NodeState,
    block: Block,
    hooks: ConsensusHooks,
    out: list[ConsensusMessage],
    committed: list[Block],
    *,
    broadcast_cert: bool,
) -> bool:
    if not hooks.commit_block(block):
        return False
    committed.append(block)
    if broadcast_cert:
        out.append(CommitCertificate(block.height, ns.node_id, block))
    ns.height += 1
    ns.locked_block = None
    ns.locked_hash = NIL
    ns.locked_round = -1
    ns.proposals = {}
    ns.prevotes = {}
    ns.precommits = {}
    _enter_round(ns, 0, hooks, out)
    for msg in ns.future.pop(ns.height, []):
        _ingest(ns, msg, hooks, out, committed)
    return True
