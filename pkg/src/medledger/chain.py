"""Transaction and block structures with their canonical hashes.

A transaction is a signed envelope around one record payload. Its id is the
digest of the canonical body (kind, payload, signer, timestamp); the
signature covers exactly those bytes, so the id's preimage is what was
signed. Transactions carry no fee field anywhere.

A block hashes its header and full transaction list; the commit signatures
(the quorum certificate) are outside the hash so votes can certify it.
Each commit signature is an Ed25519 signature over the block-commit message
for this block's hash, verifiable from the block alone.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

from . import crypto
from .codec import Digest, Timestamp, Value, digest, encode_canonical
from .errors import InvariantViolation, MissingField, WrongType


class TxKind(Enum):
    CREATE_PATIENT = "CreatePatient"
    AMEND_PATIENT = "AmendPatient"
    CREATE_PRESCRIPTION = "CreatePrescription"
    CREATE_LOGIN = "CreateLogin"
    SUBMIT_CLAIM = "SubmitClaim"
    REVIEW_CLAIM = "ReviewClaim"
    PUT_BLOB_REF = "PutBlobRef"


_KINDS_BY_NAME = {kind.value: kind for kind in TxKind}


@dataclass(frozen=True)
class Transaction:
    kind: TxKind
    payload: dict
    signer_user: str
    signer_public_key: str
    signature: bytes
    timestamp: int
    tx_id: Digest


def tx_body_doc(
    kind: TxKind, payload: dict, signer_user: str, signer_public_key: str, timestamp: int
) -> dict:
    """The document whose canonical bytes are signed and hashed into the id."""
    return {
        "kind": kind.value,
        "payload": payload,
        "signerPublicKey": signer_public_key,
        "signerUser": signer_user,
        "timestamp": Timestamp(timestamp),
    }


def tx_signing_bytes(tx: Transaction) -> bytes:
    # cached: transactions are immutable and re-validated on every replica
    cached = tx.__dict__.get("_body_bytes")
    if cached is None:
        cached = encode_canonical(
            tx_body_doc(tx.kind, tx.payload, tx.signer_user, tx.signer_public_key, tx.timestamp)
        )
        object.__setattr__(tx, "_body_bytes", cached)
    return cached


def make_transaction(
    kind: TxKind,
    payload: dict,
    signer_user: str,
    keypair: crypto.KeyPair,
    timestamp: int,
) -> Transaction:
    """Sign a payload into a complete transaction."""
    body = encode_canonical(
        tx_body_doc(kind, payload, signer_user, keypair.public_hex, timestamp)
    )
    return Transaction(
        kind=kind,
        payload=payload,
        signer_user=signer_user,
        signer_public_key=keypair.public_hex,
        signature=crypto.sign(keypair, body),
        timestamp=timestamp,
        tx_id=digest(body),
    )


def tx_doc(tx: Transaction) -> dict:
    """Full wire document for a transaction, id and signature included."""
    return {
        "kind": tx.kind.value,
        "payload": tx.payload,
        "signature": tx.signature.hex(),
        "signerPublicKey": tx.signer_public_key,
        "signerUser": tx.signer_user,
        "timestamp": Timestamp(tx.timestamp),
        "txId": tx.tx_id.hex,
    }


def _get(doc: dict, key: str) -> Value:
    if key not in doc:
        raise MissingField(key)
    return doc[key]


def _get_str(doc: dict, key: str) -> str:
    value = _get(doc, key)
    if not isinstance(value, str):
        raise WrongType(key, "expected string")
    return value


def tx_from_doc(doc: Value) -> Transaction:
    """Parse and structurally check a transaction wire document."""
    if not isinstance(doc, dict):
        raise WrongType("transaction", "expected a map")
    kind_name = _get_str(doc, "kind")
    kind = _KINDS_BY_NAME.get(kind_name)
    if kind is None:
        raise InvariantViolation("kind", f"unknown transaction kind {kind_name!r}")
    payload = _get(doc, "payload")
    if not isinstance(payload, dict):
        raise WrongType("payload", "expected a map")
    timestamp = _get(doc, "timestamp")
    if not isinstance(timestamp, Timestamp):
        raise WrongType("timestamp", "expected timestamp")
    signature_hex = _get_str(doc, "signature")
    public_hex = _get_str(doc, "signerPublicKey")
    tx_id_hex = _get_str(doc, "txId")
    try:
        signature = bytes.fromhex(signature_hex)
        bytes.fromhex(public_hex)
        tx_id = Digest.from_hex(tx_id_hex)
    except ValueError as exc:
        raise InvariantViolation("transaction", f"bad hex field: {exc}") from exc
    if len(signature) != crypto.SIGNATURE_SIZE:
        raise InvariantViolation("signature", "must be 64 bytes")
    if len(public_hex) != 2 * crypto.PUBLIC_KEY_SIZE:
        raise InvariantViolation("signerPublicKey", "must be 32 bytes of hex")
    return Transaction(
        kind=kind,
        payload=payload,
        signer_user=_get_str(doc, "signerUser"),
        signer_public_key=public_hex,
        signature=signature,
        timestamp=timestamp.millis,
        tx_id=tx_id,
    )


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: Digest
    txs: tuple[Transaction, ...]
    proposer: str
    commit_signatures: tuple[tuple[str, bytes], ...] = ()


def block_header_doc(block: Block) -> dict:
    """Hash preimage: everything except the quorum certificate."""
    return {
        "height": block.height,
        "prevHash": block.prev_hash.hex,
        "proposer": block.proposer,
        "txs": [tx_doc(tx) for tx in block.txs],
    }


def block_hash(block: Block) -> Digest:
    # cached: blocks are immutable and hashed at every hop
    cached = block.__dict__.get("_hash")
    if cached is None:
        cached = digest(encode_canonical(block_header_doc(block)))
        object.__setattr__(block, "_hash", cached)
    return cached


def block_doc(block: Block) -> dict:
    doc = block_header_doc(block)
    doc["commitSignatures"] = [
        {"nodeId": node_id, "signature": sig.hex()} for node_id, sig in block.commit_signatures
    ]
    return doc


def block_from_doc(doc: Value) -> Block:
    if not isinstance(doc, dict):
        raise WrongType("block", "expected a map")
    height = _get(doc, "height")
    if isinstance(height, bool) or not isinstance(height, int) or height < 0:
        raise WrongType("height", "expected non-negative integer")
    txs_value = _get(doc, "txs")
    if not isinstance(txs_value, list):
        raise WrongType("txs", "expected a list")
    sigs_value = doc.get("commitSignatures", [])
    if not isinstance(sigs_value, list):
        raise WrongType("commitSignatures", "expected a list")
    commit_signatures = []
    for item in sigs_value:
        if not isinstance(item, dict):
            raise WrongType("commitSignatures", "expected maps")
        sig_hex = _get_str(item, "signature")
        try:
            sig = bytes.fromhex(sig_hex)
        except ValueError as exc:
            raise InvariantViolation("commitSignatures", "bad signature hex") from exc
        commit_signatures.append((_get_str(item, "nodeId"), sig))
    try:
        prev = Digest.from_hex(_get_str(doc, "prevHash"))
    except ValueError as exc:
        raise InvariantViolation("prevHash", "bad digest hex") from exc
    return Block(
        height=height,
        prev_hash=prev,
        txs=tuple(tx_from_doc(item) for item in txs_value),
        proposer=_get_str(doc, "proposer"),
        commit_signatures=tuple(commit_signatures),
    )


def with_commit_signatures(block: Block, sigs: list[tuple[str, bytes]]) -> Block:
    return replace(block, commit_signatures=tuple(sorted(sigs)))


def qc_signing_bytes(height: int, block_hash_hex: str) -> bytes:
    """Preimage of a block-commit signature.

    Deliberately excludes the round so a certificate formed in any round
    verifies from the block alone; the hash string is empty for nil votes.
    """
    return encode_canonical({"h": height, "hash": block_hash_hex, "t": "precommit"})


def verify_commit_signature(
    public_key_hex: str, height: int, block_hash_hex: str, signature: bytes
) -> bool:
    return crypto.verify(public_key_hex, qc_signing_bytes(height, block_hash_hex), signature)


def genesis_block(genesis_hash: Digest) -> Block:
    """Height-0 block; its prevHash anchors the chain to the genesis file."""
    return Block(height=0, prev_hash=genesis_hash, txs=(), proposer="", commit_signatures=())


def find_tx(block: Block, tx_id: Digest) -> Optional[Transaction]:
    for tx in block.txs:
        if tx.tx_id == tx_id:
            return tx
    return None
