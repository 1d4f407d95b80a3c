"""Replicated ledger state and its deterministic transition function.

State is a set of materialized record maps plus read indexes. Applying a
block is a pure transition: the input state is never touched, and any
invalid transaction rejects the whole block. Every committed record is
cached with the digest of its canonical form, and the state hash is the
digest of a canonical summary document over those entry digests, so two
replicas can compare a single 32-byte value to assert agreement.

Ledger semantics worth noting:

* patient amendments append a new version; history is never overwritten,
* all uniqueness rules (phone, dbIdentifier, visitId, user, txId) are
  enforced here, at the transition,
* there is no fee or balance bookkeeping of any kind,
* the genesis file (canonical codec bytes) bootstraps the validator set and
  the initial SYSTEM_ADMIN logins; its digest is the genesis hash and the
  height-0 block links to it.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Union

from . import acl, crypto, workflows
from .blobstore import MAX_BLOB_SIZE, MEDIA_TYPES
from .chain import (
    Block,
    Transaction,
    TxKind,
    block_hash,
    genesis_block,
    tx_signing_bytes,
    verify_commit_signature,
)
from .codec import Digest, Timestamp, Value, digest, digest_hex, encode_canonical
from .consensus import quorum
from .errors import (
    BadHeight,
    BadLink,
    BadQuorumCertificate,
    DuplicateId,
    ElevationTooLow,
    InvalidTxInBlock,
    InvariantViolation,
    KeyMismatch,
    MedledgerError,
    MissingField,
    UnknownField,
    UnknownSigner,
    UnknownTarget,
    WrongType,
)
from .records import (
    LoginRecord,
    PatientRecord,
    PrescriptionRecord,
    RecordKind,
    to_document,
    validate_record,
)
from .workflows import Claim, claim_doc

_PERMISSION_BY_KIND = {
    TxKind.CREATE_PATIENT: acl.Permission.CREATE_PATIENT,
    TxKind.AMEND_PATIENT: acl.Permission.AMEND_PATIENT,
    TxKind.CREATE_PRESCRIPTION: acl.Permission.CREATE_PRESCRIPTION,
    TxKind.CREATE_LOGIN: acl.Permission.CREATE_LOGIN,
    TxKind.SUBMIT_CLAIM: acl.Permission.SUBMIT_CLAIM,
    TxKind.REVIEW_CLAIM: acl.Permission.REVIEW_CLAIM,
    TxKind.PUT_BLOB_REF: acl.Permission.PUT_BLOB,
}

_RECORD_KIND_BY_TX = {
    TxKind.CREATE_PATIENT: RecordKind.PATIENT,
    TxKind.AMEND_PATIENT: RecordKind.PATIENT,
    TxKind.CREATE_PRESCRIPTION: RecordKind.PRESCRIPTION,
    TxKind.CREATE_LOGIN: RecordKind.LOGIN,
}


@dataclass(frozen=True)
class StoredRecord:
    """A committed record with its canonical document and cached entry digest."""

    record: Union[PatientRecord, PrescriptionRecord, LoginRecord]
    doc: dict
    timestamp: int
    digest_hex: str


@dataclass(frozen=True)
class StoredClaim:
    claim: Claim
    digest_hex: str


def entry_digest(doc: dict, timestamp: int) -> str:
    """Digest of one stored entry: the record document plus its tx timestamp."""
    return digest_hex(encode_canonical({"doc": doc, "ts": Timestamp(timestamp)}))


def _stored(record, doc: dict, timestamp: int) -> StoredRecord:
    return StoredRecord(record, doc, timestamp, entry_digest(doc, timestamp))


def _stored_claim(claim: Claim) -> StoredClaim:
    return StoredClaim(claim, digest_hex(encode_canonical(claim_doc(claim))))


@dataclass(frozen=True)
class LedgerState:
    """Immutable snapshot of the materialized ledger."""

    chain_id: str
    validators: tuple[tuple[str, str], ...]
    height: int
    patients: dict[str, tuple[StoredRecord, ...]]
    prescriptions: dict[str, StoredRecord]
    logins: dict[str, StoredRecord]
    claims: dict[str, StoredClaim]
    blob_refs: frozenset[str]
    # read indexes, maintained incrementally in the apply path
    db_ids: dict[str, str]
    rx_by_phone: dict[str, tuple[tuple[int, str], ...]]
    seen_tx_ids: frozenset[str]
    tip_hash: Digest

    def latest_patient(self, phone: str) -> Optional[PatientRecord]:
        versions = self.patients.get(phone)
        return versions[-1].record if versions else None

    @property
    def state_hash(self) -> Digest:
        """Digest of the canonical state summary; computed once per snapshot."""
        cached = self.__dict__.get("_state_hash")
        if cached is None:
            cached = compute_state_hash(
                self.height,
                self.patients,
                self.prescriptions,
                self.logins,
                self.claims,
                self.blob_refs,
            )
            object.__setattr__(self, "_state_hash", cached)
        return cached


def compute_state_hash(
    height: int,
    patients: dict[str, tuple[StoredRecord, ...]],
    prescriptions: dict[str, StoredRecord],
    logins: dict[str, StoredRecord],
    claims: dict[str, StoredClaim],
    blob_refs: Iterable[str],
) -> Digest:
    """Digest of the canonical state summary (all entries, key-sorted).

    The summary maps every record key to its cached entry digest; the codec
    sorts map keys, so insertion order cannot leak into the hash.
    """
    summary = {
        "blobs": sorted(blob_refs),
        "claims": {cid: sc.digest_hex for cid, sc in claims.items()},
        "height": height,
        "logins": {user: s.digest_hex for user, s in logins.items()},
        "patients": {ph: [s.digest_hex for s in vs] for ph, vs in patients.items()},
        "prescriptions": {visit: s.digest_hex for visit, s in prescriptions.items()},
    }
    return digest(encode_canonical(summary))


# --- genesis -----------------------------------------------------------------


@dataclass(frozen=True)
class GenesisInfo:
    chain_id: str
    validators: tuple[tuple[str, str], ...]
    logins: tuple[LoginRecord, ...]
    login_docs: tuple[dict, ...]
    genesis_hash: Digest


def genesis_doc(
    chain_id: str, validators: Iterable[tuple[str, str]], login_docs: Iterable[dict]
) -> dict:
    return {
        "chainId": chain_id,
        "logins": [dict(doc) for doc in login_docs],
        "validators": [
            {"nodeId": node_id, "publicKey": public_hex} for node_id, public_hex in validators
        ],
    }


def encode_genesis(
    chain_id: str, validators: Iterable[tuple[str, str]], login_docs: Iterable[dict]
) -> bytes:
    return encode_canonical(genesis_doc(chain_id, validators, login_docs))


def load_genesis(data: bytes) -> GenesisInfo:
    """Parse and validate a genesis file (canonical codec bytes)."""
    from .codec import decode_canonical

    doc = decode_canonical(data)
    if not isinstance(doc, dict):
        raise WrongType("genesis", "expected a map")
    for key in ("chainId", "logins", "validators"):
        if key not in doc:
            raise MissingField(key)
    chain_id = doc["chainId"]
    if not isinstance(chain_id, str) or not chain_id:
        raise InvariantViolation("chainId", "must be a non-empty string")
    raw_validators = doc["validators"]
    if not isinstance(raw_validators, list) or not raw_validators:
        raise InvariantViolation("validators", "must be a non-empty list")
    validators: list[tuple[str, str]] = []
    seen_ids: set[str] = set()
    for item in raw_validators:
        if not isinstance(item, dict) or set(item) != {"nodeId", "publicKey"}:
            raise WrongType("validators", "expected {nodeId, publicKey} maps")
        node_id, public_hex = item["nodeId"], item["publicKey"]
        if not isinstance(node_id, str) or not node_id or node_id in seen_ids:
            raise InvariantViolation("validators", "node ids must be unique non-empty strings")
        if not isinstance(public_hex, str) or len(public_hex) != 64:
            raise InvariantViolation("validators", "publicKey must be 32 bytes of hex")
        seen_ids.add(node_id)
        validators.append((node_id, public_hex))
    raw_logins = doc["logins"]
    if not isinstance(raw_logins, list):
        raise WrongType("logins", "expected a list")
    logins: list[LoginRecord] = []
    login_docs: list[dict] = []
    users: set[str] = set()
    for item in raw_logins:
        record = validate_record(RecordKind.LOGIN, item)
        if record.user in users:
            raise DuplicateId(f"genesis login user {record.user}")
        users.add(record.user)
        logins.append(record)
        login_docs.append(item)
    if not any(r.superset == acl.ElevationLevel.SYSTEM_ADMIN for r in logins):
        raise InvariantViolation("logins", "genesis needs at least one SYSTEM_ADMIN login")
    return GenesisInfo(
        chain_id=chain_id,
        validators=tuple(validators),
        logins=tuple(logins),
        login_docs=tuple(login_docs),
        genesis_hash=digest(data),
    )


def initial_state(genesis: GenesisInfo) -> LedgerState:
    """Height-0 state: genesis logins loaded, everything else empty."""
    logins = {
        record.user: _stored(record, to_document(record), 0) for record in genesis.logins
    }
    return LedgerState(
        chain_id=genesis.chain_id,
        validators=genesis.validators,
        height=0,
        patients={},
        prescriptions={},
        logins=logins,
        claims={},
        blob_refs=frozenset(),
        db_ids={},
        rx_by_phone={},
        seen_tx_ids=frozenset(),
        tip_hash=block_hash(genesis_block(genesis.genesis_hash)),
    )


# --- transaction validation ----------------------------------------------


@dataclass(frozen=True)
class ValidatedTx:
    tx: Transaction
    record: Optional[Union[PatientRecord, PrescriptionRecord, LoginRecord]] = None
    claim: Optional[Claim] = None


def _validate_blob_ref_payload(payload: dict) -> None:
    allowed = ("hash", "mediaType", "size")
    for key in sorted(set(payload) - set(allowed)):
        raise UnknownField(key)
    for key in allowed:
        if key not in payload:
            raise MissingField(key)
    blob_hash = payload["hash"]
    if not isinstance(blob_hash, str):
        raise WrongType("hash", "expected string")
    try:
        Digest.from_hex(blob_hash)
    except ValueError:
        raise InvariantViolation("hash", "must be a 64-char hex digest") from None
    if blob_hash != blob_hash.lower():
        raise InvariantViolation("hash", "must be lowercase hex")
    media_type = payload["mediaType"]
    if not isinstance(media_type, str):
        raise WrongType("mediaType", "expected string")
    if media_type not in MEDIA_TYPES:
        raise InvariantViolation("mediaType", f"must be one of {sorted(MEDIA_TYPES)}")
    size = payload["size"]
    if isinstance(size, bool) or not isinstance(size, int):
        raise WrongType("size", "expected integer")
    if not 1 <= size <= MAX_BLOB_SIZE:
        raise InvariantViolation("size", f"must be in [1, {MAX_BLOB_SIZE}]")


def validate_tx_stateless(tx: Transaction) -> None:
    """Checks that need no ledger state: id integrity, signature, schema.

    Run at API admission so obviously bad transactions never enter the
    pending queue; the full stateful validation reruns at proposal time.
    """
    body = tx_signing_bytes(tx)
    if digest(body) != tx.tx_id:
        raise InvariantViolation("txId", "does not match the canonical body")
    if tx.timestamp < 0:
        raise InvariantViolation("timestamp", "must be >= 0")
    if not crypto.verify(tx.signer_public_key, body, tx.signature):
        raise KeyMismatch("transaction signature does not verify")
    record_kind = _RECORD_KIND_BY_TX.get(tx.kind)
    if record_kind is not None:
        validate_record(record_kind, tx.payload, reference_ms=tx.timestamp)
    elif tx.kind == TxKind.PUT_BLOB_REF:
        _validate_blob_ref_payload(tx.payload)
    # claim payload shapes are checked in the workflow rules


def validate_tx(state, tx: Transaction) -> ValidatedTx:
    """Full validation against a state snapshot (or in-block running state).

    Check order is fixed so every invalid transaction maps to one
    deterministic error: id integrity, replay, then the authentication
    pipeline (signature, signer login, registered key, elevation), then
    kind-specific rules. Prescriptions instead run the three-check gate,
    which owns its own ordering.
    """
    body = tx_signing_bytes(tx)
    if digest(body) != tx.tx_id:
        raise InvariantViolation("txId", "does not match the canonical body")
    if tx.tx_id.hex in state.seen_tx_ids:
        raise DuplicateId(f"transaction {tx.tx_id.hex} already committed")
    if tx.timestamp < 0:
        raise InvariantViolation("timestamp", "must be >= 0")

    if tx.kind == TxKind.CREATE_PRESCRIPTION:
        record = validate_record(RecordKind.PRESCRIPTION, tx.payload)
        acl.raise_check_failure(acl.check_prescription(state, tx))
        assert isinstance(record, PrescriptionRecord)
        if record.visit_id in state.prescriptions:
            raise DuplicateId(f"visitId {record.visit_id}")
        return ValidatedTx(tx, record=record)

    if not crypto.verify(tx.signer_public_key, body, tx.signature):
        raise KeyMismatch("transaction signature does not verify")
    stored_login = state.logins.get(tx.signer_user)
    if stored_login is None:
        raise UnknownSigner(tx.signer_user)
    login = stored_login.record
    if login.key != tx.signer_public_key:
        raise KeyMismatch("signing key is not the signer's registered key")

    if tx.kind in (TxKind.SUBMIT_CLAIM, TxKind.REVIEW_CLAIM):
        # claim rules raise their own PermissionDenied
        if tx.kind == TxKind.SUBMIT_CLAIM:
            claim = workflows.submit_claim(state, tx)
            if claim.claim_id in state.claims:
                raise DuplicateId(f"claim {claim.claim_id}")
        else:
            claim = workflows.review_claim(state, tx)
        return ValidatedTx(tx, claim=claim)

    if not acl.authorize(login, _PERMISSION_BY_KIND[tx.kind]):
        raise ElevationTooLow(
            f"{tx.kind.value} requires {acl.minimum_elevation(_PERMISSION_BY_KIND[tx.kind]).name}"
        )

    if tx.kind == TxKind.CREATE_PATIENT:
        record = validate_record(RecordKind.PATIENT, tx.payload, reference_ms=tx.timestamp)
        assert isinstance(record, PatientRecord)
        if record.phone in state.patients:
            raise DuplicateId(f"patient phone {record.phone}")
        owner = state.db_ids.get(record.db_identifier)
        if owner is not None:
            raise DuplicateId(f"dbIdentifier {record.db_identifier}")
        return ValidatedTx(tx, record=record)

    if tx.kind == TxKind.AMEND_PATIENT:
        record = validate_record(RecordKind.PATIENT, tx.payload, reference_ms=tx.timestamp)
        assert isinstance(record, PatientRecord)
        if record.phone not in state.patients:
            raise UnknownTarget(f"no patient with phone {record.phone}")
        owner = state.db_ids.get(record.db_identifier)
        if owner is not None and owner != record.phone:
            raise DuplicateId(f"dbIdentifier {record.db_identifier}")
        return ValidatedTx(tx, record=record)

    if tx.kind == TxKind.CREATE_LOGIN:
        record = validate_record(RecordKind.LOGIN, tx.payload)
        assert isinstance(record, LoginRecord)
        if record.user in state.logins:
            raise DuplicateId(f"user {record.user}")
        return ValidatedTx(tx, record=record)

    _validate_blob_ref_payload(tx.payload)
    return ValidatedTx(tx)


# --- block application ---------------------------------------------------


class _Builder:
    """Mutable working copy of one state's sections for in-block validation.

    Exposes the same read surface as LedgerState, so validate_tx and the
    workflow rules run unchanged against the running intermediate state.
    """

    def __init__(self, state: LedgerState):
        self.patients = dict(state.patients)
        self.prescriptions = dict(state.prescriptions)
        self.logins = dict(state.logins)
        self.claims = dict(state.claims)
        self.blob_refs = set(state.blob_refs)
        self.db_ids = dict(state.db_ids)
        self.rx_by_phone = dict(state.rx_by_phone)
        self.seen_tx_ids = set(state.seen_tx_ids)

    def latest_patient(self, phone: str) -> Optional[PatientRecord]:
        versions = self.patients.get(phone)
        return versions[-1].record if versions else None

    def apply(self, vtx: ValidatedTx) -> None:
        tx = vtx.tx
        self.seen_tx_ids.add(tx.tx_id.hex)
        if tx.kind in (TxKind.CREATE_PATIENT, TxKind.AMEND_PATIENT):
            record = vtx.record
            assert isinstance(record, PatientRecord)
            stored = _stored(record, tx.payload, tx.timestamp)
            self.patients[record.phone] = self.patients.get(record.phone, ()) + (stored,)
            self.db_ids[record.db_identifier] = record.phone
        elif tx.kind == TxKind.CREATE_PRESCRIPTION:
            record = vtx.record
            assert isinstance(record, PrescriptionRecord)
            self.prescriptions[record.visit_id] = _stored(record, tx.payload, tx.timestamp)
            order = list(self.rx_by_phone.get(record.patientnum, ()))
            bisect.insort(order, (tx.timestamp, record.visit_id))
            self.rx_by_phone[record.patientnum] = tuple(order)
        elif tx.kind == TxKind.CREATE_LOGIN:
            record = vtx.record
            assert isinstance(record, LoginRecord)
            self.logins[record.user] = _stored(record, tx.payload, tx.timestamp)
        elif tx.kind in (TxKind.SUBMIT_CLAIM, TxKind.REVIEW_CLAIM):
            assert vtx.claim is not None
            self.claims[vtx.claim.claim_id] = _stored_claim(vtx.claim)
        else:
            self.blob_refs.add(tx.payload["hash"])


def _check_quorum_certificate(state: LedgerState, block: Block, block_hash_hex: str) -> None:
    need = quorum(len(state.validators))
    keys = dict(state.validators)
    counted: set[str] = set()
    for node_id, signature in block.commit_signatures:
        if node_id in counted:
            continue
        public_hex = keys.get(node_id)
        if public_hex is None:
            continue
        if verify_commit_signature(public_hex, block.height, block_hash_hex, signature):
            counted.add(node_id)
    if len(counted) < need:
        raise BadQuorumCertificate(f"{len(counted)} valid commit signatures, need {need}")


def _finish(state: LedgerState, block: Block, builder: _Builder) -> LedgerState:
    return replace(
        state,
        height=block.height,
        patients=builder.patients,
        prescriptions=builder.prescriptions,
        logins=builder.logins,
        claims=builder.claims,
        blob_refs=frozenset(builder.blob_refs),
        db_ids=builder.db_ids,
        rx_by_phone=builder.rx_by_phone,
        seen_tx_ids=frozenset(builder.seen_tx_ids),
        tip_hash=block_hash(block),
    )


def apply_block(state: LedgerState, block: Block, *, verify_qc: bool = True) -> LedgerState:
    """Apply a block, returning the new state; the input state is unchanged.

    The whole block rejects atomically if any transaction fails against the
    running intermediate state. ``verify_qc`` is turned off when validating
    a proposal (no certificate exists yet) and when the caller has already
    verified the certificate's votes individually.
    """
    if block.height != state.height + 1:
        raise BadHeight(f"block height {block.height}, state height {state.height}")
    if block.prev_hash != state.tip_hash:
        raise BadLink(f"prevHash {block.prev_hash} does not match tip {state.tip_hash}")
    if verify_qc:
        _check_quorum_certificate(state, block, block_hash(block).hex)

    builder = _Builder(state)
    for index, tx in enumerate(block.txs):
        try:
            builder.apply(validate_tx(builder, tx))
        except MedledgerError as exc:
            raise InvalidTxInBlock(index, exc) from exc

    return _finish(state, block, builder)


def draft_block(
    state: LedgerState, pending: Iterable[Transaction], max_txs: int, proposer: str
) -> Optional[tuple[Block, LedgerState]]:
    """Build a proposal from the pending queue, greedily and in order.

    Invalid entries are skipped, not dropped: a prescription whose patient
    has not been committed yet becomes valid in a later block. Returns the
    block together with its post-state so the proposer validates each
    transaction exactly once.
    """
    builder = _Builder(state)
    chosen: list[Transaction] = []
    for tx in pending:
        if len(chosen) >= max_txs:
            break
        try:
            vtx = validate_tx(builder, tx)
        except MedledgerError:
            continue
        builder.apply(vtx)
        chosen.append(tx)
    if not chosen:
        return None
    block = Block(
        height=state.height + 1,
        prev_hash=state.tip_hash,
        txs=tuple(chosen),
        proposer=proposer,
    )
    return block, _finish(state, block, builder)
