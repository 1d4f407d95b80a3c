"""Shared builders for tests: keys, genesis files, signed txs, and corpora.

Corpus states for query tests are assembled directly from stored records
(no signing) so randomized property runs stay fast.
"""

from __future__ import annotations

import hashlib
import random

from medledger import crypto
from medledger.chain import Transaction, TxKind, make_transaction
from medledger.codec import Timestamp
from medledger.ledger import (
    GenesisInfo,
    LedgerState,
    StoredClaim,
    StoredRecord,
    encode_genesis,
    entry_digest,
    initial_state,
    load_genesis,
)
from medledger.records import RecordKind, make_pass_field, validate_record
from medledger.chain import Block, block_hash, genesis_block, qc_signing_bytes

BLOOD_GROUPS = ("A+", "A-", "B+", "B-", "AB+", "AB-", "O+", "O-")
TS0 = 1_700_000_000_000
YEAR_MS = round(365.25 * 24 * 3600 * 1000)

ADMIN_USER = "root.admin"
ADMIN_PASSWORD = "root-password"


def keypair(label: str) -> crypto.KeyPair:
    return crypto.generate_keypair(hashlib.sha256(f"test-key/{label}".encode()).digest())


def salt(label: str) -> bytes:
    return hashlib.sha256(f"test-salt/{label}".encode()).digest()[:16]


def login_doc(user: str, superset: str, key: crypto.KeyPair, mob: str = "9111111111") -> dict:
    return {
        "user": user,
        "pass": make_pass_field(f"{user}-pw", salt(user)),
        "mob": mob,
        "superset": superset,
        "key": key.public_hex,
    }


def patient_doc(
    phone: str,
    *,
    name: str = "patientname",
    age: int = 30,
    bloodgroup: str = "O+",
    insurance: str = "",
    db_identifier: str | None = None,
    photo: str = "",
    allergies: str = "",
    gender: str = "female",
) -> dict:
    return {
        "dbIdentifier": db_identifier if db_identifier is not None else f"db-{phone}",
        "name": name,
        "gender": gender,
        "age": age,
        "dob": Timestamp(TS0 - age * YEAR_MS),
        "phone": phone,
        "photo": photo,
        "bloodgroup": bloodgroup,
        "superset": "PATIENT",
        "docdetails": {"type": "general"},
        "allergies": allergies,
        "insurance": insurance,
    }


def prescription_doc(
    visit_id: str,
    phone: str,
    *,
    problem: str = "fever",
    billamt: int = 1200,
    attachment: str = "",
) -> dict:
    return {
        "visitId": visit_id,
        "docname": "doc.main",
        "patientnum": phone,
        "problem": problem,
        "prescription": "rest",
        "billamt": billamt,
        "attachment": attachment,
    }


def make_genesis(
    n_validators: int = 1, extra_login_docs: tuple[dict, ...] = ()
) -> tuple[GenesisInfo, dict[str, crypto.KeyPair], crypto.KeyPair]:
    """A genesis file with n validators and one SYSTEM_ADMIN login."""
    node_keys = {f"node{i}": keypair(f"node{i}") for i in range(n_validators)}
    admin_key = keypair("admin")
    data = encode_genesis(
        "medledger-test",
        [(node_id, kp.public_hex) for node_id, kp in sorted(node_keys.items())],
        [login_doc(ADMIN_USER, "SYSTEM_ADMIN", admin_key)] + list(extra_login_docs),
    )
    return load_genesis(data), node_keys, admin_key


def signed_tx(
    kind: TxKind, payload: dict, signer_user: str, kp: crypto.KeyPair, timestamp: int = TS0
) -> Transaction:
    return make_transaction(kind, payload, signer_user, kp, timestamp)


def base_state() -> LedgerState:
    genesis, _, _ = make_genesis()
    return initial_state(genesis)


def certify(block: Block, node_keys: dict[str, crypto.KeyPair]) -> Block:
    """Attach a full quorum certificate signed by every given validator."""
    hash_hex = block_hash(block).hex
    sigs = sorted(
        (node_id, crypto.sign(kp, qc_signing_bytes(block.height, hash_hex)))
        for node_id, kp in node_keys.items()
    )
    return Block(
        height=block.height,
        prev_hash=block.prev_hash,
        txs=block.txs,
        proposer=block.proposer,
        commit_signatures=tuple(sigs),
    )


# --- direct corpus construction (no signing; query/property tests) ----------


def stored(kind: RecordKind, doc: dict, timestamp: int) -> StoredRecord:
    record = validate_record(kind, doc)
    return StoredRecord(record, doc, timestamp, entry_digest(doc, timestamp))


def corpus_state(
    rng: random.Random,
    n_patients: int,
    max_rx_per_patient: int = 4,
    login_fraction: float = 0.3,
    name_length: int = 10,
) -> LedgerState:
    """A randomized ledger state assembled directly from records."""
    genesis, _, _ = make_genesis()
    state = initial_state(genesis)
    patients: dict[str, tuple[StoredRecord, ...]] = {}
    prescriptions: dict[str, StoredRecord] = {}
    logins: dict[str, StoredRecord] = dict(state.logins)
    db_ids: dict[str, str] = {}
    rx_by_phone: dict[str, tuple[tuple[int, str], ...]] = {}
    ts = TS0
    visit_counter = 0
    for i in range(n_patients):
        phone = str(7_000_000_000 + i)
        name = "".join(rng.choice("abcdefghijklmnopqrstuvwxyz") for _ in range(name_length))
        doc = patient_doc(
            phone,
            name=f"pt{name}",
            age=rng.randint(0, 99),
            bloodgroup=rng.choice(BLOOD_GROUPS),
            insurance=f"pol-{i:06d}" if rng.random() < 0.6 else "",
            db_identifier=f"db-{i:08d}",
            allergies=rng.choice(["", "dust", "nuts"]),
            gender=rng.choice(["female", "male", "other"]),
        )
        versions = [stored(RecordKind.PATIENT, doc, ts)]
        ts += 1
        if rng.random() < 0.15:  # an amended version
            amended = dict(doc)
            amended["allergies"] = "updated-allergy"
            versions.append(stored(RecordKind.PATIENT, amended, ts))
            ts += 1
        patients[phone] = tuple(versions)
        db_ids[doc["dbIdentifier"]] = phone
        order = []
        for _ in range(rng.randint(0, max_rx_per_patient)):
            visit_counter += 1
            visit_id = f"visit-{visit_counter:08d}"
            rx = prescription_doc(
                visit_id,
                phone,
                problem=rng.choice(["flu", "sprain", "allergy", "checkup"]),
                billamt=rng.randrange(100, 50_000),
            )
            prescriptions[visit_id] = stored(RecordKind.PRESCRIPTION, rx, ts)
            order.append((ts, visit_id))
            ts += 1
        if order:
            rx_by_phone[phone] = tuple(sorted(order))
        if rng.random() < login_fraction:
            kp = keypair(f"corpus-login-{i}")
            doc_login = login_doc(f"user-{i:06d}", "PATIENT", kp, mob=phone)
            logins[doc_login["user"]] = stored(RecordKind.LOGIN, doc_login, ts)
            ts += 1
    return LedgerState(
        chain_id=state.chain_id,
        validators=state.validators,
        height=1,
        patients=patients,
        prescriptions=prescriptions,
        logins=logins,
        claims={},
        blob_refs=frozenset(),
        db_ids=db_ids,
        rx_by_phone=rx_by_phone,
        seen_tx_ids=frozenset(),
        tip_hash=state.tip_hash,
    )
