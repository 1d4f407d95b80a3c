"""Independent reference implementations used as test oracles.

Everything here is written from the documented byte layouts and state
rules, deliberately not calling the package's encoder, hasher, or ledger
transition. Where a test asserts "matches the oracle", agreement means two
separate implementations of the same contract produced the same bytes.

Only plain data types (Timestamp, the record/claim enums' string values)
are shared with the package.
"""

from __future__ import annotations

import hashlib
import struct

from medledger.codec import Timestamp


def oracle_encode(value) -> bytes:
    """Reference canonical encoder: tag byte, u32 length, payload."""
    if isinstance(value, bool):
        return struct.pack(">BIB", 0x05, 1, 1 if value else 0)
    if isinstance(value, int):
        return struct.pack(">BIq", 0x04, 8, value)
    if isinstance(value, Timestamp):
        return struct.pack(">BIq", 0x06, 8, value.millis)
    if isinstance(value, str):
        raw = value.encode("utf-8")
        return struct.pack(">BI", 0x03, len(raw)) + raw
    if isinstance(value, bytes):
        return struct.pack(">BI", 0x07, len(value)) + value
    if isinstance(value, dict):
        entries = sorted((key.encode("utf-8"), val) for key, val in value.items())
        out = struct.pack(">BI", 0x01, len(entries))
        for key_bytes, val in entries:
            out += struct.pack(">BI", 0x03, len(key_bytes)) + key_bytes
            out += oracle_encode(val)
        return out
    if isinstance(value, (list, tuple)):
        out = struct.pack(">BI", 0x02, len(value))
        for item in value:
            out += oracle_encode(item)
        return out
    raise TypeError(f"oracle cannot encode {type(value)}")


def oracle_digest_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def oracle_entry_digest(doc: dict, timestamp: int) -> str:
    return oracle_digest_hex(oracle_encode({"doc": doc, "ts": Timestamp(timestamp)}))


def oracle_state_hash_hex(
    height: int,
    patients: dict,  # phone -> list of (doc, tx timestamp)
    prescriptions: dict,  # visitId -> (doc, tx timestamp)
    logins: dict,  # user -> (doc, tx timestamp)
    claims: dict,  # claimId -> claim doc
    blobs,  # iterable of hex digests
) -> str:
    summary = {
        "blobs": sorted(blobs),
        "claims": {cid: oracle_digest_hex(oracle_encode(doc)) for cid, doc in claims.items()},
        "height": height,
        "logins": {u: oracle_entry_digest(doc, ts) for u, (doc, ts) in logins.items()},
        "patients": {
            ph: [oracle_entry_digest(doc, ts) for doc, ts in versions]
            for ph, versions in patients.items()
        },
        "prescriptions": {
            v: oracle_entry_digest(doc, ts) for v, (doc, ts) in prescriptions.items()
        },
    }
    return oracle_digest_hex(oracle_encode(summary))


def oracle_replay_state_hash(genesis_login_docs: list[dict], blocks) -> str:
    """Single-step replay of a committed chain into a fresh state hash.

    Applies each transaction's effect with independent bookkeeping (plain
    dicts, no shared transition code) and hashes the result with the
    reference encoder. Transactions are trusted to be valid: the chain
    being replayed was already committed.
    """
    patients: dict = {}
    prescriptions: dict = {}
    logins: dict = {doc["user"]: (doc, 0) for doc in genesis_login_docs}
    claims: dict = {}
    blobs: set[str] = set()
    height = 0
    for block in blocks:
        height = block.height
        for tx in block.txs:
            payload = tx.payload
            kind = tx.kind.value
            if kind in ("CreatePatient", "AmendPatient"):
                patients.setdefault(payload["phone"], []).append((payload, tx.timestamp))
            elif kind == "CreatePrescription":
                prescriptions[payload["visitId"]] = (payload, tx.timestamp)
            elif kind == "CreateLogin":
                logins[payload["user"]] = (payload, tx.timestamp)
            elif kind == "SubmitClaim":
                rx_doc, _ = prescriptions[payload["visitId"]]
                patient_doc, _ = patients[payload["phone"]][-1]
                claims[tx.tx_id.hex] = {
                    "amount": rx_doc["billamt"],
                    "claimId": tx.tx_id.hex,
                    "insurer": patient_doc["insurance"],
                    "phone": payload["phone"],
                    "reviewTimestamp": Timestamp(0),
                    "reviewer": "",
                    "status": "Pending",
                    "visitId": payload["visitId"],
                }
            elif kind == "ReviewClaim":
                doc = dict(claims[payload["claimId"]])
                doc["status"] = "Approved" if payload["verdict"] == "Approve" else "Revoked"
                doc["reviewer"] = tx.signer_user
                doc["reviewTimestamp"] = Timestamp(tx.timestamp)
                claims[payload["claimId"]] = doc
            elif kind == "PutBlobRef":
                blobs.add(payload["hash"])
            else:
                raise AssertionError(f"unexpected tx kind {kind}")
    return oracle_state_hash_hex(height, patients, prescriptions, logins, claims, blobs)


def brute_force_history(state, phone: str):
    """Full-scan assembly of a phone's chained records, for comparison."""
    versions = [s.record for s in state.patients.get(phone, ())]
    rx = [
        (stored.timestamp, visit_id, stored.record)
        for visit_id, stored in state.prescriptions.items()
        if stored.record.patientnum == phone
    ]
    rx.sort(key=lambda item: (item[0], item[1]))
    login_present = any(s.record.mob == phone for s in state.logins.values())
    return versions, [record for _, _, record in rx], login_present
