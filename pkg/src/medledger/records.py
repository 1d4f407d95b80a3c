"""Typed schemas and validation for the three ledger record kinds.

Patient, prescription, and login documents each follow a fixed key set; a
document is accepted only when every key is present, correctly typed, and
within its invariants, and when it carries no extra keys. Validation is
total: any document either yields a typed record or one specific error.

Passwords are never stored raw. The login "pass" field holds
``<salt hex>$<digest hex>`` where the digest is SHA-256 over salt bytes
followed by the UTF-8 password.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Union

from .acl import ElevationLevel, parse_elevation
from .codec import Timestamp, Value, encode_canonical
from .errors import (
    BadSaltLength,
    InvariantViolation,
    MissingField,
    UnknownField,
    WrongType,
)

PHONE_PATTERN = re.compile(r"^[0-9]{10,15}$")
HEX_DIGEST_PATTERN = re.compile(r"^[0-9a-f]{64}$")
HEX_KEY_PATTERN = re.compile(r"^[0-9a-f]{64}$")
PASS_PATTERN = re.compile(r"^[0-9a-f]{32}\$[0-9a-f]{64}$")

BLOOD_GROUPS = frozenset({"A+", "A-", "B+", "B-", "AB+", "AB-", "O+", "O-"})

SALT_SIZE = 16
MAX_AGE = 150
_MILLIS_PER_YEAR = round(365.25 * 24 * 3600 * 1000)


class RecordKind(Enum):
    PATIENT = "Patient"
    PRESCRIPTION = "Prescription"
    LOGIN = "Login"


@dataclass(frozen=True)
class PatientRecord:
    db_identifier: str
    name: str
    gender: str
    age: int
    dob: Timestamp
    phone: str
    photo: str
    bloodgroup: str
    superset: ElevationLevel
    docdetails: Mapping[str, Value]
    allergies: str
    insurance: str
    warnings: tuple[str, ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class PrescriptionRecord:
    visit_id: str
    docname: str
    patientnum: str
    problem: str
    prescription: str
    billamt: int
    attachment: str
    warnings: tuple[str, ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class LoginRecord:
    user: str
    password: str
    mob: str
    superset: ElevationLevel
    key: str
    warnings: tuple[str, ...] = field(default=(), compare=False)


ValidatedRecord = Union[PatientRecord, PrescriptionRecord, LoginRecord]


def hash_password(password: str, salt: bytes) -> str:
    """Salted password digest, hex. Same (password, salt) always agree."""
    if not isinstance(salt, bytes) or len(salt) != SALT_SIZE:
        raise BadSaltLength(f"salt must be {SALT_SIZE} bytes")
    return hashlib.sha256(salt + password.encode("utf-8")).hexdigest()


def make_pass_field(password: str, salt: bytes) -> str:
    """Build the login "pass" field value: salt hex, "$", digest hex."""
    return f"{salt.hex()}${hash_password(password, salt)}"


def check_password(pass_field: str, password: str) -> bool:
    """Verify a candidate password against a stored pass field."""
    if not PASS_PATTERN.match(pass_field):
        return False
    salt_hex, expected = pass_field.split("$", 1)
    return hash_password(password, bytes.fromhex(salt_hex)) == expected


# --- field checkers ----------------------------------------------------------


def _require_str(name: str, value: Value) -> str:
    if not isinstance(value, str):
        raise WrongType(name, "expected string")
    return value


def _require_int(name: str, value: Value) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise WrongType(name, "expected integer")
    return value


def _require_timestamp(name: str, value: Value) -> Timestamp:
    if not isinstance(value, Timestamp):
        raise WrongType(name, "expected timestamp")
    return value


def _require_map(name: str, value: Value) -> dict:
    if not isinstance(value, dict):
        raise WrongType(name, "expected map")
    return value


def _check_phone(name: str, value: str) -> str:
    if not PHONE_PATTERN.match(value):
        raise InvariantViolation(name, "must be 10 to 15 digits")
    return value


def _check_elevation(name: str, value: str) -> ElevationLevel:
    level = parse_elevation(value)
    if level is None:
        raise InvariantViolation(name, f"unknown elevation level {value!r}")
    return level


def _check_optional_digest(name: str, value: str) -> str:
    if value and not HEX_DIGEST_PATTERN.match(value):
        raise InvariantViolation(name, "must be empty or a 64-char hex digest")
    return value


# Key sets follow the published record listings; order fixes which missing
# field is reported first.
PATIENT_FIELDS = (
    "dbIdentifier",
    "name",
    "gender",
    "age",
    "dob",
    "phone",
    "photo",
    "bloodgroup",
    "superset",
    "docdetails",
    "allergies",
    "insurance",
)
PRESCRIPTION_FIELDS = (
    "visitId",
    "docname",
    "patientnum",
    "problem",
    "prescription",
    "billamt",
    "attachment",
)
LOGIN_FIELDS = ("user", "pass", "mob", "superset", "key")

_FIELDS_BY_KIND = {
    RecordKind.PATIENT: PATIENT_FIELDS,
    RecordKind.PRESCRIPTION: PRESCRIPTION_FIELDS,
    RecordKind.LOGIN: LOGIN_FIELDS,
}


def _check_shape(kind: RecordKind, doc: Value) -> dict:
    if not isinstance(doc, dict):
        raise WrongType("document", "expected a map at top level")
    allowed = _FIELDS_BY_KIND[kind]
    for key in sorted(set(doc) - set(allowed)):
        raise UnknownField(key)
    for key in allowed:
        if key not in doc:
            raise MissingField(key)
    return doc


def validate_record(
    kind: RecordKind, doc: Value, *, reference_ms: Optional[int] = None
) -> ValidatedRecord:
    """Validate a document against its record schema.

    ``reference_ms`` is the transaction timestamp; when given, an age that
    disagrees with dob by more than one year produces a warning on the
    returned record (both fields are kept, neither wins).
    """
    doc = _check_shape(kind, doc)
    if kind == RecordKind.PATIENT:
        return _validate_patient(doc, reference_ms)
    if kind == RecordKind.PRESCRIPTION:
        return _validate_prescription(doc)
    return _validate_login(doc)


def _validate_patient(doc: dict, reference_ms: Optional[int]) -> PatientRecord:
    age = _require_int("age", doc["age"])
    if not 0 <= age <= MAX_AGE:
        raise InvariantViolation("age", f"must be in [0, {MAX_AGE}]")
    dob = _require_timestamp("dob", doc["dob"])
    phone = _check_phone("phone", _require_str("phone", doc["phone"]))
    bloodgroup = _require_str("bloodgroup", doc["bloodgroup"])
    if bloodgroup not in BLOOD_GROUPS:
        raise InvariantViolation("bloodgroup", f"unknown blood group {bloodgroup!r}")
    docdetails = _require_map("docdetails", doc["docdetails"])
    if "type" not in docdetails:
        raise MissingField("docdetails.type")
    _require_str("docdetails.type", docdetails["type"])

    warnings: tuple[str, ...] = ()
    if reference_ms is not None:
        implied = (reference_ms - dob.millis) // _MILLIS_PER_YEAR
        if abs(implied - age) > 1:
            warnings = (f"age {age} disagrees with dob (implies {implied})",)

    return PatientRecord(
        db_identifier=_require_str("dbIdentifier", doc["dbIdentifier"]),
        name=_require_str("name", doc["name"]),
        gender=_require_str("gender", doc["gender"]),
        age=age,
        dob=dob,
        phone=phone,
        photo=_check_optional_digest("photo", _require_str("photo", doc["photo"])),
        bloodgroup=bloodgroup,
        superset=_check_elevation("superset", _require_str("superset", doc["superset"])),
        docdetails=docdetails,
        allergies=_require_str("allergies", doc["allergies"]),
        insurance=_require_str("insurance", doc["insurance"]),
        warnings=warnings,
    )


def _validate_prescription(doc: dict) -> PrescriptionRecord:
    billamt = _require_int("billamt", doc["billamt"])
    if billamt < 0:
        raise InvariantViolation("billamt", "must be >= 0")
    visit_id = _require_str("visitId", doc["visitId"])
    if not visit_id:
        raise InvariantViolation("visitId", "must be non-empty")
    return PrescriptionRecord(
        visit_id=visit_id,
        docname=_require_str("docname", doc["docname"]),
        patientnum=_check_phone("patientnum", _require_str("patientnum", doc["patientnum"])),
        problem=_require_str("problem", doc["problem"]),
        prescription=_require_str("prescription", doc["prescription"]),
        billamt=billamt,
        attachment=_check_optional_digest(
            "attachment", _require_str("attachment", doc["attachment"])
        ),
    )


def _validate_login(doc: dict) -> LoginRecord:
    user = _require_str("user", doc["user"])
    if not user:
        raise InvariantViolation("user", "must be non-empty")
    password = _require_str("pass", doc["pass"])
    if not PASS_PATTERN.match(password):
        raise InvariantViolation("pass", "must be '<salt hex>$<digest hex>'")
    key = _require_str("key", doc["key"])
    if not HEX_KEY_PATTERN.match(key):
        raise InvariantViolation("key", "must be a 64-char hex public key")
    return LoginRecord(
        user=user,
        password=password,
        mob=_check_phone("mob", _require_str("mob", doc["mob"])),
        superset=_check_elevation("superset", _require_str("superset", doc["superset"])),
        key=key,
    )


def to_document(record: ValidatedRecord) -> dict:
    """Rebuild the canonical document for a validated record."""
    if isinstance(record, PatientRecord):
        return {
            "dbIdentifier": record.db_identifier,
            "name": record.name,
            "gender": record.gender,
            "age": record.age,
            "dob": record.dob,
            "phone": record.phone,
            "photo": record.photo,
            "bloodgroup": record.bloodgroup,
            "superset": record.superset.name,
            "docdetails": dict(record.docdetails),
            "allergies": record.allergies,
            "insurance": record.insurance,
        }
    if isinstance(record, PrescriptionRecord):
        return {
            "visitId": record.visit_id,
            "docname": record.docname,
            "patientnum": record.patientnum,
            "problem": record.problem,
            "prescription": record.prescription,
            "billamt": record.billamt,
            "attachment": record.attachment,
        }
    return {
        "user": record.user,
        "pass": record.password,
        "mob": record.mob,
        "superset": record.superset.name,
        "key": record.key,
    }


def record_bytes(record: ValidatedRecord) -> bytes:
    """Canonical bytes of a record's document form."""
    return encode_canonical(to_document(record))
