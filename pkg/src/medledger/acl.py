"""Elevation levels and authorization, including the prescription gate.

The access-control segment of the ledger is a fixed five-tier hierarchy.
Each account's "superset" field names its tier, and every write action has a
compiled-in minimum tier (see ``MINIMUM_ELEVATION``); the table is identical
on all nodes so authorization decisions are part of deterministic consensus.

Prescriptions pass through a three-part gate, evaluated in a fixed order so
error reporting is deterministic:

    1. the signer's login has elevation DOCTOR or above,
    2. the transaction is signed with the signer's registered key,
    3. a patient record exists for the prescription's patient number.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import TYPE_CHECKING, Optional

from . import chain, crypto
from .errors import ElevationTooLow, KeyMismatch, UnknownPatient

if TYPE_CHECKING:
    from .ledger import LedgerState
    from .records import LoginRecord


class ElevationLevel(IntEnum):
    """Ordered permission tiers; higher values include all lower powers."""

    PATIENT = 0
    DOCTOR = 1
    HOSPITAL_ADMIN = 2
    INSURANCE_ADMIN = 3
    SYSTEM_ADMIN = 4


ELEVATION_NAMES = {level.name: level for level in ElevationLevel}


def parse_elevation(name: str) -> Optional[ElevationLevel]:
    """Map a superset field value onto its tier, or None if undefined."""
    return ELEVATION_NAMES.get(name)


class Permission(Enum):
    CREATE_PATIENT = "CreatePatient"
    AMEND_PATIENT = "AmendPatient"
    CREATE_PRESCRIPTION = "CreatePrescription"
    CREATE_LOGIN = "CreateLogin"
    SUBMIT_CLAIM = "SubmitClaim"
    REVIEW_CLAIM = "ReviewClaim"
    RESEARCH_QUERY = "ResearchQuery"
    DONOR_SEARCH = "DonorSearch"
    PUT_BLOB = "PutBlob"


# Static policy table, compiled into the node and published in the README.
# Not runtime-configurable: all nodes must agree on every authorization.
MINIMUM_ELEVATION: dict[Permission, ElevationLevel] = {
    Permission.CREATE_PATIENT: ElevationLevel.HOSPITAL_ADMIN,
    Permission.AMEND_PATIENT: ElevationLevel.HOSPITAL_ADMIN,
    Permission.CREATE_PRESCRIPTION: ElevationLevel.DOCTOR,
    Permission.CREATE_LOGIN: ElevationLevel.SYSTEM_ADMIN,
    Permission.SUBMIT_CLAIM: ElevationLevel.PATIENT,
    Permission.REVIEW_CLAIM: ElevationLevel.INSURANCE_ADMIN,
    Permission.RESEARCH_QUERY: ElevationLevel.DOCTOR,
    Permission.DONOR_SEARCH: ElevationLevel.DOCTOR,
    Permission.PUT_BLOB: ElevationLevel.DOCTOR,
}


def minimum_elevation(action: Permission) -> ElevationLevel:
    """The fixed policy table entry for an action."""
    return MINIMUM_ELEVATION[action]


def authorize(login: "LoginRecord", action: Permission) -> bool:
    """True iff the login's elevation meets the action's minimum."""
    return login.superset >= MINIMUM_ELEVATION[action]


@dataclass(frozen=True)
class CheckReport:
    """Outcome of the three prescription checks, in evaluation order."""

    elevation_ok: bool
    key_ok: bool
    patient_ok: bool

    @property
    def passed(self) -> bool:
        return self.elevation_ok and self.key_ok and self.patient_ok

    @property
    def failure(self) -> Optional[str]:
        """Error code of the first failed check, or None."""
        if not self.elevation_ok:
            return "ElevationTooLow"
        if not self.key_ok:
            return "KeyMismatch"
        if not self.patient_ok:
            return "UnknownPatient"
        return None


def check_prescription(state: "LedgerState", tx: "chain.Transaction") -> CheckReport:
    """Run the three-part prescription gate against a state snapshot.

    The payload must already validate as a prescription record. A signer
    with no login record at all fails the elevation check.
    """
    stored = state.logins.get(tx.signer_user)
    login = stored.record if stored is not None else None

    elevation_ok = login is not None and login.superset >= ElevationLevel.DOCTOR

    key_ok = False
    if login is not None and login.key == tx.signer_public_key:
        key_ok = crypto.verify(login.key, chain.tx_signing_bytes(tx), tx.signature)

    patientnum = tx.payload.get("patientnum")
    patient_ok = isinstance(patientnum, str) and patientnum in state.patients

    return CheckReport(elevation_ok=elevation_ok, key_ok=key_ok, patient_ok=patient_ok)


def raise_check_failure(report: CheckReport) -> None:
    """Raise the error for the first failed prescription check."""
    code = report.failure
    if code is None:
        return
    if code == "ElevationTooLow":
        raise ElevationTooLow("prescription check one failed")
    if code == "KeyMismatch":
        raise KeyMismatch("prescription check two failed")
    raise UnknownPatient("prescription check three failed")
