"""Read-side queries: phone-chained history, research rows, donor search.

All patient, prescription, and login records that share one phone number
form a chain; `history_by_phone` assembles it. Research queries and donor
searches strip every identifying field before anything leaves the node:
research rows carry only age, gender, bloodgroup, allergies, and the
problem history, and donor matches are returned as opaque tokens (the
digest of the patient's latest record) paired with queued notification
events rather than reachable contact details.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

from .codec import Value
from .errors import InvalidRange, UnknownBloodGroup, UnknownPatient
from .records import BLOOD_GROUPS, MAX_AGE, PatientRecord, PrescriptionRecord

if TYPE_CHECKING:
    from .ledger import LedgerState

# field names that must never appear in anonymized output
EXCLUDED_IDENTIFIER_FIELDS = (
    "name",
    "phone",
    "dbIdentifier",
    "photo",
    "dob",
    "insurance",
    "docdetails",
)


@dataclass(frozen=True)
class PatientHistory:
    patient: PatientRecord
    versions: tuple[PatientRecord, ...]  # prior versions, oldest first
    prescriptions: tuple[PrescriptionRecord, ...]  # timestamp order
    login_present: bool


@dataclass(frozen=True)
class AnonymizedRow:
    age: int
    gender: str
    bloodgroup: str
    allergies: str
    problem_history: tuple[str, ...]

    def to_doc(self) -> dict[str, Value]:
        return {
            "age": self.age,
            "allergies": self.allergies,
            "bloodgroup": self.bloodgroup,
            "gender": self.gender,
            "problemHistory": list(self.problem_history),
        }


@dataclass(frozen=True)
class NotificationEvent:
    """A queued donor-request message; carries no personal fields."""

    token: str  # entry digest of the donor's latest record
    bloodgroup: str
    created_at: int  # request time, stamped by the caller
    message: str = ""


def history_by_phone(state: "LedgerState", phone: str) -> PatientHistory:
    """Everything chained to one phone number.

    Prescriptions come back ordered by (timestamp, visitId); equality with a
    brute-force scan over the whole state is the module's core property.
    """
    versions = state.patients.get(phone)
    if not versions:
        raise UnknownPatient(phone)
    prescriptions = tuple(
        state.prescriptions[visit_id].record for _, visit_id in state.rx_by_phone.get(phone, ())
    )
    login_present = any(s.record.mob == phone for s in state.logins.values())
    return PatientHistory(
        patient=versions[-1].record,
        versions=tuple(s.record for s in versions[:-1]),
        prescriptions=prescriptions,
        login_present=login_present,
    )


def research_query(state: "LedgerState", age_min: int, age_max: int) -> list[AnonymizedRow]:
    """Anonymized rows for latest-version patients inside an age range.

    Output order is fixed by each source record's entry digest, so row
    position leaks nothing about insertion order.
    """
    if not (0 <= age_min <= age_max <= MAX_AGE):
        raise InvalidRange(f"[{age_min}, {age_max}] is not within [0, {MAX_AGE}]")
    matches: list[tuple[str, AnonymizedRow]] = []
    for phone, versions in state.patients.items():
        latest = versions[-1]
        record = latest.record
        if not age_min <= record.age <= age_max:
            continue
        problems = tuple(
            state.prescriptions[visit_id].record.problem
            for _, visit_id in state.rx_by_phone.get(phone, ())
        )
        row = AnonymizedRow(
            age=record.age,
            gender=record.gender,
            bloodgroup=record.bloodgroup,
            allergies=record.allergies,
            problem_history=problems,
        )
        matches.append((latest.digest_hex, row))
    matches.sort(key=lambda pair: pair[0])
    return [row for _, row in matches]


def donor_search(
    state: "LedgerState", bloodgroup: str, *, requested_at: int = 0
) -> tuple[list[str], list[NotificationEvent]]:
    """Opaque donor tokens plus one notification event per match.

    Tokens are entry digests of the latest patient records: stable, opaque,
    and resolvable back to a patient only by the node itself.
    """
    if bloodgroup not in BLOOD_GROUPS:
        raise UnknownBloodGroup(bloodgroup)
    pairs: list[str] = []
    for versions in state.patients.values():
        latest = versions[-1]
        if latest.record.bloodgroup == bloodgroup:
            pairs.append(latest.digest_hex)
    pairs.sort()
    events = [
        NotificationEvent(
            token=token,
            bloodgroup=bloodgroup,
            created_at=requested_at,
            message=f"donor request for blood group {bloodgroup}",
        )
        for token in pairs
    ]
    return pairs, events


def rebuild_rx_index(state: "LedgerState") -> dict[str, tuple[tuple[int, str], ...]]:
    """Prescription-by-phone index rebuilt from scratch (for consistency checks)."""
    grouped: dict[str, list[tuple[int, str]]] = {}
    for visit_id, stored in state.prescriptions.items():
        grouped.setdefault(stored.record.patientnum, []).append((stored.timestamp, visit_id))
    return {phone: tuple(sorted(items)) for phone, items in grouped.items()}
