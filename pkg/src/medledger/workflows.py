"""Insurance-claim lifecycle rules.

Claims are ledger transactions: submission snapshots the prescription's
bill amount and the patient's insurer, review flips status under a fixed
transition set. Approved claims can still be revoked (fraud reversal);
Revoked is terminal.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import TYPE_CHECKING

from .acl import ElevationLevel
from .codec import Timestamp
from .errors import (
    IllegalTransition,
    InvariantViolation,
    MissingField,
    NoInsuranceOnFile,
    PermissionDenied,
    PhoneMismatch,
    UnknownClaim,
    UnknownField,
    UnknownVisit,
    WrongType,
)

if TYPE_CHECKING:
    from .chain import Transaction
    from .ledger import LedgerState


class ClaimStatus(Enum):
    PENDING = "Pending"
    APPROVED = "Approved"
    REVOKED = "Revoked"


class Verdict(Enum):
    APPROVE = "Approve"
    REVOKE = "Revoke"


# The only legal status changes. Anything else is IllegalTransition.
LEGAL_TRANSITIONS: dict[tuple[ClaimStatus, Verdict], ClaimStatus] = {
    (ClaimStatus.PENDING, Verdict.APPROVE): ClaimStatus.APPROVED,
    (ClaimStatus.PENDING, Verdict.REVOKE): ClaimStatus.REVOKED,
    (ClaimStatus.APPROVED, Verdict.REVOKE): ClaimStatus.REVOKED,
}


@dataclass(frozen=True)
class Claim:
    claim_id: str
    visit_id: str
    phone: str
    amount: int
    insurer: str
    status: ClaimStatus
    reviewer: str = ""
    review_timestamp: int = 0


def claim_doc(claim: Claim) -> dict:
    """Canonical document form, used for the state hash."""
    return {
        "amount": claim.amount,
        "claimId": claim.claim_id,
        "insurer": claim.insurer,
        "phone": claim.phone,
        "reviewTimestamp": Timestamp(claim.review_timestamp),
        "reviewer": claim.reviewer,
        "status": claim.status.value,
        "visitId": claim.visit_id,
    }


def _claim_payload(tx: "Transaction", keys: tuple[str, ...]) -> dict:
    for key in sorted(set(tx.payload) - set(keys)):
        raise UnknownField(key)
    for key in keys:
        if key not in tx.payload:
            raise MissingField(key)
        if not isinstance(tx.payload[key], str):
            raise WrongType(key, "expected string")
    return tx.payload


def submit_claim(state: "LedgerState", tx: "Transaction") -> Claim:
    """Validate a claim submission and build the resulting Pending claim.

    The signer must be the patient's own login (matching mobile number) or
    hold DOCTOR elevation or above.
    """
    payload = _claim_payload(tx, ("visitId", "phone"))
    visit_id, phone = payload["visitId"], payload["phone"]

    stored_rx = state.prescriptions.get(visit_id)
    if stored_rx is None:
        raise UnknownVisit(visit_id)
    prescription = stored_rx.record
    if prescription.patientnum != phone:
        raise PhoneMismatch(f"visit {visit_id} belongs to a different patient")
    versions = state.patients.get(phone)
    patient = versions[-1].record if versions else None
    if patient is None or not patient.insurance:
        raise NoInsuranceOnFile(phone)

    signer = state.logins[tx.signer_user].record
    is_own = signer.mob == phone
    if not is_own and signer.superset < ElevationLevel.DOCTOR:
        raise PermissionDenied("claims may be submitted by the patient or DOCTOR and above")

    return Claim(
        claim_id=tx.tx_id.hex,
        visit_id=visit_id,
        phone=phone,
        amount=prescription.billamt,
        insurer=patient.insurance,
        status=ClaimStatus.PENDING,
    )


def review_claim(state: "LedgerState", tx: "Transaction") -> Claim:
    """Validate a review and build the updated claim."""
    payload = _claim_payload(tx, ("claimId", "verdict"))
    stored = state.claims.get(payload["claimId"])
    if stored is None:
        raise UnknownClaim(payload["claimId"])
    claim = stored.claim

    signer = state.logins[tx.signer_user].record
    if signer.superset < ElevationLevel.INSURANCE_ADMIN:
        raise PermissionDenied("claim review requires INSURANCE_ADMIN or above")

    try:
        verdict = Verdict(payload["verdict"])
    except ValueError:
        raise InvariantViolation("verdict", "must be 'Approve' or 'Revoke'") from None

    next_status = LEGAL_TRANSITIONS.get((claim.status, verdict))
    if next_status is None:
        raise IllegalTransition(f"{claim.status.value} -> {verdict.value}")

    return replace(
        claim,
        status=next_status,
        reviewer=tx.signer_user,
        review_timestamp=tx.timestamp,
    )
