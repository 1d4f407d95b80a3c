"""Shared error hierarchy.

Every failure that can cross a module or API boundary is a subclass of
:class:`MedledgerError` and carries a stable machine-readable ``code`` (the
class name), so the node API can map module errors 1:1 onto structured
responses.
"""

from __future__ import annotations


class MedledgerError(Exception):
    """Base class for all medledger errors."""

    @property
    def code(self) -> str:
        return type(self).__name__

    def __str__(self) -> str:
        msg = super().__str__()
        return msg if msg else self.code


# --- codec ---------------------------------------------------------------


class CodecError(MedledgerError):
    """Document value or wire bytes violate the canonical layout."""


class DuplicateKey(CodecError):
    """A map holds two equal keys."""


class UnsupportedType(CodecError):
    """Value tree contains a leaf outside the document type system."""


class IntOutOfRange(CodecError):
    """Integer does not fit in a signed 64-bit word."""


class DecodeError(CodecError):
    """Wire bytes are truncated, mistagged, or not in canonical form."""


# --- crypto ----------------------------------------------------------------


class BadSeedLength(MedledgerError):
    """Key seed is not exactly 32 bytes."""


class BadSaltLength(MedledgerError):
    """Password salt is not exactly 16 bytes."""


# --- record validation -------------------------------------------------------

class RecordError(MedledgerError):
    """A document failed schema validation; ``field`` names the offender."""

    def __init__(self, field: str, reason: str = ""):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}" if reason else field)


class MissingField(RecordError):
    pass


class WrongType(RecordError):
    pass


class InvariantViolation(RecordError):
    pass


class UnknownField(RecordError):
    pass


# --- authorization -----------------------------------------------------------


class ElevationTooLow(MedledgerError):
    """Signer's elevation level is below the action's minimum."""


class KeyMismatch(MedledgerError):
    """Signature invalid or signing key differs from the registered key."""


class UnknownSigner(MedledgerError):
    """No login record exists for the transaction's signer."""


class UnknownPatient(MedledgerError):
    """No patient record exists for the referenced phone number."""


class PermissionDenied(MedledgerError):
    """Caller may not perform this operation on this object."""


# --- ledger ------------------------------------------------------------------


class DuplicateId(MedledgerError):
    """A unique identifier (dbIdentifier, visitId, user, txId) already exists."""


class UnknownTarget(MedledgerError):
    """Amendment references a phone with no existing patient record."""


class BadHeight(MedledgerError):
    """Block height does not extend the current state."""


class BadLink(MedledgerError):
    """Block prevHash does not match the chain tip."""


class BadQuorumCertificate(MedledgerError):
    """Commit signatures are missing, duplicated, or fail verification."""


class InvalidTxInBlock(MedledgerError):
    """A transaction inside a block failed validation; the block is rejected."""

    def __init__(self, index: int, cause: MedledgerError):
        self.index = index
        self.cause_error = cause
        super().__init__(f"tx[{index}]: {cause.code}: {cause}")


# --- claims ------------------------------------------------------------------


class UnknownVisit(MedledgerError):
    """No prescription exists for the referenced visitId."""


class PhoneMismatch(MedledgerError):
    """Claim phone differs from the prescription's patient number."""


class NoInsuranceOnFile(MedledgerError):
    """Patient's insurance field is empty."""


class UnknownClaim(MedledgerError):
    """No claim exists for the referenced claimId."""


class IllegalTransition(MedledgerError):
    """Requested claim status change is not a legal transition."""


# --- queries -----------------------------------------------------------------


class InvalidRange(MedledgerError):
    """Age range bounds are out of order or out of [0, 150]."""


class UnknownBloodGroup(MedledgerError):
    """Blood group is not one of the eight recognized values."""


# --- blob store --------------------------------------------------------------


class TooLarge(MedledgerError):
    """Blob exceeds the configured size cap."""


class UnsupportedMediaType(MedledgerError):
    """Media type is not one of pdf, png, jpg."""


class NotFound(MedledgerError):
    """No blob is stored under the requested digest."""


class CorruptBlob(MedledgerError):
    """Stored bytes no longer hash to their content address."""


# --- simulator ---------------------------------------------------------------


class InvalidScenario(MedledgerError):
    """Scenario fields violate their invariants."""
