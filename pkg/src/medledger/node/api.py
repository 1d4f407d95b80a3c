"""HTTP API over one node.

Every error that leaves this surface is a module error rendered as
``{"error": {"code", "message"}}`` with the code equal to the error class
name, so clients can switch on machine-readable codes. Token-gated
endpoints resolve the bearer token to a session and enforce the same
elevation policy the ledger itself applies.
"""

from __future__ import annotations

from typing import Optional

from fastapi import Depends, FastAPI, Header, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from ..acl import ElevationLevel
from ..chain import TxKind, tx_from_doc
from ..codec import Digest, from_jsonable, to_jsonable
from ..errors import (
    InvariantViolation,
    MedledgerError,
    PermissionDenied,
    WrongType,
)
from ..query import donor_search, history_by_phone, research_query
from ..records import PatientRecord, PrescriptionRecord, to_document
from ..workflows import Claim
from .service import NodeService, Session

_STATUS_BY_CODE = {
    "DuplicateKey": 400,
    "UnsupportedType": 400,
    "IntOutOfRange": 400,
    "DecodeError": 400,
    "BadSeedLength": 400,
    "BadSaltLength": 400,
    "MissingField": 400,
    "WrongType": 400,
    "InvariantViolation": 400,
    "UnknownField": 400,
    "IllegalTransition": 400,
    "InvalidRange": 400,
    "UnknownBloodGroup": 400,
    "InvalidScenario": 400,
    "KeyMismatch": 403,
    "ElevationTooLow": 403,
    "PermissionDenied": 403,
    "UnknownSigner": 403,
    "UnknownPatient": 404,
    "UnknownTarget": 404,
    "UnknownVisit": 404,
    "UnknownClaim": 404,
    "NotFound": 404,
    "DuplicateId": 409,
    "TooLarge": 413,
    "UnsupportedMediaType": 415,
}

_MEDIA_BY_CONTENT_TYPE = {
    "application/pdf": "pdf",
    "image/png": "png",
    "image/jpeg": "jpg",
}
_CONTENT_TYPE_BY_MEDIA = {v: k for k, v in _MEDIA_BY_CONTENT_TYPE.items()}


def _error_response(exc: MedledgerError) -> JSONResponse:
    return JSONResponse(
        status_code=_STATUS_BY_CODE.get(exc.code, 500),
        content={"error": {"code": exc.code, "message": str(exc)}},
    )


def _patient_json(record: PatientRecord) -> dict:
    return to_jsonable(to_document(record))


def _rx_json(record: PrescriptionRecord) -> dict:
    return to_jsonable(to_document(record))


def _claim_json(claim: Claim) -> dict:
    return {
        "claimId": claim.claim_id,
        "visitId": claim.visit_id,
        "phone": claim.phone,
        "amount": claim.amount,
        "insurer": claim.insurer,
        "status": claim.status.value,
        "reviewer": claim.reviewer,
        "reviewTimestamp": claim.review_timestamp,
    }


def create_app(service: NodeService) -> FastAPI:
    app = FastAPI(title="medledger node", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(MedledgerError)
    async def handle_domain_error(_request: Request, exc: MedledgerError):
        return _error_response(exc)

    def require_session(authorization: Optional[str] = Header(default=None)) -> Session:
        if not authorization or not authorization.startswith("Bearer "):
            raise PermissionDenied("missing bearer token")
        session = service.session_for(authorization.removeprefix("Bearer "))
        if session is None:
            raise PermissionDenied("invalid or expired token")
        return session

    def require_elevation(session: Session, minimum: ElevationLevel) -> None:
        if session.elevation < minimum:
            raise PermissionDenied(f"requires {minimum.name} or above")

    # --- session ----------------------------------------------------------

    @app.post("/login")
    async def login(body: dict):
        user, password = body.get("user"), body.get("pass")
        if not isinstance(user, str) or not isinstance(password, str):
            raise WrongType("login", "expected {user, pass} strings")
        session = service.login(user, password)
        return {
            "token": session.token,
            "user": session.user,
            "elevation": session.elevation.name,
            "expiresAt": int(session.expires_at * 1000),
        }

    # --- transactions ------------------------------------------------------

    async def _submit(body: dict, expected_kind: Optional[TxKind] = None) -> JSONResponse:
        tx = tx_from_doc(from_jsonable(body))
        if expected_kind is not None and tx.kind != expected_kind:
            raise InvariantViolation("kind", f"endpoint accepts only {expected_kind.value}")
        tx_id = await service.submit_transaction(tx)
        return JSONResponse(status_code=202, content={"txId": tx_id.hex})

    @app.post("/tx")
    async def submit_tx(body: dict):
        return await _submit(body)

    @app.post("/claims")
    async def submit_claim_tx(body: dict):
        return await _submit(body, TxKind.SUBMIT_CLAIM)

    @app.post("/claims/{claim_id}/review")
    async def review_claim_tx(claim_id: str, body: dict):
        tx = tx_from_doc(from_jsonable(body))
        if tx.kind != TxKind.REVIEW_CLAIM:
            raise InvariantViolation("kind", "endpoint accepts only ReviewClaim")
        if tx.payload.get("claimId") != claim_id:
            raise InvariantViolation("claimId", "path and payload disagree")
        tx_id = await service.submit_transaction(tx)
        return JSONResponse(status_code=202, content={"txId": tx_id.hex})

    # --- reads ------------------------------------------------------------

    @app.get("/status")
    async def status():
        state = service.state
        return {
            "nodeId": service.config.node_id,
            "chainId": state.chain_id,
            "height": state.height,
            "stateHash": state.state_hash.hex,
            "peers": service.transport.connected_peers,
            "pendingTxs": len(service.replica.pending),
        }

    @app.get("/patients/{phone}")
    async def patient_history(phone: str, session: Session = Depends(require_session)):
        if session.elevation < ElevationLevel.DOCTOR and session.mob != phone:
            raise PermissionDenied("patients may only view their own history")
        history = history_by_phone(service.state, phone)
        return {
            "patient": _patient_json(history.patient),
            "versions": [_patient_json(r) for r in history.versions],
            "prescriptions": [_rx_json(r) for r in history.prescriptions],
            "loginPresent": history.login_present,
        }

    @app.get("/research")
    async def research(min: int, max: int, session: Session = Depends(require_session)):
        require_elevation(session, ElevationLevel.DOCTOR)
        rows = research_query(service.state, min, max)
        return {"count": len(rows), "rows": [to_jsonable(r.to_doc()) for r in rows]}

    @app.get("/donors/{bloodgroup}")
    async def donors(bloodgroup: str, session: Session = Depends(require_session)):
        require_elevation(session, ElevationLevel.DOCTOR)
        import time as _time

        tokens, events = donor_search(
            service.state, bloodgroup, requested_at=int(_time.time() * 1000)
        )
        service.queue_notifications(events)
        return {"tokens": tokens, "notified": len(events)}

    @app.get("/notifications")
    async def notifications(session: Session = Depends(require_session)):
        events = service.notifications_for(session)
        return {
            "events": [
                {
                    "token": e.token,
                    "bloodgroup": e.bloodgroup,
                    "createdAt": e.created_at,
                    "message": e.message,
                }
                for e in events
            ]
        }

    @app.get("/claims")
    async def list_claims(session: Session = Depends(require_session)):
        state = service.state
        claims = [sc.claim for sc in state.claims.values()]
        if session.elevation < ElevationLevel.INSURANCE_ADMIN:
            claims = [c for c in claims if c.phone == session.mob]
        claims.sort(key=lambda c: c.claim_id)
        return {"claims": [_claim_json(c) for c in claims]}

    # --- blobs ------------------------------------------------------------

    @app.post("/blobs")
    async def put_blob(request: Request, session: Session = Depends(require_session)):
        content_type = request.headers.get("content-type", "")
        media_type = _MEDIA_BY_CONTENT_TYPE.get(content_type.split(";")[0].strip())
        if media_type is None:
            media_type = request.headers.get("x-media-type", "")
        data = await request.body()
        content_hash = service.blobs.put(service.login_record(session), data, media_type)
        return JSONResponse(status_code=201, content={"hash": content_hash.hex})

    @app.get("/blobs/{hash_hex}")
    async def get_blob(hash_hex: str, session: Session = Depends(require_session)):
        try:
            content_hash = Digest.from_hex(hash_hex)
        except ValueError:
            raise InvariantViolation("hash", "must be a 64-char hex digest") from None
        data, media_type = service.blobs.get(
            service.login_record(session), content_hash, service.state
        )
        return Response(content=data, media_type=_CONTENT_TYPE_BY_MEDIA[media_type])

    return app
