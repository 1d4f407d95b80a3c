"""End-to-end flow on a real 4-node cluster: TCP mesh, HTTP, full commits."""

import time

import httpx
import pytest

import helpers
from live_cluster import LiveCluster
from medledger.chain import TxKind, tx_doc
from medledger.codec import to_jsonable

PHONE = "9876543210"
DOCTOR_KEY = helpers.keypair("live-doctor")
HOSP_KEY = helpers.keypair("live-hosp")
INS_KEY = helpers.keypair("live-ins")


@pytest.fixture(scope="module")
def cluster():
    cluster = LiveCluster(
        n=4,
        extra_login_docs=(
            helpers.login_doc("dr.live", "DOCTOR", DOCTOR_KEY),
            helpers.login_doc("hosp.live", "HOSPITAL_ADMIN", HOSP_KEY),
            helpers.login_doc("ins.live", "INSURANCE_ADMIN", INS_KEY),
        ),
    )
    try:
        cluster.wait_ready()
        yield cluster
    finally:
        cluster.shutdown()


def _token(client, api, user):
    response = client.post(f"{api}/login", json={"user": user, "pass": f"{user}-pw"})
    assert response.status_code == 200, response.text
    return {"Authorization": f"Bearer {response.json()['token']}"}


def _submit(client, api, kind, payload, user, keypair):
    tx = helpers.signed_tx(kind, payload, user, keypair, int(time.time() * 1000))
    response = client.post(f"{api}/tx", json=to_jsonable(tx_doc(tx)))
    assert response.status_code == 202, response.text
    return tx


def test_tx_submitted_to_one_node_is_queryable_on_all(cluster):
    api0 = cluster.nodes[0].api
    with httpx.Client(timeout=5.0) as client:
        _submit(
            client,
            api0,
            TxKind.CREATE_PATIENT,
            helpers.patient_doc(PHONE, insurance="pol-live"),
            "hosp.live",
            HOSP_KEY,
        )
        cluster.wait_height(1)
        # the record must be visible on a node the tx was never sent to
        api2 = cluster.nodes[2].api
        headers = _token(client, api2, "dr.live")
        history = client.get(f"{api2}/patients/{PHONE}", headers=headers)
        assert history.status_code == 200
        assert history.json()["patient"]["phone"] == PHONE

        hashes = cluster.state_hashes()
        assert len(set(hashes)) == 1


def test_prescription_then_claim_review_across_nodes(cluster):
    api1 = cluster.nodes[1].api
    api3 = cluster.nodes[3].api
    with httpx.Client(timeout=5.0) as client:
        _submit(
            client,
            api1,
            TxKind.CREATE_PRESCRIPTION,
            helpers.prescription_doc("visit-live-1", PHONE, billamt=7700),
            "dr.live",
            DOCTOR_KEY,
        )
        deadline = time.time() + 20
        headers3 = _token(client, api3, "dr.live")
        while time.time() < deadline:
            history = client.get(f"{api3}/patients/{PHONE}", headers=headers3)
            if history.status_code == 200 and history.json()["prescriptions"]:
                break
            time.sleep(0.1)
        assert history.json()["prescriptions"][0]["visitId"] == "visit-live-1"

        claim_tx = helpers.signed_tx(
            TxKind.SUBMIT_CLAIM,
            {"visitId": "visit-live-1", "phone": PHONE},
            "dr.live",
            DOCTOR_KEY,
            int(time.time() * 1000),
        )
        response = client.post(f"{api3}/claims", json=to_jsonable(tx_doc(claim_tx)))
        assert response.status_code == 202
        claim_id = claim_tx.tx_id.hex

        ins_headers = _token(client, api1, "ins.live")
        deadline = time.time() + 20
        while time.time() < deadline:
            claims = client.get(f"{api1}/claims", headers=ins_headers).json()["claims"]
            if any(c["claimId"] == claim_id for c in claims):
                break
            time.sleep(0.1)
        match = [c for c in claims if c["claimId"] == claim_id]
        assert match and match[0]["amount"] == 7700

        review_tx = helpers.signed_tx(
            TxKind.REVIEW_CLAIM,
            {"claimId": claim_id, "verdict": "Approve"},
            "ins.live",
            INS_KEY,
            int(time.time() * 1000),
        )
        response = client.post(
            f"{api1}/claims/{claim_id}/review", json=to_jsonable(tx_doc(review_tx))
        )
        assert response.status_code == 202
        deadline = time.time() + 20
        status = None
        while time.time() < deadline:
            claims = client.get(f"{api1}/claims", headers=ins_headers).json()["claims"]
            status = [c for c in claims if c["claimId"] == claim_id][0]["status"]
            if status == "Approved":
                break
            time.sleep(0.1)
        assert status == "Approved"

        assert len(set(cluster.state_hashes())) == 1
