"""Acceptance criteria, one test per criterion, at their stated tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one pass/fail
line per criterion. The suite builds everything it measures in-process;
nothing here depends on the web console.
"""

import itertools
import json
import random
import sys
import time
from contextlib import contextmanager
from dataclasses import replace

import pytest

import helpers
from medledger.chain import Block, TxKind, block_hash
from medledger.codec import digest_hex, encode_canonical, from_jsonable, to_jsonable
from medledger.errors import InvalidTxInBlock, IllegalTransition, MedledgerError
from medledger.ledger import StoredClaim, apply_block, initial_state, validate_tx
from medledger.node.bench import run_bench
from medledger.query import EXCLUDED_IDENTIFIER_FIELDS, history_by_phone, research_query
from medledger.simnet import (
    ByzantineFault,
    CrashFault,
    Scenario,
    Workload,
    assert_agreement,
    run,
)
from medledger.workflows import ClaimStatus, LEGAL_TRANSITIONS, Verdict, claim_doc, review_claim
from oracles import brute_force_history, oracle_replay_state_hash

THROUGHPUT_FLOOR_TX_S = 320.0


@contextmanager
def criterion(name: str):
    started = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE] FAIL  {name}", file=sys.stderr)
        raise
    elapsed = time.perf_counter() - started
    print(f"[ACCEPTANCE] PASS  {name} ({elapsed:.1f}s)", file=sys.stderr)


# --- 1. fault-tolerance bound ----------------------------------------------


def test_fault_tolerance_bound():
    with criterion("fault-tolerance bound (1 crash commits, 2 crashes halt, byzantine agrees)"):
        suite_started = time.perf_counter()

        # (a) one crashed node of four: the full workload still commits
        trace = run(
            Scenario(
                seed=101,
                nodes=4,
                faults=(CrashFault(3, 0),),
                workload=Workload(100),
                max_ticks=10_000,
            )
        )
        live = sorted(trace.honest_nodes - trace.crashed_nodes)
        assert live == [0, 1, 2]
        assert trace.completed, "workload did not fully commit with one crash"
        assert trace.end_tick <= 10_000
        assert len({trace.state_hashes[n] for n in live}) == 1, "state hashes diverged"

        # (b) two crashed nodes of four: zero blocks between fault tick and the end
        halt = run(
            Scenario(
                seed=102,
                nodes=4,
                faults=(CrashFault(2, 0), CrashFault(3, 0)),
                workload=Workload(100),
                max_ticks=50_000,
            )
        )
        assert halt.committed_between(0, 50_000) == [], "network committed despite > f crashes"
        assert all(len(chain) == 0 for chain in halt.chains.values())

        # (c) one Byzantine equivocator, 50 distinct seeds, agreement on every trace
        for seed in range(50):
            byz = run(
                Scenario(
                    seed=seed,
                    nodes=4,
                    faults=(ByzantineFault(1, "equivocateProposals"),),
                    workload=Workload(30),
                    max_ticks=30_000,
                )
            )
            report = assert_agreement(byz)
            assert report.passed, f"seed {seed}: disagreement {report.disagreements}"

        assert time.perf_counter() - suite_started < 60.0, "fault suite exceeded 60s budget"


# --- 2. replication determinism ----------------------------------------------


def test_replication_determinism_thousand_txs():
    with criterion("replication determinism (1,000 txs, 4 nodes, replay oracle)"):
        trace = run(Scenario(seed=777, nodes=4, workload=Workload(1_000), max_ticks=50_000))
        assert trace.completed, "fault-free run did not commit its workload"
        hashes = set(trace.state_hashes.values())
        assert len(hashes) == 1, f"nodes diverged: {hashes}"

        # an independent single-process replay of node0's committed chain
        from medledger.simnet import sim_genesis

        genesis, _, _ = sim_genesis(777, 4)
        oracle_hex = oracle_replay_state_hash(list(genesis.login_docs), trace.chains[0])
        assert hashes == {oracle_hex}, "replay oracle disagrees with the cluster"


# --- 3. throughput ---------------------------------------------------------


def test_throughput_benchmark_floor():
    with criterion(f"throughput >= {THROUGHPUT_FLOOR_TX_S:.0f} tx/s (10,000 txs, 4 nodes)"):
        started = time.perf_counter()
        result = run_bench(tx_count=10_000, nodes=4, seed=320)
        assert result.completed and result.agreement and result.state_hashes_equal
        print(f"[ACCEPTANCE] measured throughput: {result.tx_per_s:.0f} tx/s", file=sys.stderr)
        assert result.tx_per_s >= THROUGHPUT_FLOOR_TX_S, result.summary()
        assert time.perf_counter() - started < 120.0, "benchmark exceeded 2 minute budget"


# --- 4. three-check prescription rule ----------------------------------------


def _gate_world(elevation_ok: bool, key_ok: bool, patient_ok: bool):
    signer_key = helpers.keypair("acc-signer")
    wrong_key = helpers.keypair("acc-wrong")
    login = helpers.login_doc("acc.doc", "DOCTOR" if elevation_ok else "PATIENT", signer_key)
    genesis, node_keys, _ = helpers.make_genesis(
        n_validators=4,
        extra_login_docs=(
            login,
            helpers.login_doc("acc.hosp", "HOSPITAL_ADMIN", helpers.keypair("acc-hosp")),
        ),
    )
    state = initial_state(genesis)
    if patient_ok:
        patient = helpers.signed_tx(
            TxKind.CREATE_PATIENT,
            helpers.patient_doc("9876543210"),
            "acc.hosp",
            helpers.keypair("acc-hosp"),
            helpers.TS0,
        )
        block = Block(height=1, prev_hash=state.tip_hash, txs=(patient,), proposer="node0")
        state = apply_block(state, helpers.certify(block, node_keys))
    tx = helpers.signed_tx(
        TxKind.CREATE_PRESCRIPTION,
        helpers.prescription_doc("visit-acc", "9876543210"),
        "acc.doc",
        signer_key if key_ok else wrong_key,
        helpers.TS0 + 1,
    )
    return state, node_keys, tx


def test_three_check_rule_truth_table():
    with criterion("three-check prescription rule (8-case truth table)"):
        for elevation_ok, key_ok, patient_ok in itertools.product([True, False], repeat=3):
            state, node_keys, tx = _gate_world(elevation_ok, key_ok, patient_ok)
            block = helpers.certify(
                Block(
                    height=state.height + 1,
                    prev_hash=state.tip_hash,
                    txs=(tx,),
                    proposer="node0",
                ),
                node_keys,
            )
            if elevation_ok and key_ok and patient_ok:
                new_state = apply_block(state, block)  # the all-true case commits
                assert "visit-acc" in new_state.prescriptions
                continue
            with pytest.raises(InvalidTxInBlock) as err:
                apply_block(state, block)
            # first failed check reported, in the fixed order
            if not elevation_ok:
                expected = "ElevationTooLow"
            elif not key_ok:
                expected = "KeyMismatch"
            else:
                expected = "UnknownPatient"
            assert err.value.cause_error.code == expected, (
                elevation_ok,
                key_ok,
                patient_ok,
                err.value.cause_error.code,
            )


# --- 5. phone-chaining oracle equivalence ----------------------------------


def test_phone_chaining_oracle_equivalence():
    with criterion("phone chaining == brute-force scan (200 corpora)"):
        rng = random.Random(20_240)
        mismatches = 0
        for index in range(200):
            # sizes up to the 1,000-record cap, heavier tail every 40th corpus
            n_patients = 300 if index % 40 == 39 else rng.randint(1, 90)
            state = helpers.corpus_state(rng, n_patients=n_patients)
            for phone in state.patients:
                history = history_by_phone(state, phone)
                versions, rx, login_present = brute_force_history(state, phone)
                if (
                    list(history.versions) + [history.patient] != versions
                    or list(history.prescriptions) != rx
                    or history.login_present != login_present
                ):
                    mismatches += 1
        assert mismatches == 0


# --- 6. anonymization ------------------------------------------------------


def test_research_anonymization_property():
    with criterion("research anonymization (100 corpora, zero identifier leaks)"):
        rng = random.Random(60_606)
        for _ in range(100):
            state = helpers.corpus_state(rng, n_patients=rng.randint(1, 50))
            low = rng.randint(0, 80)
            high = rng.randint(low, 150)
            rows = research_query(state, low, high)
            serialized = json.dumps([to_jsonable(row.to_doc()) for row in rows])
            for versions in state.patients.values():
                record = versions[-1].record
                assert record.name not in serialized
                assert record.phone not in serialized
                assert record.db_identifier not in serialized
            for forbidden in EXCLUDED_IDENTIFIER_FIELDS:
                assert f'"{forbidden}"' not in serialized


# --- 7. claim state machine ---------------------------------------------


def test_claim_state_machine_fuzz():
    with criterion("claim state machine (10,000 random verdict sequences)"):
        base = _claim_base_state()
        state, claim_id, billamt = base
        rng = random.Random(70_707)
        statuses = {ClaimStatus.PENDING, ClaimStatus.APPROVED, ClaimStatus.REVOKED}
        for _ in range(10_000):
            current = state
            trail = [current.claims[claim_id].claim.status]
            for _ in range(rng.randint(1, 6)):
                verdict = rng.choice(["Approve", "Revoke"])
                tx = helpers.signed_tx(
                    TxKind.REVIEW_CLAIM,
                    {"claimId": claim_id, "verdict": verdict},
                    "ins.acc",
                    helpers.keypair("ins-acc"),
                    helpers.TS0 + rng.randrange(10**9),
                )
                before = current.claims[claim_id].claim
                try:
                    updated = review_claim(current, tx)
                except IllegalTransition:
                    continue
                assert (before.status, Verdict(verdict)) in LEGAL_TRANSITIONS
                assert updated.status in statuses
                assert updated.amount == billamt, "claim amount drifted from billamt"
                current = replace(
                    current,
                    claims={
                        claim_id: StoredClaim(
                            updated, digest_hex(encode_canonical(claim_doc(updated)))
                        )
                    },
                )
                trail.append(updated.status)
            for previous, following in zip(trail, trail[1:]):
                assert any(
                    LEGAL_TRANSITIONS.get((previous, verdict)) is following
                    for verdict in Verdict
                ), f"illegal committed transition {previous} -> {following}"


def _claim_base_state():
    genesis, node_keys, _ = helpers.make_genesis(
        n_validators=4,
        extra_login_docs=(
            helpers.login_doc("dr.acc", "DOCTOR", helpers.keypair("dr-acc")),
            helpers.login_doc("hosp.acc", "HOSPITAL_ADMIN", helpers.keypair("hosp-acc")),
            helpers.login_doc("ins.acc", "INSURANCE_ADMIN", helpers.keypair("ins-acc")),
        ),
    )
    state = initial_state(genesis)
    billamt = 9_990
    txs = (
        helpers.signed_tx(
            TxKind.CREATE_PATIENT,
            helpers.patient_doc("9876543210", insurance="pol-acc"),
            "hosp.acc",
            helpers.keypair("hosp-acc"),
            helpers.TS0,
        ),
        helpers.signed_tx(
            TxKind.CREATE_PRESCRIPTION,
            helpers.prescription_doc("visit-claim", "9876543210", billamt=billamt),
            "dr.acc",
            helpers.keypair("dr-acc"),
            helpers.TS0 + 1,
        ),
        helpers.signed_tx(
            TxKind.SUBMIT_CLAIM,
            {"visitId": "visit-claim", "phone": "9876543210"},
            "dr.acc",
            helpers.keypair("dr-acc"),
            helpers.TS0 + 2,
        ),
    )
    block = Block(height=1, prev_hash=state.tip_hash, txs=txs, proposer="node0")
    state = apply_block(state, helpers.certify(block, node_keys))
    claim_id = txs[-1].tx_id.hex
    assert state.claims[claim_id].claim.amount == billamt
    return state, claim_id, billamt


# --- 8. codec and blob integrity ----------------------------------------


def test_codec_and_blob_integrity(tmp_path):
    with criterion("codec golden digests stable; blob store round-trips and audits clean"):
        from pathlib import Path

        from medledger.blobstore import BlobStore
        from medledger.codec import digest
        from medledger.records import RecordKind, validate_record

        golden = json.loads(
            (Path(__file__).parent / "golden" / "codec_digests.json").read_text()
        )
        for entry in golden:
            doc = from_jsonable(entry["doc"])
            encoded = encode_canonical(doc)
            assert encoded.hex() == entry["encodedHex"], "golden encoding changed"
            assert digest(encoded).hex == entry["digest"], "golden digest changed"

        doctor = validate_record(
            RecordKind.LOGIN, helpers.login_doc("blob.doc", "DOCTOR", helpers.keypair("blob-doc"))
        )
        store = BlobStore(tmp_path)
        rng = random.Random(80_808)
        pool = [bytes(rng.randrange(256) for _ in range(rng.randint(1, 4096))) for _ in range(300)]
        stored = {}
        for _ in range(1_000):
            data = rng.choice(pool)
            content_hash = store.put(doctor, data, rng.choice(["pdf", "png", "jpg"]))
            stored[content_hash.hex] = data
        assert len(store) == len(stored)
        state = helpers.base_state()
        for hash_hex, data in stored.items():
            from medledger.codec import Digest

            fetched, _ = store.get(doctor, Digest.from_hex(hash_hex), state)
            assert fetched == data, "blob round trip not byte-identical"
        assert store.audit() == [], "full-store audit found corrupt entries"
