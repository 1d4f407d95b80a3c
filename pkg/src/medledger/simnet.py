"""Deterministic discrete-event simulator for a cluster of replicas.

Time is a tick counter, not a clock. All randomness (delivery delays,
workload content, key material) flows from one seeded generator, and ties
at the same tick break by (node id, insertion sequence), so a scenario
replays bit-identically on any machine. Consensus timeouts map to ticks:
base 10, growing linearly with the round number.

Fault injection covers crashed nodes (silent from their crash tick on),
partitions (messages crossing the cut are dropped at send time while the
window [fromTick, toTick) is open), and three Byzantine behaviors that
wrap an otherwise honest node and mangle its outbound traffic:

* ``equivocateProposals``: sends conflicting proposals to different peers,
* ``voteBothWays``: splits each vote into two conflicting variants,
* ``silent``: receives everything, sends nothing.

A run produces a Trace: the ordered event log, each node's committed chain,
and each node's final state hash, which is what the agreement checker and
the acceptance suite assert over.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field
from typing import Optional, Union

from . import crypto
from .chain import Block, Transaction, TxKind, block_hash, make_transaction
from .codec import Timestamp, digest_hex, encode_canonical
from .consensus import (
    CommitCertificate,
    ConsensusMessage,
    Proposal,
    Timeout,
    Vote,
    message_signing_bytes,
)
from .errors import InvalidScenario
from .ledger import GenesisInfo, encode_genesis, load_genesis
from .records import make_pass_field
from .replica import Replica, ReplicaOutput

BASE_TIMEOUT_TICKS = 10
SIM_ADMIN_USER = "genesis.admin"
SIM_ADMIN_PASSWORD = "genesis-password"

BYZANTINE_BEHAVIORS = frozenset({"equivocateProposals", "voteBothWays", "silent"})

WORKLOAD_PHASES = ("logins", "patients", "prescriptions", "claims", "reviews")
DEFAULT_MIX = {
    "logins": 0.06,
    "patients": 0.50,
    "prescriptions": 0.30,
    "claims": 0.09,
    "reviews": 0.05,
}

_TS_BASE = 1_700_000_000_000  # synthetic tx timestamps count up from here
_YEAR_MS = round(365.25 * 24 * 3600 * 1000)


# --- scenario ------------------------------------------------------------


@dataclass(frozen=True)
class CrashFault:
    node: int
    at_tick: int


@dataclass(frozen=True)
class PartitionFault:
    group_a: tuple[int, ...]
    group_b: tuple[int, ...]
    from_tick: int
    to_tick: int


@dataclass(frozen=True)
class ByzantineFault:
    node: int
    behavior: str


Fault = Union[CrashFault, PartitionFault, ByzantineFault]


@dataclass(frozen=True)
class DelayModel:
    kind: str  # "fixed" or "uniform"
    min_ticks: int
    max_ticks: int

    def sample(self, rng: random.Random) -> int:
        if self.kind == "fixed":
            return self.min_ticks
        return rng.randint(self.min_ticks, self.max_ticks)


@dataclass(frozen=True)
class Workload:
    tx_count: int
    mix: tuple[tuple[str, float], ...] = tuple(sorted(DEFAULT_MIX.items()))

    def mix_dict(self) -> dict[str, float]:
        return dict(self.mix)


@dataclass(frozen=True)
class Scenario:
    seed: int
    nodes: int
    faults: tuple[Fault, ...] = ()
    delay: DelayModel = DelayModel("fixed", 1, 1)
    workload: Workload = Workload(100)
    max_ticks: int = 10_000

    def validate(self) -> None:
        if self.nodes < 1:
            raise InvalidScenario("nodes must be >= 1")
        if self.max_ticks <= 0:
            raise InvalidScenario("maxTicks must be > 0")
        if self.delay.kind not in ("fixed", "uniform"):
            raise InvalidScenario(f"unknown delay model {self.delay.kind!r}")
        if not 0 <= self.delay.min_ticks <= self.delay.max_ticks:
            raise InvalidScenario("delay bounds must satisfy 0 <= min <= max")
        if self.workload.tx_count < 0:
            raise InvalidScenario("txCount must be >= 0")
        mix = self.workload.mix_dict()
        for phase in mix:
            if phase not in WORKLOAD_PHASES:
                raise InvalidScenario(f"unknown workload phase {phase!r}")
            if mix[phase] < 0:
                raise InvalidScenario("mix weights must be >= 0")
        if mix and sum(mix.values()) <= 0:
            raise InvalidScenario("mix weights must sum to > 0")
        for fault in self.faults:
            if isinstance(fault, CrashFault):
                self._check_node(fault.node)
                if fault.at_tick < 0:
                    raise InvalidScenario("crash atTick must be >= 0")
            elif isinstance(fault, PartitionFault):
                for node in fault.group_a + fault.group_b:
                    self._check_node(node)
                if set(fault.group_a) & set(fault.group_b):
                    raise InvalidScenario("partition groups must be disjoint")
                if not 0 <= fault.from_tick <= fault.to_tick:
                    raise InvalidScenario("partition window must satisfy 0 <= from <= to")
            else:
                self._check_node(fault.node)
                if fault.behavior not in BYZANTINE_BEHAVIORS:
                    raise InvalidScenario(f"unknown byzantine behavior {fault.behavior!r}")

    def _check_node(self, node: int) -> None:
        if not 0 <= node < self.nodes:
            raise InvalidScenario(f"node id {node} out of range for {self.nodes} nodes")

    def to_jsonable(self) -> dict:
        faults = []
        for fault in self.faults:
            if isinstance(fault, CrashFault):
                faults.append({"kind": "crash", "node": fault.node, "atTick": fault.at_tick})
            elif isinstance(fault, PartitionFault):
                faults.append(
                    {
                        "kind": "partition",
                        "groupA": list(fault.group_a),
                        "groupB": list(fault.group_b),
                        "fromTick": fault.from_tick,
                        "toTick": fault.to_tick,
                    }
                )
            else:
                faults.append(
                    {"kind": "byzantine", "node": fault.node, "behavior": fault.behavior}
                )
        delay: dict[str, object] = {"kind": self.delay.kind}
        if self.delay.kind == "fixed":
            delay["ticks"] = self.delay.min_ticks
        else:
            delay["min"] = self.delay.min_ticks
            delay["max"] = self.delay.max_ticks
        return {
            "seed": self.seed,
            "nodes": self.nodes,
            "faults": faults,
            "delayModel": delay,
            "workload": {"txCount": self.workload.tx_count, "mix": self.workload.mix_dict()},
            "maxTicks": self.max_ticks,
        }

    @classmethod
    def from_jsonable(cls, obj: object) -> "Scenario":
        if not isinstance(obj, dict):
            raise InvalidScenario("scenario must be a JSON object")
        try:
            seed = int(obj["seed"])
            nodes = int(obj["nodes"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidScenario(f"bad or missing scenario field: {exc}") from exc
        faults: list[Fault] = []
        for item in obj.get("faults", []):
            if not isinstance(item, dict) or "kind" not in item:
                raise InvalidScenario("each fault needs a 'kind'")
            try:
                if item["kind"] == "crash":
                    faults.append(CrashFault(int(item["node"]), int(item["atTick"])))
                elif item["kind"] == "partition":
                    faults.append(
                        PartitionFault(
                            tuple(int(n) for n in item["groupA"]),
                            tuple(int(n) for n in item["groupB"]),
                            int(item["fromTick"]),
                            int(item["toTick"]),
                        )
                    )
                elif item["kind"] == "byzantine":
                    faults.append(ByzantineFault(int(item["node"]), str(item["behavior"])))
                else:
                    raise InvalidScenario(f"unknown fault kind {item['kind']!r}")
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidScenario(f"bad fault entry: {exc}") from exc
        delay_obj = obj.get("delayModel", {"kind": "fixed", "ticks": 1})
        try:
            if delay_obj["kind"] == "fixed":
                ticks = int(delay_obj["ticks"])
                delay = DelayModel("fixed", ticks, ticks)
            else:
                delay = DelayModel(
                    str(delay_obj["kind"]), int(delay_obj["min"]), int(delay_obj["max"])
                )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidScenario(f"bad delayModel: {exc}") from exc
        workload_obj = obj.get("workload", {})
        mix_obj = workload_obj.get("mix", DEFAULT_MIX)
        if not isinstance(mix_obj, dict):
            raise InvalidScenario("workload.mix must be an object")
        try:
            workload = Workload(
                tx_count=int(workload_obj.get("txCount", 0)),
                mix=tuple(sorted((str(k), float(v)) for k, v in mix_obj.items())),
            )
        except (TypeError, ValueError) as exc:
            raise InvalidScenario(f"bad workload: {exc}") from exc
        scenario = cls(
            seed=seed,
            nodes=nodes,
            faults=tuple(faults),
            delay=delay,
            workload=workload,
            max_ticks=int(obj.get("maxTicks", 10_000)),
        )
        scenario.validate()
        return scenario


# --- deterministic key material and genesis --------------------------------


def _derive_seed(*parts: object) -> bytes:
    material = "/".join(str(p) for p in parts).encode()
    return hashlib.sha256(b"medledger/" + material).digest()


def sim_keypair(seed: int, label: str) -> crypto.KeyPair:
    return crypto.generate_keypair(_derive_seed("key", seed, label))


def sim_genesis(
    seed: int, nodes: int
) -> tuple[GenesisInfo, dict[int, crypto.KeyPair], crypto.KeyPair]:
    """Genesis file contents for a simulated cluster, fixed by the seed."""
    node_keys = {i: sim_keypair(seed, f"node{i}") for i in range(nodes)}
    admin_key = sim_keypair(seed, "admin")
    salt = _derive_seed("salt", seed, "admin")[:16]
    admin_login = {
        "user": SIM_ADMIN_USER,
        "pass": make_pass_field(SIM_ADMIN_PASSWORD, salt),
        "mob": "9000000000",
        "superset": "SYSTEM_ADMIN",
        "key": admin_key.public_hex,
    }
    data = encode_genesis(
        f"medledger-sim-{seed}",
        [(f"node{i}", node_keys[i].public_hex) for i in range(nodes)],
        [admin_login],
    )
    return load_genesis(data), node_keys, admin_key


# --- workload generation -------------------------------------------------


@dataclass
class _Account:
    user: str
    keypair: crypto.KeyPair


class _WorkloadBuilder:
    """Emits a dependency-ordered, fully valid transaction sequence.

    Each phase has prerequisites (a prescription needs a doctor login and a
    patient); when a phase is picked but blocked, the missing prerequisite
    is emitted instead and still counts toward the total, so the requested
    transaction count is always exact.
    """

    def __init__(self, seed: int, admin: crypto.KeyPair, workload: Workload):
        self.rng = random.Random(seed ^ 0x9E3779B97F4A7C15)
        self.admin = _Account(SIM_ADMIN_USER, admin)
        self.workload = workload
        self.seed = seed
        self.txs: list[Transaction] = []
        self.made = {phase: 0 for phase in WORKLOAD_PHASES}
        self.roles: dict[str, _Account] = {}
        self.patients: list[dict] = []  # payload docs
        self.insured_rx: list[tuple[str, str]] = []  # (visitId, phone)
        self.claims: list[tuple[str, str]] = []  # (claimId, status)
        self.counter = 0

    def _next_ts(self) -> int:
        return _TS_BASE + len(self.txs)

    def _emit(self, phase: str, kind: TxKind, payload: dict, account: _Account) -> Transaction:
        tx = make_transaction(kind, payload, account.user, account.keypair, self._next_ts())
        self.txs.append(tx)
        self.made[phase] += 1
        return tx

    def _role(self, name: str, superset: str) -> _Account:
        """Fetch a role account, creating its login tx on first use."""
        if name in self.roles:
            return self.roles[name]
        keypair = sim_keypair(self.seed, f"role/{name}")
        account = _Account(f"{name}.main", keypair)
        payload = {
            "user": account.user,
            "pass": make_pass_field(f"{name}-password", _derive_seed("salt", self.seed, name)[:16]),
            "mob": f"9{self.rng.randrange(10**9):09d}",
            "superset": superset,
            "key": keypair.public_hex,
        }
        self._emit("logins", TxKind.CREATE_LOGIN, payload, self.admin)
        self.roles[name] = account
        return account

    def _emit_login(self) -> None:
        self.counter += 1
        name = f"user{self.counter:06d}"
        keypair = sim_keypair(self.seed, f"login/{name}")
        payload = {
            "user": name,
            "pass": make_pass_field(f"{name}-pw", _derive_seed("salt", self.seed, name)[:16]),
            "mob": f"8{self.rng.randrange(10**9):09d}",
            "superset": "PATIENT",
            "key": keypair.public_hex,
        }
        self._emit("logins", TxKind.CREATE_LOGIN, payload, self.admin)

    def _emit_patient(self, *, insured: Optional[bool] = None) -> None:
        admin = self._role("hospital", "HOSPITAL_ADMIN")
        self.counter += 1
        if insured is None:
            insured = self.rng.random() < 0.7
        age = self.rng.randint(0, 99)
        ts = self._next_ts()
        dob = ts - age * _YEAR_MS - self.rng.randrange(_YEAR_MS // 2)
        name = "".join(self.rng.choice("abcdefghijklmnopqrstuvwxyz") for _ in range(10))
        payload = {
            "dbIdentifier": f"db-{self.counter:08d}",
            "name": f"pt-{name}",
            "gender": self.rng.choice(["female", "male", "other"]),
            "age": age,
            "dob": Timestamp(dob),
            "phone": str(7_000_000_000 + self.counter),
            "photo": "",
            "bloodgroup": self.rng.choice(sorted(BLOOD_GROUP_CHOICES)),
            "superset": "PATIENT",
            "docdetails": {"type": "general"},
            "allergies": self.rng.choice(["", "penicillin", "latex", "pollen"]),
            "insurance": f"policy-{self.counter:08d}" if insured else "",
        }
        self._emit("patients", TxKind.CREATE_PATIENT, payload, admin)
        self.patients.append(payload)

    def _emit_prescription(self, *, insured_target: bool = False) -> None:
        doctor = self._role("doctor", "DOCTOR")
        if not self.patients:
            self._emit_patient(insured=insured_target or None)
            return
        pool = [p for p in self.patients if p["insurance"]] if insured_target else self.patients
        if not pool:
            self._emit_patient(insured=True)
            return
        patient = self.rng.choice(pool)
        self.counter += 1
        visit_id = f"visit-{self.counter:08d}"
        payload = {
            "visitId": visit_id,
            "docname": "doctor.main",
            "patientnum": patient["phone"],
            "problem": self.rng.choice(["fever", "fracture", "migraine", "checkup"]),
            "prescription": self.rng.choice(["rest", "antibiotics", "physio", "scan"]),
            "billamt": self.rng.randrange(100, 100_000),
            "attachment": "",
        }
        self._emit("prescriptions", TxKind.CREATE_PRESCRIPTION, payload, doctor)
        if patient["insurance"]:
            self.insured_rx.append((visit_id, patient["phone"]))

    def _emit_claim(self) -> None:
        doctor = self._role("doctor", "DOCTOR")
        if not self.insured_rx:
            self._emit_prescription(insured_target=True)
            return
        visit_id, phone = self.rng.choice(self.insured_rx)
        payload = {"visitId": visit_id, "phone": phone}
        tx = self._emit("claims", TxKind.SUBMIT_CLAIM, payload, doctor)
        self.claims.append((tx.tx_id.hex, "Pending"))

    def _emit_review(self) -> None:
        reviewer = self._role("insurance", "INSURANCE_ADMIN")
        reviewable = [
            (i, cid, status)
            for i, (cid, status) in enumerate(self.claims)
            if status in ("Pending", "Approved")
        ]
        if not reviewable:
            self._emit_claim()
            return
        index, claim_id, status = self.rng.choice(reviewable)
        if status == "Pending":
            verdict = self.rng.choice(["Approve", "Revoke"])
        else:
            verdict = "Revoke"
        payload = {"claimId": claim_id, "verdict": verdict}
        self._emit("reviews", TxKind.REVIEW_CLAIM, payload, reviewer)
        self.claims[index] = (claim_id, "Approved" if verdict == "Approve" else "Revoked")

    def build(self) -> list[Transaction]:
        mix = self.workload.mix_dict()
        total_weight = sum(mix.values()) or 1.0
        targets = {
            phase: mix.get(phase, 0.0) / total_weight * self.workload.tx_count
            for phase in WORKLOAD_PHASES
        }
        emitters = {
            "logins": self._emit_login,
            "patients": self._emit_patient,
            "prescriptions": self._emit_prescription,
            "claims": self._emit_claim,
            "reviews": self._emit_review,
        }
        while len(self.txs) < self.workload.tx_count:
            deficits = [
                (targets[phase] - self.made[phase], WORKLOAD_PHASES.index(phase), phase)
                for phase in WORKLOAD_PHASES
            ]
            deficits.sort(key=lambda item: (-item[0], item[1]))
            phase = deficits[0][2]
            if deficits[0][0] <= 0:
                phase = "patients"
            emitters[phase]()
        return self.txs[: self.workload.tx_count]


BLOOD_GROUP_CHOICES = ("A+", "A-", "B+", "B-", "AB+", "AB-", "O+", "O-")


def generate_workload(seed: int, admin: crypto.KeyPair, workload: Workload) -> list[Transaction]:
    """Deterministic, dependency-ordered, fully valid transaction sequence."""
    return _WorkloadBuilder(seed, admin, workload).build()


# --- trace -----------------------------------------------------------------


@dataclass(frozen=True)
class TraceEntry:
    tick: int
    node: int
    kind: str
    digest_hex: str


@dataclass
class Trace:
    scenario: Scenario
    entries: list[TraceEntry]
    chains: dict[int, list[Block]]
    state_hashes: dict[int, str]
    honest_nodes: frozenset[int]
    crashed_nodes: frozenset[int]
    workload_tx_ids: frozenset[str]
    completed: bool
    end_tick: int
    evidence_counts: dict[int, int]
    # highest consensus round each node ever entered (liveness witness)
    max_rounds: dict[int, int] = field(default_factory=dict)

    def export_lines(self) -> list[str]:
        return [f"{e.tick}\t{e.node}\t{e.kind}\t{e.digest_hex}" for e in self.entries]

    def committed_between(self, from_tick: int, to_tick: int) -> list[TraceEntry]:
        return [
            e
            for e in self.entries
            if e.kind == "commit" and from_tick <= e.tick <= to_tick
        ]


@dataclass(frozen=True)
class AgreementReport:
    passed: bool
    heights_checked: int
    disagreements: tuple[tuple[int, tuple[tuple[str, tuple[int, ...]], ...]], ...]


def assert_agreement(trace: Trace) -> AgreementReport:
    """Check that no two honest nodes committed different blocks at a height."""
    by_height: dict[int, dict[str, list[int]]] = {}
    for node in sorted(trace.honest_nodes):
        for block in trace.chains.get(node, []):
            hashes = by_height.setdefault(block.height, {})
            hashes.setdefault(block_hash(block).hex, []).append(node)
    disagreements = []
    checked = 0
    for height in sorted(by_height):
        groups = by_height[height]
        reporters = sum(len(nodes) for nodes in groups.values())
        if reporters >= 2:
            checked += 1
        if len(groups) > 1:
            disagreements.append(
                (
                    height,
                    tuple(
                        (hash_hex, tuple(sorted(nodes)))
                        for hash_hex, nodes in sorted(groups.items())
                    ),
                )
            )
    return AgreementReport(
        passed=not disagreements,
        heights_checked=checked,
        disagreements=tuple(disagreements),
    )


# --- byzantine wrappers -----------------------------------------------------


class _ByzantineAdapter:
    """Mangles one node's outbound traffic per the scenario's behavior."""

    def __init__(self, behavior: str, keypair: crypto.KeyPair, replica: Replica):
        self.behavior = behavior
        self.keypair = keypair
        self.replica = replica

    def _resign(self, msg: Union[Proposal, Vote]) -> Union[Proposal, Vote]:
        from dataclasses import replace as _replace

        return _replace(msg, signature=crypto.sign(self.keypair, message_signing_bytes(msg)))

    def transform(
        self, msg: ConsensusMessage, recipients: list[int]
    ) -> list[tuple[int, ConsensusMessage]]:
        if self.behavior == "silent":
            return []
        if self.behavior == "equivocateProposals" and isinstance(msg, Proposal):
            variant_block = Block(
                height=msg.block.height,
                prev_hash=msg.block.prev_hash,
                txs=msg.block.txs[:-1],
                proposer=msg.block.proposer,
            )
            variant = Proposal(
                height=msg.height,
                round=msg.round,
                sender=msg.sender,
                block=variant_block,
                block_hash_hex=block_hash(variant_block).hex,
            )
            variant = self._resign(variant)
            return [
                (r, msg if index % 2 == 0 else variant)
                for index, r in enumerate(recipients)
            ]
        if self.behavior == "voteBothWays" and isinstance(msg, Vote):
            if msg.block_hash:
                other_hash = ""
            else:
                proposal = self.replica.ns.proposals.get(msg.round)
                if proposal is None:
                    return [(r, msg) for r in recipients]
                other_hash = proposal.block_hash_hex
            variant = self._resign(
                Vote(
                    height=msg.height,
                    round=msg.round,
                    vote_type=msg.vote_type,
                    sender=msg.sender,
                    block_hash=other_hash,
                )
            )
            return [
                (r, msg if index % 2 == 0 else variant)
                for index, r in enumerate(recipients)
            ]
        return [(r, msg) for r in recipients]


# --- the simulator --------------------------------------------------------


def _msg_trace_digest(msg: ConsensusMessage) -> str:
    """Cheap identifying digest for the trace log.

    Blocks are identified by their hash rather than re-encoded in full, so
    tracing stays O(1) per message.
    """
    if isinstance(msg, Proposal):
        doc: dict = {"b": msg.block_hash_hex, "h": msg.height, "r": msg.round, "s": msg.sender, "t": "proposal"}
    elif isinstance(msg, Vote):
        doc = {"b": msg.block_hash, "h": msg.height, "r": msg.round, "s": msg.sender, "t": msg.vote_type}
    else:
        doc = {"b": block_hash(msg.block).hex, "h": msg.height, "s": msg.sender, "t": "commit"}
    return digest_hex(encode_canonical(doc))


def _msg_kind(msg: ConsensusMessage) -> str:
    if isinstance(msg, Proposal):
        return "proposal"
    if isinstance(msg, Vote):
        return msg.vote_type
    return "commit"


class _Sim:
    def __init__(self, scenario: Scenario):
        scenario.validate()
        self.scenario = scenario
        self.rng = random.Random(scenario.seed)
        genesis, node_keys, admin_key = sim_genesis(scenario.seed, scenario.nodes)
        self.replicas = {
            i: Replica(f"node{i}", node_keys[i], genesis) for i in range(scenario.nodes)
        }
        self.workload = generate_workload(scenario.seed, admin_key, scenario.workload)
        self.workload_ids = frozenset(tx.tx_id.hex for tx in self.workload)
        for replica in self.replicas.values():
            for tx in self.workload:
                replica.pending[tx.tx_id.hex] = tx

        self.byzantine: dict[int, _ByzantineAdapter] = {}
        self.crash_at: dict[int, int] = {}
        self.partitions: list[PartitionFault] = []
        for fault in scenario.faults:
            if isinstance(fault, ByzantineFault):
                self.byzantine[fault.node] = _ByzantineAdapter(
                    fault.behavior, node_keys[fault.node], self.replicas[fault.node]
                )
            elif isinstance(fault, CrashFault):
                previous = self.crash_at.get(fault.node)
                self.crash_at[fault.node] = (
                    fault.at_tick if previous is None else min(previous, fault.at_tick)
                )
            else:
                self.partitions.append(fault)

        self.honest = frozenset(range(scenario.nodes)) - frozenset(self.byzantine)
        self.crashed: set[int] = set()
        self.heap: list[tuple[int, int, int, str, object]] = []
        self.seq = 0
        self.entries: list[TraceEntry] = []
        self.end_tick = 0
        self.max_rounds = {i: 0 for i in range(scenario.nodes)}

    def _schedule(self, tick: int, node: int, kind: str, payload: object) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (tick, node, self.seq, kind, payload))

    def _log(self, tick: int, node: int, kind: str, digest_value: str) -> None:
        self.entries.append(TraceEntry(tick, node, kind, digest_value))

    def _partitioned(self, sender: int, recipient: int, tick: int) -> bool:
        for cut in self.partitions:
            if not cut.from_tick <= tick < cut.to_tick:
                continue
            in_a = sender in cut.group_a
            in_b = sender in cut.group_b
            r_in_a = recipient in cut.group_a
            r_in_b = recipient in cut.group_b
            if (in_a and r_in_b) or (in_b and r_in_a):
                return True
        return False

    def _fanout(self, sender: int, tick: int, msg: ConsensusMessage) -> None:
        recipients = list(range(self.scenario.nodes))
        adapter = self.byzantine.get(sender)
        if adapter is not None:
            pairs = adapter.transform(msg, recipients)
        else:
            pairs = [(r, msg) for r in recipients]
        for recipient, variant in pairs:
            if recipient != sender and self._partitioned(sender, recipient, tick):
                continue
            delay = 0 if recipient == sender else self.scenario.delay.sample(self.rng)
            self._schedule(tick + delay, recipient, "deliver", variant)

    def _process_output(self, node: int, tick: int, output: ReplicaOutput) -> None:
        for block in output.committed:
            self._log(tick, node, "commit", block_hash(block).hex)
        for _ in range(output.new_evidence):
            self._log(tick, node, "evidence", "0" * 64)
        if output.timer is not None:
            timer = output.timer
            delay = BASE_TIMEOUT_TICKS * (1 + timer.round)
            self._schedule(tick + delay, node, "timeout", timer)
        for msg in output.messages:
            self._fanout(node, tick, msg)

    def _workload_done(self) -> bool:
        if not self.workload_ids:
            return True
        live_honest = [n for n in self.honest if n not in self.crashed]
        if not live_honest:
            return False
        return all(
            self.workload_ids <= self.replicas[n].committed_tx_ids for n in live_honest
        )

    def run(self) -> Trace:
        for node, at_tick in sorted(self.crash_at.items()):
            self._schedule(at_tick, node, "crash", None)
        for node in range(self.scenario.nodes):
            self._schedule(0, node, "start", None)

        done = False
        while self.heap and not done:
            tick, node, _seq, kind, payload = heapq.heappop(self.heap)
            if tick > self.scenario.max_ticks:
                break
            self.end_tick = tick
            if kind == "crash":
                self.crashed.add(node)
                self._log(tick, node, "crash", "0" * 64)
                continue
            if node in self.crashed:
                continue
            replica = self.replicas[node]
            if kind == "start":
                output = replica.start()
            elif kind == "timeout":
                timer = payload
                assert isinstance(timer, Timeout)
                self._log(
                    tick,
                    node,
                    "timeout",
                    digest_hex(
                        encode_canonical(
                            {"h": timer.height, "r": timer.round, "s": timer.step.value}
                        )
                    ),
                )
                output = replica.deliver_timeout(timer)
            else:
                msg = payload
                assert isinstance(msg, (Proposal, Vote, CommitCertificate))
                self._log(tick, node, f"recv:{_msg_kind(msg)}", _msg_trace_digest(msg))
                output = replica.deliver(msg)
            self._process_output(node, tick, output)
            self.max_rounds[node] = max(self.max_rounds[node], replica.ns.round)
            if output.committed and self._workload_done():
                done = True

        return Trace(
            scenario=self.scenario,
            entries=self.entries,
            chains={i: r.committed_blocks() for i, r in self.replicas.items()},
            state_hashes={i: r.state_hash.hex for i, r in self.replicas.items()},
            honest_nodes=self.honest,
            crashed_nodes=frozenset(self.crashed),
            workload_tx_ids=self.workload_ids,
            completed=self._workload_done(),
            end_tick=self.end_tick,
            evidence_counts={i: len(r.ns.evidence) for i, r in self.replicas.items()},
            max_rounds=dict(self.max_rounds),
        )


def run(scenario: Scenario) -> Trace:
    """Execute a scenario; bit-identical output for identical scenarios."""
    return _Sim(scenario).run()
