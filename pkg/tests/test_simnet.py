import json

import pytest

from medledger.chain import block_hash
from medledger.errors import InvalidScenario
from medledger.ledger import apply_block, initial_state
from medledger.simnet import (
    ByzantineFault,
    CrashFault,
    DelayModel,
    PartitionFault,
    Scenario,
    Trace,
    Workload,
    assert_agreement,
    generate_workload,
    run,
    sim_genesis,
)


def _scenario(**kwargs):
    defaults = dict(seed=1, nodes=4, workload=Workload(40), max_ticks=10_000)
    defaults.update(kwargs)
    return Scenario(**defaults)


# --- scenario validation ----------------------------------------------------


def test_scenario_validation_errors():
    with pytest.raises(InvalidScenario):
        _scenario(nodes=0).validate()
    with pytest.raises(InvalidScenario):
        _scenario(max_ticks=0).validate()
    with pytest.raises(InvalidScenario):
        _scenario(faults=(CrashFault(9, 0),)).validate()
    with pytest.raises(InvalidScenario):
        _scenario(faults=(PartitionFault((0,), (1,), 10, 5),)).validate()
    with pytest.raises(InvalidScenario):
        _scenario(faults=(PartitionFault((0, 1), (1, 2), 0, 5),)).validate()
    with pytest.raises(InvalidScenario):
        _scenario(faults=(ByzantineFault(0, "teleport"),)).validate()
    with pytest.raises(InvalidScenario):
        _scenario(delay=DelayModel("uniform", 5, 2)).validate()
    with pytest.raises(InvalidScenario):
        _scenario(workload=Workload(10, (("bogus", 1.0),))).validate()


def test_scenario_jsonable_round_trip():
    scenario = _scenario(
        faults=(
            CrashFault(3, 7),
            PartitionFault((0, 1), (2, 3), 5, 50),
            ByzantineFault(2, "voteBothWays"),
        ),
        delay=DelayModel("uniform", 1, 5),
    )
    encoded = json.dumps(scenario.to_jsonable())
    assert Scenario.from_jsonable(json.loads(encoded)) == scenario


# --- workload generation ----------------------------------------------------


def test_workload_exact_count_and_all_valid():
    genesis, node_keys, admin = sim_genesis(17, 4)
    txs = generate_workload(17, admin, Workload(120))
    assert len(txs) == 120
    # the whole sequence must commit as consecutive blocks
    from medledger.chain import Block

    state = initial_state(genesis)
    for start_index in range(0, len(txs), 50):
        chunk = tuple(txs[start_index : start_index + 50])
        block = Block(
            height=state.height + 1, prev_hash=state.tip_hash, txs=chunk, proposer="node0"
        )
        state = apply_block(state, block, verify_qc=False)
    assert len(state.seen_tx_ids) == 120
    kinds = {tx.kind.value for tx in txs}
    assert "CreatePatient" in kinds and "CreatePrescription" in kinds


def test_workload_deterministic():
    _, _, admin = sim_genesis(23, 4)
    first = generate_workload(23, admin, Workload(60))
    second = generate_workload(23, admin, Workload(60))
    assert [tx.tx_id for tx in first] == [tx.tx_id for tx in second]


# --- fault-free replication ---------------------------------------------


def test_fault_free_run_replicates_identically():
    trace = run(_scenario(workload=Workload(100)))
    assert trace.completed
    hashes = {block_hash(b).hex for b in trace.chains[0]}
    for node in range(1, 4):
        assert [block_hash(b) for b in trace.chains[node]] == [
            block_hash(b) for b in trace.chains[0]
        ]
    assert len(set(trace.state_hashes.values())) == 1
    assert hashes  # something committed
    assert assert_agreement(trace).passed


def test_single_node_cluster_commits_alone():
    trace = run(_scenario(nodes=1, workload=Workload(10)))
    assert trace.completed
    assert len(trace.chains[0]) >= 1


# --- crash faults -------------------------------------------------------------


def test_one_crash_of_four_still_commits_everything():
    trace = run(_scenario(faults=(CrashFault(3, 0),), workload=Workload(100)))
    assert trace.completed
    live = sorted(trace.honest_nodes - trace.crashed_nodes)
    assert live == [0, 1, 2]
    assert len({trace.state_hashes[n] for n in live}) == 1


def test_two_crashes_of_four_halt_the_network():
    trace = run(
        _scenario(
            faults=(CrashFault(2, 0), CrashFault(3, 0)),
            workload=Workload(50),
            max_ticks=20_000,
        )
    )
    assert not trace.completed
    assert trace.committed_between(0, trace.scenario.max_ticks) == []
    assert all(len(chain) == 0 for chain in trace.chains.values())


def test_mid_run_crash_preserves_agreement():
    trace = run(_scenario(faults=(CrashFault(1, 40),), workload=Workload(200)))
    assert assert_agreement(trace).passed
    assert trace.completed


def test_liveness_within_ten_rounds_at_the_fault_boundary():
    """With exactly f crashed nodes and bounded delay, every height commits
    without the cluster ever climbing past round 10."""
    trace = run(
        _scenario(
            seed=64,
            faults=(CrashFault(1, 0),),
            delay=DelayModel("uniform", 1, 4),
            workload=Workload(250),
        )
    )
    assert trace.completed
    for node in trace.honest_nodes - trace.crashed_nodes:
        assert trace.max_rounds[node] <= 10, trace.max_rounds


def test_crash_monotonicity():
    """Adding a crash fault can stall progress but never break agreement."""
    base = _scenario(seed=33, workload=Workload(80))
    crashed = _scenario(seed=33, workload=Workload(80), faults=(CrashFault(0, 15),))
    for scenario in (base, crashed):
        trace = run(scenario)
        assert assert_agreement(trace).passed
    assert run(base).completed


# --- byzantine faults -----------------------------------------------------


@pytest.mark.parametrize("behavior", ["equivocateProposals", "voteBothWays", "silent"])
def test_byzantine_behaviors_never_break_agreement(behavior):
    for seed in range(4):
        trace = run(
            _scenario(
                seed=seed,
                faults=(ByzantineFault(1, behavior),),
                workload=Workload(30),
                max_ticks=30_000,
            )
        )
        report = assert_agreement(trace)
        assert report.passed, f"{behavior} seed {seed}: {report.disagreements}"


def test_equivocation_leaves_evidence():
    # node1 proposes height 1 round 0, so its split proposals reach everyone
    # through the one-shot proposal gossip and get recorded as evidence
    found = False
    for seed in range(8):
        trace = run(
            _scenario(
                seed=seed,
                faults=(ByzantineFault(1, "equivocateProposals"),),
                workload=Workload(30),
                max_ticks=30_000,
            )
        )
        if any(count > 0 for node, count in trace.evidence_counts.items() if node != 1):
            found = True
            break
    assert found, "equivocating proposer never detected across 8 seeds"


# --- partitions --------------------------------------------------------------


def test_partition_blocks_progress_then_heals():
    # minority partition 2/2: no quorum on either side while the cut is open
    trace = run(
        _scenario(
            faults=(PartitionFault((0, 1), (2, 3), 0, 400),),
            workload=Workload(30),
            max_ticks=30_000,
        )
    )
    assert trace.committed_between(0, 399) == []
    assert trace.completed  # network healed, everything commits
    assert assert_agreement(trace).passed


# --- reproducibility and seed sensitivity ----------------------------------


def test_runs_are_bit_identical_for_a_fixed_seed():
    scenario = _scenario(
        seed=91,
        delay=DelayModel("uniform", 1, 5),
        faults=(ByzantineFault(2, "voteBothWays"), CrashFault(3, 120)),
        workload=Workload(50),
        max_ticks=30_000,
    )
    first, second = run(scenario), run(scenario)
    assert first.entries == second.entries
    assert first.state_hashes == second.state_hashes
    assert [
        [block_hash(b) for b in first.chains[n]] for n in sorted(first.chains)
    ] == [[block_hash(b) for b in second.chains[n]] for n in sorted(second.chains)]


def test_seed_sensitivity_preserves_agreement():
    for seed in range(10):
        trace = run(
            _scenario(
                seed=seed,
                delay=DelayModel("uniform", 1, 6),
                faults=(CrashFault(2, 25),),
                workload=Workload(40),
                max_ticks=30_000,
            )
        )
        assert assert_agreement(trace).passed


# --- trace export and the agreement checker ---------------------------------


def test_trace_export_line_format():
    trace = run(_scenario(workload=Workload(10)))
    lines = trace.export_lines()
    assert lines
    for line in lines:
        tick, node, kind, digest_hex = line.split("\t")
        assert tick.isdigit() and node.isdigit()
        assert kind
        assert len(digest_hex) == 64


def test_agreement_checker_flags_forged_disagreement():
    trace = run(_scenario(workload=Workload(10)))
    real_block = trace.chains[0][0]
    from dataclasses import replace

    forged = replace(real_block, proposer="node9")  # different hash, same height
    tampered = Trace(
        scenario=trace.scenario,
        entries=trace.entries,
        chains={**trace.chains, 2: [forged]},
        state_hashes=trace.state_hashes,
        honest_nodes=trace.honest_nodes,
        crashed_nodes=trace.crashed_nodes,
        workload_tx_ids=trace.workload_tx_ids,
        completed=trace.completed,
        end_tick=trace.end_tick,
        evidence_counts=trace.evidence_counts,
    )
    report = assert_agreement(tampered)
    assert not report.passed
    assert report.disagreements[0][0] == real_block.height
