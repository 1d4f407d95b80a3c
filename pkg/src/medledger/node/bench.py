"""Throughput benchmark over the in-process four-node simulation.

Measures committed transactions per wall-clock second across the whole
pipeline: validation, proposal, votes, quorum formation, and block
application on every node. The workload is schema-validated signed
transactions generated ahead of the timed region (signing is client work).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from ..simnet import DelayModel, Scenario, Trace, Workload, assert_agreement, run


@dataclass(frozen=True)
class BenchResult:
    tx_count: int
    nodes: int
    elapsed_s: float
    tx_per_s: float
    blocks: int
    completed: bool
    agreement: bool
    state_hashes_equal: bool

    def summary(self) -> str:
        return (
            f"{self.tx_count} txs over {self.nodes} nodes in {self.elapsed_s:.2f}s "
            f"-> {self.tx_per_s:.0f} tx/s ({self.blocks} blocks, "
            f"completed={self.completed}, agreement={self.agreement})"
        )


def run_bench(tx_count: int = 10_000, nodes: int = 4, seed: int = 320) -> BenchResult:
    scenario = Scenario(
        seed=seed,
        nodes=nodes,
        delay=DelayModel("fixed", 1, 1),
        workload=Workload(tx_count),
        max_ticks=max(10_000, tx_count * 10),
    )
    started = time.perf_counter()
    trace: Trace = run(scenario)
    elapsed = time.perf_counter() - started
    hashes = {trace.state_hashes[n] for n in trace.honest_nodes}
    return BenchResult(
        tx_count=tx_count,
        nodes=nodes,
        elapsed_s=elapsed,
        tx_per_s=tx_count / elapsed if elapsed > 0 else 0.0,
        blocks=len(trace.chains[0]),
        completed=trace.completed,
        agreement=assert_agreement(trace).passed,
        state_hashes_equal=len(hashes) == 1,
    )
