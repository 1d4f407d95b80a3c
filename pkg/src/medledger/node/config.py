"""Node configuration: a JSON file, path given by --config or MEDLEDGER_CONFIG."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from ..errors import InvariantViolation, MissingField

ENV_CONFIG = "MEDLEDGER_CONFIG"

MIN_LIVE_VALIDATORS = 4


@dataclass(frozen=True)
class PeerConfig:
    node_id: str
    host: str
    port: int


@dataclass(frozen=True)
class NodeConfig:
    node_id: str
    api_host: str
    api_port: int
    consensus_host: str
    consensus_port: int
    genesis_path: str
    key_path: str
    blob_dir: str
    peers: tuple[PeerConfig, ...] = ()
    timeout_base_ms: int = 500
    max_block_txs: int = 100
    max_blob_size: int = 16 * 1024 * 1024
    mode: str = "live"
    # small clusters lose the f>=1 fault margin; opt in explicitly for tests
    allow_small_cluster: bool = False
    session_ttl_s: int = 3600


def load_config(path: str | os.PathLike) -> NodeConfig:
    data = json.loads(Path(path).read_text())
    for key in ("nodeId", "apiListen", "consensusListen", "genesisPath", "keyPath", "blobDir"):
        if key not in data:
            raise MissingField(key)
    api_host, api_port = _split_addr(data["apiListen"])
    consensus_host, consensus_port = _split_addr(data["consensusListen"])
    peers = tuple(
        PeerConfig(p["nodeId"], *_split_addr(p["address"])) for p in data.get("peers", [])
    )
    mode = data.get("mode", "live")
    if mode not in ("live", "sim"):
        raise InvariantViolation("mode", "must be 'live' or 'sim'")
    base = Path(path).parent
    return NodeConfig(
        node_id=data["nodeId"],
        api_host=api_host,
        api_port=api_port,
        consensus_host=consensus_host,
        consensus_port=consensus_port,
        genesis_path=str((base / data["genesisPath"]).resolve()),
        key_path=str((base / data["keyPath"]).resolve()),
        blob_dir=str((base / data["blobDir"]).resolve()),
        peers=peers,
        timeout_base_ms=int(data.get("timeoutBaseMs", 500)),
        max_block_txs=int(data.get("maxBlockTxs", 100)),
        max_blob_size=int(data.get("maxBlobSize", 16 * 1024 * 1024)),
        mode=mode,
        allow_small_cluster=bool(data.get("allowSmallCluster", False)),
        session_ttl_s=int(data.get("sessionTtlS", 3600)),
    )


def config_path_from_env() -> str | None:
    return os.environ.get(ENV_CONFIG)


def _split_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise InvariantViolation("address", f"expected host:port, got {addr!r}")
    return host, int(port)
