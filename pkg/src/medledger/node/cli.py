"""Command-line interface: node control, simulations, and API clients.

Usage errors exit 2 (click's convention); operational failures exit 1 with
the API's machine-readable error code when one is available.
"""

from __future__ import annotations

import asyncio
import json
import secrets
import sys
import time
from pathlib import Path

import click
import httpx

from .. import crypto
from ..chain import TxKind, make_transaction, tx_doc
from ..codec import to_jsonable
from ..errors import MedledgerError
from ..ledger import encode_genesis, load_genesis
from ..records import make_pass_field
from ..simnet import Scenario, assert_agreement
from ..simnet import run as run_scenario
from .bench import run_bench
from .config import config_path_from_env, load_config

THROUGHPUT_FLOOR_TX_S = 320  # the published per-second processing figure


def _fail(message: str) -> "click.ClickException":
    return click.ClickException(message)


def _api_error(response: httpx.Response) -> "click.ClickException":
    try:
        error = response.json()["error"]
        return _fail(f"{error['code']}: {error['message']}")
    except Exception:
        return _fail(f"HTTP {response.status_code}: {response.text[:200]}")


def _client(api: str) -> httpx.Client:
    return httpx.Client(base_url=api, timeout=30.0)


def _token(client: httpx.Client, user: str, password: str) -> str:
    response = client.post("/login", json={"user": user, "pass": password})
    if response.status_code != 200:
        raise _api_error(response)
    return response.json()["token"]


def _auth(token: str) -> dict:
    return {"Authorization": f"Bearer {token}"}


def _now_ms() -> int:
    return int(time.time() * 1000)


def _signed_tx_json(kind: TxKind, payload: dict, user: str, seed_hex: str) -> dict:
    try:
        keypair = crypto.generate_keypair(bytes.fromhex(seed_hex))
    except (ValueError, MedledgerError) as exc:
        raise _fail(f"bad key seed: {exc}") from exc
    tx = make_transaction(kind, payload, user, keypair, _now_ms())
    return to_jsonable(tx_doc(tx))


@click.group()
def main() -> None:
    """medledger: a permissioned medical-records ledger."""


# --- keys and genesis ------------------------------------------------------


@main.command()
@click.option("--seed", "seed_hex", help="32-byte hex seed; random when omitted.")
@click.option("--out", type=click.Path(dir_okay=False), help="write '<seed>\\n<public>' here")
def keygen(seed_hex: str | None, out: str | None) -> None:
    """Generate an Ed25519 key pair."""
    seed = bytes.fromhex(seed_hex) if seed_hex else secrets.token_bytes(32)
    try:
        keypair = crypto.generate_keypair(seed)
    except MedledgerError as exc:
        raise _fail(str(exc)) from exc
    if out:
        Path(out).write_text(f"{seed.hex()}\n{keypair.public_hex}\n")
        click.echo(f"public: {keypair.public_hex}")
        click.echo(f"key file: {out}")
    else:
        click.echo(f"seed:   {seed.hex()}")
        click.echo(f"public: {keypair.public_hex}")


@main.group()
def genesis() -> None:
    """Genesis file tools."""


@genesis.command("create")
@click.option("--chain-id", required=True)
@click.option(
    "--validator",
    "validators",
    multiple=True,
    required=True,
    help="nodeId=publicKeyHex, repeatable",
)
@click.option("--admin-user", required=True)
@click.option("--admin-password", required=True)
@click.option("--admin-key", required=True, help="admin login public key, hex")
@click.option("--admin-mob", default="9000000000")
@click.option("--salt-hex", help="16-byte hex; random when omitted")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def genesis_create(
    chain_id: str,
    validators: tuple[str, ...],
    admin_user: str,
    admin_password: str,
    admin_key: str,
    admin_mob: str,
    salt_hex: str | None,
    out: str,
) -> None:
    """Write a canonical genesis file."""
    pairs = []
    for item in validators:
        node_id, _, public_hex = item.partition("=")
        if not node_id or len(public_hex) != 64:
            raise _fail(f"bad --validator {item!r}, expected nodeId=64hex")
        pairs.append((node_id, public_hex))
    salt = bytes.fromhex(salt_hex) if salt_hex else secrets.token_bytes(16)
    login = {
        "user": admin_user,
        "pass": make_pass_field(admin_password, salt),
        "mob": admin_mob,
        "superset": "SYSTEM_ADMIN",
        "key": admin_key,
    }
    data = encode_genesis(chain_id, pairs, [login])
    try:
        info = load_genesis(data)
    except MedledgerError as exc:
        raise _fail(str(exc)) from exc
    Path(out).write_bytes(data)
    click.echo(f"genesis hash: {info.genesis_hash.hex}")
    click.echo(f"written: {out}")


# --- node ------------------------------------------------------------------


@main.group()
def node() -> None:
    """Run a node."""


@node.command("start")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def node_start(config_path: str | None) -> None:
    """Start a live node (config from --config or $MEDLEDGER_CONFIG)."""
    path = config_path or config_path_from_env()
    if not path:
        raise _fail("no config: pass --config or set MEDLEDGER_CONFIG")
    import uvicorn

    from .api import create_app
    from .service import NodeService

    try:
        config = load_config(path)
        genesis_info = load_genesis(Path(config.genesis_path).read_bytes())
        seed_hex = Path(config.key_path).read_text().split()[0]
        keypair = crypto.generate_keypair(bytes.fromhex(seed_hex))
        service = NodeService(config, genesis_info, keypair)
    except (MedledgerError, OSError, ValueError) as exc:
        raise _fail(str(exc)) from exc

    async def serve() -> None:
        await service.start()
        server = uvicorn.Server(
            uvicorn.Config(
                create_app(service),
                host=config.api_host,
                port=config.api_port,
                log_level="warning",
            )
        )
        click.echo(f"node {config.node_id} api on {config.api_host}:{config.api_port}")
        await server.serve()
        await service.stop()

    asyncio.run(serve())


# --- simulation --------------------------------------------------------------


@main.group()
def sim() -> None:
    """Deterministic network simulations."""


@sim.command("run")
@click.argument("scenario_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False), help="write trace lines")
def sim_run(scenario_file: str, trace_path: str | None) -> None:
    """Run a scenario file and report per-node results."""
    try:
        scenario = Scenario.from_jsonable(json.loads(Path(scenario_file).read_text()))
        trace = run_scenario(scenario)
    except (MedledgerError, ValueError) as exc:
        raise _fail(str(exc)) from exc
    commits = [e for e in trace.entries if e.kind == "commit"]
    report = assert_agreement(trace)
    click.echo(f"scenario: seed={scenario.seed} nodes={scenario.nodes} txs={scenario.workload.tx_count}")
    click.echo(f"ended at tick {trace.end_tick}; commit events: {len(commits)}")
    for node_id in sorted(trace.chains):
        flags = []
        if node_id in trace.crashed_nodes:
            flags.append("crashed")
        if node_id not in trace.honest_nodes:
            flags.append("byzantine")
        suffix = f" ({', '.join(flags)})" if flags else ""
        click.echo(
            f"  node{node_id}: height={len(trace.chains[node_id])} "
            f"stateHash={trace.state_hashes[node_id][:16]}..{suffix}"
        )
    click.echo(f"workload committed by all live honest nodes: {trace.completed}")
    click.echo(f"agreement: {'pass' if report.passed else 'FAIL'}")
    if trace_path:
        Path(trace_path).write_text("\n".join(trace.export_lines()) + "\n")
        click.echo(f"trace written: {trace_path}")
    if not report.passed:
        sys.exit(1)


# --- API clients ------------------------------------------------------------

_API = click.option("--api", default="http://127.0.0.1:8440", show_default=True)
_USER = click.option("--user", required=True)
_PASSWORD = click.option("--password", required=True)


@main.group()
def patient() -> None:
    """Patient queries."""


@patient.command("get")
@click.argument("phone")
@_API
@_USER
@_PASSWORD
def patient_get(phone: str, api: str, user: str, password: str) -> None:
    """Fetch the full history chained to a phone number."""
    with _client(api) as client:
        response = client.get(f"/patients/{phone}", headers=_auth(_token(client, user, password)))
        if response.status_code != 200:
            raise _api_error(response)
        click.echo(json.dumps(response.json(), indent=2))


@main.group()
def tx() -> None:
    """Raw transaction submission."""


@tx.command("submit")
@click.argument("tx_file", type=click.Path(exists=True, dir_okay=False))
@_API
def tx_submit(tx_file: str, api: str) -> None:
    """Submit a signed transaction JSON file."""
    body = json.loads(Path(tx_file).read_text())
    with _client(api) as client:
        response = client.post("/tx", json=body)
        if response.status_code != 202:
            raise _api_error(response)
        click.echo(response.json()["txId"])


@main.command()
@click.argument("age_min", type=int)
@click.argument("age_max", type=int)
@_API
@_USER
@_PASSWORD
def research(age_min: int, age_max: int, api: str, user: str, password: str) -> None:
    """Anonymized rows for an age range."""
    with _client(api) as client:
        response = client.get(
            "/research",
            params={"min": age_min, "max": age_max},
            headers=_auth(_token(client, user, password)),
        )
        if response.status_code != 200:
            raise _api_error(response)
        payload = response.json()
        click.echo(json.dumps(payload, indent=2))


@main.command()
@click.argument("bloodgroup")
@_API
@_USER
@_PASSWORD
def donors(bloodgroup: str, api: str, user: str, password: str) -> None:
    """Search donors by blood group; queues one notification per match."""
    with _client(api) as client:
        response = client.get(
            f"/donors/{bloodgroup}", headers=_auth(_token(client, user, password))
        )
        if response.status_code != 200:
            raise _api_error(response)
        payload = response.json()
        click.echo(json.dumps(payload, indent=2))


@main.group()
def claim() -> None:
    """Insurance claims."""


@claim.command("submit")
@click.option("--visit", required=True)
@click.option("--phone", required=True)
@_USER
@click.option("--key-seed", required=True, help="signer's 32-byte hex seed")
@_API
def claim_submit(visit: str, phone: str, user: str, key_seed: str, api: str) -> None:
    """Sign and submit a claim for a visit."""
    body = _signed_tx_json(TxKind.SUBMIT_CLAIM, {"visitId": visit, "phone": phone}, user, key_seed)
    with _client(api) as client:
        response = client.post("/claims", json=body)
        if response.status_code != 202:
            raise _api_error(response)
        click.echo(response.json()["txId"])


@claim.command("review")
@click.argument("claim_id")
@click.option("--verdict", type=click.Choice(["approve", "revoke"]), required=True)
@_USER
@click.option("--key-seed", required=True)
@_API
def claim_review(claim_id: str, verdict: str, user: str, key_seed: str, api: str) -> None:
    """Sign and submit an approve/revoke review."""
    body = _signed_tx_json(
        TxKind.REVIEW_CLAIM,
        {"claimId": claim_id, "verdict": verdict.capitalize()},
        user,
        key_seed,
    )
    with _client(api) as client:
        response = client.post(f"/claims/{claim_id}/review", json=body)
        if response.status_code != 202:
            raise _api_error(response)
        click.echo(response.json()["txId"])


@main.group()
def blob() -> None:
    """Content-addressed document storage."""


@blob.command("put")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--media-type", type=click.Choice(["pdf", "png", "jpg"]), required=True)
@_API
@_USER
@_PASSWORD
@click.option("--key-seed", help="also record a PutBlobRef tx signed with this seed")
def blob_put(file: str, media_type: str, api: str, user: str, password: str, key_seed: str | None) -> None:
    """Upload a document; prints its content hash."""
    data = Path(file).read_bytes()
    with _client(api) as client:
        token = _token(client, user, password)
        response = client.post(
            "/blobs",
            content=data,
            headers={**_auth(token), "X-Media-Type": media_type},
        )
        if response.status_code != 201:
            raise _api_error(response)
        blob_hash = response.json()["hash"]
        click.echo(blob_hash)
        if key_seed:
            body = _signed_tx_json(
                TxKind.PUT_BLOB_REF,
                {"hash": blob_hash, "mediaType": media_type, "size": len(data)},
                user,
                key_seed,
            )
            tx_response = client.post("/tx", json=body)
            if tx_response.status_code != 202:
                raise _api_error(tx_response)
            click.echo(f"ledger ref tx: {tx_response.json()['txId']}")


@blob.command("get")
@click.argument("hash_hex")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@_API
@_USER
@_PASSWORD
def blob_get(hash_hex: str, out: str, api: str, user: str, password: str) -> None:
    """Download a document by content hash."""
    with _client(api) as client:
        response = client.get(f"/blobs/{hash_hex}", headers=_auth(_token(client, user, password)))
        if response.status_code != 200:
            raise _api_error(response)
        Path(out).write_bytes(response.content)
        click.echo(f"written: {out} ({len(response.content)} bytes)")


# --- bench -----------------------------------------------------------------


@main.command()
@click.option("--txs", default=10_000, show_default=True)
@click.option("--nodes", default=4, show_default=True)
@click.option("--seed", default=320, show_default=True)
@click.option(
    "--min-rate",
    type=float,
    default=None,
    help=f"fail below this tx/s (the published floor is {THROUGHPUT_FLOOR_TX_S})",
)
def bench(txs: int, nodes: int, seed: int, min_rate: float | None) -> None:
    """Measure end-to-end throughput on an in-process cluster."""
    result = run_bench(tx_count=txs, nodes=nodes, seed=seed)
    click.echo(result.summary())
    if not (result.completed and result.agreement and result.state_hashes_equal):
        raise _fail("benchmark run did not replicate cleanly")
    if min_rate is not None and result.tx_per_s < min_rate:
        raise _fail(f"{result.tx_per_s:.0f} tx/s is below the floor of {min_rate:.0f}")


if __name__ == "__main__":
    main()
