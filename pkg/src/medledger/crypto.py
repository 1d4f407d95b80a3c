"""Ed25519 key generation, transaction signing, and verification.

Ed25519 is the project-wide signature scheme: 32-byte public keys and
64-byte deterministic signatures (RFC 8032), so signing the same message
with the same key is reproducible on every node and in every test run.
Private keys are held as their 32-byte seed and never serialized into
documents; keys and signatures render as lowercase hex everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import ed25519

from .errors import BadSeedLength

SEED_SIZE = 32
PUBLIC_KEY_SIZE = 32
SIGNATURE_SIZE = 64

_RAW = serialization.Encoding.Raw
_RAW_PUB = serialization.PublicFormat.Raw


@dataclass(frozen=True)
class KeyPair:
    """An Ed25519 seed with its derived public key.

    The backend signer object is cached so repeated signing does not re-parse
    the seed; it is excluded from equality.
    """

    seed: bytes
    public_key: bytes
    signer: ed25519.Ed25519PrivateKey = field(repr=False, compare=False)

    @property
    def public_hex(self) -> str:
        return self.public_key.hex()


def generate_keypair(seed: bytes) -> KeyPair:
    """Derive the key pair for a 32-byte seed. Deterministic by construction."""
    if not isinstance(seed, bytes) or len(seed) != SEED_SIZE:
        raise BadSeedLength(f"seed must be {SEED_SIZE} bytes")
    signer = ed25519.Ed25519PrivateKey.from_private_bytes(seed)
    public = signer.public_key().public_bytes(_RAW, _RAW_PUB)
    return KeyPair(seed=seed, public_key=public, signer=signer)


def sign(keypair: KeyPair, message: bytes) -> bytes:
    """Sign a message; always 64 bytes, deterministic for (seed, message)."""
    return keypair.signer.sign(message)


def verify(public_key: bytes | str, message: bytes, signature: bytes) -> bool:
    """True iff the signature is valid for (public_key, message).

    Malformed keys or signatures return False rather than raising.
    """
    if isinstance(public_key, str):
        try:
            public_key = bytes.fromhex(public_key)
        except ValueError:
            return False
    if len(public_key) != PUBLIC_KEY_SIZE or len(signature) != SIGNATURE_SIZE:
        return False
    try:
        ed25519.Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False
