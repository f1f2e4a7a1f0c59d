"""Signature schemes.

Two schemes share one interface:

* ``MockScheme``: signature = 4-byte signer index + 8-byte keyed BLAKE2b
  digest.  Cheap and deterministic, used by the simulator.  Nothing stops a
  holder of the public key from forging, so the simulator enforces
  unforgeability structurally by only handing corrupted keys to the adversary.
* ``Ed25519Scheme``: a real asymmetric scheme from ``cryptography``.
"""
from __future__ import annotations

import base64
import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

from .types import AuxPayload, ProcessId, SignedAux, canonical_encode


@dataclass(frozen=True)
class KeyPair:
    process: ProcessId
    public: bytes
    private: bytes


class KeyDirectory(dict):
    """Maps every process index in [0, n) to its public key."""

    @property
    def n(self) -> int:
        return len(self)


def _seed_bytes(seed: int, index: int, size: int) -> bytes:
    return hashlib.blake2b(struct.pack(">qI", seed, index), digest_size=size, person=b"wcbbc-keygen").digest()


class MockScheme:
    name = "mock"
    _TAG = struct.Struct(">I")

    def keygen(self, n: int, seed: int = 0) -> tuple[KeyDirectory, list[KeyPair]]:
        if n < 1:
            raise ValueError("n must be >= 1")
        pairs = []
        for i in range(n):
            secret = _seed_bytes(seed, i, 16)
            pub = self._TAG.pack(i) + secret
            pairs.append(KeyPair(i, pub, pub))
        return KeyDirectory({kp.process: kp.public for kp in pairs}), pairs

    def _tag(self, key: bytes, message: bytes) -> bytes:
        return key[:4] + hashlib.blake2b(message, key=key[4:], digest_size=8).digest()

    def sign(self, private: bytes, message: bytes) -> bytes:
        return self._tag(private, message)

    def verify(self, public: bytes, message: bytes, signature: bytes) -> bool:
        if not isinstance(public, bytes) or len(public) != 20 or not isinstance(signature, bytes):
            return False
        return signature == self._tag(public, message)


class Ed25519Scheme:
    name = "ed25519"

    def keygen(self, n: int, seed: int | None = None) -> tuple[KeyDirectory, list[KeyPair]]:
        if n < 1:
            raise ValueError("n must be >= 1")
        pairs = []
        for i in range(n):
            if seed is None:
                sk = Ed25519PrivateKey.generate()
            else:
                sk = Ed25519PrivateKey.from_private_bytes(_seed_bytes(seed, i, 32))
            priv = sk.private_bytes(serialization.Encoding.Raw, serialization.PrivateFormat.Raw,
                                    serialization.NoEncryption())
            pub = sk.public_key().public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
            pairs.append(KeyPair(i, pub, priv))
        return KeyDirectory({kp.process: kp.public for kp in pairs}), pairs

    def sign(self, private: bytes, message: bytes) -> bytes:
        return Ed25519PrivateKey.from_private_bytes(private).sign(message)

    def verify(self, public: bytes, message: bytes, signature: bytes) -> bool:
        try:
            Ed25519PublicKey.from_public_bytes(public).verify(signature, message)
        except (InvalidSignature, ValueError, TypeError):
            return False
        return True


SCHEMES = {"mock": MockScheme, "ed25519": Ed25519Scheme}


def get_scheme(name: str):
    try:
        return SCHEMES[name]()
    except KeyError:
        raise ValueError(f"unknown signature scheme {name!r}") from None


def keygen(n: int, seed: int = 0, scheme: str = "mock") -> tuple[KeyDirectory, list[KeyPair]]:
    return get_scheme(scheme).keygen(n, seed)


class Signer:
    """Signs AUX payloads on behalf of one process."""

    def __init__(self, scheme, keypair: KeyPair):
        self.scheme = scheme
        self.keypair = keypair

    @property
    def process(self) -> ProcessId:
        return self.keypair.process

    def sign_aux(self, payload: AuxPayload) -> SignedAux:
        sig = self.scheme.sign(self.keypair.private, canonical_encode(payload))
        return SignedAux(payload, self.keypair.process, sig)


class Verifier:
    """Checks SignedAux signatures against a key directory, caching successes.

    Verification is a pure function of (payload, sender, signature), so a
    cache shared between simulated processes is sound.
    """

    def __init__(self, scheme, directory: KeyDirectory):
        self.scheme = scheme
        self.directory = directory
        self._ok: set[SignedAux] = set()

    def verify_aux(self, m: SignedAux) -> bool:
        if m in self._ok:
            return True
        pub = self.directory.get(m.sender)
        if pub is None:
            return False
        try:
            encoded = canonical_encode(m.payload)
        except ValueError:
            return False
        if self.scheme.verify(pub, encoded, m.signature):
            self._ok.add(m)
            return True
        return False


# -- key files -----------------------------------------------------------------

DIRECTORY_FILE = "directory.json"


def private_key_file(index: int) -> str:
    return f"node-{index}.key"


def write_key_files(keydir: Path, scheme_name: str, directory: KeyDirectory, pairs: list[KeyPair]) -> None:
    keydir = Path(keydir)
    keydir.mkdir(parents=True, exist_ok=True)
    doc = {
        "scheme": scheme_name,
        "keys": {str(i): base64.b64encode(pub).decode() for i, pub in sorted(directory.items())},
    }
    (keydir / DIRECTORY_FILE).write_text(json.dumps(doc, indent=2) + "\n")
    for kp in pairs:
        path = keydir / private_key_file(kp.process)
        path.write_text(base64.b64encode(kp.private).decode() + "\n")
        path.chmod(0o600)


def load_directory(keydir: Path) -> tuple[str, KeyDirectory]:
    doc = json.loads((Path(keydir) / DIRECTORY_FILE).read_text())
    directory = KeyDirectory({int(i): base64.b64decode(pub) for i, pub in doc["keys"].items()})
    return doc["scheme"], directory


def load_keypair(keydir: Path, index: int) -> KeyPair:
    _, directory = load_directory(keydir)
    private = base64.b64decode((Path(keydir) / private_key_file(index)).read_text().strip())
    return KeyPair(index, directory[index], private)
