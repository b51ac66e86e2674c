"""Secrets, hashlocks and tuple signatures.

Two interchangeable backends share one interface:

* ``RealBackend``: SHA-256 hashlocks and Ed25519 signatures.
* ``TestBackend``: transparent stand-ins with the same byte sizes, so space
  measurements do not depend on which backend ran.

The simulator treats cryptography as ideal: adversarial strategies never
attempt forgeries, they only reuse values they legitimately learned.
"""
from __future__ import annotations

import hashlib
import random
import secrets as _secrets
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

SECRET_BYTES = 32
DIGEST_BYTES = 32
KEY_BYTES = 32
SIG_BYTES = 64


@dataclass(frozen=True)
class Secret:
    value: bytes

    def __post_init__(self) -> None:
        if not isinstance(self.value, bytes):
            raise TypeError("secret must be bytes")

    def __len__(self) -> int:
        return len(self.value)


@dataclass(frozen=True)
class Hashlock:
    digest: bytes


@dataclass(frozen=True)
class KeyPair:
    party: int
    public_key: bytes
    secret_key: bytes


@dataclass(frozen=True)
class TupleSignature:
    signer: int
    payload: tuple[Secret, ...]
    sig_bytes: bytes


def gen_secret(rng_seed: int | None = None, length: int = SECRET_BYTES) -> Secret:
    """Random secret; reproducible when a seed is given."""
    if rng_seed is None:
        return Secret(_secrets.token_bytes(length))
    return Secret(random.Random(rng_seed).randbytes(length))


def canonical_payload(payload: Sequence[Secret]) -> bytes:
    """Count-prefixed, length-prefixed concatenation in leader order."""
    out = [struct.pack(">I", len(payload))]
    for s in payload:
        out.append(struct.pack(">I", len(s.value)))
        out.append(s.value)
    return b"".join(out)


def distinct_signers(sigs: Iterable[TupleSignature]) -> set[int]:
    return {s.signer for s in sigs}


class RealBackend:
    name = "real"

    def hash(self, data: bytes) -> bytes:
        return hashlib.sha256(data).digest()

    def keypair(self, party: int, seed: int | None = None) -> KeyPair:
        if seed is None:
            sk = Ed25519PrivateKey.generate()
        else:
            sk = Ed25519PrivateKey.from_private_bytes(
                hashlib.sha256(b"xswap-key|%d|%d" % (seed, party)).digest()
            )
        raw_sk = sk.private_bytes_raw()
        return KeyPair(party, sk.public_key().public_bytes_raw(), raw_sk)

    def sign(self, keys: KeyPair, message: bytes) -> bytes:
        return Ed25519PrivateKey.from_private_bytes(keys.secret_key).sign(message)

    def verify(self, public_key: bytes, message: bytes, sig_bytes: bytes) -> bool:
        try:
            Ed25519PublicKey.from_public_bytes(public_key).verify(sig_bytes, message)
        except (InvalidSignature, ValueError, TypeError):
            return False
        return True


class TestBackend:
    """Fast, human-readable primitives for exhaustive sweeps.

    The hash is a keyed BLAKE2b truncated to 32 bytes. A public key is the
    signer id padded to 32 bytes, and a signature is the signer id followed by
    a digest of the payload, so it is a (signer, payload digest) pair.
    """

    __test__ = False  # keep pytest from collecting this class
    name = "test"
    _key = b"xswap-test-backend"

    def hash(self, data: bytes) -> bytes:
        return hashlib.blake2b(data, key=self._key, digest_size=DIGEST_BYTES).digest()

    def keypair(self, party: int, seed: int | None = None) -> KeyPair:
        pk = b"PK" + struct.pack(">I", party) + bytes(KEY_BYTES - 6)
        return KeyPair(party, pk, b"SK" + struct.pack(">I", party))

    def sign(self, keys: KeyPair, message: bytes) -> bytes:
        return self._sig(keys.public_key, message)

    def _sig(self, public_key: bytes, message: bytes) -> bytes:
        digest = hashlib.blake2b(public_key + message, digest_size=SIG_BYTES - 4).digest()
        return public_key[2:6] + digest

    def verify(self, public_key: bytes, message: bytes, sig_bytes: bytes) -> bool:
        if not isinstance(sig_bytes, bytes) or len(sig_bytes) != SIG_BYTES:
            return False
        return sig_bytes == self._sig(public_key, message)


Backend = RealBackend | TestBackend


def get_backend(name: str) -> Backend:
    if name == "real":
        return RealBackend()
    if name == "test":
        return TestBackend()
    raise ValueError(f"unknown crypto backend {name!r}")


def make_hashlock(s: Secret, backend: Backend) -> Hashlock:
    return Hashlock(backend.hash(s.value))


def verify_hashlock(s: Secret, h: Hashlock, backend: Backend) -> bool:
    return backend.hash(s.value) == h.digest


def sign_tuple(keys: KeyPair, payload: Sequence[Secret], backend: Backend) -> TupleSignature:
    payload = tuple(payload)
    return TupleSignature(keys.party, payload, backend.sign(keys, canonical_payload(payload)))


def verify_tuple_sig(
    public_key: bytes,
    sig: TupleSignature,
    backend: Backend,
    payload: Sequence[Secret] | None = None,
) -> bool:
    """True iff ``sig`` is valid under ``public_key``.

    With ``payload`` given, the signature must also be over exactly that tuple.
    """
    if payload is not None and tuple(payload) != sig.payload:
        return False
    return backend.verify(public_key, canonical_payload(sig.payload), sig.sig_bytes)
