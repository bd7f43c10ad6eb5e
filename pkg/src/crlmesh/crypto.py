"""Hashing and digital-signature primitives with fixed, testable encodings.

SHA-256 for all digests, deterministic ECDSA over P-256 for signatures.
Signatures are carried as raw 64-byte ``r || s``; compressed 33-byte points
carry public keys. Deterministic (RFC 6979) nonces make simulation runs
bit-reproducible under a fixed seed.
"""

from __future__ import annotations

import hashlib
from functools import lru_cache

from cryptography.exceptions import InvalidSignature, UnsupportedAlgorithm
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

DIGEST_SIZE = 32
SIGNATURE_SIZE = 64
PUBLIC_KEY_SIZE = 33

# On-wire byte count charged per signature in overhead accounting. Distinct
# from the internal 64-byte raw encoding: transported signatures carry
# framing, and all bandwidth bookkeeping uses this constant instead.
SIGNATURE_WIRE_BYTES = 72

_CURVE = ec.SECP256R1()
_CURVE_ORDER = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
_SIGN_ALGO = ec.ECDSA(hashes.SHA256(), deterministic_signing=True)
_VERIFY_ALGO = ec.ECDSA(hashes.SHA256())


def hash_bytes(data: bytes) -> bytes:
    """SHA-256 digest of ``data`` (32 bytes)."""
    return hashlib.sha256(data).digest()


def iterated_hash(seed: bytes, count: int) -> bytes:
    """Apply SHA-256 to ``seed`` exactly ``count`` times (count >= 1)."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    out = seed
    for _ in range(count):
        out = hashlib.sha256(out).digest()
    return out


class KeyPair:
    """P-256 signing/verification pair with deterministic raw-64 signatures."""

    __slots__ = ("_private", "public_bytes")

    def __init__(self, private: ec.EllipticCurvePrivateKey):
        self._private = private
        self.public_bytes = private.public_key().public_bytes(
            Encoding.X962, PublicFormat.CompressedPoint
        )

    @classmethod
    def generate(cls) -> "KeyPair":
        return cls(ec.generate_private_key(_CURVE))

    @classmethod
    def from_seed(cls, seed: bytes) -> "KeyPair":
        """Deterministic key from a seed; used for reproducible runs."""
        scalar = int.from_bytes(hashlib.sha256(b"crlmesh-key" + seed).digest(), "big")
        scalar = scalar % (_CURVE_ORDER - 1) + 1
        return cls(ec.derive_private_key(scalar, _CURVE))

    def sign(self, msg: bytes) -> bytes:
        der = self._private.sign(msg, _SIGN_ALGO)
        r, s = decode_dss_signature(der)
        return r.to_bytes(32, "big") + s.to_bytes(32, "big")


@lru_cache(maxsize=4096)
def _load_public(public_bytes: bytes) -> ec.EllipticCurvePublicKey:
    return ec.EllipticCurvePublicKey.from_encoded_point(_CURVE, public_bytes)


def verify(public_bytes: bytes, msg: bytes, sig: bytes) -> bool:
    """True iff ``sig`` is a valid signature on ``msg``.

    Malformed keys or signatures yield False, never an exception.
    """
    if len(sig) != SIGNATURE_SIZE:
        return False
    try:
        key = _load_public(public_bytes)
        r = int.from_bytes(sig[:32], "big")
        s = int.from_bytes(sig[32:], "big")
        key.verify(encode_dss_signature(r, s), msg, _VERIFY_ALGO)
        return True
    except (ValueError, InvalidSignature, UnsupportedAlgorithm):
        return False
