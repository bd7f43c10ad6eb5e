"""Issuer-side protocol: pseudonym issuance, revocation registry, CRL building.

A batch of pseudonyms issued against one ticket is implicitly chained:
``RIK_i = H(ik || K_i || t_s || t_e || H^i(rnd))``, ``SN_1 = H(RIK_1 || H(rnd))``
and ``SN_i = H(SN_{i-1} || H^i(rnd))``. Revoking the vehicle discloses, per
batch, only the first still-valid serial number, the chain seed at that
offset and the count of later pseudonyms; serial numbers before the anchor
stay underivable from published data.
"""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass, field

from .bloom import BloomFilter, optimal_k, size_bits
from .crypto import (
    DIGEST_SIZE,
    SIGNATURE_SIZE,
    KeyPair,
    hash_bytes,
    iterated_hash,
    verify,
)

PIECE_VERSION = 1
ENTRY_BYTES = DIGEST_SIZE + DIGEST_SIZE + 1  # anchor, chain seed, remaining
_PIECE_HEADER = struct.Struct(">BIHHI")  # version, window, index, total, count

# Fraction of each second's bandwidth allowance used as the per-piece payload
# budget; the remainder absorbs piece headers, fingerprint broadcasts and
# query traffic sharing the same allowance.
PIECE_BUDGET_NUM = 4
PIECE_BUDGET_DEN = 5


def piece_budget_bytes(bandwidth_bytes_per_s: int) -> int:
    """Per-piece byte budget for a given distribution bandwidth."""
    return bandwidth_bytes_per_s * PIECE_BUDGET_NUM // PIECE_BUDGET_DEN


class IssuanceError(ValueError):
    """Request rejected during pseudonym issuance."""


def pop_message(public_key: bytes, ik_tkt: bytes) -> bytes:
    """Message a requester signs to prove possession of a pseudonym key."""
    return b"crlmesh-pop" + public_key + ik_tkt


def pop_proof(key: KeyPair, ik_tkt: bytes) -> bytes:
    return key.sign(pop_message(key.public_bytes, ik_tkt))


@dataclass(frozen=True)
class Ticket:
    """LTCA-issued, anonymized authorization for one pseudonym request."""

    ik_tkt: bytes
    valid_from: int
    valid_to: int
    ltca_signature: bytes

    def signing_bytes(self) -> bytes:
        return self.ik_tkt + struct.pack(">II", self.valid_from, self.valid_to)


class Ltca:
    """Stub long-term CA: signs tickets, nothing more."""

    def __init__(self, key: KeyPair | None = None):
        self.key = key or KeyPair.generate()

    def issue_ticket(self, ik_tkt: bytes, valid_from: int, valid_to: int) -> Ticket:
        if valid_from >= valid_to:
            raise ValueError("ticket validity window is empty")
        body = ik_tkt + struct.pack(">II", valid_from, valid_to)
        return Ticket(ik_tkt, valid_from, valid_to, self.key.sign(body))


@dataclass(frozen=True)
class Pseudonym:
    """Short-lived credential; ``fingerprint`` present on carrier pseudonyms."""

    serial_number: bytes
    public_key: bytes
    crl_version: int
    valid_from: int
    valid_to: int
    fingerprint: BloomFilter | None
    rik: bytes
    pca_signature: bytes

    def signing_bytes(self) -> bytes:
        flag = b"\x01" if self.fingerprint is not None else b"\x00"
        fp = self.fingerprint.serialize() if self.fingerprint is not None else b""
        return (
            self.serial_number
            + self.public_key
            + struct.pack(">III", self.crl_version, self.valid_from, self.valid_to)
            + flag
            + fp
            + self.rik
        )

    def encode(self) -> bytes:
        return self.signing_bytes() + self.pca_signature

    @classmethod
    def decode_prefix(cls, data: bytes) -> tuple["Pseudonym", int]:
        fixed = DIGEST_SIZE + 33 + 12 + 1
        if len(data) < fixed:
            raise ValueError("truncated pseudonym")
        off = 0
        sn = data[off:off + DIGEST_SIZE]; off += DIGEST_SIZE
        pub = data[off:off + 33]; off += 33
        crl_version, t_s, t_e = struct.unpack_from(">III", data, off); off += 12
        flag = data[off]; off += 1
        fp = None
        if flag == 1:
            fp, used = BloomFilter.deserialize_prefix(data[off:])
            off += used
        elif flag != 0:
            raise ValueError(f"bad carrier flag {flag}")
        if len(data) < off + DIGEST_SIZE + SIGNATURE_SIZE:
            raise ValueError("truncated pseudonym")
        rik = data[off:off + DIGEST_SIZE]; off += DIGEST_SIZE
        sig = data[off:off + SIGNATURE_SIZE]; off += SIGNATURE_SIZE
        return cls(sn, pub, crl_version, t_s, t_e, fp, rik, sig), off

    @classmethod
    def decode(cls, data: bytes) -> "Pseudonym":
        p, used = cls.decode_prefix(data)
        if used != len(data):
            raise ValueError("trailing bytes after pseudonym")
        return p

    def verify_issuer(self, pca_public: bytes) -> bool:
        return verify(pca_public, self.signing_bytes(), self.pca_signature)


@dataclass(frozen=True)
class CrlEntry:
    """One revoked batch: anchor serial, chain seed at the anchor, tail count."""

    anchor_sn: bytes
    chain_seed: bytes
    remaining: int

    def encode(self) -> bytes:
        if not 0 <= self.remaining <= 255:
            raise ValueError("remaining must fit in one byte")
        return self.anchor_sn + self.chain_seed + bytes([self.remaining])

    @classmethod
    def decode(cls, data: bytes) -> "CrlEntry":
        if len(data) != ENTRY_BYTES:
            raise ValueError(f"entry must be {ENTRY_BYTES} bytes")
        return cls(data[:32], data[32:64], data[64])


@dataclass(frozen=True)
class CrlPiece:
    """Independently parseable fragment of one window's revocation list."""

    version: int
    window_index: int
    piece_index: int
    total_pieces: int
    entries: tuple[CrlEntry, ...]

    def encode(self) -> bytes:
        head = _PIECE_HEADER.pack(
            self.version, self.window_index, self.piece_index,
            self.total_pieces, len(self.entries),
        )
        return head + b"".join(e.encode() for e in self.entries)

    @classmethod
    def decode(cls, data: bytes) -> "CrlPiece":
        if len(data) < _PIECE_HEADER.size:
            raise ValueError("truncated piece header")
        version, window, idx, total, count = _PIECE_HEADER.unpack_from(data)
        body = data[_PIECE_HEADER.size:]
        if len(body) != count * ENTRY_BYTES:
            raise ValueError("piece body length mismatch")
        entries = tuple(
            CrlEntry.decode(body[i * ENTRY_BYTES:(i + 1) * ENTRY_BYTES])
            for i in range(count)
        )
        piece = cls(version, window, idx, total, entries)
        if idx >= total:
            raise ValueError("piece_index out of range")
        return piece

    def digest(self) -> bytes:
        return hash_bytes(self.encode())


@dataclass(frozen=True)
class SignedFingerprint:
    """PCA-signed Bloom filter over the digests of one window's pieces."""

    window_index: int
    total_pieces: int
    filter: BloomFilter
    pca_signature: bytes

    def signing_bytes(self) -> bytes:
        return struct.pack(">IH", self.window_index, self.total_pieces) + self.filter.serialize()

    def encode(self) -> bytes:
        return self.signing_bytes() + self.pca_signature

    @classmethod
    def decode(cls, data: bytes) -> "SignedFingerprint":
        if len(data) < 6 + SIGNATURE_SIZE:
            raise ValueError("truncated fingerprint")
        window, total = struct.unpack_from(">IH", data)
        filt, used = BloomFilter.deserialize_prefix(data[6:len(data) - SIGNATURE_SIZE])
        if 6 + used != len(data) - SIGNATURE_SIZE:
            raise ValueError("fingerprint length mismatch")
        return cls(window, total, filt, data[-SIGNATURE_SIZE:])

    def verify_issuer(self, pca_public: bytes) -> bool:
        return verify(pca_public, self.signing_bytes(), self.pca_signature)

    def test_piece(self, piece: CrlPiece) -> bool:
        return (
            piece.window_index == self.window_index
            and piece.total_pieces == self.total_pieces
            and self.filter.contains(piece.digest())
        )


@dataclass
class IssuanceRecord:
    """Server-side memory of one issued batch, kept for later revocation."""

    ik_tkt: bytes
    rnd_v: bytes
    serial_numbers: list[bytes]
    batch_start: int
    psnym_lifetime_s: int
    issue_window_index: int

    @property
    def batch_size(self) -> int:
        return len(self.serial_numbers)

    @property
    def first_sn(self) -> bytes:
        return self.serial_numbers[0]

    def lifetime(self, i: int) -> tuple[int, int]:
        """Validity window of the i-th (1-based) pseudonym in the batch."""
        t_s = self.batch_start + (i - 1) * self.psnym_lifetime_s
        return t_s, t_s + self.psnym_lifetime_s


class Pca:
    """Pseudonym CA: issuance, revocation registry, CRL construction.

    Single-writer state machine; snapshots it hands out (pieces,
    fingerprints, pseudonyms) are immutable.
    """

    def __init__(
        self,
        key: KeyPair | None = None,
        ltca_public: bytes | None = None,
        psnym_lifetime_s: int = 60,
        issue_interval_s: int = 60,
        crl_window_s: int = 600,
        carrier_fraction: float = 0.2,
        fingerprint_fpr: float = 1e-30,
        rng: random.Random | None = None,
    ):
        if issue_interval_s % psnym_lifetime_s != 0:
            raise ValueError("issue interval must be a multiple of the pseudonym lifetime")
        if crl_window_s % issue_interval_s != 0:
            raise ValueError("CRL window must be a multiple of the issue interval")
        self.key = key or KeyPair.generate()
        self.ltca_public = ltca_public
        self.psnym_lifetime_s = psnym_lifetime_s
        self.issue_interval_s = issue_interval_s
        self.crl_window_s = crl_window_s
        self.carrier_fraction = carrier_fraction
        self.fingerprint_fpr = fingerprint_fpr
        self.rng = rng or random.Random()
        self.records: dict[bytes, list[IssuanceRecord]] = {}
        self.revoked: set[bytes] = set()
        # window index -> [(sort_key, entry)]; sort key is the validity start
        # of the first revoked pseudonym, anchor serial as tie-break
        self.registry: dict[int, list[tuple[tuple[int, bytes], CrlEntry]]] = {}
        self.fingerprints: dict[int, SignedFingerprint] = {}

    @property
    def batch_size(self) -> int:
        return self.issue_interval_s // self.psnym_lifetime_s

    def window_of(self, t_s: int) -> int:
        return t_s // self.crl_window_s

    # -- issuance (requester -> PCA) --

    def issue_pseudonyms(
        self,
        ticket: Ticket,
        public_keys: list[bytes],
        proofs: list[bytes],
        issue_index: int,
        carrier: bool | None = None,
    ) -> tuple[list[Pseudonym], bytes]:
        """Issue one time-aligned batch; returns the pseudonyms and the chain seed.

        The chain seed is returned to the requester per protocol; the PCA
        keeps its own copy in the issuance record for revocation.
        """
        batch_start = issue_index * self.issue_interval_s
        if self.ltca_public is not None and not verify(
            self.ltca_public, ticket.signing_bytes(), ticket.ltca_signature
        ):
            raise IssuanceError("invalid ticket signature")
        if not ticket.valid_from <= batch_start < ticket.valid_to:
            raise IssuanceError("ticket not valid for the requested interval")
        n = self.batch_size
        if len(public_keys) != n or len(proofs) != n:
            raise IssuanceError(f"request must carry exactly {n} keys and proofs")
        for pub, proof in zip(public_keys, proofs):
            if not verify(pub, pop_message(pub, ticket.ik_tkt), proof):
                raise IssuanceError("proof of possession failed")

        if carrier is None:
            carrier = self.rng.random() < self.carrier_fraction
        window = self.window_of(batch_start)
        embedded = self.fingerprints.get(window)
        filt = embedded.filter if (carrier and embedded is not None) else None

        rnd_v = self.rng.randbytes(DIGEST_SIZE)
        seed = rnd_v
        psnyms: list[Pseudonym] = []
        serials: list[bytes] = []
        prev_sn = b""
        for i in range(1, n + 1):
            seed = hashlib.sha256(seed).digest()  # H^i(rnd_v)
            t_s = batch_start + (i - 1) * self.psnym_lifetime_s
            t_e = t_s + self.psnym_lifetime_s
            rik = hash_bytes(
                ticket.ik_tkt + public_keys[i - 1] + struct.pack(">II", t_s, t_e) + seed
            )
            if i == 1:
                sn = hash_bytes(rik + seed)
            else:
                sn = hash_bytes(prev_sn + seed)
            prev_sn = sn
            serials.append(sn)
            body = Pseudonym(sn, public_keys[i - 1], window, t_s, t_e, filt, rik, b"")
            sig = self.key.sign(body.signing_bytes())
            psnyms.append(
                Pseudonym(sn, public_keys[i - 1], window, t_s, t_e, filt, rik, sig)
            )

        record = IssuanceRecord(
            ticket.ik_tkt, rnd_v, serials, batch_start, self.psnym_lifetime_s, window
        )
        self.records.setdefault(ticket.ik_tkt, []).append(record)
        return psnyms, rnd_v

    # -- revocation --

    def revoke_vehicle(self, ik_tkt: bytes, at_time: int) -> list[tuple[int, CrlEntry]]:
        """Revoke every unexpired pseudonym issued against ``ik_tkt``.

        One entry per batch, anchored at the first pseudonym still valid at
        ``at_time``; expired pseudonyms are never represented. Idempotent.
        """
        if ik_tkt not in self.records:
            raise KeyError("no issuance records for this ticket key")
        if ik_tkt in self.revoked:
            return []
        self.revoked.add(ik_tkt)
        out: list[tuple[int, CrlEntry]] = []
        for rec in self.records[ik_tkt]:
            k = None
            for i in range(1, rec.batch_size + 1):
                _, t_e = rec.lifetime(i)
                if t_e > at_time:
                    k = i
                    break
            if k is None:
                continue  # whole batch expired: stays unlinkable
            entry = CrlEntry(
                anchor_sn=rec.serial_numbers[k - 1],
                chain_seed=iterated_hash(rec.rnd_v, k),
                remaining=rec.batch_size - k,
            )
            window = self.window_of(rec.batch_start)
            sort_key = (rec.lifetime(k)[0], entry.anchor_sn)
            self.registry.setdefault(window, []).append((sort_key, entry))
            out.append((window, entry))
        return out

    def window_entries(self, window_index: int) -> list[CrlEntry]:
        pending = sorted(self.registry.get(window_index, []), key=lambda t: t[0])
        return [e for _, e in pending]

    # -- CRL construction --

    def build_crl(self, window_index: int, byte_budget: int) -> list[CrlPiece]:
        """Split the window's entries into N = ceil(size/budget) pieces.

        Entries never straddle pieces; counts are near-equal; each encoded
        piece fits in ``byte_budget``.
        """
        entries = self.window_entries(window_index)
        if not entries:
            return []
        if byte_budget < _PIECE_HEADER.size + ENTRY_BYTES:
            raise ValueError("byte budget below minimum piece size")
        total = len(entries) * ENTRY_BYTES
        n_pieces = -(-total // byte_budget)
        while _PIECE_HEADER.size + ENTRY_BYTES * -(-len(entries) // n_pieces) > byte_budget:
            n_pieces += 1
        base, extra = divmod(len(entries), n_pieces)
        pieces = []
        pos = 0
        for idx in range(n_pieces):
            count = base + (1 if idx < extra else 0)
            pieces.append(
                CrlPiece(
                    PIECE_VERSION, window_index, idx, n_pieces,
                    tuple(entries[pos:pos + count]),
                )
            )
            pos += count
        return pieces

    def build_fingerprint(
        self, window_index: int, pieces: list[CrlPiece], target_fpr: float | None = None
    ) -> SignedFingerprint:
        """Bloom filter over all piece digests, signed by the PCA.

        An empty window yields a minimum-size signed filter: still an
        authenticated "no revocations" statement.
        """
        fpr = self.fingerprint_fpr if target_fpr is None else target_fpr
        for p in pieces:
            if p.window_index != window_index:
                raise ValueError("piece from a different window")
        if pieces:
            filt = BloomFilter(size_bits(len(pieces), fpr), optimal_k(fpr))
            for p in pieces:
                filt.insert(p.digest())
        else:
            filt = BloomFilter(1, optimal_k(fpr))
        body = struct.pack(">IH", window_index, len(pieces)) + filt.serialize()
        fp = SignedFingerprint(window_index, len(pieces), filt, self.key.sign(body))
        self.fingerprints[window_index] = fp
        return fp
