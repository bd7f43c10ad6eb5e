"""OBU and RSU protocol logic: publishing, subscription, parsing, beaconing.

Chain-seed convention shared with the issuer: an entry carries the seed at
the anchor offset; each derivation step first advances the seed by one hash,
then computes ``SN_next = H(SN_prev || seed)``. Both sides must agree or
receivers derive garbage; the round-trip is covered by cross-module tests.
"""

from __future__ import annotations

import bisect
import hashlib
import random
import struct
from dataclasses import dataclass, field

from .crypto import SIGNATURE_SIZE, verify
from .vpki import CrlEntry, CrlPiece, Pseudonym, SignedFingerprint


def derive_serials(entry: CrlEntry) -> list[bytes]:
    """All serial numbers reachable from one revocation entry."""
    serials = [entry.anchor_sn]
    seed = entry.chain_seed
    sn = entry.anchor_sn
    for _ in range(entry.remaining):
        seed = hashlib.sha256(seed).digest()
        sn = hashlib.sha256(sn + seed).digest()
        serials.append(sn)
    return serials


class RevocationStore:
    """Per-window sorted sets of revoked serial numbers; O(log n) lookup."""

    def __init__(self):
        self._windows: dict[int, list[bytes]] = {}

    def add_entries(self, window_index: int, entries: list[CrlEntry] | tuple) -> int:
        """Derive and store all serials; returns how many were new."""
        sns = self._windows.setdefault(window_index, [])
        added = 0
        for entry in entries:
            for sn in derive_serials(entry):
                i = bisect.bisect_left(sns, sn)
                if i >= len(sns) or sns[i] != sn:
                    sns.insert(i, sn)
                    added += 1
        return added

    def is_revoked(self, sn: bytes, window_index: int | None = None) -> bool:
        windows = (
            [window_index] if window_index is not None else list(self._windows)
        )
        for w in windows:
            sns = self._windows.get(w, [])
            i = bisect.bisect_left(sns, sn)
            if i < len(sns) and sns[i] == sn:
                return True
        return False

    def window_size(self, window_index: int) -> int:
        return len(self._windows.get(window_index, []))

    def all_serials(self, window_index: int) -> set[bytes]:
        return set(self._windows.get(window_index, []))

    def evict_before(self, window_index: int) -> None:
        """Drop windows older than ``window_index``; their entries expired."""
        for w in [w for w in self._windows if w < window_index]:
            del self._windows[w]

    def lookup_probes(self, sn: bytes, window_index: int) -> int:
        """Comparison count of a manual binary search (structural audit)."""
        sns = self._windows.get(window_index, [])
        lo, hi, probes = 0, len(sns), 0
        while lo < hi:
            mid = (lo + hi) // 2
            probes += 1
            if sns[mid] < sn:
                lo = mid + 1
            else:
                hi = mid
        return probes


def parse_entries(pieces: list[CrlPiece], store: RevocationStore) -> int:
    """Parse a complete, validated ledger into the local store.

    Returns the number of serials added. Entries are opaque: derivation is
    total, so no errors beyond malformed piece objects are possible.
    """
    added = 0
    for piece in pieces:
        added += store.add_entries(piece.window_index, piece.entries)
    return added


@dataclass(frozen=True)
class CrlQuery:
    """Signed request for missing piece indexes of one window."""

    request_id: int
    window_index: int
    missing_indexes: tuple[int, ...]
    signer_pseudonym: Pseudonym
    signature: bytes

    def signing_bytes(self) -> bytes:
        head = struct.pack(
            ">IIH", self.request_id, self.window_index, len(self.missing_indexes)
        )
        body = b"".join(struct.pack(">H", i) for i in self.missing_indexes)
        return head + body + self.signer_pseudonym.encode()

    def encode(self) -> bytes:
        return self.signing_bytes() + self.signature

    @classmethod
    def decode(cls, data: bytes) -> "CrlQuery":
        if len(data) < 10 + SIGNATURE_SIZE:
            raise ValueError("truncated query")
        request_id, window, count = struct.unpack_from(">IIH", data)
        off = 10
        missing = tuple(
            struct.unpack_from(">H", data, off + 2 * i)[0] for i in range(count)
        )
        off += 2 * count
        psnym, used = Pseudonym.decode_prefix(data[off:len(data) - SIGNATURE_SIZE])
        if off + used != len(data) - SIGNATURE_SIZE:
            raise ValueError("query length mismatch")
        return cls(request_id, window, missing, psnym, data[-SIGNATURE_SIZE:])


def make_query(
    request_id: int,
    window_index: int,
    missing: tuple[int, ...],
    pseudonym: Pseudonym,
    signer_key,
) -> CrlQuery:
    q = CrlQuery(request_id, window_index, missing, pseudonym, b"")
    return CrlQuery(
        request_id, window_index, missing, pseudonym, signer_key.sign(q.signing_bytes())
    )


class RateLimiter:
    """Caps bytes sent inside each one-second window to the CRL budget."""

    def __init__(self, budget_bytes_per_s: int):
        self.budget = budget_bytes_per_s
        self._second = None
        self._used = 0

    def allow(self, nbytes: int, now_s: float) -> bool:
        second = int(now_s)
        if second != self._second:
            self._second = second
            self._used = 0
        if self._used + nbytes > self.budget:
            return False
        self._used += nbytes
        return True


@dataclass
class PieceLedger:
    """Receiver-side collection state for one window's pieces.

    Pieces are accepted only after passing the fingerprint test; while the
    fingerprint is absent, candidates are buffered unverified up to a small
    cap and validated on fingerprint arrival.
    """

    window_index: int
    fingerprint: SignedFingerprint | None = None
    received: dict[int, CrlPiece] = field(default_factory=dict)
    buffered: list[CrlPiece] = field(default_factory=list)
    pollution_rejected: int = 0
    duplicates: int = 0

    BUFFER_FACTOR = 2

    @property
    def total_pieces(self) -> int | None:
        return self.fingerprint.total_pieces if self.fingerprint else None

    @property
    def complete(self) -> bool:
        total = self.total_pieces
        return total is not None and len(self.received) == total

    def missing_indexes(self) -> tuple[int, ...]:
        total = self.total_pieces
        if total is None:
            return ()
        return tuple(i for i in range(total) if i not in self.received)

    def set_fingerprint(self, fingerprint: SignedFingerprint) -> None:
        if fingerprint.window_index != self.window_index:
            return
        if self.fingerprint is not None:
            return
        self.fingerprint = fingerprint
        pending, self.buffered = self.buffered, []
        for piece in pending:
            self.offer(piece)

    def offer(self, piece: CrlPiece) -> bool:
        """Feed one incoming piece; True iff it was accepted into the ledger."""
        if piece.window_index != self.window_index:
            return False
        if self.fingerprint is None:
            cap = self.BUFFER_FACTOR * max(piece.total_pieces, 1)
            if len(self.buffered) < cap:
                self.buffered.append(piece)
            return False
        if not self.fingerprint.test_piece(piece):
            self.pollution_rejected += 1
            return False
        if piece.piece_index in self.received:
            self.duplicates += 1
            return False
        self.received[piece.piece_index] = piece
        return True

    def pieces(self) -> list[CrlPiece]:
        return [self.received[i] for i in sorted(self.received)]


def obu_handle_query(
    query: CrlQuery,
    ledger: PieceLedger,
    limiter: RateLimiter,
    now_s: float,
    rng: random.Random,
    store: RevocationStore | None = None,
    pca_public: bytes | None = None,
) -> CrlPiece | None:
    """Answer a neighbor's query with one random held requested piece.

    Bad signature, expired pseudonym or a revoked signer drop the query
    silently (callers count the misbehavior observation); rate limiting or
    an empty intersection simply yield None.
    """
    psnym = query.signer_pseudonym
    if pca_public is not None and not psnym.verify_issuer(pca_public):
        raise MisbehaviorObserved("pseudonym not issued by the PCA")
    if not verify(psnym.public_key, query.signing_bytes(), query.signature):
        raise MisbehaviorObserved("bad query signature")
    if not psnym.valid_from <= now_s < psnym.valid_to:
        raise MisbehaviorObserved("query signed with an expired pseudonym")
    if store is not None and store.is_revoked(psnym.serial_number):
        raise MisbehaviorObserved("query signed with a revoked pseudonym")
    if query.window_index != ledger.window_index:
        return None
    available = sorted(set(query.missing_indexes) & set(ledger.received))
    if not available:
        return None
    piece = ledger.received[rng.choice(available)]
    if not limiter.allow(len(piece.encode()), now_s):
        return None
    return piece


class MisbehaviorObserved(Exception):
    """A query failed authentication; report-worthy, never fatal."""


def obu_subscribe(
    window_index: int,
    fingerprint: SignedFingerprint | None,
    incoming,
    pca_public: bytes | None = None,
) -> PieceLedger:
    """Drive a ledger over an iterable of incoming pieces/fingerprints.

    Convenience wrapper for tests and offline parsing; the simulator drives
    the same ``PieceLedger`` incrementally off its event loop.
    """
    ledger = PieceLedger(window_index)
    if fingerprint is not None:
        if pca_public is not None and not fingerprint.verify_issuer(pca_public):
            raise ValueError("fingerprint signature invalid")
        ledger.set_fingerprint(fingerprint)
    for item in incoming:
        if isinstance(item, SignedFingerprint):
            if pca_public is None or item.verify_issuer(pca_public):
                ledger.set_fingerprint(item)
        else:
            ledger.offer(item)
        if ledger.complete:
            break
    return ledger


# -- RSU fingerprint scheduling --

# Final fraction of a window during which the next window's fingerprint
# linearly takes over the broadcast slot.
CROSSFADE_FRACTION = 0.2


def rsu_fingerprint_choice(
    window_progress: float,
    current: SignedFingerprint,
    nxt: SignedFingerprint | None,
    rng: random.Random,
) -> SignedFingerprint:
    """Pick which fingerprint to broadcast at ``window_progress`` in [0, 1].

    Probability of the next window's fingerprint ramps linearly from 0 to 1
    over the final crossfade fraction of the window.
    """
    if nxt is None or window_progress < 1.0 - CROSSFADE_FRACTION:
        return current
    weight = min(1.0, (window_progress - (1.0 - CROSSFADE_FRACTION)) / CROSSFADE_FRACTION)
    return nxt if rng.random() < weight else current


@dataclass
class BeaconDescriptor:
    """One CAM transmission: when, whether the pseudonym rides along."""

    time_s: float
    attach_pseudonym: bool
    pseudonym: Pseudonym
    overhead_bytes: int


class Beaconer:
    """CAM schedule: attach the pseudonym every alpha-th beacon, and every
    beta-th beacon during the first second after a pseudonym switch."""

    def __init__(self, alpha: int = 10, beta: int = 1, cam_period_s: float = 0.1):
        self.alpha = alpha
        self.beta = beta
        self.cam_period_s = cam_period_s
        self._index = 0
        self._switched_at: float | None = None
        self._pseudonym: Pseudonym | None = None

    def switch_pseudonym(self, pseudonym: Pseudonym, now_s: float) -> None:
        self._pseudonym = pseudonym
        self._switched_at = now_s
        self._index = 0

    def beacon(self, now_s: float) -> BeaconDescriptor | None:
        """Emit the descriptor for the beacon fired at ``now_s``.

        Returns None when no valid pseudonym is held (vehicle stays silent).
        """
        p = self._pseudonym
        if p is None or not p.valid_from <= now_s < p.valid_to:
            return None
        i = self._index
        self._index += 1
        push_period = self._switched_at is not None and now_s - self._switched_at < 1.0
        attach = (i % self.alpha == 0) or (push_period and i % self.beta == 0)
        overhead = len(p.encode()) if attach else 0
        return BeaconDescriptor(now_s, attach, p, overhead)
