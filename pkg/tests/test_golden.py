"""Frozen wire-format vectors: any layout change fails these tests.

The vectors were produced by the generator below from fixed key seeds and a
fixed rng; regeneration is deliberate (delete the .hex files and re-run
``regenerate``), never automatic.
"""

import pathlib
import random

import pytest

from crlmesh.crypto import KeyPair, hash_bytes
from crlmesh.node import CrlQuery, make_query
from crlmesh.vpki import CrlPiece, Ltca, Pca, Pseudonym, SignedFingerprint, pop_proof

GOLDEN = pathlib.Path(__file__).parent / "golden"


def build_golden_objects():
    ltca = Ltca(KeyPair.from_seed(b"golden-ltca"))
    pca = Pca(
        key=KeyPair.from_seed(b"golden-pca"),
        ltca_public=ltca.key.public_bytes,
        psnym_lifetime_s=60,
        issue_interval_s=180,
        crl_window_s=360,
        rng=random.Random(2024),
    )
    key = KeyPair.from_seed(b"golden-veh")
    ik = hash_bytes(b"golden-ticket")
    ticket = ltca.issue_ticket(ik, 0, 86400)
    proof = pop_proof(key, ik)
    psnyms, _ = pca.issue_pseudonyms(
        ticket, [key.public_bytes] * 3, [proof] * 3, 0, carrier=False
    )
    pca.revoke_vehicle(ik, at_time=0)
    pieces = pca.build_crl(0, 8000)
    fp = pca.build_fingerprint(0, pieces)
    carriers, _ = pca.issue_pseudonyms(
        ticket, [key.public_bytes] * 3, [proof] * 3, 1, carrier=True
    )
    query = make_query(42, 0, (0, 3), psnyms[0], key)
    return {
        "crl_piece": pieces[0],
        "signed_fingerprint": fp,
        "pseudonym_plain": psnyms[0],
        "pseudonym_carrier": carriers[0],
        "crl_query": query,
    }


def regenerate():
    for name, obj in build_golden_objects().items():
        (GOLDEN / f"{name}.hex").write_text(obj.encode().hex() + "\n")


@pytest.fixture(scope="module")
def golden_objects():
    return build_golden_objects()


@pytest.mark.parametrize(
    "name,decoder",
    [
        ("crl_piece", CrlPiece.decode),
        ("signed_fingerprint", SignedFingerprint.decode),
        ("pseudonym_plain", Pseudonym.decode),
        ("pseudonym_carrier", Pseudonym.decode),
        ("crl_query", CrlQuery.decode),
    ],
)
def test_golden_vector_matches_and_decodes(golden_objects, name, decoder):
    frozen = bytes.fromhex((GOLDEN / f"{name}.hex").read_text().strip())
    obj = golden_objects[name]
    assert obj.encode() == frozen, f"{name} layout changed"
    assert decoder(frozen) == obj


def test_golden_signatures_verify(golden_objects):
    pca_pub = KeyPair.from_seed(b"golden-pca").public_bytes
    assert golden_objects["signed_fingerprint"].verify_issuer(pca_pub)
    assert golden_objects["pseudonym_plain"].verify_issuer(pca_pub)
    assert golden_objects["pseudonym_carrier"].verify_issuer(pca_pub)


if __name__ == "__main__":
    regenerate()
