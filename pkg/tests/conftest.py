import random

import pytest

from crlmesh.crypto import KeyPair, hash_bytes
from crlmesh.vpki import Ltca, Pca, pop_proof

# session config handle, used by the acceptance suite to emit its verdict
# lines outside of output capture
PYTEST_CONFIG = None


def pytest_configure(config):
    global PYTEST_CONFIG
    PYTEST_CONFIG = config


@pytest.fixture(scope="session")
def ltca():
    return Ltca(KeyPair.from_seed(b"test-ltca"))


@pytest.fixture()
def pca(ltca):
    return Pca(
        key=KeyPair.from_seed(b"test-pca"),
        ltca_public=ltca.key.public_bytes,
        psnym_lifetime_s=60,
        issue_interval_s=300,
        crl_window_s=600,
        rng=random.Random(42),
    )


def make_pca(ltca, batch_size, lifetime=60, rng_seed=42):
    return Pca(
        key=KeyPair.from_seed(b"test-pca"),
        ltca_public=ltca.key.public_bytes,
        psnym_lifetime_s=lifetime,
        issue_interval_s=lifetime * batch_size,
        crl_window_s=lifetime * batch_size * 2,
        rng=random.Random(rng_seed),
    )


def issue_batch(ltca, pca, tag=b"veh-0", issue_index=0, carrier=None):
    """One full issuance round trip; returns (ik, key, pseudonyms, rnd_v)."""
    key = KeyPair.from_seed(b"test-key" + tag)
    ik = hash_bytes(b"ticket" + tag)
    ticket = ltca.issue_ticket(ik, 0, 86400)
    n = pca.batch_size
    proof = pop_proof(key, ik)
    psnyms, rnd = pca.issue_pseudonyms(
        ticket, [key.public_bytes] * n, [proof] * n, issue_index, carrier=carrier
    )
    return ik, key, psnyms, rnd
