"""Vehicle-centric CRL distribution for vehicular networks.

Pseudonym issuance with hash-chain-bound revocation, window-partitioned CRL
construction, Bloom-fingerprint authentication of CRL pieces, and an epidemic
RSU/vehicle dissemination simulator with an analysis suite.
"""

__version__ = "0.1.0"
