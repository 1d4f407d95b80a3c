"""medledger: a permissioned, BFT-replicated electronic medical records ledger."""

__version__ = "0.1.0"
