"""poslab: a deterministic simulation laboratory for pure proof-of-stake protocols.

Subpackages cover the ledger data model, the follow-the-satoshi lottery,
seed-combining functions, the CoA and Dense-CoA consensus engines, a
PPCoin-style stake-kernel reference model, a discrete-event network
simulator, an adversarial attack suite, and a PoW issuance model.
"""

__version__ = "0.1.0"
