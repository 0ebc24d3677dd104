"""Per-stage seed derivation from one master seed.

Stage seeds are hashes of (master seed, stage label), so adding or
reordering stages never perturbs the randomness of existing ones.
"""

from __future__ import annotations

import hashlib


def derive_seed(master_seed: int, label: str) -> int:
    digest = hashlib.blake2b(
        f"{master_seed}:{label}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big")
