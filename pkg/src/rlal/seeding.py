"""Deterministic stream splitting for all randomness in the lab.

Every component derives its own generator from a master seed plus a
string label (and optional index), so adding or reordering components
never silently shifts another component's stream. Derivation hashes
``"{master}:{label}:{index}"`` with SHA-256 and takes the first 8 bytes,
which is stable across platforms and Python versions (unlike ``hash``).
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, label: str, index: int = 0) -> int:
    digest = hashlib.sha256(f"{master}:{label}:{index}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(master: int, label: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, label, index))
