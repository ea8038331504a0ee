"""Deterministic seed derivation"""

import hashlib

import numpy as np


def derive_seed(base: int, *parts) -> int:
    """64-bit seed from a base seed and any labels (cell, repetition, agent...)."""
    digest = hashlib.blake2b(digest_size=8)
    digest.update(str(int(base)).encode())
    for part in parts:
        digest.update(b"\x1f")
        digest.update(repr(part).encode())
    return int.from_bytes(digest.digest(), "big")


def agent_rng(seed: int, agent_id: str) -> np.random.Generator:
    """Random stream owned by one agent for a whole run."""
    return np.random.default_rng(derive_seed(seed, "agent", agent_id))
