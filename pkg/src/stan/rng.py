"""Counter-based random streams derived from one integer seed.

Each named stream gets its own Philox key, so adding or reordering consumers
never shifts the numbers another consumer sees.
"""
from __future__ import annotations

import hashlib

import numpy as np
import torch


def _key(name: str) -> list[int]:
    digest = hashlib.sha256(name.encode()).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def stream(seed: int, name: str) -> np.random.Philox:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_key(name))
    return np.random.Philox(ss)


def torch_seed(seed: int, name: str) -> int:
    return int(np.random.Generator(stream(seed, name)).integers(0, 2**63 - 1))


def seeded_torch(seed: int, name: str) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(torch_seed(seed, name))
    return g
