"""Root-seed splitting.

Every stage seed is ``sha256(f"{root}/{stage}/{index}")`` truncated to 63
bits, so a stage's randomness depends only on its name and index, never on
the order in which stages or repeats are scheduled.
"""

from __future__ import annotations

import hashlib
import os

import numpy as np

SEED_ENV = "ACTIREP_SEED"


def derive_seed(root: int, stage: str, index: int = 0) -> int:
    digest = hashlib.sha256(f"{int(root)}/{stage}/{int(index)}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def rng_for(root: int, stage: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, stage, index))


def resolve_root_seed(flag: int | None, default: int = 0) -> int:
    if flag is not None:
        return int(flag)
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        return int(env)
    return default
