"""Seed derivation: every random source is a pure function of the root seed."""

import hashlib
from typing import Union

import numpy as np
import torch


def derive_seed(root: int, *path: Union[int, str]) -> int:
    """
    Derive a child seed from a root seed and a path of keys.

    Args:
        root: Root seed of the run
        *path: Keys such as (command, module, index)

    Returns:
        Non-negative 63-bit integer seed
    """
    key = "/".join([str(int(root))] + [str(p) for p in path])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & ((1 << 63) - 1)


def make_rng(root: int, *path: Union[int, str]) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *path))


def make_torch_generator(root: int, *path: Union[int, str]) -> torch.Generator:
    generator = torch.Generator()
    generator.manual_seed(derive_seed(root, *path))
    return generator
