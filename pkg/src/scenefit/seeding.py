"""Deterministic random-stream derivation.

All randomness in the package flows from one explicit 64-bit seed per
top-level call. Sub-streams are derived by hashing the seed together with
stable string/integer tokens, so e.g. restart i's stream does not depend on
how many restarts run, and per-model streams do not depend on library order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _token_to_int(token) -> int:
    if isinstance(token, (int, np.integer)):
        return int(token) & 0xFFFFFFFFFFFFFFFF
    if isinstance(token, str):
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"seed token must be int or str, got {type(token)!r}")


def derive_seed_sequence(*tokens) -> np.random.SeedSequence:
    """Build a SeedSequence keyed on (seed, token, token, ...)."""
    return np.random.SeedSequence([_token_to_int(t) for t in tokens])


def derive_rng(*tokens) -> np.random.Generator:
    """Independent PCG64 generator for the given token tuple.

    Same tokens always yield the same stream; any change to any token yields
    a statistically independent one.
    """
    return np.random.Generator(np.random.PCG64(derive_seed_sequence(*tokens)))
