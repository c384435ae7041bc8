"""Stable 64-bit vertex hashing.

Python's builtin ``hash`` is salted per process, so everything that must be
reproducible across runs (partition ownership, index binning) goes through
the functions here instead.
"""

from __future__ import annotations

from functools import lru_cache

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK
    return h


def mix64(x: int) -> int:
    """Avalanche finisher; spreads entropy into the low bits used for binning."""
    x &= _MASK
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK
    x ^= x >> 31
    return x


@lru_cache(maxsize=1 << 20)
def stable_hash64(value: str) -> int:
    return mix64(fnv1a64(value.encode("utf-8")))


# Named registry so query programs can refer to hash functions symbolically.
HASH_FUNCTIONS = {
    "IpHashFunction": stable_hash64,
    "default": stable_hash64,
}


def resolve_hash(name: str):
    try:
        return HASH_FUNCTIONS[name]
    except KeyError:
        known = ", ".join(sorted(HASH_FUNCTIONS))
        raise KeyError(f"unknown hash function {name!r} (known: {known})") from None
