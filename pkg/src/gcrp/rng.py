"""Deterministic 64-bit RNG: splitmix64 seeding and xoshiro256** streams.

Replica streams are derived, not split: ``derive_replica_seed`` mixes
(base_seed, replica_id) through the splitmix64 finalizer twice, so every
output bit depends on every input bit (avalanche); distinct replica ids give
unrelated streams and the derivation is a pure function.

This module is the reference implementation; the compiled simulation
kernels carry a bit-identical copy (see ``_kernels``), which is what makes
trajectories reproducible across the pure-Python and compiled paths.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_PHI = 0x9E3779B97F4A7C15  # golden-ratio increment of the splitmix64 sequence
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

# 2^-53: top 53 bits of a 64-bit word -> uniform double in [0, 1)
_U53 = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    """splitmix64 finalizer: a bijective avalanche mix of one 64-bit word."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def splitmix64_next(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (new_state, output)."""
    state = (state + _PHI) & _MASK
    return state, mix64(state)


def derive_replica_seed(base_seed: int, replica_id: int) -> int:
    """64-bit stream seed for (base_seed, replica_id); pure and collision-safe.

    Two finalizer rounds: the first absorbs the base seed, the second the
    replica id, so flipping any input bit flips ~half the output bits.
    """
    if replica_id < 0:
        raise ValueError("replica_id must be nonnegative")
    h = mix64((base_seed + _PHI) & _MASK)
    return mix64((h + _PHI * (replica_id + 1)) & _MASK)


def seed_state(seed: int) -> tuple[int, int, int, int]:
    """Expand one 64-bit seed into a xoshiro256** state via splitmix64."""
    s = seed & _MASK
    out = []
    for _ in range(4):
        s, z = splitmix64_next(s)
        out.append(z)
    return tuple(out)  # type: ignore[return-value]


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


class Xoshiro256StarStar:
    """xoshiro256** stream; ``uniform`` yields doubles in [0, 1)."""

    __slots__ = ("s0", "s1", "s2", "s3")

    def __init__(self, seed: int):
        self.s0, self.s1, self.s2, self.s3 = seed_state(seed)

    def next_u64(self) -> int:
        result = (_rotl((self.s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (self.s1 << 17) & _MASK
        self.s2 ^= self.s0
        self.s3 ^= self.s1
        self.s1 ^= self.s2
        self.s0 ^= self.s3
        self.s2 ^= t
        self.s3 = _rotl(self.s3, 45)
        return result

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * _U53
