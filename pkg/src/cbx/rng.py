"""Deterministic splitmix64 random stream.

One fixed integer recurrence drives every random choice in the package
(dataset generation, weight init, noise draws) so that a given seed
reproduces identical bytes on any platform. Scalar draws use Python
integers; block draws use vectorized uint64 numpy and advance the same
stream, so mixing the two access patterns never changes the sequence.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_U53 = 2.0**-53
_MIN_U = 2.0**-53  # floor for the log argument in Box-Muller


class Rng:
    """splitmix64 stream with uniform, integer, and Gaussian draws."""

    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK
        z = z ^ (z >> 31)
        return z

    def uniform(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * _U53

    def uniform_block(self, n: int) -> np.ndarray:
        """n uniforms, identical to n successive uniform() calls."""
        if n == 0:
            return np.zeros(0)
        idx = np.arange(1, n + 1, dtype=np.uint64)
        x = (np.uint64(self.state) + idx * np.uint64(_GAMMA))
        z = x
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * _GAMMA) & _MASK
        return (z >> np.uint64(11)).astype(np.float64) * _U53

    def randint(self, n: int) -> int:
        """Integer in [0, n)."""
        return int(self.uniform() * n)

    def normal(self) -> float:
        """Standard normal via Box-Muller; consumes two uniforms."""
        u1 = max(self.uniform(), _MIN_U)
        u2 = self.uniform()
        return float(np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2))

    def normal_block(self, n: int) -> np.ndarray:
        """n normals, identical to n successive normal() calls."""
        u = self.uniform_block(2 * n)
        u1 = np.maximum(u[0::2], _MIN_U)
        u2 = u[1::2]
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]
