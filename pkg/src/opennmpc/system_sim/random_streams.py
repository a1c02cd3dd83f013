"""
Counter-based random streams for reproducible parallel simulation.

A stream is identified by (base seed, simulation index, channel). Draw number
``k`` of a stream always comes from Philox counter block ``k``, so a
simulation sees the same numbers whichever worker runs it and in whatever
order simulations are scheduled. Gaussian variates are produced with the
Box-Muller transform on the stream's uniforms.
"""

from typing import Optional

import numpy as np

# channel ids for the closed-loop simulator
PROCESS_NOISE = 0
MEASUREMENT_NOISE = 1


def derive_key(seed: int, sim_index: int, channel: int, tag: int = 0) -> np.ndarray:
    """128-bit Philox key from the stream identity"""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(sim_index), int(channel), int(tag)))
    return seq.generate_state(2, dtype=np.uint64)


def box_muller(u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
    """Map pairs of U(0,1) variates to N(0,1) variates (both branches used)"""
    # 1 - u1 lies in (0, 1], keeps log finite
    radius = np.sqrt(-2.0 * np.log1p(-u1))
    angle = 2.0 * np.pi * u2
    return np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])


class RandomStream:
    """Stateless-per-draw Gaussian stream over Philox counter blocks.

    The only mutable state is the draw counter, owned by one simulation.
    """

    def __init__(self, seed: int, sim_index: int, channel: int, tag: int = 0):
        self.seed = int(seed)
        self.sim_index = int(sim_index)
        self.channel = int(channel)
        self.tag = int(tag)
        self._key = derive_key(self.seed, self.sim_index, self.channel, self.tag)
        self.draw_index = 0

    def _generator(self, block: int) -> np.random.Generator:
        counter = np.array([0, 0, 0, block], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=self._key, counter=counter))

    def normals_at(self, block: int, n: int) -> np.ndarray:
        """N(0, I_n) draw for counter block ``block``; does not move the counter"""
        if n <= 0:
            return np.zeros(0)
        half = (n + 1) // 2
        uniforms = self._generator(block).random(2 * half)
        return box_muller(uniforms[:half], uniforms[half:])[:n]

    def standard_normal(self, n: int) -> np.ndarray:
        """Next N(0, I_n) draw of the stream"""
        z = self.normals_at(self.draw_index, n)
        self.draw_index += 1
        return z

    def jump_to(self, draw_index: int) -> 'RandomStream':
        self.draw_index = int(draw_index)
        return self

    def spawn(self, channel: int, tag: Optional[int] = None) -> 'RandomStream':
        """Independent stream for the same simulation on another channel"""
        return RandomStream(self.seed, self.sim_index, channel, self.tag if tag is None else tag)
