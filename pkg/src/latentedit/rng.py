"""Reproducible Gaussian noise streams.

A stream is identified by (seed, stream_id); equal identifiers replay the
same draw sequence bit-for-bit.  Normals come from the Box-Muller transform
of PCG64 uniforms (not the generator's own ziggurat) so the mapping from
uniforms to normals is explicit and the draw count is deterministic.
"""

import numpy as np


class NoiseStream:
    """Counter-tracked Gaussian stream derived from (seed, stream_id).

    stream_id may be an int or a tuple of ints; tuples let callers derive
    nested sub-streams (e.g. per-region within a per-job stream) without
    collisions.
    """

    def __init__(self, seed, stream_id=0):
        self.seed = int(seed)
        self.stream_id = stream_id
        key = stream_id if isinstance(stream_id, tuple) else (int(stream_id),)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=key))
        )
        self.draws = 0

    def child(self, *key):
        """Sub-stream with the given extra key components."""
        base = self.stream_id if isinstance(self.stream_id, tuple) else (self.stream_id,)
        return NoiseStream(self.seed, base + tuple(int(k) for k in key))


def gaussian_draw(rng, shape):
    """Standard-normal tensor of the given shape via Box-Muller.

    Consumes exactly 2*ceil(n/2) uniforms for n normals and advances the
    stream's draw counter by n.
    """
    if np.isscalar(shape):
        shape = (shape,)
    shape = tuple(int(d) for d in shape)
    if any(d <= 0 for d in shape):
        raise ValueError(f"dimensions must be positive, got {shape}")
    n = 1
    for d in shape:
        n *= d
    pairs = (n + 1) // 2
    u1 = 1.0 - rng._gen.random(pairs)  # (0, 1]: keeps log finite
    u2 = rng._gen.random(pairs)
    r = np.sqrt(-2.0 * np.log(u1))
    out = np.empty(2 * pairs, dtype=np.float64)
    out[0::2] = r * np.cos(2.0 * np.pi * u2)
    out[1::2] = r * np.sin(2.0 * np.pi * u2)
    rng.draws += n
    return out[:n].reshape(shape)
