"""随机数流与种子派生

Every random draw in the toolkit comes from a counter-based Philox generator
keyed by (seed, stream id). Row t of an array drawn from a stream is the
draw for step t, so two paths that read the same stream see bit-identical
values at the same steps.

Replicate seeds are derived with the splitmix64 finalizer::

    z = (x + 0x9E3779B97F4A7C15) mod 2^64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2^64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2^64
    z =  z ^ (z >> 31)

and ``derive_seed(master, k1, k2, ...)`` folds each key in turn:
``h = splitmix64(h ^ splitmix64(k))`` starting from ``h = master``.
"""
import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_1 = 0xBF58476D1CE4E5B9
MIX_2 = 0x94D049BB133111EB

# stream ids
STREAM_INNOVATIONS = 0
STREAM_HISTORY = 1
STREAM_W_CHAIN = 2
STREAM_ORTHOGONAL = 3
STREAM_INITIAL = 4
STREAM_HISTORY_INITIAL = 5
STREAM_HISTORY_W_CHAIN = 6

# derive_seed keys reserved for internal uses
REFERENCE_PATH_KEY = 0xFFFF_0001
SPECTRUM_KEY = 0xFFFF_0002


def splitmix64(x: int) -> int:
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * MIX_1) & MASK64
    z = ((z ^ (z >> 27)) * MIX_2) & MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, *keys: int) -> int:
    """由主种子和若干索引派生64位种子"""
    h = master & MASK64
    for key in keys:
        h = splitmix64(h ^ splitmix64(key & MASK64))
    return h


def stream(seed: int, stream_id: int) -> np.random.Generator:
    """返回 (seed, stream_id) 对应的 Philox 生成器"""
    seq = np.random.SeedSequence(entropy=seed & MASK64, spawn_key=(stream_id,))
    return np.random.Generator(np.random.Philox(seq))
