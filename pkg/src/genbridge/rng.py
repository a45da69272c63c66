"""Counter-based random streams: one Philox substream per (seed, path, stream).

The Philox key packs the 64-bit run seed in its high word and the path index
and a small stream tag in its low word, so the draws for path ``p`` do not
depend on how many paths are generated, in which order, or by how many
threads.  Inside a path, the k-th block of draws belongs to interval k of the
time grid, which makes every normal a function of (seed, path, node).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ConfigurationError

MASK64 = (1 << 64) - 1
MAX_PATHS = 1 << 52

# stream tags
INCREMENTS = 0
SUBSTEPS = 1


def default_threads() -> int:
    raw = os.environ.get("GENBRIDGE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"GENBRIDGE_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def check_seed(seed) -> int:
    if int(seed) != seed or not 0 <= seed <= MASK64:
        raise ConfigurationError(f"seed must be an integer in [0, 2^64), got {seed!r}")
    return int(seed)


def path_generator(seed: int, path: int, stream: int = INCREMENTS) -> np.random.Generator:
    if not 0 <= path < MAX_PATHS:
        raise ConfigurationError(f"path index out of range: {path}")
    key = (check_seed(seed) << 64) | (path << 8) | (stream & 0xFF)
    return np.random.Generator(np.random.Philox(key=key))


def path_normals(seed: int, paths: range, per_path: int, stream: int = INCREMENTS,
                 threads: int | None = None) -> np.ndarray:
    """Standard normals of shape ``(len(paths), per_path)``; row i comes from path ``paths[i]``."""
    out = np.empty((len(paths), per_path))
    if per_path == 0 or len(paths) == 0:
        return out
    threads = default_threads() if threads is None else max(1, int(threads))

    def fill(lo: int, hi: int) -> None:
        for i in range(lo, hi):
            out[i] = path_generator(seed, paths[i], stream).standard_normal(per_path)

    if threads == 1:
        fill(0, len(paths))
    else:
        bounds = np.linspace(0, len(paths), threads + 1).astype(int)
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(fill, bounds[:-1], bounds[1:]))
    return out
