"""Brownian sheet and Brownian pillow on the grid, with keyed reproducible noise.

Randomness contract: paths are produced in blocks of ``block_size``.  Block
``k`` of stream ``stream_id`` draws its cell noise from a Philox generator
keyed by ``SeedSequence(seed, spawn_key=(stream_id, k))``, so any block can
be regenerated on its own and the result does not depend on scheduling.
Within a block the noise array has shape (paths, n, n), cell (i, j) covering
[i/n,(i+1)/n) x [j/n,(j+1)/n).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import DomainError
from .gridfn import GridFn2D, write_csv

DEFAULT_BLOCK = 1024

__all__ = [
    "DEFAULT_BLOCK",
    "PathBatch",
    "block_rng",
    "noise_blocks",
    "sample_sheet",
    "sample_pillow",
    "generate_batch",
    "pillow_cov",
]


def block_rng(seed: int, stream_id: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream_id), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def noise_blocks(n: int, count: int, seed: int, stream_id: int = 0, block_size: int = DEFAULT_BLOCK):
    """Yield (start, z) with z of shape (k, n, n); blocks are keyed, never sequential."""
    if block_size < 1:
        raise DomainError("block_size must be positive")
    nblocks = -(-count // block_size)
    for k in range(nblocks):
        take = min(block_size, count - k * block_size)
        z = block_rng(seed, stream_id, k).standard_normal((block_size, n, n))
        yield k * block_size, z[:take]


def sample_sheet(n: int, rng: np.random.Generator) -> GridFn2D:
    """Brownian sheet at the grid nodes: W(s,t) with covariance min(s,s')min(t,t')."""
    if n < 2:
        raise DomainError("n must be >= 2")
    z = rng.standard_normal((1, n, n))
    return GridFn2D(n, _kernels.sheet_paths_numpy(z)[0])


def sample_pillow(n: int, rng: np.random.Generator) -> GridFn2D:
    """Brownian pillow W(s,t) - sW(1,t) - tW(s,1) + stW(1,1) at the grid nodes."""
    if n < 2:
        raise DomainError("n must be >= 2")
    z = rng.standard_normal((1, n, n))
    return GridFn2D(n, _kernels.pillow_paths(z)[0])


def pillow_cov(s: float, t: float, s2: float, t2: float) -> float:
    for x in (s, t, s2, t2):
        if not 0.0 <= x <= 1.0:
            raise DomainError(f"coordinates must lie in [0,1], got {x!r}")
    return (min(s, s2) - s * s2) * (min(t, t2) - t * t2)


@dataclass
class PathBatch:
    n: int
    paths: np.ndarray  # (count, n+1, n+1)
    seed: int
    stream_id: int
    block_size: int = DEFAULT_BLOCK

    def __len__(self) -> int:
        return self.paths.shape[0]

    def __getitem__(self, k: int) -> GridFn2D:
        return GridFn2D(self.n, self.paths[k])

    def manifest(self) -> dict:
        return {
            "seed": self.seed,
            "stream_id": self.stream_id,
            "n": self.n,
            "count": len(self),
            "block_size": self.block_size,
        }

    def dump(self, directory) -> None:
        """One GridFn2D CSV per path plus manifest.json."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        width = len(str(max(len(self) - 1, 0)))
        for k in range(len(self)):
            write_csv(self[k], d / f"path_{k:0{width}d}.csv")
        (d / "manifest.json").write_text(json.dumps(self.manifest(), indent=2) + "\n")


def generate_batch(n: int, count: int, seed: int, stream_id: int = 0,
                   block_size: int = DEFAULT_BLOCK) -> PathBatch:
    if n < 2:
        raise DomainError("n must be >= 2")
    out = np.empty((count, n + 1, n + 1))
    for start, z in noise_blocks(n, count, seed, stream_id, block_size):
        out[start:start + len(z)] = _kernels.pillow_paths(z)
    return PathBatch(n=n, paths=out, seed=seed, stream_id=stream_id, block_size=block_size)
